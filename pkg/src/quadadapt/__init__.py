"""Recovery-based adaptive mesh refinement on 2:1-balanced quadtree meshes.

Solves scalar advection-diffusion-reaction problems with an exponentially
fitted finite-volume scheme, estimates the error from recovered gradients
and solutions, and adapts the mesh by marking or by a metric prediction.
"""

from .adaptivity import (AdaptConfig, AdaptPlan, AdaptReport, SolveFailure,
                         drive, execute, mark, metric_plan, solve_once)
from .assembly import AdrCoefficients, SparseSystem, assemble, bernoulli
from .cases import (BenchmarkCase, case_by_name, load_case, test1,
                    test2_circle, test2_rect, test3)
from .estimator import (ErrorEstimate, effectivity, estimate, exact_error,
                        gradient_error, gradient_indicator)
from .forest import (Cell, Forest, MeshView, balance_2to1, coarsen,
                     extract_mesh, load_forest, new_brick, partition_morton,
                     refine, save_forest)
from .linalg import CsrMatrix, SolveReport, read_matrix_market, solve, \
    write_matrix_market
from .recovery import (EdgeGradients, RecoveredGradient, RecoveredSolution,
                       edge_gradients, evaluate_recovered, recover_gradient,
                       recover_solution)
from .space import DofMap, NodalField, build_dofmap, evaluate, interpolate, \
    transfer
from .vtkio import write_field_csv, write_vtk

__version__ = "0.1.0"
