"""Marking-based and metric-based adaptation loops.

Plans assign a signed step count per leaf (positive refine, negative
coarsen). Execution applies one generation at a time, rebalancing in
between, so the 2:1 constraint is never transiently violated by more than
one level. The outer driver runs solve, recover, estimate, adapt until the
tolerance or the iteration cap is reached.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly, estimator, linalg, recovery, space
from .forest import (Forest, balance_2to1, children_of, coarsen, extract_mesh,
                     parent_of, partition_morton, refine)

__all__ = ["AdaptConfig", "AdaptPlan", "AdaptReport", "IterationRecord",
           "SolveFailure", "mark", "metric_plan", "execute", "drive"]


@dataclass
class AdaptConfig:
    tol: float
    i_max: int = 10
    delta1: float = 1.5
    delta2: float = 0.5
    n_ref: int = 0
    n_coarsen: int = 0
    max_level: int = 14
    min_level: int = 0
    stop_on_stagnation: float | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 <= self.delta2 < self.delta1:
            raise ValueError("need 0 <= delta2 < delta1")


@dataclass
class AdaptPlan:
    leaf_keys: list                  # z-order, matches the planning mesh
    ell: np.ndarray                  # signed step count per leaf

    def is_trivial(self) -> bool:
        return not np.any(self.ell)


@dataclass
class IterationRecord:
    iteration: int
    n_el: int
    dofs: int
    h_min: float
    eta: float
    error: float                     # nan when no analytic solution
    effectivity: float               # nan when no analytic solution
    t_solve: float
    t_recover_grad: float
    t_recover_sol: float
    t_estimate: float
    t_adapt: float
    solver_iterations: int = 0


@dataclass
class AdaptReport:
    records: list = field(default_factory=list)
    converged: bool = False
    forest: object = None

    def write_csv(self, path) -> None:
        cols = ["iteration", "n_el", "dofs", "h_min", "eta", "error",
                "effectivity", "t_solve", "t_recover_grad", "t_recover_sol",
                "t_estimate", "t_adapt", "solver_iterations"]
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            return repr(float(v))

        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.records:
                fh.write(",".join(fmt(getattr(r, c)) for c in cols) + "\n")

    def log_lines(self) -> list:
        out = []
        for r in self.records:
            line = (f"iter {r.iteration:3d}  N_el {r.n_el:8d}  "
                    f"dofs {r.dofs:8d}  h_min {r.h_min:.6e}  "
                    f"eta {r.eta:.6e}")
            if r.error is not None:
                line += f"  err {r.error:.6e}  xi {r.effectivity:.3f}"
            out.append(line)
        return out


class SolveFailure(RuntimeError):
    def __init__(self, message, report: AdaptReport):
        super().__init__(message)
        self.report = report


def _apply_family_rule(leaf_keys, ell, min_level):
    """Zero out coarsening on leaves that are not part of a complete
    same-level sibling family with all four members marked to coarsen."""
    by_parent: dict = {}
    index = {k: i for i, k in enumerate(leaf_keys)}
    for i, k in enumerate(leaf_keys):
        if ell[i] < 0:
            by_parent.setdefault(parent_of(k), []).append(k)
    keep_negative = set()
    for parent, members in by_parent.items():
        family = children_of(parent)
        if len(members) == 4 and all(c in index for c in family) and \
                all(ell[index[c]] < 0 for c in family):
            if family[0][1] > min_level:
                keep_negative.update(family)
    for i, k in enumerate(leaf_keys):
        if ell[i] < 0 and k not in keep_negative:
            ell[i] = 0
    return ell


def _clamp_levels(leaf_keys, ell, cfg: AdaptConfig):
    for i, k in enumerate(leaf_keys):
        level = k[1]
        hi = cfg.max_level - level
        lo = cfg.min_level - level
        if ell[i] > hi:
            ell[i] = hi
        if ell[i] < lo:
            ell[i] = lo
    return ell


def mark(est: estimator.ErrorEstimate, cfg: AdaptConfig, mesh) -> AdaptPlan:
    """Single-step marking: refine where eta_k >= delta1 tol/sqrt(N_el),
    coarsen where eta_k <= delta2 tol/sqrt(N_el), family rule applied."""
    n = est.n_el
    target = cfg.tol / math.sqrt(n)
    ell = np.zeros(n, dtype=np.int64)
    ell[est.eta_k >= cfg.delta1 * target] = 1
    ell[est.eta_k <= cfg.delta2 * target] = -1
    keys = [c.key for c in mesh.leaves]
    ell = _apply_family_rule(keys, ell, cfg.min_level)
    ell = _clamp_levels(keys, ell, cfg)
    return AdaptPlan(keys, ell)


def metric_plan(est: estimator.ErrorEstimate, cfg: AdaptConfig, mesh) -> AdaptPlan:
    """Predicted step counts ell_k = ceil(log2(eta_k sqrt(N_el)/tol)), with
    the n_ref/n_coarsen caps, level clamping, and the family rule on
    net-coarsening leaves."""
    n = est.n_el
    keys = [c.key for c in mesh.leaves]
    ell = np.zeros(n, dtype=np.int64)
    scale = math.sqrt(n) / cfg.tol
    for i in range(n):
        e = est.eta_k[i] * scale
        if e > 0.0:
            raw = math.ceil(math.log2(e))
        else:
            # zero estimate: coarsen as much as caps and bounds allow
            raw = cfg.min_level - keys[i][1] - cfg.n_coarsen
        if raw >= 0:
            ell[i] = max(0, raw - cfg.n_ref)
        else:
            ell[i] = min(0, raw + cfg.n_coarsen)
    ell = _clamp_levels(keys, ell, cfg)
    ell = _apply_family_rule(keys, ell, cfg.min_level)
    ell = _clamp_levels(keys, ell, cfg)
    return AdaptPlan(keys, ell)


def indicator_plan(gamma: np.ndarray, mesh, cfg: AdaptConfig,
                   c1: float, c2: float) -> AdaptPlan:
    """Single-step plan from the area-averaged gradient indicator."""
    refine_idx, coarsen_idx = estimator.gradient_marking(gamma, c1, c2)
    keys = [c.key for c in mesh.leaves]
    ell = np.zeros(len(keys), dtype=np.int64)
    ell[refine_idx] = 1
    ell[coarsen_idx] = -1
    ell = _apply_family_rule(keys, ell, cfg.min_level)
    ell = _clamp_levels(keys, ell, cfg)
    return AdaptPlan(keys, ell)


def _propagate_counts(counts, before: Forest, after: Forest):
    """Transfer pending counts across a balance pass: leaves split by the
    balance hand their remaining count, reduced by the extra generations, to
    their descendants (balance-induced cells with no pending count carry 0)."""
    removed = [k for k in counts if not after.has_leaf(k)]
    for k in removed:
        c = counts.pop(k)
        stack = [(child, 1) for child in children_of(k)]
        while stack:
            key, depth = stack.pop()
            if after.has_leaf(key):
                counts[key] = max(c - depth, 0) if c > 0 else 0
            elif key[1] <= after.max_level:
                stack.extend((ch, depth + 1) for ch in children_of(key))
    for k in after.leaf_keys:
        counts.setdefault(k, 0)
    return counts


def execute(plan: AdaptPlan, forest: Forest, report: list | None = None) -> Forest:
    """Apply a plan generation by generation, rebalancing in between.

    Children of a refined leaf inherit count - 1; balance-induced cells
    carry 0; a coarsened family's parent inherits max(children) + 1.
    Infeasible coarsenings (incomplete families after earlier generations)
    are skipped and appended to ``report``.
    """
    counts = dict(zip(plan.leaf_keys, (int(v) for v in plan.ell)))
    for k in forest.leaf_keys:
        counts.setdefault(k, 0)

    for _ in range(64):
        pos = [k for k, c in counts.items() if c > 0 and forest.has_leaf(k)]
        neg = [k for k, c in counts.items() if c < 0 and forest.has_leaf(k)]
        if not pos and not neg:
            break

        if pos:
            forest, skipped = refine(forest, pos)
            for k in pos:
                c = counts.pop(k)
                if k in skipped:
                    counts[k] = 0
                else:
                    for ch in children_of(k):
                        counts[ch] = c - 1
            balanced = balance_2to1(forest)
            counts = _propagate_counts(counts, forest, balanced)
            forest = balanced
            continue

        # coarsening generation
        by_parent: dict = {}
        for k in neg:
            by_parent.setdefault(parent_of(k), []).append(k)
        families = []
        for parent, members in by_parent.items():
            fam = children_of(parent)
            if all(forest.has_leaf(c) and counts.get(c, 0) < 0 for c in fam):
                families.append(fam)
            else:
                if report is not None:
                    report.append(("incomplete-family", parent))
                for k in members:
                    counts[k] = 0
        if not families:
            continue
        forest2, skipped = coarsen(forest, families)
        skipped_set = {f for fam in skipped for f in fam}
        for fam in families:
            if fam[0] in skipped_set:
                for k in fam:
                    counts[k] = 0
                continue
            cs = [counts.pop(k) for k in fam]
            counts[parent_of(fam[0])] = max(cs) + 1
        balanced = balance_2to1(forest2)
        # balance may undo a coarsening; drop the affected pending counts
        counts = _propagate_counts(counts, forest2, balanced)
        if balanced.leaf_set() == forest.leaf_set():
            # this generation was a no-op; stop to avoid cycling
            for k in list(counts):
                if counts[k] < 0:
                    counts[k] = 0
            forest = balanced
            continue
        forest = balanced
    return forest


def solve_once(case, forest: Forest, n_parts: int = 1,
               solver_rel_tol: float = 1e-10):
    """Assemble and solve on one forest; returns (mesh, u, sigma, w, est).

    Used by convergence sweeps and tests; ``drive`` wraps the same pipeline
    in the adaptation loop.
    """
    partition = partition_morton(forest, n_parts) if n_parts > 1 else None
    mesh = extract_mesh(forest, partition)
    coeffs = case.coefficients
    dofmap = space.build_dofmap(mesh, coeffs.dirichlet_predicate,
                                coeffs.dirichlet_data)
    system = assembly.assemble(mesh, dofmap, coeffs)
    x, sol = linalg.solve(system.matrix, system.rhs, rel_tol=solver_rel_tol)
    if not sol.converged:
        raise SolveFailure(f"linear solver stalled "
                           f"(residual {sol.residual:.3e})", AdaptReport())
    u = space.NodalField(dofmap, system.full_solution(x))
    eg = recovery.edge_gradients(u, mesh)
    sigma = recovery.recover_gradient(eg, mesh)
    w = recovery.recover_solution(u, sigma, mesh)
    est = estimator.estimate(u, w, mesh)
    return mesh, u, sigma, w, est


def drive(case, cfg: AdaptConfig, strategy: str = "metric",
          n_parts: int = 1, solver_rel_tol: float = 1e-10,
          on_iteration=None) -> AdaptReport:
    """Outer solve-estimate-adapt loop.

    ``strategy`` is one of 'marking', 'metric', 'gradient_indicator'.
    ``on_iteration(i, forest, mesh, u, est)`` is an optional callback (used
    for VTK dumps). Raises SolveFailure with the partial report if the
    linear solver does not converge.
    """
    if strategy not in ("marking", "metric", "gradient_indicator"):
        raise ValueError(f"unknown strategy {strategy!r}")
    forest = case.initial_forest(max_level=cfg.max_level,
                                 min_level=cfg.min_level)
    forest = balance_2to1(forest)
    report = AdaptReport()
    coeffs = case.coefficients
    u_prev = None

    for i in range(1, cfg.i_max + 1):
        partition = partition_morton(forest, n_parts) if n_parts > 1 else None
        mesh = extract_mesh(forest, partition)
        dofmap = space.build_dofmap(mesh, coeffs.dirichlet_predicate,
                                    coeffs.dirichlet_data)
        system = assembly.assemble(mesh, dofmap, coeffs)

        x0 = None
        if u_prev is not None:
            try:
                u0 = space.transfer(u_prev, dofmap)
                full = u0.values.copy()
                mask = system.free_dof_map >= 0
                x0 = full[mask]
            except ValueError:
                x0 = None

        t0 = time.perf_counter()
        x, sol = linalg.solve(system.matrix, system.rhs,
                              rel_tol=solver_rel_tol, x0=x0)
        t_solve = time.perf_counter() - t0
        if not sol.converged:
            raise SolveFailure(
                f"linear solver stalled at iteration {i} "
                f"(residual {sol.residual:.3e})", report)
        u = space.NodalField(dofmap, system.full_solution(x))

        t0 = time.perf_counter()
        eg = recovery.edge_gradients(u, mesh)
        sigma = recovery.recover_gradient(eg, mesh)
        t_rg = time.perf_counter() - t0
        t0 = time.perf_counter()
        w = recovery.recover_solution(u, sigma, mesh)
        t_rs = time.perf_counter() - t0
        t0 = time.perf_counter()
        est = estimator.estimate(u, w, mesh)
        t_est = time.perf_counter() - t0

        err = xi = float("nan")
        if case.exact is not None:
            err = estimator.exact_error(u, case.exact, mesh)
            if err > 0:
                xi = estimator.effectivity(est.eta, err)

        if on_iteration is not None:
            on_iteration(i, forest, mesh, u, est)

        t0 = time.perf_counter()
        done = est.eta <= cfg.tol or i == cfg.i_max
        new_forest = forest
        if not done:
            if strategy == "marking":
                plan = mark(est, cfg, mesh)
            elif strategy == "metric":
                plan = metric_plan(est, cfg, mesh)
            else:
                gamma = estimator.gradient_indicator(u, mesh)
                c1 = case.params.get("c1", 1.0)
                c2 = case.params.get("c2", 0.1)
                plan = indicator_plan(gamma, mesh, cfg, c1, c2)
            new_forest = execute(plan, forest)
        t_adapt = time.perf_counter() - t0

        report.records.append(IterationRecord(
            iteration=i, n_el=mesh.n_leaves, dofs=dofmap.n_dofs,
            h_min=forest.h_min(), eta=est.eta, error=err, effectivity=xi,
            t_solve=t_solve, t_recover_grad=t_rg, t_recover_sol=t_rs,
            t_estimate=t_est, t_adapt=t_adapt,
            solver_iterations=sol.iterations))

        if est.eta <= cfg.tol:
            report.converged = True
            break
        if cfg.stop_on_stagnation is not None and \
                new_forest.n_leaves and forest.n_leaves and \
                abs(new_forest.n_leaves - forest.n_leaves) <= \
                cfg.stop_on_stagnation * forest.n_leaves:
            forest = new_forest
            break
        if new_forest.leaf_set() == forest.leaf_set() and not done:
            break
        forest = new_forest
        u_prev = u
    report.forest = forest
    return report
