import math

import numpy as np
import pytest

from quadadapt import forest as F
from quadadapt.adaptivity import (AdaptConfig, AdaptPlan, AdaptReport,
                                  IterationRecord, execute, mark, metric_plan)
from quadadapt.estimator import ErrorEstimate


def _cfg(**kw):
    base = dict(tol=1e-3, max_level=6, min_level=0)
    base.update(kw)
    return AdaptConfig(**base)


def _est(eta_k):
    eta_k = np.asarray(eta_k, dtype=float)
    return ErrorEstimate(eta_k=eta_k, eta=float(np.sqrt(np.sum(eta_k ** 2))),
                         n_el=len(eta_k))


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(tol=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(tol=1e-3, delta1=0.5, delta2=0.5)


def test_mark_thresholds(uniform_mesh):
    n = uniform_mesh.n_leaves
    cfg = _cfg()
    target = cfg.tol / math.sqrt(n)
    eta_k = np.full(n, target)           # between delta2 and delta1: keep
    eta_k[0] = 2.0 * cfg.delta1 * target
    plan = mark(_est(eta_k), cfg, uniform_mesh)
    assert plan.ell[0] == 1
    assert np.all(plan.ell[1:] == 0)


def test_mark_family_rule(uniform_mesh):
    # all leaves below the coarsening threshold: complete families coarsen
    n = uniform_mesh.n_leaves
    cfg = _cfg()
    eta_k = np.zeros(n)
    plan = mark(_est(eta_k), cfg, uniform_mesh)
    assert np.all(plan.ell == -1)
    # a single cell below the threshold must not coarsen alone
    target = cfg.tol / math.sqrt(n)
    eta_k = np.full(n, target)
    eta_k[3] = 0.0
    plan = mark(_est(eta_k), cfg, uniform_mesh)
    assert np.all(plan.ell == 0)


def test_metric_plan_formula(uniform_mesh):
    n = uniform_mesh.n_leaves
    cfg = _cfg(n_ref=0, n_coarsen=0)
    target = cfg.tol / math.sqrt(n)
    eta_k = np.full(n, target)           # ceil(log2 1) = 0: keep
    plan = metric_plan(_est(eta_k), cfg, uniform_mesh)
    assert np.all(plan.ell == 0)

    eta_k = np.full(n, 4.0 * target)     # ceil(log2 4) = 2
    plan = metric_plan(_est(eta_k), cfg, uniform_mesh)
    assert np.all(plan.ell == 2)


def test_metric_plan_caps(uniform_mesh):
    n = uniform_mesh.n_leaves
    target = 1e-3 / math.sqrt(n)
    # raw prediction 3, capped by n_ref
    plan = metric_plan(_est(np.full(n, 8.0 * target)),
                       _cfg(n_ref=2), uniform_mesh)
    assert np.all(plan.ell == 1)
    # raw -3, softened by n_coarsen to -2
    plan = metric_plan(_est(np.full(n, target / 8.0)),
                       _cfg(n_coarsen=1), uniform_mesh)
    assert np.all(plan.ell == -2)


def test_metric_plan_level_clamp(uniform_mesh):
    n = uniform_mesh.n_leaves
    target = 1e-3 / math.sqrt(n)
    # huge prediction clamped to max_level - level = 1 (leaves at level 2)
    plan = metric_plan(_est(np.full(n, 1e6 * target)),
                       _cfg(max_level=3), uniform_mesh)
    assert np.all(plan.ell == 1)
    # zero estimates coarsen but never below min_level
    plan = metric_plan(_est(np.zeros(n)),
                       _cfg(min_level=1, n_coarsen=10), uniform_mesh)
    assert np.all(plan.ell == -1)


def test_execute_trivial_plan(block_forest_mesh):
    forest, mesh = block_forest_mesh
    keys = [c.key for c in mesh.leaves]
    plan = AdaptPlan(keys, np.zeros(len(keys), dtype=np.int64))
    assert plan.is_trivial()
    out = execute(plan, forest)
    assert out.leaf_set() == forest.leaf_set()


def test_execute_multi_step_refinement():
    f = F.new_brick(1, 1, (0.0, 0.0, 1.0, 1.0), uniform_level=1)
    keys = list(f.leaf_keys)
    ell = np.zeros(len(keys), dtype=np.int64)
    ell[0] = 2                          # one leaf two generations down
    out = execute(AdaptPlan(keys, ell), f)
    assert F.is_balanced(out)
    levels = [k[1] for k in out.leaf_keys]
    assert max(levels) == 3
    # counts: target cell produced 16 level-3 leaves
    assert levels.count(3) == 16


def test_execute_coarsening_family():
    f = F.new_brick(1, 1, (0.0, 0.0, 1.0, 1.0), uniform_level=2)
    keys = list(f.leaf_keys)
    ell = np.full(len(keys), -1, dtype=np.int64)
    out = execute(AdaptPlan(keys, ell), f)
    assert all(k[1] == 1 for k in out.leaf_keys)
    assert F.is_balanced(out)


def test_execute_respects_balance():
    # deep refinement of one corner drags neighbours along via balancing
    f = F.new_brick(1, 1, (0.0, 0.0, 1.0, 1.0), uniform_level=1)
    keys = list(f.leaf_keys)
    ell = np.zeros(len(keys), dtype=np.int64)
    ell[0] = 3
    out = execute(AdaptPlan(keys, ell), f)
    assert F.is_balanced(out)
    levels = sorted({k[1] for k in out.leaf_keys})
    assert levels[-1] == 4


def test_report_csv_roundtrip(tmp_path):
    rep = AdaptReport()
    rep.records.append(IterationRecord(
        iteration=1, n_el=16, dofs=25, h_min=0.25, eta=1.5e-2,
        error=float("nan"), effectivity=float("nan"),
        t_solve=0.1, t_recover_grad=0.01, t_recover_sol=0.01,
        t_estimate=0.005, t_adapt=0.002, solver_iterations=12))
    path = tmp_path / "report.csv"
    rep.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("iteration,n_el,dofs,h_min,eta")
    fields = lines[1].split(",")
    assert fields[0] == "1"
    assert float(fields[4]) == 1.5e-2
    assert len(rep.log_lines()) == 1
