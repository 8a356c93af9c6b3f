"""Command-line front end.

Commands:
  adapt      run one adaptation study, write report.csv and VTK output
  converge   uniform-refinement convergence sweep plus dofs comparison
  compare    run several strategies side by side

Configuration is a flat key=value file; optional [section] headers are
allowed for readability and ignored. Unknown keys are rejected with the
offending line number. Every config key can also be set by an environment
variable (prefix QUADADAPT_, upper-cased key) or overridden by a flag.

Exit codes: 0 success, 1 invalid configuration, 2 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import adaptivity, estimator, vtkio
from .adaptivity import AdaptConfig, SolveFailure
from .cases import case_by_name, load_case
from .forest import refine

ENV_PREFIX = "QUADADAPT_"

_KEYS = {
    "case": str, "problem_file": str, "strategy": str, "strategies": str,
    "tol": float, "i_max": int, "delta1": float, "delta2": float,
    "n_ref": int, "n_coarsen": int, "max_level": int, "min_level": int,
    "n_parts": int, "threads": int, "seed": int, "out": str,
    "vtk_every_iter": bool, "csv_tables": bool, "timing": bool,
    "converge_levels": str, "c1": float, "c2": float,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


def _convert(key, raw, where):
    ty = _KEYS[key]
    try:
        if ty is bool:
            low = raw.strip().lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return ty(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in _KEYS:
                raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
            out[key] = _convert(key, raw, f"{path}:{ln}")
    return out


def _env_overrides() -> dict:
    out = {}
    for key in _KEYS:
        raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            out[key] = _convert(key, raw, f"${ENV_PREFIX}{key.upper()}")
    return out


def _merged_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg.update(read_config(args.config))
    cfg.update(_env_overrides())
    for flag, key in (("case", "case"), ("strategy", "strategy"),
                      ("tol", "tol"), ("imax", "i_max"),
                      ("threads", "threads"), ("parts", "n_parts"),
                      ("out", "out"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            cfg[key] = v
    if getattr(args, "vtk_every_iter", False):
        cfg["vtk_every_iter"] = True
    return cfg


def _load_benchmark(cfg):
    if "problem_file" in cfg:
        case = load_case(cfg["problem_file"])
    elif "case" in cfg:
        case = case_by_name(cfg["case"])
    else:
        raise ConfigError("missing case name (set 'case' or 'problem_file')")
    for k in ("c1", "c2"):
        if k in cfg:
            case.params[k] = cfg[k]
    return case


def _adapt_config(case, cfg) -> AdaptConfig:
    overrides = {k: cfg[k] for k in ("tol", "i_max", "delta1", "delta2",
                                     "n_ref", "n_coarsen", "max_level",
                                     "min_level") if k in cfg}
    return case.adapt_config(**overrides)


def _apply_threads(cfg):
    n = cfg.get("threads")
    if n:
        try:
            import numba
            numba.set_num_threads(max(1, n))
        except (ImportError, ValueError):
            pass


def _outdir(cfg) -> str:
    out = cfg.get("out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _run_single(case, acfg, strategy, cfg, out, tag="", holder=None):
    dump = cfg.get("vtk_every_iter", False)

    def on_iter(i, forest, mesh, u, est):
        if holder is not None:
            holder["state"] = (mesh, u, est)
        if not dump:
            return
        name = os.path.join(out, f"mesh{tag}_iter_{i}.vtk")
        levels = np.array([c.level for c in mesh.leaves])
        vtkio.write_vtk(name, mesh,
                        point_data={"u_h": u.expanded()},
                        cell_data={"eta_k": est.eta_k, "level": levels,
                                   "owner": np.asarray(mesh.owner)})

    return adaptivity.drive(case, acfg, strategy,
                            n_parts=cfg.get("n_parts", 1),
                            on_iteration=on_iter)


def cmd_adapt(args) -> int:
    cfg = _merged_config(args)
    _apply_threads(cfg)
    case = _load_benchmark(cfg)
    acfg = _adapt_config(case, cfg)
    strategy = cfg.get("strategy", "metric")
    out = _outdir(cfg)
    holder = {}
    try:
        report = _run_single(case, acfg, strategy, cfg, out, holder=holder)
    except SolveFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        exc.report.write_csv(os.path.join(out, "report.csv"))
        return 2
    report.write_csv(os.path.join(out, "report.csv"))
    for line in report.log_lines():
        print(line)

    mesh, u, est = holder["state"]
    levels = np.array([c.level for c in mesh.leaves])
    vtkio.write_vtk(os.path.join(out, "final.vtk"), mesh,
                    point_data={"u_h": u.expanded()},
                    cell_data={"eta_k": est.eta_k, "level": levels,
                               "owner": np.asarray(mesh.owner)})
    vtkio.write_field_csv(os.path.join(out, "final_u.csv"), mesh,
                          u.expanded())
    return 0


def _parse_levels(spec: str):
    lo, _, hi = spec.partition(":")
    return list(range(int(lo), int(hi) + 1))


def _fit_slope(h, e):
    h = np.log(np.asarray(h))
    e = np.log(np.asarray(e))
    return float(np.polyfit(h, e, 1)[0])


def cmd_converge(args) -> int:
    cfg = _merged_config(args)
    _apply_threads(cfg)
    case = _load_benchmark(cfg)
    if case.exact is None:
        print("error: convergence study needs a case with an exact solution",
              file=sys.stderr)
        return 1
    out = _outdir(cfg)
    levels = _parse_levels(cfg.get("converge_levels", "2:6"))

    rows = []
    for lev in levels:
        forest = case.initial_forest()
        for _ in range(lev):
            forest, _ = refine(forest, list(forest.leaf_keys))
        mesh, u, sigma, w, est = adaptivity.solve_once(case, forest)
        rows.append((
            forest.h_min(),
            len(u.values),
            estimator.exact_error(u, case.exact, mesh),
            estimator.exact_error(w, case.exact, mesh),
            estimator.gradient_error(u, case.exact_grad, mesh),
            estimator.gradient_error(sigma, case.exact_grad, mesh)))

    with open(os.path.join(out, "converge.csv"), "w") as fh:
        fh.write("h_min,dofs,err_u,err_u_star,err_grad,err_sigma_star\n")
        for r in rows:
            fh.write(",".join(str(v) if isinstance(v, int)
                              else repr(float(v)) for v in r) + "\n")

    if len(rows) >= 2:
        h = [r[0] for r in rows]
        names = ("u_h", "u*_h", "grad u_h", "sigma*_h")
        for j, nm in enumerate(names):
            s = _fit_slope(h, [r[2 + j] for r in rows])
            print(f"slope {nm}: {s:.3f}")

    # dofs-vs-error: uniform levels above vs a metric-adapted run
    acfg = _adapt_config(case, cfg)
    try:
        report = adaptivity.drive(case, acfg, "metric",
                                  n_parts=cfg.get("n_parts", 1))
    except SolveFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with open(os.path.join(out, "dofs_compare.csv"), "w") as fh:
        fh.write("kind,dofs,err_u\n")
        for r in rows:
            fh.write(f"uniform,{r[1]},{float(r[2])!r}\n")
        for rec in report.records:
            err = "" if rec.error is None else repr(float(rec.error))
            fh.write(f"metric,{rec.dofs},{err}\n")
    return 0


def cmd_compare(args) -> int:
    cfg = _merged_config(args)
    _apply_threads(cfg)
    case = _load_benchmark(cfg)
    strategies = [s.strip() for s in
                  cfg.get("strategies", cfg.get("strategy", "")).split(",")
                  if s.strip()]
    if len(strategies) < 2:
        print("error: compare needs at least two strategies", file=sys.stderr)
        return 1
    acfg = _adapt_config(case, cfg)
    out = _outdir(cfg)
    results = []
    for s in strategies:
        try:
            report = _run_single(case, acfg, s, cfg, out, tag=f"_{s}")
        except SolveFailure as exc:
            print(f"error ({s}): {exc}", file=sys.stderr)
            return 2
        last = report.records[-1]
        results.append((s, len(report.records), last.n_el, last.dofs,
                        last.eta))
    with open(os.path.join(out, "compare.csv"), "w") as fh:
        fh.write("strategy,iterations,n_el,dofs,eta\n")
        for s, it, nel, dofs, eta in results:
            fh.write(f"{s},{it},{nel},{dofs},{float(eta)!r}\n")
    for s, it, nel, dofs, eta in results:
        print(f"{s:20s} iters {it:3d}  N_el {nel:8d}  dofs {dofs:8d}  "
              f"eta {eta:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="quadadapt",
        description="Recovery-based adaptive solver on quadtree meshes")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("adapt", cmd_adapt), ("converge", cmd_converge),
                     ("compare", cmd_compare)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--case", help="benchmark case name")
        sp.add_argument("--strategy",
                        help="marking | metric | gradient_indicator")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--imax", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--parts", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--vtk-every-iter", action="store_true",
                        dest="vtk_every_iter")
        sp.add_argument("--seed", type=int,
                        help="seed for randomized test harnesses")
        sp.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None:
        np.random.seed(args.seed)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
