"""Batch experiment runner.

Each run reads a JSON config, executes one experiment, writes a JSON report
(always, with a ``status`` field) plus an optional CSV, and prints one summary
line.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as tolerances
from .cocycle import IndexWindow, LinearCocycle, cocycle_from_json, constant_cocycle, make_cocycle
from .dichotomy import (
    DichotomySplitting,
    decaying_subspace,
    estimate_splitting,
    fit_constants,
    invariance_defects,
    subspace_pair,
    transversality_check,
    verify_dichotomy,
)
from .dynamics import (
    admissibility_probe,
    generate_pseudo_orbit,
    map_from_json,
    outcome_csv_rows,
    shadow_orbit,
    verify_shadowing,
)
from .errors import (
    DichoError,
    DimensionMismatch,
    DomainError,
    F0NotZero,
    GluingNotSolvable,
    IndexOutOfWindow,
    NotContraction,
    SingularMatrix,
    WindowMismatch,
    ZeroNotInWindow,
)
from .generators import hyperbolic_family, piecewise_expanding, rotation_cocycle
from .perron import (
    green_bounds,
    green_pair_rows,
    series_constant,
    solve_fullline,
    solve_halfline,
    theta_witness,
    window_min_norm_solution,
)
from .weighted import WeightedSeq, csv_rows, from_json, impulse

log = logging.getLogger("dichoshadow")

EXIT_OK, EXIT_FAILED, EXIT_CONTRACTION, EXIT_CONFIG = 0, 2, 3, 4

COMMON_KEYS = {"experiment", "seed", "out", "csv", "tolerances", "jobs"}

EXPERIMENTS = {
    "verify-dichotomy": ({"cocycle"}, {"splitting", "rank_tol"}),
    "green-bounds": ({"cocycle", "omega", "mu"}, {"splitting", "r", "M", "rank_tol"}),
    "solve-perron": ({"cocycle", "f"}, {"splitting", "omega", "rank_tol"}),
    "pliss-check": ({"cocycle"}, {"decay_tol", "sweep", "eta", "a", "omega", "f"}),
    "series-constant": ({"lambda", "omega"}, {"k_max"}),
    "shadow": ({"map", "window", "d", "gamma"}, {"x0", "Delta"}),
    "admissibility-probe": ({"map", "window", "gamma"}, {"p", "trials", "decay_tol"}),
}

CSV_HELP = """\
CSV schemas (one header row, floats as shortest round-trip decimals):
  verify-dichotomy     k, projector_norm, complement_norm, invariance_defect
  green-bounds         k, s, measured, envelope, ratio
  solve-perron         k, x_1..x_d, weight, weighted_mag
  pliss-check          half_width, min_norm, growth
  series-constant      lambda, omega, value, argmax
  shadow               k, x1, x2, dist, envelope, ratio
  admissibility-probe  trial, norm

exit codes: 0 success/certified, 2 invariant or certification failure,
3 contraction or gluing failure, 4 configuration error.
Set DICHO_LOG=error|info|debug for diagnostics on stderr.
"""


class ConfigError(Exception):
    pass


class Outcome:
    def __init__(self, status: str, code: int, result: dict, rows=None, summary: str = ""):
        self.status, self.code, self.result, self.rows, self.summary = status, code, result, rows, summary


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r}")
    return _check_type(key, cfg[key], kind)


def _check_type(key, value, kind):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is None or isinstance(value, kind):
        return value
    raise ConfigError(f"key {key!r} has the wrong type")


def _opt(cfg: dict, key: str, default, kind=None):
    return _check_type(key, cfg[key], kind) if key in cfg else default


def _window(value, key="window") -> IndexWindow:
    if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value)):
        raise ConfigError(f"{key!r} must be a pair of integers [lo, hi]")
    try:
        return IndexWindow(*value)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _load_json_file(path: Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"input file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def load_cocycle(source, base: Path, seed: int) -> LinearCocycle:
    """Cocycle from a file path, an inline ``{"window", "maps"}`` object or a generator entry."""
    if isinstance(source, str):
        return cocycle_from_json(_load_json_file(base / source))
    if not isinstance(source, dict):
        raise ConfigError("'cocycle' must be a path or an object")
    if "maps" in source:
        return make_cocycle(source["maps"], _window(source.get("window")))
    gen = source.get("generator")
    window = _window(source.get("window"))
    if gen == "constant":
        return constant_cocycle(np.asarray(source["matrix"], dtype=float), window)
    if gen == "rotation":
        return rotation_cocycle(float(source.get("angle", 0.3)), window)
    if gen == "piecewise":
        return piecewise_expanding(window)
    if gen == "hyperbolic":
        rng = np.random.default_rng(int(source.get("seed", seed)))
        return hyperbolic_family(rng, int(source.get("dim", 2)), window, float(source.get("lambda", 0.5)),
                                 period=int(source.get("period", 5))).cocycle
    raise ConfigError(f"unknown cocycle generator {gen!r}")


def load_splitting(source, c: LinearCocycle, base: Path, rank_tol: float) -> DichotomySplitting:
    """``"estimate"`` (default), or an object with ``projection``/``projections`` and optional K, lambda."""
    if source is None or source == "estimate":
        return estimate_splitting(c, rank_tol)
    if isinstance(source, str):
        source = _load_json_file(base / source)
    if not isinstance(source, dict):
        raise ConfigError("'splitting' must be \"estimate\", a path or an object")
    n = len(c.window)
    if "projections" in source:
        P = np.asarray(source["projections"], dtype=float)
    elif "projection" in source:
        P = np.broadcast_to(np.asarray(source["projection"], dtype=float), (n, c.dim, c.dim)).copy()
    else:
        raise ConfigError("splitting object needs 'projection' or 'projections'")
    if "K" in source and "lambda" in source:
        K, lam = float(source["K"]), float(source["lambda"])
    else:
        K, lam = fit_constants(c, P, source.get("lambda"))
    return DichotomySplitting(c.window, P, K, lam)


def load_sequence(source, window: IndexWindow, dim: int, omega: float, base: Path, seed: int) -> WeightedSeq:
    if isinstance(source, str):
        return from_json(_load_json_file(base / source)).retag(omega)
    if not isinstance(source, dict):
        raise ConfigError("'f' must be a path or an object")
    if "impulse" in source:
        imp = source["impulse"]
        return impulse(window, int(imp["index"]), imp["vector"], omega)
    if "random" in source:
        rng = np.random.default_rng(seed)
        scale = float(source["random"].get("scale", 1.0))
        v = rng.standard_normal((len(window), dim))
        v *= scale / np.max(np.linalg.norm(v, axis=1))
        v *= ((np.abs(window.indices()) + 1.0) ** -omega)[:, None]
        if window.lo == 0:
            v[0] = 0.0
        return WeightedSeq(window, v, omega)
    if "vectors" in source:
        return WeightedSeq(window, source["vectors"], omega)
    raise ConfigError("'f' object needs 'impulse', 'random' or 'vectors'")


def run_verify_dichotomy(cfg, base, seed, jobs):
    c = load_cocycle(cfg["cocycle"], base, seed)
    s = load_splitting(cfg.get("splitting"), c, base, _opt(cfg, "rank_tol", 1.0, float))
    rep = verify_dichotomy(c, s)
    P = s.projections
    defects = np.r_[invariance_defects(c, P), np.nan]
    Pn = np.linalg.norm(P, ord=2, axis=(1, 2))
    Qn = np.linalg.norm(s.complements, ord=2, axis=(1, 2))
    rows = [(k, a, b, e) for k, a, b, e in zip(c.window.indices(), Pn, Qn, defects)]
    header = ["k", "projector_norm", "complement_norm", "invariance_defect"]
    status = "passed" if rep.passed else "failed"
    return Outcome(status, EXIT_OK if rep.passed else EXIT_FAILED, rep.to_json(), (header, rows),
                   f"K={s.K:.6g} lambda={s.lam:.6g} worst stable {rep.worst_stable_ratio:.6g}"
                   f" unstable {rep.worst_unstable_ratio:.6g}")


def run_green_bounds(cfg, base, seed, jobs):
    c = load_cocycle(cfg["cocycle"], base, seed)
    s = load_splitting(cfg.get("splitting"), c, base, _opt(cfg, "rank_tol", 1.0, float))
    omega, mu = _require(cfg, "omega", float), _require(cfg, "mu", float)
    rep = green_bounds(c, s, omega, mu, _opt(cfg, "r", None, float), _opt(cfg, "M", None, float))
    rows = green_pair_rows(c, s, omega, mu, rep.r, rep.M)
    status = "holds" if rep.holds else "violated"
    return Outcome(status, EXIT_OK if rep.holds else EXIT_FAILED, rep.to_json(),
                   (["k", "s", "measured", "envelope", "ratio"], rows),
                   f"r={rep.r:.6g} stable {rep.max_stable_ratio:.6g} unstable {rep.max_unstable_ratio:.6g}")


def run_solve_perron(cfg, base, seed, jobs):
    c = load_cocycle(cfg["cocycle"], base, seed)
    omega = _opt(cfg, "omega", 0.0, float)
    rank_tol = _opt(cfg, "rank_tol", 1.0, float)
    f = load_sequence(cfg["f"], c.window, c.dim, omega, base, seed)
    if c.window.lo == 0:
        if "splitting" in cfg:
            s = load_splitting(cfg["splitting"], c, base, rank_tol)
        else:
            s = estimate_splitting(c, rank_tol)
        sol = solve_halfline(c, s, f)
    else:
        split = cfg.get("splitting") or {}
        if not isinstance(split, dict):
            raise ConfigError("full-line 'splitting' must be an object with 'plus' and 'minus'")
        plus = c.restrict(IndexWindow(0, c.window.hi))
        minus = c.restrict(IndexWindow(c.window.lo, 0))
        sp = load_splitting(split.get("plus"), plus, base, rank_tol)
        sm = load_splitting(split.get("minus"), minus, base, rank_tol)
        sol = solve_fullline(c, sp, sm, f)
    res = sol.to_json()
    res.pop("y")
    status = "accepted" if sol.accepted else "residual-too-large"
    return Outcome(status, EXIT_OK if sol.accepted else EXIT_FAILED, res, csv_rows(sol.y),
                   f"||y||_omega={sol.norm_omega:.6g} residual={sol.residual:.3g}")


def run_transversality_check(cfg, base, seed, jobs):
    c = load_cocycle(cfg["cocycle"], base, seed)
    tol = _opt(cfg, "decay_tol", 1e-3, float)
    bp = decaying_subspace(c, "forward", tol)
    bm = decaying_subspace(c, "backward", tol)
    t = transversality_check(subspace_pair(bp, bm), c.dim)
    result = {"transverse": t.transverse, "angle": t.angle, "dim_plus": bp.shape[1], "dim_minus": bm.shape[1]}
    rows = []
    sweep = _opt(cfg, "sweep", [], list)
    if sweep:
        omega = _opt(cfg, "omega", 0.0, float)
        prev = None
        for n in sweep:
            w = IndexWindow(-int(n), int(n))
            cw = c.restrict(w)
            if "eta" in cfg:
                plus = IndexWindow(0, w.hi)
                P = np.zeros((len(plus), c.dim, c.dim)) if bp.shape[1] == 0 else \
                    np.broadcast_to(bp @ bp.T, (len(plus), c.dim, c.dim)).copy()
                sp = DichotomySplitting(plus, P, 1.0, 0.5)
                f = theta_witness(cw, sp, cfg["eta"], omega, _opt(cfg, "a", 0.5, float))
            else:
                f = load_sequence(cfg.get("f", {"impulse": {"index": 1, "vector": [1.0] * c.dim}}),
                                  w, c.dim, omega, base, seed)
            _, mn = window_min_norm_solution(cw, f, omega)
            growth = mn / prev if prev else math.nan
            rows.append((int(n), mn, growth))
            prev = mn
        result["sweep"] = [{"half_width": r[0], "min_norm": r[1], "growth": r[2]} for r in rows]
    status = "transverse" if t.transverse else "not-transverse"
    return Outcome(status, EXIT_OK if t.transverse else EXIT_FAILED, result,
                   (["half_width", "min_norm", "growth"], rows) if rows else None,
                   f"dim B+={bp.shape[1]} dim B-={bm.shape[1]} angle={t.angle:.6g}")


def run_series_constant(cfg, base, seed, jobs):
    lams = cfg["lambda"] if isinstance(cfg["lambda"], list) else [cfg["lambda"]]
    omegas = cfg["omega"] if isinstance(cfg["omega"], list) else [cfg["omega"]]
    k_max = _opt(cfg, "k_max", 10_000, int)
    rows = []
    for lam in lams:
        for om in omegas:
            v, arg = series_constant(float(lam), float(om), k_max)
            rows.append((float(lam), float(om), v, arg))
    result = {"k_max": k_max, "values": [{"lambda": r[0], "omega": r[1], "value": r[2], "argmax": r[3]} for r in rows]}
    return Outcome("ok", EXIT_OK, result, (["lambda", "omega", "value", "argmax"], rows),
                   ", ".join(f"C({r[0]:g},{r[1]:g})={r[2]:.10g}" for r in rows))


def run_shadow(cfg, base, seed, jobs):
    m = map_from_json(_require(cfg, "map", dict))
    window = _window(cfg["window"])
    d, gamma = _require(cfg, "d", float), _require(cfg, "gamma", float)
    x0 = _opt(cfg, "x0", [0.1, 0.2], list)
    po = generate_pseudo_orbit(m, x0, window, d, gamma, seed)
    out = shadow_orbit(m, po, _opt(cfg, "Delta", 0.1, float))
    rep = verify_shadowing(m, po, out)
    result = {**out.to_json(), "verification": rep.to_json(), "map": m.to_json()}
    ok = out.certified and rep.certified
    return Outcome("certified" if ok else "not-certified", EXIT_OK if ok else EXIT_FAILED, result,
                   outcome_csv_rows(po, out, rep),
                   f"L={out.L_used:.6g} max ratio {rep.max_ratio:.6g}")


def run_admissibility(cfg, base, seed, jobs):
    m = map_from_json(_require(cfg, "map", dict))
    window = _window(cfg["window"])
    rep = admissibility_probe(m, _opt(cfg, "p", [0.1, 0.3], list), window, _require(cfg, "gamma", float),
                              _opt(cfg, "trials", 20, int), seed, _opt(cfg, "decay_tol", 1e-3, float), jobs)
    ok = rep.transverse and rep.verdict == "admissible"
    return Outcome(rep.verdict, EXIT_OK if ok else EXIT_FAILED, rep.to_json(),
                   (["trial", "norm"], list(enumerate(rep.norms))),
                   f"transverse={rep.transverse} max norm {rep.max_norm:.6g}")


RUNNERS = {
    "verify-dichotomy": run_verify_dichotomy,
    "green-bounds": run_green_bounds,
    "solve-perron": run_solve_perron,
    "pliss-check": run_transversality_check,
    "series-constant": run_series_constant,
    "shadow": run_shadow,
    "admissibility-probe": run_admissibility,
}


def validate(experiment: str, cfg) -> None:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {cfg['experiment']!r}, not {experiment!r}")
    required, optional = EXPERIMENTS[experiment]
    unknown = set(cfg) - required - optional - COMMON_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    missing = required - set(cfg)
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(sorted(missing))}")
    tol = cfg.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("'tolerances' must be an object")
    bad = set(tol) - set(tolerances.Tolerances.__dataclass_fields__)
    if bad:
        raise ConfigError(f"unknown tolerances: {', '.join(sorted(bad))}")


_INPUT_ERRORS = (DomainError, DimensionMismatch, WindowMismatch, SingularMatrix, ZeroNotInWindow,
                 F0NotZero, IndexOutOfWindow)


def run(experiment: str, config_path: str, out: str | None = None, seed: int | None = None,
        jobs: int | None = None) -> int:
    """Execute one experiment; returns the process exit code."""
    cfg_path = Path(config_path)
    report_path = Path(out) if out else cfg_path.with_suffix(".report.json")
    report = {"experiment": experiment, "config": str(cfg_path)}
    outcome = None
    try:
        cfg = _load_json_file(cfg_path)
        validate(experiment, cfg)
        if out is None and "out" in cfg:
            report_path = cfg_path.parent / cfg["out"]
        seed = seed if seed is not None else _opt(cfg, "seed", 0, int)
        jobs = jobs if jobs is not None else _opt(cfg, "jobs", 1, int)
        report["seed"] = seed
        with tolerances.override(**{k: float(v) for k, v in cfg.get("tolerances", {}).items()}):
            outcome = RUNNERS[experiment](cfg, cfg_path.parent, seed, jobs)
        if outcome.rows is not None and cfg.get("csv", True):
            csv_path = report_path.with_suffix(".csv")
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            write_csv(csv_path, *outcome.rows)
            report["csv"] = str(csv_path)
        report.update(status=outcome.status, exit_code=outcome.code, result=outcome.result)
        summary = f"{experiment}: {outcome.status} ({outcome.summary})"
    except ConfigError as e:
        report.update(status="config-error", exit_code=EXIT_CONFIG, error=str(e))
        summary = f"{experiment}: config error: {e}"
    except (NotContraction, GluingNotSolvable) as e:
        report.update(status=type(e).__name__, exit_code=EXIT_CONTRACTION, error=str(e))
        summary = f"{experiment}: {type(e).__name__}: {e}"
    except _INPUT_ERRORS as e:
        report.update(status="invalid-input", exit_code=EXIT_CONFIG, error=f"{type(e).__name__}: {e}")
        summary = f"{experiment}: invalid input: {e}"
    except DichoError as e:
        report.update(status=type(e).__name__, exit_code=EXIT_FAILED, error=str(e))
        summary = f"{experiment}: {type(e).__name__}: {e}"
    except (KeyError, TypeError, ValueError) as e:
        report.update(status="config-error", exit_code=EXIT_CONFIG, error=f"{type(e).__name__}: {e}")
        summary = f"{experiment}: config error: {e}"
    except OSError as e:
        report.update(status="io-error", exit_code=EXIT_CONFIG, error=str(e))
        summary = f"{experiment}: cannot write output: {e}"
    try:
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        log.error("cannot write report %s: %s", report_path, e)
    print(summary)
    return report["exit_code"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dichoshadow",
        description="Run one experiment from a JSON config.",
        epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="report path; the CSV goes next to it with a .csv suffix")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, help="worker threads for independent trials")
    return p


def main(argv=None) -> int:
    level = os.environ.get("DICHO_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return run(args.experiment, args.config, args.out, args.seed, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
