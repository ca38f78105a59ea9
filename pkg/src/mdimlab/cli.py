"""Batch runner: ``mdimlab <command> --config <path> [--seed N] [--out DIR] [--format json|csv]``.

Exit status 0 when every audit passes, 2 when an audit fails (reports are
still written) and 1 for invalid configurations.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import AuditError, ConstructionError

__all__ = ["main", "run_experiment", "emit_report", "ConfigError", "COMMANDS", "validate_config"]

COMMANDS = ("kolmogorov", "intervals", "levelfn", "torus-chain", "fiber-check", "full-pipeline")

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- serialisation ------------------------------------------------------------


def _plain(obj):
    """Convert numpy scalars/arrays, tuples and fractions to JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v) or math.isnan(v):
            return str(v)
        return v
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, set):
        return sorted(_plain(v) for v in obj)
    return obj


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(results: dict, fmt: str, path) -> Path:
    """Write ``{"summary", "columns", "rows"}`` as JSON or CSV, byte-stable.

    JSON holds everything; CSV holds the row table (header only when empty).
    """
    path = Path(path)
    if fmt == "json":
        text = json.dumps(_plain(results), sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        columns = list(results.get("columns") or sorted({k for r in results.get("rows", []) for k in r}))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in results.get("rows", []):
            w.writerow([_cell(row.get(c)) for c in columns])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        _atomic_write(path, text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


# -- validation ---------------------------------------------------------------

_DEFAULTS = {
    "kolmogorov": {"n": 2, "m": 3, "eps": "1/4", "bbox": None, "points_per_axis": None},
    "intervals": {"q": 5, "mesh_bound": 0.2, "grid": 10000},
    "levelfn": {"alpha": "sqrt(2)-1", "center": 0.3, "width": 0.1, "n": 10, "samples": 500, "max_steps": 100000, "tail_tol": 1e-10, "tolerance": 1e-6},
    "torus-chain": {"alpha": "sqrt(2)-1", "n": 4, "d": 0.5, "eps": 0.2, "arcs": 24, "rows": 16, "overlap": 0.002, "samples": 600},
    "fiber-check": {"system": "rotation", "alpha": "sqrt(2)-1", "k": 1, "d": 0.0, "window": 64, "eps": 0.01, "tol": 1e-9, "samples": 2000, "precision": 16},
    "full-pipeline": {},
}


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate_config(command: str, cfg: dict) -> dict:
    """Fill defaults and check every parameter before anything runs."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    out = dict(_DEFAULTS[command])
    params = cfg.get("parameters", cfg)
    unknown = set(params) - set(out) - {"seed", "command", "system", "output"}
    if command == "full-pipeline":
        from .pipeline import DEFAULT_PIPELINE

        out = dict(DEFAULT_PIPELINE)
        unknown = set(params) - set(out) - {"command", "system", "output"}
    _need(not unknown, f"unknown parameters: {sorted(unknown)}")
    out.update({k: v for k, v in params.items() if k in out})
    try:
        out["seed"] = int(cfg.get("seed", params.get("seed", 0)))
        desc = cfg.get("system", params.get("system"))
        if isinstance(desc, dict):
            _apply_descriptor(command, desc, out)
        _need(out["seed"] >= 0, "seed must be >= 0")
        if command == "kolmogorov":
            n, m = int(out["n"]), int(out["m"])
            _need(n >= 1 and m >= 1, "n and m must be >= 1")
            _need(n <= m, f"kolmogorov needs n <= m (n={n}, m={m})")
            eps = Fraction(str(out["eps"]))
            _need(eps > 0, "eps must be positive")
            out.update(n=n, m=m, eps=str(eps))
            if out["bbox"] is None:
                out["bbox"] = [["0", "1"]] * n
            _need(len(out["bbox"]) == n, "bbox must have n axes")
            for lo, hi in out["bbox"]:
                _need(Fraction(str(hi)) > Fraction(str(lo)), "bbox axes must have positive length")
        elif command == "intervals":
            _need(int(out["q"]) > 2, "q must be > 2")
            _need(float(out["mesh_bound"]) > 0, "mesh_bound must be positive")
            _need(int(out["grid"]) >= 100, "grid must be >= 100")
        elif command == "levelfn":
            _need(0 < float(out["width"]) < 1, "width must be in (0, 1)")
            _need(int(out["n"]) >= 0, "n must be >= 0")
            _need(int(out["samples"]) >= 1, "samples must be >= 1")
            _need(float(out["tail_tol"]) > 0 and int(out["max_steps"]) >= 1, "bad truncation policy")
            _need(float(out["tolerance"]) > 0, "tolerance must be positive")
        elif command == "torus-chain":
            _need(int(out["n"]) >= 1, "n must be >= 1")
            _need(float(out["d"]) > 0, "d must be positive")
            _need(float(out["eps"]) > 0, "eps must be positive")
            _need(int(out["arcs"]) >= 1 and int(out["rows"]) >= 1, "arcs and rows must be >= 1")
        elif command == "fiber-check":
            k, d = int(out["k"]), float(out["d"])
            _need(k >= 1, "k must be >= 1")
            _need(0 <= d < k, f"fiber-check needs 0 <= d < k (d={d}, k={k})")
            _need(out["system"] in ("rotation", "sturmian"), "system must be rotation or sturmian")
            _need(int(out["window"]) >= 0, "window must be >= 0")
            _need(float(out["eps"]) > 0 and float(out["tol"]) >= 0, "eps > 0 and tol >= 0 required")
        elif command == "full-pipeline":
            from .fiber import FiberParams

            FiberParams(out["k"], out["d"], out["n"], out["q"], out["l"], out["eps"], out["delta"])
        if "alpha" in out:
            from .systems import make_rotation

            if isinstance(out["alpha"], float):
                raise ConfigError("alpha must be an exact expression such as 'sqrt(2)-1'")
            make_rotation(out["alpha"])
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, ArithmeticError) as exc:
        raise ConfigError(str(exc)) from exc
    return out


def _apply_descriptor(command: str, desc: dict, out: dict) -> None:
    """Take ``alpha`` (and the substrate kind for ``fiber-check``) from a system record."""
    kind = desc.get("kind")
    p = desc.get("parameters", {})
    if command == "fiber-check":
        _need(kind in ("rotation", "sturmian"), f"fiber-check needs a rotation or sturmian system, got {kind!r}")
        out["system"] = kind
        if "precision" in p:
            out["precision"] = int(p["precision"])
    elif "alpha" in out:
        _need(kind == "rotation", f"{command} needs a rotation system, got {kind!r}")
    if "alpha" in p and "alpha" in out:
        out["alpha"] = p["alpha"]


# -- commands -----------------------------------------------------------------


def _run_kolmogorov(p: dict) -> dict:
    from .kolmogorov import kolmogorov_cover

    cover = kolmogorov_cover(p["n"], p["m"], Fraction(p["eps"]), p["bbox"], points_per_axis=p["points_per_axis"])
    audit = dict(cover.meta["audit"])
    counts = audit.pop("counts")
    rows = [
        {**{f"x{a}": float(v) for a, v in enumerate(pt)}, "multiplicity": int(cnt)}
        for pt, cnt in zip(cover.samples, counts)
    ]
    columns = [f"x{a}" for a in range(p["n"])] + ["multiplicity"]
    summary = {**audit, "families": cover.meta["families"], "cubes": len(cover.regions)}
    return {"summary": summary, "columns": columns, "rows": rows, "passed": audit["passed"]}


def _run_intervals(p: dict) -> dict:
    from .intervals import build_interval_system, count_met_many

    E = build_interval_system(int(p["q"]), float(p["mesh_bound"]), p["seed"])
    ts = np.arange(int(p["grid"])) / int(p["grid"])
    met = count_met_many(ts, E)
    rows = [
        {"family": fam, "lo": lo, "hi": hi}
        for fam, intervals in enumerate(E.families, start=1)
        for lo, hi in intervals
    ]
    summary = {**E.to_json(), "min_count_met": int(met.min()), "grid": int(p["grid"]), "build": E.report}
    summary.pop("families")
    passed = bool(met.min() >= E.q - 2 and E.sigma_lower > 0)
    return {"summary": summary, "columns": ["family", "lo", "hi"], "rows": rows, "passed": passed}


def _run_levelfn(p: dict) -> dict:
    from .levelfn import eval_level_function, level_report, make_level_function
    from .systems import make_rotation

    n = int(p["n"])
    rot = make_rotation(p["alpha"], horizon=max(2 * n + 2, 64))
    samples = rot.sample(int(p["samples"]), p["seed"])
    lf = make_level_function(
        rot,
        rot.from_angles([float(p["center"])]),
        float(p["width"]) / 2,
        samples=samples,
        max_steps=int(p["max_steps"]),
        tail_tol=float(p["tail_tol"]),
    )
    rep = level_report(lf, n, samples)
    vals, bounds = eval_level_function(lf, samples)
    rows = [{"angle": float(a), "xi": float(v), "bound": float(b)} for a, v, b in zip(rot.angles(samples), vals, bounds)]
    tol = float(p["tolerance"])
    residuals = (rep["recursion_residual"], rep["translation_residual"], rep["translation_residual_segmentwise"])
    passed = max(residuals) <= tol and rep["truncation_bound"] <= tol
    return {"summary": rep, "columns": ["angle", "xi", "bound"], "rows": rows, "passed": bool(passed)}


def _run_torus_chain(p: dict) -> dict:
    from .systems import make_rotation
    from .torus import build_shift_chain, build_torus, torus_box_cover

    n, d = int(p["n"]), float(p["d"])
    window = int(math.floor(n / d)) * n
    rot = make_rotation(p["alpha"], horizon=max(window + 1, 64))
    ts = build_torus(rot)
    samples = ts.sample(int(p["samples"]), p["seed"])
    C = torus_box_cover(ts, int(p["arcs"]), int(p["rows"]), float(p["overlap"]), samples)
    D, rep = build_shift_chain(C, ts, n, d, float(p["eps"]), samples)
    rows = [{"z": z, "mesh": mz} for z, mz in rep.pop("meshes")]
    return {"summary": rep, "columns": ["z", "mesh"], "rows": rows, "passed": rep["passed"]}


def _run_fiber_check(p: dict) -> dict:
    from .fiber import cosine_observable, fiber_multiplicity, gamma_bound, weighted_sum_observable
    from .systems import make_rotation, make_sturmian

    window = int(p["window"])
    if p["system"] == "rotation":
        sys_ = make_rotation(p["alpha"], horizon=max(window, 64))
        f = cosine_observable(sys_, int(p["k"]))
    else:
        sys_ = make_sturmian(p["alpha"], int(p["precision"]), horizon=max(window, 64))
        f = weighted_sum_observable(sys_)
    samples = sys_.sample(int(p["samples"]), p["seed"])
    sep = 3 * float(p["eps"])
    mult, classes = fiber_multiplicity(sys_, f, window, sep, float(p["tol"]), samples)
    gamma = gamma_bound(int(p["k"]), float(p["d"]))
    rows = [{"class": i, "size": c["size"], "separated": len(c["separated"])} for i, c in enumerate(classes)]
    summary = {
        "params": {"k": int(p["k"]), "d": float(p["d"]), "window": window, "sep": sep, "tol": float(p["tol"])},
        "gamma": gamma,
        "floor_gamma": math.floor(gamma),
        "max_mult": mult,
        "class_sizes": [c["size"] for c in classes],
    }
    return {"summary": summary, "columns": ["class", "size", "separated"], "rows": rows, "passed": mult <= math.floor(gamma)}


def _run_full_pipeline(p: dict) -> dict:
    from .pipeline import fiber_pipeline

    rep = fiber_pipeline(p)
    rows = rep.pop("marking_rows")
    return {"summary": rep, "columns": ["point", "S_x", "min_window"], "rows": rows, "passed": rep["passed"]}


_RUNNERS = {
    "kolmogorov": _run_kolmogorov,
    "intervals": _run_intervals,
    "levelfn": _run_levelfn,
    "torus-chain": _run_torus_chain,
    "fiber-check": _run_fiber_check,
    "full-pipeline": _run_full_pipeline,
}


def run_experiment(cfg: dict, out_dir=".", fmt: str = "json") -> int:
    """Validate, run and write ``<out_dir>/<command>.<fmt>``; return the exit status."""
    command = cfg.get("command")
    try:
        params = validate_config(command, cfg)
        if fmt not in ("json", "csv"):
            raise ConfigError(f"unknown format {fmt!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = Path(out_dir) / f"{command}.{fmt}"
    try:
        results = _RUNNERS[command](params)
        status = EXIT_OK if results["passed"] else EXIT_AUDIT
    except (AuditError, ConstructionError) as exc:
        results = {"summary": {"error": str(exc), "report": exc.report}, "columns": [], "rows": [], "passed": False}
        status = EXIT_AUDIT
        print(f"audit failure: {exc}", file=sys.stderr)
    except ValueError as exc:
        # parameters that pass field checks but are jointly inconsistent
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    results["summary"] = {"command": command, "parameters": params, **results["summary"]}
    emit_report(results, fmt, path)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mdimlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    args = ap.parse_args(argv)
    try:
        cfg = json.loads(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise ValueError("configuration must be a JSON object")
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = dict(cfg)
    cfg["command"] = args.command
    # precedence: --seed flag, then MDIMLAB_SEED, then the config file
    if os.environ.get("MDIMLAB_SEED"):
        try:
            cfg["seed"] = int(os.environ["MDIMLAB_SEED"])
        except ValueError:
            print("config error: MDIMLAB_SEED must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    if args.seed is not None:
        cfg["seed"] = args.seed
    return run_experiment(cfg, args.out, args.format)


if __name__ == "__main__":
    raise SystemExit(main())
