"""Command-line entry point: ``sklab geometry|solve|simulate|verify|stationary|pipeline``.

Exit codes: 0 success, 2 input error, 3 solver or V-hit termination,
4 verification failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    BadInitialPoint,
    CenterInV,
    DomainValidationError,
    LcpRayTermination,
    NonCompletelyS,
    ObliqueSignViolation,
    PointOutsideDomain,
    RadiusTooLarge,
)
from .generator import (
    make_bump_test_fn,
    make_coefficients,
    make_constant_test_fn,
    make_interior_bump_test_fn,
    make_linear_test_fn,
)
from .geometry import domain_from_dict, is_completely_s, load_domain
from .simulate import SimConfig, resolve_workers, simulate_ensemble
from .skorokhod import DiscretePath, solve_sp_path
from .stationary import check_stationary_characterization, estimate_stationary
from .verify import _jsonable, cross_check_formulations

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
INPUT_ERRORS = (OSError, ValueError, KeyError, TypeError, DomainValidationError, PointOutsideDomain,
                BadInitialPoint, ObliqueSignViolation, CenterInV, RadiusTooLarge, NonCompletelyS)


class InputError(Exception):
    pass


# -- config handling ------------------------------------------------------------

def _read_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_run_config(path, overrides: dict | None = None) -> dict:
    """Read a run config, inline its domain file, apply CLI overrides."""
    cfg = _read_json(path)
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: top level must be an object")
    _inline_domain(cfg, path)
    if isinstance(cfg.get("stationary"), dict) and "domain" in cfg["stationary"]:
        _inline_domain(cfg["stationary"], path)
    for key in ("coefficients", "simulation"):
        if key not in cfg:
            raise InputError(f"{path}: missing '{key}' section")
    o = overrides or {}
    sim = cfg["simulation"]
    for name, key in (("paths", "paths"), ("dt", "step"), ("horizon", "horizon"), ("seed", "seed")):
        if o.get(name) is not None:
            sim[key] = o[name]
    if o.get("seed") is not None and isinstance(cfg.get("stationary"), dict):
        cfg["stationary"].setdefault("simulation", {})["seed"] = o["seed"]
    return cfg


def _inline_domain(block: dict, path):
    dom = block.get("domain")
    if isinstance(dom, str):
        block["domain"] = _read_json(Path(path).parent / dom)
    elif not isinstance(dom, dict):
        raise InputError(f"{path}: 'domain' must be a file name or an object")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def sim_config(block: dict) -> SimConfig:
    keys = ("step", "horizon", "paths", "seed", "initial_point", "stop_on_v", "scheme", "record_every")
    unknown = set(block) - set(keys)
    if unknown:
        raise InputError(f"unknown simulation keys {sorted(unknown)}")
    try:
        return SimConfig(**block)
    except TypeError as exc:
        raise InputError(f"simulation section: {exc}") from exc


def build_battery(domain, entries) -> list:
    out = []
    for k, e in enumerate(entries):
        kind = e.get("type")
        if kind == "linear":
            out.append(make_linear_test_fn(domain, e["v"]))
        elif kind == "bump":
            out.append(make_bump_test_fn(domain, e["center"], e["radius"], e.get("sign", -1)))
        elif kind == "interior_bump":
            out.append(make_interior_bump_test_fn(domain, e["center"], e["radius"], e.get("sign", 1)))
        elif kind == "constant":
            out.append(make_constant_test_fn(domain.dimension, e.get("value", 1.0)))
        else:
            raise InputError(f"battery entry {k}: unknown type {kind!r}")
    return out


def _coeffs(block):
    return make_coefficients(block["name"], block.get("params", {}))


# -- output helpers ---------------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: dict | None, seed, command: str, started: str):
    """Index every file in ``out``; written last as the completion marker."""
    files = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "tool": "sklab", "version": __version__, "command": command,
        "config_sha256": config_hash(cfg) if cfg is not None else None, "seed": seed,
        "started_utc": started, "completed_utc": _now(), "files": files,
    }
    _write_json(out / "manifest.json", manifest)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_terminal_csv(path, ens):
    J, m = ens.z.shape[-1], ens.local_times.shape[-1]
    head = ["path", "tau", "status", "boundary_steps"] + [f"z{j + 1}" for j in range(J)] \
        + [f"y{j + 1}" for j in range(J)] + [f"l{i + 1}" for i in range(m)]
    lines = [",".join(head)]
    for p in range(len(ens)):
        row = [str(p), str(int(ens.tau[p])), str(int(ens.status[p])), str(int(ens.boundary_steps[p]))]
        row += [_fmt(v) for v in ens.z[p, -1]] + [_fmt(v) for v in ens.y[p, -1]] \
            + [_fmt(v) for v in ens.local_times[p, -1]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_mean_path_csv(path, ens):
    J = ens.z.shape[-1]
    head = ["t"] + [f"mean_z{j + 1}" for j in range(J)] + [f"mean_y{j + 1}" for j in range(J)]
    mz, my = ens.z.mean(axis=0), ens.y.mean(axis=0)
    lines = [",".join(head)]
    for k, t in enumerate(ens.times):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in mz[k]] + [_fmt(v) for v in my[k]]))
    Path(path).write_text("\n".join(lines) + "\n")


def summarize(ens) -> dict:
    zT = ens.z[:, -1]
    n = len(ens)
    return {
        "paths": n, "backend": ens.info.get("backend"), "scheme": ens.config.scheme,
        "mean_terminal": zT.mean(axis=0).tolist(),
        "se_terminal": (zT.std(axis=0, ddof=1) / np.sqrt(n)).tolist() if n > 1 else None,
        "stopped_paths": int((ens.tau >= 0).sum()), "solver_failures": int((ens.status != 0).sum()),
        "mean_boundary_steps": float(ens.boundary_steps.mean()),
    }


# -- subcommands ------------------------------------------------------------------

def cmd_geometry(args) -> int:
    started = _now()
    dom = load_domain(args.domain)
    cs = is_completely_s(dom)
    lines = []
    strata = []
    for S in sorted(cs.margins, key=lambda s: (len(s), s)):
        t = cs.margins[S]
        cls = "U" if S not in cs.v_strata else "V"
        strata.append({"faces": list(S), "margin": t, "class": cls, "point": cs.points[S].tolist()})
        lines.append(f"stratum {{{', '.join(map(str, S))}}}: {cls} (margin {t:.6g})")
    if cs:
        lines.append("completely-S: true")
    else:
        lines.append(f"completely-S: false, witness {{{', '.join(map(str, cs.witness))}}}")
    print("\n".join(lines))
    report = {"dimension": dom.dimension, "faces": dom.n_faces, "strata": strata, "completely_s": bool(cs),
              "witness": list(cs.witness) if cs.witness is not None else None}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "geometry.json", report)
        write_manifest(out, dom.to_dict(), None, "geometry", started)
    else:
        print(json.dumps(_jsonable(report), sort_keys=True))
    return EXIT_OK


def cmd_solve(args) -> int:
    started = _now()
    dom = load_domain(args.domain)
    psi = DiscretePath.from_csv(args.psi)
    if psi.dimension != dom.dimension:
        raise InputError(f"path has {psi.dimension} columns, domain dimension is {dom.dimension}")
    try:
        sol = solve_sp_path(dom, psi)
    except PointOutsideDomain as exc:
        raise InputError(f"psi(0) is outside the domain: {exc}") from exc
    out = Path(args.out)
    sol.write(out)
    psi.to_csv(out / "psi.csv")
    write_manifest(out, dom.to_dict(), None, "solve", started)
    print(f"solved {len(psi) - 1} steps; total local time {sol.local_time_increments.sum():.6g}")
    return EXIT_OK


def _simulate(cfg, workers):
    dom = domain_from_dict(cfg["domain"])
    coeffs = _coeffs(cfg["coefficients"])
    sc = sim_config(cfg["simulation"])
    return dom, coeffs, simulate_ensemble(dom, coeffs, sc, workers=workers)


def _write_sim(out: Path, cfg, ens):
    _write_json(out / "config.json", cfg)
    write_terminal_csv(out / "terminal.csv", ens)
    write_mean_path_csv(out / "mean_path.csv", ens)
    _write_json(out / "summary.json", summarize(ens))


def _verify(cfg, dom, coeffs, ens):
    vb = cfg.get("verify", {})
    battery = build_battery(dom, vb.get("battery", [{"type": "constant"}]))
    pairs = vb.get("time_pairs")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = cross_check_formulations(ens, dom, coeffs, battery, time_pairs=pairs, bins=vb.get("bins", 8),
                                       z_threshold=vb.get("z_threshold", 3.0), n_windows=vb.get("windows", 100),
                                       hull_paths=vb.get("hull_paths", 20), seed=cfg["simulation"]["seed"])
    d = rep.to_dict()
    d["warnings"] = sorted({str(w.message) for w in caught})
    return rep.passed, d


def _stationary(cfg, workers):
    sb = cfg["stationary"]
    dom = domain_from_dict(sb.get("domain", cfg["domain"]))
    coeffs = _coeffs(sb.get("coefficients", cfg["coefficients"]))
    block = dict(cfg["simulation"])
    block.update(sb.get("simulation", {}))
    thin = int(sb.get("thin", 100))
    block["record_every"] = thin
    sc = sim_config(block)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = estimate_stationary(dom, coeffs, sc, burn_in=float(sb.get("burn_in", 0.0)), thin=thin,
                                  workers=workers)
    battery = build_battery(dom, sb.get("battery", [{"type": "constant"}]))
    rep = check_stationary_characterization(est, coeffs, battery,
                                            epsilons=sb.get("epsilons", (0.2, 0.1, 0.05, 0.025)))
    rep["moments"] = est.moments
    rep["samples"] = int(est.sample_points.shape[0])
    rep["warnings"] = sorted({str(w.message) for w in caught})
    return est, rep


def cmd_simulate(args) -> int:
    started = _now()
    cfg = load_run_config(args.config, vars(args))
    dom, coeffs, ens = _simulate(cfg, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_sim(out, cfg, ens)
    write_manifest(out, cfg, cfg["simulation"]["seed"], "simulate", started)
    s = summarize(ens)
    print(f"simulated {s['paths']} paths ({s['backend']}, {s['scheme']}); mean Z(T) = {s['mean_terminal']}")
    if s["stopped_paths"]:
        print(f"{s['stopped_paths']} path(s) stopped at the first V-hit or an unsolvable step")
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    started = _now()
    run = Path(args.run_dir)
    cfg = _read_json(run / "config.json")
    if args.seed is not None and args.seed != cfg["simulation"]["seed"]:
        raise InputError("verify re-simulates the recorded run; --seed must match its config")
    dom, coeffs, ens = _simulate(cfg, args.workers)
    recorded = (run / "terminal.csv").read_text()
    tmp = run / ".terminal.check"
    write_terminal_csv(tmp, ens)
    same = tmp.read_text() == recorded
    tmp.unlink()
    if not same:
        raise InputError(f"{run}: terminal.csv does not match a re-simulation of config.json")
    ok, report = _verify(cfg, dom, coeffs, ens)
    _write_json(run / "verify_report.json", report)
    write_manifest(run, cfg, cfg["simulation"]["seed"], "verify", started)
    _print_report(report)
    return EXIT_OK if ok else EXIT_VERIFY


def _print_report(report):
    for it in report["items"]:
        print(f"{'PASS' if it['passed'] else 'FAIL'}  {it['name']}")
    print("verification:", "passed" if report["passed"] else "FAILED")


def cmd_stationary(args) -> int:
    started = _now()
    cfg = load_run_config(args.config, {"seed": args.seed})
    if "stationary" not in cfg:
        raise InputError("config has no 'stationary' section")
    est, rep = _stationary(cfg, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg)
    est.histogram_csv(out / "histogram.csv")
    _write_json(out / "stationary_report.json", rep)
    write_manifest(out, cfg, cfg["simulation"]["seed"], "stationary", started)
    print(f"stationary mean {rep['moments']['mean']}, variance {rep['moments']['variance']}")
    print("characterization:", "passed" if rep["passed"] else "FAILED")
    return EXIT_OK if rep["passed"] else EXIT_VERIFY


def cmd_pipeline(args) -> int:
    started = _now()
    cfg = load_run_config(args.config, vars(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dom, coeffs, ens = _simulate(cfg, args.workers)
    _write_sim(out, cfg, ens)
    ok, report = _verify(cfg, dom, coeffs, ens)
    _write_json(out / "verify_report.json", report)
    _print_report(report)
    if "stationary" in cfg:
        est, rep = _stationary(cfg, args.workers)
        est.histogram_csv(out / "histogram.csv")
        _write_json(out / "stationary_report.json", rep)
        print("stationary characterization:", "passed" if rep["passed"] else "FAILED")
        ok = ok and rep["passed"]
    write_manifest(out, cfg, cfg["simulation"]["seed"], "pipeline", started)
    return EXIT_OK if ok else EXIT_VERIFY


# -- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sklab", description="Reflected diffusions in convex polyhedra.")
    p.add_argument("--version", action="version", version=f"sklab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geometry", help="classify boundary strata and test completely-S")
    g.add_argument("domain", help="domain JSON file")
    g.add_argument("--out", help="directory for geometry.json")
    g.set_defaults(func=cmd_geometry)

    s = sub.add_parser("solve", help="Skorokhod map of a CSV path")
    s.add_argument("domain")
    s.add_argument("psi", help="CSV with header t,x1,...,xJ")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    def run_flags(q, out_required=True):
        q.add_argument("--config", required=True, help="run config JSON")
        q.add_argument("--out", required=out_required)
        q.add_argument("--seed", type=int)
        q.add_argument("--workers", type=int, help="worker threads (default: $SKLAB_WORKERS or 1)")
        q.add_argument("--paths", type=int)
        q.add_argument("--dt", type=float)
        q.add_argument("--horizon", type=float)

    for name, func, help_ in (("simulate", cmd_simulate, "simulate an ensemble"),
                              ("stationary", cmd_stationary, "estimate the stationary law"),
                              ("pipeline", cmd_pipeline, "simulate, verify and estimate in one run")):
        q = sub.add_parser(name, help=help_)
        run_flags(q)
        q.set_defaults(func=func)

    v = sub.add_parser("verify", help="verify a simulate run directory")
    v.add_argument("run_dir")
    v.add_argument("--seed", type=int)
    v.add_argument("--workers", type=int)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.workers = resolve_workers(getattr(args, "workers", None))
        return args.func(args)
    except LcpRayTermination as exc:
        print(f"sklab: solver terminated: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InputError as exc:
        print(f"sklab: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        print(f"sklab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
