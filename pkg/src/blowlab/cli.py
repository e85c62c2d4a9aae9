"""Command line front end.

    blowlab profile {check,show} --config FILE
    blowlab eval    --config FILE --xs SPEC --ts SPEC [--order Q] [--out CSV]
    blowlab verify  {pde,symmetry,norms,oracles,all} --config FILE [--out JSON]
    blowlab fit     --config FILE [--ladder SPEC] [--q1 N --q2 N] [--out DIR]
    blowlab cache   {ls,purge}

Grid caches live in $BLOWLAB_CACHE_DIR (default ~/.cache/blowlab).  Every
run that writes files appends one record to manifest.jsonl next to them.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .contour import build_grid, load_grid, save_grid
from .errors import BlowlabError, CacheError, ConfigError, FitError, ParamError
from .kernel import assemble
from .scattering import Unbounded, load_config, to_config, validate_profile
from .solution import u_grid
from .verify import (bound_witness, envelope_halfwidth, fit_blowup, ladder_values,
                     norm_audit, oracle_suite, pde_residual, ratio_to_leading,
                     symmetry_audit)

SUITES = ("pde", "symmetry", "norms", "oracles")
CSV_COLUMNS = ("x", "t", "q1", "q2", "value", "err_trunc", "err_quad", "flags")


# ------------------------------------------------------------ caching

def cache_dir():
    return Path(os.environ.get("BLOWLAB_CACHE_DIR",
                               Path.home() / ".cache" / "blowlab"))


class GridCache:
    """build_grid with an on-disk cache; corrupt entries are rebuilt."""

    def __init__(self, root=None, enabled=True, log=sys.stderr):
        self.root = Path(root) if root is not None else cache_dir()
        self.enabled = enabled
        self.log = log

    def path(self, profile, t, tol, q_max):
        key = f"{profile.content_hash}|{t!r}|{tol!r}|{q_max}|{__version__}"
        return self.root / f"grid-{hashlib.sha256(key.encode()).hexdigest()[:24]}.blg"

    def __call__(self, profile, t, tol=1e-10, q_max=1):
        if not self.enabled:
            return build_grid(profile, t, tol, q_max=q_max)
        p = self.path(profile, t, tol, q_max)
        if p.exists():
            try:
                return load_grid(p, profile.content_hash)
            except CacheError as exc:
                print(f"cache: {p.name}: {exc}; rebuilding", file=self.log)
                p.unlink(missing_ok=True)
        grid = build_grid(profile, t, tol, q_max=q_max)
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = p.with_suffix(".tmp")
        save_grid(grid, tmp)
        os.replace(tmp, p)
        return grid


# ------------------------------------------------------------ parsing helpers

def parse_points(spec):
    """'a:b:n' for n evenly spaced points, otherwise a comma list."""
    if ":" in spec:
        a, b, n = spec.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(n))]
    return [float(v) for v in spec.split(",") if v.strip()]


def parse_ladder(spec):
    """'hi:lo:n' for n geometric rungs of T - t, otherwise a comma list."""
    if ":" in spec:
        hi, lo, n = spec.split(":")
        return [float(v) for v in np.geomspace(float(hi), float(lo), int(n))]
    return [float(v) for v in spec.split(",") if v.strip()]


def fmt(v):
    return repr(float(v))


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(outdir, command, flags, profile, outputs, criteria, started, tol):
    """Append one run record to manifest.jsonl in ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ident = hashlib.sha256(json.dumps(
        [command, flags, profile.content_hash, __version__], sort_keys=True).encode())
    rec = {
        "run_id": ident.hexdigest()[:16],
        "command": command,
        "flags": flags,
        "profile_hash": profile.content_hash,
        "grid_policy": {"rule": "composite Gauss-Legendre", "order": 16,
                        "first_width": 0.5, "growth": 1.5, "tol": tol},
        "version": __version__,
        "wall_clock_s": round(time.time() - started, 3),
        "criteria": criteria,
        "outputs": [{"path": Path(p).name, "sha256": sha256_file(p)} for p in outputs],
    }
    with open(outdir / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return rec


def _flags(args):
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(args):
    if not args.config:
        raise ParamError("--config is required")
    return load_config(args.config)


# ------------------------------------------------------------ commands

def cmd_profile(args, out=None):
    out = out or sys.stdout
    profile = _load(args)
    if args.action == "show":
        out.write(to_config(profile))
        out.write(f"# content_hash={profile.content_hash}\n")
        return 0
    rep = validate_profile(profile)
    for k, v in rep.as_dict().items():
        out.write(f"{k:<22} {v}\n")
    out.write(f"{'result':<22} {'PASS' if rep.passed else 'FAIL'}\n")
    return 0 if rep.passed else 1


def eval_rows(profile, xs, ts, order, tol, threads=1, builder=build_grid):
    cells = u_grid(profile, xs, ts, order, tol, threads=threads, builder=builder)
    rows = []
    for cell in cells:
        if cell.sample is None:
            rows.append([fmt(cell.x), fmt(cell.t), "", "", "", "", "",
                         "error:" + cell.error.replace(",", ";")])
            continue
        s = cell.sample
        for (q1, q2), v in s.derivs.items():
            e = s.err[(q1, q2)]
            rows.append([fmt(s.x), fmt(s.t), str(q1), str(q2), fmt(v),
                         fmt(e["trunc"]), fmt(e["quad"]), "|".join(s.flags)])
    return rows


def cmd_eval(args, out=None):
    out = out or sys.stdout
    started = time.time()
    profile = _load(args)
    xs, ts = parse_points(args.xs), parse_points(args.ts)
    builder = GridCache(enabled=not args.no_cache)
    rows = eval_rows(profile, xs, ts, args.order, args.tol, args.threads, builder)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        bad = sum(1 for r in rows if r[-1].startswith("error:"))
        write_manifest(Path(args.out).parent, "eval", _flags(args), profile, [args.out],
                       {"cells_failed": bad}, started, args.tol)
    else:
        out.write(buf.getvalue())
    return 0


def _pde_points(profile, n=20, seed=0):
    rng = np.random.default_rng(seed)
    xs = profile.x0 + rng.uniform(-5.0, 5.0, n)
    ts = profile.T - rng.uniform(0.1, 0.9, n) * profile.T
    return list(zip(xs.tolist(), ts.tolist()))


def run_suite(profile, suite, tol, builder=build_grid):
    """One verification suite; returns (passed, details)."""
    if suite == "pde":
        rep = pde_residual(profile, _pde_points(profile), tol, builder=builder)
        return rep.max_rel < 1e-6, {"max_rel": rep.max_rel, "budget": max(rep.budget),
                                    "points": len(rep.points)}
    if suite == "symmetry":
        t = 0.5 * profile.T
        op = assemble(profile, builder(profile, t, tol), profile.x0 + 0.7, t)
        rep = symmetry_audit(profile, profile.x0 + 0.7, t, tol=tol, op=op)
        return rep.passed(), rep.as_dict()
    if suite == "norms":
        xs = np.linspace(profile.x0 - 5.0, profile.x0 + 5.0, 5)
        ts = np.linspace(0.0, 0.9 * profile.T, 5)
        rep = norm_audit(profile, xs, ts, tol, builder=builder)
        ok = rep.passed() and rep.decay_ok(profile.M)
        return ok, {"max_norm_est": max(rep.norm_est), "bound": rep.bound,
                    "decay_ok": rep.decay_ok(profile.M)}
    if suite == "oracles":
        rep = oracle_suite(profile, x=profile.x0 + 0.5, t=0.5 * profile.T)
        return rep.passed(), {"tensor_rel": rep.tensor_rel, "fd_rel": rep.fd_rel,
                              "leading_rel": rep.leading_rel}
    raise ParamError(f"unknown suite {suite!r}")


def cmd_verify(args, out=None):
    out = out or sys.stdout
    started = time.time()
    profile = _load(args)
    suites = SUITES if args.suite == "all" else (args.suite,)
    builder = GridCache(enabled=not args.no_cache)
    results = {}
    for name in suites:
        try:
            ok, detail = run_suite(profile, name, args.tol, builder)
        except BlowlabError as exc:
            ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
        results[name] = {"pass": bool(ok), **detail}
        out.write(f"{name:<10} {'PASS' if ok else 'FAIL'}  "
                  + "  ".join(f"{k}={_short(v)}" for k, v in detail.items()) + "\n")
    report = {"profile_hash": profile.content_hash, "tol": args.tol, "suites": results}
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
        write_manifest(Path(args.out).parent, "verify", _flags(args), profile, [args.out],
                       {k: v["pass"] for k, v in results.items()}, started, args.tol)
    return 0 if all(v["pass"] for v in results.values()) else 1


def _short(v):
    if isinstance(v, float):
        return f"{v:.3e}"
    return str(v)


def cmd_fit(args, out=None):
    out = out or sys.stdout
    from .plotting import ladder_figure

    started = time.time()
    profile = _load(args)
    ladder = parse_ladder(args.ladder)
    if len(ladder) < 6:
        raise ParamError(f"ladder too shallow: {len(ladder)} rungs, need at least 6")
    builder = GridCache(enabled=not args.no_cache)
    target = (args.q1, args.q2)
    values = ladder_values(profile, profile.x0, ladder, *target, tol=args.tol,
                           builder=builder)
    err = None
    try:
        fit = fit_blowup(profile, target, ladder, args.tol, values=values)
    except FitError as exc:
        err, fit = str(exc), exc.fit
    ratios = [float("nan")] * len(ladder)
    envelope = None
    if isinstance(profile.kind, Unbounded) and target == (0, 0) and fit is not None:
        ratios = ratio_to_leading(profile, ladder, values=values)
        half = envelope_halfwidth(profile.M)
        envelope = {"halfwidth": half,
                    "late_inside": [bool(abs(r - 1.0) <= half) for r in ratios[-3:]]}
    elif fit is not None:
        ratios = [v / p if p and math.isfinite(p) else float("nan")
                  for v, p in zip(values, fit.predictions)]
    preds = fit.predictions if fit is not None else [float("nan")] * len(ladder)
    # running max, reported as an empirical witness for the spatial-bound constant
    witness = bound_witness(profile, ladder, args.tol, builder=builder).as_dict()
    result = {"fit": fit.as_dict() if fit is not None else None, "error": err,
              "envelope": envelope, "bound_witness": witness}
    outdir = Path(args.out) if args.out else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        jpath, cpath, ppath = outdir / "fit.json", outdir / "ladder.csv", outdir / "ladder.png"
        jpath.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with open(cpath, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T_minus_t", "value", "prediction", "ratio"])
            for row in zip(ladder, values, preds, ratios):
                w.writerow([fmt(v) for v in row])
        ladder_figure(ladder, values, preds, ppath,
                      title=f"(q1, q2) = ({args.q1}, {args.q2})")
        write_manifest(outdir, "fit", _flags(args), profile, [jpath, cpath, ppath],
                       {"fit": err is None}, started, args.tol)
    if fit is not None:
        out.write(f"delta_hat  {fit.delta_hat:.6f}\nr2         {fit.r2:.6f}\n"
                  f"sign_ok    {fit.sign_ok}\n")
    if envelope is not None:
        out.write(f"envelope   +-{envelope['halfwidth']:.4f}  late rungs inside: "
                  f"{envelope['late_inside']}\n")
    if err:
        out.write(f"FitError   {err}\n")
        return 1
    return 0


def cmd_cache(args, out=None):
    out = out or sys.stdout
    root = cache_dir()
    files = sorted(root.glob("*.blg")) if root.is_dir() else []
    if args.action == "ls":
        for f in files:
            out.write(f"{f.stat().st_size:>12}  {f.name}\n")
        out.write(f"{len(files)} file(s) in {root}\n")
    else:
        for f in files:
            f.unlink()
        out.write(f"removed {len(files)} file(s) from {root}\n")
    return 0


# ------------------------------------------------------------ entry point

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="profile config file")
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--no-cache", action="store_true", help="bypass grid caches")
    ap = argparse.ArgumentParser(prog="blowlab", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"blowlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", parents=[common], help="validate or print a profile")
    p.add_argument("action", choices=("check", "show"))
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("eval", parents=[common], help="tabulate u and derivatives")
    p.add_argument("--xs", required=True, help="a:b:n or comma list")
    p.add_argument("--ts", required=True, help="a:b:n or comma list")
    p.add_argument("--order", type=int, default=0, help="all q1 + 2 q2 <= order")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    p.add_argument("suite", choices=SUITES + ("all",))
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fit", parents=[common], help="fit the blow-up exponent")
    p.add_argument("--ladder", default="1e-1:1e-6:12", help="hi:lo:n in T-t or comma list")
    p.add_argument("--q1", type=int, default=0)
    p.add_argument("--q2", type=int, default=0)
    p.add_argument("--out", help="output directory for fit.json, ladder.csv, ladder.png")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cache", help="inspect or clear grid caches")
    p.add_argument("action", choices=("ls", "purge"))
    p.set_defaults(func=cmd_cache)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except BlowlabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
