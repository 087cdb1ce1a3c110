"""Command-line front end: every command writes its data files plus manifest.json.

Exit status is 0 on success, 2 when a computed criterion is not met and 1 on
any error.  Defaults can come from an INI-style config file with a [run]
section and one section per command; explicit flags win, and QPSPEC_THREADS
overrides the thread count of the config file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import DEFAULT_DEPTH, DEFAULT_PREC, dio_estimate, parse_frequency
from .errors import ConfigError, Delocalized, QpspecError
from .potential import TrigPolynomial, amo_potential

EXTENDED_PREC = 256


class CriterionNotMet(Exception):
    """Raised by a command whose result is valid but fails its criterion."""


# ------------------------------------------------------------------ helpers

def _energies(text: str) -> np.ndarray:
    """'a:b:n' for n evenly spaced points or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("energy range must look like a:b:n")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("energy count must be >= 1")
        return np.linspace(a, b, n)
    return np.array([float(x) for x in text.split(",") if x.strip()])


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


class Context:
    def __init__(self, args, out: Path):
        self.args = args
        self.out = out
        self.files: list[str] = []
        self.extended = args.precision == "extended"
        self.summary: dict = {}

    @property
    def freq(self):
        prec = EXTENDED_PREC if self.extended else DEFAULT_PREC
        return parse_frequency(self.args.alpha, DEFAULT_DEPTH, prec)

    @property
    def potential(self) -> TrigPolynomial:
        if getattr(self.args, "potential", None):
            return TrigPolynomial.from_json(Path(self.args.potential).read_text())
        return amo_potential(self.args.coupling)

    def num(self, x):
        """JSON number, or its round-trip string when extended precision is on."""
        if isinstance(x, (bool, int, str)) or x is None:
            return x
        x = float(x)
        if self.extended or not math.isfinite(x):
            return repr(x)
        return x

    def jsonify(self, obj):
        if isinstance(obj, dict):
            return {k: self.jsonify(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self.jsonify(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return [self.jsonify(v) for v in obj.tolist()]
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (float, np.floating)):
            return self.num(obj)
        return obj

    def write_json(self, name: str, obj):
        path = self.out / name
        path.write_text(json.dumps(self.jsonify(obj), indent=1, sort_keys=True) + "\n")
        self.files.append(name)

    def write_csv(self, name: str, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in row])
        self.files.append(name)

    def map(self, fn, items):
        """Ordered map over independent cells on the configured thread pool."""
        items = list(items)
        if self.args.threads <= 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.args.threads) as pool:
            return list(pool.map(fn, items))


# ----------------------------------------------------------------- commands

def cmd_butterfly(ctx: Context):
    from .spectrum import butterfly_sweep, write_butterfly_csv

    rows = butterfly_sweep(ctx.args.coupling, ctx.args.qmax, map_fn=ctx.map)
    write_butterfly_csv(rows, ctx.out / "butterfly.csv")
    ctx.files.append("butterfly.csv")
    ctx.summary["rows"] = len(rows)


def _bands(ctx: Context):
    from .spectrum import approximant_bands

    freq = ctx.freq
    q = ctx.args.q
    p = next((pp for pp, qq in zip(freq.p, freq.q) if qq == q), None)
    if p is None:
        p, q = freq.best_approximant(q)
    return freq, approximant_bands(ctx.potential, (p, q))


def cmd_bands(ctx: Context):
    _, bands = _bands(ctx)
    ctx.write_csv("bands.csv", ["lo", "hi"], bands.intervals.tolist())
    ctx.summary.update(n_bands=len(bands), measure=float((bands.intervals[:, 1] - bands.intervals[:, 0]).sum()))


def cmd_gaps(ctx: Context):
    from .spectrum import approximant_ids, detect_gaps, label_gaps

    freq, bands = _bands(ctx)
    recs = label_gaps(detect_gaps(bands, ctx.args.floor), approximant_ids(bands), freq,
                      K=ctx.args.K, tol=ctx.args.label_tol)
    table = [{"k": g.k, "E_minus": g.E_minus, "E_plus": g.E_plus, "size": g.size,
              "ids_value": g.ids_value, "label_residual": g.label_residual,
              "status": g.status, "candidates": list(g.candidates)} for g in recs]
    ctx.write_json("gaps.json", {"source": bands.source, "gaps": table})
    ctx.summary.update(n_gaps=len(recs), unlabeled=sum(g.k is None for g in recs))


def cmd_ids(ctx: Context):
    from .ids import ids_count, ids_rotation

    V, freq = ctx.potential, ctx.freq
    Es = _energies(ctx.args.energies)
    rows = []
    count = ids_count(V, freq, Es, n=ctx.args.n_count) if ctx.args.method in ("count", "both") else None
    rot = (ctx.map(lambda e: ids_rotation(V, freq, float(e), n=ctx.args.n_rotation), Es)
           if ctx.args.method in ("rotation", "both") else None)
    for i, e in enumerate(Es):
        if count is not None:
            rows.append([float(e), float(count[i].N), "count", ctx.args.n_count])
        if rot is not None:
            rows.append([float(e), float(rot[i].N), "rotation", ctx.args.n_rotation])
    ctx.write_csv("ids.csv", ["E", "N", "method", "n"], rows)


def cmd_lyapunov(ctx: Context):
    from .cocycle import lyapunov, schrodinger_cocycle

    V, freq = ctx.potential, ctx.freq
    Es = _energies(ctx.args.energies)
    res = ctx.map(lambda e: lyapunov(schrodinger_cocycle(V, float(e), freq), ctx.args.y, ctx.args.n), Es)
    ctx.write_csv("lyapunov.csv", ["E", "y", "L", "std_err"],
                  [[float(e), r.y_offset, r.value, r.std_err] for e, r in zip(Es, res)])


def cmd_rotation(ctx: Context):
    from .cocycle import rotation_number, schrodinger_cocycle

    V, freq = ctx.potential, ctx.freq
    Es = _energies(ctx.args.energies)
    res = ctx.map(lambda e: rotation_number(schrodinger_cocycle(V, float(e), freq), n=ctx.args.n), Es)
    ctx.write_csv("rotation.csv", ["E", "rho", "residual"],
                  [[float(e), r.rho, r.winding_residual] for e, r in zip(Es, res)])


def cmd_classify(ctx: Context):
    from .cocycle import classify_energy

    V, freq = ctx.potential, ctx.freq
    Es = _energies(ctx.args.energies)
    grid = _floats(ctx.args.eps_grid)
    res = ctx.map(lambda e: classify_energy(V, float(e), freq, grid, n=ctx.args.n), Es)
    ctx.write_csv("classify.csv", ["E", "class"], [[float(e), c] for e, c in zip(Es, res)])
    ctx.summary["counts"] = {c: res.count(c) for c in sorted(set(res))}


def cmd_homogeneity(ctx: Context):
    from .errors import H3Violated, UnlabeledGaps
    from .homogeneity import CriterionInput, criterion_check, homogeneity_scan
    from .spectrum import approximant_ids, detect_gaps, label_gaps

    freq, bands = _bands(ctx)
    a = ctx.args
    rep = homogeneity_scan(bands, n_E=a.n_E, n_eps=a.n_eps)
    out = rep.to_jsonable()
    gaps = label_gaps(detect_gaps(bands), approximant_ids(bands), freq)
    beta = freq.beta_hat if a.beta is None else a.beta
    inp = CriterionInput(a.sigma, a.C, a.vartheta, beta, (bands.lo, bands.hi), gaps)
    out.update(C12=None, h3_ok=inp.h3_ok, violations=[], beta=beta)
    try:
        crit = criterion_check(inp, spectrum_range=(bands.lo, bands.hi))
        out.update(C12=crit["C12"], violations=crit["violations"])
    except (H3Violated, UnlabeledGaps) as exc:
        out["criterion_error"] = f"{type(exc).__name__}: {exc}"
    ctx.write_json("homogeneity.json", out)
    ctx.summary["mu_hat"] = rep.mu_hat
    if ctx.args.mu_min is not None and rep.mu_hat < ctx.args.mu_min:
        raise CriterionNotMet(f"mu_hat={rep.mu_hat:.4f} below {ctx.args.mu_min}")


def _parabolic(ctx: Context):
    from .kam import ReduceConfig, locate_gap_edge, reduce_to_parabolic

    a = ctx.args
    V, freq = ctx.potential, ctx.freq
    cfg = ReduceConfig(eps_star=a.eps_star)
    if a.energy is not None:
        E = a.energy
    else:
        if a.k is None:
            raise ConfigError(f"{a.command}.k", "give either --energy or --k")
        E = locate_gap_edge(V, freq, a.k, a.side, r0=a.r0, r=a.r, cfg=cfg)
    return reduce_to_parabolic(V, E, freq, a.r0, a.r, a.max_steps, cfg)


def cmd_kam_reduce(ctx: Context):
    pd = _parabolic(ctx)
    ctx.write_json("parabolic.json", pd.to_jsonable())
    ctx.write_json("history.json", list(pd.state.history))
    ctx.summary.update(k=pd.k, zeta=pd.zeta, residual=pd.residual)


def cmd_gap_bound(ctx: Context):
    from .kam import ParabolicData, gap_bound_criterion

    a = ctx.args
    freq = ctx.freq
    if a.input:
        pd = ParabolicData.from_jsonable(json.loads(Path(a.input).read_text()))
    elif a.zeta is not None:
        if a.norm_x is None:
            raise ConfigError("gap-bound.norm_x", "--zeta needs --norm-x")
        pd = ParabolicData.from_jsonable({"zeta": a.zeta, "norm_X": a.norm_x, "R": a.R})
    else:
        pd = _parabolic(ctx)
        ctx.write_json("parabolic.json", pd.to_jsonable())
    dio = dio_estimate(freq, a.tau, a.dio_horizon) if a.mode == "diophantine_form" else None
    gb = gap_bound_criterion(pd, a.kappa, freq, a.mode, dio)
    ctx.write_json("gap_bound.json", gb.to_jsonable())
    ctx.summary.update(condition_met=gb.condition_met, log_margin=gb.log_margin)
    if not gb.condition_met:
        raise CriterionNotMet(f"smallness condition fails by {-gb.log_margin:.3f} in log")


def cmd_duality_decay(ctx: Context):
    from .duality import dual_matrix, eigenvector_decay, nonresonant_phase, write_decay_profile

    a = ctx.args
    freq = ctx.freq
    theta = a.theta if a.theta is not None else nonresonant_phase(
        freq, rng=np.random.default_rng(a.seed))
    op = dual_matrix(ctx.potential, freq, theta, a.n)
    which = a.which
    if which not in ("center",):
        which = ("energy", float(which[len("E="):])) if which.startswith("E=") else int(which)
    try:
        fit = eigenvector_decay(op, which)
    except Delocalized as exc:
        ctx.write_json("decay.json", {"theta": theta, "n": a.n, "delocalized": True,
                                      "reason": str(exc)})
        raise CriterionNotMet(str(exc)) from exc
    ctx.write_json("decay.json", {"theta": theta, "n": a.n, "rate": fit.rate, "energy": fit.energy,
                                  "center": fit.center, "index": fit.index, "delocalized": False})
    write_decay_profile(fit, op, ctx.out / "profile.csv")
    ctx.files.append("profile.csv")
    ctx.summary["rate"] = fit.rate


def cmd_toda_drift(ctx: Context):
    from .toda import drift_report, toda_evolve, toda_init, write_snapshots

    a = ctx.args
    V, freq = ctx.potential, ctx.freq
    rep = drift_report(V, freq, a.theta, a.n, a.T, a.dt, a.boundary)
    ctx.write_json("drift.json", rep)
    if a.snapshot_every:
        _, snaps = toda_evolve(toda_init(V, freq, a.theta, a.n, a.boundary), a.T, a.dt, a.snapshot_every)
        write_snapshots(snaps, ctx.out / "snapshots.csv")
        ctx.files.append("snapshots.csv")
    ctx.summary["middle_third_drift"] = rep["middle_third_drift"]


COMMANDS = {
    "butterfly": cmd_butterfly, "bands": cmd_bands, "gaps": cmd_gaps, "ids": cmd_ids,
    "lyapunov": cmd_lyapunov, "rotation": cmd_rotation, "classify": cmd_classify,
    "homogeneity": cmd_homogeneity, "kam-reduce": cmd_kam_reduce, "gap-bound": cmd_gap_bound,
    "duality-decay": cmd_duality_decay, "toda-drift": cmd_toda_drift,
}


# ------------------------------------------------------------------ parsing

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lambda", dest="coupling", type=float, default=0.5,
                        help="almost Mathieu coupling (potential 2 lambda cos 2 pi x)")
    common.add_argument("--potential", help="JSON file of [n, re, im] Fourier rows; overrides --lambda")
    common.add_argument("--alpha", default="golden", help="golden, silver, sqrt2m1 or a decimal")

    p = argparse.ArgumentParser(prog="qpspec", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with [run] and per-command sections")
    p.add_argument("--out", dest="output_dir", default=None, help="output directory (default .)")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--precision", choices=("double", "extended"), default=None)
    p.add_argument("--version", action="version", version=f"qpspec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("butterfly", parents=[common], help="AMO approximant bands for all p/q")
    s.add_argument("--qmax", type=_positive_int, default=30)

    for name in ("bands", "gaps", "homogeneity"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--q", type=_positive_int, default=233, help="approximant denominator")
        if name == "gaps":
            s.add_argument("--K", type=_positive_int, default=50)
            s.add_argument("--floor", type=float, default=1e-10)
            s.add_argument("--label-tol", type=float, default=1e-3)
        if name == "homogeneity":
            s.add_argument("--n-E", dest="n_E", type=_positive_int, default=200)
            s.add_argument("--n-eps", dest="n_eps", type=_positive_int, default=40)
            s.add_argument("--mu-min", type=float, default=None, help="exit 2 below this value")
            s.add_argument("--sigma", type=float, default=0.5, help="IDS Holder exponent")
            s.add_argument("--C", type=float, default=1.0, help="gap decay prefactor")
            s.add_argument("--vartheta", type=float, default=0.5, help="gap decay rate")
            s.add_argument("--beta", type=float, default=None, help="default: estimate from alpha")

    s = sub.add_parser("ids", parents=[common])
    s.add_argument("--energies", default="-2.5:2.5:51")
    s.add_argument("--method", choices=("count", "rotation", "both"), default="both")
    s.add_argument("--n-count", type=_positive_int, default=4000)
    s.add_argument("--n-rotation", type=_positive_int, default=1_000_000)

    s = sub.add_parser("lyapunov", parents=[common])
    s.add_argument("--energies", default="-2.5:2.5:51")
    s.add_argument("--y", type=float, default=0.0, help="imaginary phase offset")
    s.add_argument("--n", type=_positive_int, default=10_000)

    s = sub.add_parser("rotation", parents=[common])
    s.add_argument("--energies", default="-2.5:2.5:51")
    s.add_argument("--n", type=_positive_int, default=1_000_000)

    s = sub.add_parser("classify", parents=[common])
    s.add_argument("--energies", default="-2.5:2.5:11")
    s.add_argument("--eps-grid", default="0.01,0.02,0.05")
    s.add_argument("--n", type=_positive_int, default=20_000)

    for name in ("kam-reduce", "gap-bound"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--energy", type=float, default=None, help="gap edge energy")
        s.add_argument("--k", type=int, default=None, help="IDS gap label to locate")
        s.add_argument("--side", choices=("minus", "plus"), default="minus")
        s.add_argument("--r0", type=float, default=0.05)
        s.add_argument("--r", type=float, default=0.025)
        s.add_argument("--max-steps", type=_positive_int, default=30)
        s.add_argument("--eps-star", type=float, default=0.1)
        if name == "gap-bound":
            s.add_argument("--input", help="parabolic.json from kam-reduce")
            s.add_argument("--zeta", type=float, default=None)
            s.add_argument("--norm-x", type=float, default=None)
            s.add_argument("--R", type=float, default=0.5)
            s.add_argument("--kappa", type=float, default=0.2)
            s.add_argument("--mode", choices=("beta_form", "diophantine_form"), default="beta_form")
            s.add_argument("--tau", type=float, default=1.0)
            s.add_argument("--dio-horizon", type=_positive_int, default=10_000)

    s = sub.add_parser("duality-decay", parents=[common])
    s.add_argument("--n", type=_positive_int, default=401)
    s.add_argument("--theta", type=float, default=None, help="default: seeded non-resonant draw")
    s.add_argument("--which", default="center", help="'center', an eigenvalue index or E=<energy>")

    s = sub.add_parser("toda-drift", parents=[common])
    s.add_argument("--n", type=_positive_int, default=64)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--boundary", choices=("free", "periodic"), default="free")
    s.add_argument("--snapshot-every", type=int, default=0)
    return p


RUN_KEYS = {"precision": str, "threads": int, "seed": int, "output_dir": str}


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def load_config(path: str, parser, command: str) -> tuple[dict, dict]:
    """(run settings, command defaults) from an INI file, typed via the parser."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys name case-sensitive flags such as --T and --K
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError("config", str(exc)) from exc
    run = {}
    if cp.has_section("run"):
        for key, val in cp.items("run"):
            if key not in RUN_KEYS:
                raise ConfigError(f"run.{key}", "unknown key")
            try:
                run[key] = RUN_KEYS[key](val)
            except ValueError as exc:
                raise ConfigError(f"run.{key}", str(exc)) from exc
    cmd = {}
    if cp.has_section(command):
        sp = _subparser(parser, command)
        actions = {a.dest: a for a in sp._actions if a.dest != "help"}
        for key, val in cp.items(command):
            dest = key.replace("-", "_")
            if dest not in actions:
                raise ConfigError(f"{command}.{key}", "unknown key")
            conv = actions[dest].type or str
            try:
                cmd[dest] = conv(val)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{command}.{key}", str(exc)) from exc
            if actions[dest].choices is not None and cmd[dest] not in actions[dest].choices:
                raise ConfigError(f"{command}.{key}", f"must be one of {list(actions[dest].choices)}")
    return run, cmd


def resolve(argv=None):
    """Parse flags, fold in config and environment, return the final namespace."""
    parser = build_parser()
    args = parser.parse_args(argv)
    run = {}
    if args.config:
        run, cmd = load_config(args.config, parser, args.command)
        _subparser(parser, args.command).set_defaults(**cmd)
        args = parser.parse_args(argv)
    env = os.environ.get("QPSPEC_THREADS")
    threads = args.threads
    if threads is None and env:
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError("env.QPSPEC_THREADS", str(exc)) from exc
        if threads < 1:
            raise ConfigError("env.QPSPEC_THREADS", "must be >= 1")
    if threads is None:
        threads = run.get("threads", 1)
    args.threads = threads
    args.seed = args.seed if args.seed is not None else run.get("seed", 0)
    args.precision = args.precision or run.get("precision", "double")
    if args.precision not in ("double", "extended"):
        raise ConfigError("run.precision", "must be 'double' or 'extended'")
    args.output_dir = args.output_dir or run.get("output_dir", ".")
    return args


def _versions() -> dict:
    import mpmath
    import numba
    import scipy

    return {"qpspec": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__, "numba": numba.__version__}


def run(argv=None) -> int:
    t0 = time.perf_counter()
    try:
        args = resolve(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(args, out)
    status, code, error = "ok", 0, None
    try:
        COMMANDS[args.command](ctx)
    except CriterionNotMet as exc:
        status, code, error = "criterion_not_met", 2, str(exc)
    except ConfigError as exc:
        status, code, error = "error", 1, f"ConfigError: {exc}"
    except (QpspecError, ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        status, code, error = "error", 1, f"{type(exc).__name__}: {exc}"
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items())},
        "versions": _versions(),
        "timings": {"total_seconds": time.perf_counter() - t0},
        "status": status, "exit_code": code, "error": error,
        "outputs": ctx.files, "summary": ctx.jsonify(ctx.summary),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str) + "\n")
    if error:
        print(f"{args.command}: {error}", file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
