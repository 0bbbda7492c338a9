"""Command-line front end: ``generate``, ``solve``, ``extract``, ``eval``, ``bench``.

Every command accepts ``--config PATH`` pointing to an INI file with one
section per command (``[solve]``, ...).  Keys are flag names without the
leading dashes; command-line flags override the file.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .extraction import ExtractionError, extract
from .measures import DiscreteMeasure, generate_synthetic, min_separation, observe
from .metrics import FLAT_NORM_GATE, flat_norm, jaccard, match_supports, support_relative_error
from .operators import (
    build_dirichlet,
    build_foveation,
    build_gaussian,
    build_subsampled,
    gaussian_coefficients,
    gaussian_profile,
)
from .solver import (
    TRACE_COLUMNS,
    LowRankState,
    Problem,
    SolverConfig,
    ffw_solve,
    state_certificate,
    toeplitz_residual,
)

log = logging.getLogger("offgrid_sr")

KERNELS = ("dirichlet", "gaussian", "subsampled-gaussian", "foveation")


class CLIError(Exception):
    def __init__(self, msg, code=1):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- operators

def operator_spec(args) -> dict:
    return {
        "kernel": args.kernel,
        "fc": int(args.fc),
        "d": int(args.d),
        "sigma": float(args.sigma),
        "grid": int(args.grid),
        "q": int(args.q) if args.q else None,
        "fov_gain": float(args.fov_gain),
    }


def build_operator(spec: dict):
    """Operator from a kernel spec as recorded in a manifest."""
    kind, fc, d = spec["kernel"], int(spec["fc"]), int(spec["d"])
    sigma = float(spec.get("sigma", 0.05))
    if kind == "dirichlet":
        return build_dirichlet(fc, d)
    if kind == "gaussian":
        return build_gaussian(fc, d, sigma)
    if kind == "subsampled-gaussian":
        return build_subsampled(fc, d, int(spec["grid"]), gaussian_coefficients(fc, d, sigma), spec.get("q"))
    if kind == "foveation":
        gain = float(spec.get("fov_gain", 1.0))

        def width(x):
            delta = np.abs(x - 0.5)
            dist = np.sqrt(np.sum(np.minimum(delta, 1 - delta) ** 2, axis=1))
            return sigma * (1.0 + gain * dist)

        return build_foveation(fc, d, int(spec["grid"]), gaussian_profile, width)
    raise CLIError(f"unknown kernel {kind!r}; choose one of {', '.join(KERNELS)}")


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    out = Path(args.out)
    spec = operator_spec(args)
    op = build_operator(spec)
    m0 = generate_synthetic(args.r, args.d, args.amplitudes, args.seed,
                            args.min_sep if args.min_sep > 0 else None)
    y0 = observe(m0, op, 0.0)
    y = observe(m0, op, args.noise, args.seed)
    ratio = float(np.linalg.norm(y - y0) / np.linalg.norm(y0)) if np.any(y0) else 0.0
    io.write_measure_csv(out / "measure.csv", m0)
    io.write_observation_csv(out / "observation.csv", y)
    manifest = {
        "seed": args.seed,
        "noise_level": args.noise,
        "noise_ratio": ratio,
        "r": args.r,
        "amplitudes": args.amplitudes,
        "min_separation": min_separation(m0) if len(m0) > 1 else None,
        "operator": spec,
        "files": {"measure": "measure.csv", "observation": "observation.csv"},
    }
    io.write_json(out / "manifest.json", manifest)
    print(f"wrote {out / 'measure.csv'}, {out / 'observation.csv'}, {out / 'manifest.json'}")
    return 0


# ---------------------------------------------------------------- solve

def _load_problem(indir: Path, lambda0: float, level: int | None):
    manifest = io.read_json(indir / "manifest.json")
    op = build_operator(manifest["operator"])
    y = io.read_observation_csv(indir / manifest["files"]["observation"])
    try:
        prob = Problem.from_lambda0(op, y, lambda0, level)
    except ValueError as exc:
        raise CLIError(f"invalid problem: {exc}") from exc
    return manifest, prob


def solver_config(args, fc: int) -> SolverConfig:
    return SolverConfig(
        fc=fc,
        level=args.level or None,
        lambda0=args.lambda0,
        rho=args.rho,
        eps_stop=args.eps,
        power_tol=args.power_tol,
        power_maxit=args.power_maxit,
        bfgs_tol=args.bfgs_tol,
        bfgs_maxit=args.bfgs_maxit,
        max_outer_iters=args.max_outer,
        seed=args.seed,
    )


def cmd_solve(args) -> int:
    indir = Path(args.input)
    out = Path(args.out or args.input)
    fc = int(io.read_json(indir / "manifest.json")["operator"]["fc"])
    try:
        cfg = solver_config(args, fc)
    except ValueError as exc:
        raise CLIError(f"invalid solver settings: {exc}") from exc
    _, prob = _load_problem(indir, args.lambda0, cfg.level)
    state, trace = ffw_solve(prob, cfg)
    io.write_state(out / "state.bin", state.U)
    if args.state_csv:
        io.write_state_csv(out / "state.csv", state.U)
    rows = []
    for r in trace.rows:
        wall = r["wall_ms"] if args.wall_clock == "on" else 0.0
        rows.append([r["iter"], float(r["objective"]), float(r["lambda1"]), r["rank"], r["fft_calls"], float(wall)])
    io.write_rows_csv(out / "trace.csv", TRACE_COLUMNS, rows)
    summary = {
        "objective": float(state.objective),
        "rank": state.rank(),
        "columns": state.ncols,
        "iterations": trace.total_iterations,
        "productive_iterations": trace.productive_iterations,
        "status": trace.status,
        "fft_calls": trace.fft_calls,
        "lambda": prob.lam,
        "lambda0": cfg.lambda0,
        "rho": cfg.rho,
        "level": cfg.level,
        "seed": cfg.seed,
        "certificate_sup": state_certificate(state, prob),
        "toeplitz_residual": toeplitz_residual(state, prob),
        "flags": trace.flags,
        "config": vars(cfg),
    }
    io.write_json(out / "summary.json", summary)
    print(f"status={trace.status} rank={summary['rank']} objective={summary['objective']:.17g} "
          f"iterations={trace.total_iterations} fft_calls={trace.fft_calls}")
    for flag in trace.flags:
        print(f"warning: {flag}", file=sys.stderr)
    if trace.status == "max_outer":
        print("error: solver stopped at the outer-iteration cap before converging", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------- extract

def cmd_extract(args) -> int:
    indir = Path(args.input)
    out = Path(args.out or args.input)
    summary = io.read_json(indir / "summary.json")
    manifest = io.read_json(indir / "manifest.json")
    op = build_operator(manifest["operator"])
    y = io.read_observation_csv(indir / manifest["files"]["observation"])
    prob = Problem(op, y, summary["lambda"], summary["level"])
    U = io.read_state(indir / "state.bin")
    state = LowRankState(U)
    try:
        res = extract(state, prob, seed=args.seed, mode=args.mode)
    except ExtractionError as exc:
        raise CLIError(f"extraction failed: {exc} (try a stricter rank truncation or a larger level)") from exc
    io.write_measure_csv(out / "recovered.csv", res.measure)
    diag = res.diagnostics()
    diag["certificate_sup"] = state_certificate(state, prob)
    diag["mode"] = args.mode
    diag["seed"] = args.seed
    io.write_json(out / "recovered.json", diag)
    print(f"atoms={len(res.measure)} flat={res.flat} residual={res.residual:.17g} "
          f"certificate_sup={diag['certificate_sup']:.17g}")
    return 0


# ---------------------------------------------------------------- eval

def evaluate(truth: DiscreteMeasure, rec: DiscreteMeasure, delta: float) -> list:
    rows = []
    match = match_supports(truth, rec, delta)
    rows.append(["jaccard", jaccard(truth, rec, delta), delta, f"matched={len(match)}"])
    try:
        sre = support_relative_error(truth, rec, delta)
        rows.append(["support_relative_error", sre, delta, ""])
    except ValueError as exc:
        rows.append(["support_relative_error", float("nan"), delta, str(exc)])
    union = len(truth - rec)
    if union <= FLAT_NORM_GATE:
        rows.append(["flat_norm", flat_norm(truth, rec), float("nan"), f"union={union}"])
    else:
        rows.append(["flat_norm", float("nan"), float("nan"), f"union {union} above gate {FLAT_NORM_GATE}"])
    rows.append(["atoms_truth", float(len(truth)), float("nan"), ""])
    rows.append(["atoms_recovered", float(len(rec)), float("nan"), ""])
    return rows


def cmd_eval(args) -> int:
    truth = io.read_measure_csv(args.truth)
    rec = io.read_measure_csv(args.recovered)
    if truth.dim != rec.dim:
        raise CLIError("measures have different dimensions")
    rows = evaluate(truth, rec, args.delta)
    io.write_rows_csv(args.out, ("metric", "value", "delta", "notes"), rows)
    for r in rows:
        print(f"{r[0]}={r[1]:.17g}")
    return 0


# ---------------------------------------------------------------- bench

def _trial(task: dict) -> dict:
    """One isolated solve; returns a result record or an error record."""
    try:
        op = build_dirichlet(task["fc"], task["d"])
        min_sep = task.get("min_sep")
        m0 = generate_synthetic(task["r"], task["d"], task["amplitudes"], task["seed"], min_sep)
        y = observe(m0, op, task["noise"], task["seed"])
        prob = Problem.from_lambda0(op, y, task["lambda0"])
        cfg = SolverConfig(fc=task["fc"], lambda0=task["lambda0"], rho=task["rho"], seed=task["seed"],
                           max_outer_iters=task["max_outer"])
        state, trace = ffw_solve(prob, cfg)
        out = {
            "ok": True,
            "productive": trace.productive_iterations,
            "total": trace.total_iterations,
            "rank": state.rank(),
            "separation": min_separation(m0) if len(m0) > 1 else math.inf,
        }
        if task.get("extract"):
            res = extract(state, prob, seed=task["seed"])
            out["jaccard"] = jaccard(m0, res.measure, 1e-2)
        return out
    except Exception as exc:  # per-trial failures are counted, not fatal
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _run_tasks(tasks: list, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_trial, tasks))
    return [_trial(t) for t in tasks]


def _floats(s: str) -> list:
    return [float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _ints(s: str) -> list:
    out = []
    for part in s.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def cmd_bench(args) -> int:
    out = Path(args.out)
    jobs = io.thread_cap(args.jobs)
    seeds = list(range(args.seed, args.seed + args.seeds))
    experiments = ("iterations", "rank", "grid") if args.experiment == "all" else (args.experiment,)
    base = {"d": 1, "fc": args.fc, "noise": args.noise, "max_outer": args.max_outer}
    failures_total = 0

    def report(failed):
        for rec in failed:
            log.warning("trial failed: %s", rec["error"])

    if "iterations" in experiments:
        cells, tasks = [], []
        sep = 1.0 / args.fc
        for r in _ints(args.r_list):
            for s in seeds:
                t = dict(base, r=r, seed=s, amplitudes="signed", lambda0=args.lambda0, rho=args.rho)
                if args.separation == "separated":
                    t["min_sep"] = sep
                tasks.append(t)
                cells.append(r)
        results = _run_tasks(tasks, jobs)
        rows = []
        for r in _ints(args.r_list):
            recs = [res for c, res in zip(cells, results) if c == r]
            failed = [x for x in recs if not x["ok"]]
            report(failed)
            failures_total += len(failed)
            good = [x for x in recs if x["ok"]]
            for stratum in ("separated", "clustered"):
                sel = [x for x in good if (x["separation"] > sep) == (stratum == "separated")]
                if not sel:
                    continue
                prod = np.array([x["productive"] for x in sel], float)
                rows.append([r, stratum, len(sel), len(failed), float(prod.mean()),
                             float(np.mean([x["total"] for x in sel])), float(np.mean(prod == r))])
        io.write_rows_csv(out / "iterations.csv",
                          ("r", "stratum", "trials", "failures", "mean_iterations",
                           "mean_total_iterations", "exact_fraction"), rows)

    if "rank" in experiments:
        rhos = _floats(args.rho_list)
        tasks = [dict(base, fc=args.rank_fc, r=args.rank_r, seed=s, amplitudes="positive",
                      lambda0=args.lambda0, rho=rho, min_sep=1.0 / args.rank_fc)
                 for rho in rhos for s in seeds]
        results = _run_tasks(tasks, jobs)
        rows = []
        for i, rho in enumerate(rhos):
            recs = results[i * len(seeds):(i + 1) * len(seeds)]
            failed = [x for x in recs if not x["ok"]]
            report(failed)
            failures_total += len(failed)
            good = [x["rank"] for x in recs if x["ok"]]
            rows.append([float(rho), len(good), len(failed), float(np.mean(good)) if good else float("nan")])
        io.write_rows_csv(out / "rank.csv", ("rho", "trials", "failures", "mean_rank"), rows)

    if "grid" in experiments:
        lams, rhos = _floats(args.lambda0_list), _floats(args.rho_list)
        cells = [(lam, rho) for lam in lams for rho in rhos]
        tasks = [dict(base, r=args.grid_r, seed=s, amplitudes="signed", lambda0=lam, rho=rho,
                      min_sep=1.0 / args.fc, extract=True)
                 for lam, rho in cells for s in seeds]
        results = _run_tasks(tasks, jobs)
        rows = []
        for i, (lam, rho) in enumerate(cells):
            recs = results[i * len(seeds):(i + 1) * len(seeds)]
            failed = [x for x in recs if not x["ok"]]
            report(failed)
            failures_total += len(failed)
            good = [x["jaccard"] for x in recs if x["ok"]]
            rows.append([float(lam), float(rho), len(good), len(failed),
                         float(np.mean(good)) if good else float("nan")])
        io.write_rows_csv(out / "grid.csv", ("lambda0", "rho", "trials", "failures", "mean_jaccard"), rows)

    print(f"bench done: experiments={','.join(experiments)} failures={failures_total} -> {out}")
    return 0


# ---------------------------------------------------------------- parser

def _solver_flags(p):
    p.add_argument("--lambda0", type=float, default=2e-3)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--level", type=int, default=0, help="relaxation order (0: use fc)")
    p.add_argument("--eps", type=float, default=1e-8, help="objective-decrease stopping tolerance")
    p.add_argument("--power-tol", type=float, default=1e-8)
    p.add_argument("--power-maxit", type=int, default=2000)
    p.add_argument("--bfgs-tol", type=float, default=1e-11)
    p.add_argument("--bfgs-maxit", type=int, default=500)
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="offgrid-sr", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic measure and its observation")
    g.add_argument("--config")
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--r", type=int, default=3)
    g.add_argument("--fc", type=int, default=15)
    g.add_argument("--kernel", choices=KERNELS, default="dirichlet")
    g.add_argument("--sigma", type=float, default=0.05)
    g.add_argument("--grid", type=int, default=32, help="grid side L for sampled kernels")
    g.add_argument("--q", type=int, default=0, help="upsampling factor override (0: automatic)")
    g.add_argument("--fov-gain", type=float, default=1.0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--amplitudes", choices=("signed", "positive"), default="signed")
    g.add_argument("--min-sep", type=float, default=0.0)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run the Frank-Wolfe solver on a generated instance")
    s.add_argument("--config")
    s.add_argument("--input", default=".", help="directory holding manifest.json and the observation")
    s.add_argument("--out", default=None, help="output directory (default: input)")
    _solver_flags(s)
    s.add_argument("--state-csv", type=int, choices=(0, 1), default=0, help="also write a CSV dump")
    s.add_argument("--wall-clock", choices=("on", "off"), default="on",
                   help="'off' writes wall_ms as 0 for byte-reproducible traces")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("extract", help="recover atoms from a solver state")
    e.add_argument("--config")
    e.add_argument("--input", default=".")
    e.add_argument("--out", default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--mode", choices=("lsq", "debiased"), default="lsq")
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("eval", help="compare a recovered measure with the ground truth")
    v.add_argument("--config")
    v.add_argument("--truth", required=False, default="measure.csv")
    v.add_argument("--recovered", default="recovered.csv")
    v.add_argument("--delta", type=float, default=1e-2)
    v.add_argument("--out", default="metrics.csv")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="parameter sweeps producing plot-ready CSVs")
    b.add_argument("--config")
    b.add_argument("--experiment", choices=("iterations", "rank", "grid", "all"), default="iterations")
    b.add_argument("--r-list", default="1..5")
    b.add_argument("--rho-list", default="0.1,1,10,100,1000")
    b.add_argument("--lambda0-list", default="1e-3,2e-3,5e-3")
    b.add_argument("--seeds", type=int, default=20)
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--fc", type=int, default=15)
    b.add_argument("--rank-fc", type=int, default=17)
    b.add_argument("--rank-r", type=int, default=3)
    b.add_argument("--grid-r", type=int, default=3)
    b.add_argument("--noise", type=float, default=1e-4)
    b.add_argument("--lambda0", type=float, default=2e-3)
    b.add_argument("--rho", type=float, default=1.0)
    b.add_argument("--separation", choices=("separated", "random"), default="separated")
    b.add_argument("--max-outer", type=int, default=50)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", default="bench")
    b.set_defaults(func=cmd_bench)
    return parser


def _config_argv(path: str, command: str) -> list:
    """Turn an INI section into flag arguments placed before the real ones."""
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise CLIError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    if not cp.has_section(command):
        return []
    argv = []
    for key, value in cp.items(command):
        if key == "config":
            continue
        argv += ["--" + key.replace("_", "-"), value]
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            # config values first, so explicit flags (parsed later) win
            idx = argv.index(args.command)
            extra = _config_argv(args.config, args.command)
            args = parser.parse_args(argv[: idx + 1] + extra + argv[idx + 1:])
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
