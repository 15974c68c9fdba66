"""Command-line front end: dataset I/O, fitting, simulation, and plot-data
emission.

Exit codes: 0 on success, 1 on I/O errors, 2 on validation/configuration
errors (the model-module error name is printed to stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluate
from .evaluate import SimConfig, SimResult, curve_rows, run_coverage
from .fitters import (
    FitMethod,
    NonintegrablePosterior,
    OptimizerNoBracket,
    fit,
)
from .density import NonconcaveAtMax
from .inference import random_effects
from .model import ModelError, PriorSpec, TwoLevelData

SEED_ENV = "SHRINKFIT_SEED"
_METHOD_CHOICES = [m.value for m in FitMethod]


class CliInputError(Exception):
    """Bad dataset contents or command arguments (exit code 2)."""


# ---------------------------------------------------------------------------
# Dataset CSV I/O


def read_dataset_csv(path) -> tuple[TwoLevelData, np.ndarray | None]:
    """Read a unit-level dataset: required columns y and V, optional
    covariates x1..xr, optional known means mu."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliInputError("parse error: empty file") from None
        rows = [row for row in reader if row]
    for required in ("y", "V"):
        if required not in header:
            raise CliInputError(f"parse error: missing required column {required!r}")
    x_names = []
    j = 1
    while f"x{j}" in header:
        x_names.append(f"x{j}")
        j += 1
    idx = {name: header.index(name) for name in header}
    if not rows:
        raise CliInputError("parse error: no data rows")

    def column(name: str) -> np.ndarray:
        try:
            return np.array([float(row[idx[name]]) for row in rows])
        except (ValueError, IndexError) as err:
            raise CliInputError(f"parse error in column {name!r}: {err}") from err

    y = column("y")
    V = column("V")
    X = np.column_stack([column(name) for name in x_names]) if x_names else None
    mu = column("mu") if "mu" in idx else None
    return TwoLevelData(y, V, X), mu


def write_dataset_csv(path, data: TwoLevelData, known_mu: np.ndarray | None = None) -> None:
    """Emit a dataset in the same schema read_dataset_csv accepts."""
    header = ["y", "V"] + [f"x{j + 1}" for j in range(data.r)]
    if known_mu is not None:
        header.append("mu")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.k):
            row = [repr(float(data.y[i])), repr(float(data.V[i]))]
            row += [repr(float(data.X[i, j])) for j in range(data.r)]
            if known_mu is not None:
                row.append(repr(float(known_mu[i])))
            writer.writerow(row)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else str(x) for x in row])


# ---------------------------------------------------------------------------
# fit


def _posterior_payload(shr, post) -> dict:
    return {
        "A_hat": shr.A_hat,
        "boundary": shr.boundary,
        "inv_info": shr.inv_info,
        "B_hat": list(map(float, shr.B_hat)),
        "v": list(map(float, shr.v)),
        "a1": None if shr.a1 is None else list(map(float, shr.a1)),
        "a0": None if shr.a0 is None else list(map(float, shr.a0)),
        "theta_hat": list(map(float, post.theta_hat)),
        "s2": list(map(float, post.s2)),
        "beta_hat": list(map(float, post.beta_hat)),
        "lo": list(map(float, post.lo)),
        "hi": list(map(float, post.hi)),
    }


def cmd_fit(args) -> int:
    data, mu = read_dataset_csv(args.input)
    prior = PriorSpec(c=args.c, known_mu=mu if data.r == 0 else None)
    methods = args.method or ["adm"]
    results = {}
    for name in methods:
        method = FitMethod(name)
        shr = fit(data, prior, method)
        post = random_effects(
            data, shr, z_star=args.z, known_mu=prior.known_mu
        )
        results[name] = _posterior_payload(shr, post)
    payload = {
        "schema": 1,
        "k": data.k,
        "r": data.r,
        "c": args.c,
        "z_star": args.z,
        "results": results,
    }
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _parse_grid(spec: str) -> tuple[float, ...]:
    """Grid syntax: either comma-separated values or start:stop:count."""
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            values = np.linspace(float(start), float(stop), int(count))
        else:
            values = np.array([float(tok) for tok in spec.split(",") if tok])
    except ValueError as err:
        raise CliInputError(f"bad grid {spec!r}: {err}") from err
    if values.size == 0:
        raise CliInputError(f"bad grid {spec!r}: empty")
    return tuple(float(v) for v in values)


def _parse_floats(spec: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in spec.split(",") if tok)
    except ValueError as err:
        raise CliInputError(f"bad {what} {spec!r}: {err}") from err


def _resolve_seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as err:
            raise CliInputError(f"bad {SEED_ENV}={env!r}: {err}") from err
    return args.seed


def _simulate_configs(args) -> list[SimConfig]:
    seed = _resolve_seed(args)
    methods = tuple(FitMethod(m) for m in args.method) if args.method else None
    if args.preset == "equal":
        ks = args.k or [4, 10, 20]
        grid = (
            _parse_grid(args.grid)
            if args.grid
            else evaluate.equal_variance_grid(args.grid_points or 100)
        )
        return [
            evaluate.equal_variance_config(
                k,
                seed=seed,
                reps=args.reps if args.reps is not None else 1000,
                grid=grid,
                methods=methods
                or (FitMethod.EXACT, FitMethod.ADM, FitMethod.MLE),
                z_star=args.z,
                c=args.c,
            )
            for k in ks
        ]
    if args.preset == "two-group":
        grid = (
            _parse_grid(args.grid)
            if args.grid
            else evaluate.two_group_grid(args.grid_points or 50)
        )
        return [
            evaluate.two_group_config(
                seed=seed,
                reps=args.reps if args.reps is not None else 100,
                grid=grid,
                methods=methods or (FitMethod.ADM,),
                z_star=args.z,
                c=args.c,
            )
        ]
    # explicit configuration
    missing = [
        flag
        for flag, val in [
            ("--k", args.k),
            ("--variances", args.variances),
            ("--grid", args.grid),
            ("--reps", args.reps),
        ]
        if not val
    ]
    if missing:
        raise CliInputError(
            "explicit simulation needs " + ", ".join(missing) + " (or use --preset)"
        )
    if len(args.k) != 1:
        raise CliInputError("explicit simulation takes exactly one --k")
    k = args.k[0]
    V = _parse_floats(args.variances, "variances")
    if len(V) == 1:
        V = V * k
    design = args.x
    if args.r is not None and design is None:
        if args.r not in (0, 1):
            raise CliInputError(
                "--r beyond 1 needs an explicit design; use the library API"
            )
        design = "none" if args.r == 0 else "intercept"
    design = design or "none"
    r = {"none": 0, "intercept": 1}[design]
    if args.r is not None and args.r != r:
        raise CliInputError(f"--r {args.r} contradicts --x {design}")
    return [
        SimConfig(
            k=k,
            r=r,
            V=V,
            X=design,
            beta_true=(0.0,) * r,
            grid=_parse_grid(args.grid),
            V0=args.v0,
            reps=args.reps,
            seed=seed,
            methods=methods or (FitMethod.ADM,),
            z_star=args.z,
            c=args.c,
        )
    ]


def _write_simulation_outputs(results: list[SimResult], outdir: Path) -> None:
    rows = [row for res in results for row in res.rows]
    _write_csv(
        outdir / "simulation.csv",
        evaluate._CSV_COLUMNS,
        [[getattr(r, c) for c in evaluate._CSV_COLUMNS] for r in rows],
    )
    blobs = [json.loads(res.to_json_bytes()) for res in results]
    payload = {"schema": 1, "results": blobs}
    (outdir / "simulation.json").write_bytes(
        (json.dumps(payload, indent=1, sort_keys=True) + "\n").encode()
    )


def _emit_plotdata(results: list[SimResult], outdir: Path) -> None:
    first = results[0].config
    two_group = first.r == 1 and len(set(first.V)) == 2
    if two_group:
        rows = [
            [r.b0, r.A, r.group, r.coverage, r.coverage_se, r.risk, r.boundary_rate]
            for res in results
            for r in res.rows
        ]
        _write_csv(
            outdir / "fig7_twogroup.csv",
            ["b0", "A", "group", "coverage", "coverage_se", "risk", "boundary_rate"],
            rows,
        )
        return
    ks = [res.config.k for res in results]
    t_grid = [0.25 * j for j in range(81)]  # T in [0, 20]
    curves = curve_rows(ks, t_grid, r=first.r, c=first.c)
    _write_csv(
        outdir / "fig2_shrinkage_curves.csv",
        ["k", "m", "T", "method", "B_hat"],
        [[c.k, c.m, c.T, c.method, c.B_hat] for c in curves],
    )
    _write_csv(
        outdir / "fig3_variance_curves.csv",
        ["k", "m", "method", "B_hat", "v"],
        [[c.k, c.m, c.method, c.B_hat, c.v] for c in curves],
    )
    sim_rows = [r for res in results for r in res.rows]
    _write_csv(
        outdir / "fig4_coverage.csv",
        ["k", "b0", "method", "coverage", "coverage_se"],
        [[r.k, r.b0, r.method, r.coverage, r.coverage_se] for r in sim_rows],
    )
    _write_csv(
        outdir / "fig5_coverage_risk.csv",
        ["k", "b0", "method", "coverage", "coverage_se", "risk"],
        [
            [r.k, r.b0, r.method, r.coverage, r.coverage_se, r.risk]
            for r in sim_rows
            if r.method != "mle"
        ],
    )


def cmd_simulate(args) -> int:
    configs = _simulate_configs(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    results = [run_coverage(cfg, threads=threads) for cfg in configs]
    _write_simulation_outputs(results, outdir)
    if args.emit_plotdata:
        _emit_plotdata(results, outdir)
    return 0


# ---------------------------------------------------------------------------
# curves


def cmd_curves(args) -> int:
    t_grid = _parse_grid(args.t_grid)
    if any(t < 0.0 for t in t_grid):
        raise CliInputError("t-grid values must be nonnegative")
    ks = args.k or [4, 10, 20]
    try:
        rows = curve_rows(ks, t_grid, r=args.r, c=args.c)
    except ValueError as err:
        raise CliInputError(str(err)) from err
    header = ["k", "r", "c", "m", "T", "method", "B_hat", "v"]
    body = [[r.k, r.r, r.c, r.m, r.T, r.method, r.B_hat, r.v] for r in rows]
    if args.out is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for row in body:
            writer.writerow([repr(x) if isinstance(x, float) else str(x) for x in row])
    else:
        _write_csv(args.out, header, body)
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shrinkfit",
        description="Fit two-level Normal models and reproduce their "
        "coverage/risk evaluations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a dataset CSV and write JSON results")
    p_fit.add_argument("input", help="CSV with columns y, V, optional x1..xr, mu")
    p_fit.add_argument(
        "--method", action="append", choices=_METHOD_CHOICES, help="repeatable"
    )
    p_fit.add_argument("--c", type=float, default=1.0, help="prior exponent (default 1)")
    p_fit.add_argument("--z", type=float, default=1.96, help="interval z* (default 1.96)")
    p_fit.add_argument("--out", default=None, help="output path (default stdout)")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run the coverage/risk simulation")
    p_sim.add_argument("--preset", choices=["equal", "two-group"], default=None)
    p_sim.add_argument("--k", action="append", type=int, help="units (repeatable)")
    p_sim.add_argument("--r", type=int, default=None, help="0 or 1 (intercept)")
    p_sim.add_argument("--variances", default=None, help="comma list (or one value)")
    p_sim.add_argument("--x", choices=["none", "intercept"], default=None)
    p_sim.add_argument("--grid", default=None, help="B0 values: list or start:stop:count")
    p_sim.add_argument("--grid-points", type=int, default=None, help="preset grid size")
    p_sim.add_argument("--reps", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=1, help=f"overridden by ${SEED_ENV}")
    p_sim.add_argument("--v0", type=float, default=1.0, help="reference variance")
    p_sim.add_argument(
        "--method", action="append", choices=_METHOD_CHOICES, help="repeatable"
    )
    p_sim.add_argument("--z", type=float, default=1.96)
    p_sim.add_argument("--c", type=float, default=1.0)
    p_sim.add_argument("--threads", type=int, default=None, help="default: all cores")
    p_sim.add_argument("--emit-plotdata", action="store_true")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_cur = sub.add_parser("curves", help="deterministic shrinkage/variance tables")
    p_cur.add_argument("--k", action="append", type=int, help="repeatable (default 4,10,20)")
    p_cur.add_argument("--r", type=int, default=0)
    p_cur.add_argument("--c", type=float, default=1.0)
    p_cur.add_argument("--t-grid", default="0:20:81", help="list or start:stop:count")
    p_cur.add_argument("--out", default=None, help="output path (default stdout)")
    p_cur.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ModelError,
        CliInputError,
        NonconcaveAtMax,
        OptimizerNoBracket,
        NonintegrablePosterior,
        ValueError,
    ) as err:
        name = type(err).__name__
        prefix = "" if isinstance(err, CliInputError) else f"{name}: "
        print(f"{prefix}{err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
