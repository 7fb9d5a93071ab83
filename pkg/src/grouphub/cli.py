"""Command-line interface.

Subcommands: simulate, fit, select, bootstrap, replicate, check, oracle.
Every command is a pure function of its input files, flags, and --seed, so
re-running reproduces outputs byte for byte.  Exit codes: 0 success,
2 usage/validation, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments, io, model, profile, select
from .em import FitConfig, fit_em, map_labels
from .errors import (
    AllRestartsFailed,
    GroupHubError,
    InvalidParams,
    InvalidSpec,
    NonFiniteObjective,
    ZeroProbabilityGroup,
)
from .model import ModelVariant

USAGE_ERRORS = (
    InvalidSpec,
    InvalidParams,
    model.NonBinaryEntry,
    model.EmptyGroupInfeasible,
    model.DimensionMismatch,
    model.NTooLarge,
    ValueError,
)
NUMERICAL_ERRORS = (AllRestartsFailed, NonFiniteObjective, ZeroProbabilityGroup)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _parse_lambda_grid(text: str) -> list[float]:
    """`start:step:end` inclusive grid, or a comma-separated list."""
    if ":" in text:
        start, step, end = (float(v) for v in text.split(":"))
        if step <= 0:
            raise InvalidSpec("lambda grid step must be positive")
        grid = []
        lam = start
        while lam <= end + 1e-12:
            grid.append(round(lam, 12))
            lam += step
        return grid
    return [float(v) for v in text.split(",") if v.strip()]


def _variant(text: str) -> ModelVariant:
    try:
        return ModelVariant(text)
    except ValueError:
        raise InvalidSpec(f"unknown variant {text!r}") from None


def _fit_config(args, seed) -> FitConfig:
    return FitConfig(
        max_iter=args.max_iter,
        rel_tol=args.rel_tol,
        num_restarts=args.restarts,
        seed=seed,
        prob_floor=args.prob_floor,
    )


def _mirror(args, csv_path, header, rows):
    if args.format == "json":
        io.mirror_table_json(Path(csv_path).with_suffix(".json"), header, rows)


def cmd_simulate(args) -> int:
    spec = experiments.ScenarioSpec(
        variant=_variant(args.variant),
        n_L=args.n_l,
        n=args.n,
        T=args.t,
        alpha=args.alpha,
        rho0=args.rho0,
        M=args.m,
        seed=args.seed,
    )
    params, v_sets = experiments.build_scenario(spec)
    data, z_star = model.generate(params, spec.T, np.random.SeedSequence(args.seed).spawn(1)[0])
    io.write_groups_csv(args.out_groups, data)
    truth = {
        "params": io.params_to_dict(params),
        "z_star": [int(v) for v in z_star.z],
        "v_sets": [list(v) for v in v_sets],
        "spec": {
            "variant": spec.variant.value,
            "n_L": spec.n_L,
            "n": spec.n,
            "T": spec.T,
            "alpha": spec.alpha,
            "rho0": spec.rho0,
            "M": spec.M,
        },
        "seed": args.seed,
    }
    Path(args.out_truth).write_text(json.dumps(truth, indent=2) + "\n")
    print(f"simulated T={spec.T} n={spec.n} variant={spec.variant.value} seed={args.seed}")
    return 0


def cmd_fit(args) -> int:
    data = io.read_groups_csv(args.data)
    variant = _variant(args.variant)
    report = model.validate_grouped_data(data, variant)
    if not report.ok:
        report.raise_first()
    if args.hub_set:
        hub_set = _parse_int_list(args.hub_set)
    elif args.hub_size:
        hub_set = tuple(range(1, args.hub_size + 1))
    else:
        raise InvalidSpec("one of --hub-set or --hub-size is required")
    result = fit_em(data, hub_set, variant, _fit_config(args, args.seed))
    io.write_fit_json(args.out, result)
    if args.posterior_out:
        io.write_matrix_csv(
            args.posterior_out,
            result.posterior.h,
            header=[f"c{int(v)}" for v in result.posterior.labels],
        )
    if args.labels_out:
        io.write_labels_csv(args.labels_out, map_labels(result.posterior))
    print(
        f"fit variant={variant.value} hub_set={list(hub_set)} "
        f"log_lik={result.log_lik:.6f} restart={result.restart_index}"
    )
    return 0


def _potential_set(args, n: int) -> tuple[int, ...]:
    if args.potential_set:
        return _parse_int_list(args.potential_set)
    if args.m:
        return tuple(range(1, args.m + 1))
    raise InvalidSpec("one of --potential-set or --m is required")


def cmd_select(args) -> int:
    data = io.read_groups_csv(args.data)
    potential = _potential_set(args, data.n)
    config = _fit_config(args, args.seed)
    if args.lambda_auto:
        grid = [float(v) for v in select.default_lambda_grid(data, potential, config)]
    elif args.lambda_grid:
        grid = _parse_lambda_grid(args.lambda_grid)
    else:
        raise InvalidSpec("one of --lambda-grid or --lambda-auto is required")
    path = select.lambda_path(data, potential, grid, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["lambda", "log_lik", "penalized_obj", "k", "AIC", "BIC", "selected_nodes", "chosen"]
    rows = []
    for i, entry in enumerate(path.entries):
        marks = ("AIC" if i == path.chosen_by_aic else "") + (
            "/BIC" if i == path.chosen_by_bic else ""
        )
        rows.append(
            [
                entry.lam,
                entry.fit.log_lik,
                entry.fit.penalized_objective,
                entry.k,
                entry.aic,
                entry.bic,
                ";".join(str(v) for v in entry.fit.selected_set),
                marks.strip("/"),
            ]
        )
    csv_path = out_dir / "selection_path.csv"
    io.write_table_csv(csv_path, header, rows)
    _mirror(args, csv_path, header, rows)
    for name, idx in (("chosen_aic.json", path.chosen_by_aic), ("chosen_bic.json", path.chosen_by_bic)):
        entry = path.entries[idx]
        io.write_fit_json(
            out_dir / name,
            entry.fit,
            extra={"selected_set": list(entry.fit.selected_set), "lambda": entry.lam},
        )
    print(
        f"selection path over {len(grid)} lambdas; "
        f"AIC -> {path.entries[path.chosen_by_aic].lam}, "
        f"BIC -> {path.entries[path.chosen_by_bic].lam}"
    )
    return 0


def cmd_check(args) -> int:
    try:
        params = io.read_params_json(args.params)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidSpec(f"malformed params file: {exc}") from exc
    candidates = _parse_int_list(args.candidates) if args.candidates else None
    report = model.check_identifiability(params, candidates)
    out = {
        "cond_i": report.cond_i,
        "cond_i_violations": [list(v) for v in report.cond_i_violations],
        "cond_ii": report.cond_ii,
        "cond_ii_violations": [list(v) for v in report.cond_ii_violations],
        "cond_iii": report.cond_iii,
        "cond_iii_violations": list(report.cond_iii_violations),
        "cond_iv_prime": report.cond_iv_prime,
        "cond_iv_prime_witness": report.cond_iv_prime_witness,
    }
    for name in ("cond_i", "cond_ii", "cond_iii", "cond_iv_prime"):
        value = out[name]
        state = "not checked" if value is None else ("ok" if value else "VIOLATED")
        print(f"{name}: {state}")
    if report.cond_i_violations:
        print("  cond_i witnesses (component, node):", list(report.cond_i_violations))
    if report.cond_ii_violations:
        print("  cond_ii witnesses (component pair):", list(report.cond_ii_violations))
    if report.cond_iii_violations:
        print("  cond_iii witnesses (component):", list(report.cond_iii_violations))
    if args.truth:
        truth = json.loads(Path(args.truth).read_text())
        z_star = np.asarray(truth["z_star"], dtype=np.int64)
        v_sets = [tuple(v) for v in truth["v_sets"]]
        constants = profile.AssumptionConstants(
            c_min=args.c_min,
            c_max=args.c_max,
            d=args.d,
            s_min=args.s_min,
            s_max=args.s_max,
            v=args.v,
            c0=args.c0,
        )
        assum = profile.check_assumptions(params, z_star, v_sets, constants)
        out["assumptions"] = assum.to_dict()
        for name in ("h1", "h2", "h3", "h4"):
            print(f"{name}: {'ok' if getattr(assum, name) else 'VIOLATED'}")
        print(f"tau: {assum.tau!r}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(out, indent=2) + "\n")
    return 0


def cmd_oracle(args) -> int:
    try:
        params = io.read_params_json(args.params)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidSpec(f"malformed params file: {exc}") from exc
    if args.params2:
        params2 = io.read_params_json(args.params2)
        tv = model.tv_distance(model.enumerate_pmf(params), model.enumerate_pmf(params2))
        print(f"tv_distance: {tv:.15f}")
        return 0
    table = model.enumerate_pmf(params)
    if args.out:
        header = [f"v{j}" for j in range(1, params.n + 1)] + ["prob"]
        rows = []
        for idx in range(2**params.n):
            bits = [(idx >> j) & 1 for j in range(params.n)]
            rows.append(bits + [float(table.probs[idx])])
        io.write_table_csv(args.out, header, rows)
        _mirror(args, args.out, header, rows)
    print(f"pmf_sum: {float(table.probs.sum()):.15f}")
    return 0


def _parse_cell(text: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        for key in ("nL", "n", "T", "M"):
            if part.startswith(key) and part[len(key) :].isdigit():
                out[key] = int(part[len(key) :])
                break
        else:
            raise InvalidSpec(f"bad cell component {part!r} (want e.g. nL10,n100,T500)")
    return out


def cmd_replicate(args) -> int:
    cell = _parse_cell(args.cell)
    if "nL" not in cell or "n" not in cell or "T" not in cell:
        raise InvalidSpec("cell must contain nL, n and T")
    threads = args.threads
    if args.table in (1, 2):
        variant = ModelVariant.ASYMMETRIC if args.table == 1 else ModelVariant.WITH_NULL
        R = 1000 if args.paper_scale else args.r
        spec = experiments.ScenarioSpec(
            variant=variant, n_L=cell["nL"], n=cell["n"], T=cell["T"], seed=args.seed
        )
        summary = experiments.run_estimation_replicates(
            spec, R, args.seed, threads=threads
        )
        header = [
            "variant", "n_L", "n", "T", "R",
            "mislabel", "se_mislabel", "rmse", "se_rmse", "rmse_star", "se_rmse_star",
        ]
        rows = [[
            variant.value, cell["nL"], cell["n"], cell["T"], R,
            summary.mean_mislabel, summary.se_mislabel,
            summary.mean_rmse, summary.se_rmse,
            summary.mean_rmse_star, summary.se_rmse_star,
        ]]
    else:
        if "M" not in cell:
            raise InvalidSpec("table 3 cells need an M component, e.g. nL10,n500,T2000,M80")
        R = 1000 if args.paper_scale else args.r
        grid = (
            _parse_lambda_grid(args.lambda_grid)
            if args.lambda_grid
            else [float(v) for v in np.geomspace(0.003, 0.1, 8)]
        )
        spec = experiments.ScenarioSpec(
            variant=ModelVariant.WITH_NULL,
            n_L=cell["nL"], n=cell["n"], T=cell["T"], M=cell["M"], seed=args.seed,
        )
        summary = experiments.run_selection_replicates(
            spec, grid, R, args.seed, threads=threads
        )
        header = [
            "n_L", "n", "T", "M", "R", "criterion", "TPR", "FPR", "se_TPR", "se_FPR",
        ]
        rows = [
            [cell["nL"], cell["n"], cell["T"], cell["M"], R, "AIC",
             summary.tpr_aic, summary.fpr_aic, summary.se_tpr_aic, summary.se_fpr_aic],
            [cell["nL"], cell["n"], cell["T"], cell["M"], R, "BIC",
             summary.tpr_bic, summary.fpr_bic, summary.se_tpr_bic, summary.se_fpr_bic],
        ]
    io.write_table_csv(args.out, header, rows)
    _mirror(args, args.out, header, rows)
    io.write_provenance(
        Path(args.out).with_suffix(".provenance.json"),
        args.seed,
        {"table": args.table, "cell": args.cell, "R": R, "threads": threads},
    )
    print(f"table {args.table} cell {args.cell}: R={R} written to {args.out}")
    return 0


def cmd_bootstrap(args) -> int:
    data = io.read_groups_csv(args.data)
    potential = _potential_set(args, data.n)
    grid = _parse_lambda_grid(args.lambda_grid)
    config = _fit_config(args, args.seed)
    table = experiments.bootstrap_stability(
        data, potential, grid, args.b, args.seed, config, threads=args.threads
    )
    header = ["lambda"] + [f"v{v}" for v in table.nodes]
    rows = [
        [lam] + [float(p) for p in table.proportions[i]]
        for i, lam in enumerate(table.lambdas)
    ]
    io.write_table_csv(args.out, header, rows)
    _mirror(args, args.out, header, rows)
    print(f"bootstrap B={table.B} over {len(table.lambdas)} lambdas written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grouphub",
        description="Latent hub-network inference from grouped co-occurrence data",
    )
    parser.add_argument("--seed", type=int, default=42, help="global RNG seed (default 42)")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker-parallelism cap (default: GROUPHUB_THREADS or logical cores); "
        "results do not depend on it",
    )
    parser.add_argument("--format", choices=["csv", "json"], default="csv",
                        help="json additionally mirrors every CSV output as JSON")
    # the same globals are accepted after the subcommand; only explicit
    # occurrences there override the pre-command values
    late = argparse.ArgumentParser(add_help=False)
    late.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    late.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    late.add_argument("--format", choices=["csv", "json"], default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        return sub.add_parser(name, parents=[late], **kwargs)

    p = add_parser("simulate", help="draw a scenario and write groups CSV + truth JSON")
    p.add_argument("--variant", required=True, choices=[v.value for v in ModelVariant])
    p.add_argument("--n-l", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--rho0", type=float, default=0.2)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--out-groups", required=True)
    p.add_argument("--out-truth", required=True)
    p.set_defaults(func=cmd_simulate)

    p = add_parser("fit", help="EM fit with a known hub set")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", required=True, choices=[v.value for v in ModelVariant])
    p.add_argument("--hub-set", help="comma-separated 1-based node ids")
    p.add_argument("--hub-size", type=int, help="use hub set {1..K}")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--prob-floor", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.add_argument("--posterior-out")
    p.add_argument("--labels-out")
    p.set_defaults(func=cmd_fit)

    p = add_parser("select", help="penalized hub-set selection over a lambda grid")
    p.add_argument("--data", required=True)
    p.add_argument("--potential-set", help="comma-separated 1-based node ids")
    p.add_argument("--m", type=int, help="use potential set {1..M}")
    p.add_argument("--lambda-grid", help="start:step:end or comma-separated values")
    p.add_argument("--lambda-auto", action="store_true",
                   help="geometric default grid up to the extinction point")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--rel-tol", type=float, default=1e-7)
    p.add_argument("--prob-floor", type=float, default=1e-10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_select)

    p = add_parser("check", help="identifiability (and optional assumption) report")
    p.add_argument("--params", required=True)
    p.add_argument("--candidates", help="pure-follower candidate node ids")
    p.add_argument("--truth", help="truth JSON from simulate (enables the assumption report)")
    p.add_argument("--c-min", type=float, default=0.5)
    p.add_argument("--c-max", type=float, default=2.0)
    p.add_argument("--d", type=float, default=0.4)
    p.add_argument("--s-min", type=float, default=1e-9)
    p.add_argument("--s-max", type=float, default=1.0)
    p.add_argument("--v", type=float, default=0.5)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_check)

    p = add_parser("oracle", help="exact pmf enumeration or a total-variation distance")
    p.add_argument("--params", required=True)
    p.add_argument("--params2")
    p.add_argument("--out", help="pmf CSV path (single-params mode)")
    p.set_defaults(func=cmd_oracle)

    p = add_parser("replicate", help="reproduce a benchmark-table cell")
    p.add_argument("--table", type=int, required=True, choices=[1, 2, 3])
    p.add_argument("--cell", required=True, help="e.g. nL10,n100,T500 or nL10,n500,T2000,M80")
    p.add_argument("--r", type=int, default=200)
    p.add_argument("--paper-scale", action="store_true", help="R=1000")
    p.add_argument("--lambda-grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replicate)

    p = add_parser("bootstrap", help="selection-stability proportions over resamples")
    p.add_argument("--data", required=True)
    p.add_argument("--potential-set")
    p.add_argument("--m", type=int)
    p.add_argument("--lambda-grid", required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--rel-tol", type=float, default=1e-7)
    p.add_argument("--prob-floor", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bootstrap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        env = os.environ.get("GROUPHUB_THREADS")
        args.threads = int(env) if env else (os.cpu_count() or 1)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except GroupHubError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
