"""Command-line front door.

Subcommands: simulate, compare, report, bounds, lowerbound, lemmas, ingest,
advise (interactive line protocol), serve.

Machine-readable outputs carry a ``schema`` field and serialize floats with
17 significant digits so repeated runs with the same seed are byte-identical
and round-trip exactly.  Exit codes: 0 success, 1 domain error, 2 usage
error.  The environment variable ``NEYMAN_SEED`` overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__, data as data_mod
from .bounds import (
    ThreePointDist,
    expectation_ratio_bound,
    kl_three_point,
    limit_ratio_bound,
    lower_bound_instance,
    multi_stage_ratio_bound,
    three_point_moments,
    two_stage_ratio_bound,
)
from .designs import (
    DesignConfig,
    advance,
    finalize,
    half_half_config,
    init_design,
    multi_stage_config,
    two_stage_config,
)
from .errors import NeymanError
from .montecarlo import (
    GaussianPopulation,
    Population,
    ScaledBoundedPopulation,
    ThreePointPopulation,
    bound_violation_rate,
    compare_designs,
    population_from_json_dict,
    run_batch,
)
from .oracle import lemma_grid_check, lemma_ids
from .tuning import full_betas, geometric_schedule, multi_stage_log_schedule

SCHEMA = "neyman.v1"

# Simulation-study tuning: beta vectors bundled for the desk-scale
# reproduction (two-stage uses a single multiplier).
STUDY_BETAS: dict[int, tuple[float, ...]] = {
    2: (10.0,),
    3: (20.0, 5.0, 1.0),
    4: (30.0, 10.0, 3.0, 1.0),
    5: (60.0, 20.0, 8.0, 3.0, 1.0),
}


# -- serialization ------------------------------------------------------------


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps17(obj) -> str:
    """JSON with floats at 17 significant digits (exact round-trip)."""
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps17(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}:{dumps17(v)}" for k, v in obj.items())
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (np.floating,)):
        return _format_float(float(obj))
    if isinstance(obj, (np.integer,)):
        return json.dumps(int(obj))
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".17g")
    return str(value)


def emit_rows(rows: list[dict], fmt: str, out) -> None:
    """Rows to json/csv/table; every row shares the key order of the first."""
    if not rows:
        return
    if fmt == "json":
        out.write(dumps17(rows) + "\n")
        return
    keys = list(rows[0].keys())
    if fmt == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(keys)
        for row in rows:
            writer.writerow([_cell(row.get(k, "")) for k in keys])
        return
    widths = {
        k: max(len(k), *(len(_cell(r.get(k, ""))) for r in rows)) for k in keys
    }
    out.write("  ".join(k.ljust(widths[k]) for k in keys).rstrip() + "\n")
    for row in rows:
        out.write(
            "  ".join(_cell(row.get(k, "")).ljust(widths[k]) for k in keys).rstrip()
            + "\n"
        )


# -- flag parsing helpers ------------------------------------------------------


def _parse_kv(spec: str) -> dict[str, str]:
    out: dict[str, str] = {}
    if not spec:
        return out
    for part in spec.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_population(spec: str) -> Population:
    """Population specs: gaussian:rho=2 | gaussian:sigma1=..,sigma0=.. |
    three_point:p=.. | three_point:p1=..,p0=.. | scaled_bounded:p=..,scale1=..
    | table1[:n=40,seed=0] | empirical:path=arrays.json
    """
    name, _, rest = spec.partition(":")
    kv = _parse_kv(rest)
    if name == "gaussian":
        if "rho" in kv:
            return GaussianPopulation(sigma1=float(kv["rho"]), sigma0=1.0)
        return GaussianPopulation(
            sigma1=float(kv["sigma1"]),
            sigma0=float(kv["sigma0"]),
            mean1=float(kv.get("mean1", 0.0)),
            mean0=float(kv.get("mean0", 0.0)),
        )
    if name == "three_point":
        p1 = float(kv.get("p1", kv.get("p", 1.0 / 3.0)))
        p0 = float(kv.get("p0", kv.get("p", 1.0 / 3.0)))
        return ThreePointPopulation(
            ThreePointDist(p1, 1.0 - 2.0 * p1, p1),
            ThreePointDist(p0, 1.0 - 2.0 * p0, p0),
        )
    if name == "scaled_bounded":
        return ScaledBoundedPopulation(
            p=float(kv.get("p", 1.0 / 3.0)),
            scale1=float(kv.get("scale1", 1.0)),
            scale0=float(kv.get("scale0", 1.0)),
        )
    if name == "table1":
        return data_mod.table1_population(
            int(kv.get("n", 40)), int(kv.get("seed", 0))
        )
    if name == "empirical":
        with open(kv["path"]) as handle:
            arrays = json.load(handle)
        return population_from_json_dict({"kind": "empirical", **arrays})
    raise ValueError(f"unknown population {name!r}")


def _betas_from_args(args, M: int) -> tuple[float, ...]:
    if args.betas:
        return full_betas(tuple(float(b) for b in args.betas.split(",")), M)
    if args.schedule == "study":
        if M not in STUDY_BETAS:
            raise ValueError(f"study schedule covers M in {sorted(STUDY_BETAS)}, got {M}")
        return full_betas(STUDY_BETAS[M], M)
    if args.schedule == "multi_stage_log":
        return multi_stage_log_schedule(M, args.T, args.C).betas
    return geometric_schedule(M).betas


def design_from_args(args) -> DesignConfig:
    name = args.design.replace("-", "_")
    if name in ("half_half", "halfhalf"):
        return half_half_config(args.T)
    if name in ("two_stage", "twostage", "2stage"):
        beta = args.beta
        if beta is None:
            beta = STUDY_BETAS[2][0] if args.schedule == "study" else 1.0
        return two_stage_config(args.T, beta, args.min_arm_obs)
    if name in ("m_stage", "mstage", "multi_stage"):
        return multi_stage_config(args.T, args.M, _betas_from_args(args, args.M),
                                  args.min_arm_obs)
    raise ValueError(f"unknown design {args.design!r}")


def _resolve_seed(args) -> int:
    env = os.environ.get("NEYMAN_SEED")
    if env is not None:
        return int(env)
    return args.seed


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args, out) -> int:
    design = design_from_args(args)
    pop = parse_population(args.pop)
    summary = run_batch(design, pop, _resolve_seed(args), args.n, args.workers)
    payload = {"schema": SCHEMA, "seed": _resolve_seed(args), **summary.to_json_dict()}
    if args.bound is not None:
        payload["bound"] = args.bound
        payload["bound_violation_rate"] = bound_violation_rate(summary, args.bound)
    if args.format == "json":
        out.write(dumps17(payload) + "\n")
    else:
        flat = {k: v for k, v in payload.items() if not isinstance(v, dict)}
        emit_rows([flat], args.format, out)
    return 0


def _study_designs(T: int, m_values: list[int]) -> list[DesignConfig]:
    designs: list[DesignConfig] = [half_half_config(T)]
    for M in m_values:
        if M == 2:
            designs.append(two_stage_config(T, STUDY_BETAS[2][0]))
        else:
            designs.append(multi_stage_config(T, M, full_betas(STUDY_BETAS[M], M)))
    return designs


def cmd_compare(args, out) -> int:
    seed = _resolve_seed(args)
    pop = parse_population(args.pop)
    m_values = [int(v) for v in args.M_list.split(",")]
    if args.schedule == "study":
        designs = _study_designs(args.T, m_values)
    else:
        designs = [half_half_config(args.T)]
        for M in m_values:
            if M == 2:
                designs.append(two_stage_config(args.T, args.beta or 1.0))
            else:
                designs.append(
                    multi_stage_config(args.T, M, _betas_from_args(args, M))
                )
    table = compare_designs(designs, pop, seed, args.n, args.workers)
    baseline = next(iter(table.values()))
    rows = []
    for design, summary in table.items():
        d = summary.to_json_dict()
        rows.append(
            {
                "schema": SCHEMA,
                "design": d["design"],
                "M": design.num_stages_M,
                "T": design.horizon_T,
                "pop": pop.label(),
                "n": d["n"],
                "mean_tau_hat": d["mean_tau_hat"],
                "var_tau_hat": d["var_tau_hat"],
                "var_vs_half_half": d["var_tau_hat"] / baseline.var_tau_hat,
                "mean_ratio": d["mean_ratio"],
                "p50_ratio": d["p50_ratio"],
                "p95_ratio": d["p95_ratio"],
                "p99_ratio": d["p99_ratio"],
            }
        )
    emit_rows(rows, args.format, out)
    return 0


def cmd_bounds(args, out) -> int:
    family = args.family.replace("-", "_")
    if family == "limit":
        payload = {
            "schema": SCHEMA,
            "source": "limit",
            "T": args.T,
            "ratio_floor": limit_ratio_bound(args.T),
        }
    elif family == "two_stage":
        payload = {
            "schema": SCHEMA,
            "T": args.T,
            "eps": args.eps,
            **two_stage_ratio_bound(args.T, args.eps, args.kappa1, args.kappa0).to_json_dict(),
        }
    elif family == "multi_stage":
        payload = {
            "schema": SCHEMA,
            "T": args.T,
            "M": args.M,
            "eps": args.eps,
            **multi_stage_ratio_bound(
                args.M, args.T, args.eps, args.kappa1, args.kappa0
            ).to_json_dict(),
        }
    elif family in ("two_stage_mean", "multi_stage_mean"):
        which = "two_stage" if family == "two_stage_mean" else "multi_stage"
        payload = {
            "schema": SCHEMA,
            "T": args.T,
            "C": args.C,
            **expectation_ratio_bound(which, args.T, args.C, args.M).to_json_dict(),
        }
    else:
        raise ValueError(f"unknown bound family {args.family!r}")
    if args.format == "json":
        out.write(dumps17(payload) + "\n")
    else:
        emit_rows([payload], args.format, out)
    return 0


def cmd_lowerbound(args, out) -> int:
    nu, nu_prime, eps = lower_bound_instance(args.T)
    m_nu = three_point_moments(nu)
    m_np = three_point_moments(nu_prime)
    payload = {
        "schema": SCHEMA,
        "T": args.T,
        "eps": eps,
        "nu": nu.to_json_dict(),
        "nu_prime": nu_prime.to_json_dict(),
        "variance_nu": m_nu[1],
        "variance_nu_prime": m_np[1],
        "kl_forward": kl_three_point(nu, nu_prime),
        "kl_reverse": kl_three_point(nu_prime, nu),
        "kl_ceiling": 1.0 / (2.0 * args.T),
        "ratio_floor": limit_ratio_bound(args.T),
    }
    if args.format == "json":
        out.write(dumps17(payload) + "\n")
    else:
        emit_rows([payload], args.format, out)
    return 0


def cmd_lemmas(args, out) -> int:
    ids = lemma_ids() if args.all or not args.id else tuple(args.id)
    rows = []
    worst = 0
    for lemma_id in ids:
        report = lemma_grid_check(lemma_id)
        rows.append({"schema": SCHEMA, **report.to_json_dict()})
        if report.status != "pass":
            worst = 1
    emit_rows(rows, args.format, out)
    return worst


def cmd_ingest(args, out) -> int:
    treated, control = data_mod.ingest_csv(args.csv)
    if args.summary:
        stats = data_mod.summarize(treated, control)
        payload = {"schema": SCHEMA, **stats.to_json_dict()}
    else:
        payload = {"schema": SCHEMA, **data_mod.arrays_to_json_dict(treated, control)}
    if args.format == "json":
        out.write(dumps17(payload) + "\n")
    else:
        rows = [
            {"arm": "treated", **stats_row(treated)},
            {"arm": "control", **stats_row(control)},
        ]
        emit_rows(rows, args.format, out)
    return 0


def stats_row(values) -> dict:
    summary = data_mod.summarize(values, values).treated
    return summary.to_json_dict()


def cmd_advise(args, out, inp) -> int:
    args.design = "two_stage" if args.M == 2 else ("half_half" if args.M == 1 else "m_stage")
    design = design_from_args(args)
    state, alloc = init_design(design)
    out.write(f"STAGE {alloc.stage_index} ALLOCATE {alloc.t1} {alloc.t0}\n")
    out.flush()

    staged: dict[int, np.ndarray | None] = {1: None, 0: None}
    while not state.done:
        pending = state.pending
        line = inp.readline()
        if not line:
            print("input ended before the experiment completed", file=sys.stderr)
            return 1
        parts = line.split()
        if not parts:
            continue
        if parts[0] != "OBS" or len(parts) < 2 or parts[1] not in ("0", "1"):
            out.write("ERR expected OBS <0|1> v1 v2 ...\n")
            out.flush()
            continue
        arm = int(parts[1])
        try:
            values = np.array([float(v) for v in parts[2:]], dtype=np.float64)
        except ValueError:
            out.write("ERR observations must be numbers\n")
            out.flush()
            continue
        expected = pending.t1 if arm == 1 else pending.t0
        if values.size != expected:
            out.write(f"ERR arm {arm} expects {expected} observations, got {values.size}\n")
            out.flush()
            continue
        staged[arm] = values
        need1 = pending.t1 > 0 and staged[1] is None
        need0 = pending.t0 > 0 and staged[0] is None
        if need1 or need0:
            continue
        o1 = staged[1] if staged[1] is not None else np.empty(0)
        o0 = staged[0] if staged[0] is not None else np.empty(0)
        staged = {1: None, 0: None}
        before = len(state.case_path)
        advance(state, o1, o0)
        for label in state.case_path[before:]:
            out.write(f"CASE {label}\n")
        if state.done:
            totals, tau_hat = finalize(state)
            out.write(f"DONE tau_hat={format(tau_hat, '.17g')}\n")
        else:
            nxt = state.pending
            out.write(f"STAGE {nxt.stage_index} ALLOCATE {nxt.t1} {nxt.t0}\n")
        out.flush()
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.port, args.state_dir, args.workers)
    return 0


# -- argument wiring -----------------------------------------------------------


def _add_design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", default="m_stage",
                   help="half_half | two_stage | m_stage")
    p.add_argument("--T", type=int, required=True, help="horizon (total subjects)")
    p.add_argument("--M", type=int, default=3, help="number of stages")
    p.add_argument("--beta", type=float, default=None,
                   help="two-stage pilot multiplier")
    p.add_argument("--betas", default="",
                   help="comma-separated multi-stage multipliers")
    p.add_argument("--schedule", default="geometric",
                   help="geometric | multi_stage_log | study")
    p.add_argument("--C", type=float, default=1.0,
                   help="bounded-support constant for log schedules")
    p.add_argument("--min-arm-obs", dest="min_arm_obs", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neyman",
        description="Adaptive Neyman allocation designs, guarantees, and simulation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one design against a population")
    _add_design_flags(p)
    p.add_argument("--pop", required=True, help="population spec, e.g. gaussian:rho=2")
    p.add_argument("--n", type=int, default=1000, help="number of trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bound", type=float, default=None,
                   help="also report the violation rate above this ratio")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")

    for name, default_fmt in (("compare", "table"), ("report", "csv")):
        p = sub.add_parser(name, help="sweep designs under common random numbers")
        p.add_argument("--T", type=int, required=True)
        p.add_argument("--M-list", dest="M_list", default="2,3,4,5")
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--betas", default="")
        p.add_argument("--schedule", default="study",
                       help="study | geometric | multi_stage_log")
        p.add_argument("--C", type=float, default=1.0)
        p.add_argument("--pop", required=True)
        p.add_argument("--n", type=int, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("json", "csv", "table"), default=default_fmt)

    p = sub.add_parser("bounds", help="evaluate closed-form guarantees")
    p.add_argument("--family", required=True,
                   help="two_stage | multi_stage | limit | two_stage_mean | multi_stage_mean")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--M", type=int, default=3)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--kappa1", type=float, default=3.0)
    p.add_argument("--kappa0", type=float, default=3.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")

    p = sub.add_parser("lowerbound", help="dump the hard-instance pair")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")

    p = sub.add_parser("lemmas", help="numeric sweeps of the inequality suite")
    p.add_argument("--all", action="store_true")
    p.add_argument("--id", action="append", default=[])
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")

    p = sub.add_parser("ingest", help="normalize an arm,impressions,clicks CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--summary", action="store_true")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")

    p = sub.add_parser("advise", help="interactive stage-by-stage advising")
    _add_design_flags(p)

    p = sub.add_parser("serve", help="start the HTTP session service")
    p.add_argument("--port", type=int, default=8631)
    p.add_argument("--state-dir", dest="state_dir", default=".neyman-sessions")
    p.add_argument("--workers", type=int, default=1)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = sys.stdout
    try:
        if args.command == "simulate":
            return cmd_simulate(args, out)
        if args.command in ("compare", "report"):
            return cmd_compare(args, out)
        if args.command == "bounds":
            return cmd_bounds(args, out)
        if args.command == "lowerbound":
            return cmd_lowerbound(args, out)
        if args.command == "lemmas":
            return cmd_lemmas(args, out)
        if args.command == "ingest":
            return cmd_ingest(args, out)
        if args.command == "advise":
            return cmd_advise(args, out, sys.stdin)
        if args.command == "serve":
            return cmd_serve(args)
        parser.error(f"unknown command {args.command!r}")
    except NeymanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
