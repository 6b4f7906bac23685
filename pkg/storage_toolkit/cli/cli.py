"""
storctl: command-line entry point

    solve          rbdp on a price range, writes the solution (and optional heatmaps)
    oracle-check   rbdp vs. brute force, on the data range or on --random N generated instances
    sweep          cost over a capacity range
    joint-compare  days solved separately vs. as one horizon
    export-milp    LP / MPS model files for an external solver
    bench          rbdp wall time over growing horizons

Exit codes: 0 success, 1 infeasible instance or failed cross-check, 2 usage or config error.
"""

import argparse
import logging
import sys
from datetime import date
from pathlib import Path

from pydantic import ValidationError

from ..analysis import (
    compare_joint_vs_separate,
    emit_results,
    price_heatmap,
    purchase_heatmap,
    runtime_bench,
    sweep_capacity,
)
from ..data_io import Scenario, parse_consumption_csv, parse_price_csv
from ..milp_export import ModelFormat, build_model, write_model_file
from ..model import LossFunction, StorageSpec
from ..oracle import DynamicsMode, OracleConfig, oracle_cross_check, oracle_final_costs, run_campaign
from ..rbdp import rbdp_solve
from ..utils.errors import (
    CrossCheckError,
    DataFormatError,
    InfeasibleInstanceError,
    InvalidArgumentError,
    OracleBudgetError,
    UnsupportedLossError,
)
from ..utils.settings import RunConfig, set_logging

logger = logging.getLogger(__name__)

__all__ = ["build_parser", "run", "main", "resolve_config", "parse_capacities", "scenario_from_config"]

# flag -> RunConfig field
CONFIG_FLAGS = {
    "--prices": ("prices", Path),
    "--price-unit": ("price_unit", str),
    "--consumption-const": ("consumption_const", float),
    "--consumption-csv": ("consumption_csv", Path),
    "--from": ("date_from", date.fromisoformat),
    "--to": ("date_to", date.fromisoformat),
    "--cap-min": ("cap_min", float),
    "--capacity": ("capacity", float),
    "--buy-min": ("buy_min", float),
    "--buy-max": ("buy_max", float),
    "--eta-in": ("eta_in", float),
    "--eta-out": ("eta_out", float),
    "--beta": ("beta", float),
    "--y-max": ("y_max", float),
    "--hx": ("hx", float),
    "--hv": ("hv", float),
    "--v-init": ("v_init", float),
    "--v-final": ("v_final", float),
    "--dynamics": ("dynamics", str),
    "--max-nodes": ("max_nodes", int),
    "--out": ("out", Path),
    "--format": ("format", str),
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=Path, default=None, help="Flat YAML file overriding the bundled defaults")
    shared.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    shared.add_argument("--safe-capacity", action=argparse.BooleanOptionalAction, default=None,
                        help="Shrink the capacity by the rounding budget so the exact trajectory stays within C")
    for flag, (dest, kind) in CONFIG_FLAGS.items():
        shared.add_argument(flag, dest=dest, type=kind, default=None)

    parser = argparse.ArgumentParser(
        prog="storctl",
        description="Cost-optimal storage control on day-ahead electricity prices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve_p = sub.add_parser("solve", parents=[shared], help="Solve one price range with rbdp")
    solve_p.add_argument("--heatmap", action="store_true", help="Also write day x hour price and purchase matrices")

    check_p = sub.add_parser("oracle-check", parents=[shared], help="Cross-check rbdp against brute force")
    check_p.add_argument("--random", type=int, default=None, metavar="N",
                         help="Check N generated instances instead of the data range")
    check_p.add_argument("--seed", type=int, default=0)
    check_p.add_argument("--strict", action="store_true", help="Fail when rbdp exceeds oracle + cost gap")

    sweep_p = sub.add_parser("sweep", parents=[shared], help="Cost over a range of capacities")
    sweep_p.add_argument("--capacities", default="0:5000:10", help="start:stop:step in kWh, stop included")

    joint_p = sub.add_parser("joint-compare", parents=[shared], help="Separate days vs. one joint horizon")
    joint_p.add_argument("--boundary", type=float, default=100.0,
                         help="Fill level at every day boundary of the separate runs")

    export_p = sub.add_parser("export-milp", parents=[shared], help="Write LP / MPS model files")
    export_p.add_argument("--relaxed", action="store_true", help="Drop integrality of the purchases")
    export_p.add_argument("--model-format", choices=[f.value for f in ModelFormat], default="lp")

    bench_p = sub.add_parser("bench", parents=[shared], help="rbdp runtime over growing horizons")
    bench_p.add_argument("--horizons", default="168,336,672,1344", help="Comma-separated horizon lengths")
    bench_p.add_argument("--repeats", type=int, default=3)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {dest: getattr(args, dest) for dest, _ in CONFIG_FLAGS.values()}
    overrides["safe_capacity"] = args.safe_capacity
    return RunConfig.load(user_config=args.config, overrides=overrides)


def parse_capacities(raw: str) -> list[float]:
    """'a:b:step' with b included, or a comma-separated list."""
    if ":" not in raw:
        return [float(c) for c in raw.split(",") if c.strip()]
    try:
        start, stop, step = (float(p) for p in raw.split(":"))
    except ValueError:
        raise InvalidArgumentError(f"capacities must look like start:stop:step, got '{raw}'")
    if step <= 0 or stop < start:
        raise InvalidArgumentError(f"capacities need step > 0 and stop >= start, got '{raw}'")
    n = int(round((stop - start) / step))
    return [start + i * step for i in range(n + 1) if start + i * step <= stop + 1e-9]


def scenario_from_config(cfg: RunConfig) -> Scenario:
    if cfg.prices is None:
        raise InvalidArgumentError("a price file is required (--prices or `prices:` in the config)")
    series = parse_price_csv(cfg.prices, cfg.price_unit)
    if cfg.date_from or cfg.date_to:
        series = series.between(cfg.date_from or series.timestamps[0], cfg.date_to or series.timestamps[-1])

    # a consumption file wins over the constant
    if cfg.consumption_csv is not None:
        consumption = parse_consumption_csv(cfg.consumption_csv)
    elif cfg.consumption_const is not None:
        consumption = cfg.consumption_const
    else:
        raise InvalidArgumentError("consumption is required (--consumption-const or --consumption-csv)")

    spec = StorageSpec(
        cap_min=cfg.cap_min,
        cap_max=cfg.capacity,
        buy_min=cfg.buy_min,
        buy_max=cfg.buy_max,
        eta_in=cfg.eta_in,
        eta_out=cfg.eta_out,
        loss=LossFunction(beta=cfg.beta),
        y_max=cfg.resolved_y_max,
    )
    return Scenario(series=series, consumption=consumption, spec=spec, v_init=cfg.v_init,
                    v_final=cfg.v_final, h_x=cfg.hx, h_v=cfg.hv)


def _output(cfg: RunConfig, stem: str) -> Path:
    return cfg.out / f"{stem}.{cfg.format}"


def _solve(args, cfg: RunConfig) -> int:
    scenario = scenario_from_config(cfg)
    inst = scenario.instance()
    solution, _ = rbdp_solve(inst, safe_capacity=cfg.safe_capacity)
    emit_results(solution, _output(cfg, f"solution_{inst.name}"), cfg.format, cfg.echo())
    if args.heatmap:
        emit_results(price_heatmap(scenario.series), cfg.out / f"prices_{inst.name}.csv", "csv", cfg.echo())
        emit_results(purchase_heatmap(solution, scenario.series.timestamps),
                     cfg.out / f"purchases_{inst.name}.csv", "csv", cfg.echo())
    print(f"cost={solution.cost:.2f}")
    return 0


def _oracle_check(args, cfg: RunConfig) -> int:
    if args.random is not None:
        reports = run_campaign(args.random, seed=args.seed, safe_capacity=cfg.safe_capacity,
                               strict=args.strict)
        emit_results(reports, _output(cfg, f"oracle_check_random_{args.seed}"), cfg.format, cfg.echo())
        checked = sum(r.status == "ok" for r in reports)
        outside = sum(r.within_gap is False for r in reports)
        print(f"{len(reports)} instances, {checked} solved by both methods, {outside} above the cost gap")
        return 0

    inst = scenario_from_config(cfg).instance()
    if cfg.dynamics == "rounded":
        _, tables = rbdp_solve(inst)
        expected = tables.final_costs()
        found = oracle_final_costs(inst, OracleConfig(mode=DynamicsMode.rounded, max_nodes=cfg.max_nodes))
        mismatched = sorted(lvl for lvl in set(expected) | set(found)
                            if lvl not in expected or lvl not in found or abs(expected[lvl] - found[lvl]) > 1e-6)
        if mismatched:
            raise CrossCheckError("rounded oracle and rbdp tables disagree", f"levels: {mismatched}")
        print(f"{len(expected)} reachable final levels agree")
        return 0

    report = oracle_cross_check(inst, safe_capacity=cfg.safe_capacity, strict=args.strict,
                                max_nodes=cfg.max_nodes)
    emit_results([report], _output(cfg, f"oracle_check_{inst.name}"), cfg.format, cfg.echo())
    print(f"status={report.status} oracle={report.oracle_cost} rbdp={report.rbdp_cost}")
    return 0


def _sweep(args, cfg: RunConfig) -> int:
    scenario = scenario_from_config(cfg)
    result = sweep_capacity(scenario, parse_capacities(args.capacities), y_max=cfg.y_max,
                            safe_capacity=cfg.safe_capacity)
    emit_results(result, _output(cfg, f"sweep_{scenario.instance().name}"), cfg.format, cfg.echo())
    return 0


def _joint_compare(args, cfg: RunConfig) -> int:
    scenario = scenario_from_config(cfg)
    first, last = scenario.series.timestamps[0].date(), scenario.series.timestamps[-1].date()
    days = [date.fromordinal(d) for d in range(first.toordinal(), last.toordinal() + 1)]
    result = compare_joint_vs_separate(scenario, days, boundary=args.boundary,
                                       safe_capacity=cfg.safe_capacity)
    emit_results(result, _output(cfg, f"joint_{first:%Y%m%d}_{last:%Y%m%d}"), cfg.format, cfg.echo())
    print(f"separate={result.separate_total} joint={result.joint_cost}")
    return 0


def _export_milp(args, cfg: RunConfig) -> int:
    inst = scenario_from_config(cfg).instance()
    doc = build_model(inst, relaxed=args.relaxed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = write_model_file(doc, cfg.out, args.model_format)
    emit_results(inst.model_dump(mode="json") | {"model_file": path.name}, cfg.out / f"{doc.name}.config.json",
                 "json", cfg.echo())
    print(f"Saved to {path}")
    return 0


def _bench(args, cfg: RunConfig) -> int:
    scenario = scenario_from_config(cfg)
    try:
        horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
    except ValueError:
        raise InvalidArgumentError(f"horizons must be comma-separated integers, got '{args.horizons}'")
    result = runtime_bench(scenario, horizons, repeats=args.repeats, safe_capacity=cfg.safe_capacity)
    emit_results(result, _output(cfg, "bench"), cfg.format, cfg.echo())
    return 0


COMMANDS = {
    "solve": _solve,
    "oracle-check": _oracle_check,
    "sweep": _sweep,
    "joint-compare": _joint_compare,
    "export-milp": _export_milp,
    "bench": _bench,
}


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else logging.INFO
    set_logging(level)
    logging.getLogger().setLevel(level)

    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except InfeasibleInstanceError as e:
        logger.error(f"Infeasible instance: {e}")
        if e.largest_reachable_level is not None:
            logger.error(f"Largest reachable final level: {e.largest_reachable_level}")
        return 1
    except CrossCheckError as e:
        logger.error(f"Cross-check failed: {e}")
        return 1
    except (ValidationError, InvalidArgumentError, DataFormatError, OracleBudgetError,
            UnsupportedLossError, ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

# Examples:
# python -m storage_toolkit.cli solve --prices prices_2018.csv --from 2018-06-15 --to 2018-06-21 --capacity 1000 --consumption-const 200 --v-init 100 --v-final 100
# python -m storage_toolkit.cli sweep --prices prices_2018.csv --from 2018-06-15 --to 2018-06-21 --capacities 0:5000:10 --format csv
# python -m storage_toolkit.cli joint-compare --prices prices_2018.csv --from 2018-01-08 --to 2018-01-09
# python -m storage_toolkit.cli oracle-check --random 200 --seed 1 --safe-capacity
# python -m storage_toolkit.cli export-milp --prices prices_2018.csv --from 2018-06-15 --to 2018-06-21 --model-format mps
# python -m storage_toolkit.cli bench --prices prices_2018.csv --from 2018-01-01 --to 2018-03-01 --horizons 168,336,672,1344
