# src/main.py
import argparse
import logging
import sys
import time

from .adversary import FIRST_EDGE, load_adversary
from .automaton import validate_automaton
from .config import ENGINES, get_engine_options, get_log_level
from .errors import ModelCheckError
from .logic import check, parse_formula, until_leaves
from .model_parser import load_model, parse_constraint_file
from .polyint import polytope_probability
from .report import ERROR_EXIT_CODE, build_run_report, exit_code, render, report_dict
from .simulate import path_seed, sample_path, write_trace
from .utils import content_digest, parse_rational, rational_fields, read_source

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"


def _rational_arg(text: str):
    try:
        return parse_rational(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--model", required=True, help="モデル記述ファイル (.sa)")
    parser.add_argument("--formula", required=True, help="検査する論理式")
    parser.add_argument(
        "--adversary", default=FIRST_EDGE, help=f"方策ファイルまたは組み込み名 {FIRST_EDGE} (既定)"
    )
    parser.add_argument("--format", choices=("json", "text"), default="json")
    parser.add_argument("--jobs", type=int, default=None, help="並列ジョブ数 (SAMC_JOBS)")
    parser.add_argument("--strict", action="store_true", default=None, help="未知の命題をエラーにする")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samc", description="確率オートマトンのモデル検査")
    commands = parser.add_subparsers(dest="command", required=True)

    check_parser = commands.add_parser("check", help="離散化(行列)エンジンで検査する")
    _add_common(check_parser)
    check_parser.add_argument("--engine", choices=ENGINES, default=None, help="エンジン (既定: matrix)")
    check_parser.add_argument("--delta", type=_rational_arg, default=None, help="時間刻み p/q (SAMC_DELTA)")
    check_parser.add_argument("--max-depth", type=int, default=None)
    check_parser.add_argument("--samples", type=int, default=None)
    check_parser.add_argument("--seed", type=int, default=None)

    region_parser = commands.add_parser("region-check", help="領域木エンジンで検査する")
    _add_common(region_parser)
    region_parser.add_argument("--max-depth", type=int, default=None, help="展開する最大の深さ (SAMC_MAX_DEPTH)")

    simulate_parser = commands.add_parser("simulate", help="モンテカルロ法で推定する")
    _add_common(simulate_parser)
    simulate_parser.add_argument("--samples", type=int, default=None, help="経路数 (SAMC_SAMPLES)")
    simulate_parser.add_argument("--seed", type=int, default=None, help="乱数シード (SAMC_SEED)")
    simulate_parser.add_argument("--trace", default=None, help="最初の経路を書き出すファイル")

    integrate_parser = commands.add_parser("integrate", help="制約ファイルの領域の確率を厳密に計算する")
    integrate_parser.add_argument("--constraints", required=True, help="制約ファイル")
    integrate_parser.add_argument("--format", choices=("json", "text"), default="json")

    validate_parser = commands.add_parser("validate", help="モデルの整合性を検査する")
    validate_parser.add_argument("--model", required=True)
    validate_parser.add_argument("--format", choices=("json", "text"), default="json")
    return parser


def _run_check(args, engine: str) -> int:
    options = get_engine_options(
        engine=engine,
        delta=getattr(args, "delta", None),
        max_depth=getattr(args, "max_depth", None),
        samples=getattr(args, "samples", None),
        seed=getattr(args, "seed", None),
        jobs=args.jobs,
        strict=args.strict,
    )
    logger.info("--- 1. 入力の読み込み 開始 ---")
    sa = load_model(args.model)
    adversary = load_adversary(args.adversary)
    formula = parse_formula(args.formula)
    logger.info("--- 1. 入力の読み込み 終了: %d ロケーション, %d クロック ---", len(sa.locations), len(sa.clocks))

    logger.info("--- 2. 検査 開始 (engine=%s) ---", options.engine)
    started = time.perf_counter()
    result = check(sa, adversary, formula, options)
    wall_time_ms = int((time.perf_counter() - started) * 1000)
    logger.info("--- 2. 検査 終了: %s (%d ms) ---", result.verdict.value, wall_time_ms)

    if getattr(args, "trace", None):
        leaves = until_leaves(formula)
        horizon = float(leaves[0].time_bound) if leaves else 0.0
        if horizon > 0:
            write_trace(sample_path(sa, adversary, horizon, path_seed(options.seed, 0)), args.trace)
            logger.info("trace written to %s", args.trace)
        else:
            logger.warning("時間上限のある until がないため trace は書き出しません")

    run_report = build_run_report(
        result,
        formula,
        options.engine,
        content_digest(args.model, args.adversary),
        wall_time_ms,
        delta=options.delta if options.engine == "matrix" else None,
    )
    print(render(report_dict(run_report), args.format))
    return exit_code(run_report.verdict)


def _run_integrate(args) -> int:
    densities, constraints, order = parse_constraint_file(read_source(args.constraints))
    options = get_engine_options()
    value = polytope_probability(densities, constraints, elimination_order=order, max_cells=options.max_cells)
    data = {"variables": list(densities), "constraints": len(constraints)}
    data.update(rational_fields("probability", value))
    print(render(data, args.format))
    return 0


def _run_validate(args) -> int:
    sa = load_model(args.model)
    report = validate_automaton(sa)
    data = {
        "ok": report.ok,
        "violations": [
            {"code": v.code, "element": v.element, "message": v.message} for v in report.violations
        ],
    }
    for violation in report.violations:
        print(f"error: {violation.code}: {violation.element}: {violation.message}", file=sys.stderr)
    print(render(data, args.format))
    return 0 if report.ok else ERROR_EXIT_CODE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else ERROR_EXIT_CODE

    try:
        logging.basicConfig(level=get_log_level(), format=LOG_FORMAT, stream=sys.stderr)
        if args.command == "check":
            return _run_check(args, args.engine)
        if args.command == "region-check":
            return _run_check(args, "region")
        if args.command == "simulate":
            return _run_check(args, "montecarlo")
        if args.command == "integrate":
            return _run_integrate(args)
        return _run_validate(args)
    except ModelCheckError as e:
        print(f"error: {e.code}: {e}", file=sys.stderr)
        return ERROR_EXIT_CODE
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return ERROR_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
