# src/report.py
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import singledispatch

from .logic import CheckResult, Until, Verdict, pretty_print
from .matrix_checker import MatrixReport
from .region_checker import RegionReport
from .simulate import SimulationReport
from .utils import rational_fields

EXIT_CODES = {
    Verdict.PASS: 0,
    Verdict.TRUE: 0,
    Verdict.FAIL: 1,
    Verdict.FALSE: 1,
    Verdict.UNDECIDED: 3,
}
ERROR_EXIT_CODE = 2


@dataclass
class RunReport:
    verdict: Verdict
    engine: str
    formula: str
    model_hash: str
    wall_time_ms: int = 0
    delta: Fraction | None = None
    iterations_or_depth: int = 0
    untils: list[dict] = field(default_factory=list)


def exit_code(verdict: Verdict) -> int:
    return EXIT_CODES[verdict]


@singledispatch
def engine_fields(report) -> dict:
    raise TypeError(f"未知のエンジンレポートです: {type(report).__name__}")


@engine_fields.register
def _(report: MatrixReport) -> dict:
    fields = {"verdict": report.verdict.value}
    for name in ("total_pass", "total_fail", "error"):
        fields.update(rational_fields(name, getattr(report, name)))
    fields["iterations"] = report.iterations
    fields["timed_out"] = report.timed_out
    fields.update(rational_fields("delta", report.delta))
    return fields


@engine_fields.register
def _(report: RegionReport) -> dict:
    fields = {"verdict": report.verdict.value}
    for name in ("sigma_p", "sigma_f", "undecided_mass"):
        fields.update(rational_fields(name, getattr(report, name)))
    lower, upper = report.interval
    fields["interval"] = [str(lower), str(upper)]
    fields["depth"] = report.depth
    return fields


@engine_fields.register
def _(report: SimulationReport) -> dict:
    estimate = report.estimate
    return {
        "verdict": report.verdict.value,
        "mean": estimate.mean,
        "half_width": estimate.half_width,
        "samples": estimate.samples,
        "seed": estimate.seed,
        "confidence": estimate.confidence,
    }


def _progress(report) -> int:
    if isinstance(report, MatrixReport):
        return report.iterations
    if isinstance(report, RegionReport):
        return report.depth
    return 0


def build_run_report(
    result: CheckResult,
    formula,
    engine: str,
    model_hash: str,
    wall_time_ms: int,
    delta: Fraction | None = None,
) -> RunReport:
    """
    トップレベル式が until 1つだけならエンジンの判定(pass/fail など)を、
    それ以外は命題論理として評価した true/false を判定とします。
    """
    untils = []
    for leaf, report in result.leaves:
        entry = {"until": pretty_print(leaf)}
        entry.update(engine_fields(report))
        untils.append(entry)
    verdict = result.verdict
    if isinstance(formula, Until) and result.leaves:
        verdict = result.leaves[0][1].verdict
    return RunReport(
        verdict=verdict,
        engine=engine,
        formula=pretty_print(formula),
        model_hash=model_hash,
        wall_time_ms=wall_time_ms,
        delta=delta,
        iterations_or_depth=max((_progress(report) for _, report in result.leaves), default=0),
        untils=untils,
    )


def report_dict(report: RunReport) -> dict:
    data = {
        "verdict": report.verdict.value,
        "engine": report.engine,
        "formula": report.formula,
        "model_hash": report.model_hash,
        "wall_time_ms": report.wall_time_ms,
        "iterations_or_depth": report.iterations_or_depth,
    }
    data.update(rational_fields("delta", report.delta))
    # until が1つだけのときはその詳細をトップレベルにも展開する
    if len(report.untils) == 1:
        for key, value in report.untils[0].items():
            data.setdefault(key, value)
    data["untils"] = report.untils
    return data


def to_json(data: dict) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2)


def to_text(data: dict) -> str:
    """人が読む用の key: value 形式"""
    lines = []
    for key, value in data.items():
        if key == "untils":
            for index, until in enumerate(value, start=1):
                lines.append(f"until[{index}]: {until.get('until')}")
                lines.extend(f"  {k}: {v}" for k, v in until.items() if k != "until")
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines)


def render(data: dict, fmt: str) -> str:
    return to_text(data) if fmt == "text" else to_json(data)
