# src/automaton.py
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import sympy
from numpy.polynomial import polynomial as npoly
from scipy.optimize import brentq
from sympy.polys.polyerrors import CoercionFailed, PolynomialError

from .errors import PreconditionError, UnsupportedDistribution
from .utils import to_fraction, to_sympy

logger = logging.getLogger(__name__)

# CDF 多項式の変数
T = sympy.Symbol("t")

# 単調性チェックで1区間あたりに評価する点数
MONOTONE_SAMPLES = 1024
SAMPLE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Distribution:
    """
    区分多項式で表したクロックの累積分布関数。
    pieces は (lo, hi, t の多項式) の列で、台は [support_lo, support_hi]。
    """

    pieces: tuple[tuple[Fraction, Fraction, sympy.Poly], ...]

    @classmethod
    def from_pieces(cls, pieces) -> "Distribution":
        """(lo, hi, 式) の列から作成。式は t の sympy 式か Poly。"""
        converted = []
        for lo, hi, expr in pieces:
            try:
                poly = expr if isinstance(expr, sympy.Poly) else sympy.Poly(sympy.sympify(expr), T, domain="QQ")
            except (PolynomialError, CoercionFailed):
                raise UnsupportedDistribution(f"CDF は t の有理係数多項式で指定してください: {expr}") from None
            converted.append((Fraction(lo), Fraction(hi), poly))
        if not converted:
            raise PreconditionError("分布には少なくとも1つの区間が必要です。")
        return cls(tuple(converted))

    @property
    def support_lo(self) -> Fraction:
        return self.pieces[0][0]

    @property
    def support_hi(self) -> Fraction:
        return self.pieces[-1][1]

    @cached_property
    def density_pieces(self) -> tuple[tuple[Fraction, Fraction, sympy.Poly], ...]:
        """区分ごとの導関数(確率密度)"""
        return tuple((lo, hi, poly.diff(T)) for lo, hi, poly in self.pieces)

    @cached_property
    def float_pieces(self) -> tuple[tuple[float, float, np.ndarray], ...]:
        # numpy の polyval は昇べきの係数列を取る
        return tuple(
            (float(lo), float(hi), np.array([float(c) for c in reversed(poly.all_coeffs())]))
            for lo, hi, poly in self.pieces
        )


@dataclass(frozen=True)
class Edge:
    source: str
    action: str
    trigger_clock: str
    target: str


@dataclass(frozen=True)
class StochasticAutomaton:
    locations: tuple[str, ...]
    initial: str
    clocks: dict[str, Distribution]
    edges: tuple[Edge, ...]
    setting: dict[str, tuple[str, ...]]
    labeling: dict[str, frozenset[str]] = field(default_factory=dict)

    @property
    def actions(self) -> frozenset[str]:
        return frozenset(edge.action for edge in self.edges)

    @cached_property
    def propositions(self) -> frozenset[str]:
        return frozenset().union(*self.labeling.values()) if self.labeling else frozenset()

    def clocks_at(self, location: str) -> tuple[str, ...]:
        return tuple(self.setting.get(location, ()))

    def labels_at(self, location: str) -> frozenset[str]:
        return self.labeling.get(location, frozenset())

    def edges_from(self, location: str, clock: str | None = None) -> list[Edge]:
        return [
            edge
            for edge in self.edges
            if edge.source == location and (clock is None or edge.trigger_clock == clock)
        ]

    def is_terminating(self, location: str) -> bool:
        """出ていく辺がないロケーションを終端とみなす"""
        return not any(edge.source == location for edge in self.edges)


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, element: str, message: str):
        self.violations.append(Violation(code, element, message))

    def codes(self) -> list[str]:
        return [violation.code for violation in self.violations]


def _poly_value(poly: sympy.Poly, t: Fraction) -> Fraction:
    return to_fraction(poly.eval(to_sympy(t)))


def cdf_at(dist: Distribution, t: Fraction) -> Fraction:
    """CDF の厳密な値。台の下では0、上では1。"""
    t = Fraction(t)
    if t <= dist.support_lo:
        return Fraction(0)
    if t >= dist.support_hi:
        return Fraction(1)
    for lo, hi, poly in dist.pieces:
        if lo <= t <= hi:
            return _poly_value(poly, t)
    # 区間の隙間(不正な分布)では直前の区間の終端値を使う
    previous = [piece for piece in dist.pieces if piece[1] < t]
    return _poly_value(previous[-1][2], previous[-1][1])


def interval_probability(dist: Distribution, a: Fraction, b: Fraction) -> Fraction:
    """区間 (a, b] の確率 cdf(b) - cdf(a)"""
    if a > b:
        raise PreconditionError(f"区間の下端が上端を超えています: ({a}, {b}]")
    return cdf_at(dist, b) - cdf_at(dist, a)


def sample_clock(dist: Distribution, u: float) -> float:
    """
    逆変換法によるクロック値のサンプリング。
    CDF(t) = u となる t を台の上で brentq により求めます。
    """
    if not 0 <= u < 1:
        raise PreconditionError(f"u は [0, 1) の範囲で指定してください: {u}")
    pieces = dist.float_pieces
    lo_total, hi_total = pieces[0][0], pieces[-1][1]
    if u == 0:
        return lo_total
    for lo, hi, coeffs in pieces:
        value_lo = npoly.polyval(lo, coeffs) - u
        value_hi = npoly.polyval(hi, coeffs) - u
        if value_hi < 0:
            continue
        if value_lo >= 0:
            return min(max(lo, lo_total), hi_total)
        root = brentq(lambda x, c=coeffs: npoly.polyval(x, c) - u, lo, hi, xtol=SAMPLE_TOLERANCE)
        return min(max(root, lo_total), hi_total)
    return hi_total


def _validate_distribution(name: str, dist: Distribution, report: ValidationReport):
    lo, hi = dist.support_lo, dist.support_hi
    if lo < 0:
        report.add("NegativeSupport", name, f"クロック {name} の台の下限が負です: {lo}")
    if not lo < hi:
        report.add("EmptySupport", name, f"クロック {name} の台が空です: [{lo}, {hi}]")
        return
    for piece_lo, piece_hi, _ in dist.pieces:
        if not piece_lo < piece_hi:
            report.add("EmptySupport", name, f"クロック {name} に空の区間があります: [{piece_lo}, {piece_hi}]")
            return

    first_value = _poly_value(dist.pieces[0][2], lo)
    if first_value != 0:
        report.add("CdfNotAnchored", name, f"クロック {name} の CDF が下限で0になりません: {first_value}")
    last_value = _poly_value(dist.pieces[-1][2], hi)
    if last_value != 1:
        report.add("CdfNotNormalized", name, f"クロック {name} の CDF が上限で1になりません: {last_value}")

    for (_, left_hi, left), (right_lo, _, right) in zip(dist.pieces, dist.pieces[1:]):
        if left_hi != right_lo or _poly_value(left, left_hi) != _poly_value(right, right_lo):
            report.add("CdfDiscontinuous", name, f"クロック {name} の CDF が {left_hi} で連続していません")

    for piece_lo, piece_hi, density in dist.density_pieces:
        coeffs = np.array([float(c) for c in reversed(density.all_coeffs())])
        grid = np.linspace(float(piece_lo), float(piece_hi), MONOTONE_SAMPLES)
        if np.min(npoly.polyval(grid, coeffs)) < -1e-12:
            report.add(
                "CdfDecreasing",
                name,
                f"クロック {name} の CDF が区間 [{piece_lo}, {piece_hi}] で減少しています",
            )
            break


def validate_automaton(sa: StochasticAutomaton) -> ValidationReport:
    """
    確率オートマトンの整合性を検査し、見つかった違反をすべて返します。
    違反は例外ではなくデータとして扱います。
    """
    report = ValidationReport()
    locations = set(sa.locations)

    if sa.initial not in locations:
        report.add("InitialNotLocation", sa.initial, f"初期ロケーション {sa.initial} が定義されていません")

    for location, clocks in sa.setting.items():
        if location not in locations:
            report.add("UnknownLocation", location, f"未定義のロケーションにクロックが設定されています: {location}")
        for clock in clocks:
            if clock not in sa.clocks:
                report.add("UnknownClock", clock, f"ロケーション {location} のクロック {clock} に分布がありません")

    for location in sa.labeling:
        if location not in locations:
            report.add("UnknownLabelLocation", location, f"未定義のロケーションにラベルがあります: {location}")

    seen_actions = set()
    for edge in sa.edges:
        element = f"{edge.source} -{edge.action}{{{edge.trigger_clock}}}-> {edge.target}"
        for endpoint in (edge.source, edge.target):
            if endpoint not in locations:
                report.add("UnknownLocation", element, f"辺の端点 {endpoint} が定義されていません")
        if edge.trigger_clock not in sa.clocks:
            report.add("UnknownClock", element, f"辺のクロック {edge.trigger_clock} に分布がありません")
        if edge.trigger_clock not in sa.clocks_at(edge.source):
            report.add(
                "ClockScopeViolation",
                element,
                f"クロック {edge.trigger_clock} は {edge.source} で設定されていません",
            )
        key = (edge.source, edge.action)
        if key in seen_actions:
            report.add("DuplicateAction", element, f"{edge.source} にアクション {edge.action} が重複しています")
        seen_actions.add(key)

    for location in sa.locations:
        clocks = sa.clocks_at(location)
        if not clocks and sa.edges_from(location):
            report.add("TerminatingWithEdges", location, f"クロックのない {location} から辺が出ています")
        for clock in clocks:
            if not sa.edges_from(location, clock):
                report.add("IdleClock", f"{location}.{clock}", f"{location} のクロック {clock} で発火する辺がありません")

    for name, dist in sa.clocks.items():
        _validate_distribution(name, dist, report)

    if not report.ok:
        logger.debug("validation violations: %s", report.codes())
    return report
