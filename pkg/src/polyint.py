# src/polyint.py
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import sympy

from .errors import (
    DensityNotNormalized,
    DepthExceeded,
    PreconditionError,
    UnboundedRegion,
    VarInBound,
)
from .utils import to_fraction, to_sympy

logger = logging.getLogger(__name__)

DEFAULT_MAX_CELLS = 64


@dataclass(frozen=True)
class AffineExpr:
    """有理数定数 + Σ 係数·変数。係数0の項は持たない。"""

    constant: Fraction = Fraction(0)
    coefficients: tuple[tuple[str, Fraction], ...] = ()

    @classmethod
    def build(cls, constant, coefficients: Mapping[str, Fraction]) -> "AffineExpr":
        items = tuple(sorted((name, Fraction(value)) for name, value in coefficients.items() if value != 0))
        return cls(Fraction(constant), items)

    @classmethod
    def variable(cls, name: str, coefficient=1) -> "AffineExpr":
        return cls.build(0, {name: Fraction(coefficient)})

    @classmethod
    def constant_of(cls, value) -> "AffineExpr":
        return cls(Fraction(value), ())

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.coefficients)

    @property
    def is_constant(self) -> bool:
        return not self.coefficients

    def coefficient(self, name: str) -> Fraction:
        return dict(self.coefficients).get(name, Fraction(0))

    def without(self, name: str) -> "AffineExpr":
        return AffineExpr(self.constant, tuple(item for item in self.coefficients if item[0] != name))

    def scale(self, factor) -> "AffineExpr":
        factor = Fraction(factor)
        return AffineExpr.build(self.constant * factor, {n: c * factor for n, c in self.coefficients})

    def __add__(self, other: "AffineExpr") -> "AffineExpr":
        merged = dict(self.coefficients)
        for name, value in other.coefficients:
            merged[name] = merged.get(name, Fraction(0)) + value
        return AffineExpr.build(self.constant + other.constant, merged)

    def __neg__(self) -> "AffineExpr":
        return self.scale(-1)

    def __sub__(self, other: "AffineExpr") -> "AffineExpr":
        return self + (-other)

    def to_sympy(self) -> sympy.Expr:
        expr = to_sympy(self.constant)
        for name, value in self.coefficients:
            expr += to_sympy(value) * sympy.Symbol(name)
        return expr

    def __str__(self) -> str:
        parts = [f"{value}*{name}" for name, value in self.coefficients]
        if self.constant != 0 or not parts:
            parts.append(str(self.constant))
        return " + ".join(parts)


@dataclass(frozen=True)
class Constraint:
    """lhs < rhs (strict=False なら <=)。連続測度では境界は測度0。"""

    lhs: AffineExpr
    rhs: AffineExpr
    strict: bool = True

    @property
    def difference(self) -> AffineExpr:
        return self.lhs - self.rhs

    def __str__(self) -> str:
        return f"{self.lhs} {'<' if self.strict else '<='} {self.rhs}"


@dataclass(frozen=True)
class ConstraintSystem:
    """経路に沿って積み上げた線形制約の連言。変数の台は密度の側が持つ。"""

    constraints: tuple[Constraint, ...] = ()

    @property
    def variables(self) -> frozenset[str]:
        names = set()
        for constraint in self.constraints:
            names |= constraint.difference.variables
        return frozenset(names)


@dataclass(frozen=True)
class MultiPoly:
    """有理係数の多変数多項式。展開済みの sympy 式を保持します。"""

    expr: sympy.Expr

    @classmethod
    def from_expr(cls, expr) -> "MultiPoly":
        return cls(sympy.expand(sympy.sympify(expr)))

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(symbol.name for symbol in self.expr.free_symbols)

    def value(self) -> Fraction:
        if self.expr.free_symbols:
            raise PreconditionError(f"変数が残っています: {sorted(self.variables)}")
        return to_fraction(self.expr)


# 密度は (lo, hi, その変数の MultiPoly) の区分列
Density = tuple[tuple[Fraction, Fraction, MultiPoly], ...]


def poly_integrate(p: MultiPoly, var: str, lower: AffineExpr, upper: AffineExpr) -> MultiPoly:
    """p を var について lower から upper まで積分します(厳密)。"""
    if var in lower.variables or var in upper.variables:
        raise VarInBound(f"積分変数 {var} が積分範囲に含まれています")
    symbol = sympy.Symbol(var)
    antiderivative = sympy.Integer(0)
    for (k,), coeff in sympy.Poly(p.expr, symbol).terms():
        antiderivative += coeff * symbol ** (k + 1) / sympy.Integer(k + 1)
    result = antiderivative.subs(symbol, upper.to_sympy()) - antiderivative.subs(symbol, lower.to_sympy())
    return MultiPoly.from_expr(result)


def _as_density(var: str, value) -> Density:
    # (MultiPoly, (lo, hi)) の形も受け付ける
    if len(value) == 2 and isinstance(value[0], MultiPoly):
        density, (lo, hi) = value
        return ((Fraction(lo), Fraction(hi), density),)
    return tuple((Fraction(lo), Fraction(hi), density) for lo, hi, density in value)


def _check_normalized(var: str, density: Density):
    total = Fraction(0)
    for lo, hi, poly in density:
        if poly.variables - {var}:
            raise PreconditionError(f"変数 {var} の密度に他の変数が含まれています")
        total += poly_integrate(poly, var, AffineExpr.constant_of(lo), AffineExpr.constant_of(hi)).value()
    if total != 1:
        raise DensityNotNormalized(f"変数 {var} の密度の積分が1ではありません: {total}")


def _normalize(difference: AffineExpr, strict: bool) -> tuple[AffineExpr, bool]:
    # 先頭係数の絶対値で割って重複を除けるようにする
    if difference.is_constant:
        return difference, strict
    lead = abs(difference.coefficients[0][1])
    return difference.scale(1 / lead), strict


class IntegralCache:
    """
    逐次積分の途中結果を (単項式, 制約, 消去順序) ごとに記憶します。
    同じ変数名に同じ密度を渡す呼び出しの間でだけ共有できます。
    """

    def __init__(self):
        self.densities: dict[str, Density] = {}
        self.values: dict[tuple, Fraction] = {}

    def unseen(self, densities: Mapping[str, Density]) -> list[str]:
        """まだ登録されていない変数名を返す。登録済みの変数の密度が異なれば例外。"""
        names = []
        for var, density in densities.items():
            known = self.densities.get(var)
            if known is None:
                names.append(var)
            elif known != density:
                raise PreconditionError(f"変数 {var} に以前と異なる密度が渡されました")
        return names

    def __len__(self) -> int:
        return len(self.values)


def _monomials(expr: sympy.Expr) -> list[tuple[sympy.Expr, Fraction]]:
    """展開した多項式を (単項式, 係数) の列に分ける"""
    expr = sympy.expand(expr)
    if expr == 0:
        return []
    symbols = sorted(expr.free_symbols, key=lambda s: s.name)
    if not symbols:
        return [(sympy.Integer(1), to_fraction(expr))]
    result = []
    for exponents, coefficient in sympy.Poly(expr, *symbols).terms():
        monomial = sympy.Mul(*(symbol**k for symbol, k in zip(symbols, exponents)))
        result.append((monomial, to_fraction(coefficient)))
    return result


class _Integrator:
    """
    制約を変数ごとに上下界へ分解し、場合分けしながら逐次積分する。
    積分は被積分関数について線形なので、単項式ごとの結果を memo で使い回す。
    """

    def __init__(self, densities: dict[str, Density], max_cells: int, memo: dict[tuple, Fraction]):
        self.densities = densities
        self.max_cells = max_cells
        self.memo = memo

    def run(self, integrand: sympy.Expr, constraints: list[tuple[AffineExpr, bool]], order: list[str]) -> Fraction:
        pending = []
        seen = set()
        for difference, strict in constraints:
            if difference.is_constant:
                if difference.constant > 0 or (difference.constant == 0 and strict):
                    return Fraction(0)
                continue
            key = _normalize(difference, strict)
            if key not in seen:
                seen.add(key)
                pending.append(key)

        if not order:
            if pending:
                raise UnboundedRegion(f"積分されない変数を含む制約があります: {pending[0][0]}")
            return to_fraction(integrand)

        region = frozenset(pending)
        total = Fraction(0)
        for monomial, coefficient in _monomials(integrand):
            key = (monomial, region, tuple(order))
            value = self.memo.get(key)
            if value is None:
                value = self._eliminate(monomial, pending, order)
                self.memo[key] = value
            total += coefficient * value
        return total

    def _eliminate(self, integrand: sympy.Expr, pending: list[tuple[AffineExpr, bool]], order: list[str]) -> Fraction:
        var, rest = order[0], order[1:]
        lowers, uppers, others = [], [], []
        for difference, strict in pending:
            a = difference.coefficient(var)
            if a == 0:
                others.append((difference, strict))
                continue
            bound = difference.without(var).scale(-1 / a)
            (uppers if a > 0 else lowers).append(bound)

        total = Fraction(0)
        for lo, hi, density in self.densities[var]:
            candidate_lowers = _prune(lowers + [AffineExpr.constant_of(lo)], keep_max=True)
            candidate_uppers = _prune(uppers + [AffineExpr.constant_of(hi)], keep_max=False)
            cells = len(candidate_lowers) * len(candidate_uppers)
            if cells > self.max_cells:
                raise DepthExceeded(f"変数 {var} の場合分けが上限 {self.max_cells} を超えました: {cells}")
            weighted = MultiPoly.from_expr(integrand * density.expr)
            for i, lower in enumerate(candidate_lowers):
                for j, upper in enumerate(candidate_uppers):
                    cell = list(others)
                    cell += [(other - lower, True) for k, other in enumerate(candidate_lowers) if k != i]
                    cell += [(upper - other, True) for k, other in enumerate(candidate_uppers) if k != j]
                    cell.append((lower - upper, True))
                    inner = poly_integrate(weighted, var, lower, upper)
                    total += self.run(inner.expr, cell, rest)
        return total


def _prune(bounds: list[AffineExpr], keep_max: bool) -> list[AffineExpr]:
    """定数の候補は最大(下界)または最小(上界)の1つだけ残す。重複も除く。"""
    constants = [bound.constant for bound in bounds if bound.is_constant]
    symbolic = []
    for bound in bounds:
        if not bound.is_constant and bound not in symbolic:
            symbolic.append(bound)
    if constants:
        symbolic.append(AffineExpr.constant_of(max(constants) if keep_max else min(constants)))
    return symbolic


def polytope_probability(
    densities: Mapping[str, object],
    constraints: ConstraintSystem | Iterable[Constraint],
    elimination_order: list[str] | None = None,
    max_cells: int = DEFAULT_MAX_CELLS,
    cache: IntegralCache | None = None,
) -> Fraction:
    """
    線形制約で切り取られた領域の確率質量を、密度の積について逐次積分で厳密に求めます。
    elimination_order は内側(最初に消去する変数)から並べます。
    省略時は宣言順の逆です。
    cache を渡すと途中結果を呼び出しの間で共有します。
    """
    system = constraints if isinstance(constraints, ConstraintSystem) else ConstraintSystem(tuple(constraints))
    pieces = {var: _as_density(var, value) for var, value in densities.items()}
    if cache is None:
        cache = IntegralCache()
    for var in cache.unseen(pieces):
        _check_normalized(var, pieces[var])
        cache.densities[var] = pieces[var]

    unbounded = system.variables - pieces.keys()
    if unbounded:
        raise UnboundedRegion(f"密度のない変数が制約に含まれています: {sorted(unbounded)}")

    order = list(elimination_order) if elimination_order is not None else list(reversed(list(pieces)))
    if sorted(order) != sorted(pieces):
        raise PreconditionError(f"消去順序 {order} が密度の変数 {sorted(pieces)} と一致しません")

    normalized = [(constraint.difference, constraint.strict) for constraint in system.constraints]
    result = _Integrator(pieces, max_cells, cache.values).run(sympy.Integer(1), normalized, order)
    logger.debug("polytope probability over %s = %s (cached %d)", order, result, len(cache))
    return result
