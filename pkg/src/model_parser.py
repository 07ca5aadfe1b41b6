# src/model_parser.py
from fractions import Fraction
from pathlib import Path

import sympy
from lark import Lark, Transformer
from lark.exceptions import UnexpectedInput, VisitError

from .automaton import T, Distribution, Edge, StochasticAutomaton
from .errors import ModelParseError, ParseError
from .polyint import AffineExpr, Constraint, MultiPoly
from .utils import read_source

# 多項式と有理数は両方の文法で共有する
_COMMON_GRAMMAR = r"""
    piece: "[" RATIONAL "," RATIONAL "]" ":" poly ";"
    poly: SIGN? term (SIGN term)*
    term: RATIONAL "*" power   -> scaled
        | power                -> monic
        | RATIONAL             -> constant
    power: "t" ("^" INT)?

    SIGN: "+" | "-"
    RATIONAL: /\d+\/\d+/ | /\d+(\.\d+)?/
    NAME: /[A-Za-z_][A-Za-z0-9_]*/
    COMMENT: /#[^\n]*/

    %import common.INT
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

MODEL_GRAMMAR = r"""
    start: statement*
    ?statement: clock_decl | location_decl | edge_decl
    clock_decl: "clock" NAME "cdf" "{" piece+ "}"
    location_decl: "location" NAME [INIT] "set" "{" [names] "}" "props" "{" [names] "}"
    edge_decl: "edge" NAME "-" NAME "{" NAME "}" "->" NAME
    names: NAME ("," NAME)*
    INIT: "init"
""" + _COMMON_GRAMMAR

CONSTRAINT_GRAMMAR = r"""
    start: statement*
    ?statement: var_decl | constraint_decl | order_decl
    var_decl: "var" NAME "density" "{" piece+ "}"
    constraint_decl: "constraint" affine CMP affine
    order_decl: "order" NAME ("," NAME)*
    affine: SIGN? aterm (SIGN aterm)*
    aterm: RATIONAL "*" NAME   -> scaled_var
         | NAME                -> plain_var
         | RATIONAL            -> affine_constant
    CMP: "<=" | ">=" | "<" | ">"
""" + _COMMON_GRAMMAR

_model_parser = Lark(MODEL_GRAMMAR, parser="lalr", maybe_placeholders=True)
_constraint_parser = Lark(CONSTRAINT_GRAMMAR, parser="lalr", maybe_placeholders=True)


class _PolynomialMixin:
    """区分多項式の部分木を sympy 式に変換する共通処理"""

    def RATIONAL(self, token):
        return Fraction(str(token))

    def power(self, items):
        exponent = int(items[0]) if items and items[0] is not None else 1
        return T**exponent

    def scaled(self, items):
        coefficient, power = items
        return sympy.Rational(coefficient.numerator, coefficient.denominator) * power

    def monic(self, items):
        return items[0]

    def constant(self, items):
        value = items[0]
        return sympy.Rational(value.numerator, value.denominator)

    def poly(self, items):
        total = sympy.Integer(0)
        sign = 1
        for item in items:
            if isinstance(item, str) and item in ("+", "-"):
                sign = -1 if item == "-" else 1
                continue
            total += sign * item
            sign = 1
        return sympy.expand(total)

    def piece(self, items):
        lo, hi, expr = items
        return lo, hi, expr


class _ModelTransformer(_PolynomialMixin, Transformer):
    def names(self, items):
        return [str(item) for item in items]

    def clock_decl(self, items):
        name, *pieces = items
        return ("clock", str(name), Distribution.from_pieces(pieces))

    def location_decl(self, items):
        name, init, clocks, props = items
        return ("location", str(name), init is not None, tuple(clocks or ()), frozenset(props or ()))

    def edge_decl(self, items):
        source, action, clock, target = (str(item) for item in items)
        return ("edge", Edge(source, action, clock, target))

    def start(self, items):
        return items


class _ConstraintTransformer(_PolynomialMixin, Transformer):
    def scaled_var(self, items):
        coefficient, name = items
        return AffineExpr.variable(str(name), coefficient)

    def plain_var(self, items):
        return AffineExpr.variable(str(items[0]))

    def affine_constant(self, items):
        return AffineExpr.constant_of(items[0])

    def affine(self, items):
        total = AffineExpr.constant_of(0)
        sign = 1
        for item in items:
            if isinstance(item, str) and item in ("+", "-"):
                sign = -1 if item == "-" else 1
                continue
            total = total + item.scale(sign)
            sign = 1
        return total

    def var_decl(self, items):
        name, *pieces = items
        name = str(name)
        symbol = sympy.Symbol(name)
        density = tuple((lo, hi, MultiPoly.from_expr(expr.subs(T, symbol))) for lo, hi, expr in pieces)
        return ("var", name, density)

    def constraint_decl(self, items):
        lhs, cmp, rhs = items
        cmp = str(cmp)
        if cmp in ("<", "<="):
            return ("constraint", Constraint(lhs, rhs, strict=cmp == "<"))
        return ("constraint", Constraint(rhs, lhs, strict=cmp == ">"))

    def order_decl(self, items):
        return ("order", [str(item) for item in items])

    def start(self, items):
        return items


def _parse(parser: Lark, transformer: Transformer, text: str, error_class: type[ParseError]):
    try:
        tree = parser.parse(text)
    except UnexpectedInput as e:
        raise error_class(f"構文エラー: {e.__class__.__name__}", line=e.line, column=e.column) from None
    try:
        return transformer.transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ParseError):
            raise e.orig_exc from None
        raise error_class(f"モデルの変換に失敗しました: {e.orig_exc}") from None


def parse_model(text: str) -> StochasticAutomaton:
    """
    確率オートマトンのテキスト形式を読み込みます。
    整合性の検査は validate_automaton で別途行います。
    """
    statements = _parse(_model_parser, _ModelTransformer(), text, ModelParseError)

    clocks: dict[str, Distribution] = {}
    locations: list[str] = []
    setting: dict[str, tuple[str, ...]] = {}
    labeling: dict[str, frozenset[str]] = {}
    edges: list[Edge] = []
    initials: list[str] = []
    for statement in statements:
        kind = statement[0]
        if kind == "clock":
            _, name, dist = statement
            if name in clocks:
                raise ModelParseError(f"クロック {name} が重複して定義されています")
            clocks[name] = dist
        elif kind == "location":
            _, name, is_initial, clock_list, props = statement
            if name in setting:
                raise ModelParseError(f"ロケーション {name} が重複して定義されています")
            locations.append(name)
            setting[name] = clock_list
            labeling[name] = props
            if is_initial:
                initials.append(name)
        else:
            edge = statement[1]
            if any(e.source == edge.source and e.action == edge.action for e in edges):
                raise ModelParseError(f"{edge.source} のアクション {edge.action} が重複しています")
            edges.append(edge)

    if len(initials) != 1:
        raise ModelParseError(f"init 指定のロケーションはちょうど1つ必要です (現在 {len(initials)} 個)")

    return StochasticAutomaton(
        locations=tuple(locations),
        initial=initials[0],
        clocks=clocks,
        edges=tuple(edges),
        setting=setting,
        labeling=labeling,
    )


def load_model(path: str | Path) -> StochasticAutomaton:
    return parse_model(read_source(path, ModelParseError))


def parse_constraint_file(text: str):
    """
    integrate サブコマンド用の制約ファイルを読み込み、
    (密度の辞書, 制約のリスト, 消去順序または None) を返します。
    """
    statements = _parse(_constraint_parser, _ConstraintTransformer(), text, ParseError)
    densities = {}
    constraints = []
    order = None
    for statement in statements:
        kind = statement[0]
        if kind == "var":
            _, name, density = statement
            if name in densities:
                raise ParseError(f"変数 {name} が重複して定義されています")
            densities[name] = density
        elif kind == "constraint":
            constraints.append(statement[1])
        else:
            order = statement[1]
    return densities, constraints, order
