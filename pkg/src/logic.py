# src/logic.py
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

from lark import Lark, Transformer
from lark.exceptions import UnexpectedInput, VisitError

from .automaton import StochasticAutomaton, validate_automaton
from .config import EngineOptions
from .errors import (
    InvalidModel,
    NestedUntil,
    ParseError,
    PreconditionError,
    UnknownProposition,
    UnsupportedTimeBound,
)
from .utils import parse_rational

logger = logging.getLogger(__name__)


class Comparator(str, Enum):
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="

    def holds(self, left, right) -> bool:
        if self is Comparator.LT:
            return left < right
        if self is Comparator.LE:
            return left <= right
        if self is Comparator.GT:
            return left > right
        return left >= right

    def mirrored(self) -> "Comparator":
        """P(□φ) = 1 - P(◊¬φ) の書き換えで使う向きの反転"""
        return {
            Comparator.LT: Comparator.GT,
            Comparator.LE: Comparator.GE,
            Comparator.GT: Comparator.LT,
            Comparator.GE: Comparator.LE,
        }[self]

    @property
    def is_upper_time_bound(self) -> bool:
        return self in (Comparator.LT, Comparator.LE)


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    TRUE = "true"
    FALSE = "false"
    UNDECIDED = "undecided"

    def as_bool(self) -> bool | None:
        if self in (Verdict.PASS, Verdict.TRUE):
            return True
        if self in (Verdict.FAIL, Verdict.FALSE):
            return False
        return None

    @classmethod
    def from_bool(cls, value: bool | None, positive: "Verdict" = None, negative: "Verdict" = None) -> "Verdict":
        if value is None:
            return cls.UNDECIDED
        if value:
            return positive or cls.TRUE
        return negative or cls.FALSE


# --- AST ---------------------------------------------------------------


@dataclass(frozen=True)
class TrueConst:
    pass


@dataclass(frozen=True)
class FalseConst:
    pass


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    operand: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"
    time_cmp: Comparator
    time_bound: Fraction
    prob_cmp: Comparator
    prob_bound: Fraction


@dataclass(frozen=True)
class Diamond:
    body: "Formula"
    time_cmp: Comparator
    time_bound: Fraction
    prob_cmp: Comparator
    prob_bound: Fraction


@dataclass(frozen=True)
class Box:
    body: "Formula"
    time_cmp: Comparator
    time_bound: Fraction
    prob_cmp: Comparator
    prob_bound: Fraction


Formula = Union[TrueConst, FalseConst, Atom, Not, And, Or, Implies, Until, Diamond, Box]
PATH_NODES = (Until, Diamond, Box)


# --- 構文解析 -----------------------------------------------------------

FORMULA_GRAMMAR = r"""
    ?start: formula
    ?formula: disj
            | disj "=>" formula          -> implies
    ?disj: conj
         | disj "|" conj                 -> or_
    ?conj: unary
         | conj "&" unary                -> and_
    ?unary: "!" unary                    -> not_
          | primary
    ?primary: "tt"                       -> true
            | "ff"                       -> false
            | NAME                       -> atom
            | "(" formula ")"
            | path
            | "A" path_body              -> forall
            | "E" path_body              -> exists
    ?path: path_body CMP RATIONAL        -> with_probability
    ?path_body: "[" formula "U" bound formula "]"   -> until_body
              | "<>" bound unary                    -> diamond_body
              | "[]" bound unary                    -> box_body
    bound: "{" CMP RATIONAL "}"

    CMP: "<=" | ">=" | "<" | ">"
    RATIONAL: /\d+\/\d+/ | /\d+(\.\d+)?/
    NAME: /[A-Za-z_][A-Za-z0-9_]*/

    %import common.WS
    %ignore WS
"""

RESERVED_WORDS = frozenset({"tt", "ff", "U", "A", "E"})

_formula_parser = Lark(FORMULA_GRAMMAR, parser="lalr")


@dataclass(frozen=True)
class _PathBody:
    kind: str
    left: Formula | None
    right: Formula
    time_cmp: Comparator
    time_bound: Fraction


class _FormulaTransformer(Transformer):
    def RATIONAL(self, token):
        return parse_rational(str(token))

    def CMP(self, token):
        return Comparator(str(token))

    def NAME(self, token):
        name = str(token)
        if name in RESERVED_WORDS:
            raise ParseError(f"予約語は命題名に使えません: {name}")
        return name

    def true(self, items):
        return TrueConst()

    def false(self, items):
        return FalseConst()

    def atom(self, items):
        return Atom(items[0])

    def not_(self, items):
        return Not(items[0])

    def and_(self, items):
        return And(items[0], items[1])

    def or_(self, items):
        return Or(items[0], items[1])

    def implies(self, items):
        return Implies(items[0], items[1])

    def bound(self, items):
        return items[0], items[1]

    def until_body(self, items):
        left, (cmp, value), right = items
        return _PathBody("until", left, right, cmp, value)

    def diamond_body(self, items):
        (cmp, value), body = items
        return _PathBody("diamond", None, body, cmp, value)

    def box_body(self, items):
        (cmp, value), body = items
        return _PathBody("box", None, body, cmp, value)

    def with_probability(self, items):
        body, cmp, value = items
        return _build_path(body, cmp, value)

    def forall(self, items):
        # ∀ の「= 1」は「>= 1」で表す
        return _build_path(items[0], Comparator.GE, Fraction(1))

    def exists(self, items):
        return _build_path(items[0], Comparator.GT, Fraction(0))


def _build_path(body: _PathBody, prob_cmp: Comparator, prob_bound: Fraction):
    if not 0 <= prob_bound <= 1:
        raise ParseError(f"確率の閾値は [0, 1] の範囲で指定してください: {prob_bound}")
    if body.kind == "until":
        return Until(body.left, body.right, body.time_cmp, body.time_bound, prob_cmp, prob_bound)
    if body.kind == "diamond":
        return Diamond(body.right, body.time_cmp, body.time_bound, prob_cmp, prob_bound)
    return Box(body.right, body.time_cmp, body.time_bound, prob_cmp, prob_bound)


def _contains_path(formula: Formula) -> bool:
    if isinstance(formula, PATH_NODES):
        return True
    if isinstance(formula, Not):
        return _contains_path(formula.operand)
    if isinstance(formula, (And, Or, Implies)):
        return _contains_path(formula.left) or _contains_path(formula.right)
    return False


def _check_nesting(formula: Formula):
    """経路式はトップレベルの命題木の葉にだけ置ける"""
    if isinstance(formula, Until):
        if _contains_path(formula.left) or _contains_path(formula.right):
            raise NestedUntil("until 式の中に until 式を入れ子にすることはできません")
    elif isinstance(formula, (Diamond, Box)):
        if _contains_path(formula.body):
            raise NestedUntil("until 式の中に until 式を入れ子にすることはできません")
    elif isinstance(formula, Not):
        _check_nesting(formula.operand)
    elif isinstance(formula, (And, Or, Implies)):
        _check_nesting(formula.left)
        _check_nesting(formula.right)


def parse_formula(text: str) -> Formula:
    """
    PRTL 式を構文解析し、派生演算子を展開した核構文の AST を返します。
    """
    try:
        tree = _formula_parser.parse(text)
    except UnexpectedInput as e:
        raise ParseError(f"式の構文エラー: {text!r}", line=e.line, column=e.column) from None
    try:
        formula = _FormulaTransformer().transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ParseError):
            raise e.orig_exc from None
        raise ParseError(f"式の変換に失敗しました: {text!r}: {e.orig_exc}") from None
    _check_nesting(formula)
    return desugar(formula)


def desugar(formula: Formula) -> Formula:
    """∨, ⇒, ff, ◊, □ を核構文 (tt, 命題, ¬, ∧, until) に書き換えます。"""
    if isinstance(formula, (TrueConst, Atom)):
        return formula
    if isinstance(formula, FalseConst):
        return Not(TrueConst())
    if isinstance(formula, Not):
        return Not(desugar(formula.operand))
    if isinstance(formula, And):
        return And(desugar(formula.left), desugar(formula.right))
    if isinstance(formula, Or):
        return Not(And(Not(desugar(formula.left)), Not(desugar(formula.right))))
    if isinstance(formula, Implies):
        return desugar(Or(Not(formula.left), formula.right))
    if isinstance(formula, Until):
        return Until(
            desugar(formula.left),
            desugar(formula.right),
            formula.time_cmp,
            formula.time_bound,
            formula.prob_cmp,
            formula.prob_bound,
        )
    if isinstance(formula, Diamond):
        return Until(
            TrueConst(),
            desugar(formula.body),
            formula.time_cmp,
            formula.time_bound,
            formula.prob_cmp,
            formula.prob_bound,
        )
    if isinstance(formula, Box):
        return Until(
            TrueConst(),
            Not(desugar(formula.body)),
            formula.time_cmp,
            formula.time_bound,
            formula.prob_cmp.mirrored(),
            1 - formula.prob_bound,
        )
    raise TypeError(f"未知の式です: {formula!r}")


def pretty_print(formula: Formula) -> str:
    """parse_formula で読み戻せる文字列表現。二項演算は常に括弧で囲む。"""
    if isinstance(formula, TrueConst):
        return "tt"
    if isinstance(formula, FalseConst):
        return "ff"
    if isinstance(formula, Atom):
        return formula.name
    if isinstance(formula, Not):
        return f"!{pretty_print(formula.operand)}"
    if isinstance(formula, And):
        return f"({pretty_print(formula.left)} & {pretty_print(formula.right)})"
    if isinstance(formula, Or):
        return f"({pretty_print(formula.left)} | {pretty_print(formula.right)})"
    if isinstance(formula, Implies):
        return f"({pretty_print(formula.left)} => {pretty_print(formula.right)})"
    if isinstance(formula, Until):
        return (
            f"[ {pretty_print(formula.left)} U{{{formula.time_cmp.value}{formula.time_bound}}} "
            f"{pretty_print(formula.right)} ] {formula.prob_cmp.value} {formula.prob_bound}"
        )
    if isinstance(formula, (Diamond, Box)):
        op = "<>" if isinstance(formula, Diamond) else "[]"
        return (
            f"{op}{{{formula.time_cmp.value}{formula.time_bound}}} ({pretty_print(formula.body)}) "
            f"{formula.prob_cmp.value} {formula.prob_bound}"
        )
    raise TypeError(f"未知の式です: {formula!r}")


# --- 評価 ---------------------------------------------------------------

_warned_propositions: set[str] = set()


def eval_state_formula(phi: Formula, loc: str, sa: StochasticAutomaton, strict: bool = False) -> bool:
    """ロケーション loc のラベル ξ(loc) の上で状態式を評価します。"""
    if isinstance(phi, TrueConst):
        return True
    if isinstance(phi, FalseConst):
        return False
    if isinstance(phi, Atom):
        if phi.name in sa.labels_at(loc):
            return True
        if phi.name not in sa.propositions:
            if strict:
                raise UnknownProposition(f"どのロケーションにも現れない命題です: {phi.name}")
            if phi.name not in _warned_propositions:
                _warned_propositions.add(phi.name)
                logger.warning("unknown proposition %s is treated as false", phi.name)
        return False
    if isinstance(phi, Not):
        return not eval_state_formula(phi.operand, loc, sa, strict)
    if isinstance(phi, And):
        return eval_state_formula(phi.left, loc, sa, strict) and eval_state_formula(phi.right, loc, sa, strict)
    if isinstance(phi, Or):
        return eval_state_formula(phi.left, loc, sa, strict) or eval_state_formula(phi.right, loc, sa, strict)
    if isinstance(phi, Implies):
        return not eval_state_formula(phi.left, loc, sa, strict) or eval_state_formula(phi.right, loc, sa, strict)
    raise PreconditionError(f"状態式ではありません: {pretty_print(phi)}")


def decide(lower, upper, cmp: Comparator, p) -> bool | None:
    """
    確率が区間 [lower, upper] にあると分かっているとき、
    「確率 cmp p」が確定すれば True/False、未確定なら None。
    """
    if cmp is Comparator.GT:
        return True if lower > p else False if upper <= p else None
    if cmp is Comparator.GE:
        return True if lower >= p else False if upper < p else None
    if cmp is Comparator.LT:
        return True if upper < p else False if lower >= p else None
    return True if upper <= p else False if lower > p else None


def require_upper_time_bound(f: Until):
    if not f.time_cmp.is_upper_time_bound:
        raise UnsupportedTimeBound(f"時間上限 {f.time_cmp.value} {f.time_bound} は未対応です (< と <= のみ)")


def until_leaves(formula: Formula) -> list[Until]:
    """トップレベル式に現れる until の葉を出現順に(重複なしで)返す"""
    leaves: list[Until] = []

    def walk(node):
        if isinstance(node, Until):
            if node not in leaves:
                leaves.append(node)
        elif isinstance(node, Not):
            walk(node.operand)
        elif isinstance(node, (And, Or, Implies)):
            walk(node.left)
            walk(node.right)

    walk(formula)
    return leaves


def ground_value(
    formula: Formula,
    leaf_values: dict[Until, bool | None],
    sa: StochasticAutomaton,
    strict: bool = False,
) -> bool | None:
    """until の葉を判定結果で置き換えた式を初期ロケーションで三値評価します。"""
    if isinstance(formula, Until):
        return leaf_values[formula]
    if isinstance(formula, (TrueConst, FalseConst, Atom)):
        return eval_state_formula(formula, sa.initial, sa, strict)
    if isinstance(formula, Not):
        value = ground_value(formula.operand, leaf_values, sa, strict)
        return None if value is None else not value
    if isinstance(formula, And):
        left = ground_value(formula.left, leaf_values, sa, strict)
        right = ground_value(formula.right, leaf_values, sa, strict)
        if left is False or right is False:
            return False
        if left is None or right is None:
            return None
        return True
    return ground_value(desugar(formula), leaf_values, sa, strict)


@dataclass
class CheckResult:
    verdict: Verdict
    leaves: list[tuple[Until, object]]


def check_until(sa: StochasticAutomaton, adversary, f: Until, options: EngineOptions):
    """until 式1つを設定されたエンジンで判定し、エンジンのレポートを返します。"""
    require_upper_time_bound(f)
    # エンジンは logic を参照するため関数内で読み込む
    if options.engine == "matrix":
        from .matrix_checker import run_matrix_check

        if options.delta is None:
            raise PreconditionError("行列エンジンには delta の指定が必要です。")
        return run_matrix_check(sa, adversary, f, options.delta, jobs=options.jobs, strict=options.strict)
    if options.engine == "region":
        from .region_checker import run_region_check

        return run_region_check(
            sa,
            adversary,
            f,
            options.max_depth,
            jobs=options.jobs,
            max_cells=options.max_cells,
            strict=options.strict,
        )
    from .simulate import run_simulation_check

    return run_simulation_check(
        sa,
        adversary,
        f,
        samples=options.samples,
        seed=options.seed,
        confidence=options.confidence,
        jobs=options.jobs,
        strict=options.strict,
    )


def check(sa: StochasticAutomaton, adversary, formula: Formula, options: EngineOptions) -> CheckResult:
    """
    トップレベル式の判定。整合しないモデルは InvalidModel で拒否します。
    1. until の葉をエンジンで判定 2. 葉を結果で置換
    3. 命題を初期ロケーションで評価 4. 命題論理として三値評価
    """
    validation = validate_automaton(sa)
    if not validation.ok:
        raise InvalidModel(validation.codes())
    leaves = []
    leaf_values = {}
    for leaf in until_leaves(formula):
        logger.info("--- until 判定 開始 (%s): %s ---", options.engine, pretty_print(leaf))
        report = check_until(sa, adversary, leaf, options)
        leaves.append((leaf, report))
        leaf_values[leaf] = report.verdict.as_bool()
        logger.info("--- until 判定 終了: %s ---", report.verdict.value)
    value = ground_value(formula, leaf_values, sa, options.strict)
    return CheckResult(Verdict.from_bool(value), leaves)
