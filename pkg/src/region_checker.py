# src/region_checker.py
import itertools
import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterator

import sympy
from joblib import Parallel, delayed

from .adversary import Adversary, resolve
from .automaton import T, StochasticAutomaton
from .errors import PreconditionError
from .logic import Comparator, Formula, Until, Verdict, decide, eval_state_formula, require_upper_time_bound
from .polyint import DEFAULT_MAX_CELLS, AffineExpr, Constraint, IntegralCache, MultiPoly, polytope_probability

logger = logging.getLogger(__name__)

# 経過時間の残りを表す大域クロック
GLOBAL_CLOCK = "a"
DEFAULT_MAX_DEPTH = 12


def clock_variable(clock: str, depth: int) -> str:
    """深さ depth で設定されたクロックの記号変数名 (例: x_0)"""
    return f"{clock}_{depth}"


@dataclass(frozen=True)
class RegionNode:
    location: str
    ordering: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    depth: int
    a: AffineExpr
    a_positive: bool
    variables: tuple[tuple[str, str], ...] = ()
    history: tuple[str, ...] = ()
    label: str | None = None
    probability: Fraction | None = None
    action: str | None = None


@dataclass(frozen=True)
class RegionTotals:
    sigma_p: Fraction
    sigma_f: Fraction
    undecided_mass: Fraction


@dataclass(frozen=True)
class RegionReport:
    verdict: Verdict
    sigma_p: Fraction
    sigma_f: Fraction
    undecided_mass: Fraction
    depth: int
    nodes: int

    @property
    def interval(self) -> tuple[Fraction, Fraction]:
        return self.sigma_p, 1 - self.sigma_f


def initial_node(sa: StochasticAutomaton, c: Fraction) -> RegionNode:
    """初期ロケーションで a = c、他のクロックは未定義の根ノード"""
    c = Fraction(c)
    if c < 0:
        raise PreconditionError(f"時間上限は0以上で指定してください: {c}")
    return RegionNode(
        location=sa.initial,
        ordering=(),
        constraints=(),
        depth=0,
        a=AffineExpr.constant_of(c),
        a_positive=c > 0,
        probability=Fraction(1),
    )


def _densities(node: RegionNode, sa: StochasticAutomaton) -> dict:
    densities = {}
    for name, clock in node.variables:
        symbol = sympy.Symbol(name)
        pieces = []
        for lo, hi, density in sa.clocks[clock].density_pieces:
            pieces.append((lo, hi, MultiPoly.from_expr(density.as_expr().subs(T, symbol))))
        densities[name] = tuple(pieces)
    return densities


def path_probability(
    node: RegionNode,
    sa: StochasticAutomaton,
    max_cells: int = DEFAULT_MAX_CELLS,
    cache: IntegralCache | None = None,
) -> Fraction:
    """
    根からノードまでの経路の確率。経路上の全クロック変数の密度の積を積分する。
    同じ木のノードで cache を共有すると、共通する部分積分は一度だけ計算される。
    """
    if not node.variables:
        return Fraction(1)
    return polytope_probability(_densities(node, sa), node.constraints, max_cells=max_cells, cache=cache)


def expand(
    node: RegionNode,
    sa: StochasticAutomaton,
    adv: Adversary,
    max_cells: int = DEFAULT_MAX_CELLS,
    cache: IntegralCache | None = None,
) -> list[RegionNode]:
    """
    ロケーションのクロックを新しい変数として設定し、a を含む全順序ごとに子ノードを作ります。
    最小のクロックが発火し、質量0の順序は枝刈りします。
    """
    if sa.is_terminating(node.location):
        return []
    fresh = tuple((clock_variable(clock, node.depth), clock) for clock in sa.clocks_at(node.location))
    clock_of = dict(fresh)
    terms = {name: AffineExpr.variable(name) for name, _ in fresh}
    terms[GLOBAL_CLOCK] = node.a
    variables = node.variables + fresh

    children = []
    for ordering in itertools.permutations([name for name, _ in fresh] + [GLOBAL_CLOCK]):
        constraints = list(node.constraints)
        for smaller, larger in zip(ordering, ordering[1:]):
            constraints.append(Constraint(terms[smaller], terms[larger]))
        fired = next(name for name in ordering if name != GLOBAL_CLOCK)
        clock = clock_of[fired]
        edge = resolve(adv, node.history, node.location, clock, sa.edges_from(node.location, clock))
        child = RegionNode(
            location=edge.target,
            ordering=ordering,
            constraints=tuple(constraints),
            depth=node.depth + 1,
            a=node.a - terms[fired],
            a_positive=ordering.index(GLOBAL_CLOCK) > ordering.index(fired),
            variables=variables,
            history=node.history + (node.location,),
            action=edge.action,
        )
        probability = path_probability(child, sa, max_cells, cache)
        if probability == 0:
            continue
        children.append(replace(child, probability=probability))
    logger.debug("expanded %s at depth %d into %d classes", node.location, node.depth, len(children))
    return children


def label_node(node: RegionNode, phi1: Formula, phi2: Formula, sa: StochasticAutomaton, strict: bool = False) -> str:
    """p (合格), f (不合格), u (未決) のいずれかを返す"""
    if node.a_positive and eval_state_formula(phi2, node.location, sa, strict):
        return "p"
    if (
        not node.a_positive
        or not eval_state_formula(phi1, node.location, sa, strict)
        or sa.is_terminating(node.location)
    ):
        return "f"
    return "u"


def iter_region_levels(
    sa: StochasticAutomaton,
    adv: Adversary,
    f: Until,
    max_depth: int = DEFAULT_MAX_DEPTH,
    jobs: int = 1,
    max_cells: int = DEFAULT_MAX_CELLS,
    strict: bool = False,
) -> Iterator[tuple[int, RegionTotals, list[RegionNode]]]:
    """
    根のラベル付け後と各レベルの展開後に (深さ, 合計, 未決ノード) を返すジェネレータ。
    判定が確定するか max_depth に達すると止まります。
    """
    require_upper_time_bound(f)
    root = initial_node(sa, f.time_bound)
    if f.time_cmp is Comparator.LE:
        # 上限 <= 0 でも時刻0の初期ロケーションは範囲内
        root = replace(root, a_positive=True)
    root = replace(root, label=label_node(root, f.left, f.right, sa, strict))
    sigma_p = Fraction(1) if root.label == "p" else Fraction(0)
    sigma_f = Fraction(1) if root.label == "f" else Fraction(0)
    frontier = [root] if root.label == "u" else []
    depth = 0
    cache = IntegralCache()
    yield depth, RegionTotals(sigma_p, sigma_f, 1 - sigma_p - sigma_f), frontier

    while frontier and depth < max_depth:
        if decide(sigma_p, 1 - sigma_f, f.prob_cmp, f.prob_bound) is not None:
            return
        logger.info("--- 領域木 深さ %d の展開 開始 (%d ノード) ---", depth + 1, len(frontier))
        expanded = Parallel(n_jobs=jobs)(delayed(expand)(node, sa, adv, max_cells, cache) for node in frontier)
        frontier = []
        for children in expanded:
            for child in children:
                child = replace(child, label=label_node(child, f.left, f.right, sa, strict))
                if child.label == "p":
                    sigma_p += child.probability
                elif child.label == "f":
                    sigma_f += child.probability
                else:
                    frontier.append(child)
        depth += 1
        logger.info("--- 領域木 深さ %d の展開 終了: Σp=%s Σf=%s ---", depth, sigma_p, sigma_f)
        yield depth, RegionTotals(sigma_p, sigma_f, 1 - sigma_p - sigma_f), frontier


def run_region_check(
    sa: StochasticAutomaton,
    adv: Adversary,
    f: Until,
    max_depth: int = DEFAULT_MAX_DEPTH,
    jobs: int = 1,
    max_cells: int = DEFAULT_MAX_CELLS,
    strict: bool = False,
) -> RegionReport:
    """領域木を幅優先で展開し、Σp と Σf から until 式を判定します。"""
    nodes = 0
    depth, totals = 0, None
    for depth, totals, frontier in iter_region_levels(sa, adv, f, max_depth, jobs, max_cells, strict):
        nodes += len(frontier)
    value = decide(totals.sigma_p, 1 - totals.sigma_f, f.prob_cmp, f.prob_bound)
    verdict = Verdict.from_bool(value)
    logger.info("region check verdict=%s depth=%d", verdict.value, depth)
    return RegionReport(
        verdict=verdict,
        sigma_p=totals.sigma_p,
        sigma_f=totals.sigma_f,
        undecided_mass=totals.undecided_mass,
        depth=depth,
        nodes=nodes,
    )
