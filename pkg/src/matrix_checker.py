# src/matrix_checker.py
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator

import numpy as np
from joblib import Parallel, delayed

from .adversary import Adversary, resolve
from .automaton import StochasticAutomaton, interval_probability
from .errors import DeltaNotDividingBound, DeltaTooLarge, UnsupportedAdversary
from .logic import Until, Verdict, decide, eval_state_formula, require_upper_time_bound

logger = logging.getLogger(__name__)

ZERO = Fraction(0)

# クロック名 -> 区間 (δ(k-1), δk] に入る確率の列 (k = 1..N)
BinTable = dict[str, tuple[Fraction, ...]]


@dataclass(frozen=True)
class ClockMatrix:
    """
    ロケーションの各クロックが何番目の δ 区間にあるかの同時確率。
    entries[k1-1, ..., kn-1] が区間番号 [k1..kn] の確率 (Fraction の object 配列)。
    """

    location: str
    time_index: int
    clocks: tuple[str, ...]
    entries: np.ndarray = field(compare=False)

    def total(self) -> Fraction:
        return sum(self.entries.flat, ZERO)

    def nonzero(self) -> bool:
        return any(value != 0 for value in self.entries.flat)

    def as_dict(self) -> dict[tuple[int, ...], Fraction]:
        """0 でない要素を 1 始まりの区間番号で返す"""
        return {
            tuple(k + 1 for k in index): value
            for index, value in np.ndenumerate(self.entries)
            if value != 0
        }


@dataclass
class GlobalTotals:
    total_pass: Fraction = ZERO
    total_fail: Fraction = ZERO
    error: Fraction = ZERO


@dataclass
class Snapshot:
    time_index: int
    matrices: dict[str, ClockMatrix]
    live: set[str]
    prob: dict[str, Fraction] = field(default_factory=dict)
    remain: dict[str, bool] = field(default_factory=dict)

    def live_mass(self) -> Fraction:
        return sum((self.matrices[location].total() for location in self.live), ZERO)


@dataclass(frozen=True)
class TimeStep:
    """new_time_matrix の結果"""

    matrix: ClockMatrix
    new_states: frozenset[str]
    remain: bool
    prob_increments: dict[str, Fraction]
    error_increment: Fraction


@dataclass(frozen=True)
class MatrixReport:
    verdict: Verdict
    total_pass: Fraction
    total_fail: Fraction
    error: Fraction
    iterations: int
    delta: Fraction
    timed_out: bool


def _zeros(shape: tuple[int, ...]) -> np.ndarray:
    return np.full(shape, ZERO, dtype=object)


def check_delta(sa: StochasticAutomaton, delta: Fraction):
    lower_bounds = [dist.support_lo for dist in sa.clocks.values()]
    smallest = min(lower_bounds) if lower_bounds else None
    if delta <= 0 or (smallest is not None and delta > smallest):
        raise DeltaTooLarge(
            f"δ={delta} はクロックの台の下限の最小値 {smallest} 以下の正の値である必要があります"
        )


def clock_config_probs(sa: StochasticAutomaton, delta: Fraction) -> BinTable:
    """各クロックが区間 (δ(k-1), δk] に入る確率を1回だけ計算します。"""
    delta = Fraction(delta)
    check_delta(sa, delta)
    bins = {}
    for name, dist in sa.clocks.items():
        count = math.ceil(dist.support_hi / delta)
        bins[name] = tuple(
            interval_probability(dist, delta * (k - 1), delta * k) for k in range(1, count + 1)
        )
    return bins


def _fresh_entries(clocks: tuple[str, ...], bins: BinTable) -> np.ndarray:
    # クロックの独立性から各区間確率の直積になる
    entries = np.array(Fraction(1), dtype=object)
    for clock in clocks:
        entries = np.multiply.outer(entries, np.array(bins[clock], dtype=object))
    return entries


def empty_matrix(sa: StochasticAutomaton, location: str, time_index: int, bins: BinTable) -> ClockMatrix:
    clocks = sa.clocks_at(location)
    shape = tuple(len(bins[clock]) for clock in clocks)
    return ClockMatrix(location, time_index, clocks, _zeros(shape))


def init_matrix(sa: StochasticAutomaton, bins: BinTable) -> ClockMatrix:
    """初期ロケーションの時刻0の行列"""
    clocks = sa.clocks_at(sa.initial)
    return ClockMatrix(sa.initial, 0, clocks, _fresh_entries(clocks, bins))


def new_time_matrix(
    prev: ClockMatrix,
    bins: BinTable,
    adv: Adversary,
    sa: StochasticAutomaton,
) -> TimeStep:
    """
    時刻を δ 進めます。全区間番号が2以上の要素は1つずつずらし、
    区間番号1がちょうど1つの要素はそのクロックを発火させ、2つ以上なら error に加えます。
    """
    entries = prev.entries
    rank = entries.ndim
    following = _zeros(entries.shape)
    if rank:
        shifted = entries[(slice(1, None),) * rank]
        following[(slice(0, -1),) * rank] = shifted
        remain = any(value != 0 for value in shifted.flat)
    else:
        remain = False

    picks: dict[str, str] = {}
    new_states = set()
    prob_increments: dict[str, Fraction] = {}
    error_increment = ZERO
    if rank:
        for index, value in np.ndenumerate(entries):
            if value == 0:
                continue
            expiring = [axis for axis, k in enumerate(index) if k == 0]
            if len(expiring) > 1:
                error_increment += value
            elif len(expiring) == 1:
                clock = prev.clocks[expiring[0]]
                if clock not in picks:
                    edge = resolve(adv, (), prev.location, clock, sa.edges_from(prev.location, clock))
                    picks[clock] = edge.target
                target = picks[clock]
                new_states.add(target)
                prob_increments[target] = prob_increments.get(target, ZERO) + value

    matrix = ClockMatrix(prev.location, prev.time_index + 1, prev.clocks, following)
    return TimeStep(matrix, frozenset(new_states), remain, prob_increments, error_increment)


def new_state_matrix(target_matrix: ClockMatrix, entry_prob: Fraction, bins: BinTable) -> ClockMatrix:
    """ロケーションに確率 entry_prob で入ったときのクロック設定の質量を加えます。"""
    if entry_prob == 0:
        return target_matrix
    entries = target_matrix.entries + entry_prob * _fresh_entries(target_matrix.clocks, bins)
    return ClockMatrix(target_matrix.location, target_matrix.time_index, target_matrix.clocks, entries)


def _verdict(totals: GlobalTotals, f: Until) -> bool | None:
    return decide(totals.total_pass, 1 - totals.total_fail, f.prob_cmp, f.prob_bound)


def _hopeless(totals: GlobalTotals, f: Until) -> bool:
    p = f.prob_bound
    return totals.error >= 1 - p and totals.error >= p


def _check_preconditions(sa: StochasticAutomaton, adv: Adversary, f: Until, delta: Fraction) -> int:
    require_upper_time_bound(f)
    if not adv.memoryless:
        raise UnsupportedAdversary("行列エンジンは履歴に依存しない方策のみ扱えます")
    check_delta(sa, delta)
    steps = f.time_bound / delta
    if steps.denominator != 1:
        raise DeltaNotDividingBound(f"時間上限 {f.time_bound} は δ={delta} の整数倍ではありません")
    return int(steps)


def iter_matrix_check(
    sa: StochasticAutomaton,
    adv: Adversary,
    f: Until,
    delta: Fraction,
    jobs: int = 1,
    strict: bool = False,
) -> Iterator[tuple[Snapshot, GlobalTotals]]:
    """
    離散化したスナップショットを1ステップずつ計算し、
    初期化後と各反復後に (Snapshot, GlobalTotals) を返すジェネレータ。
    時間切れの補正はここでは行いません。
    """
    delta = Fraction(delta)
    steps = _check_preconditions(sa, adv, f, delta)
    bins = clock_config_probs(sa, delta)
    totals = GlobalTotals()

    def satisfies(formula, location):
        return eval_state_formula(formula, location, sa, strict)

    # 初期ロケーションの扱い
    snapshot = Snapshot(0, {}, set())
    if satisfies(f.right, sa.initial):
        totals.total_pass = Fraction(1)
    elif satisfies(f.left, sa.initial) and not sa.is_terminating(sa.initial):
        snapshot.matrices[sa.initial] = init_matrix(sa, bins)
        snapshot.live.add(sa.initial)
    else:
        totals.total_fail = Fraction(1)
    yield snapshot, replace(totals)

    for ct in range(1, steps + 1):
        if not snapshot.live or _verdict(totals, f) is not None or _hopeless(totals, f):
            return
        previous = sorted(snapshot.live)
        results = Parallel(n_jobs=jobs)(
            delayed(new_time_matrix)(snapshot.matrices[location], bins, adv, sa) for location in previous
        )

        matrices: dict[str, ClockMatrix] = {}
        live: set[str] = set()
        prob: dict[str, Fraction] = {}
        remain: dict[str, bool] = {}
        for location, step in zip(previous, results):
            matrices[location] = step.matrix
            remain[location] = step.remain
            totals.error += step.error_increment
            for target, value in step.prob_increments.items():
                prob[target] = prob.get(target, ZERO) + value
            live |= step.new_states
            if step.remain:
                live.add(location)

        for q in sorted(live):
            entered = prob.get(q, ZERO)
            if satisfies(f.right, q):
                totals.total_pass += entered
                live.discard(q)
                matrices.pop(q, None)
            elif satisfies(f.left, q) and not sa.is_terminating(q):
                matrix = matrices.get(q) or empty_matrix(sa, q, ct, bins)
                matrices[q] = new_state_matrix(matrix, entered, bins)
            else:
                totals.total_fail += entered
                live.discard(q)
                matrices.pop(q, None)

        snapshot = Snapshot(ct, {q: matrices[q] for q in live}, live, prob, remain)
        logger.debug(
            "t=%s live=%s pass=%s fail=%s error=%s",
            ct * delta,
            sorted(live),
            totals.total_pass,
            totals.total_fail,
            totals.error,
        )
        yield snapshot, replace(totals)


def run_matrix_check(
    sa: StochasticAutomaton,
    adv: Adversary,
    f: Until,
    delta: Fraction,
    jobs: int = 1,
    strict: bool = False,
) -> MatrixReport:
    """離散化による判定。時間切れでは total_fail := 1 - total_pass - error とします。"""
    delta = Fraction(delta)
    steps = _check_preconditions(sa, adv, f, delta)
    logger.info("--- 行列エンジン 開始 (δ=%s, 反復上限 %d) ---", delta, steps)
    iterations = 0
    snapshot, totals = None, GlobalTotals()
    for snapshot, totals in iter_matrix_check(sa, adv, f, delta, jobs, strict):
        iterations = snapshot.time_index

    # 時間切れ: 未決のまま残った質量はすべて不合格とみなす
    timed_out = False
    if iterations == steps:
        adjusted = 1 - totals.total_pass - totals.error
        timed_out = adjusted != totals.total_fail
        totals.total_fail = adjusted

    verdict = Verdict.from_bool(_verdict(totals, f), positive=Verdict.PASS, negative=Verdict.FAIL)
    logger.info(
        "--- 行列エンジン 終了: %s (pass=%s fail=%s error=%s) ---",
        verdict.value,
        totals.total_pass,
        totals.total_fail,
        totals.error,
    )
    return MatrixReport(
        verdict=verdict,
        total_pass=totals.total_pass,
        total_fail=totals.total_fail,
        error=totals.error,
        iterations=iterations,
        delta=delta,
        timed_out=timed_out,
    )


def complexity_bound(sa: StochasticAutomaton, f: Until, delta: Fraction) -> tuple[Fraction, Fraction]:
    """
    時間計算量 (t/δ)·min(t/δ, n2/δ)^n1·|S| と空間計算量 2·(n2/δ)^n1·|S| の見積もり。
    n1 はロケーションあたりの最大クロック数、n2 はクロックの台の上限の最大値。
    """
    delta = Fraction(delta)
    n1 = max((len(sa.clocks_at(location)) for location in sa.locations), default=0)
    n2 = max((dist.support_hi for dist in sa.clocks.values()), default=ZERO)
    states = len(sa.locations)
    steps = Fraction(f.time_bound) / delta
    time_units = steps * min(steps, n2 / delta) ** n1 * states
    space_units = 2 * (n2 / delta) ** n1 * states
    return time_units, space_units
