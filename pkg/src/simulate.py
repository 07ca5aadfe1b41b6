# src/simulate.py
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from numpy.random import SeedSequence, default_rng
from scipy.stats import norm

from .adversary import Adversary, resolve
from .automaton import StochasticAutomaton, sample_clock
from .errors import PreconditionError
from .logic import Until, Verdict, decide, eval_state_formula, require_upper_time_bound

logger = logging.getLogger(__name__)

CHUNK_SIZE = 1000


class PathEnd(str, Enum):
    TERMINAL = "terminal"
    HORIZON = "horizon"


@dataclass(frozen=True)
class SimStep:
    """ロケーションへの進入時刻と、そこで発火したアクション(経路の終わりなら終了理由)"""

    location: str
    time: float
    action: str | None = None
    end: PathEnd | None = None


SimPath = tuple[SimStep, ...]


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float
    samples: int
    seed: int
    confidence: float = 0.99

    @property
    def interval(self) -> tuple[float, float]:
        return max(0.0, self.mean - self.half_width), min(1.0, self.mean + self.half_width)


@dataclass(frozen=True)
class SimulationReport:
    verdict: Verdict
    estimate: Estimate


def sample_path(sa: StochasticAutomaton, adv: Adversary, horizon: float, seed) -> SimPath:
    """
    ロケーションに入るたびにクロックを逆変換法で設定し、最小のクロックの辺を発火させます。
    時間上限を超えるか終端ロケーションに着くまで続けます。
    seed には整数か SeedSequence を渡せます。
    """
    if horizon <= 0:
        raise PreconditionError(f"horizon は正の値で指定してください: {horizon}")
    rng = default_rng(seed)
    location = sa.initial
    now = 0.0
    history: list[str] = []
    steps: list[SimStep] = []
    while True:
        clocks = sa.clocks_at(location)
        if not clocks or sa.is_terminating(location):
            steps.append(SimStep(location, now, end=PathEnd.TERMINAL))
            break
        values = [sample_clock(sa.clocks[clock], rng.random()) for clock in clocks]
        # 同時満了は宣言順で先のクロックを優先する
        index = int(np.argmin(values))
        if now + values[index] > horizon:
            steps.append(SimStep(location, now, end=PathEnd.HORIZON))
            break
        clock = clocks[index]
        edge = resolve(adv, history, location, clock, sa.edges_from(location, clock))
        steps.append(SimStep(location, now, action=edge.action))
        history.append(location)
        location = edge.target
        now += values[index]
    return tuple(steps)


def until_holds(path: SimPath, sa: StochasticAutomaton, f: Until, strict: bool = False) -> bool:
    """経路上で φ1 を保ったまま時間上限内に φ2 に到達するか"""
    bound = float(f.time_bound)
    for step in path:
        if not f.time_cmp.holds(step.time, bound):
            return False
        if eval_state_formula(f.right, step.location, sa, strict):
            return True
        if not eval_state_formula(f.left, step.location, sa, strict):
            return False
    return False


def path_seed(seed: int, index: int) -> SeedSequence:
    """i 番目の経路の乱数列。並列数に依らず同じになる。"""
    return SeedSequence(seed, spawn_key=(index,))


def _count_successes(sa, adv, f, seed, indices, strict) -> int:
    horizon = float(f.time_bound)
    successes = 0
    for i in indices:
        path = sample_path(sa, adv, horizon, path_seed(seed, i))
        successes += until_holds(path, sa, f, strict)
    return successes


def estimate_until(
    sa: StochasticAutomaton,
    adv: Adversary,
    f: Until,
    samples: int,
    seed: int,
    confidence: float = 0.99,
    jobs: int = 1,
    strict: bool = False,
) -> Estimate:
    """
    until 式の確率をモンテカルロ法で推定します。確率の比較はここでは行いません。
    """
    require_upper_time_bound(f)
    if samples < 1:
        raise PreconditionError("samples は1以上で指定してください。")

    if f.time_bound == 0:
        # 時刻0の初期ロケーションだけで決まる
        path = (SimStep(sa.initial, 0.0, end=PathEnd.HORIZON),)
        mean = 1.0 if until_holds(path, sa, f, strict) else 0.0
        return Estimate(mean, 0.0, samples, seed, confidence)

    chunks = [range(start, min(start + CHUNK_SIZE, samples)) for start in range(0, samples, CHUNK_SIZE)]
    counts = Parallel(n_jobs=jobs)(delayed(_count_successes)(sa, adv, f, seed, chunk, strict) for chunk in chunks)
    mean = sum(counts) / samples
    z = norm.ppf(1 - (1 - confidence) / 2)
    half_width = float(z * math.sqrt(mean * (1 - mean) / samples))
    logger.info("estimate=%.6f ± %.6f (%d samples, seed %d)", mean, half_width, samples, seed)
    return Estimate(mean, half_width, samples, seed, confidence)


def run_simulation_check(
    sa: StochasticAutomaton,
    adv: Adversary,
    f: Until,
    samples: int,
    seed: int,
    confidence: float = 0.99,
    jobs: int = 1,
    strict: bool = False,
) -> SimulationReport:
    """信頼区間全体が閾値の片側にあるときだけ判定を確定させます。"""
    estimate = estimate_until(sa, adv, f, samples, seed, confidence, jobs, strict)
    lower, upper = estimate.interval
    verdict = Verdict.from_bool(decide(lower, upper, f.prob_cmp, f.prob_bound))
    return SimulationReport(verdict, estimate)


def write_trace(path: SimPath, destination: str | Path):
    """経路を "time location action" の行形式で書き出します。"""
    lines = []
    for step in path:
        label = step.action if step.action is not None else step.end.value
        lines.append(f"{step.time:.12g} {step.location} {label}")
    Path(destination).write_text("\n".join(lines) + "\n", encoding="utf-8")
