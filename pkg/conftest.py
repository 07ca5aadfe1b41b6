import os
import random
from fractions import Fraction
from pathlib import Path

import pytest
import sympy

from src.adversary import load_adversary
from src.automaton import T, Distribution, Edge, StochasticAutomaton
from src.model_parser import load_model

MODELS_DIR = Path(__file__).parent / "models"
QUARTER = Fraction(1, 4)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 統計的な大規模テスト (SAMC_RUN_SLOW=1 で実行)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SAMC_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="SAMC_RUN_SLOW=1 のときだけ実行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def models_dir():
    return MODELS_DIR


@pytest.fixture
def packet_model():
    return load_model(MODELS_DIR / "packet.sa")


@pytest.fixture
def shifted_model():
    return load_model(MODELS_DIR / "packet_shifted.sa")


@pytest.fixture
def benevolent():
    return load_adversary(MODELS_DIR / "benevolent.pol")


def random_distribution(rng: random.Random) -> Distribution:
    """1/4 刻みの格子上の区分線形な分布関数。台の下限は 1/4 以上。"""
    lo = QUARTER * rng.randint(1, 2)
    pieces = rng.randint(1, 2)
    knots = [lo]
    for _ in range(pieces):
        knots.append(knots[-1] + QUARTER * rng.randint(1, 2))
    levels = sorted(rng.sample([QUARTER, 2 * QUARTER, 3 * QUARTER], pieces - 1))
    values = [Fraction(0), *levels, Fraction(1)]
    segments = []
    for (t0, t1), (f0, f1) in zip(zip(knots, knots[1:]), zip(values, values[1:])):
        slope = (f1 - f0) / (t1 - t0)
        expr = sympy.Rational(f0.numerator, f0.denominator) + sympy.Rational(
            slope.numerator, slope.denominator
        ) * (T - sympy.Rational(t0.numerator, t0.denominator))
        segments.append((t0, t1, sympy.expand(expr)))
    return Distribution.from_pieces(segments)


def random_automaton(seed: int) -> StochasticAutomaton:
    """
    ロケーション4個以下、クロック2個以下の整合したモデルを作ります。
    最後のロケーションは終端で、設定したクロックには必ず辺があります。
    """
    rng = random.Random(seed)
    count = rng.randint(2, 4)
    locations = tuple(f"l{i}" for i in range(count))
    clock_names = ("c0", "c1")
    clocks = {name: random_distribution(rng) for name in clock_names}

    setting = {}
    edges = []
    for index, location in enumerate(locations):
        if index == count - 1:
            setting[location] = ()
            continue
        chosen = tuple(sorted(rng.sample(clock_names, rng.randint(1, 2))))
        setting[location] = chosen
        for clock in chosen:
            for branch in range(rng.randint(1, 2)):
                edges.append(Edge(location, f"{clock}_go{branch}", clock, rng.choice(locations)))

    labeling = {location: frozenset(rng.sample(["p", "q"], rng.randint(0, 2))) for location in locations}
    labeling[locations[0]] = frozenset({"p"})
    labeling[locations[-1]] = frozenset({"q"})
    return StochasticAutomaton(
        locations=locations,
        initial=locations[0],
        clocks={name: dist for name, dist in clocks.items() if any(name in s for s in setting.values())},
        edges=tuple(edges),
        setting=setting,
        labeling=labeling,
    )


@pytest.fixture
def automaton_factory():
    return random_automaton
