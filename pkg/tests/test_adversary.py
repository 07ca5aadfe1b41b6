import random

import pytest

from src.adversary import FirstEdge, StaticPolicy, load_adversary, load_policy, resolve
from src.errors import ConflictingPolicy, MissingPolicy, ParseError, PreconditionError


def test_benevolent_policy_chooses_conc(packet_model, benevolent):
    """benevolent 方策が x の満了で conc を選ぶことをテスト"""
    edge = resolve(benevolent, [], "s0", "x", packet_model.edges_from("s0", "x"))
    assert edge.action == "conc"
    assert edge.target == "s1"


def test_single_candidate_needs_no_entry(packet_model, benevolent):
    """候補が1本だけなら方策の表になくても選ばれることをテスト"""
    edge = resolve(benevolent, ["s0"], "s0", "y", packet_model.edges_from("s0", "y"))
    assert edge.action == "fail"


def test_first_edge_uses_lexicographic_order(packet_model):
    """first-edge がアクション名の辞書順で最初の辺を選ぶことをテスト"""
    adversary = load_adversary("first-edge")
    assert isinstance(adversary, FirstEdge)
    assert adversary.memoryless
    edge = resolve(adversary, [], "s0", "x", packet_model.edges_from("s0", "x"))
    assert edge.action == "conc"


def test_missing_policy_entry(packet_model):
    """表にない (ロケーション, クロック) で MissingPolicy が送出されることをテスト"""
    with pytest.raises(MissingPolicy):
        resolve(StaticPolicy({}), [], "s0", "x", packet_model.edges_from("s0", "x"))


def test_policy_action_not_among_candidates(packet_model):
    """方策のアクションが候補にないとき MissingPolicy が送出されることをテスト"""
    with pytest.raises(MissingPolicy):
        resolve(StaticPolicy({("s0", "x"): "send"}), [], "s0", "x", packet_model.edges_from("s0", "x"))


def test_resolve_checks_candidates(packet_model, benevolent):
    """候補が空、または別の状態の辺なら PreconditionError が送出されることをテスト"""
    with pytest.raises(PreconditionError):
        resolve(benevolent, [], "s0", "x", [])
    with pytest.raises(PreconditionError):
        resolve(benevolent, [], "s0", "x", packet_model.edges_from("s1", "z"))


def test_load_policy_skips_comments_and_blank_lines():
    """コメントと空行を無視して方策を読み込むことをテスト"""
    policy = load_policy("# comment\n\ns0 x -> conc  # inline\ns1 z -> send\n")
    assert policy.entries == {("s0", "x"): "conc", ("s1", "z"): "send"}


def test_load_policy_conflict_reports_line():
    """同じキーに異なるアクションがあると行番号付きで ConflictingPolicy が送出されることをテスト"""
    with pytest.raises(ConflictingPolicy) as excinfo:
        load_policy("s0 x -> conc\ns0 x -> tryagain\n")
    assert excinfo.value.line == 2


def test_load_policy_rejects_malformed_line():
    """形式に合わない行で ParseError が送出されることをテスト"""
    with pytest.raises(ParseError):
        load_policy("s0 -> conc\n")


def test_history_dependent_adversary_is_not_memoryless():
    """履歴に依存する方策は memoryless=False を宣言できることをテスト"""

    class Alternating(FirstEdge):
        memoryless = False

        def resolve(self, history, current, expiring, candidates):
            ordered = sorted(candidates, key=lambda edge: edge.action)
            return ordered[len(history) % len(ordered)]

    assert not Alternating().memoryless


def decision_points(sa):
    """辺を持つ (ロケーション, クロック) と候補の辺の組"""
    for location in sa.locations:
        for clock in sa.clocks_at(location):
            candidates = sa.edges_from(location, clock)
            if candidates:
                yield location, clock, candidates


def random_policy(sa, rng: random.Random) -> StaticPolicy:
    return StaticPolicy(
        {(location, clock): rng.choice(candidates).action for location, clock, candidates in decision_points(sa)}
    )


@pytest.mark.parametrize("seed", range(30))
def test_resolve_returns_a_candidate(automaton_factory, seed):
    """ランダムなモデルで方策が常に候補の辺のどれかを返すことをテスト"""
    sa = automaton_factory(seed)
    rng = random.Random(seed)
    policy = random_policy(sa, rng)
    for location, clock, candidates in decision_points(sa):
        history = [rng.choice(sa.locations) for _ in range(rng.randint(0, 5))]
        for adversary in (FirstEdge(), policy):
            assert resolve(adversary, history, location, clock, candidates) in candidates
        chosen = resolve(policy, history, location, clock, candidates)
        assert chosen.action == policy.entries[(location, clock)]


@pytest.mark.parametrize("seed", range(30))
def test_static_policy_ignores_history(automaton_factory, seed):
    """固定方策の選択が履歴の並べ替えや切り詰めで変わらないことをテスト"""
    sa = automaton_factory(seed)
    rng = random.Random(seed)
    policy = random_policy(sa, rng)
    for location, clock, candidates in decision_points(sa):
        history = [rng.choice(sa.locations) for _ in range(rng.randint(1, 6))]
        shuffled = rng.sample(history, len(history))
        expected = resolve(policy, history, location, clock, candidates)
        assert resolve(policy, shuffled, location, clock, candidates) == expected
        assert resolve(policy, history[: rng.randint(0, len(history))], location, clock, candidates) == expected
        assert resolve(policy, [], location, clock, candidates) == expected
