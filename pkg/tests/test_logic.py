import logging
import random
from fractions import Fraction

import pytest

from src.config import EngineOptions
from src.errors import (
    InvalidModel,
    NestedUntil,
    ParseError,
    PreconditionError,
    UnknownProposition,
    UnsupportedTimeBound,
)
from src.logic import (
    And,
    Atom,
    Box,
    CheckResult,
    Comparator,
    Diamond,
    FalseConst,
    Implies,
    Not,
    Or,
    TrueConst,
    Until,
    Verdict,
    check,
    decide,
    desugar,
    eval_state_formula,
    ground_value,
    parse_formula,
    pretty_print,
    require_upper_time_bound,
    until_leaves,
)
from src.matrix_checker import MatrixReport
from src.model_parser import load_model
from src.region_checker import RegionReport

PACKET_UNTIL = "[ (phi0|phi1) U{<1} phi2 ] >= 9/10"


def test_parse_until_formula():
    """until 式が核構文の AST に変換されることをテスト"""
    formula = parse_formula(PACKET_UNTIL)
    assert isinstance(formula, Until)
    assert formula.left == Not(And(Not(Atom("phi0")), Not(Atom("phi1"))))
    assert formula.right == Atom("phi2")
    assert formula.time_cmp is Comparator.LT
    assert formula.time_bound == 1
    assert formula.prob_cmp is Comparator.GE
    assert formula.prob_bound == Fraction(9, 10)


def test_parse_precedence_and_implication():
    """& が | より強く、=> が右結合であることをテスト"""
    assert parse_formula("a | b & c") == parse_formula("a | (b & c)")
    assert parse_formula("a => b => c") == parse_formula("a => (b => c)")
    assert parse_formula("!a & b") == And(Not(Atom("a")), Atom("b"))
    assert parse_formula("ff") == Not(TrueConst())


def test_diamond_and_box_are_rewritten_to_until():
    """◊ は tt U φ に、□ は確率を反転した tt U ¬φ に書き換えられることをテスト"""
    diamond = parse_formula("<>{<=2} done > 1/2")
    assert diamond == Until(TrueConst(), Atom("done"), Comparator.LE, Fraction(2), Comparator.GT, Fraction(1, 2))

    box = parse_formula("[]{<2} safe >= 9/10")
    assert box == Until(TrueConst(), Not(Atom("safe")), Comparator.LT, Fraction(2), Comparator.LE, Fraction(1, 10))


def test_quantifier_sugar():
    """A は確率 >= 1、E は確率 > 0 の until になることをテスト"""
    universal = parse_formula("A[ a U{<1} b ]")
    existential = parse_formula("E[ a U{<1} b ]")
    assert (universal.prob_cmp, universal.prob_bound) == (Comparator.GE, Fraction(1))
    assert (existential.prob_cmp, existential.prob_bound) == (Comparator.GT, Fraction(0))


@pytest.mark.parametrize(
    "text",
    [
        "[ a U{<1} [ b U{<1} c ] > 0 ] > 1/2",
        "<>{<1} ([ a U{<1} b ] > 0) > 1/2",
    ],
)
def test_nested_until_is_rejected(text):
    """until 式の入れ子で NestedUntil が送出されることをテスト"""
    with pytest.raises(NestedUntil):
        parse_formula(text)


@pytest.mark.parametrize(
    "text", ["a &", "[ a U{<1} b ] >= 3/2", "U & a", "[ a U{<1} b ]", "[ a U{<1/0} b ] > 1/2", "<>{<1} b > 2/0"]
)
def test_malformed_formula_is_rejected(text):
    """構文の誤りや範囲外の閾値、予約語の命題で ParseError が送出されることをテスト"""
    with pytest.raises(ParseError):
        parse_formula(text)


@pytest.mark.parametrize(
    "text",
    [
        PACKET_UNTIL,
        "[ (a0|a1) U{<=3/2} a2 ] > 1/2",
        "!([ a U{<1} b ] > 1/2 & c)",
        "tt & !x",
    ],
)
def test_pretty_print_parses_back(text):
    """pretty_print の出力を読み直すと同じ AST になることをテスト"""
    formula = parse_formula(text)
    assert parse_formula(pretty_print(formula)) == formula


def test_eval_state_formula_on_labels(packet_model):
    """ロケーションのラベル上で状態式が評価されることをテスト"""
    phi = parse_formula("phi0 | phi1")
    assert eval_state_formula(phi, "s0", packet_model)
    assert eval_state_formula(phi, "s1", packet_model)
    assert not eval_state_formula(phi, "s2", packet_model)
    assert eval_state_formula(parse_formula("phi0 => phi2"), "s1", packet_model)


def test_unknown_proposition_warns_or_raises(packet_model, caplog):
    """未知の命題は警告付きで偽、strict ではエラーになることをテスト"""
    with caplog.at_level(logging.WARNING):
        assert not eval_state_formula(Atom("never_seen"), "s0", packet_model)
    assert "never_seen" in caplog.text
    with pytest.raises(UnknownProposition):
        eval_state_formula(Atom("never_seen"), "s0", packet_model, strict=True)


def test_eval_state_formula_rejects_path_formula(packet_model):
    """状態式でない式の評価で PreconditionError が送出されることをテスト"""
    with pytest.raises(PreconditionError):
        eval_state_formula(parse_formula(PACKET_UNTIL), "s0", packet_model)


@pytest.mark.parametrize(
    "lower, upper, cmp, p, expected",
    [
        (Fraction(1, 6), Fraction(23, 30), Comparator.GE, Fraction(9, 10), False),
        (Fraction(1, 6), Fraction(23, 30), Comparator.GT, Fraction(0), True),
        (Fraction(1, 16), Fraction(7, 16), Comparator.GT, Fraction(1, 2), False),
        (Fraction(1, 4), Fraction(3, 4), Comparator.GT, Fraction(1, 2), None),
        (Fraction(1, 4), Fraction(1, 3), Comparator.LT, Fraction(1, 2), True),
        (Fraction(1, 2), Fraction(1, 2), Comparator.LE, Fraction(1, 2), True),
    ],
)
def test_decide(lower, upper, cmp, p, expected):
    """確率の区間と閾値から判定が確定するかをテスト"""
    assert decide(lower, upper, cmp, p) is expected


def test_require_upper_time_bound():
    """時間下限 (> や >=) の until で UnsupportedTimeBound が送出されることをテスト"""
    with pytest.raises(UnsupportedTimeBound):
        require_upper_time_bound(parse_formula("[ a U{>1} b ] > 1/2"))


def test_until_leaves_and_ground_value(packet_model):
    """until の葉を結果で置き換えた三値評価をテスト"""
    formula = parse_formula("[ phi0 U{<1} phi2 ] > 0 & !([ tt U{<1} phi1 ] > 1/2) | phi2")
    first, second = until_leaves(formula)
    assert ground_value(formula, {first: True, second: False}, packet_model) is True
    assert ground_value(formula, {first: False, second: None}, packet_model) is False
    assert ground_value(formula, {first: True, second: None}, packet_model) is None


def test_check_single_until_uses_engine_verdict(packet_model, mocker):
    """check が until の葉をエンジンで判定して命題論理で組み立てることをテスト"""
    report = RegionReport(Verdict.FALSE, Fraction(1, 6), Fraction(7, 30), Fraction(3, 5), 2, 3)
    run_region_check = mocker.patch("src.region_checker.run_region_check", return_value=report)

    result = check(packet_model, None, parse_formula(PACKET_UNTIL), EngineOptions(engine="region"))
    assert isinstance(result, CheckResult)
    assert result.verdict is Verdict.FALSE
    assert result.leaves[0][1] is report
    run_region_check.assert_called_once()


def test_check_negated_until(packet_model, mocker):
    """否定した until 式では判定が反転することをテスト"""
    report = MatrixReport(
        Verdict.FAIL, Fraction(1, 16), Fraction(9, 16), Fraction(3, 8), 3, Fraction(1, 2), True
    )
    mocker.patch("src.matrix_checker.run_matrix_check", return_value=report)

    options = EngineOptions(engine="matrix", delta=Fraction(1, 2))
    result = check(packet_model, None, parse_formula("!([ phi0 U{<1} phi2 ] > 1/2)"), options)
    assert result.verdict is Verdict.TRUE


def test_check_matrix_requires_delta(packet_model):
    """行列エンジンで delta がないと PreconditionError が送出されることをテスト"""
    with pytest.raises(PreconditionError):
        check(packet_model, None, parse_formula(PACKET_UNTIL), EngineOptions(engine="matrix"))


def test_check_rejects_invalid_model(models_dir, mocker):
    """整合しないモデルではエンジンを呼ばずに InvalidModel が送出されることをテスト"""
    run_matrix_check = mocker.patch("src.matrix_checker.run_matrix_check")
    broken = load_model(models_dir / "broken.sa")
    options = EngineOptions(engine="matrix", delta=Fraction(1, 2))
    with pytest.raises(InvalidModel) as excinfo:
        check(broken, None, parse_formula("[ p U{<=1} q ] > 1/2"), options)
    assert excinfo.value.codes == ["CdfNotNormalized"]
    run_matrix_check.assert_not_called()


LEAVES = [
    Until(Atom("phi0"), Atom("phi2"), Comparator.LT, Fraction(k), Comparator.GT, Fraction(1, 2))
    for k in (1, 2, 3)
]


def random_formula(rng: random.Random, depth: int, sugar: bool = False):
    """命題・until の葉・論理演算子からなるランダムな式。sugar では ◊ と □ も混ぜる"""
    if depth == 0 or rng.random() < 0.25:
        choice = rng.randrange(4 if sugar else 3)
        if choice == 0:
            return Atom(rng.choice(["phi0", "phi1", "phi2"]))
        if choice == 1:
            return rng.choice([TrueConst(), FalseConst()])
        if choice == 2:
            return rng.choice(LEAVES)
        body = Atom(rng.choice(["phi0", "phi1", "phi2"]))
        path = rng.choice([Diamond, Box])
        return path(body, Comparator.LE, Fraction(rng.randint(1, 3)), Comparator.GE, Fraction(rng.randint(0, 4), 4))
    op = rng.randrange(4)
    if op == 0:
        return Not(random_formula(rng, depth - 1, sugar))
    left = random_formula(rng, depth - 1, sugar)
    right = random_formula(rng, depth - 1, sugar)
    return (And, Or, Implies)[op - 1](left, right)


@pytest.mark.parametrize("seed", range(50))
def test_desugar_is_idempotent(seed):
    """書き換え済みの式をもう一度書き換えても変わらないことをテスト"""
    formula = random_formula(random.Random(seed), 4, sugar=True)
    once = desugar(formula)
    assert desugar(once) == once


@pytest.mark.parametrize("seed", range(100))
def test_ground_value_is_monotone(packet_model, seed):
    """未決の葉を真偽に確定させても、確定済みの評価結果は変わらないことをテスト"""
    rng = random.Random(seed)
    formula = random_formula(rng, 4)
    values = {leaf: rng.choice([True, False, None]) for leaf in LEAVES}
    base = ground_value(formula, values, packet_model)
    undecided = [leaf for leaf, value in values.items() if value is None]
    for leaf in undecided:
        for value in (True, False):
            refined = ground_value(formula, {**values, leaf: value}, packet_model)
            if base is not None:
                assert refined is base
    completed = {leaf: rng.choice([True, False]) if value is None else value for leaf, value in values.items()}
    final = ground_value(formula, completed, packet_model)
    assert final is not None
    if base is not None:
        assert final is base
