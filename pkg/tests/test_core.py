from __future__ import annotations

import random
from fractions import Fraction as F

import pytest

from prmpipe.core import (
    CanonicalAnswer,
    Problem,
    Step,
    StepSolution,
    answer_matches_gold,
    answers_equivalent,
    append_step,
    canonicalize_answer,
    extract_final_answer,
    render_steps,
    state_prefix,
)

# Canonicalization fixture table: every expected value was checked by manual
# simplification before the implementation existed.
CANONICAL_CASES = [
    ("The answer is $\\boxed{42}$", "42", F(42)),
    ("  1/2 ", "1/2", F(1, 2)),
    ("\\boxed{\\frac{1}{2}}", "1/2", F(1, 2)),
    ("42", "42", F(42)),
    ("042", "042", F(42)),
    ("-3", "-3", F(-3)),
    ("3.14", "3.14", F(157, 50)),
    (".5", ".5", F(1, 2)),
    ("0.5", "0.5", F(1, 2)),
    ("2/4", "2/4", F(1, 2)),
    ("-1/2", "-1/2", F(-1, 2)),
    ("157/50", "157/50", F(157, 50)),
    ("$\\boxed{ 7 }$", "7", F(7)),
    ("answer is 6", "6", F(6)),
    ("The answer is 10.", "10", F(10)),
    ("\\boxed{\\boxed{5}}", "5", F(5)),
    ("x = \\boxed{3}", "3", F(3)),
    ("\\frac{3}{4}", "3/4", F(3, 4)),
    ("\\dfrac{7}{2}", "7/2", F(7, 2)),
    ("1,000", "1000", F(1000)),
    ("1,000,000", "1000000", F(1_000_000)),
    ("\\frac12", "1/2", F(1, 2)),
    ("  \\boxed{  \\frac{10}{4} } ", "10/4", F(5, 2)),
    ("no box here, answer is \\frac{1}{3}", "1/3", F(1, 3)),
    ("2x+1", "2x+1", None),
    ("", "", None),
    ("   ", "", None),
    ("$18$", "18", F(18)),
    ("50%", "50%", None),
    ("The final answer is $\\boxed{-\\frac{5}{8}}$", "-5/8", F(-5, 8)),
    ("3 / 4", "3/4", F(3, 4)),
    ("Thus the answer is 4 apples", "4 apples", None),
    ("{42}", "42", F(42)),
    ("\\left(\\frac{1}{2}\\right)", "(1/2)", None),
]


@pytest.mark.parametrize("raw,normalized,numeric", CANONICAL_CASES)
def test_canonicalize_fixture_table(raw, normalized, numeric):
    answer = canonicalize_answer(raw)
    assert answer.normalized_text == normalized
    assert answer.numeric_value == numeric


@pytest.mark.parametrize("raw,normalized,numeric", CANONICAL_CASES)
def test_canonicalize_is_idempotent(raw, normalized, numeric):
    once = canonicalize_answer(raw)
    twice = canonicalize_answer(once.normalized_text)
    assert twice == once


def test_empty_input_never_raises():
    assert canonicalize_answer(None) == CanonicalAnswer("", None)
    assert canonicalize_answer("") == CanonicalAnswer("", None)


@pytest.mark.parametrize(
    "a,b,expected",
    [
        ("42", "42", True),
        ("1/2", "0.5", True),
        ("42", "41", False),
        ("1/2", "2/4", True),
        ("3.14", "157/50", True),
        ("2x+1", "2x+1", True),
        ("2x+1", "2x+2", False),
        ("42", "42_wrong", False),
    ],
)
def test_answers_equivalent_pairs(a, b, expected):
    assert answers_equivalent(canonicalize_answer(a), canonicalize_answer(b)) is expected
    assert answers_equivalent(canonicalize_answer(b), canonicalize_answer(a)) is expected


def test_equivalence_relation_on_fixture_set():
    answers = [canonicalize_answer(raw) for raw, _, _ in CANONICAL_CASES]
    n = len(answers)
    same = [[answers_equivalent(answers[i], answers[j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        assert same[i][i], f"not reflexive at {i}"
        for j in range(n):
            assert same[i][j] == same[j][i], f"not symmetric at ({i},{j})"
            for k in range(n):
                if same[i][j] and same[j][k]:
                    assert same[i][k], f"not transitive at ({i},{j},{k})"


@pytest.mark.parametrize(
    "text,expected",
    [
        ("blah blah $\\boxed{9}$ more $\\boxed{10}$", "10"),
        ("So the answer is 27", "27"),
        ("nothing here", None),
        ("The answer is $\\boxed{\\frac{1}{2}}$", "\\frac{1}{2}"),
        ("answer is 3\nmore prose on the next line", "3"),
    ],
)
def test_extract_final_answer_order(text, expected):
    assert extract_final_answer(text) == expected


def test_answer_matches_gold_absent_is_false():
    assert not answer_matches_gold(None, "42")
    assert answer_matches_gold("$\\boxed{42}$", "42")


def test_problem_and_step_validation():
    with pytest.raises(ValueError):
        Problem(id="", statement="s", gold_answer="1")
    with pytest.raises(ValueError):
        Problem(id="p", statement="  ", gold_answer="1")
    with pytest.raises(ValueError):
        Problem(id="p", statement="s", gold_answer="")
    with pytest.raises(ValueError):
        Step(index=0, text="x")


def test_solution_requires_consecutive_indices():
    with pytest.raises(ValueError):
        StepSolution(problem_id="p", steps=[])
    with pytest.raises(ValueError):
        StepSolution(problem_id="p", steps=[Step(1, "a"), Step(3, "b")])
    solution = StepSolution(problem_id="p", steps=[Step(1, "a"), Step(2, "b")])
    assert solution.num_steps == 2


def test_state_reconstruction_property():
    rng = random.Random(0)
    for _ in range(50):
        num_steps = rng.randint(1, 6)
        steps = [
            Step(index=i, text=f"do thing {rng.randint(0, 999)}")
            for i in range(1, num_steps + 1)
        ]
        statement = f"problem {rng.randint(0, 999)}"
        for t in range(1, num_steps + 1):
            extended = append_step(state_prefix(statement, steps, t), steps[t - 1])
            assert extended == state_prefix(statement, steps, t + 1)


def test_state_prefix_shape():
    steps = [Step(1, "a"), Step(2, "b")]
    assert state_prefix("Q", steps, 1) == "Q"
    assert state_prefix("Q", steps, 2) == "Q\n\nStep 1: a"
    assert render_steps(steps) == "Step 1: a\n\nStep 2: b"
    with pytest.raises(ValueError):
        state_prefix("Q", steps, 4)
