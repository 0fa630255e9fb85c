from __future__ import annotations

import itertools
import random

import pytest

from prmpipe.core import Problem, Step
from prmpipe.gateway import GenerationRequest, ModelGateway
from prmpipe.labels import (
    EstimationError,
    MCProfile,
    build_mc_profile,
    choose_k,
    compute_progress,
    estimate_state_mc,
    first_error_index,
)
from prmpipe.mockworld import BranchingProblem, MockBackend, MockWorld, ScriptedBackend

from conftest import gateway_for, make_table_world


class TestChooseK:
    def test_schedule_values(self):
        points = [0.0, 0.0999, 0.1, 0.5, 0.899, 0.9, 0.999, 1.0]
        assert [choose_k(p) for p in points] == [128, 128, 64, 64, 64, 32, 32, 32]

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            choose_k(-0.01)
        with pytest.raises(ValueError):
            choose_k(1.01)

    def test_monotone_nonincreasing(self):
        grid = [i / 200 for i in range(201)]
        values = [choose_k(p) for p in grid]
        assert all(a >= b for a, b in zip(values, values[1:]))


def _completion_script(answers):
    answers = iter(answers)

    def script(request: GenerationRequest):
        text = next(answers)
        if text is None:
            raise RuntimeError("endpoint failure")
        return f"Step 9: filler\n\nThe answer is $\\boxed{{{text}}}$"

    return script


class TestEstimateStateMc:
    def _problem(self):
        return Problem(id="p", statement="What is six times seven?", gold_answer="42")

    def test_direct_fraction(self):
        gateway = ModelGateway(
            {"*": ScriptedBackend(script=_completion_script(["42", "9", "42", "42"]))}
        )
        value = estimate_state_mc(self._problem(), [], 4, gateway, seed_base=0)
        assert value == 0.75

    def test_zero_success_is_exactly_zero(self):
        world, problem = make_table_world(seed=5, completion_success_ok=0.0)
        gateway = gateway_for(world)
        assert estimate_state_mc(problem, [], 16, gateway, seed_base=0) == 0.0

    def test_errors_count_as_misses_below_half(self):
        gateway = ModelGateway(
            {"*": ScriptedBackend(script=_completion_script(["42", None, "42", "42"]))}
        )
        assert estimate_state_mc(self._problem(), [], 4, gateway, seed_base=0) == 0.75

    def test_majority_errors_raise(self):
        gateway = ModelGateway(
            {"*": ScriptedBackend(script=_completion_script([None, None, None, "42"]))}
        )
        with pytest.raises(EstimationError):
            estimate_state_mc(self._problem(), [], 4, gateway, seed_base=0)

    def test_k_validation(self):
        world, problem = make_table_world()
        with pytest.raises(ValueError):
            estimate_state_mc(problem, [], 0, gateway_for(world))


class TestBuildProfile:
    def test_poisoned_step_zero_propagates(self):
        world, problem = make_table_world(seed=3, completion_success_bad=0.0)
        gateway = gateway_for(world)
        solution = world.table_solution(problem.id, [True, False, True])
        profile = build_mc_profile(
            problem, solution, gateway, solution_id="s", global_seed=1, pass1_hint=0.5
        )
        assert profile.state_scores[0] == 0.5
        assert profile.state_scores[1] > 0
        assert profile.state_scores[2] == 0.0
        assert profile.state_scores[3] == 0.0
        assert profile.zero_cut == 3
        # No rollouts are spent past the cut.
        assert profile.rollout_counts[3] == 0

    def test_single_step_solution_has_two_state_scores(self):
        world, problem = make_table_world(seed=3, depth=1)
        gateway = gateway_for(world)
        solution = world.table_solution(problem.id, [True])
        profile = build_mc_profile(
            problem, solution, gateway, solution_id="s", global_seed=1, pass1_hint=0.5
        )
        assert len(profile.state_scores) == 2
        assert len(profile.rollout_counts) == 2

    def test_k_chosen_once_from_pass1(self):
        world, problem = make_table_world(seed=3)
        gateway = gateway_for(world)
        solution = world.table_solution(problem.id, [True, True, True])
        profile = build_mc_profile(
            problem, solution, gateway, solution_id="s", global_seed=1, pass1_hint=0.05
        )
        assert all(count == 128 for count in profile.rollout_counts[1:])

    def test_exhaustive_world_matches_brute_force_exactly(self):
        rng = random.Random(1234)
        problem = Problem(id="bp", statement="Walk the branch tree for task bp.", gold_answer="1")
        depth = 3
        leaves = {
            path: rng.random() < 0.5 for path in itertools.product((0, 1), repeat=depth)
        }
        if not any(leaves.values()):
            leaves[(0,) * depth] = True
        spec = BranchingProblem(
            problem=problem,
            depth=depth,
            leaf_correct=leaves,
            solution_path=(0, 1, 0),
        )
        world = MockWorld(seed=9)
        world.add(spec)
        gateway = ModelGateway({"*": MockBackend(world)}, max_in_flight=8)
        profile = build_mc_profile(
            problem, spec.solution(), gateway, solution_id="s", global_seed=4
        )
        expected = [spec.exact_mc(spec.solution_path[:t]) for t in range(depth + 1)]
        # Zero propagation in the oracle: exact probabilities already vanish
        # after the first zero, so direct comparison is valid.
        assert profile.state_scores == expected


class TestComputeProgress:
    def test_ratio_example(self):
        profile = MCProfile("s", [1.0, 0.5, 0.45], [4, 4, 4])
        result = compute_progress(profile, "ratio", 0.8)
        assert result.progress == [0.5, 0.9]
        assert result.labels == [0, 1]

    def test_hard_example(self):
        profile = MCProfile("s", [0.6, 0.2, 0.0], [4, 4, 4], zero_cut=3)
        result = compute_progress(profile, "hard")
        assert result.labels == [1, 0]
        assert result.progress == [0.2, 0.0]

    def test_diff_example(self):
        profile = MCProfile("s", [0.6, 0.45, 0.5], [4, 4, 4])
        result = compute_progress(profile, "diff", -0.1)
        assert result.progress == [pytest.approx(-0.15), pytest.approx(0.05)]
        assert result.labels == [0, 1]

    def test_ratio_zero_denominator_is_zero(self):
        profile = MCProfile("s", [0.5, 0.0, 0.0], [4, 4, 4], zero_cut=2)
        result = compute_progress(profile, "ratio", 0.8)
        assert result.progress == [0.0, 0.0]
        assert result.labels == [0, 0]

    def test_ratio_requires_positive_pass1(self):
        profile = MCProfile("s", [0.0, 0.0], [4, 4], zero_cut=1)
        with pytest.raises(ValueError):
            compute_progress(profile, "ratio", 0.8)

    def test_zero_state_forces_label_zero_even_under_negative_epsilon(self):
        # diff with epsilon -0.3 would otherwise label step 2 correct: its
        # progress is -0.2 >= -0.3, but it leads into a dead state.
        profile = MCProfile("s", [0.5, 0.2, 0.0], [4, 4, 4], zero_cut=3)
        result = compute_progress(profile, "diff", -0.3)
        assert result.progress[1] == pytest.approx(-0.2)
        assert result.labels == [1, 0]

    def test_default_epsilons(self):
        profile = MCProfile("s", [1.0, 0.9], [4, 4])
        assert compute_progress(profile, "ratio").epsilon == 0.8
        assert compute_progress(profile, "diff").epsilon == -0.3

    def test_unknown_method_rejected(self):
        profile = MCProfile("s", [1.0, 0.9], [4, 4])
        with pytest.raises(ValueError):
            compute_progress(profile, "soft")


def _random_valid_profile(rng: random.Random) -> MCProfile:
    k = rng.choice([32, 64, 128])
    num_steps = rng.randint(1, 6)
    scores = [rng.randint(1, k) / k]  # kept problems have MC(s_1) > 0
    dead = False
    for _ in range(num_steps):
        if dead:
            scores.append(0.0)
            continue
        value = rng.randint(0, k) / k
        scores.append(value)
        dead = value == 0.0
    zero_cut = next((i + 1 for i, s in enumerate(scores) if s == 0.0), None)
    return MCProfile("r", scores, [k] * len(scores), zero_cut=zero_cut)


def test_ratio_with_tiny_epsilon_equals_hard_labels():
    rng = random.Random(77)
    for _ in range(300):
        profile = _random_valid_profile(rng)
        ratio = compute_progress(profile, "ratio", 1e-9)
        hard = compute_progress(profile, "hard")
        assert ratio.labels == hard.labels


def test_zero_cut_implies_zero_labels_under_every_method():
    # With zero_cut = t', every step u >= t' - 1 must be labeled 0.
    rng = random.Random(78)
    for _ in range(200):
        profile = _random_valid_profile(rng)
        if profile.zero_cut is None:
            continue
        for method, eps in (("ratio", 0.8), ("diff", -0.5), ("hard", 0.0)):
            labels = compute_progress(profile, method, eps).labels
            for u in range(max(1, profile.zero_cut - 1), len(labels) + 1):
                assert labels[u - 1] == 0


def test_first_error_index():
    assert first_error_index([1, 1, 0, 1]) == 3
    assert first_error_index([1, 1, 1]) == -1
    assert first_error_index([0, 1]) == 1


def test_profile_invariants():
    with pytest.raises(ValueError):
        MCProfile("s", [0.5], [4])
    with pytest.raises(ValueError):
        MCProfile("s", [0.5, 1.5], [4, 4])
    with pytest.raises(ValueError):
        MCProfile("s", [0.5, 0.0, 0.5], [4, 4, 4], zero_cut=2)


def test_mc_statistical_sanity():
    # Small version of the statistical acceptance check: p = 0.5, K = 64,
    # 20 repetitions; binomial SE of the grand mean is 0.014, so +-0.06 is a
    # 4-sigma band.
    world, problem = make_table_world(seed=31, completion_success_ok=0.5)
    gateway = gateway_for(world)
    estimates = [
        estimate_state_mc(problem, [], 64, gateway, seed_base=1000 * rep)
        for rep in range(20)
    ]
    grand_mean = sum(estimates) / len(estimates)
    assert abs(grand_mean - 0.5) <= 0.06
