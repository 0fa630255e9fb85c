"""Policy-model test-time scaling: majority voting, Best-of-N, critic refinement.

Best-of-N reranks candidate solutions by an aggregate of their per-step
rewards (last / avg / min); the critic loop feeds the verifier's analyze
texts for negatively-judged steps back to the generator for up to a fixed
number of sequential refinement turns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .core import CanonicalAnswer, Problem, StepSolution, answers_equivalent, render_steps
from .gateway import GenerationRequest, ModelGateway, derive_seed
from .rewards import RewardVector, VerdictExtractionError, VerificationResult, verify_solution
from .sampler import solution_from_text
from .sandbox import CodeSandbox

log = logging.getLogger(__name__)

SCORING_METHODS = ("last", "avg", "min")

_REFINEMENT_TEMPLATE = (
    resources.files("prmpipe.prompts").joinpath("refinement_user.txt").read_text(encoding="utf-8").rstrip("\n")
)


@dataclass
class CandidateSet:
    problem_id: str
    candidates: list[tuple[StepSolution, RewardVector]]

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("a candidate set needs at least one candidate")
        for solution, _ in self.candidates:
            if solution.problem_id != self.problem_id:
                raise ValueError("all candidates must share the set's problem_id")


@dataclass
class RefinementTurn:
    """One critic turn: which steps were critiqued and what came back."""

    turn: int
    critique_payload: dict[int, str]
    refined_solution: StepSolution | None
    rewards: RewardVector | None = None
    verdicts: list[str] = field(default_factory=list)
    failed: bool = False


def majority_vote(
    answers: Sequence[CanonicalAnswer], scores: Sequence[float] | None = None
) -> CanonicalAnswer:
    """Most frequent answer-equivalence class.

    Ties break by larger mean score when scores are given, then by smallest
    normalized text, so the result is deterministic and (absent the candidate-
    order-free tie data) invariant under permutation of the inputs.
    """
    if not answers:
        raise ValueError("answers must be non-empty")
    if scores is not None and len(scores) != len(answers):
        raise ValueError("scores must align with answers")
    classes: list[list[int]] = []
    for idx, answer in enumerate(answers):
        for members in classes:
            if answers_equivalent(answers[members[0]], answer):
                members.append(idx)
                break
        else:
            classes.append([idx])

    def _representative(members: list[int]) -> CanonicalAnswer:
        return min((answers[i] for i in members), key=lambda a: a.normalized_text)

    def _rank(members: list[int]) -> tuple:
        count = len(members)
        mean_score = (
            sum(scores[i] for i in members) / count if scores is not None else 0.0
        )
        rep = _representative(members)
        # max count, then max mean score, then min normalized text
        return (-count, -mean_score, rep.normalized_text)

    winner = min(classes, key=_rank)
    return _representative(winner)


def score_candidate(rewards: RewardVector, method: str) -> float:
    """Aggregate per-step rewards into one candidate score."""
    if method not in SCORING_METHODS:
        raise ValueError(f"unknown scoring method {method!r}")
    values = rewards.rewards
    if not values:
        raise ValueError("rewards must be non-empty")
    if method == "last":
        return values[-1]
    if method == "avg":
        return sum(values) / len(values)
    return min(values)


def best_of_n(candidate_set: CandidateSet, method: str) -> StepSolution:
    """Argmax of the candidate score; ties break by larger avg score, then by
    candidate order."""
    best_idx = None
    best_key: tuple[float, float] | None = None
    for idx, (_, rewards) in enumerate(candidate_set.candidates):
        key = (score_candidate(rewards, method), score_candidate(rewards, "avg"))
        if best_key is None or key > best_key:
            best_idx, best_key = idx, key
    assert best_idx is not None
    return candidate_set.candidates[best_idx][0]


def build_refinement_prompt(
    problem: Problem, solution: StepSolution, critiques: dict[int, str]
) -> str:
    critique_lines = [
        f"Paragraph {t}: {text}" for t, text in sorted(critiques.items())
    ]
    return (
        _REFINEMENT_TEMPLATE.replace("{problem}", problem.statement)
        .replace("{solution}", render_steps(solution.steps))
        .replace("{critiques}", "\n\n".join(critique_lines))
    )


def critic_refine(
    problem: Problem,
    solution: StepSolution,
    rewards: VerificationResult,
    gateway: ModelGateway,
    sandbox: CodeSandbox | None = None,
    *,
    max_turns: int = 3,
    n_paths: int = 1,
    threshold: float = 0.5,
    seed: int = 0,
    temperature: float = 0.6,
    max_tokens: int = 1024,
) -> list[RefinementTurn]:
    """Sequential test-time scaling: critique, refine, re-verify, repeat.

    Each turn's payload is exactly the analyze texts of the steps judged
    incorrect in the prior verification; the loop stops early when every step
    is judged correct, and a refined generation that fails to parse records a
    failed turn and stops.
    """
    turns: list[RefinementTurn] = []
    current_solution = solution
    current = rewards
    for turn in range(1, max_turns + 1):
        flagged = [
            t for t, verdict in enumerate(current.verdicts, start=1) if verdict == "incorrect"
        ]
        if not flagged:
            break
        payload = {t: current.analyze_texts[t - 1] for t in flagged}
        request = GenerationRequest(
            role="policy",
            prompt_messages=(("user", build_refinement_prompt(problem, current_solution, payload)),),
            prefix_forcing="Step 1:",
            temperature=temperature,
            max_tokens=max_tokens,
            seed=derive_seed(seed, "critic", problem.id, turn),
        )
        outcome = gateway.generate(request)
        refined = (
            solution_from_text(problem.id, outcome.full_text(request)) if outcome.ok else None
        )
        if refined is None:
            turns.append(
                RefinementTurn(turn=turn, critique_payload=payload, refined_solution=None, failed=True)
            )
            break
        try:
            verification = verify_solution(
                problem,
                refined,
                gateway,
                sandbox,
                n_paths=n_paths,
                threshold=threshold,
                seed=derive_seed(seed, "critic-verify", problem.id, turn),
                solution_id=f"{problem.id}#turn{turn}",
            )
        except VerdictExtractionError as exc:
            log.warning("re-verification failed at turn %d: %s", turn, exc)
            turns.append(
                RefinementTurn(turn=turn, critique_payload=payload, refined_solution=refined, failed=True)
            )
            break
        turns.append(
            RefinementTurn(
                turn=turn,
                critique_payload=payload,
                refined_solution=refined,
                rewards=verification.reward_vector,
                verdicts=list(verification.verdicts),
            )
        )
        current_solution = refined
        current = verification
    return turns
