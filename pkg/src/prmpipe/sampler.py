"""Step-forced solution sampling and triage.

Generations are forced to start with "Step 1:" so solutions arrive
pre-segmented; blank-line splitting is never used. Problems are kept for
labeling only when sampling found both a correct and an incorrect path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .core import (
    STEP_MARKER_RE,
    Problem,
    Step,
    StepSolution,
    answer_matches_gold,
    extract_final_answer,
)
from .gateway import GenerationRequest, ModelGateway, derive_seed

log = logging.getLogger(__name__)

DEFAULT_INSTRUCTION = (
    "Solve the following problem step by step. Write each step on its own line "
    'as "Step k: ..." and finish with "The answer is $\\boxed{...}$".'
)


@dataclass(frozen=True)
class SamplingPlan:
    max_paths: int = 2048
    batch_size: int = 16
    early_stop: bool = False
    temperature: float = 0.7  # solution sampling is not pinned by the evaluation protocol
    max_tokens: int = 1024
    instruction: str = DEFAULT_INSTRUCTION

    def __post_init__(self) -> None:
        if not (1 <= self.batch_size <= self.max_paths):
            raise ValueError("need 1 <= batch_size <= max_paths")


@dataclass
class TriageOutcome:
    kept: bool
    correct_paths: list[StepSolution] = field(default_factory=list)
    incorrect_paths: list[StepSolution] = field(default_factory=list)
    draws_used: int = 0

    @property
    def pass1_estimate(self) -> float:
        if self.draws_used == 0:
            return 0.0
        return len(self.correct_paths) / self.draws_used


@dataclass
class SampleStats:
    draws: int = 0
    parsed: int = 0
    unparseable: int = 0
    errors: int = 0


def parse_steps(text: str) -> list[Step]:
    """Split on line-anchored "Step k:" markers with k consecutive from 1.

    Returns an empty list when "Step 1:" is absent or the numbering has gaps;
    an empty list is the failure signal, never an exception.
    """
    markers = list(STEP_MARKER_RE.finditer(text))
    if not markers:
        return []
    steps: list[Step] = []
    for pos, marker in enumerate(markers, start=1):
        if int(marker.group(1)) != pos:
            return []
        end = markers[pos].start() if pos < len(markers) else len(text)
        steps.append(Step(index=pos, text=text[marker.end():end].strip()))
    return steps


def solution_from_text(problem_id: str, text: str) -> StepSolution | None:
    steps = parse_steps(text)
    if not steps:
        return None
    return StepSolution(problem_id=problem_id, steps=steps, final_answer=extract_final_answer(text))


def _policy_request(problem: Problem, plan: SamplingPlan, seed: int) -> GenerationRequest:
    return GenerationRequest(
        role="policy",
        prompt_messages=(("user", f"{plan.instruction}\n\n{problem.statement}"),),
        prefix_forcing="Step 1:",
        temperature=plan.temperature,
        max_tokens=plan.max_tokens,
        seed=seed,
    )


def sample_solutions(
    problem: Problem,
    plan: SamplingPlan,
    gateway: ModelGateway,
    *,
    seed: int = 0,
    stats: SampleStats | None = None,
) -> list[StepSolution]:
    """Draw up to ``plan.max_paths`` step-forced solutions from the policy.

    Unparseable generations and transport errors are dropped and counted.
    With ``early_stop`` the loop ends as soon as both a correct and an
    incorrect path exist (this biases the Pass@1 estimate; the default keeps
    it unbiased for the dynamic rollout budget).
    """
    stats = stats if stats is not None else SampleStats()
    solutions: list[StepSolution] = []
    gold = problem.gold_answer
    seen_correct = seen_incorrect = False
    draw = 0
    while draw < plan.max_paths:
        batch = min(plan.batch_size, plan.max_paths - draw)
        requests = [
            _policy_request(problem, plan, derive_seed(seed, "sample", problem.id, draw + j))
            for j in range(batch)
        ]
        outcomes = gateway.generate_batch(requests)
        for request, outcome in zip(requests, outcomes):
            stats.draws += 1
            if not outcome.ok:
                stats.errors += 1
                continue
            solution = solution_from_text(problem.id, outcome.full_text(request))
            if solution is None:
                stats.unparseable += 1
                continue
            stats.parsed += 1
            solutions.append(solution)
            if answer_matches_gold(solution.final_answer, gold):
                seen_correct = True
            else:
                seen_incorrect = True
        draw += batch
        if plan.early_stop and seen_correct and seen_incorrect:
            break
    if stats.unparseable:
        log.debug("problem %s: dropped %d unparseable draws", problem.id, stats.unparseable)
    return solutions


def triage_problem(problem: Problem, solutions: list[StepSolution]) -> TriageOutcome:
    """Split paths by final-answer correctness; keep only problems with both kinds.

    A solution with an absent final answer counts as incorrect so every draw
    yields a binary outcome for MC estimation.
    """
    correct: list[StepSolution] = []
    incorrect: list[StepSolution] = []
    for solution in solutions:
        if answer_matches_gold(solution.final_answer, problem.gold_answer):
            correct.append(solution)
        else:
            incorrect.append(solution)
    return TriageOutcome(
        kept=bool(correct) and bool(incorrect),
        correct_paths=correct,
        incorrect_paths=incorrect,
        draws_used=len(solutions),
    )
