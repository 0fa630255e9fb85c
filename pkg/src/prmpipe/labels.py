"""Monte Carlo step-label estimation and progress labeling.

Per-state correctness is estimated from completion rollouts with a dynamic
budget tied to the estimated Pass@1, zeros propagate forward, and binary
step labels come from one of three estimation methods: hard, ratio, diff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import Problem, Step, StepSolution, answer_matches_gold, extract_final_answer, state_prefix
from .gateway import GenerationRequest, ModelGateway, derive_seed

METHODS = ("hard", "ratio", "diff")

# Paper-anchored defaults: ratio threshold 0.8; diff threshold -0.3 (best
# Maj@8 ablation row). The hard method ignores epsilon entirely.
DEFAULT_EPSILON = {"ratio": 0.8, "diff": -0.3, "hard": 0.0}


class EstimationError(RuntimeError):
    """Raised when more than half the rollouts for a state error out."""


def choose_k(pass1: float) -> int:
    """Dynamic rollout budget from the estimated Pass@1.

    128 on [0, 0.1), 64 on [0.1, 0.9), 32 on [0.9, 1). Pass@1 of exactly 1.0
    extends the easiest bucket (such problems are normally discarded anyway).
    """
    if not 0.0 <= pass1 <= 1.0:
        raise ValueError(f"pass1 must lie in [0, 1], got {pass1}")
    if pass1 < 0.1:
        return 128
    if pass1 < 0.9:
        return 64
    return 32


@dataclass
class MCProfile:
    """Per-state MC estimates MC(s_1)..MC(s_{T+1}) for one solution.

    ``zero_cut`` is the 1-based index of the first state that estimated to
    zero; every later state is forced to zero without further rollouts.
    """

    solution_id: str
    state_scores: list[float]
    rollout_counts: list[int]
    zero_cut: int | None = None

    def __post_init__(self) -> None:
        if len(self.state_scores) < 2:
            raise ValueError("a profile covers at least states s_1 and s_2")
        if len(self.rollout_counts) != len(self.state_scores):
            raise ValueError("rollout_counts must align with state_scores")
        for score in self.state_scores:
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"MC score out of range: {score}")
        if self.zero_cut is not None:
            if any(s != 0.0 for s in self.state_scores[self.zero_cut - 1:]):
                raise ValueError("scores at and after zero_cut must be zero")

    @property
    def num_steps(self) -> int:
        return len(self.state_scores) - 1


@dataclass
class ProgressLabels:
    method: str
    epsilon: float
    progress: list[float]
    labels: list[int]

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if len(self.labels) != len(self.progress):
            raise ValueError("labels and progress must have equal length")


@dataclass
class CompletionSettings:
    """How completion rollouts are requested.

    The upstream protocol leaves the completer's prompt unspecified beyond the
    raw prefix; ``instruction`` is prepended when set.
    """

    temperature: float = 0.7
    max_tokens: int = 768
    instruction: str | None = None


def _completion_request(
    problem: Problem,
    prefix_steps: Sequence[Step],
    seed: int,
    settings: CompletionSettings,
) -> GenerationRequest:
    state = state_prefix(problem.statement, list(prefix_steps), len(prefix_steps) + 1)
    if settings.instruction:
        state = settings.instruction + "\n\n" + state
    return GenerationRequest(
        role="completer",
        prompt_messages=(("user", state),),
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        seed=seed,
    )


def estimate_state_mc(
    problem: Problem,
    prefix_steps: Sequence[Step],
    k: int,
    gateway: ModelGateway,
    *,
    seed_base: int = 0,
    settings: CompletionSettings | None = None,
) -> float:
    """MC(s_t): fraction of K completion rollouts that reach the gold answer.

    Rollout j uses seed ``seed_base + j``. Errored draws count as misses; if
    more than half the draws error out the estimate is unusable and the
    solution should be skipped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    settings = settings or CompletionSettings()
    requests = [
        _completion_request(problem, prefix_steps, seed_base + j, settings) for j in range(k)
    ]
    outcomes = gateway.generate_batch(requests)
    errors = sum(1 for o in outcomes if not o.ok)
    if errors * 2 > k:
        raise EstimationError(f"{errors}/{k} rollouts failed for problem {problem.id}")
    hits = 0
    for outcome in outcomes:
        if not outcome.ok:
            continue
        answer = extract_final_answer(outcome.text)
        if answer_matches_gold(answer, problem.gold_answer):
            hits += 1
    return hits / k


def build_mc_profile(
    problem: Problem,
    solution: StepSolution,
    gateway: ModelGateway,
    *,
    solution_id: str | None = None,
    global_seed: int = 0,
    pass1_hint: float | None = None,
    initial_k: int = 64,
    settings: CompletionSettings | None = None,
) -> MCProfile:
    """Estimate MC(s_1)..MC(s_{T+1}) for one solution with zero propagation.

    MC(s_1) comes from the solution-sampling phase when ``pass1_hint`` is
    given, otherwise from ``initial_k`` fresh rollouts. K is chosen once from
    MC(s_1) and reused for every state; re-budgeting per state would change
    the cost semantics. Once a state estimates to zero, all later states are
    set to zero without further rollouts and the cut position is recorded.
    """
    sid = solution_id or f"{problem.id}#0"
    settings = settings or CompletionSettings()
    scores: list[float] = []
    counts: list[int] = []
    if pass1_hint is not None:
        if not 0.0 <= pass1_hint <= 1.0:
            raise ValueError("pass1_hint must lie in [0, 1]")
        scores.append(pass1_hint)
        counts.append(0)
    else:
        mc1 = estimate_state_mc(
            problem,
            [],
            initial_k,
            gateway,
            seed_base=derive_seed(global_seed, "mc", sid, 1),
            settings=settings,
        )
        scores.append(mc1)
        counts.append(initial_k)
    k = choose_k(scores[0])
    zero_cut = 1 if scores[0] == 0.0 else None
    for t in range(1, solution.num_steps + 1):  # state s_{t+1} follows step a_t
        if zero_cut is not None:
            scores.append(0.0)
            counts.append(0)
            continue
        mc = estimate_state_mc(
            problem,
            solution.steps[:t],
            k,
            gateway,
            seed_base=derive_seed(global_seed, "mc", sid, t + 1),
            settings=settings,
        )
        scores.append(mc)
        counts.append(k)
        if mc == 0.0:
            zero_cut = t + 1
    return MCProfile(solution_id=sid, state_scores=scores, rollout_counts=counts, zero_cut=zero_cut)


def compute_progress(
    profile: MCProfile, method: str, epsilon: float | None = None
) -> ProgressLabels:
    """Per-step progress values and binary labels under one estimation method.

    ratio: P_t = MC(s_{t+1}) / MC(s_t), defined as 0 on a zero denominator;
    diff: P_t = MC(s_{t+1}) - MC(s_t); hard: P_t = MC(s_{t+1}). Labels are
    r_t = 1 iff P_t >= epsilon (hard uses strict P_t > 0), and any step whose
    post-step state has MC = 0 is forced to 0 regardless of method.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    eps = DEFAULT_EPSILON[method] if epsilon is None else epsilon
    scores = profile.state_scores
    if method == "ratio" and scores[0] <= 0.0:
        raise ValueError("ratio method requires MC(s_1) > 0")
    progress: list[float] = []
    labels: list[int] = []
    for t in range(1, len(scores)):
        before, after = scores[t - 1], scores[t]
        if method == "ratio":
            value = 0.0 if before == 0.0 else after / before
            label = 1 if value >= eps else 0
        elif method == "diff":
            value = after - before
            label = 1 if value >= eps else 0
        else:
            value = after
            label = 1 if value > 0.0 else 0
        if after == 0.0:
            label = 0
        progress.append(value)
        labels.append(label)
    return ProgressLabels(method=method, epsilon=eps, progress=progress, labels=labels)


def first_error_index(labels: ProgressLabels | Sequence[int]) -> int:
    """Smallest t with r_t = 0, or -1 when every step is labeled correct."""
    values = labels.labels if isinstance(labels, ProgressLabels) else list(labels)
    for t, value in enumerate(values, start=1):
        if value == 0:
            return t
    return -1
