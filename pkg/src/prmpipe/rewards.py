"""Generative reward extraction, Maj@N aggregation, and binarization.

A verifier generation judges each paragraph with a boxed Yes/No verdict; the
scalar step reward is the probability of the affirmative verdict token, read
from per-token logprobs when available and from sampled verdict words
otherwise. Rewards from N independent verification paths are averaged before
thresholding, never voted per path.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .core import Problem, Step, StepSolution
from .gateway import GenerationOutcome, ModelGateway, derive_seed
from .rationale import (
    RationaleSessionError,
    render_paragraphs,
    run_interleaved_session,
)
from .sandbox import CodeSandbox

_VERDICT_RE = re.compile(r"\\boxed\{(Yes|No)\}")
_SECTION_RE = re.compile(r"^### Paragraph (\d+)[ \t]*$", re.MULTILINE)
_ANALYZE_RE = re.compile(r"<analyze>(.*?)</analyze>", re.DOTALL)

_CRITIQUE_TEMPLATE = (
    resources.files("prmpipe.prompts").joinpath("critique_user.txt").read_text(encoding="utf-8").rstrip("\n")
)


class VerdictExtractionError(ValueError):
    """No verdict marker found; the step stays unscored and the path is flagged."""


@dataclass(frozen=True)
class VerdictExtraction:
    """One located verdict: token position, Yes-probability, and provenance."""

    marker_position: int  # token index of the verdict token, -1 under fallback
    yes_probability: float
    fallback_used: bool
    verdict: str  # the emitted word, "Yes" or "No"

    def __post_init__(self) -> None:
        if not 0.0 <= self.yes_probability <= 1.0:
            raise ValueError("yes_probability must lie in [0, 1]")


@dataclass
class RewardVector:
    """Per-step rewards for one solution, optionally averaged over N paths."""

    solution_id: str
    rewards: list[float]
    paths_used: int = 1
    per_path_rewards: list[list[float]] | None = None
    verdicts: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for value in self.rewards:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"reward out of range: {value}")


def _token_index_at(tokens: Sequence, char_pos: int) -> int | None:
    consumed = 0
    for idx, tok in enumerate(tokens):
        next_consumed = consumed + len(tok.token)
        if consumed <= char_pos < next_consumed:
            return idx
        consumed = next_consumed
    return None


def _word_logprob(token, word: str) -> float | None:
    """Logprob of ``word`` at this position: the chosen token if it starts the
    word, else the matching top alternative."""
    if token.token.strip().startswith(word):
        return token.logprob
    for alt, logprob in token.top:
        if alt.strip().startswith(word):
            return logprob
    return None


def _probability_from_token(token, verdict: str, renormalize: bool) -> float | None:
    lp_yes = _word_logprob(token, "Yes")
    lp_no = _word_logprob(token, "No")
    if lp_yes is not None and lp_no is not None and renormalize:
        p_yes, p_no = math.exp(lp_yes), math.exp(lp_no)
        return p_yes / (p_yes + p_no)
    if lp_yes is not None:
        return min(math.exp(lp_yes), 1.0)
    if lp_no is not None:
        return max(1.0 - math.exp(lp_no), 0.0)
    return None


def extract_verdicts(outcome: GenerationOutcome, renormalize: bool = True) -> list[VerdictExtraction]:
    """Every boxed Yes/No verdict in one generation, in order of appearance."""
    found: list[VerdictExtraction] = []
    tokens = outcome.tokens
    aligned = tokens is not None and "".join(t.token for t in tokens) == outcome.text
    for match in _VERDICT_RE.finditer(outcome.text):
        word = match.group(1)
        extraction = None
        if aligned:
            idx = _token_index_at(tokens, match.start(1))
            if idx is not None:
                prob = _probability_from_token(tokens[idx], word, renormalize)
                if prob is not None:
                    extraction = VerdictExtraction(
                        marker_position=idx,
                        yes_probability=prob,
                        fallback_used=False,
                        verdict=word,
                    )
        if extraction is None:
            extraction = VerdictExtraction(
                marker_position=-1,
                yes_probability=1.0 if word == "Yes" else 0.0,
                fallback_used=True,
                verdict=word,
            )
        found.append(extraction)
    return found


def _verdict_for_step(
    outcome: GenerationOutcome, step_index: int, renormalize: bool
) -> VerdictExtraction | None:
    matches = list(_VERDICT_RE.finditer(outcome.text))
    if not matches:
        return None
    verdicts = extract_verdicts(outcome, renormalize)
    sections = list(_SECTION_RE.finditer(outcome.text))
    if sections:
        for pos, header in enumerate(sections):
            if int(header.group(1)) != step_index:
                continue
            end = sections[pos + 1].start() if pos + 1 < len(sections) else len(outcome.text)
            for match, verdict in zip(matches, verdicts):
                if header.end() <= match.start() < end:
                    return verdict
            return None
        return None
    if len(verdicts) == 1:
        return verdicts[0]
    if step_index <= len(verdicts):
        return verdicts[step_index - 1]
    return None


def extract_step_reward(
    outcome: GenerationOutcome,
    step_index: int,
    *,
    renormalize: bool = True,
    extra_samples: Sequence[GenerationOutcome] = (),
) -> VerdictExtraction:
    """Locate the verdict for one step and turn it into a Yes-probability.

    With usable logprobs the probability comes from the verdict token,
    renormalized over {Yes, No} when both alternatives are visible. Otherwise
    the fallback is the fraction of Yes verdicts across ``outcome`` plus
    ``extra_samples``, flagged via ``fallback_used``.
    """
    primary = _verdict_for_step(outcome, step_index, renormalize)
    if primary is None:
        raise VerdictExtractionError(f"no verdict marker found for step {step_index}")
    if not primary.fallback_used and not extra_samples:
        return primary
    if not primary.fallback_used and extra_samples:
        return primary
    votes = [primary.verdict]
    for sample in extra_samples:
        extra = _verdict_for_step(sample, step_index, renormalize)
        if extra is not None:
            votes.append(extra.verdict)
    fraction = sum(1 for v in votes if v == "Yes") / len(votes)
    return VerdictExtraction(
        marker_position=-1,
        yes_probability=fraction,
        fallback_used=True,
        verdict=primary.verdict,
    )


def aggregate_paths(
    per_path: Sequence[Sequence[float]], solution_id: str = ""
) -> RewardVector:
    """Average an N x T reward matrix per step (plain sequential sums, so the
    result is bit-identical to a naive column mean)."""
    if not per_path:
        raise ValueError("need at least one verification path")
    width = len(per_path[0])
    matrix: list[list[float]] = []
    for row in per_path:
        if len(row) != width:
            raise ValueError("ragged reward matrix")
        for value in row:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"reward out of range: {value}")
        matrix.append(list(row))
    n = len(matrix)
    rewards = []
    for t in range(width):
        total = 0.0
        for row in matrix:
            total += row[t]
        rewards.append(total / n)
    return RewardVector(
        solution_id=solution_id, rewards=rewards, paths_used=n, per_path_rewards=matrix
    )


def binarize(rewards: RewardVector, threshold: float = 0.5) -> list[str]:
    """Per-step verdicts; r >= threshold maps to "correct" (inclusive boundary
    keeps Maj@2 ties from defaulting to error)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly inside (0, 1)")
    return ["correct" if r >= threshold else "incorrect" for r in rewards.rewards]


def predicted_first_error(rewards: RewardVector, threshold: float = 0.5) -> int:
    """Smallest t with reward below threshold, else -1."""
    for t, value in enumerate(rewards.rewards, start=1):
        if value < threshold:
            return t
    return -1


def build_critique_prompt(problem: Problem, steps: Sequence[Step]) -> str:
    paragraphs = render_paragraphs([s.text for s in steps])
    return _CRITIQUE_TEMPLATE.replace("{problem}", problem.statement).replace(
        "{paragraphs}", paragraphs
    )


@dataclass
class VerificationResult:
    """Outcome of verifying one solution over N paths."""

    reward_vector: RewardVector
    verdicts: list[str]
    analyze_texts: list[str]
    transcripts: list[str]
    paths_dropped: int = 0


def _analyze_texts_from(transcript: str, num_steps: int) -> list[str]:
    texts = [""] * num_steps
    sections = list(_SECTION_RE.finditer(transcript))
    for pos, header in enumerate(sections):
        index = int(header.group(1))
        if not 1 <= index <= num_steps:
            continue
        end = sections[pos + 1].start() if pos + 1 < len(sections) else len(transcript)
        analyze = _ANALYZE_RE.search(transcript[header.end():end])
        if analyze is not None:
            texts[index - 1] = analyze.group(1).strip()
    return texts


def verify_solution(
    problem: Problem,
    solution: StepSolution,
    gateway: ModelGateway,
    sandbox: CodeSandbox | None = None,
    *,
    n_paths: int = 1,
    threshold: float = 0.5,
    renormalize: bool = True,
    seed: int = 0,
    temperature: float = 0.6,
    max_tokens: int = 2048,
    solution_id: str | None = None,
) -> VerificationResult:
    """Score each step of a solution with N independent verification paths.

    Every path runs its own critique session (with code execution when a
    sandbox is supplied), per-step Yes-probabilities are extracted, and the
    per-path matrix is averaged. Paths that fail to produce a verdict per step
    are dropped and counted; if all paths drop, verification fails.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    sid = solution_id or f"{problem.id}#0"
    num_steps = solution.num_steps
    messages = (("user", build_critique_prompt(problem, solution.steps)),)

    def _done(text: str) -> bool:
        return len(_VERDICT_RE.findall(text)) >= num_steps

    per_path: list[list[float]] = []
    transcripts: list[str] = []
    dropped = 0
    for path in range(n_paths):
        try:
            transcript, segments = run_interleaved_session(
                gateway,
                sandbox,
                messages,
                role="verifier",
                seed=derive_seed(seed, "verify", sid, path),
                done=_done,
                max_segments=2 * num_steps + 4,
                temperature=temperature,
                max_tokens=max_tokens,
                want_logprobs=True,
            )
        except RationaleSessionError:
            dropped += 1
            continue
        extractions: list[VerdictExtraction] = []
        for segment in segments:
            extractions.extend(extract_verdicts(segment, renormalize))
        if len(extractions) < num_steps:
            dropped += 1
            continue
        per_path.append([e.yes_probability for e in extractions[:num_steps]])
        transcripts.append(transcript)
    if not per_path:
        raise VerdictExtractionError(f"all {n_paths} verification paths failed for {sid}")
    vector = aggregate_paths(per_path, solution_id=sid)
    vector.verdicts = binarize(vector, threshold)
    return VerificationResult(
        reward_vector=vector,
        verdicts=list(vector.verdicts),
        analyze_texts=_analyze_texts_from(transcripts[0], num_steps),
        transcripts=transcripts,
        paths_dropped=dropped,
    )
