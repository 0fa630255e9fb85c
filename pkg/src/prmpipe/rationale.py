"""Rationale synthesis with interleaved code execution, plus consensus filtering.

A rationale session alternates between the verifier endpoint and the code
sandbox: generation halts at each closing ``</verify>``, the fenced code is
executed, and the formatted feedback is spliced into the transcript before
generation resumes. The finished transcript carries one analyze/verify block
per paragraph and a final boxed first-error judgment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

from .core import Problem, Step
from .gateway import GenerationOutcome, GenerationRequest, ModelGateway
from .labels import ProgressLabels
from .sandbox import CodeSandbox, format_feedback

VERIFY_CLOSE = "</verify>"

_PARAGRAPH_HEADER_RE = re.compile(r"^### Paragraph (\d+)[ \t]*$", re.MULTILINE)
_ANALYZE_RE = re.compile(r"<analyze>(.*?)</analyze>", re.DOTALL)
_VERIFY_RE = re.compile(r"<verify>(.*?)</verify>", re.DOTALL)
_CODE_FENCE_RE = re.compile(r"```python\n(.*?)```", re.DOTALL)
_BOXED_INT_RE = re.compile(r"\\boxed\{(-?\d+)\}")
FEEDBACK_START = "[Code output: "


class RationaleParseError(ValueError):
    """Transcript does not satisfy the rationale grammar."""


class RationaleSessionError(RuntimeError):
    """Session produced no valid rationale; the solution is excluded and counted."""

    def __init__(self, reason: str, transcript: str = "") -> None:
        super().__init__(reason)
        self.reason = reason
        self.transcript = transcript


def _load_prompt(name: str) -> str:
    return resources.files("prmpipe.prompts").joinpath(name).read_text(encoding="utf-8").rstrip("\n")


RATIONALE_SYSTEM_PROMPT = _load_prompt("rationale_system.txt")
_RATIONALE_USER_TEMPLATE = _load_prompt("rationale_user.txt")
_JUDGE_TEMPLATE = _load_prompt("processbench_judge.txt")


def render_paragraphs(step_texts: Sequence[str]) -> str:
    blocks = [
        f"<paragraph_{k}>\n{text}\n</paragraph_{k}>" for k, text in enumerate(step_texts, start=1)
    ]
    return "\n\n".join(blocks)


def build_rationale_prompt(problem: Problem, steps: Sequence[Step]) -> str:
    """User message of the rationale-generation prompt, rendered verbatim from
    the versioned template (the template text itself contains literal braces,
    so substitution is plain replacement, never str.format)."""
    if not steps:
        raise ValueError("steps must be non-empty")
    paragraphs = render_paragraphs([s.text for s in steps])
    return _RATIONALE_USER_TEMPLATE.replace("{problem}", problem.statement).replace(
        "{paragraphs}", paragraphs
    )


def build_processbench_judge_prompt(problem_statement: str, step_texts: Sequence[str]) -> str:
    """LLM-as-a-judge prompt with the tagged problem and tagged response."""
    tagged_problem = f"<math_problem>\n{problem_statement}\n</math_problem>"
    tagged_response = render_paragraphs(step_texts)
    return _JUDGE_TEMPLATE.replace("{tagged_problem}", tagged_problem).replace(
        "{tagged_response}", tagged_response
    )


@dataclass
class RationaleBlock:
    """One paragraph's verification: analysis text, optional code, optional feedback.

    Feedback is present iff code was present and actually executed.
    """

    step_index: int
    analyze_text: str
    verify_code: str | None = None
    feedback: str | None = None


@dataclass
class Rationale:
    solution_id: str
    blocks: list[RationaleBlock]
    judged_first_error: int
    raw_transcript: str

    def __post_init__(self) -> None:
        indices = [b.step_index for b in self.blocks]
        if indices != sorted(indices):
            raise ValueError("blocks must be ordered by step_index")


@dataclass
class FilterDecision:
    retained: bool
    mismatch_positions: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.retained != (not self.mismatch_positions):
            raise ValueError("retained must hold exactly when there are no mismatches")


def _find_feedback(chunk: str) -> str | None:
    """First feedback string in ``chunk``: from "[Code output: " to the last
    end-of-line "]" before further content."""
    start = chunk.find(FEEDBACK_START)
    if start < 0:
        return None
    end = None
    for match in re.finditer(r"\](?=\n|$)", chunk[start:]):
        end = start + match.end()
    if end is None:
        return None
    return chunk[start:end]


def parse_rationale(transcript: str, num_steps: int, solution_id: str = "") -> Rationale:
    """Parse a finished transcript into blocks plus the boxed first-error index.

    Raises :class:`RationaleParseError` when a covered paragraph lacks an
    analyze block, headers are out of order, or the boxed value is missing or
    outside {-1} union [1, T].
    """
    headers = list(_PARAGRAPH_HEADER_RE.finditer(transcript))
    if not headers:
        raise RationaleParseError("no paragraph headers found")
    blocks: list[RationaleBlock] = []
    for pos, header in enumerate(headers):
        index = int(header.group(1))
        if index != pos + 1:
            raise RationaleParseError(
                f"paragraph headers must run 1..n; header {pos + 1} is {index}"
            )
        if index > num_steps:
            raise RationaleParseError(f"paragraph {index} exceeds solution length {num_steps}")
        end = headers[pos + 1].start() if pos + 1 < len(headers) else len(transcript)
        section = transcript[header.end():end]
        analyze = _ANALYZE_RE.search(section)
        if analyze is None:
            raise RationaleParseError(f"paragraph {index} has no <analyze> block")
        verify = _VERIFY_RE.search(section)
        code = None
        feedback = None
        if verify is not None:
            fence = _CODE_FENCE_RE.search(verify.group(1))
            if fence is not None:
                code = fence.group(1).rstrip("\n")
            feedback = _find_feedback(section[verify.end():])
        blocks.append(
            RationaleBlock(
                step_index=index,
                analyze_text=analyze.group(1).strip(),
                verify_code=code,
                feedback=feedback,
            )
        )
    boxed = _BOXED_INT_RE.findall(transcript)
    if not boxed:
        raise RationaleParseError("no boxed judgment found")
    judged = int(boxed[-1])
    if judged != -1 and not 1 <= judged <= num_steps:
        raise RationaleParseError(f"boxed index {judged} outside -1 or 1..{num_steps}")
    return Rationale(
        solution_id=solution_id,
        blocks=blocks,
        judged_first_error=judged,
        raw_transcript=transcript,
    )


def render_transcript(blocks: Sequence[RationaleBlock], judged_first_error: int) -> str:
    """Inverse of :func:`parse_rationale` for scripted backends and fixtures."""
    parts: list[str] = []
    for block in blocks:
        lines = [f"### Paragraph {block.step_index}", f"<analyze>{block.analyze_text}</analyze>"]
        if block.verify_code is not None:
            lines.append(f"<verify>\n```python\n{block.verify_code}\n```\n</verify>")
            if block.feedback is not None:
                lines.append(block.feedback)
        parts.append("\n".join(lines))
    parts.append(f"$\\boxed{{{judged_first_error}}}$")
    return "\n\n".join(parts)


def extract_last_verify_code(transcript: str) -> str | None:
    """Fenced code of the last <verify> block; text-only blocks yield None."""
    matches = list(_VERIFY_RE.finditer(transcript))
    if not matches:
        return None
    fence = _CODE_FENCE_RE.search(matches[-1].group(1))
    if fence is None:
        return None
    return fence.group(1).rstrip("\n")


def _has_unclosed_verify(transcript: str) -> bool:
    last_open = transcript.rfind("<verify>")
    if last_open < 0:
        return False
    return transcript.find(VERIFY_CLOSE, last_open) < 0


def run_interleaved_session(
    gateway: ModelGateway,
    sandbox: CodeSandbox | None,
    messages: Sequence[tuple[str, str]],
    *,
    role: str,
    seed: int,
    done: Callable[[str], bool],
    max_segments: int,
    temperature: float = 0.6,
    max_tokens: int = 2048,
    want_logprobs: bool = False,
) -> tuple[str, list[GenerationOutcome]]:
    """Generate with stop-at-``</verify>`` semantics until ``done`` or budget.

    Returns the transcript (with executed feedback spliced in) and the raw
    generation segments. When ``sandbox`` is None, code never runs and no stop
    sequences are used. Raises :class:`RationaleSessionError` on transport
    failure, stalled generation, or budget exhaustion.
    """
    transcript = ""
    segments: list[GenerationOutcome] = []
    stops = (VERIFY_CLOSE,) if sandbox is not None else ()
    for _ in range(max_segments):
        request = GenerationRequest(
            role=role,
            prompt_messages=tuple(messages),
            prefix_forcing=transcript or None,
            temperature=temperature,
            max_tokens=max_tokens,
            stop_sequences=stops,
            seed=seed,
            want_logprobs=want_logprobs,
        )
        outcome = gateway.generate(request)
        segments.append(outcome)
        if not outcome.ok:
            raise RationaleSessionError(f"generation failed: {outcome.error}", transcript)
        piece = outcome.text
        stopped_at_verify = outcome.matched_stop == VERIFY_CLOSE or (
            sandbox is not None
            and outcome.finish_reason == "stop"
            and _has_unclosed_verify(transcript + piece)
        )
        if stopped_at_verify:
            transcript += piece + VERIFY_CLOSE
            code = extract_last_verify_code(transcript)
            if code and sandbox is not None:
                result = sandbox.execute(code)
                transcript += "\n" + format_feedback(result) + "\n"
            else:
                # No fenced code: nothing executes, flagged by absent feedback.
                transcript += "\n"
            continue
        transcript += piece
        if done(transcript):
            return transcript, segments
        if not piece.strip():
            raise RationaleSessionError("generation stalled with no progress", transcript)
    raise RationaleSessionError(f"segment budget exhausted ({max_segments})", transcript)


def run_rationale_session(
    problem: Problem,
    steps: Sequence[Step],
    gateway: ModelGateway,
    sandbox: CodeSandbox | None,
    *,
    solution_id: str = "",
    seed: int = 0,
    temperature: float = 0.6,
    max_tokens: int = 2048,
    extra_segments: int = 4,
) -> Rationale:
    """Drive one rationale synthesis session and parse the result.

    The block budget is 2T + ``extra_segments`` generation segments, which
    bounds the cost of runaway generations. Invalid sessions raise
    :class:`RationaleSessionError` so callers can count exclusions.
    """
    messages = (
        ("system", RATIONALE_SYSTEM_PROMPT),
        ("user", build_rationale_prompt(problem, steps)),
    )
    transcript, _ = run_interleaved_session(
        gateway,
        sandbox,
        messages,
        role="verifier",
        seed=seed,
        done=lambda text: _BOXED_INT_RE.search(text) is not None,
        max_segments=2 * len(steps) + extra_segments,
        temperature=temperature,
        max_tokens=max_tokens,
    )
    try:
        return parse_rationale(transcript, len(steps), solution_id=solution_id)
    except RationaleParseError as exc:
        raise RationaleSessionError(f"parse failure: {exc}", transcript) from exc


def consensus_filter(labels: ProgressLabels, rationale: Rationale) -> FilterDecision:
    """Compare progress labels against the judged first error.

    The judge expresses no opinion past its first error, so the comparison
    range is 1..T when the judgment is -1 and 1..j otherwise; the solution is
    retained only when every compared position agrees.
    """
    num_steps = len(labels.labels)
    judged = rationale.judged_first_error
    if judged != -1 and not 1 <= judged <= num_steps:
        raise ValueError(f"judged first error {judged} outside -1 or 1..{num_steps}")
    compare_upto = num_steps if judged == -1 else judged
    mismatches = []
    for t in range(1, compare_upto + 1):
        judge_label = 1 if (judged == -1 or t < judged) else 0
        if labels.labels[t - 1] != judge_label:
            mismatches.append(t)
    return FilterDecision(retained=not mismatches, mismatch_positions=mismatches)
