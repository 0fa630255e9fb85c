"""Domain vocabulary shared by every pipeline stage.

Problems, step-structured solutions, and the exact answer-equivalence logic
used to score rollouts, votes, and triage decisions. Everything here is a
pure value computation and safe to call from any number of worker threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

# Step markers are line-anchored and case-sensitive: "step 2" inside prose
# must never open a new step.
STEP_MARKER_RE = re.compile(r"^Step (\d+):", re.MULTILINE)

_BOXED_TOKEN = "\\boxed{"
_ANSWER_CUE_RE = re.compile(r"answer is", re.IGNORECASE)
_FRAC_RE = re.compile(r"\\[dt]?frac\{([^{}]+)\}\{([^{}]+)\}")
_FRAC_BARE_RE = re.compile(r"\\[dt]?frac\s*(\d)\s*(\d)")
_INT_RE = re.compile(r"^[+-]?\d+$")
_DECIMAL_RE = re.compile(r"^[+-]?(?:\d+\.\d+|\.\d+)$")
_FRACTION_RE = re.compile(r"^([+-]?\d+)\s*/\s*(\d+)$")
_COMMA_NUMBER_RE = re.compile(r"^[+-]?\d{1,3}(?:,\d{3})+$")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class Problem:
    """A problem statement with its canonical gold answer."""

    id: str
    statement: str
    gold_answer: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("problem id must be non-empty")
        if not self.statement.strip():
            raise ValueError(f"problem {self.id}: statement must be non-empty")
        if not self.gold_answer.strip():
            raise ValueError(f"problem {self.id}: gold answer must be non-empty")


@dataclass(frozen=True)
class Step:
    """One reasoning step; indices within a solution start at 1 and are consecutive."""

    index: int
    text: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError(f"step index must be >= 1, got {self.index}")


@dataclass
class StepSolution:
    """An ordered list of steps plus the extracted final answer (if any).

    The prefix state s_t is the concatenation of the problem statement and
    steps 1..t-1; s_1 is the statement alone and s_{t+1} = [s_t, a_t].
    """

    problem_id: str
    steps: list[Step]
    final_answer: str | None = None

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a solution needs at least one step")
        for pos, step in enumerate(self.steps, start=1):
            if step.index != pos:
                raise ValueError(
                    f"step indices must be consecutive from 1; position {pos} has index {step.index}"
                )

    @property
    def num_steps(self) -> int:
        return len(self.steps)

    def step_texts(self) -> list[str]:
        return [s.text for s in self.steps]


def render_step(step: Step) -> str:
    return f"Step {step.index}: {step.text}"


def render_steps(steps: Sequence[Step]) -> str:
    return "\n\n".join(render_step(s) for s in steps)


def state_prefix(statement: str, steps: Sequence[Step], t: int) -> str:
    """State s_t: the statement joined with steps 1..t-1 (s_1 = statement alone)."""
    if t < 1 or t > len(steps) + 1:
        raise ValueError(f"state index {t} out of range for {len(steps)} steps")
    prefix = statement
    for step in steps[: t - 1]:
        prefix = append_step(prefix, step)
    return prefix


def append_step(state: str, step: Step) -> str:
    """Deterministic transition: s_{t+1} = [s_t, a_t]."""
    return state + "\n\n" + render_step(step)


@dataclass(frozen=True)
class CanonicalAnswer:
    """A normalized answer surface form plus an exact rational value when one parses.

    Canonicalization is idempotent: feeding ``normalized_text`` back through
    :func:`canonicalize_answer` returns the same value.
    """

    normalized_text: str
    numeric_value: Fraction | None = None

    @property
    def is_empty(self) -> bool:
        return not self.normalized_text


def _find_boxed_spans(text: str) -> list[tuple[int, int]]:
    """Spans of the balanced content of every ``\\boxed{...}`` occurrence."""
    spans: list[tuple[int, int]] = []
    start = 0
    while True:
        idx = text.find(_BOXED_TOKEN, start)
        if idx < 0:
            return spans
        content_start = idx + len(_BOXED_TOKEN)
        depth = 1
        pos = content_start
        while pos < len(text) and depth > 0:
            ch = text[pos]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
            pos += 1
        if depth == 0:
            spans.append((content_start, pos - 1))
            start = pos
        else:
            # Unterminated box: take everything after the brace.
            spans.append((content_start, len(text)))
            return spans


def _innermost_boxed(text: str) -> str | None:
    """Content of the last ``\\boxed{...}``, descending into nested boxes."""
    spans = _find_boxed_spans(text)
    if not spans:
        return None
    lo, hi = spans[-1]
    content = text[lo:hi]
    inner = _innermost_boxed(content)
    return inner if inner is not None else content


def extract_final_answer(text: str) -> str | None:
    """Pull the answer clause out of a full generation.

    Order: last ``\\boxed{...}`` in the text; failing that, the text after the
    last occurrence of "answer is" (to end of line); failing that, absent.
    """
    boxed = None
    spans = _find_boxed_spans(text)
    if spans:
        lo, hi = spans[-1]
        boxed = text[lo:hi]
    if boxed is not None:
        return boxed
    matches = list(_ANSWER_CUE_RE.finditer(text))
    if matches:
        tail = text[matches[-1].end():]
        tail = tail.split("\n", 1)[0].strip()
        tail = tail.lstrip(":").strip()
        if tail:
            return tail
    return None


def _strip_decoration(text: str) -> str:
    text = text.replace("$", "")
    text = text.replace("\\left", "").replace("\\right", "")
    text = text.replace("\\!", "").replace("\\,", "").replace("\\;", "")
    text = _FRAC_RE.sub(r"\1/\2", text)
    text = _FRAC_BARE_RE.sub(r"\1/\2", text)
    text = text.strip()
    # Surrounding brace pair only when it wraps the whole remainder.
    while len(text) >= 2 and text[0] == "{" and text[-1] == "}":
        depth = 0
        wraps = True
        for pos, ch in enumerate(text):
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0 and pos != len(text) - 1:
                    wraps = False
                    break
        if not wraps:
            break
        text = text[1:-1].strip()
    text = _WS_RE.sub(" ", text).strip()
    if text.endswith(".") and not _DECIMAL_RE.match(text):
        text = text[:-1].strip()
    if _COMMA_NUMBER_RE.match(text):
        text = text.replace(",", "")
    frac = _FRACTION_RE.match(text)
    if frac:
        text = f"{frac.group(1)}/{frac.group(2)}"
    return text


def _parse_rational(text: str) -> Fraction | None:
    if _INT_RE.match(text):
        return Fraction(int(text))
    if _DECIMAL_RE.match(text):
        return Fraction(text)
    frac = _FRACTION_RE.match(text)
    if frac:
        denominator = int(frac.group(2))
        if denominator != 0:
            return Fraction(int(frac.group(1)), denominator)
    return None


def canonicalize_answer(raw: str | None) -> CanonicalAnswer:
    """Canonicalize a raw answer string.

    Unwraps the innermost ``\\boxed{...}`` if present (else the trailing
    "answer is" clause), strips whitespace/``$``/``\\left``/``\\right``,
    rewrites simple ``\\frac`` forms to ``a/b``, and parses plain integers,
    decimals, and simple fractions into an exact rational. Empty input
    canonicalizes to the empty answer; this never raises.
    """
    text = (raw or "").strip()
    if not text:
        return CanonicalAnswer("", None)
    boxed = _innermost_boxed(text)
    if boxed is not None:
        text = boxed
    else:
        matches = list(_ANSWER_CUE_RE.finditer(text))
        if matches:
            text = text[matches[-1].end():].split("\n", 1)[0].lstrip(":")
    text = _strip_decoration(text)
    return CanonicalAnswer(text, _parse_rational(text))


def answers_equivalent(a: CanonicalAnswer, b: CanonicalAnswer) -> bool:
    """Exact equivalence: equal rationals when both parse, else byte-identical text."""
    if a.numeric_value is not None and b.numeric_value is not None:
        return a.numeric_value == b.numeric_value
    return a.normalized_text == b.normalized_text


def answer_matches_gold(final_answer: str | None, gold_answer: str) -> bool:
    """Convenience triage check; an absent answer never matches."""
    if final_answer is None:
        return False
    return answers_equivalent(canonicalize_answer(final_answer), canonicalize_answer(gold_answer))
