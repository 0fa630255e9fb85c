"""Deterministic in-process backends.

``MockWorld`` + ``MockBackend`` simulate every model role against configurable
per-problem truth tables so whole pipelines run as pure functions of
(config, seed); ``ScriptedBackend`` replays canned outcomes for unit tests.
The world doubles as the test oracle: its tables are public so brute-force
checks can enumerate exactly what the backend will do.
"""

from __future__ import annotations

import math
import math
import random
import re
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .core import Problem, Step, StepSolution, render_steps
from .gateway import GenerationOutcome, GenerationRequest, TokenLogprob, derive_seed
from .sampler import parse_steps

_PARAGRAPH_TAG_RE = re.compile(r"<paragraph_(\d+)>\n(.*?)\n</paragraph_\1>", re.DOTALL)


def _strip_answer_clause(text: str) -> str:
    # Marker-based step parsing folds the trailing answer line into the last
    # step's text; table lookups must see the bare step content.
    return text.split("\n\nThe answer is", 1)[0].strip()


@dataclass(frozen=True)
class WorldSettings:
    """Knobs for auto-generated table worlds."""

    step_ok_rate: float = 0.7
    completion_success_ok: float = 0.8
    completion_success_bad: float = 0.0
    depth_min: int = 2
    depth_max: int = 4
    judge_accuracy: float = 1.0
    yes_confidence: float = 0.9
    verdict_jitter: float = 0.04


@dataclass
class TableProblem:
    """Bernoulli world: step texts carry fixed truth flags per level and
    completions succeed with a probability keyed by (state depth, prefix ok)."""

    problem: Problem
    depth: int
    correct_steps: list[str]
    wrong_steps: list[str]
    completion_success_ok: float = 0.8
    completion_success_bad: float = 0.0
    completion_success: dict[tuple[int, bool], float] = field(default_factory=dict)
    step_ok_rate: float = 0.7
    wrong_answer: str = ""

    def __post_init__(self) -> None:
        if len(self.correct_steps) != self.depth or len(self.wrong_steps) != self.depth:
            raise ValueError("step tables must cover every level")
        probabilities = [self.completion_success_ok, self.completion_success_bad, self.step_ok_rate]
        probabilities.extend(self.completion_success.values())
        for p in probabilities:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of range: {p}")
        if not self.wrong_answer:
            self.wrong_answer = f"{self.problem.gold_answer}_wrong"

    def step_is_correct(self, level: int, text: str) -> bool:
        if level > self.depth:
            return False
        return _strip_answer_clause(text) == self.correct_steps[level - 1]

    def success_probability(self, state_depth: int, prefix_ok: bool) -> float:
        fallback = self.completion_success_ok if prefix_ok else self.completion_success_bad
        return self.completion_success.get((state_depth, prefix_ok), fallback)


@dataclass
class BranchingProblem:
    """Exhaustive world: completions from any prefix enumerate a binary tree
    whose leaves carry correctness flags, so exact MC values are computable."""

    problem: Problem
    depth: int
    leaf_correct: dict[tuple[int, ...], bool]
    solution_path: tuple[int, ...]
    wrong_answer: str = ""

    def __post_init__(self) -> None:
        if len(self.solution_path) != self.depth:
            raise ValueError("solution_path must have one branch per level")
        if len(self.leaf_correct) != 2**self.depth:
            raise ValueError("leaf table must cover every leaf")
        if not self.wrong_answer:
            self.wrong_answer = f"{self.problem.gold_answer}_wrong"

    def step_text(self, level: int, branch: int) -> str:
        return f"take branch {branch} at level {level}"

    def branch_of(self, level: int, text: str) -> int:
        text = _strip_answer_clause(text)
        for branch in (0, 1):
            if text == self.step_text(level, branch):
                return branch
        raise ValueError(f"unknown branch text at level {level}: {text!r}")

    def exact_mc(self, prefix: tuple[int, ...]) -> float:
        """Exact success probability from a prefix: fraction of correct leaves."""
        leaves = [leaf for leaf in self.leaf_correct if leaf[: len(prefix)] == prefix]
        return sum(self.leaf_correct[leaf] for leaf in leaves) / len(leaves)

    def solution_steps(self) -> list[Step]:
        return [
            Step(index=level, text=self.step_text(level, branch))
            for level, branch in enumerate(self.solution_path, start=1)
        ]

    def solution(self) -> StepSolution:
        correct = self.leaf_correct[self.solution_path]
        answer = self.problem.gold_answer if correct else self.wrong_answer
        return StepSolution(
            problem_id=self.problem.id, steps=self.solution_steps(), final_answer=answer
        )


MockProblem = TableProblem | BranchingProblem


class MockWorld:
    """A registry of mock problems plus the seed that fixes all behavior."""

    def __init__(self, seed: int, settings: WorldSettings | None = None) -> None:
        self.seed = seed
        self.settings = settings or WorldSettings()
        self.problems: dict[str, MockProblem] = {}

    def add(self, spec: MockProblem) -> None:
        self.problems[spec.problem.id] = spec

    def find_in_text(self, text: str) -> MockProblem | None:
        for spec in self.problems.values():
            if spec.problem.statement in text:
                return spec
        return None

    def true_step_flags(self, problem_id: str, step_texts: Sequence[str]) -> list[bool]:
        spec = self.problems[problem_id]
        flags = []
        for level, text in enumerate(step_texts, start=1):
            if isinstance(spec, BranchingProblem):
                prefix = tuple(
                    spec.branch_of(lv, t) for lv, t in enumerate(step_texts[:level], start=1)
                )
                flags.append(spec.exact_mc(prefix) > 0.0)
            else:
                flags.append(spec.step_is_correct(level, text))
        return flags

    def true_first_error(self, problem_id: str, step_texts: Sequence[str]) -> int:
        for idx, ok in enumerate(self.true_step_flags(problem_id, step_texts), start=1):
            if not ok:
                return idx
        return -1

    def table_solution(
        self, problem_id: str, flags: Sequence[bool], answer: str | None = None
    ) -> StepSolution:
        """A solution whose per-level correctness follows ``flags``."""
        spec = self.problems[problem_id]
        assert isinstance(spec, TableProblem)
        if len(flags) != spec.depth:
            raise ValueError("flags must cover every level")
        steps = [
            Step(index=level, text=spec.correct_steps[level - 1] if ok else spec.wrong_steps[level - 1])
            for level, ok in enumerate(flags, start=1)
        ]
        if answer is None:
            answer = spec.problem.gold_answer if all(flags) else spec.wrong_answer
        return StepSolution(problem_id=problem_id, steps=steps, final_answer=answer)

    @classmethod
    def generate(
        cls,
        problems: Iterable[Problem],
        seed: int,
        settings: WorldSettings | None = None,
    ) -> "MockWorld":
        """Auto-build a table world for a problem list, all from the seed."""
        world = cls(seed, settings)
        cfg = world.settings
        for problem in problems:
            rng = random.Random(derive_seed(seed, "world", problem.id))
            depth = rng.randint(cfg.depth_min, cfg.depth_max)
            world.add(
                TableProblem(
                    problem=problem,
                    depth=depth,
                    correct_steps=[
                        f"apply transform {problem.id}-{level}A" for level in range(1, depth + 1)
                    ],
                    wrong_steps=[
                        f"apply transform {problem.id}-{level}B" for level in range(1, depth + 1)
                    ],
                    completion_success_ok=cfg.completion_success_ok,
                    completion_success_bad=cfg.completion_success_bad,
                    step_ok_rate=cfg.step_ok_rate,
                )
            )
        return world


def _request_text(request: GenerationRequest) -> str:
    return "\n\n".join(text for _, text in request.prompt_messages)


def _rng_for(world: MockWorld, request: GenerationRequest, *extra: object) -> random.Random:
    return random.Random(derive_seed(world.seed, request.role, request.seed, _request_text(request), *extra))


def _answer_line(answer: str) -> str:
    return f"The answer is $\\boxed{{{answer}}}$"


class MockBackend:
    """Implements every model role against a :class:`MockWorld`.

    Outcomes are pure functions of (world seed, request); identical requests
    always produce byte-identical outcomes. Scripts are generated in full and
    the part already present in ``prefix_forcing`` is subtracted, so sessions
    that splice execution feedback into the transcript resume cleanly.
    """

    def __init__(self, world: MockWorld, endpoint_id: str = "mock") -> None:
        self.world = world
        self.endpoint_id = endpoint_id
        self.calls = 0
        self._lock = threading.Lock()

    # ------------------------------------------------------------------ utils

    def _spec_for(self, request: GenerationRequest) -> MockProblem:
        spec = self.world.find_in_text(_request_text(request))
        if spec is None:
            raise ValueError("mock backend: no registered problem found in prompt")
        return spec

    @staticmethod
    def _continuation(script: str, prefix: str | None) -> str:
        if not prefix:
            return script
        if script.startswith(prefix):
            return script[len(prefix):]
        # Transcript diverged because feedback was spliced in: resume after the
        # n-th </verify> of the canonical script, dropping the one newline the
        # session already re-inserted.
        n = prefix.count("</verify>")
        pos = 0
        for _ in range(n):
            idx = script.find("</verify>", pos)
            if idx < 0:
                return ""
            pos = idx + len("</verify>")
        remainder = script[pos:]
        if remainder.startswith("\n"):
            remainder = remainder[1:]
        return remainder

    def _outcome(self, text: str, tokens: tuple[TokenLogprob, ...] | None = None) -> GenerationOutcome:
        return GenerationOutcome(
            text=text,
            finish_reason="stop",
            endpoint_id=self.endpoint_id,
            tokens=tokens,
            logprobs_unsupported=False,
        )

    # ----------------------------------------------------------------- policy

    def _policy_steps(self, spec: MockProblem, rng: random.Random) -> tuple[list[str], bool]:
        if isinstance(spec, BranchingProblem):
            path = tuple(rng.randint(0, 1) for _ in range(spec.depth))
            texts = [spec.step_text(level, b) for level, b in enumerate(path, start=1)]
            return texts, spec.leaf_correct[path]
        texts = []
        all_ok = True
        for level in range(1, spec.depth + 1):
            ok = rng.random() < spec.step_ok_rate
            texts.append(spec.correct_steps[level - 1] if ok else spec.wrong_steps[level - 1])
            all_ok = all_ok and ok
        return texts, all_ok

    def _sample_script(self, request: GenerationRequest) -> str:
        spec = self._spec_for(request)
        rng = _rng_for(self.world, request)
        texts, correct = self._policy_steps(spec, rng)
        steps = [Step(index=i, text=t) for i, t in enumerate(texts, start=1)]
        answer = spec.problem.gold_answer if correct else spec.wrong_answer
        return render_steps(steps) + "\n\n" + _answer_line(answer)

    def _refine_script(self, request: GenerationRequest) -> str:
        spec = self._spec_for(request)
        if not isinstance(spec, TableProblem):
            raise ValueError("mock refinement supports table problems only")
        text = _request_text(request)
        body = text.split("[Previous Solution]", 1)[1].split("[Critiques]", 1)[0]
        prior = parse_steps(body)
        texts = [_strip_answer_clause(s.text) for s in prior]
        # Fix exactly the first incorrect step; later errors survive to the
        # next turn, which is what makes multi-turn refinement measurable.
        for level, step_text in enumerate(texts, start=1):
            if not spec.step_is_correct(level, step_text):
                texts[level - 1] = spec.correct_steps[level - 1]
                break
        flags = [spec.step_is_correct(i, t) for i, t in enumerate(texts, start=1)]
        answer = spec.problem.gold_answer if all(flags) else spec.wrong_answer
        steps = [Step(index=i, text=t) for i, t in enumerate(texts, start=1)]
        return render_steps(steps) + "\n\n" + _answer_line(answer)

    # -------------------------------------------------------------- completer

    def _parse_state(self, spec: MockProblem, text: str) -> list[str]:
        idx = text.find(spec.problem.statement)
        tail = text[idx + len(spec.problem.statement):]
        return [s.text for s in parse_steps(tail)]

    def _complete_script(self, request: GenerationRequest) -> str:
        spec = self._spec_for(request)
        prefix_texts = self._parse_state(spec, _request_text(request))
        k = len(prefix_texts)
        if isinstance(spec, BranchingProblem):
            prefix = tuple(
                spec.branch_of(level, t) for level, t in enumerate(prefix_texts, start=1)
            )
            remaining = spec.depth - k
            count = 2**remaining
            index = (request.seed or 0) % count
            bits = tuple((index >> (remaining - 1 - i)) & 1 for i in range(remaining))
            leaf = prefix + bits
            success = spec.leaf_correct[leaf]
            body = [
                f"Step {k + i + 1}: {spec.step_text(k + i + 1, b)}" for i, b in enumerate(bits)
            ]
        else:
            flags = [spec.step_is_correct(i, t) for i, t in enumerate(prefix_texts, start=1)]
            prefix_ok = all(flags)
            p = spec.success_probability(k + 1, prefix_ok)
            rng = _rng_for(self.world, request)
            success = rng.random() < p
            body = [
                f"Step {k + i + 1}: {spec.correct_steps[k + i]}"
                for i in range(spec.depth - k)
            ]
            if not success and body:
                body[0] = f"Step {k + 1}: {spec.wrong_steps[k]}"
        answer = spec.problem.gold_answer if success else spec.wrong_answer
        return "\n\n".join(body + [_answer_line(answer)])

    # --------------------------------------------------------------- verifier

    def _prompt_paragraphs(self, text: str) -> list[str]:
        # The judge prompt embeds example paragraph tags in its instructions;
        # the real tagged solution always follows the last "[Solution]".
        idx = text.rfind("[Solution]")
        if idx >= 0:
            text = text[idx:]
        return [m.group(2) for m in _PARAGRAPH_TAG_RE.finditer(text)]

    def _judged_first_error(
        self, spec: MockProblem, paragraphs: Sequence[str], rng: random.Random
    ) -> int:
        truth = self.world.true_first_error(spec.problem.id, paragraphs)
        if rng.random() < self.world.settings.judge_accuracy:
            return truth
        # Deliberately wrong judgment: claim clean when there is an error and
        # vice versa, so consensus filtering has something to reject.
        if truth == -1:
            return rng.randint(1, len(paragraphs))
        return -1 if truth == 1 else truth - 1

    def _rationale_script(self, request: GenerationRequest) -> str:
        spec = self._spec_for(request)
        paragraphs = self._prompt_paragraphs(_request_text(request))
        flags = self.world.true_step_flags(spec.problem.id, paragraphs)
        rng = _rng_for(self.world, request, "judge-label")
        judged = self._judged_first_error(spec, paragraphs, rng)
        parts = []
        for k, ok in enumerate(flags, start=1):
            verdict = "holds up" if ok else "contains a flaw"
            parts.append(
                f"### Paragraph {k}\n"
                f"<analyze>Re-deriving the quantity used in paragraph {k}: the update {verdict}.</analyze>\n"
                f"<verify>\n```python\nprint(\"recheck {k}:\", {str(ok)!r})\n```\n</verify>"
            )
        parts.append(f"$\\boxed{{{judged}}}$")
        return "\n\n".join(parts)

    def _verdict_probs(
        self, spec: MockProblem, paragraphs: Sequence[str], request: GenerationRequest
    ) -> list[float]:
        cfg = self.world.settings
        flags = self.world.true_step_flags(spec.problem.id, paragraphs)
        probs = []
        for k, ok in enumerate(flags, start=1):
            base = cfg.yes_confidence if ok else 1.0 - cfg.yes_confidence
            rng = _rng_for(self.world, request, "verdict", k)
            jitter = rng.uniform(-cfg.verdict_jitter, cfg.verdict_jitter)
            probs.append(min(0.98, max(0.02, base + jitter)))
        return probs

    def _critique_script(self, request: GenerationRequest) -> tuple[str, list[float]]:
        spec = self._spec_for(request)
        paragraphs = self._prompt_paragraphs(_request_text(request))
        probs = self._verdict_probs(spec, paragraphs, request)
        parts = []
        for k, p in enumerate(probs, start=1):
            word = "Yes" if p >= 0.5 else "No"
            parts.append(
                f"### Paragraph {k}\n"
                f"<analyze>Checking paragraph {k} against the problem constraints.</analyze>\n"
                f"<verify>\n```python\nprint(\"recheck {k}\")\n```\n</verify>\n"
                f"Judgement: $\\boxed{{{word}}}$"
            )
        return "\n\n".join(parts) + "\n", probs

    def _critique_tokens(
        self, script: str, continuation: str, probs: list[float]
    ) -> tuple[TokenLogprob, ...]:
        offset = len(script) - len(continuation)
        verdict_spans = [
            (m.start(1), k) for k, m in enumerate(re.finditer(r"\\boxed\{(Yes|No)\}", script), start=0)
        ]
        span_by_pos = dict(verdict_spans)
        tokens: list[TokenLogprob] = []
        for piece_match in re.finditer(r"(Yes|No)|[^YN]+|[YN]", continuation):
            piece = piece_match.group(0)
            absolute = offset + piece_match.start()
            if piece in ("Yes", "No") and absolute in span_by_pos:
                p_yes = probs[span_by_pos[absolute]]
                lp_yes, lp_no = math.log(p_yes), math.log(1.0 - p_yes)
                tokens.append(
                    TokenLogprob(
                        token=piece,
                        logprob=lp_yes if piece == "Yes" else lp_no,
                        top=(("Yes", lp_yes), ("No", lp_no)),
                    )
                )
            else:
                tokens.append(TokenLogprob(token=piece, logprob=-0.01))
        return tuple(tokens)

    # ------------------------------------------------------------------ judge

    def _judge_script(self, request: GenerationRequest) -> str:
        spec = self._spec_for(request)
        paragraphs = self._prompt_paragraphs(_request_text(request))
        truth = self.world.true_first_error(spec.problem.id, paragraphs)
        upto = len(paragraphs) if truth == -1 else truth
        parts = [
            f"<analysis_{k}>\nParagraph {k} re-derivation.\n</analysis_{k}>"
            for k in range(1, upto + 1)
        ]
        verdict = "Correct" if truth == -1 else "Incorrect"
        parts.append(f"<conclusion>\n{verdict}\n</conclusion>")
        return "\n\n".join(parts)

    # ------------------------------------------------------------------ entry

    def complete(self, request: GenerationRequest) -> GenerationOutcome:
        with self._lock:
            self.calls += 1
        text = _request_text(request)
        if request.role == "policy":
            script = (
                self._refine_script(request)
                if "[Previous Solution]" in text
                else self._sample_script(request)
            )
            return self._outcome(self._continuation(script, request.prefix_forcing))
        if request.role == "completer":
            return self._outcome(self._continuation(self._complete_script(request), request.prefix_forcing))
        if request.role == "judge":
            return self._outcome(self._continuation(self._judge_script(request), request.prefix_forcing))
        if request.role == "verifier":
            if "\\boxed{Yes|No}" in text:
                script, probs = self._critique_script(request)
                continuation = self._continuation(script, request.prefix_forcing)
                tokens = (
                    self._critique_tokens(script, continuation, probs)
                    if request.want_logprobs
                    else None
                )
                return self._outcome(continuation, tokens)
            return self._outcome(
                self._continuation(self._rationale_script(request), request.prefix_forcing)
            )
        raise ValueError(f"unhandled role {request.role!r}")


class ScriptedBackend:
    """Replays canned outcomes (or a callable script) for unit tests."""

    def __init__(
        self,
        outcomes: Sequence[GenerationOutcome | str] = (),
        script: Callable[[GenerationRequest], GenerationOutcome | str] | None = None,
        endpoint_id: str = "scripted",
    ) -> None:
        self.endpoint_id = endpoint_id
        self._queue = deque(outcomes)
        self._script = script
        self.requests: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: GenerationRequest) -> GenerationOutcome:
        with self._lock:
            self.requests.append(request)
            result = self._script(request) if self._script else self._queue.popleft()
        if isinstance(result, str):
            result = GenerationOutcome(
                text=result, finish_reason="stop", endpoint_id=self.endpoint_id
            )
        return result
