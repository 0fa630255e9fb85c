from __future__ import annotations

import threading

import pytest

from prmpipe.core import Problem
from prmpipe.gateway import GenerationOutcome, GenerationRequest, ModelGateway
from prmpipe.mockworld import MockBackend, MockWorld, TableProblem
from prmpipe.sandbox import CodeSandbox


def make_table_world(
    seed: int = 7,
    depth: int = 3,
    *,
    step_ok_rate: float = 0.6,
    completion_success_ok: float = 0.8,
    completion_success_bad: float = 0.0,
    gold: str = "42",
    problem_id: str = "p1",
) -> tuple[MockWorld, Problem]:
    problem = Problem(
        id=problem_id,
        statement=f"Compute the canonical value for task {problem_id}.",
        gold_answer=gold,
    )
    world = MockWorld(seed=seed)
    world.add(
        TableProblem(
            problem=problem,
            depth=depth,
            correct_steps=[f"{problem_id} move {i}A" for i in range(1, depth + 1)],
            wrong_steps=[f"{problem_id} move {i}B" for i in range(1, depth + 1)],
            completion_success_ok=completion_success_ok,
            completion_success_bad=completion_success_bad,
            step_ok_rate=step_ok_rate,
        )
    )
    return world, problem


def gateway_for(world: MockWorld, max_in_flight: int = 8) -> ModelGateway:
    return ModelGateway({"*": MockBackend(world)}, max_in_flight=max_in_flight)


class CountingBackend:
    """Wraps a backend to record the peak number of concurrent calls."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.endpoint_id = inner.endpoint_id
        self.active = 0
        self.peak = 0
        self.total = 0
        self.requests: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: GenerationRequest) -> GenerationOutcome:
        with self._lock:
            self.active += 1
            self.total += 1
            self.peak = max(self.peak, self.active)
            self.requests.append(request)
        try:
            return self.inner.complete(request)
        finally:
            with self._lock:
                self.active -= 1


@pytest.fixture(scope="session")
def sandbox() -> CodeSandbox:
    return CodeSandbox()
