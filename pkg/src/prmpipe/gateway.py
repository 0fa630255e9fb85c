"""Uniform access to text-generation endpoints.

One gateway fronts all model roles (policy, completer, verifier, judge) and
adds the plumbing the pipeline stages rely on: bounded-parallel batching,
stop-sequence enforcement, retries against live OpenAI-compatible endpoints,
and a content-addressed record/replay cache for reproducible runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

log = logging.getLogger(__name__)

ROLES = ("policy", "completer", "verifier", "judge")


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary labels; never uses builtin hash()."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF


@dataclass(frozen=True)
class TokenLogprob:
    """One generated token with its logprob and optional top alternatives."""

    token: str
    logprob: float
    top: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class GenerationRequest:
    role: str
    prompt_messages: tuple[tuple[str, str], ...]
    prefix_forcing: str | None = None
    temperature: float = 0.6
    max_tokens: int = 1024
    stop_sequences: tuple[str, ...] = ()
    seed: int | None = None
    want_logprobs: bool = False

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if not self.prompt_messages:
            raise ValueError("prompt_messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")


@dataclass
class GenerationOutcome:
    """One continuation. ``text`` excludes any forced prefix and never contains
    a stop sequence; when the backend supports logprobs, ``tokens`` concatenate
    to exactly ``text``."""

    text: str
    finish_reason: str  # stop | length | error
    endpoint_id: str
    cached: bool = False
    tokens: tuple[TokenLogprob, ...] | None = None
    matched_stop: str | None = None
    logprobs_unsupported: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.finish_reason != "error"

    def full_text(self, request: GenerationRequest) -> str:
        return (request.prefix_forcing or "") + self.text


class Backend(Protocol):
    endpoint_id: str

    def complete(self, request: GenerationRequest) -> GenerationOutcome: ...


@dataclass(frozen=True)
class EndpointSettings:
    """Connection settings for one role's live endpoint."""

    base_url: str
    model: str
    api: str = "chat"  # chat | completions
    auth_env: str | None = None
    timeout_s: float = 120.0
    max_retries: int = 3
    backoff_s: float = 1.0


def _request_cache_fields(request: GenerationRequest) -> dict:
    data = asdict(request)
    data.pop("want_logprobs")  # excluded so replay hits regardless of logprob needs
    data["prompt_messages"] = [list(m) for m in request.prompt_messages]
    data["stop_sequences"] = list(request.stop_sequences)
    return data


def cache_key(endpoint_id: str, request: GenerationRequest) -> str:
    payload = json.dumps(
        {"endpoint": endpoint_id, "request": _request_cache_fields(request)},
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _outcome_to_dict(outcome: GenerationOutcome) -> dict:
    data = asdict(outcome)
    data.pop("cached")
    return data


def _outcome_from_dict(data: dict) -> GenerationOutcome:
    tokens = data.get("tokens")
    if tokens is not None:
        tokens = tuple(
            TokenLogprob(t[0], t[1], tuple((a[0], a[1]) for a in t[2])) for t in tokens
        )
    return GenerationOutcome(
        text=data["text"],
        finish_reason=data["finish_reason"],
        endpoint_id=data["endpoint_id"],
        tokens=tokens,
        matched_stop=data.get("matched_stop"),
        logprobs_unsupported=data.get("logprobs_unsupported", False),
        error=data.get("error"),
    )


class ReplayCache:
    """Content-addressed outcome store, one JSON document per entry.

    Writes are atomic (temp file + rename) so concurrent workers never observe
    a torn entry.
    """

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _entry_path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> GenerationOutcome | None:
        path = self._entry_path(key)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        outcome = _outcome_from_dict(data)
        outcome.cached = True
        return outcome

    def put(self, key: str, outcome: GenerationOutcome) -> None:
        path = self._entry_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + f".tmp.{os.getpid()}.{threading.get_ident()}")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(_outcome_to_dict(outcome), fh, sort_keys=True)
        os.replace(tmp, path)


class OpenAIBackend:
    """Live backend speaking the OpenAI-compatible chat/completions contract.

    Prefix forcing uses the completions API directly; on chat endpoints the
    prefix is sent as a final assistant message, which requires a server that
    supports assistant continuation (vLLM-style). Transient transport failures
    are retried with exponential backoff before surfacing an error outcome.
    """

    def __init__(
        self,
        settings: EndpointSettings,
        endpoint_id: str | None = None,
        transport=None,
    ) -> None:
        import httpx

        self.settings = settings
        self.endpoint_id = endpoint_id or f"{settings.base_url}#{settings.model}"
        headers = {"Content-Type": "application/json"}
        if settings.auth_env:
            token = os.environ.get(settings.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=settings.base_url,
            headers=headers,
            timeout=settings.timeout_s,
            transport=transport,
        )

    def _payload(self, request: GenerationRequest) -> tuple[str, dict]:
        common: dict = {
            "model": self.settings.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop_sequences:
            common["stop"] = list(request.stop_sequences)
        if request.seed is not None:
            common["seed"] = request.seed
        if self.settings.api == "completions":
            prompt = "\n\n".join(text for _, text in request.prompt_messages)
            if request.prefix_forcing:
                prompt = prompt + "\n\n" + request.prefix_forcing
            payload = dict(common, prompt=prompt)
            if request.want_logprobs:
                payload["logprobs"] = 5
            return "/completions", payload
        messages = [{"role": speaker, "content": text} for speaker, text in request.prompt_messages]
        if request.prefix_forcing:
            messages.append({"role": "assistant", "content": request.prefix_forcing})
        payload = dict(common, messages=messages)
        if request.want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = 5
        return "/chat/completions", payload

    @staticmethod
    def _tokens_from_chat(logprobs: dict | None) -> tuple[TokenLogprob, ...] | None:
        if not logprobs or not logprobs.get("content"):
            return None
        out = []
        for item in logprobs["content"]:
            top = tuple(
                (alt["token"], min(float(alt["logprob"]), 0.0))
                for alt in item.get("top_logprobs", [])
            )
            out.append(TokenLogprob(item["token"], min(float(item["logprob"]), 0.0), top))
        return tuple(out)

    @staticmethod
    def _tokens_from_completions(logprobs: dict | None) -> tuple[TokenLogprob, ...] | None:
        if not logprobs or not logprobs.get("tokens"):
            return None
        out = []
        tops = logprobs.get("top_logprobs") or [None] * len(logprobs["tokens"])
        for token, lp, top in zip(logprobs["tokens"], logprobs["token_logprobs"], tops):
            alts = tuple((t, min(float(v), 0.0)) for t, v in (top or {}).items())
            out.append(TokenLogprob(token, min(float(lp or 0.0), 0.0), alts))
        return tuple(out)

    def complete(self, request: GenerationRequest) -> GenerationOutcome:
        path, payload = self._payload(request)
        last_error = "unknown transport failure"
        for attempt in range(self.settings.max_retries):
            try:
                response = self._client.post(path, json=payload)
                response.raise_for_status()
                data = response.json()
                choice = data["choices"][0]
                if self.settings.api == "completions":
                    text = choice.get("text", "")
                    tokens = self._tokens_from_completions(choice.get("logprobs"))
                else:
                    text = (choice.get("message") or {}).get("content", "") or ""
                    tokens = self._tokens_from_chat(choice.get("logprobs"))
                finish = "length" if choice.get("finish_reason") == "length" else "stop"
                return GenerationOutcome(
                    text=text,
                    finish_reason=finish,
                    endpoint_id=self.endpoint_id,
                    tokens=tokens,
                    logprobs_unsupported=request.want_logprobs and tokens is None,
                )
            except Exception as exc:  # noqa: BLE001 - transport errors become error outcomes
                last_error = f"{type(exc).__name__}: {exc}"
                if attempt + 1 < self.settings.max_retries:
                    time.sleep(self.settings.backoff_s * (2**attempt))
        return GenerationOutcome(
            text="",
            finish_reason="error",
            endpoint_id=self.endpoint_id,
            error=last_error,
        )


def _enforce_stops(outcome: GenerationOutcome, stops: Sequence[str]) -> GenerationOutcome:
    if outcome.finish_reason == "error" or not stops or not outcome.text:
        return outcome
    cut = None
    matched = None
    for stop in stops:
        idx = outcome.text.find(stop)
        if idx >= 0 and (cut is None or idx < cut):
            cut, matched = idx, stop
    if cut is None:
        return outcome
    truncated = outcome.text[:cut]
    tokens = outcome.tokens
    if tokens is not None:
        kept: list[TokenLogprob] = []
        consumed = 0
        for tok in tokens:
            if consumed >= cut:
                break
            if consumed + len(tok.token) <= cut:
                kept.append(tok)
            else:
                kept.append(TokenLogprob(tok.token[: cut - consumed], tok.logprob, tok.top))
            consumed += len(tok.token)
        tokens = tuple(kept)
    return replace(outcome, text=truncated, tokens=tokens, matched_stop=matched, finish_reason="stop")


@dataclass
class GatewayStats:
    live_calls: int = 0
    cache_hits: int = 0
    errors: int = 0


class ModelGateway:
    """Routes requests to per-role backends with caching and bounded parallelism.

    Shareable across worker threads; a semaphore bounds the number of
    outstanding backend calls regardless of how many batches are in flight.
    """

    def __init__(
        self,
        backends: Mapping[str, Backend],
        cache: ReplayCache | None = None,
        max_in_flight: int = 8,
    ) -> None:
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self._backends = dict(backends)
        self.cache = cache
        self.max_in_flight = max_in_flight
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self.stats = GatewayStats()
        self._stats_lock = threading.Lock()

    def backend_for(self, role: str) -> Backend:
        backend = self._backends.get(role) or self._backends.get("*")
        if backend is None:
            raise KeyError(f"no backend configured for role {role!r}")
        return backend

    def generate(self, request: GenerationRequest) -> GenerationOutcome:
        backend = self.backend_for(request.role)
        key = cache_key(backend.endpoint_id, request) if self.cache else None
        if key is not None:
            hit = self.cache.get(key)
            if hit is not None:
                with self._stats_lock:
                    self.stats.cache_hits += 1
                return hit
        with self._semaphore:
            with self._stats_lock:
                self.stats.live_calls += 1
            try:
                outcome = backend.complete(request)
            except Exception as exc:  # noqa: BLE001 - stages treat errors as skippable samples
                log.warning("backend %s failed: %s", backend.endpoint_id, exc)
                outcome = GenerationOutcome(
                    text="",
                    finish_reason="error",
                    endpoint_id=backend.endpoint_id,
                    error=f"{type(exc).__name__}: {exc}",
                )
        outcome = _enforce_stops(outcome, request.stop_sequences)
        if outcome.finish_reason == "error":
            with self._stats_lock:
                self.stats.errors += 1
        elif key is not None:
            self.cache.put(key, outcome)
        return outcome

    def generate_batch(
        self, requests: Sequence[GenerationRequest], max_in_flight: int | None = None
    ) -> list[GenerationOutcome]:
        """All outcomes in request order; failures are isolated per item."""
        limit = max_in_flight or self.max_in_flight
        if limit < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not requests:
            return []

        def _one(request: GenerationRequest) -> GenerationOutcome:
            try:
                return self.generate(request)
            except Exception as exc:  # noqa: BLE001
                return GenerationOutcome(
                    text="",
                    finish_reason="error",
                    endpoint_id="gateway",
                    error=f"{type(exc).__name__}: {exc}",
                )

        with ThreadPoolExecutor(max_workers=min(limit, len(requests))) as pool:
            return list(pool.map(_one, requests))
