"""OpenAI-compatible backend exercised against an in-process fake transport."""

from __future__ import annotations

import json

import httpx
import pytest

from prmpipe.gateway import EndpointSettings, GenerationRequest, OpenAIBackend


def _chat_response(content="Step 1: done", finish="stop", logprobs=None):
    choice = {"message": {"content": content}, "finish_reason": finish}
    if logprobs is not None:
        choice["logprobs"] = logprobs
    return {"choices": [choice]}


def _backend(handler, api="chat", max_retries=3):
    settings = EndpointSettings(
        base_url="http://fake", model="test-model", api=api, max_retries=max_retries, backoff_s=0.01
    )
    return OpenAIBackend(settings, transport=httpx.MockTransport(handler))


def _request(**overrides) -> GenerationRequest:
    base = dict(
        role="policy",
        prompt_messages=(("system", "sys"), ("user", "solve it")),
        temperature=0.6,
        max_tokens=128,
        seed=5,
    )
    base.update(overrides)
    return GenerationRequest(**base)


def test_chat_payload_shape():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["path"] = request.url.path
        seen["payload"] = json.loads(request.content)
        return httpx.Response(200, json=_chat_response())

    outcome = _backend(handler).complete(
        _request(stop_sequences=("\n\nStep",), want_logprobs=True)
    )
    assert seen["path"] == "/chat/completions"
    payload = seen["payload"]
    assert payload["model"] == "test-model"
    assert payload["messages"] == [
        {"role": "system", "content": "sys"},
        {"role": "user", "content": "solve it"},
    ]
    assert payload["temperature"] == 0.6
    assert payload["max_tokens"] == 128
    assert payload["stop"] == ["\n\nStep"]
    assert payload["seed"] == 5
    assert payload["logprobs"] is True
    assert outcome.finish_reason == "stop"
    assert outcome.text == "Step 1: done"


def test_chat_prefix_forcing_appends_assistant_message():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["payload"] = json.loads(request.content)
        return httpx.Response(200, json=_chat_response(" continued"))

    _backend(handler).complete(_request(prefix_forcing="Step 1:"))
    assert seen["payload"]["messages"][-1] == {"role": "assistant", "content": "Step 1:"}


def test_completions_prefix_forcing_concatenates_prompt():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["payload"] = json.loads(request.content)
        return httpx.Response(200, json={"choices": [{"text": " done", "finish_reason": "stop"}]})

    outcome = _backend(handler, api="completions").complete(_request(prefix_forcing="Step 1:"))
    assert seen["payload"]["prompt"] == "sys\n\nsolve it\n\nStep 1:"
    assert outcome.text == " done"


def test_retries_then_success():
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        if attempts["n"] < 3:
            return httpx.Response(500, text="overloaded")
        return httpx.Response(200, json=_chat_response("recovered"))

    outcome = _backend(handler).complete(_request())
    assert attempts["n"] == 3
    assert outcome.text == "recovered"
    assert outcome.finish_reason == "stop"


def test_error_outcome_after_exhausted_retries():
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        return httpx.Response(503, text="down")

    outcome = _backend(handler).complete(_request())
    assert attempts["n"] == 3
    assert outcome.finish_reason == "error"
    assert outcome.error and "503" in outcome.error


def test_length_finish_reason_mapped():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=_chat_response(finish="length"))

    assert _backend(handler).complete(_request()).finish_reason == "length"


def test_chat_logprobs_parsed_with_alternatives():
    logprobs = {
        "content": [
            {
                "token": "Yes",
                "logprob": -0.105,
                "top_logprobs": [
                    {"token": "Yes", "logprob": -0.105},
                    {"token": "No", "logprob": -2.3},
                ],
            }
        ]
    }

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=_chat_response("Yes", logprobs=logprobs))

    outcome = _backend(handler).complete(_request(want_logprobs=True))
    assert outcome.tokens is not None
    token = outcome.tokens[0]
    assert token.token == "Yes"
    assert token.logprob == pytest.approx(-0.105)
    assert dict(token.top)["No"] == pytest.approx(-2.3)
    assert not outcome.logprobs_unsupported


def test_completions_logprobs_parsed():
    body = {
        "choices": [
            {
                "text": "Yes",
                "finish_reason": "stop",
                "logprobs": {
                    "tokens": ["Yes"],
                    "token_logprobs": [-0.2],
                    "top_logprobs": [{"Yes": -0.2, "No": -1.8}],
                },
            }
        ]
    }

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=body)

    outcome = _backend(handler, api="completions").complete(_request(want_logprobs=True))
    assert outcome.tokens[0].token == "Yes"
    assert dict(outcome.tokens[0].top)["No"] == pytest.approx(-1.8)


def test_logprobs_unsupported_is_flagged():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=_chat_response())

    outcome = _backend(handler).complete(_request(want_logprobs=True))
    assert outcome.tokens is None
    assert outcome.logprobs_unsupported


def test_positive_logprobs_are_clamped():
    logprobs = {"content": [{"token": "x", "logprob": 0.02, "top_logprobs": []}]}

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=_chat_response("x", logprobs=logprobs))

    outcome = _backend(handler).complete(_request(want_logprobs=True))
    assert outcome.tokens[0].logprob == 0.0


def test_auth_header_from_environment(monkeypatch):
    monkeypatch.setenv("FAKE_TOKEN", "secret-token")
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["auth"] = request.headers.get("Authorization")
        return httpx.Response(200, json=_chat_response())

    settings = EndpointSettings(
        base_url="http://fake", model="m", auth_env="FAKE_TOKEN", backoff_s=0.01
    )
    OpenAIBackend(settings, transport=httpx.MockTransport(handler)).complete(_request())
    assert seen["auth"] == "Bearer secret-token"
