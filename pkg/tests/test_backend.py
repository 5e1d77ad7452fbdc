import json
import threading
import time

import httpx
import pytest

from rankshift.backend import (
    BackendConfig,
    BackendConfigError,
    BackendResponseError,
    BackendStatusError,
    BackendTransportError,
    LiveBackend,
    MockBackend,
    TextRequest,
    join_keywords,
    make_backend,
    mock_draft,
    query_keywords,
    split_keywords,
)
from rankshift.query_opt import render

LIVE = BackendConfig("live", "https://llm.example/v1/chat/completions", "m-1", "RS_TEST_KEY")


def ok_body(text="hello", usage=True):
    body = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage:
        body["usage"] = {"prompt_tokens": 11, "completion_tokens": 3}
    return body


def test_keyword_helpers():
    assert query_keywords("best quiet quiet blender", 3) == ["best", "quiet", "blender"]
    assert join_keywords(["a", "b", "c"]) == "a, b and c"
    assert split_keywords("a, b and c") == ["a", "b", "c"]
    assert join_keywords(["a"]) == "a"


def test_mock_generator_and_refinement_chain():
    mb = MockBackend()
    query = "best quiet compact blender"
    _, user = render("generator_review", user_query=query,
                     product_list_in_JSON_format="[]",
                     target_item_information=json.dumps({"name": "Acme B1"}))
    r0 = mb.complete(TextRequest("sys", user))
    assert r0.text == mock_draft("review", query, "Acme B1", 0)
    assert "felt best and quiet," in r0.text
    assert r0.prompt_tokens == len(f"sys\n{user}".split())
    assert r0.completion_tokens == len(r0.text.split())
    draft = r0.text
    for version in (1, 2):
        _, opt = render("optimizer", desired_ranking="[]", observed_ranking="[]",
                        current_draft=draft)
        draft = mb.complete(TextRequest("sys", opt)).text
        assert draft == mock_draft("review", query, "Acme B1", version)
    _, opt = render("optimizer", desired_ranking="[]", observed_ranking="[]", current_draft=draft)
    assert mb.complete(TextRequest("sys", opt)).text == draft  # every keyword used


def test_mock_reasoning_draft_and_unparseable_refine():
    mb = MockBackend()
    _, user = render("generator_reasoning", user_query="warm wool socks",
                     product_list_in_JSON_format="[]",
                     target_item_information=json.dumps({"name": "S"}))
    text = mb.complete(TextRequest("", user)).text
    assert text.startswith("If you are looking for a warm wool socks")
    _, opt = render("optimizer", desired_ranking="[]", observed_ranking="[]",
                    current_draft="free text")
    assert mb.complete(TextRequest("", opt)).text == "free text"


def test_mock_synthesizer_ranks_in_retrieval_order():
    _, user = render("synthesizer", user_query="q",
                     product_list_in_JSON_format=json.dumps([{"name": "A"}, {"name": "B"}]))
    assert MockBackend().complete(TextRequest("", user)).text == "1. A\n2. B"


def test_empty_prompt_rejected():
    with pytest.raises(ValueError):
        TextRequest("sys", "  ")


def test_live_request_shape_and_usage(monkeypatch):
    monkeypatch.setenv("RS_TEST_KEY", "secret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=ok_body("done"))

    b = LiveBackend(LIVE, transport=httpx.MockTransport(handler))
    r = b.complete(TextRequest("be brief", "hi", max_tokens=64))
    assert (r.text, r.prompt_tokens, r.completion_tokens) == ("done", 11, 3)
    assert seen["auth"] == "Bearer secret"
    assert seen["body"] == {
        "model": "m-1",
        "messages": [{"role": "system", "content": "be brief"}, {"role": "user", "content": "hi"}],
        "max_tokens": 64,
    }


def test_missing_usage_counts_as_zero(monkeypatch):
    monkeypatch.setenv("RS_TEST_KEY", "k")
    t = httpx.MockTransport(lambda r: httpx.Response(200, json=ok_body(usage=False)))
    r = LiveBackend(LIVE, transport=t).complete(TextRequest("", "hi"))
    assert r.total_tokens == 0


def test_missing_credential_fails_before_network(monkeypatch):
    monkeypatch.delenv("RS_TEST_KEY", raising=False)
    calls = []
    t = httpx.MockTransport(lambda r: calls.append(r) or httpx.Response(200, json=ok_body()))
    with pytest.raises(BackendConfigError):
        LiveBackend(LIVE, transport=t).complete(TextRequest("", "hi"))
    assert calls == []


@pytest.mark.parametrize("field", ["base_url", "model_name", "credential_env"])
def test_live_config_requires_fields(field):
    cfg = BackendConfig(**{**LIVE.__dict__, field: ""})
    with pytest.raises(BackendConfigError):
        LiveBackend(cfg)


def test_status_and_malformed_errors(monkeypatch):
    monkeypatch.setenv("RS_TEST_KEY", "k")
    t = httpx.MockTransport(lambda r: httpx.Response(429, text="slow down"))
    with pytest.raises(BackendStatusError) as exc:
        LiveBackend(LIVE, transport=t).complete(TextRequest("", "hi"))
    assert exc.value.status == 429
    t = httpx.MockTransport(lambda r: httpx.Response(200, json={"choices": []}))
    with pytest.raises(BackendResponseError):
        LiveBackend(LIVE, transport=t).complete(TextRequest("", "hi"))


def test_single_retry_on_transport_error(monkeypatch):
    monkeypatch.setenv("RS_TEST_KEY", "k")
    calls = []

    def flaky(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ConnectError("boom")
        return httpx.Response(200, json=ok_body("second"))

    assert LiveBackend(LIVE, transport=httpx.MockTransport(flaky)).complete(
        TextRequest("", "hi")).text == "second"

    def down(request):
        raise httpx.ConnectError("down")

    calls.clear()
    with pytest.raises(BackendTransportError):
        LiveBackend(LIVE, transport=httpx.MockTransport(lambda r: calls.append(1) or down(r))
                    ).complete(TextRequest("", "hi"))
    assert len(calls) == 2


def test_in_flight_limit(monkeypatch):
    monkeypatch.setenv("RS_TEST_KEY", "k")
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def slow(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return httpx.Response(200, json=ok_body())

    cfg = BackendConfig(**{**LIVE.__dict__, "max_in_flight": 2})
    b = LiveBackend(cfg, transport=httpx.MockTransport(slow))
    threads = [threading.Thread(target=b.complete, args=(TextRequest("", "hi"),)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["peak"] <= 2


def test_make_backend():
    assert isinstance(make_backend(BackendConfig()), MockBackend)
    with pytest.raises(BackendConfigError):
        make_backend(BackendConfig(backend="other"))
