import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maqa.errors import BackendError, ContractError, UnparseableVerdictError
from maqa.llm import BackendSpec, ChatRequest, HttpClient, StubClient, chat_key, embed_key, make_client
from maqa.llm.base import verdict_position


def req(text="q"):
    return ChatRequest.single(text)


# -- requests --------------------------------------------------------------

def test_chat_request_validation():
    ChatRequest((("system", "s"), ("user", "u"), ("assistant", "a"), ("user", "u2")))
    for bad in [(), (("assistant", "a"),), (("user", "a"), ("user", "b")), (("tool", "x"),)]:
        with pytest.raises(ContractError):
            ChatRequest(bad)
    with pytest.raises(ContractError):
        ChatRequest.single("x", max_tokens=0)


# -- stub ------------------------------------------------------------------

def test_stub_generate_echo_and_repeatability(stub):
    client = stub({chat_key(req("list")): {"text": "* A\n* B"}})
    assert client.generate(req("list")) == "* A\n* B"
    assert client.generate(req("list")) == client.generate(req("list"))
    with pytest.raises(BackendError):
        client.generate(req("unscripted"))
    assert client.calls.snapshot() == {"generate": 4}


def test_stub_scripted_error(stub):
    client = stub({chat_key(req()): {"error": "down", "status": 503}})
    with pytest.raises(BackendError) as info:
        client.generate(req())
    assert info.value.status == 503


def test_score_binary_passthrough_and_variant_sum(stub):
    client = stub({chat_key(req("a")): {"text": "Answer: True", "token_distribution": {"True": 0.7, "False": 0.2}},
                   chat_key(req("b")): {"text": "Answer: True",
                                        "token_distribution": {"True": 0.4, "true": 0.3, "False": 0.2}}})
    p, n = client.score_binary(req("a"))
    assert (p.probability_mass, n.probability_mass) == (pytest.approx(0.7), pytest.approx(0.2))
    p, _ = client.score_binary(req("b"), positive_variants={"True", "true"}, negative_variants={"False"})
    assert p.probability_mass == pytest.approx(0.7)
    p, _ = client.score_binary(req("b"), positive_variants={"True"}, negative_variants={"False"})
    assert p.probability_mass == pytest.approx(0.4)


def test_score_binary_strips_token_whitespace(stub):
    client = stub({chat_key(req()): {"text": "", "token_distribution": {" True": 0.5, "False\n": 0.25, "Tr": 0.1}}})
    p, n = client.score_binary(req())
    assert (p.probability_mass, n.probability_mass) == (0.5, 0.25)


@pytest.mark.parametrize("text,expected", [
    ("Answer: True", (1.0, 0.0)),
    ("Answer: False", (0.0, 1.0)),
    ("answer: false, not true", (0.0, 1.0)),
    ("TRUE.", (1.0, 0.0)),
])
def test_score_binary_fallback(stub, text, expected):
    client = stub({chat_key(req()): {"text": text}})
    p, n = client.score_binary(req())
    assert (p.probability_mass, n.probability_mass) == expected


def test_score_binary_fallback_unparseable_and_disabled(stub):
    client = stub({chat_key(req()): {"text": "Maybe. Untrue claims abound."}})
    with pytest.raises(UnparseableVerdictError):
        client.score_binary(req())
    strict = stub({chat_key(req()): {"text": "Answer: True"}}, fallback=False)
    with pytest.raises(BackendError):
        strict.score_binary(req())


@given(st.dictionaries(st.sampled_from(["True", "true", "TRUE", "False", "false", "FALSE", "maybe", " True"]),
                       st.floats(min_value=0, max_value=0.3), max_size=8))
def test_score_binary_masses_in_unit_interval(dist):
    client = StubClient(script={chat_key(req()): {"text": "", "token_distribution": dist}})
    p, n = client.score_binary(req())
    assert 0.0 <= p.probability_mass <= 1.0 and 0.0 <= n.probability_mass <= 1.0


def test_stub_embed_order_normalization_and_empty(stub):
    client = stub({embed_key("a"): {"embedding": [1, 0]}, embed_key("b"): {"embedding": [0, 1]},
                   embed_key("c"): {"embedding": [3, 4]}, embed_key("z"): {"embedding": [0, 0]}})
    out = client.embed(["b", "a", "c"])
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, [[0, 1], [1, 0], [0.6, 0.8]], atol=1e-7)
    assert client.embed([]).shape[0] == 0
    with pytest.raises(BackendError):
        client.embed(["z"])


def test_stub_responder_records_and_saves(tmp_path, stub):
    client = stub(responder=lambda kind, payload: {"text": "* X"} if kind == "chat" else {"embedding": [1, 1]})
    assert client.generate(req("new")) == "* X"
    client.embed(["t"])
    client.save_script(tmp_path / "s.json")
    replay = StubClient(BackendSpec(kind="stub", script=str(tmp_path / "s.json")))
    assert replay.generate(req("new")) == "* X"
    np.testing.assert_allclose(replay.embed(["t"]), [[math.sqrt(0.5)] * 2], atol=1e-7)


# -- http ------------------------------------------------------------------

def http_client(handler, **spec_kwargs):
    sleeps = []
    spec = BackendSpec(kind="http", base_url="http://llm.test/v1", model_id="m", **spec_kwargs)
    client = HttpClient(spec, transport=httpx.MockTransport(handler), sleep=sleeps.append)
    return client, sleeps


def chat_body(content, logprob_tokens=None):
    choice = {"message": {"role": "assistant", "content": content}}
    if logprob_tokens is not None:
        choice["logprobs"] = {"content": logprob_tokens}
    return {"choices": [choice]}


def test_http_generate_sends_openai_payload(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "sekret")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=chat_body("* A"))

    client, _ = http_client(handler, api_key_env="TEST_LLM_KEY")
    assert client.generate(client.request("hello", max_tokens=7)) == "* A"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sekret"
    assert seen["body"]["messages"] == [{"role": "user", "content": "hello"}]
    assert seen["body"]["max_tokens"] == 7 and seen["body"]["temperature"] == 0.0
    assert "logprobs" not in seen["body"]


def test_http_retries_then_succeeds():
    attempts = []

    def handler(request):
        attempts.append(1)
        if len(attempts) < 3:
            return httpx.Response(429 if len(attempts) == 1 else 503)
        return httpx.Response(200, json=chat_body("ok"))

    client, sleeps = http_client(handler)
    assert client.generate(req()) == "ok"
    assert sleeps == [1.0, 2.0]


def test_http_gives_up_after_max_retries_on_transport_error():
    def handler(request):
        raise httpx.ConnectError("unreachable", request=request)

    client, sleeps = http_client(handler)
    with pytest.raises(BackendError):
        client.generate(req())
    assert sleeps == [1.0, 2.0, 4.0]


def test_http_client_error_is_not_retried():
    client, sleeps = http_client(lambda r: httpx.Response(400, text="bad request"))
    with pytest.raises(BackendError) as info:
        client.generate(req())
    assert info.value.status == 400 and sleeps == []


def test_http_score_binary_reads_logprobs_after_answer_prefix():
    tokens = [
        {"token": "Answer", "logprob": -0.01, "top_logprobs": []},
        {"token": ":", "logprob": -0.01, "top_logprobs": []},
        {"token": " True", "logprob": math.log(0.6),
         "top_logprobs": [{"token": " True", "logprob": math.log(0.6)}, {"token": " true", "logprob": math.log(0.1)},
                          {"token": " False", "logprob": math.log(0.25)}]},
    ]
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=chat_body("Answer: True", tokens))

    client, _ = http_client(handler)
    p, n = client.score_binary(req())
    assert seen["body"]["logprobs"] is True and seen["body"]["top_logprobs"] == 20
    assert p.probability_mass == pytest.approx(0.7)
    assert n.probability_mass == pytest.approx(0.25)


def test_http_score_binary_falls_back_without_logprobs():
    client, _ = http_client(lambda r: httpx.Response(200, json=chat_body("Answer: False")))
    p, n = client.score_binary(req())
    assert (p.probability_mass, n.probability_mass) == (0.0, 1.0)


def test_http_embed_batches_and_orders():
    batches = []

    def handler(request):
        body = json.loads(request.content)
        batches.append(body["input"])
        data = [{"index": i, "embedding": [float(len(t)), 1.0]} for i, t in enumerate(body["input"])]
        return httpx.Response(200, json={"data": list(reversed(data))})

    client, _ = http_client(handler, embed_batch_size=2)
    out = client.embed(["a", "bbb", "cc"])
    assert batches == [["a", "bbb"], ["cc"]]
    np.testing.assert_allclose(out[1], np.array([3, 1]) / math.sqrt(10), atol=1e-6)
    assert client.calls.snapshot() == {"embed": 2}


def test_verdict_position():
    assert verdict_position(["Answer", ":", " True"]) == 2
    assert verdict_position(["Answer:", " ", "False"]) == 2
    assert verdict_position(["True"]) == 0
    assert verdict_position(["Answer", ":"]) is None


def test_make_client_kinds():
    assert isinstance(make_client(BackendSpec(kind="stub")), StubClient)
    assert isinstance(make_client(BackendSpec(kind="http", base_url="http://x")), HttpClient)
    with pytest.raises(ContractError):
        BackendSpec(kind="http")
