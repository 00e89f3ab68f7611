import json

import pytest

from evocopy.errors import (
    EndpointUnavailable,
    MalformedOutput,
    MissingCredential,
    RequestRejected,
)
from evocopy.genome import Category
from evocopy.llmclient import (
    LlmBackend,
    LlmEndpointConfig,
    LlmKeywordExtractor,
    complete,
    complete_json,
    extract_json_object,
)
from llm_stub import completion_payload


def make_config(server, **overrides):
    params = dict(
        base_url=server.base_url,
        model_name="judge-1",
        api_key_env_var="EVOCOPY_API_KEY",
        timeout=5.0,
        max_retries=3,
        temperature=0.0,
    )
    params.update(overrides)
    return LlmEndpointConfig(**params)


def no_sleep(_):
    pass


class TestComplete:
    def test_returns_completion_verbatim(self, llm_server, api_key):
        llm_server.respond_with((200, completion_payload("fixed completion text")))
        cfg = make_config(llm_server)
        assert complete(cfg, "hello", sleep=no_sleep) == "fixed completion text"
        assert len(llm_server.requests) == 1

    def test_request_shape_and_bearer_token(self, llm_server, api_key):
        llm_server.respond_with((200, completion_payload("ok")))
        cfg = make_config(llm_server, temperature=0.7)
        complete(cfg, "prompt body", sleep=no_sleep)
        request = llm_server.requests[0]
        assert request["path"] == "/chat/completions"
        assert request["auth"] == "Bearer stub-secret"
        assert request["body"]["model"] == "judge-1"
        assert request["body"]["temperature"] == 0.7
        assert request["body"]["messages"] == [{"role": "user", "content": "prompt body"}]

    def test_retries_on_429_then_succeeds(self, llm_server, api_key):
        llm_server.respond_with((429, {"error": "slow down"}), (200, completion_payload("ok")))
        cfg = make_config(llm_server)
        sleeps = []
        assert complete(cfg, "p", sleep=sleeps.append) == "ok"
        assert len(llm_server.requests) == 2
        assert len(sleeps) == 1
        assert 0.5 <= sleeps[0] <= 1.0  # base 1s, attempt 0, jitter in [0.5, 1.0)

    def test_no_retry_on_400(self, llm_server, api_key):
        llm_server.respond_with((400, {"error": "bad request"}))
        cfg = make_config(llm_server)
        with pytest.raises(RequestRejected):
            complete(cfg, "p", sleep=no_sleep)
        assert len(llm_server.requests) == 1

    def test_request_count_capped_on_persistent_500(self, llm_server, api_key):
        llm_server.respond_with((500, {"error": "down"}))
        cfg = make_config(llm_server, max_retries=2)
        sleeps = []
        with pytest.raises(EndpointUnavailable):
            complete(cfg, "p", sleep=sleeps.append)
        assert len(llm_server.requests) == 1 + cfg.max_retries
        assert len(sleeps) == cfg.max_retries

    def test_backoff_grows_exponentially(self, llm_server, api_key):
        llm_server.respond_with((500, {"error": "down"}))
        cfg = make_config(llm_server, max_retries=3)
        sleeps = []
        with pytest.raises(EndpointUnavailable):
            complete(cfg, "p", sleep=sleeps.append)
        for attempt, delay in enumerate(sleeps):
            assert 0.5 * 2**attempt <= delay <= 1.0 * 2**attempt

    def test_missing_credential_sends_nothing(self, llm_server, monkeypatch):
        monkeypatch.delenv("EVOCOPY_API_KEY", raising=False)
        llm_server.respond_with((200, completion_payload("ok")))
        cfg = make_config(llm_server)
        with pytest.raises(MissingCredential):
            complete(cfg, "p", sleep=no_sleep)
        assert len(llm_server.requests) == 0

    def test_secret_never_appears_in_errors(self, llm_server, api_key):
        llm_server.respond_with((500, {"error": "down"}))
        cfg = make_config(llm_server, max_retries=0)
        with pytest.raises(EndpointUnavailable) as excinfo:
            complete(cfg, "p", sleep=no_sleep)
        assert "stub-secret" not in str(excinfo.value)

    def test_malformed_success_body(self, llm_server, api_key):
        llm_server.respond_with((200, {"unexpected": "shape"}))
        cfg = make_config(llm_server)
        with pytest.raises(MalformedOutput):
            complete(cfg, "p", sleep=no_sleep)

    def test_connection_refused_exhausts_retries(self, api_key):
        cfg = LlmEndpointConfig(
            base_url="http://127.0.0.1:9",  # discard port, nothing listens
            model_name="judge-1",
            max_retries=1,
            timeout=0.5,
        )
        sleeps = []
        with pytest.raises(EndpointUnavailable):
            complete(cfg, "p", sleep=sleeps.append)
        assert len(sleeps) == 1


class TestCompleteJson:
    def test_json_amid_prose(self, llm_server, api_key):
        llm_server.respond_with(
            (200, completion_payload('Here you go: {"copy": "x", "keywords_used": []} enjoy'))
        )
        cfg = make_config(llm_server)
        obj = complete_json(cfg, "p", ["copy", "keywords_used"], sleep=no_sleep)
        assert obj == {"copy": "x", "keywords_used": []}

    def test_fenced_block(self, llm_server, api_key):
        llm_server.respond_with(
            (200, completion_payload('```json\n{"copy": "x", "keywords_used": ["a"]}\n```'))
        )
        cfg = make_config(llm_server)
        obj = complete_json(cfg, "p", ["copy"], sleep=no_sleep)
        assert obj["keywords_used"] == ["a"]

    def test_no_braces(self, llm_server, api_key):
        llm_server.respond_with((200, completion_payload("no json anywhere")))
        cfg = make_config(llm_server)
        with pytest.raises(MalformedOutput):
            complete_json(cfg, "p", ["copy"], sleep=no_sleep)

    def test_missing_fields(self, llm_server, api_key):
        llm_server.respond_with((200, completion_payload('{"copy": "x"}')))
        cfg = make_config(llm_server)
        with pytest.raises(MalformedOutput):
            complete_json(cfg, "p", ["copy", "keywords_used"], sleep=no_sleep)


class TestExtractJsonObject:
    def test_plain_object(self):
        assert extract_json_object('{"a": 1}') == {"a": 1}

    def test_first_object_wins(self):
        assert extract_json_object('x {"a": 1} y {"b": 2}') == {"a": 1}

    def test_braces_inside_strings_handled(self):
        text = 'prefix {"a": "curly } brace", "b": {"nested": true}} suffix'
        assert extract_json_object(text) == {"a": "curly } brace", "b": {"nested": True}}

    def test_skips_unparseable_candidates(self):
        assert extract_json_object("{not json} then {\"ok\": 1}") == {"ok": 1}

    def test_none_when_absent(self):
        assert extract_json_object("nothing here") is None
        assert extract_json_object("{never closed") is None

    def test_non_object_json_ignored(self):
        assert extract_json_object("[1, 2, 3]") is None


class TestAdapters:
    def test_backend_is_a_text_completion(self, llm_server, api_key):
        llm_server.respond_with((200, completion_payload("reply")))
        backend = LlmBackend(make_config(llm_server), sleep=no_sleep)
        assert backend.complete("prompt") == "reply"

    def test_keyword_extractor_parses_and_filters(self, llm_server, api_key):
        payload = json.dumps(
            {
                "keywords": [
                    {"text": " 返 ", "category": "promo"},
                    {"text": "提现", "category": "action"},
                    {"text": "noise", "category": "unregistered"},
                ]
            }
        )
        llm_server.respond_with((200, completion_payload(payload)))
        extractor = LlmKeywordExtractor(make_config(llm_server), sleep=no_sleep)
        keywords = extractor.extract("返41.73元，去提现", [Category("promo"), Category("action")])
        assert {(k.text, k.category) for k in keywords} == {("返", "promo"), ("提现", "action")}


class TestConfigValidation:
    def test_bad_url(self):
        with pytest.raises(ValueError):
            LlmEndpointConfig(base_url="not a url", model_name="m")

    def test_bad_timeout(self):
        with pytest.raises(ValueError):
            LlmEndpointConfig(base_url="http://localhost:1", model_name="m", timeout=0)
