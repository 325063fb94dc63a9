"""LLM endpoint client (against a local stub server) and the rule-based generator."""

from __future__ import annotations

import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from sceneplan.engine import EpisodeError, GeneratorRequest, run_episode
from sceneplan.generators import (
    BACKOFF_BASE_SECONDS,
    DEFAULT_RULES,
    GENERIC_RULE,
    ActivityRule,
    AuthError,
    LlmClient,
    LlmEndpointConfig,
    LlmError,
    MalformedReplyError,
    MissingCategoryError,
    RuleBasedGenerator,
    TransportError,
    scripted_generator,
    select_rule,
)
from sceneplan.graph import build_graph
from sceneplan.route import default_start_pose, verify_route


class StubEndpoint:
    """Scripted chat-completions endpoint; records requests and concurrency."""

    def __init__(self, responses: list[dict] | None = None, delay: float = 0.0):
        self.lock = threading.Lock()
        self.requests: list[dict] = []
        self.responses = list(responses or [])
        self.default = {"status": 200, "text": "Step 1: ok. [END]"}
        self.delay = delay
        self.in_flight = 0
        self.max_in_flight = 0
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub.lock:
                    stub.requests.append(
                        {
                            "path": self.path,
                            "auth": self.headers.get("Authorization"),
                            "body": body,
                        }
                    )
                    stub.in_flight += 1
                    stub.max_in_flight = max(stub.max_in_flight, stub.in_flight)
                    spec = stub.responses.pop(0) if stub.responses else dict(stub.default)
                try:
                    if stub.delay:
                        time.sleep(stub.delay)
                    if "raw" in spec:
                        payload = spec["raw"].encode("utf-8")
                    elif "payload" in spec:
                        payload = json.dumps(spec["payload"]).encode("utf-8")
                    else:
                        payload = json.dumps(
                            {"choices": [{"message": {"content": spec.get("text", "")}}]}
                        ).encode("utf-8")
                    self.send_response(spec.get("status", 200))
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                finally:
                    with stub.lock:
                        stub.in_flight -= 1

            def log_message(self, *args) -> None:
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_port}/v1"

    def __enter__(self) -> "StubEndpoint":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture()
def api_key(monkeypatch):
    monkeypatch.setenv("SHARP_API_KEY", "test-key-123")
    return "test-key-123"


def _client(stub: StubEndpoint, **kwargs) -> LlmClient:
    sleeps: list[float] = []
    config = LlmEndpointConfig(
        base_url=stub.base_url,
        model_name="stub-model",
        max_retries=kwargs.pop("max_retries", 3),
    )
    client = LlmClient(
        config,
        sleep=sleeps.append,
        rng=random.Random(0),
        **kwargs,
    )
    client.recorded_sleeps = sleeps  # test-only attribute
    return client


REQUEST = GeneratorRequest(system_context="scene", user_prompt="I am tired", step_index=1)


class TestLlmClient:
    def test_success_parses_content_and_detects_end(self, api_key):
        with StubEndpoint([{"text": "Step 2: Turn left. [END]"}]) as stub:
            reply = _client(stub).generate(REQUEST)
        assert reply.text == "Step 2: Turn left."
        assert reply.saw_end
        sent = stub.requests[0]
        assert sent["path"] == "/v1/chat/completions"
        assert sent["auth"] == "Bearer test-key-123"
        assert sent["body"]["model"] == "stub-model"
        roles = [m["role"] for m in sent["body"]["messages"]]
        assert roles == ["system", "user"]
        assert sent["body"]["messages"][0]["content"] == "scene"
        assert sent["body"]["messages"][1]["content"] == "I am tired"

    def test_retries_server_errors_with_jittered_backoff(self, api_key):
        script = [{"status": 500}, {"status": 503}, {"text": "Step 1: ok."}]
        with StubEndpoint(script) as stub:
            client = _client(stub, max_retries=3)
            reply = client.generate(REQUEST)
        assert reply.text == "Step 1: ok."
        assert len(stub.requests) == 3
        sleeps = client.recorded_sleeps
        assert len(sleeps) == 2
        base = BACKOFF_BASE_SECONDS
        assert base * 0.5 <= sleeps[0] <= base * 1.5
        assert base * 2 * 0.5 <= sleeps[1] <= base * 2 * 1.5

    def test_exhausted_retries_raise_transport_error(self, api_key):
        with StubEndpoint([{"status": 500}] * 3) as stub:
            client = _client(stub, max_retries=2)
            with pytest.raises(TransportError, match="after 3 attempts"):
                client.generate(REQUEST)
        assert len(stub.requests) == 3

    def test_auth_rejection_is_immediate(self, api_key):
        with StubEndpoint([{"status": 401, "raw": "{}"}]) as stub:
            client = _client(stub)
            with pytest.raises(AuthError, match="401"):
                client.generate(REQUEST)
        assert len(stub.requests) == 1
        assert client.recorded_sleeps == []

    def test_missing_api_key_fails_before_any_request(self, monkeypatch):
        monkeypatch.delenv("SHARP_API_KEY", raising=False)
        with StubEndpoint() as stub:
            with pytest.raises(AuthError, match="SHARP_API_KEY"):
                _client(stub).generate(REQUEST)
        assert stub.requests == []

    def test_non_json_body_is_malformed_not_retried(self, api_key):
        with StubEndpoint([{"raw": "not json at all"}]) as stub:
            with pytest.raises(MalformedReplyError, match="not JSON"):
                _client(stub).generate(REQUEST)
        assert len(stub.requests) == 1

    def test_missing_choices_is_malformed(self, api_key):
        with StubEndpoint([{"payload": {"unexpected": True}}]) as stub:
            with pytest.raises(MalformedReplyError, match="choices"):
                _client(stub).generate(REQUEST)

    def test_other_client_errors_are_not_retried(self, api_key):
        with StubEndpoint([{"status": 418, "raw": "{}"}]) as stub:
            with pytest.raises(LlmError, match="418"):
                _client(stub).generate(REQUEST)
        assert len(stub.requests) == 1

    def test_connection_failure_retries_then_raises(self, api_key):
        config = LlmEndpointConfig(
            base_url="http://127.0.0.1:9", model_name="stub", max_retries=1, timeout=0.2
        )
        sleeps: list[float] = []
        client = LlmClient(config, sleep=sleeps.append, rng=random.Random(0))
        with pytest.raises(TransportError, match="transport error"):
            client.generate(REQUEST)
        assert len(sleeps) == 1

    def test_in_flight_limit_respected_across_threads(self, api_key):
        with StubEndpoint(delay=0.05) as stub:
            client = _client(stub)
            threads = [
                threading.Thread(target=client.generate, args=(REQUEST,))
                for _ in range(10)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert len(stub.requests) == 10
            assert stub.max_in_flight <= 4

    def test_tighter_in_flight_limit(self, api_key):
        with StubEndpoint(delay=0.05) as stub:
            client = _client(stub, max_in_flight=2)
            threads = [
                threading.Thread(target=client.generate, args=(REQUEST,))
                for _ in range(6)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert stub.max_in_flight <= 2

    def test_config_validation(self):
        with pytest.raises(ValueError, match="timeout"):
            LlmEndpointConfig(base_url="x", model_name="m", timeout=0)
        with pytest.raises(ValueError, match="max_retries"):
            LlmEndpointConfig(base_url="x", model_name="m", max_retries=-1)
        with pytest.raises(ValueError, match="temperature"):
            LlmEndpointConfig(base_url="x", model_name="m", temperature=3.0)
        config = LlmEndpointConfig(base_url="x", model_name="m")
        with pytest.raises(ValueError, match="max_in_flight"):
            LlmClient(config, max_in_flight=0)


class TestRuleSelection:
    def test_most_keywords_wins(self):
        rule = select_rule("I am tired and want coffee", DEFAULT_RULES)
        assert rule.activity_phrase == "prepare a cup of coffee"

    def test_single_keyword(self):
        assert select_rule("so thirsty", DEFAULT_RULES).activity_phrase == "make a cup of tea"

    def test_tie_keeps_rule_order(self):
        rule = select_rule("coffee or tea", DEFAULT_RULES)
        assert rule.activity_phrase == "prepare a cup of coffee"

    def test_no_keywords_falls_back_to_generic(self):
        assert select_rule("hello there", DEFAULT_RULES) is GENERIC_RULE

    def test_keyword_matching_is_whole_token(self):
        # "energized" is not the keyword token "energize".
        assert select_rule("I feel energized", DEFAULT_RULES) is GENERIC_RULE

    def test_multi_token_keyword_matches_contiguously(self):
        rule = ActivityRule(
            trigger_keywords=("warm milk",),
            activity_phrase="warm some milk",
            required_categories=(),
            step_templates=("Done.",),
        )
        assert select_rule("please get warm milk", (rule,)) is rule
        assert select_rule("warm the milk", (rule,)) is not rule

    def test_rule_validation(self):
        with pytest.raises(ValueError, match="lowercase"):
            ActivityRule(("Coffee",), "x", (), ("Done.",))
        with pytest.raises(ValueError, match="template"):
            ActivityRule((), "x", (), ())


class TestRuleBasedGenerator:
    def test_coffee_episode_structure(self, kitchen):
        episode = run_episode(
            kitchen,
            build_graph(kitchen),
            "I am tired and want coffee",
            RuleBasedGenerator(kitchen),
        )
        assert episode.terminated_by == "end-token"
        assert len(episode.steps) == 4
        assert episode.activity == (
            "To help you, the robot assistant will prepare a cup of coffee, "
            "with the following steps:"
        )
        assert "pick up the kettle" in episode.steps[0].text
        assert episode.steps[-1].is_final

    def test_generated_routes_verify_ok(self, kitchen):
        episode = run_episode(
            kitchen,
            build_graph(kitchen),
            "I am tired and want coffee",
            RuleBasedGenerator(kitchen),
        )
        reports = verify_route(episode.steps, kitchen, default_start_pose(kitchen))
        assert [r.verdict for r in reports] == ["ok"] * len(episode.steps)

    def test_generation_is_deterministic(self, kitchen):
        def run() -> list[str]:
            episode = run_episode(
                kitchen,
                build_graph(kitchen),
                "time to clean up this mess",
                RuleBasedGenerator(kitchen),
            )
            return [episode.activity] + [s.text for s in episode.steps]

        assert run() == run()

    def test_generic_rule_needs_no_objects(self, kitchen):
        episode = run_episode(
            kitchen, build_graph(kitchen), "entertain me", RuleBasedGenerator(kitchen)
        )
        assert len(episode.steps) == 2
        assert episode.steps[0].text.startswith("Survey the scene")

    def test_missing_category_surfaces_as_episode_error(self, kitchen):
        piano_rule = ActivityRule(
            trigger_keywords=("music",),
            activity_phrase="play some music",
            required_categories=("piano",),
            step_templates=("<route> and play the <object>.",),
        )
        generator = RuleBasedGenerator(kitchen, rules=(piano_rule,))
        with pytest.raises(EpisodeError, match="piano"):
            run_episode(kitchen, build_graph(kitchen), "music please", generator)

    def test_missing_category_direct(self, kitchen):
        piano_rule = ActivityRule(
            trigger_keywords=("music",),
            activity_phrase="play some music",
            required_categories=("piano",),
            step_templates=("<route> and play the <object>.",),
        )
        generator = RuleBasedGenerator(kitchen, rules=(piano_rule,))
        with pytest.raises(MissingCategoryError, match="piano"):
            generator(GeneratorRequest("", "music please", 1))

    def test_later_step_before_first_rejected(self, kitchen):
        generator = RuleBasedGenerator(kitchen)
        with pytest.raises(RuntimeError, match="step 1"):
            generator(GeneratorRequest("", "coffee", 2))

    def test_scripted_generator_exhaustion(self):
        generator = scripted_generator(["Step 1: only one"])
        with pytest.raises(IndexError, match="step 2"):
            generator(GeneratorRequest("", "", 2))
