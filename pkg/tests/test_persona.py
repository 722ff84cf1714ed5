"""Prompt rendering, schema parsing with vocabulary normalization, caching,
retry/repair behavior, and the chat-completion clients."""

import json

import pytest

from beliefcast.data import UserRecord
from beliefcast.llm import (
    LlmError,
    MockLlmClient,
    RemoteChatClient,
    RemoteConfig,
    ReplayCacheClient,
    prompt_fingerprint,
)
from beliefcast.persona import (
    LatentPersona,
    PersonaCache,
    PersonaParseError,
    extract_latent_persona,
    parse_persona_response,
    persona_from_dict,
    read_personas,
    render_persona_prompt,
    write_personas,
)
from beliefcast.values import MORAL_FOUNDATION_POLES, SCHWARTZ_VALUES


class TestRenderPrompt:
    def test_empty_inputs_get_markers(self):
        prompt = render_persona_prompt("", [], 50)
        assert "(no profile available)" in prompt
        assert "(no posts available)" in prompt

    def test_history_cap_keeps_most_recent(self):
        history = [f"post {i}" for i in range(5)]
        prompt = render_persona_prompt("p", history, 2)
        assert "post 3" in prompt and "post 4" in prompt
        assert "post 2" not in prompt

    def test_byte_identical_for_identical_inputs(self):
        a = render_persona_prompt("profile", ["one", "two"], 10)
        b = render_persona_prompt("profile", ["one", "two"], 10)
        assert a == b

    def test_negative_cap_rejected(self):
        with pytest.raises(ValueError):
            render_persona_prompt("p", [], -1)


class TestParsePersona:
    def test_strict_schema(self):
        text = json.dumps(
            {
                "moral_values": ["care"],
                "human_values": ["benevolence"],
                "views": [],
                "profession": None,
                "interests": [],
                "summary": "s",
            }
        )
        persona = parse_persona_response(text, user_id="u1")
        assert persona.moral_values == ("care",)
        assert persona.human_values == ("benevolence",)
        assert persona.summary == "s"

    def test_case_and_punctuation_normalized(self):
        text = '{"moral_values": "CARE, Harm", "human_values": ["Self-Direction"]}'
        persona = parse_persona_response(text)
        assert persona.moral_values == ("care", "harm")
        assert persona.human_values == ("self_direction",)

    def test_out_of_vocabulary_dropped_not_error(self, caplog):
        text = '{"moral_values": ["honor", "care"], "human_values": []}'
        with caplog.at_level("WARNING"):
            persona = parse_persona_response(text)
        assert persona.moral_values == ("care",)
        assert any("honor" in record.message for record in caplog.records)

    def test_every_non_vocabulary_token_dropped(self):
        for bad in ("honor", "bravery", "candor", "spite", ""):
            persona = parse_persona_response(json.dumps({"moral_values": [bad]}))
            assert persona.moral_values == () and persona.human_values == ()

    def test_every_vocabulary_token_survives_case_mangling(self):
        from beliefcast.values import BELIEF_VOCABULARY

        for symbol in BELIEF_VOCABULARY:
            mangled = symbol.replace("_", "-").title()
            persona = parse_persona_response(json.dumps({"moral_values": [mangled]}))
            assert persona.beliefs == (symbol,), symbol

    def test_family_routing(self):
        # tokens land in their family regardless of the list the model chose
        persona = parse_persona_response('{"moral_values": ["power"], "human_values": ["care"]}')
        assert persona.moral_values == ("care",)
        assert persona.human_values == ("power",)

    def test_empty_object_is_minimal_persona(self):
        persona = parse_persona_response("{}")
        assert persona.moral_values == () and persona.views == ()

    def test_prose_without_object_is_error(self):
        with pytest.raises(PersonaParseError):
            parse_persona_response("I think this user likes cats.")

    def test_views_and_stances(self):
        text = json.dumps(
            {
                "views": [
                    {"target": "crypto", "stance": "Against"},
                    {"target": "parks", "stance": "favor"},
                    {"target": "weird", "stance": "meh"},
                ]
            }
        )
        persona = parse_persona_response(text)
        assert [(v.target, v.stance) for v in persona.views] == [
            ("crypto", "against"),
            ("parks", "favor"),
        ]

    def test_object_embedded_in_prose(self):
        persona = parse_persona_response('Sure! Here you go: {"moral_values": ["care"]} done.')
        assert persona.moral_values == ("care",)

    def test_round_trip_serialize_parse(self):
        original = parse_persona_response(
            json.dumps(
                {
                    "moral_values": ["care", "loyalty"],
                    "human_values": ["power"],
                    "views": [{"target": "x", "stance": "neutral"}],
                    "profession": "nurse",
                    "interests": ["hiking"],
                    "summary": "short",
                }
            ),
            user_id="u9",
        )
        round_tripped = parse_persona_response(json.dumps(original.to_dict()), user_id="u9")
        assert round_tripped == original


class TestMockClient:
    def test_pure_function_of_inputs(self):
        a = MockLlmClient(seed=1)
        b = MockLlmClient(seed=1)
        prompt = render_persona_prompt("likes fairness and loyalty", ["post"], 10)
        assert a.complete("sys", prompt) == b.complete("sys", prompt)

    def test_seed_changes_output(self):
        prompt = "Answer with a single line in exactly this format: polarity=<positive|neutral|negative>; intensity=<0-3>"
        outs = {MockLlmClient(seed=s).complete("sys", prompt) for s in range(8)}
        assert len(outs) > 1

    def test_persona_reflects_vocabulary_in_text(self):
        client = MockLlmClient(seed=0)
        user = UserRecord(id="u1", profile="all about fairness and tradition", history=())
        persona = extract_latent_persona(client, user)
        assert "fairness" in persona.moral_values
        assert "tradition" in persona.human_values

    def test_mock_persona_subset_of_vocabulary(self):
        client = MockLlmClient(seed=3)
        persona = extract_latent_persona(client, UserRecord(id="u1", profile="hi", history=()))
        assert set(persona.moral_values) <= set(MORAL_FOUNDATION_POLES)
        assert set(persona.human_values) <= set(SCHWARTZ_VALUES)


class TestExtraction:
    def test_empty_object_response_valid(self):
        client = MockLlmClient(script=lambda s, u: "{}")
        persona = extract_latent_persona(client, UserRecord(id="u2"))
        assert persona.user_id == "u2"
        assert persona.moral_values == ()

    def test_repair_retry_after_garbage(self):
        calls = []

        def flaky(system, user):
            calls.append(user)
            if len(calls) == 1:
                return "no json here"
            return '{"moral_values": ["care"]}'

        client = MockLlmClient(script=flaky)
        persona = extract_latent_persona(client, UserRecord(id="u3"))
        assert persona.moral_values == ("care",)
        assert len(calls) == 2
        assert "could not be parsed" in calls[1]

    def test_unparseable_after_retries_raises_with_raw(self):
        client = MockLlmClient(script=lambda s, u: "still not json")
        client.max_retries = 1
        with pytest.raises(PersonaParseError) as excinfo:
            extract_latent_persona(client, UserRecord(id="u4"))
        assert excinfo.value.raw == "still not json"

    def test_cache_hit_makes_no_client_calls(self):
        client = MockLlmClient(seed=5)
        cache = PersonaCache()
        user = UserRecord(id="u5", profile="loyalty purity", history=("post",))
        first = extract_latent_persona(client, user, cache=cache)
        calls_after_first = client.calls
        second = extract_latent_persona(client, user, cache=cache)
        assert client.calls == calls_after_first
        assert first == second

    def test_stale_fingerprint_not_served(self):
        client = MockLlmClient(seed=6)
        cache = PersonaCache()
        user = UserRecord(id="u6", profile="care", history=())
        extract_latent_persona(client, user, cache=cache)
        changed = UserRecord(id="u6", profile="now all about power", history=())
        persona = extract_latent_persona(client, changed, cache=cache)
        assert "power" in persona.human_values

    def test_cache_save_load(self, tmp_path):
        client = MockLlmClient(seed=7)
        cache = PersonaCache()
        user = UserRecord(id="u7", profile="harm security", history=())
        persona = extract_latent_persona(client, user, cache=cache)
        path = tmp_path / "cache.jsonl"
        cache.save(path)
        loaded = PersonaCache.load(path)
        prompt = render_persona_prompt(user.profile, user.history, 50)
        from beliefcast.persona import PERSONA_SYSTEM_PROMPT

        fp = prompt_fingerprint(PERSONA_SYSTEM_PROMPT, prompt)
        assert loaded.get("u7", fp) == persona


class TestPersonasFile:
    def test_jsonl_round_trip(self, tmp_path):
        personas = [
            LatentPersona(user_id="a", moral_values=("care",), summary="x"),
            LatentPersona(user_id="b", human_values=("power", "security")),
        ]
        path = tmp_path / "personas.jsonl"
        write_personas(personas, path)
        assert read_personas(path) == personas

    def test_write_read_write_bytes_identical(self, tmp_path):
        personas = [LatentPersona(user_id="a", moral_values=("care",))]
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_personas(personas, first)
        write_personas(read_personas(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_from_dict_round_trip(self):
        persona = LatentPersona(
            user_id="z",
            moral_values=("harm",),
            human_values=("hedonism",),
            profession="artist",
            interests=("paint",),
            summary="s",
        )
        assert persona_from_dict(persona.to_dict()) == persona


class FakeTransport:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, url, headers, payload):
        self.requests.append((url, headers, json.loads(payload)))
        return self.responses.pop(0)


def _ok_body(content):
    return (
        200,
        json.dumps({"choices": [{"message": {"content": content}}]}).encode(),
    )


class TestRemoteClient:
    def _config(self, **kwargs):
        return RemoteConfig(base_url="https://llm.example/v1", model="test-model", **kwargs)

    def test_wire_format(self, monkeypatch):
        monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
        transport = FakeTransport([_ok_body("hello")])
        client = RemoteChatClient(self._config(), transport=transport)
        assert client.complete("sys text", "user text") == "hello"
        url, headers, payload = transport.requests[0]
        assert url == "https://llm.example/v1/chat/completions"
        assert headers["Authorization"] == "Bearer sk-test"
        assert payload["model"] == "test-model"
        assert payload["temperature"] == 0.0
        assert payload["messages"] == [
            {"role": "system", "content": "sys text"},
            {"role": "user", "content": "user text"},
        ]

    def test_retries_on_429_with_backoff(self):
        transport = FakeTransport([(429, b"slow down"), (500, b"oops"), _ok_body("done")])
        sleeps = []
        client = RemoteChatClient(
            self._config(max_retries=2), transport=transport, sleep=sleeps.append
        )
        assert client.complete("s", "u") == "done"
        assert sleeps == [1.0, 2.0]

    def test_gives_up_after_max_retries(self):
        transport = FakeTransport([(500, b"x")] * 3)
        client = RemoteChatClient(
            self._config(max_retries=2), transport=transport, sleep=lambda _: None
        )
        with pytest.raises(LlmError, match="after 3 attempts"):
            client.complete("s", "u")

    def test_non_retryable_status_is_immediate(self):
        transport = FakeTransport([(401, b"bad key")])
        client = RemoteChatClient(self._config(), transport=transport, sleep=lambda _: None)
        with pytest.raises(LlmError, match="401"):
            client.complete("s", "u")

    def test_rate_cap_spaces_calls(self):
        transport = FakeTransport([_ok_body("a"), _ok_body("b")])
        sleeps = []
        client = RemoteChatClient(
            self._config(requests_per_second=100.0), transport=transport, sleep=sleeps.append
        )
        client.complete("s", "u")
        client.complete("s", "u")
        assert sleeps and sleeps[0] <= 0.01


class TestReplayCache:
    def test_records_then_replays_without_inner_calls(self, tmp_path):
        inner = MockLlmClient(seed=9)
        path = tmp_path / "replay.jsonl"
        recording = ReplayCacheClient(path, inner=inner)
        out1 = recording.complete("sys", "{} Answer with a single JSON object")
        calls = inner.calls
        replaying = ReplayCacheClient(path)  # no inner client
        out2 = replaying.complete("sys", "{} Answer with a single JSON object")
        assert out1 == out2
        assert inner.calls == calls

    def test_miss_without_inner_is_error(self, tmp_path):
        client = ReplayCacheClient(tmp_path / "empty.jsonl")
        with pytest.raises(LlmError, match="miss"):
            client.complete("sys", "never seen")
