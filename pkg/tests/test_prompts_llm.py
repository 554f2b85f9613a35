import json

import httpx
import numpy as np
import pytest

from sclm import llm
from sclm.datagen import synthetic_schema
from sclm.llm import (BackendUnavailable, HttpTransport, MockTransport, RecordingTransport, TranscriptMissing,
                      TranscriptTransport, extract_choice, extract_expression, extract_rating)
from sclm.prompts import (MaximizeUtility, NoShift, PreferencePrompt, Prioritize, feature_table, generation_prompt,
                          load_template, parse_clause, rating_prompt, reflection_prompt)
from sclm.rmab import UtilityFeatureDistribution

SCHEMA = synthetic_schema(5)


def dist():
    return UtilityFeatureDistribution(SCHEMA, np.arange(15, dtype=float), 105.0)


class TestClauses:
    def test_parse(self):
        assert parse_clause("prioritize:A:low") == Prioritize("A", "low")
        assert parse_clause("noshift:C") == NoShift("C")
        assert parse_clause("utility") == MaximizeUtility()
        with pytest.raises(ValueError):
            parse_clause("prioritize:A")
        with pytest.raises(ValueError):
            Prioritize("A", "middle")

    def test_prompt_text_and_key(self):
        p = PreferencePrompt.of("prioritize:A:low", "prioritize:B:high")
        assert p.key == "A-low+B-high"
        assert "low value of feature A" in p.text and "high value of feature B" in p.text
        assert p.singular(1) == PreferencePrompt((Prioritize("B", "high"),))
        assert p.referenced_categories() == ["A", "B"]

    def test_validation(self):
        with pytest.raises(ValueError):
            PreferencePrompt(())
        with pytest.raises(ValueError):
            PreferencePrompt((MaximizeUtility(), MaximizeUtility()))
        with pytest.raises(ValueError):
            PreferencePrompt.of("prioritize:Z:low").validate(SCHEMA)


class TestTemplates:
    def test_generation_prompt(self):
        text = generation_prompt(PreferencePrompt.of("prioritize:A:low"), SCHEMA)
        assert "$$$" in text and "15" in text
        assert " 0. Feature A bucket 1 - Binary" in feature_table(SCHEMA)
        seeded = generation_prompt(PreferencePrompt.of("prioritize:A:low"), SCHEMA, ("state", dist()))
        assert "state" in seeded and len(seeded) > len(text)

    def test_reflection_and_rating(self):
        p = PreferencePrompt.of("prioritize:A:low")
        text = reflection_prompt(p, [("state", dist()), ("2*state", dist())])
        assert "Function Number 1" in text and "The best reward function is at number:" in text
        assert "rating:" in rating_prompt(Prioritize("A", "low"), "state", dist())
        assert load_template("reflect_promptengg") != load_template("reflect")


class TestExtraction:
    def test_expression(self):
        assert extract_expression("sure: $$$ state * 2 $$$ done") == "state * 2"
        assert extract_expression("$$$ 'state' $$$") == "state"
        assert extract_expression("no delimiters") is None
        assert extract_expression("$$$   $$$") is None

    def test_choice(self):
        assert extract_choice("The best reward function is at number: 3") == 3
        assert extract_choice("The best reward function is at number: [2]") == 2
        assert extract_choice("cannot decide") is None

    def test_rating(self):
        assert extract_rating("rating: 4") == 4
        assert extract_rating("Rating: [5]") == 5
        assert extract_rating("3") == 3
        assert extract_rating("good") is None


class TestTransports:
    def test_mock_deterministic(self):
        a, b = MockTransport(), MockTransport()
        for m in (a, b):
            m.replies = [m.complete("x", "reflect", n_candidates=4), m.complete("x", "rate", candidate_id=1, clause="c")]
        assert a.replies == b.replies
        assert 0 <= extract_choice(a.replies[0]) < 4
        assert 1 <= extract_rating(a.replies[1]) <= 5
        assert extract_expression(a.complete("x", "propose", fallback="state*2")) == "state*2"
        assert MockTransport("other").complete("x", "rate", candidate_id=1, clause="c") in {f"rating: {k}" for k in range(1, 6)}

    def test_record_and_replay(self, tmp_path):
        path = tmp_path / "t.jsonl"
        rec = RecordingTransport(MockTransport(), path)
        r1 = rec.complete("prompt one", "reflect", n_candidates=3)
        r2 = rec.complete("prompt two", "rate", candidate_id=0, clause="c")
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines[0]["request"]["purpose"] == "reflect"
        replay = TranscriptTransport.load(path)
        assert replay.complete("prompt two", "rate") == r2
        assert replay.complete("prompt one", "reflect") == r1
        with pytest.raises(TranscriptMissing):
            replay.complete("prompt three", "propose")

    def test_replay_by_purpose(self):
        t = TranscriptTransport([{"request": {"purpose": "rate", "prompt_sha256": "x"}, "response": "rating: 2"}])
        assert t.complete("anything", "rate") == "rating: 2"

    def test_http(self, monkeypatch):
        seen = []

        def handler(request):
            seen.append(json.loads(request.content))
            return httpx.Response(200, json={"text": "$$$ state $$$"})

        t = HttpTransport("http://llm.invalid/v1", model="m", params={"temperature": 0.5}, api_key="k")
        t._client = httpx.Client(transport=httpx.MockTransport(handler))
        assert t.complete("hello", "propose") == "$$$ state $$$"
        assert seen[0] == {"prompt": "hello", "model": "m", "temperature": 0.5}

    def test_http_retries_then_fails(self, monkeypatch):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(503)

        monkeypatch.setattr(llm.time, "sleep", lambda s: None)
        t = HttpTransport("http://llm.invalid/v1", retries=3)
        t._client = httpx.Client(transport=httpx.MockTransport(handler))
        with pytest.raises(BackendUnavailable):
            t.complete("hello")
        assert len(calls) == 4

    def test_api_key_from_env(self, monkeypatch):
        monkeypatch.setenv(llm.API_KEY_ENV, "secret")
        assert HttpTransport("http://llm.invalid").api_key == "secret"
