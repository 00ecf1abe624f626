"""
Language Model Oracle Tests
~~~~~~~~~~~~~~~~~~~~~~~~~~~
"""
import json
import time

import numpy as np
import pytest

from cologic import oracle
from cologic.constants import Verdict
from cologic.cooccur import Vocabulary
from cologic.exceptions import (
    AuthError,
    BoundsError,
    ConfigError,
    DataError,
    NetworkError,
    ParseError,
    TemplateError,
)

from .base import write_json


def config(tmp_path=None, **kwargs):
    if tmp_path is not None:
        kwargs.setdefault("cache_path", str(tmp_path / "cache.jsonl"))
    return oracle.OracleConfig(**kwargs)


#
# Prompts and answers
#


@pytest.mark.parametrize(
    "text, verdict",
    [
        ("YES", Verdict.VALID),
        ("Yes.", Verdict.VALID),
        ("  yes, of course", Verdict.VALID),
        ("No", Verdict.INVALID),
        ("no - it does not", Verdict.INVALID),
        ("1. Yes", Verdict.VALID),
        ("Maybe", Verdict.UNKNOWN),
        ("Nope", Verdict.UNKNOWN),
        ("", Verdict.UNKNOWN),
        (None, Verdict.UNKNOWN),
    ],
)
def test_parse_verdict(text, verdict):
    assert oracle.parse_verdict(text) is verdict


def test_build_prompt():
    prompt = oracle.build_prompt("cut", "onion")
    assert '"cut onion"' in prompt
    assert oracle.build_prompt("a", "b", "{noun} by {verb}") == "b by a"


@pytest.mark.parametrize(
    "template", ["Does {verb} make sense?", "{verb} {noun} {extra}", "{verb {noun}"]
)
def test_template_errors(template):
    with pytest.raises(TemplateError):
        oracle.build_prompt("cut", "onion", template)
    with pytest.raises(TemplateError):
        oracle.OracleConfig(prompt_template=template)


def test_build_prompt_needs_names():
    with pytest.raises(DataError):
        oracle.build_prompt("", "onion")


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        oracle.OracleConfig(max_concurrent=0)
    with pytest.raises(ConfigError):
        oracle.OracleConfig(retries=-1)
    with pytest.raises(ConfigError):
        oracle.OracleConfig.from_dict({"model": "x", "top_p": 0.5})
    path = write_json(tmp_path / "oracle.json", {"model": "x", "max_concurrent": 2})
    loaded = oracle.OracleConfig.load(path)
    assert (loaded.model, loaded.max_concurrent) == ("x", 2)


#
# Querying
#


def test_upper_rule_gives_triangular_mask():
    vocab = Vocabulary.anonymous(5, 5)
    result = oracle.query_matrix(vocab, config(), oracle.MockClient("upper"))
    assert np.array_equal(result.mask.valid, np.triu(np.ones((5, 5), dtype=bool)))
    assert result.unknown == []
    assert len(result.verdicts) == 25
    assert not any(v.cached for v in result.verdicts)


def test_concurrency_is_bounded():
    client = oracle.MockClient("all", delay=0.01)
    vocab = Vocabulary.anonymous(4, 4)
    oracle.query_matrix(vocab, config(max_concurrent=2), client)
    assert client.calls == 16
    assert 1 <= client.max_in_flight <= 2


def test_warm_cache_needs_no_requests(tmp_path):
    vocab = Vocabulary.anonymous(3, 4)
    cfg = config(tmp_path)
    first = oracle.query_matrix(vocab, cfg, oracle.MockClient("identity"))
    lines = (tmp_path / "cache.jsonl").read_text().splitlines()
    assert len(lines) == 12
    assert set(json.loads(lines[0])) == {
        "verb_id",
        "noun_id",
        "verdict",
        "raw_response",
    }

    client = oracle.MockClient("none")
    second = oracle.query_matrix(vocab, cfg, client)
    assert client.calls == 0
    assert second.mask == first.mask
    assert all(v.cached for v in second.verdicts)


def test_warm_cache_needs_no_api_key(tmp_path, monkeypatch):
    monkeypatch.delenv("COLOGIC_TEST_KEY", raising=False)
    vocab = Vocabulary.anonymous(2, 2)
    cfg = config(tmp_path, api_key_env="COLOGIC_TEST_KEY")
    oracle.query_matrix(vocab, cfg, oracle.MockClient("all"))
    result = oracle.query_matrix(vocab, cfg, oracle.OpenAIChatClient(cfg))
    assert result.mask.count() == 4


def test_interrupted_cache_resumes(tmp_path):
    vocab = Vocabulary.anonymous(3, 3)
    cfg = config(tmp_path)
    oracle.query_matrix(Vocabulary.anonymous(2, 3), cfg, oracle.MockClient("upper"))
    with open(cfg.cache_path, "a", encoding="utf-8") as f:
        f.write('{"verb_id": 2, "noun')
    assert len(oracle.load_cache(cfg.cache_path)) == 6

    client = oracle.MockClient("upper")
    result = oracle.query_matrix(vocab, cfg, client)
    assert client.calls == 3
    assert np.array_equal(result.mask.valid, np.triu(np.ones((3, 3), dtype=bool)))
    assert len(oracle.load_cache(cfg.cache_path, vocab.shape)) == 9


def test_cache_errors(tmp_path):
    path = tmp_path / "cache.jsonl"
    good = json.dumps(
        {"verb_id": 0, "noun_id": 0, "verdict": "valid", "raw_response": "YES"}
    )
    path.write_text("{0}\nnot json\n{0}\n".format(good))
    with pytest.raises(ParseError) as excinfo:
        oracle.load_cache(str(path))
    assert excinfo.value.line == 2

    outside = json.dumps(
        {"verb_id": 5, "noun_id": 0, "verdict": "valid", "raw_response": "YES"}
    )
    path.write_text("{0}\n{1}\n".format(good, outside))
    with pytest.raises(BoundsError):
        oracle.load_cache(str(path), shape=(2, 2))
    assert oracle.load_cache(str(tmp_path / "missing.jsonl")) == {}


@pytest.mark.parametrize("unknown_valid", [False, True])
def test_unknown_answers(unknown_valid):
    client = oracle.MockClient("identity", overrides={(0, 1): "maybe"})
    vocab = Vocabulary.anonymous(2, 2)
    result = oracle.query_matrix(
        vocab, config(retries=1), client, unknown_valid=unknown_valid
    )
    assert result.unknown == [(0, 1)]
    assert result.mask.valid[0, 1] == unknown_valid
    assert client.calls == 5
    verdict = [v for v in result.verdicts if (v.verb_id, v.noun_id) == (0, 1)][0]
    assert verdict.raw_response == "maybe"


class FailingClient(oracle.MockClient):
    def complete(self, request):
        if (request.verb_id, request.noun_id) == (1, 0):
            raise NetworkError("connection refused")
        return super(FailingClient, self).complete(request)


def test_network_failure_keeps_cache(tmp_path):
    cfg = config(tmp_path, max_concurrent=1)
    with pytest.raises(NetworkError):
        oracle.query_matrix(Vocabulary.anonymous(2, 2), cfg, FailingClient("all"))
    cache = oracle.load_cache(cfg.cache_path)
    assert (1, 0) not in cache
    assert all(verdict is Verdict.VALID for verdict, _ in cache.values())


class SlowPeersClient(oracle.MockClient):
    "Fails on the first pair while the other requests are still running."

    def __init__(self):
        super(SlowPeersClient, self).__init__("all")
        self.answered = []

    def complete(self, request):
        key = (request.verb_id, request.noun_id)
        if key == (0, 0):
            time.sleep(0.05)
            raise NetworkError("connection reset")
        time.sleep(0.3)
        self.answered.append(key)
        return super(SlowPeersClient, self).complete(request)


def test_network_failure_keeps_answers_in_flight(tmp_path):
    cfg = config(tmp_path, max_concurrent=2)
    client = SlowPeersClient()
    with pytest.raises(NetworkError):
        oracle.query_matrix(Vocabulary.anonymous(3, 3), cfg, client)
    cache = oracle.load_cache(cfg.cache_path)
    assert (0, 1) in client.answered
    assert sorted(cache) == sorted(client.answered)
    assert len(cache) < 8


#
# Clients
#


def test_openai_client_needs_key(monkeypatch):
    monkeypatch.delenv("COLOGIC_TEST_KEY", raising=False)
    cfg = config(api_key_env="COLOGIC_TEST_KEY")
    request = oracle.OracleRequest(0, 0, "cut", "onion", "prompt")
    with pytest.raises(AuthError):
        oracle.OpenAIChatClient(cfg).complete(request)


def test_mock_client_load(tmp_path):
    path = write_json(
        tmp_path / "mock.json",
        {"rule": "upper", "overrides": [{"verb_id": 1, "noun_id": 0, "response": "?"}]},
    )
    client = oracle.MockClient.load(path)
    assert client.rule == "upper"
    assert client.overrides == {(1, 0): "?"}
    with pytest.raises(ConfigError):
        oracle.MockClient("sometimes")
    bad = write_json(tmp_path / "bad.json", {"overrides": [{"verb_id": 1}]})
    with pytest.raises(ConfigError):
        oracle.MockClient.load(bad)
