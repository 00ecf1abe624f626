#
#  Copyright © 2023 The Cologic contributors
#
#  This file is part of Cologic.
#
#  Cologic is free software under terms of the GNU Lesser
#  General Public License version 3 (LGPLv3) as published by the Free
#  Software Foundation. See the file README.rst for copying conditions.
#
"""
Language model oracle
~~~~~~~~~~~~~~~~~~~~~

Builds a validity mask by asking a chat-completions endpoint, once per
verb-noun pair, whether the action makes sense.

Every verdict is appended to a JSON-lines cache as soon as it arrives::

    {"noun_id": 7, "raw_response": "Yes.", "verb_id": 3, "verdict": "valid"}

Pairs found in the cache are never asked again, so an interrupted run picks
up where it stopped and a complete cache needs no network at all.

Clients expose a single method, ``complete(request) -> str``.
:class:`OpenAIChatClient` talks to the real endpoint; :class:`MockClient`
answers from a rule and records how many requests were in flight.
"""
import json
import logging
import os
import re
import string
import threading
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, fields

import numpy as np
import openai
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from cologic.constants import API_KEY_ENV, DEFAULT_PROMPT_TEMPLATE, Verdict
from cologic.cooccur import ValidityMask
from cologic.exceptions import (
    AuthError,
    BoundsError,
    ConfigError,
    DataError,
    NetworkError,
    ParseError,
    TemplateError,
)
from cologic.io import append_json_line, read_json, read_text, write_text

__all__ = [
    "OracleConfig",
    "OracleRequest",
    "OracleVerdict",
    "OracleResult",
    "OpenAIChatClient",
    "MockClient",
    "build_prompt",
    "parse_verdict",
    "load_cache",
    "query_matrix",
]

logger = logging.getLogger(__name__)

SLOTS = frozenset(("verb", "noun"))


def _check_template(template):
    try:
        found = {name for _, name, _, _ in string.Formatter().parse(template) if name}
    except ValueError as exc:
        raise TemplateError("malformed prompt template: {0}".format(exc)) from None
    missing = SLOTS - found
    if missing:
        raise TemplateError(
            "prompt template lacks {0}".format(
                ", ".join("{" + name + "}" for name in sorted(missing))
            )
        )
    extra = found - SLOTS
    if extra:
        raise TemplateError(
            "prompt template has unknown slots {0}".format(", ".join(sorted(extra)))
        )


@dataclass(frozen=True)
class OracleConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = API_KEY_ENV
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    max_concurrent: int = 4
    #: extra attempts, both for failed requests and unparseable answers
    retries: int = 3
    timeout: float = 30.0
    temperature: float = 0.0
    cache_path: str = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        _check_template(self.prompt_template)
        if self.max_concurrent < 1:
            raise ConfigError("max_concurrent must be at least 1")
        if self.retries < 0:
            raise ConfigError("retries must be non-negative")
        if not self.timeout > 0:
            raise ConfigError("timeout must be positive")

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("oracle settings must be a JSON object")
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(
                "unknown oracle settings: {0}".format(", ".join(sorted(unknown)))
            )
        return cls(**doc)

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))

    def to_dict(self):
        return asdict(self)


OracleRequest = namedtuple(
    "OracleRequest", ("verb_id", "noun_id", "verb", "noun", "prompt")
)

OracleVerdict = namedtuple(
    "OracleVerdict", ("verb_id", "noun_id", "verdict", "raw_response", "cached")
)

OracleResult = namedtuple("OracleResult", ("mask", "unknown", "verdicts"))


def build_prompt(verb, noun, template=DEFAULT_PROMPT_TEMPLATE):
    """
    Substitutes the class names into `template`.

    Raises :class:`~cologic.exceptions.TemplateError` if the template lacks
    the ``{verb}`` or ``{noun}`` slot.
    """
    _check_template(template)
    if not verb or not noun:
        raise DataError("class names must be non-empty")
    return template.format(verb=verb, noun=noun)


_WORD = re.compile(r"[^\W\d_]+")


def parse_verdict(text):
    """
    Reads the first alphabetic word of a response: ``yes`` means valid,
    ``no`` invalid, anything else unknown.  Case is ignored.
    """
    match = _WORD.search(text or "")
    if not match:
        return Verdict.UNKNOWN
    word = match.group(0).lower()
    if word == "yes":
        return Verdict.VALID
    if word == "no":
        return Verdict.INVALID
    return Verdict.UNKNOWN


#
# Clients
#

_TRANSIENT = (
    openai.APIConnectionError,
    openai.RateLimitError,
    openai.InternalServerError,
)


class OpenAIChatClient:
    """
    Chat-completions client.  The API key is read from the environment on
    first use, so runs served entirely from the cache need no key.
    """

    def __init__(self, config):
        self.config = config
        self._client = None
        self._lock = threading.Lock()

    def _get_client(self):
        with self._lock:
            if self._client is None:
                key = os.environ.get(self.config.api_key_env)
                if not key:
                    raise AuthError(
                        "no API key: set ${0}".format(self.config.api_key_env)
                    )
                self._client = openai.OpenAI(
                    api_key=key,
                    base_url=self.config.endpoint,
                    timeout=self.config.timeout,
                    max_retries=0,
                )
            return self._client

    def _create(self, client, prompt):
        response = client.chat.completions.create(
            model=self.config.model,
            messages=[{"role": "user", "content": prompt}],
            temperature=self.config.temperature,
        )
        return response.choices[0].message.content or ""

    def complete(self, request):
        client = self._get_client()
        retrying = Retrying(
            stop=stop_after_attempt(self.config.retries + 1),
            wait=wait_exponential(multiplier=0.5, max=8),
            retry=retry_if_exception_type(_TRANSIENT),
            before_sleep=before_sleep_log(logger, logging.WARNING),
            reraise=True,
        )
        try:
            return retrying(self._create, client, request.prompt)
        except (openai.AuthenticationError, openai.PermissionDeniedError) as exc:
            raise AuthError(
                "the endpoint rejected the API key: {0}".format(exc)
            ) from None
        except openai.OpenAIError as exc:
            raise NetworkError(
                "request for pair ({0}, {1}) failed: {2}".format(
                    request.verb_id, request.noun_id, exc
                )
            ) from None


_MOCK_RULES = {
    "identity": lambda i, j: i == j,
    "upper": lambda i, j: i <= j,
    "all": lambda i, j: True,
    "none": lambda i, j: False,
}


class MockClient:
    """
    Offline client answering ``YES`` or ``NO`` from a rule over the class
    ids.  `overrides` maps ``(verb_id, noun_id)`` to a literal response.

    :ivar calls: number of requests answered.
    :ivar max_in_flight: largest number of simultaneous requests seen.
    """

    def __init__(self, rule="identity", overrides=None, delay=0.0):
        if rule not in _MOCK_RULES:
            raise ConfigError(
                "unknown mock rule {0!r}; expected one of {1}".format(
                    rule, ", ".join(sorted(_MOCK_RULES))
                )
            )
        self.rule = rule
        self.overrides = dict(overrides or {})
        self.delay = delay
        self.calls = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path):
        """
        Reads a rule file::

            {"rule": "upper", "delay": 0.0,
             "overrides": [{"verb_id": 0, "noun_id": 1, "response": "maybe"}]}
        """
        doc = read_json(path)
        if not isinstance(doc, dict):
            raise ConfigError("{0}: a mock rule file is a JSON object".format(path))
        try:
            overrides = {
                (int(o["verb_id"]), int(o["noun_id"])): str(o["response"])
                for o in doc.get("overrides", [])
            }
        except (KeyError, TypeError, ValueError):
            raise ConfigError("{0}: malformed override".format(path)) from None
        return cls(doc.get("rule", "identity"), overrides, float(doc.get("delay", 0.0)))

    def complete(self, request):
        with self._lock:
            self.in_flight += 1
            self.calls += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            key = (request.verb_id, request.noun_id)
            if key in self.overrides:
                return self.overrides[key]
            valid = _MOCK_RULES[self.rule](request.verb_id, request.noun_id)
            return "YES" if valid else "NO"
        finally:
            with self._lock:
                self.in_flight -= 1


#
# Cache
#


def load_cache(path, shape=None):
    """
    Replays a verdict cache into ``{(verb_id, noun_id): (Verdict, raw)}``.
    Later records win.  An unterminated last line (an interrupted write) is
    skipped.
    """
    if not path or not os.path.exists(path):
        return {}
    text = read_text(path)
    lines = text.split("\n")
    cache = {}
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            key = (int(record["verb_id"]), int(record["noun_id"]))
            entry = (Verdict(record["verdict"]), str(record["raw_response"]))
        except (ValueError, KeyError, TypeError):
            if number == len(lines):
                logger.warning("%s: ignoring truncated last record", path)
                continue
            raise ParseError("{0}: malformed cache record".format(path), line=number)
        inside = shape is None or (0 <= key[0] < shape[0] and 0 <= key[1] < shape[1])
        if not inside:
            raise BoundsError(
                "{0}: cached pair {1} is outside the vocabulary".format(path, key),
                record=number - 1,
            )
        cache[key] = entry
    return cache


def _open_cache(path):
    if os.path.exists(path):
        text = read_text(path)
        if text and not text.endswith("\n"):
            # drop the interrupted record so appends start on a fresh line
            write_text(path, text[: text.rfind("\n") + 1])
    return open(path, "a", encoding="utf-8")


#
# Querying
#


def _ask(client, request, retries):
    # unparseable answers are asked again
    raw = ""
    for _ in range(retries + 1):
        raw = client.complete(request)
        verdict = parse_verdict(raw)
        if verdict is not Verdict.UNKNOWN:
            return verdict, raw
        logger.debug("unparseable answer for %s: %r", request[:2], raw)
    return Verdict.UNKNOWN, raw


def query_matrix(vocab, cfg, client, unknown_valid=False):
    """
    Collects one verdict per verb-noun pair and returns
    :class:`OracleResult` ``(mask, unknown, verdicts)``.

    Unknown verdicts count as invalid (valid with `unknown_valid`) and are
    listed in ``unknown``.  At most ``cfg.max_concurrent`` requests run at
    once; only the calling thread writes the cache.

    Raises :class:`~cologic.exceptions.NetworkError` or
    :class:`~cologic.exceptions.AuthError`; requests not yet started are
    dropped, while every answer obtained, including those of requests still
    running at the time of the failure, stays in the cache.
    """
    shape = vocab.shape
    cache = load_cache(cfg.cache_path, shape)
    verdicts = {}
    for key, (verdict, raw) in cache.items():
        verdicts[key] = OracleVerdict(key[0], key[1], verdict, raw, True)
    pending = []
    for i, verb in enumerate(vocab.verbs):
        for j, noun in enumerate(vocab.nouns):
            if (i, j) not in cache:
                prompt = build_prompt(verb, noun, cfg.prompt_template)
                pending.append(OracleRequest(i, j, verb, noun, prompt))
    logger.info(
        "%d of %d pairs cached, %d to ask",
        len(cache),
        shape[0] * shape[1],
        len(pending),
    )

    if pending:
        sink = _open_cache(cfg.cache_path) if cfg.cache_path else None

        def record(request, verdict, raw):
            key = (request.verb_id, request.noun_id)
            verdicts[key] = OracleVerdict(key[0], key[1], verdict, raw, False)
            if sink is not None:
                append_json_line(
                    sink,
                    {
                        "verb_id": key[0],
                        "noun_id": key[1],
                        "verdict": verdict.value,
                        "raw_response": raw,
                    },
                )

        executor = ThreadPoolExecutor(max_workers=cfg.max_concurrent)
        futures = {}
        try:
            for request in pending:
                futures[executor.submit(_ask, client, request, cfg.retries)] = request
            for future in as_completed(futures):
                record(futures[future], *future.result())
        except BaseException:
            # requests already running still finish; keep what they got
            executor.shutdown(wait=True, cancel_futures=True)
            for future, request in futures.items():
                key = (request.verb_id, request.noun_id)
                if key in verdicts or future.cancelled() or future.exception():
                    continue
                record(request, *future.result())
            raise
        finally:
            executor.shutdown(wait=True, cancel_futures=True)
            if sink is not None:
                sink.close()

    valid = np.zeros(shape, dtype=bool)
    unknown = []
    for (i, j), entry in sorted(verdicts.items()):
        if entry.verdict is Verdict.VALID:
            valid[i, j] = True
        elif entry.verdict is Verdict.UNKNOWN:
            unknown.append((i, j))
            valid[i, j] = unknown_valid
    if unknown:
        logger.warning("%d pairs got no usable answer", len(unknown))
    ordered = [verdicts[key] for key in sorted(verdicts)]
    return OracleResult(ValidityMask(valid, vocab), unknown, ordered)
