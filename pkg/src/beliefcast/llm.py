"""Chat-completion clients behind one small contract.

A client is anything with ``complete(system, user) -> str`` plus a
``max_retries`` attribute (shared by transport retries and parse-repair
loops). Three implementations:

  MockLlmClient    deterministic pure function of the prompt text
  ReplayCacheClient jsonl-backed record/replay around another client
  RemoteChatClient  OpenAI-compatible wire format over an injectable
                    transport (urllib by default), with exponential
                    backoff and a requests-per-second cap
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from .hashing import fnv1a64_text
from .values import BELIEF_VOCABULARY, MORAL_FOUNDATION_POLES, SCHWARTZ_VALUES, normalize_belief_token


class LlmError(RuntimeError):
    pass


class LlmClient(Protocol):
    max_retries: int

    def complete(self, system: str, user: str) -> str: ...


def prompt_fingerprint(system: str, user: str) -> str:
    digest = hashlib.sha256()
    digest.update(system.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(user.encode("utf-8"))
    return digest.hexdigest()


# Markers the prompt templates embed so a content-addressed client can tell
# which output format is being requested.
PERSONA_FORMAT_MARKER = "Answer with a single JSON object"
ANSWER_LINE_MARKER = "polarity=<positive|neutral|negative>; intensity=<0-3>"
SOCIAL_SUMMARY_MARKER = "Summarize the shared values"

_PROFESSIONS = ("teacher", "engineer", "journalist", "nurse", "artist", None)


class MockLlmClient:
    """Deterministic stand-in: output depends only on (seed, system, user).

    Persona requests are answered by scanning the prompt for belief
    vocabulary words (so a text that mentions "loyalty" yields a loyal
    persona); prediction and summary requests are answered from a hash of
    the prompt. A ``script`` callable overrides everything.
    """

    def __init__(self, seed: int = 0, script: Callable[[str, str], str] | None = None):
        self.seed = seed
        self.script = script
        self.max_retries = 2
        self.calls = 0

    def complete(self, system: str, user: str) -> str:
        self.calls += 1
        if self.script is not None:
            return self.script(system, user)
        h = fnv1a64_text(f"{self.seed}\x00{system}\x00{user}")
        if ANSWER_LINE_MARKER in user:
            polarity = ("positive", "neutral", "negative")[h % 3]
            intensity = (h >> 2) % 4
            return f"polarity={polarity}; intensity={intensity}"
        if SOCIAL_SUMMARY_MARKER in user:
            found = _vocabulary_hits(user)
            if found:
                return "This circle leans on " + ", ".join(found) + "."
            return "This circle shows no clearly shared values."
        if PERSONA_FORMAT_MARKER in user:
            return self._persona_json(user, h)
        return f"ack:{h:016x}"

    def _persona_json(self, user_prompt: str, h: int) -> str:
        body = user_prompt.split(PERSONA_FORMAT_MARKER)[0]
        hits = _vocabulary_hits(body)
        moral = [b for b in hits if b in MORAL_FOUNDATION_POLES]
        human = [b for b in hits if b in SCHWARTZ_VALUES]
        if not hits:
            # text-free users still get a stable, possibly empty, persona
            if h % 4 == 0:
                moral = [MORAL_FOUNDATION_POLES[h % 10]]
        return json.dumps(
            {
                "moral_values": moral,
                "human_values": human,
                "views": [],
                "profession": _PROFESSIONS[(h >> 8) % len(_PROFESSIONS)],
                "interests": hits[:3],
                "summary": f"auto-profile {h % 100000:05d}",
            }
        )


def _vocabulary_hits(text: str) -> list[str]:
    tokens = {normalize_belief_token(tok) for tok in text.replace("-", "_").split()}
    return [b for b in BELIEF_VOCABULARY if b in tokens]


class ReplayCacheClient:
    """Record/replay wrapper keyed by prompt fingerprint.

    With no inner client, a cache miss is an error; with one, misses are
    forwarded and recorded. Writes are append-only jsonl.
    """

    def __init__(self, path, inner: LlmClient | None = None):
        self.path = Path(path)
        self.inner = inner
        self.max_retries = inner.max_retries if inner is not None else 2
        self._cache: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        self._cache[obj["fingerprint"]] = obj["response"]

    def complete(self, system: str, user: str) -> str:
        key = prompt_fingerprint(system, user)
        if key in self._cache:
            return self._cache[key]
        if self.inner is None:
            raise LlmError(f"replay cache miss for fingerprint {key[:12]} and no inner client")
        response = self.inner.complete(system, user)
        self._cache[key] = response
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({"fingerprint": key, "response": response}) + "\n")
        return response


@dataclass
class RemoteConfig:
    base_url: str
    model: str
    temperature: float = 0.0
    max_retries: int = 2
    requests_per_second: float = 0.0  # 0 = uncapped
    token_env: str = "OPENAI_API_KEY"


def _urllib_transport(url: str, headers: dict[str, str], payload: bytes) -> tuple[int, bytes]:
    request = urllib.request.Request(url, data=payload, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=60) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


class RemoteChatClient:
    """OpenAI-compatible chat-completions client.

    Request: {model, temperature, messages: [{role, content}, ...]};
    the reply is the first choice's message content. Transient failures
    (HTTP 429/5xx, transport errors) retry with exponential backoff up to
    max_retries; a requests-per-second cap spaces calls out.
    """

    def __init__(
        self,
        config: RemoteConfig,
        transport: Callable[[str, dict, bytes], tuple[int, bytes]] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.max_retries = config.max_retries
        self._transport = transport or _urllib_transport
        self._sleep = sleep
        self._last_call = 0.0

    def complete(self, system: str, user: str) -> str:
        payload = json.dumps(
            {
                "model": self.config.model,
                "temperature": self.config.temperature,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": user},
                ],
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"

        delay = 1.0
        last_error = "no attempts made"
        for attempt in range(self.config.max_retries + 1):
            self._respect_rate_cap()
            try:
                status, body = self._transport(url, headers, payload)
            except OSError as exc:
                last_error = f"transport failure: {exc}"
                status, body = None, b""
            if status == 200:
                try:
                    obj = json.loads(body)
                    return obj["choices"][0]["message"]["content"]
                except (KeyError, IndexError, json.JSONDecodeError) as exc:
                    raise LlmError(f"malformed completion response: {exc}") from exc
            if status is not None:
                last_error = f"HTTP {status}"
                if status not in (429,) and not 500 <= status < 600:
                    raise LlmError(f"chat completion failed: HTTP {status}: {body[:200]!r}")
            if attempt < self.config.max_retries:
                self._sleep(delay)
                delay *= 2.0
        raise LlmError(f"chat completion failed after {self.config.max_retries + 1} attempts ({last_error})")

    def _respect_rate_cap(self):
        if self.config.requests_per_second <= 0:
            return
        min_interval = 1.0 / self.config.requests_per_second
        now = time.monotonic()
        wait = self._last_call + min_interval - now
        if wait > 0:
            self._sleep(wait)
        self._last_call = time.monotonic()
