"""Latent persona extraction through an LLM, with a strict output schema,
prompt fingerprint caching, and tolerant-but-closed vocabulary parsing.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .llm import LlmClient, PERSONA_FORMAT_MARKER, prompt_fingerprint
from .values import (
    MORAL_FOUNDATION_POLES,
    SCHWARTZ_VALUES,
    normalize_belief_token,
)

if TYPE_CHECKING:
    from .data import UserRecord

logger = logging.getLogger(__name__)


class PersonaParseError(ValueError):
    """Raised when a response holds no parseable persona object; carries the raw text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


STANCES = ("favor", "against", "neutral")


@dataclass(frozen=True)
class View:
    target: str
    stance: str

    def __post_init__(self):
        if self.stance not in STANCES:
            raise PersonaParseError(f"unknown stance {self.stance!r}")


@dataclass(frozen=True)
class LatentPersona:
    user_id: str
    moral_values: tuple[str, ...] = ()
    human_values: tuple[str, ...] = ()
    views: tuple[View, ...] = ()
    profession: str | None = None
    interests: tuple[str, ...] = ()
    summary: str = ""

    def __post_init__(self):
        for v in self.moral_values:
            if v not in MORAL_FOUNDATION_POLES:
                raise PersonaParseError(f"{v!r} is not a moral-foundation pole")
        for v in self.human_values:
            if v not in SCHWARTZ_VALUES:
                raise PersonaParseError(f"{v!r} is not a Schwartz value")
        if len(set(self.moral_values)) != len(self.moral_values):
            raise PersonaParseError("duplicate moral values")
        if len(set(self.human_values)) != len(self.human_values):
            raise PersonaParseError("duplicate human values")

    @property
    def beliefs(self) -> tuple[str, ...]:
        return self.moral_values + self.human_values

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "moral_values": list(self.moral_values),
            "human_values": list(self.human_values),
            "views": [{"target": v.target, "stance": v.stance} for v in self.views],
            "profession": self.profession,
            "interests": list(self.interests),
            "summary": self.summary,
        }


PERSONA_SYSTEM_PROMPT = (
    "You analyze social media users from their public writing and answer "
    "only in the requested format."
)

PERSONA_SCHEMA_LINES = (
    f"{PERSONA_FORMAT_MARKER} and nothing else, with exactly these keys:\n"
    '{"moral_values": [...], "human_values": [...], '
    '"views": [{"target": "...", "stance": "favor|against|neutral"}], '
    '"profession": "..." or null, "interests": [...], "summary": "..."}\n'
    "moral_values must be a subset of: " + ", ".join(MORAL_FOUNDATION_POLES) + ".\n"
    "human_values must be a subset of: " + ", ".join(SCHWARTZ_VALUES) + "."
)

REPAIR_INSTRUCTION = (
    "\n\nYour previous answer could not be parsed. Reply again with only "
    "the single JSON object in the requested schema."
)


def render_persona_prompt(profile: str, history: Sequence[str], history_cap: int = 50) -> str:
    """Deterministic extraction prompt: profile, up to history_cap most
    recent posts, and the strict output schema. Byte-identical for
    identical inputs."""
    if history_cap < 0:
        raise ValueError("history_cap must be >= 0")
    lines = ["Profile:"]
    lines.append(profile if profile.strip() else "(no profile available)")
    lines.append("")
    lines.append("Recent posts (most recent last):")
    recent = list(history)[-history_cap:] if history_cap else []
    if recent:
        lines.extend(f"{i}. {post}" for i, post in enumerate(recent, start=1))
    else:
        lines.append("(no posts available)")
    lines.append("")
    lines.append(
        "Identify this user's values, views on entities and issues, "
        "profession, and interests."
    )
    lines.append(PERSONA_SCHEMA_LINES)
    return "\n".join(lines)


def _extract_json_object(text: str) -> dict:
    """First balanced {...} object in the text, or raise."""
    start = text.find("{")
    if start < 0:
        raise PersonaParseError("no JSON object found in response", raw=text)
    depth = 0
    in_string = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                try:
                    obj = json.loads(text[start : i + 1])
                except json.JSONDecodeError as exc:
                    raise PersonaParseError(f"invalid JSON object: {exc.msg}", raw=text) from exc
                if not isinstance(obj, dict):
                    raise PersonaParseError("top-level JSON value is not an object", raw=text)
                return obj
    raise PersonaParseError("unbalanced JSON object in response", raw=text)


def _belief_tokens(value) -> list[str]:
    """Accept a list of tokens or one comma-separated string."""
    if value is None:
        return []
    if isinstance(value, str):
        parts = value.split(",")
    elif isinstance(value, (list, tuple)):
        parts = [p for p in value if isinstance(p, str)]
    else:
        return []
    return [normalize_belief_token(p) for p in parts if p.strip()]


def parse_persona_response(text: str, user_id: str = "") -> LatentPersona:
    """Parse the strict schema with tolerant normalization.

    Belief tokens are case-insensitively normalized and routed to their
    family regardless of which list the model put them in;
    out-of-vocabulary tokens are dropped with a warning, never an error.
    Unknown keys are ignored.
    """
    obj = _extract_json_object(text)
    candidates = _belief_tokens(obj.get("moral_values")) + _belief_tokens(obj.get("human_values"))
    moral: list[str] = []
    human: list[str] = []
    for token in candidates:
        if token in MORAL_FOUNDATION_POLES:
            if token not in moral:
                moral.append(token)
        elif token in SCHWARTZ_VALUES:
            if token not in human:
                human.append(token)
        else:
            logger.warning("dropping out-of-vocabulary belief token %r", token)

    views: list[View] = []
    raw_views = obj.get("views") or []
    if isinstance(raw_views, (list, tuple)):
        for entry in raw_views:
            if isinstance(entry, dict):
                target, stance = entry.get("target"), entry.get("stance")
            elif isinstance(entry, (list, tuple)) and len(entry) == 2:
                target, stance = entry
            else:
                logger.warning("dropping malformed view entry %r", entry)
                continue
            if not isinstance(target, str) or not isinstance(stance, str):
                logger.warning("dropping malformed view entry %r", entry)
                continue
            stance = stance.strip().lower()
            if stance not in STANCES:
                logger.warning("dropping view with unknown stance %r", stance)
                continue
            view = View(target=target, stance=stance)
            if view not in views:
                views.append(view)

    profession = obj.get("profession")
    if not isinstance(profession, str) or not profession.strip():
        profession = None

    interests_raw = obj.get("interests") or []
    interests: list[str] = []
    if isinstance(interests_raw, (list, tuple)):
        for item in interests_raw:
            if isinstance(item, str) and item.strip() and item not in interests:
                interests.append(item)

    summary = obj.get("summary")
    if not isinstance(summary, str):
        summary = ""

    return LatentPersona(
        user_id=user_id,
        moral_values=tuple(moral),
        human_values=tuple(human),
        views=tuple(views),
        profession=profession,
        interests=tuple(interests),
        summary=summary,
    )


class PersonaCache:
    """user_id -> (prompt fingerprint, raw text, persona); stale entries
    (fingerprint mismatch) are never served. Writes are lock-serialized."""

    def __init__(self):
        self._entries: dict[str, tuple[str, str, LatentPersona]] = {}
        self._lock = threading.Lock()

    def get(self, user_id: str, fingerprint: str) -> LatentPersona | None:
        entry = self._entries.get(user_id)
        if entry is None or entry[0] != fingerprint:
            return None
        return entry[2]

    def put(self, user_id: str, fingerprint: str, raw: str, persona: LatentPersona) -> None:
        with self._lock:
            self._entries[user_id] = (fingerprint, raw, persona)

    def __len__(self) -> int:
        return len(self._entries)

    def save(self, path) -> None:
        with self._lock, open(path, "w", encoding="utf-8", newline="\n") as fh:
            for user_id in sorted(self._entries):
                fingerprint, raw, persona = self._entries[user_id]
                fh.write(
                    json.dumps(
                        {
                            "user_id": user_id,
                            "fingerprint": fingerprint,
                            "raw": raw,
                            "persona": persona.to_dict(),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    @staticmethod
    def load(path) -> "PersonaCache":
        cache = PersonaCache()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                cache._entries[obj["user_id"]] = (
                    obj["fingerprint"],
                    obj["raw"],
                    persona_from_dict(obj["persona"]),
                )
        return cache


def extract_latent_persona(
    client: LlmClient,
    user: "UserRecord",
    cache: PersonaCache | None = None,
    history_cap: int = 50,
) -> LatentPersona:
    """Render the extraction prompt, call the client, parse; repair-retry
    on parse failure up to client.max_retries. Results are cached by the
    prompt fingerprint, so an unchanged user never costs a second call."""
    prompt = render_persona_prompt(user.profile, user.history, history_cap)
    fingerprint = prompt_fingerprint(PERSONA_SYSTEM_PROMPT, prompt)
    if cache is not None:
        hit = cache.get(user.id, fingerprint)
        if hit is not None:
            return hit

    attempts = getattr(client, "max_retries", 2) + 1
    last_error: PersonaParseError | None = None
    message = prompt
    for _ in range(attempts):
        raw = client.complete(PERSONA_SYSTEM_PROMPT, message)
        try:
            persona = parse_persona_response(raw, user_id=user.id)
        except PersonaParseError as exc:
            last_error = exc
            message = prompt + REPAIR_INSTRUCTION
            continue
        if cache is not None:
            cache.put(user.id, fingerprint, raw, persona)
        return persona
    raise PersonaParseError(
        f"persona for user {user.id!r} unparseable after {attempts} attempts: {last_error}",
        raw=last_error.raw if last_error else "",
    )


def persona_from_dict(obj: dict) -> LatentPersona:
    return LatentPersona(
        user_id=obj.get("user_id", ""),
        moral_values=tuple(obj.get("moral_values", ())),
        human_values=tuple(obj.get("human_values", ())),
        views=tuple(View(v["target"], v["stance"]) for v in obj.get("views", ())),
        profession=obj.get("profession"),
        interests=tuple(obj.get("interests", ())),
        summary=obj.get("summary", ""),
    )


def write_personas(personas: Iterable[LatentPersona], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for persona in personas:
            fh.write(json.dumps(persona.to_dict(), ensure_ascii=False) + "\n")


def read_personas(path) -> list[LatentPersona]:
    personas = []
    with open(Path(path), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                personas.append(persona_from_dict(json.loads(line)))
    return personas
