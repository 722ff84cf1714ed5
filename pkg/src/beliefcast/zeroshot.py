"""Zero-shot forecasting that simulates propagation with social prompts:
authority-ranked neighborhood filtering, LLM aggregation of neighbor
personas into a social context, and a final strictly-parsed prediction.

Three comparison modes:
  baseline  profile + history + headline only
  latent    adds the user's extracted latent persona
  social    adds the latent persona and the aggregated social context
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

from .data import Polarity
from .graph import GraphError, HeteroGraph
from .llm import ANSWER_LINE_MARKER, LlmClient, LlmError, SOCIAL_SUMMARY_MARKER
from .metrics import EvalReport, evaluate
from .persona import (
    LatentPersona,
    PersonaCache,
    PersonaParseError,
    extract_latent_persona,
)

if TYPE_CHECKING:
    from .data import Dataset, NewsItem, UserRecord

logger = logging.getLogger(__name__)

MODES = ("baseline", "latent", "social")

NO_SOCIAL_CONTEXT = "No social context is available for this user."


class PredictionParseError(ValueError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class SocialContext:
    user_id: str
    summary: str
    contributors: tuple[str, ...] = ()


@dataclass(frozen=True)
class ZeroShotPrediction:
    polarity: Polarity
    intensity: int
    raw: str

    def answer_line(self) -> str:
        return f"polarity={self.polarity.value}; intensity={self.intensity}"


def filter_neighbors(
    graph: HeteroGraph,
    users: "Mapping[str, UserRecord]",
    user_id: str,
    k: int,
) -> list[str]:
    """Top-k follow neighbors (either direction) by follower count.

    Authority is the global UserRecord.follower_count; ties break by
    ascending id. Fewer than k neighbors returns them all.
    """
    if k < 0:
        raise GraphError("k must be >= 0")
    if user_id not in set(graph.users):
        raise GraphError(f"unknown user {user_id!r}")
    neighborhood: set[str] = set()
    for src, dst in graph.follow:
        if src == user_id:
            neighborhood.add(dst)
        elif dst == user_id:
            neighborhood.add(src)
    neighborhood.discard(user_id)

    def rank_key(uid: str):
        record = users.get(uid)
        count = record.follower_count if record is not None else 0
        return (-count, uid)

    return sorted(neighborhood, key=rank_key)[:k]


AGGREGATION_SYSTEM_PROMPT = (
    "You summarize the social circles of social media users, concisely and "
    "in plain text."
)


def render_social_prompt(neighbor_personas: Sequence[LatentPersona]) -> str:
    lines = ["The user's most influential connections have these profiles:", ""]
    for i, persona in enumerate(neighbor_personas, start=1):
        obj = persona.to_dict()
        obj.pop("user_id", None)
        lines.append(f"Connection {i}: {json.dumps(obj, ensure_ascii=False)}")
    lines.append("")
    lines.append(
        f"{SOCIAL_SUMMARY_MARKER}, stances, and interests of this circle "
        "in a short plain-text paragraph."
    )
    return "\n".join(lines)


def aggregate_social_context(
    client: LlmClient,
    neighbor_personas: Sequence[LatentPersona],
    user_id: str = "",
) -> SocialContext:
    """Fold the ranked neighbor personas into one socially aware summary.

    An empty neighbor list short-circuits to a canonical no-context
    summary without any LLM call.
    """
    if not neighbor_personas:
        return SocialContext(user_id=user_id, summary=NO_SOCIAL_CONTEXT, contributors=())
    prompt = render_social_prompt(neighbor_personas)
    summary = client.complete(AGGREGATION_SYSTEM_PROMPT, prompt)
    return SocialContext(
        user_id=user_id,
        summary=summary,
        contributors=tuple(p.user_id for p in neighbor_personas),
    )


PREDICTION_SYSTEM_PROMPT = (
    "You forecast how a specific social media user will respond to a news "
    "headline, answering only in the requested format."
)

REPAIR_INSTRUCTION = (
    "\n\nYour previous answer could not be parsed. Reply with exactly one "
    "line in the requested format."
)


def render_prediction_prompt(
    news: "NewsItem",
    user: "UserRecord",
    user_latent: LatentPersona | None = None,
    social_context: SocialContext | None = None,
    mode: str = "baseline",
    history_cap: int = 50,
) -> str:
    if mode not in MODES:
        raise PredictionParseError(f"unknown mode {mode!r}")
    lines = [f"Headline: {news.headline}", ""]
    lines.append("User profile:")
    lines.append(user.profile if user.profile.strip() else "(no profile available)")
    lines.append("Recent posts (most recent last):")
    recent = list(user.history)[-history_cap:] if history_cap else []
    if recent:
        lines.extend(f"{i}. {post}" for i, post in enumerate(recent, start=1))
    else:
        lines.append("(no posts available)")
    if mode in ("latent", "social"):
        if user_latent is None:
            raise PredictionParseError(f"mode {mode!r} needs the user's latent persona")
        obj = user_latent.to_dict()
        obj.pop("user_id", None)
        lines.append("")
        lines.append(f"User traits: {json.dumps(obj, ensure_ascii=False)}")
    if mode == "social":
        if social_context is None:
            raise PredictionParseError("mode 'social' needs a social context")
        lines.append("")
        lines.append(f"Social circle summary: {social_context.summary}")
    lines.append("")
    lines.append(
        "Predict the sentiment of this user's response to the headline. "
        "Answer with one line in exactly this format: " + ANSWER_LINE_MARKER
    )
    return "\n".join(lines)


_STRICT_ANSWER = re.compile(
    r"^\s*polarity\s*[=:]\s*(positive|neutral|negative)\s*[;,]\s*intensity\s*[=:]\s*(-?\d+)\s*\.?\s*$",
    re.IGNORECASE,
)
_POLARITY_ANYWHERE = re.compile(r"polarity\s*[=:]\s*(positive|neutral|negative)", re.IGNORECASE)
_INTENSITY_ANYWHERE = re.compile(r"intensity\s*[=:]\s*(-?\d+)", re.IGNORECASE)


def parse_prediction(text: str) -> tuple[Polarity, int]:
    """Strict "polarity=<p>; intensity=<0-3>" line, falling back to tolerant
    field matching in any order or casing. Out-of-range intensity is an error."""
    match = _STRICT_ANSWER.match(text.strip())
    if match:
        polarity_str, intensity_str = match.group(1), match.group(2)
    else:
        pol_match = _POLARITY_ANYWHERE.search(text)
        int_match = _INTENSITY_ANYWHERE.search(text)
        if not pol_match or not int_match:
            raise PredictionParseError("no polarity/intensity fields found", raw=text)
        polarity_str, intensity_str = pol_match.group(1), int_match.group(1)
    intensity = int(intensity_str)
    if intensity not in range(0, 4):
        raise PredictionParseError(f"intensity {intensity} outside 0..3", raw=text)
    return Polarity(polarity_str.lower()), intensity


def predict_zero_shot(
    client: LlmClient,
    news: "NewsItem",
    user: "UserRecord",
    user_latent: LatentPersona | None = None,
    social_context: SocialContext | None = None,
    mode: str = "baseline",
    history_cap: int = 50,
) -> ZeroShotPrediction:
    """One forecast; parse failures retry with a repair instruction."""
    prompt = render_prediction_prompt(news, user, user_latent, social_context, mode, history_cap)
    attempts = getattr(client, "max_retries", 2) + 1
    message = prompt
    last: PredictionParseError | None = None
    for _ in range(attempts):
        raw = client.complete(PREDICTION_SYSTEM_PROMPT, message)
        try:
            polarity, intensity = parse_prediction(raw)
        except PredictionParseError as exc:
            last = exc
            message = prompt + REPAIR_INSTRUCTION
            continue
        return ZeroShotPrediction(polarity=polarity, intensity=intensity, raw=raw)
    raise PredictionParseError(
        f"prediction unparseable after {attempts} attempts: {last}",
        raw=last.raw if last else "",
    )


@dataclass(frozen=True)
class PredictionRecord:
    user_id: str
    news_id: str
    mode: str
    polarity: Polarity
    intensity: int
    raw: str

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "news_id": self.news_id,
            "mode": self.mode,
            "polarity": self.polarity.value,
            "intensity": self.intensity,
            "raw": self.raw,
        }


def run_zero_shot_eval(
    graph: HeteroGraph,
    dataset: "Dataset",
    client: LlmClient,
    mode: str = "baseline",
    k: int = 25,
    history_cap: int = 50,
) -> tuple[EvalReport, list[PredictionRecord]]:
    """Forecast every test sample, score the successes, count the failures.

    Personas and social contexts are cached per user within the run;
    baseline mode makes no persona-extraction calls at all. Per-sample
    failures are logged and skipped, never fatal.
    """
    if mode not in MODES:
        raise PredictionParseError(f"unknown mode {mode!r}")
    test_samples = dataset.samples("test")
    if not test_samples:
        from .data import DatasetError

        raise DatasetError("test split is empty")

    persona_cache = PersonaCache()
    context_cache: dict[str, SocialContext] = {}
    predictions: list[tuple[Polarity, int]] = []
    gold: list[tuple[Polarity, int]] = []
    kept_samples = []
    records: list[PredictionRecord] = []
    failures = 0

    for sample in test_samples:
        user = dataset.users[sample.user_id]
        news = dataset.news[sample.news_id]
        try:
            user_latent = None
            context = None
            if mode in ("latent", "social"):
                user_latent = extract_latent_persona(
                    client, user, cache=persona_cache, history_cap=history_cap
                )
            if mode == "social":
                context = context_cache.get(user.id)
                if context is None:
                    neighbor_ids = filter_neighbors(graph, dataset.users, user.id, k)
                    neighbor_personas = [
                        extract_latent_persona(
                            client, dataset.users[nid], cache=persona_cache, history_cap=history_cap
                        )
                        for nid in neighbor_ids
                    ]
                    context = aggregate_social_context(client, neighbor_personas, user_id=user.id)
                    context_cache[user.id] = context
            prediction = predict_zero_shot(
                client, news, user, user_latent, context, mode, history_cap
            )
        except (PersonaParseError, PredictionParseError, LlmError) as exc:
            logger.warning(
                "zero-shot failure for (%s, %s): %s", sample.user_id, sample.news_id, exc
            )
            failures += 1
            continue
        predictions.append((prediction.polarity, prediction.intensity))
        gold.append((sample.polarity, sample.intensity))
        kept_samples.append(sample)
        records.append(
            PredictionRecord(
                user_id=sample.user_id,
                news_id=sample.news_id,
                mode=mode,
                polarity=prediction.polarity,
                intensity=prediction.intensity,
                raw=prediction.raw,
            )
        )

    report = evaluate(predictions, gold, n_failures=failures)
    return report, records


def write_predictions(records: Sequence[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
