"""Planted-belief synthetic world generator.

Beliefs are sampled independently of community while follow edges are
community-driven, so same-belief users land in distant communities by
construction. Every response label derives from the inner product of the
responder's planted beliefs with the news item's stance vector, which makes
claims like "belief edges help, especially for lurkers" falsifiable at desk
scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, NewsItem, Polarity, ResponseRecord, UserRecord, write_dataset
from .persona import LatentPersona, write_personas
from .values import BELIEF_VOCABULARY, MORAL_FOUNDATION_POLES


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 300
    n_communities: int = 4
    beliefs_per_user: int = 3
    p_follow_intra: float = 0.05
    p_follow_inter: float = 0.002
    n_news: int = 40
    stance_dim: int = 20
    responses_per_news: int = 50
    lurker_fraction: float = 0.6
    label_noise: float = 0.1
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_communities < 1 or self.n_news < 1:
            raise SynthError("counts must be positive")
        if not 1 <= self.beliefs_per_user <= len(BELIEF_VOCABULARY):
            raise SynthError("beliefs_per_user must be in 1..20")
        if self.stance_dim != len(BELIEF_VOCABULARY):
            raise SynthError("stance_dim is fixed at 20, one weight per belief")
        for p in (self.p_follow_intra, self.p_follow_inter, self.lurker_fraction):
            if not 0.0 <= p <= 1.0:
                raise SynthError("probabilities must be in [0, 1]")
        if not 0.0 <= self.label_noise < 1.0:
            raise SynthError("label_noise must be in [0, 1)")
        if not 1 <= self.responses_per_news <= self.n_users:
            raise SynthError("responses_per_news must be in 1..n_users")
        if self.threshold < 0:
            raise SynthError("threshold must be >= 0")


def planted_label(score: float, threshold: float) -> tuple[Polarity, int]:
    """Label rule: sign of the belief-stance score against the threshold,
    magnitude floor(|score|) capped at 3."""
    if score > threshold:
        polarity = Polarity.POSITIVE
    elif score < -threshold:
        polarity = Polarity.NEGATIVE
    else:
        polarity = Polarity.NEUTRAL
    return polarity, min(3, int(math.floor(abs(score))))


def _belief_texts(belief_words: list[str]) -> tuple[str, tuple[str, ...]]:
    profile = "I care deeply about " + ", ".join(belief_words) + "."
    history = tuple(
        f"Thinking about {word} again today, it matters more than ever." for word in belief_words
    )
    return profile, history


_STANCE_DISCLOSURE = 0.35  # beliefs with |stance| above this appear in the headline


def _headline(stance_row: np.ndarray, news_id: str) -> str:
    praised = [
        BELIEF_VOCABULARY[i] for i in np.flatnonzero(stance_row > _STANCE_DISCLOSURE)
    ]
    condemned = [
        BELIEF_VOCABULARY[i] for i in np.flatnonzero(stance_row < -_STANCE_DISCLOSURE)
    ]
    parts = []
    if praised:
        parts.append("praises " + " ".join(praised))
    if condemned:
        parts.append("condemns " + " ".join(condemned))
    if not parts:
        return f"update {news_id} reports nothing remarkable"
    return f"report {news_id} " + ", ".join(parts)


def generate_world(config: SynthConfig) -> tuple[Dataset, list[LatentPersona]]:
    """Deterministic (config, seed) -> (dataset, gold personas)."""
    rng = np.random.default_rng(config.seed)
    n = config.n_users
    width = max(4, len(str(n)))
    user_ids = [f"u{i:0{width}d}" for i in range(n)]
    communities = np.arange(n) % config.n_communities

    beliefs = [
        sorted(rng.choice(len(BELIEF_VOCABULARY), size=config.beliefs_per_user, replace=False))
        for _ in range(n)
    ]

    same = communities[:, None] == communities[None, :]
    prob = np.where(same, config.p_follow_intra, config.p_follow_inter)
    np.fill_diagonal(prob, 0.0)
    edge_mask = rng.random((n, n)) < prob
    follows = [
        (user_ids[i], user_ids[j]) for i, j in zip(*np.nonzero(edge_mask))
    ]
    indegree = edge_mask.sum(axis=0)

    n_lurkers = int(math.floor(config.lurker_fraction * n))
    lurker_set = set(rng.permutation(n)[:n_lurkers].tolist())

    users: dict[str, UserRecord] = {}
    for i, uid in enumerate(user_ids):
        if i in lurker_set:
            profile, history = "", ()
        else:
            words = [BELIEF_VOCABULARY[b] for b in beliefs[i]]
            profile, history = _belief_texts(words)
        users[uid] = UserRecord(
            id=uid, profile=profile, history=history, follower_count=int(indegree[i])
        )

    news_ids = [f"n{j:04d}" for j in range(config.n_news)]
    stance = rng.uniform(-1.0, 1.0, size=(config.n_news, len(BELIEF_VOCABULARY)))
    news = {
        nid: NewsItem(id=nid, headline=_headline(stance[j], nid))
        for j, nid in enumerate(news_ids)
    }

    raw_responses: list[tuple[str, str, Polarity, int]] = []
    for j, nid in enumerate(news_ids):
        responders = rng.choice(n, size=config.responses_per_news, replace=False)
        for i in sorted(responders.tolist()):
            score = float(stance[j, beliefs[i]].sum())
            polarity, intensity = planted_label(score, config.threshold)
            if config.label_noise > 0 and rng.random() < config.label_noise:
                polarity = list(Polarity)[rng.integers(0, 3)]
                intensity = int(rng.integers(0, 4))
            raw_responses.append((user_ids[i], nid, polarity, intensity))

    total = len(raw_responses)
    n_train = int(math.floor(0.8 * total))
    n_dev = int(math.floor(0.1 * total))
    split_order = rng.permutation(total)
    split_of = {}
    for rank, idx in enumerate(split_order.tolist()):
        if rank < n_train:
            split_of[idx] = "train"
        elif rank < n_train + n_dev:
            split_of[idx] = "dev"
        else:
            split_of[idx] = "test"
    if n_train == 0 or n_dev == 0 or n_train + n_dev == total:
        raise SynthError(
            f"{total} responses cannot fill all three splits; "
            "raise n_news or responses_per_news"
        )

    responses = [
        ResponseRecord(uid, nid, polarity, intensity, split_of[idx])
        for idx, (uid, nid, polarity, intensity) in enumerate(raw_responses)
    ]

    personas = []
    for i, uid in enumerate(user_ids):
        words = [BELIEF_VOCABULARY[b] for b in beliefs[i]]
        moral = tuple(w for w in words if w in MORAL_FOUNDATION_POLES)
        human = tuple(w for w in words if w not in MORAL_FOUNDATION_POLES)
        personas.append(
            LatentPersona(
                user_id=uid,
                moral_values=moral,
                human_values=human,
                summary="planted synthetic persona",
            )
        )

    dataset = Dataset(users=users, news=news, responses=responses, follows=follows)
    return dataset, personas


@dataclass
class WorldSummary:
    n_users: int
    n_news: int
    n_responses: int
    n_lurkers: int
    split_sizes: dict[str, int]
    label_distribution: dict[str, int]
    distant_shared_belief_ratio: float


def world_statistics(dataset: Dataset, gold_personas: list[LatentPersona]) -> WorldSummary:
    """Verify the generator planted the intended structure."""
    from .graph import build_graph, distant_shared_belief_ratio

    graph = build_graph(dataset, gold_personas)
    labels: dict[str, int] = {p.value: 0 for p in Polarity}
    for r in dataset.responses:
        labels[r.polarity.value] += 1
    return WorldSummary(
        n_users=len(dataset.users),
        n_news=len(dataset.news),
        n_responses=len(dataset.responses),
        n_lurkers=sum(1 for u in dataset.users.values() if not u.history and not u.profile),
        split_sizes={s: len(dataset.samples(s)) for s in ("train", "dev", "test")},
        label_distribution=labels,
        distant_shared_belief_ratio=distant_shared_belief_ratio(graph),
    )


def write_world(dataset: Dataset, personas: list[LatentPersona], out_dir) -> None:
    out_dir = Path(out_dir)
    write_dataset(dataset, out_dir)
    write_personas(personas, out_dir / "gold_personas.jsonl")
