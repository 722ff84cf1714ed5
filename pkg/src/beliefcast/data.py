"""Canonical record types, label semantics, and dataset file ingestion.

File formats (all UTF-8, LF line endings):
  users.jsonl      {"id", "profile", "history", "follower_count"}
  news.jsonl       {"id", "headline"}
  responses.jsonl  {"user_id", "news_id", "polarity", "intensity", "split"}
  follows.tsv      src <TAB> dst, one directed edge per line
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class DatasetError(ValueError):
    """Raised on malformed files, duplicate ids, or dangling references."""


class Polarity(str, enum.Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"


POLARITIES = (Polarity.POSITIVE, Polarity.NEUTRAL, Polarity.NEGATIVE)

SPLITS = ("train", "dev", "test")

INTENSITY_RANGE = range(0, 4)


@dataclass(frozen=True)
class UserRecord:
    id: str
    profile: str = ""
    history: tuple[str, ...] = ()
    follower_count: int = 0

    def __post_init__(self):
        if not self.id:
            raise DatasetError("user id must be non-empty")
        if self.follower_count < 0:
            raise DatasetError(f"user {self.id!r}: follower_count must be >= 0")
        object.__setattr__(self, "history", tuple(self.history))


@dataclass(frozen=True)
class NewsItem:
    id: str
    headline: str

    def __post_init__(self):
        if not self.id:
            raise DatasetError("news id must be non-empty")
        if not self.headline.strip():
            raise DatasetError(f"news {self.id!r}: headline must be non-empty")


@dataclass(frozen=True)
class ResponseRecord:
    user_id: str
    news_id: str
    polarity: Polarity
    intensity: int
    split: str

    def __post_init__(self):
        if self.intensity not in INTENSITY_RANGE:
            raise DatasetError(
                f"response ({self.user_id!r}, {self.news_id!r}): intensity must be in 0..3"
            )
        if self.split not in SPLITS:
            raise DatasetError(
                f"response ({self.user_id!r}, {self.news_id!r}): unknown split {self.split!r}"
            )


@dataclass
class Dataset:
    """Validated, immutable-after-load record collections."""

    users: dict[str, UserRecord] = field(default_factory=dict)
    news: dict[str, NewsItem] = field(default_factory=dict)
    responses: list[ResponseRecord] = field(default_factory=list)
    follows: list[tuple[str, str]] = field(default_factory=list)

    def samples(self, split: str) -> list[ResponseRecord]:
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}")
        return [r for r in self.responses if r.split == split]


def signed_intensity(polarity: Polarity, intensity: int) -> int:
    """Map (polarity, intensity) to one signed scalar in -3..3.

    Positive carries +intensity, Negative carries -intensity, Neutral is 0
    regardless of the annotated magnitude.
    """
    if intensity not in INTENSITY_RANGE:
        raise DatasetError(f"intensity {intensity} out of range 0..3")
    polarity = Polarity(polarity)
    if polarity is Polarity.POSITIVE:
        return intensity
    if polarity is Polarity.NEGATIVE:
        return -intensity
    return 0


def lurker_split(
    dataset: Dataset, threshold: int = 50
) -> tuple[list[ResponseRecord], list[ResponseRecord]]:
    """Partition test samples by responder history length (< threshold = lurker)."""
    if threshold < 0:
        raise DatasetError("lurker threshold must be >= 0")
    lurkers: list[ResponseRecord] = []
    others: list[ResponseRecord] = []
    for sample in dataset.samples("test"):
        user = dataset.users[sample.user_id]
        (lurkers if len(user.history) < threshold else others).append(sample)
    return lurkers, others


def unseen_user_split(
    train_samples: Sequence[ResponseRecord], eval_samples: Sequence[ResponseRecord]
) -> list[ResponseRecord]:
    """Eval samples whose responder never appears as a responder in training."""
    seen = {r.user_id for r in train_samples}
    return [r for r in eval_samples if r.user_id not in seen]


# ---------------------------------------------------------------------------
# File ingestion


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path.name} line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"{path.name} line {lineno}: expected an object")
            yield lineno, obj


def _require(obj: dict, key: str, path: Path, lineno: int):
    if key not in obj:
        raise DatasetError(f"{path.name} line {lineno}: missing key {key!r}")
    return obj[key]


def load_dataset(users_path, news_path, responses_path, follows_path) -> Dataset:
    """Load and cross-validate the four dataset files.

    Dangling references and duplicate ids are hard errors with the
    offending id and line number; nothing is silently dropped.
    """
    users_path, news_path = Path(users_path), Path(news_path)
    responses_path, follows_path = Path(responses_path), Path(follows_path)

    users: dict[str, UserRecord] = {}
    for lineno, obj in _read_jsonl(users_path):
        uid = _require(obj, "id", users_path, lineno)
        if uid in users:
            raise DatasetError(f"{users_path.name} line {lineno}: duplicate user id {uid!r}")
        history = obj.get("history", [])
        if not isinstance(history, list) or not all(isinstance(h, str) for h in history):
            raise DatasetError(f"{users_path.name} line {lineno}: history must be a list of strings")
        try:
            users[uid] = UserRecord(
                id=uid,
                profile=obj.get("profile", ""),
                history=tuple(history),
                follower_count=int(obj.get("follower_count", 0)),
            )
        except DatasetError as exc:
            raise DatasetError(f"{users_path.name} line {lineno}: {exc}") from exc

    news: dict[str, NewsItem] = {}
    for lineno, obj in _read_jsonl(news_path):
        nid = _require(obj, "id", news_path, lineno)
        if nid in news:
            raise DatasetError(f"{news_path.name} line {lineno}: duplicate news id {nid!r}")
        try:
            news[nid] = NewsItem(id=nid, headline=_require(obj, "headline", news_path, lineno))
        except DatasetError as exc:
            raise DatasetError(f"{news_path.name} line {lineno}: {exc}") from exc

    responses: list[ResponseRecord] = []
    for lineno, obj in _read_jsonl(responses_path):
        uid = _require(obj, "user_id", responses_path, lineno)
        nid = _require(obj, "news_id", responses_path, lineno)
        if uid not in users:
            raise DatasetError(
                f"{responses_path.name} line {lineno}: unknown user_id {uid!r}"
            )
        if nid not in news:
            raise DatasetError(
                f"{responses_path.name} line {lineno}: unknown news_id {nid!r}"
            )
        try:
            polarity = Polarity(_require(obj, "polarity", responses_path, lineno))
        except ValueError:
            raise DatasetError(
                f"{responses_path.name} line {lineno}: unknown polarity {obj.get('polarity')!r}"
            ) from None
        try:
            responses.append(
                ResponseRecord(
                    user_id=uid,
                    news_id=nid,
                    polarity=polarity,
                    intensity=int(_require(obj, "intensity", responses_path, lineno)),
                    split=_require(obj, "split", responses_path, lineno),
                )
            )
        except DatasetError as exc:
            raise DatasetError(f"{responses_path.name} line {lineno}: {exc}") from exc

    follows: list[tuple[str, str]] = []
    with open(follows_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(
                    f"{follows_path.name} line {lineno}: expected two tab-separated ids"
                )
            src, dst = parts
            for uid in (src, dst):
                if uid not in users:
                    raise DatasetError(
                        f"{follows_path.name} line {lineno}: unknown user id {uid!r}"
                    )
            follows.append((src, dst))

    return Dataset(users=users, news=news, responses=responses, follows=follows)


def load_dataset_dir(path) -> Dataset:
    """Load the four standard files from one directory."""
    path = Path(path)
    return load_dataset(
        path / "users.jsonl",
        path / "news.jsonl",
        path / "responses.jsonl",
        path / "follows.tsv",
    )


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def write_dataset(dataset: Dataset, out_dir) -> None:
    """Write the four standard files; byte-deterministic for a given dataset."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "users.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for user in dataset.users.values():
            fh.write(
                _dump(
                    {
                        "id": user.id,
                        "profile": user.profile,
                        "history": list(user.history),
                        "follower_count": user.follower_count,
                    }
                )
                + "\n"
            )
    with open(out_dir / "news.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for item in dataset.news.values():
            fh.write(_dump({"id": item.id, "headline": item.headline}) + "\n")
    with open(out_dir / "responses.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in dataset.responses:
            fh.write(
                _dump(
                    {
                        "user_id": r.user_id,
                        "news_id": r.news_id,
                        "polarity": r.polarity.value,
                        "intensity": r.intensity,
                        "split": r.split,
                    }
                )
                + "\n"
            )
    with open(out_dir / "follows.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for src, dst in dataset.follows:
            fh.write(f"{src}\t{dst}\n")
