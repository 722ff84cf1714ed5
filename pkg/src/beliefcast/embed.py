"""Node representation initialization.

User and media vectors come from text through a pluggable provider; belief
vectors are seeded-random. The default provider is a bit-exact FNV-1a hash
featurizer, so nothing here ever needs model weights; externally computed
encoder vectors can be imported from an embeddings file instead.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Protocol

import numpy as np

from .graph import Ablation, HeteroGraph, NodeRef, apply_ablation
from .hashing import SplitMix64Stream, fnv1a64_text

if TYPE_CHECKING:
    from .data import Dataset, NewsItem, UserRecord


class EmbeddingError(ValueError):
    pass


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def hash_featurize(text: str, dim: int) -> np.ndarray:
    """Deterministic bag-of-tokens feature hashing into ``dim`` buckets.

    Tokens are lowercased runs of alphanumerics. Each token contributes
    +-1.0 at (fnv1a64(token) mod dim), sign from the hash's top bit
    (0 -> +1). The result is L2-normalized; all-empty text stays the zero
    vector. Bit-exact by construction.
    """
    if dim < 1:
        raise EmbeddingError("dim must be >= 1")
    vec = np.zeros(dim, dtype=np.float32)
    for token in _TOKEN_SPLIT.split(text.lower()):
        if not token:
            continue
        h = fnv1a64_text(token)
        sign = 1.0 if (h >> 63) == 0 else -1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def random_node_vector(seed: int, key: str, dim: int) -> np.ndarray:
    """Uniform vector on [-1/sqrt(dim), 1/sqrt(dim)], keyed by (seed, node key)."""
    bound = 1.0 / np.sqrt(dim)
    stream = SplitMix64Stream(seed, fnv1a64_text(key))
    return stream.uniform(-bound, bound, dim).astype(np.float32)


def init_belief_embeddings(seed: int, dim: int) -> np.ndarray:
    """The 20 belief vectors, uniform on +-1/sqrt(dim), keyed by (seed, index)."""
    if dim < 1:
        raise EmbeddingError("dim must be >= 1")
    bound = 1.0 / np.sqrt(dim)
    out = np.empty((20, dim), dtype=np.float32)
    for index in range(20):
        stream = SplitMix64Stream(seed, index)
        out[index] = stream.uniform(-bound, bound, dim)
    return out


class EmbeddingProvider(Protocol):
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


@dataclass
class HashProvider:
    """Default text encoder: the FNV-1a hash featurizer."""

    dim: int = 128

    def encode(self, text: str) -> np.ndarray:
        return hash_featurize(text, self.dim)


class FileProvider:
    """Serves pre-computed vectors from an embeddings file, keyed "kind:id".

    encode() is keyed by node, not raw text, so this provider is consumed
    through vector_for(); a missing node is a hard error naming it.
    """

    def __init__(self, path):
        table = read_embeddings(path)
        self.dim = table.dim
        self._vectors = table.vectors

    def encode(self, text: str) -> np.ndarray:
        raise EmbeddingError("FileProvider serves stored node vectors, not raw text")

    def vector_for(self, node: NodeRef) -> np.ndarray:
        try:
            return self._vectors[node]
        except KeyError:
            raise EmbeddingError(
                f"embeddings file has no vector for node {node.kind}:{node.key}"
            ) from None


@dataclass
class RandomProvider:
    """Seeded-random stand-in encoder (ignores text except for nothing at all)."""

    dim: int = 128
    seed: int = 0

    def encode(self, text: str) -> np.ndarray:
        return random_node_vector(self.seed, "text:" + text, self.dim)


def user_text(user: "UserRecord", options: Ablation) -> str | None:
    """Concatenate profile and newline-joined history per the ablation flags.

    Returns None when both parts are dropped (caller falls back to seeded
    random init for that node).
    """
    parts: list[str] = []
    if not options.without_profile:
        parts.append(user.profile)
    if not options.without_history:
        parts.append("\n".join(user.history))
    if not parts:
        return None
    return "\n".join(parts)


def init_user_embedding(
    user: "UserRecord",
    provider: EmbeddingProvider,
    options: Ablation | None = None,
    seed: int = 0,
) -> np.ndarray:
    options = apply_ablation(options)
    text = user_text(user, options)
    if text is None:
        return random_node_vector(seed, "user:" + user.id, provider.dim)
    return provider.encode(text)


def init_media_embedding(news: "NewsItem", provider: EmbeddingProvider) -> np.ndarray:
    return provider.encode(news.headline)


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[NodeRef, np.ndarray]

    def __post_init__(self):
        for node, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise EmbeddingError(f"vector for {node.kind}:{node.key} has wrong length")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"vector for {node.kind}:{node.key} is not finite")

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, kind: str, key: str) -> np.ndarray:
        return self.vectors[NodeRef(kind, key)]


def build_table(
    graph: HeteroGraph,
    dataset: "Dataset",
    provider: EmbeddingProvider,
    options: Ablation | None = None,
    seed: int = 0,
) -> EmbeddingTable:
    """One vector per graph node; pure function of its arguments.

    random_init replaces user and media vectors by seeded random draws with
    the same distribution as belief vectors; belief vectors are always
    seeded random, keyed by vocabulary index.
    """
    options = apply_ablation(options)
    vectors: dict[NodeRef, np.ndarray] = {}
    file_backed = isinstance(provider, FileProvider)

    for uid in graph.users:
        node = NodeRef("user", uid)
        if options.random_init:
            vectors[node] = random_node_vector(seed, "user:" + uid, provider.dim)
        elif file_backed:
            vectors[node] = provider.vector_for(node)
        else:
            user = dataset.users.get(uid)
            if user is None:
                # influencer nodes without records embed as empty-text users
                from .data import UserRecord

                user = UserRecord(id=uid)
            vectors[node] = init_user_embedding(user, provider, options, seed)

    for nid in graph.media:
        node = NodeRef("media", nid)
        if options.random_init:
            vectors[node] = random_node_vector(seed, "media:" + nid, provider.dim)
        elif file_backed:
            vectors[node] = provider.vector_for(node)
        else:
            vectors[node] = init_media_embedding(dataset.news[nid], provider)

    if graph.beliefs:
        belief_vecs = init_belief_embeddings(seed, provider.dim)
        from .values import BELIEF_INDEX

        for b in graph.beliefs:
            vectors[NodeRef("belief", b)] = belief_vecs[BELIEF_INDEX[b]]

    return EmbeddingTable(dim=provider.dim, vectors=vectors)


# ---------------------------------------------------------------------------
# Binary table format: magic "SSEB", u32 version=1, u32 dim, u64 count,
# then per record: u16 key length, key bytes ("kind:id"), dim f32 LE.

_MAGIC = b"SSEB"
_VERSION = 1


def write_embeddings(table: EmbeddingTable, path) -> None:
    records = sorted(
        (f"{node.kind}:{node.key}", vec) for node, vec in table.vectors.items()
    )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQ", _VERSION, table.dim, len(records)))
        for key, vec in records:
            raw = key.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.astype("<f4").tobytes())


def read_embeddings(path) -> EmbeddingTable:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise EmbeddingError(f"{path}: bad magic, not an embeddings file")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != _VERSION:
        raise EmbeddingError(f"{path}: unsupported version {version}")
    offset = 4 + 16
    vectors: dict[NodeRef, np.ndarray] = {}
    for _ in range(count):
        (keylen,) = struct.unpack_from("<H", data, offset)
        offset += 2
        key = data[offset : offset + keylen].decode("utf-8")
        offset += keylen
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        kind, _, node_id = key.partition(":")
        vectors[NodeRef(kind, node_id)] = vec
    if offset != len(data):
        raise EmbeddingError(f"{path}: trailing bytes after {count} records")
    return EmbeddingTable(dim=dim, vectors=vectors)
