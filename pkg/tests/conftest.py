import pytest

from beliefcast.data import Dataset, NewsItem, Polarity, ResponseRecord, UserRecord
from beliefcast.persona import LatentPersona


def make_dataset(
    n_users=4,
    n_news=2,
    follows=(),
    responses=(),
    histories=None,
):
    """Small hand-rolled dataset; responses as (u, n, polarity, intensity, split)."""
    users = {}
    for i in range(n_users):
        uid = f"u{i}"
        history = tuple(histories.get(uid, ())) if histories else (f"post by {uid}",)
        users[uid] = UserRecord(
            id=uid, profile=f"profile of {uid}", history=history, follower_count=i
        )
    news = {f"n{j}": NewsItem(id=f"n{j}", headline=f"headline {j}") for j in range(n_news)}
    response_records = [
        ResponseRecord(u, n, Polarity(p), i, split) for u, n, p, i, split in responses
    ]
    return Dataset(users=users, news=news, responses=list(response_records), follows=list(follows))


def persona_of(user_id, moral=(), human=()):
    return LatentPersona(user_id=user_id, moral_values=tuple(moral), human_values=tuple(human))


@pytest.fixture
def tiny_dataset():
    return make_dataset(
        n_users=3,
        n_news=2,
        follows=[("u0", "u1"), ("u2", "u1")],
        responses=[
            ("u0", "n0", "positive", 2, "train"),
            ("u1", "n1", "negative", 1, "train"),
            ("u2", "n0", "neutral", 0, "dev"),
            ("u1", "n0", "positive", 3, "test"),
        ],
    )
