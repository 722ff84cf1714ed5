"""Evaluation metrics: rank/linear correlation over signed intensity and
micro/macro F1 over polarity, plus the lurker / unseen-user / per-belief
breakdowns.

Correlation functions return a scipy-style result object carrying the
statistic and a degeneracy flag (zero variance yields 0 with the flag set,
so an all-Neutral predictor is still evaluable).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, NamedTuple, Sequence

import numpy as np

from .data import POLARITIES, Polarity, signed_intensity

if TYPE_CHECKING:
    from .data import ResponseRecord


class MetricsError(ValueError):
    pass


class CorrResult(NamedTuple):
    statistic: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.statistic


def _check_lengths(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise MetricsError(f"length mismatch: {xa.shape} vs {ya.shape}")
    if xa.size < 2:
        raise MetricsError("correlation needs at least 2 samples")
    return xa, ya


def pearson(x: Sequence[float], y: Sequence[float]) -> CorrResult:
    """Sample Pearson correlation; 0 with the degenerate flag on zero variance."""
    xa, ya = _check_lengths(x, y)
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    vx = float(xd @ xd)
    vy = float(yd @ yd)
    if vx == 0.0 or vy == 0.0:
        return CorrResult(0.0, degenerate=True)
    return CorrResult(float(xd @ yd) / np.sqrt(vx * vy))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrResult:
    """Pearson correlation over average ranks."""
    xa, ya = _check_lengths(x, y)
    return pearson(_average_ranks(xa), _average_ranks(ya))


def _as_polarity_list(labels: Sequence) -> list[Polarity]:
    return [Polarity(v) for v in labels]


def micro_f1(y_true: Sequence, y_pred: Sequence) -> float:
    """Micro-averaged F1, which for single-label multi-class data is accuracy."""
    true = _as_polarity_list(y_true)
    pred = _as_polarity_list(y_pred)
    if len(true) != len(pred):
        raise MetricsError(f"length mismatch: {len(true)} vs {len(pred)}")
    if not true:
        raise MetricsError("empty label lists")
    return sum(t == p for t, p in zip(true, pred)) / len(true)


def macro_f1(y_true: Sequence, y_pred: Sequence) -> float:
    """Unweighted mean of per-class F1 over all 3 polarity classes.

    A class with zero true and zero predicted instances contributes F1 = 0;
    this is the averaging rule consistent with a majority predictor at
    fraction p scoring macro F1 (2p/(1+p))/3.
    """
    true = _as_polarity_list(y_true)
    pred = _as_polarity_list(y_pred)
    if len(true) != len(pred):
        raise MetricsError(f"length mismatch: {len(true)} vs {len(pred)}")
    if not true:
        raise MetricsError("empty label lists")
    f1s = []
    for cls in POLARITIES:
        tp = sum(t == cls and p == cls for t, p in zip(true, pred))
        fp = sum(t != cls and p == cls for t, p in zip(true, pred))
        fn = sum(t == cls and p != cls for t, p in zip(true, pred))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / len(f1s)


@dataclass
class EvalReport:
    """Percent-scaled scores plus optional segment breakdowns."""

    r_s: float = 0.0
    r: float = 0.0
    mif1: float = 0.0
    maf1: float = 0.0
    n_samples: int = 0
    degenerate_r_s: bool = False
    degenerate_r: bool = False
    n_failures: int = 0
    per_belief: dict[str, "EvalReport"] = field(default_factory=dict)
    lurkers: "EvalReport | None" = None
    unseen: "EvalReport | None" = None

    def to_dict(self) -> dict:
        out = {
            "r_s": round(self.r_s, 2),
            "r": round(self.r, 2),
            "mif1": round(self.mif1, 2),
            "maf1": round(self.maf1, 2),
            "n_samples": self.n_samples,
            "degenerate_r_s": self.degenerate_r_s,
            "degenerate_r": self.degenerate_r,
        }
        if self.n_failures:
            out["n_failures"] = self.n_failures
        if self.per_belief:
            out["per_belief"] = {b: seg.to_dict() for b, seg in sorted(self.per_belief.items())}
        if self.lurkers is not None:
            out["lurkers"] = self.lurkers.to_dict()
        if self.unseen is not None:
            out["unseen"] = self.unseen.to_dict()
        return out


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
        newline="\n",
    )


Prediction = tuple[Polarity, int]


def _core_report(
    predictions: Sequence[Prediction], gold: Sequence[Prediction], n_failures: int = 0
) -> EvalReport:
    if len(predictions) != len(gold):
        raise MetricsError(f"misaligned predictions: {len(predictions)} vs {len(gold)}")
    if not predictions:
        return EvalReport(
            n_samples=0, degenerate_r_s=True, degenerate_r=True, n_failures=n_failures
        )
    pred_signed = [signed_intensity(p, i) for p, i in predictions]
    gold_signed = [signed_intensity(p, i) for p, i in gold]
    pred_pol = [p for p, _ in predictions]
    gold_pol = [p for p, _ in gold]
    if len(predictions) >= 2:
        rs = spearman(pred_signed, gold_signed)
        rp = pearson(pred_signed, gold_signed)
    else:
        rs = rp = CorrResult(0.0, degenerate=True)
    return EvalReport(
        r_s=100.0 * rs.statistic,
        r=100.0 * rp.statistic,
        mif1=100.0 * micro_f1(gold_pol, pred_pol),
        maf1=100.0 * macro_f1(gold_pol, pred_pol),
        n_samples=len(predictions),
        degenerate_r_s=rs.degenerate,
        degenerate_r=rp.degenerate,
        n_failures=n_failures,
    )


def evaluate(
    predictions: Sequence[Prediction],
    gold: Sequence[Prediction],
    samples: "Sequence[ResponseRecord] | None" = None,
    history_lengths: Mapping[str, int] | None = None,
    lurker_threshold: int = 50,
    train_user_ids: "set[str] | None" = None,
    beliefs_by_user: Mapping[str, Sequence[str]] | None = None,
    n_failures: int = 0,
) -> EvalReport:
    """Score predictions against gold (polarity, intensity) pairs.

    Intensity correlations are computed on signed intensity: the predicted
    polarity's sign times the predicted magnitude, against the gold signed
    value. Passing ``samples`` (aligned ResponseRecords) unlocks optional
    breakdowns: lurker subset (needs ``history_lengths``), unseen users
    (needs ``train_user_ids``), per-belief segments (needs
    ``beliefs_by_user``; a sample counts toward every belief its responder
    holds).
    """
    report = _core_report(predictions, gold, n_failures=n_failures)
    if samples is None:
        return report
    if len(samples) != len(predictions):
        raise MetricsError(f"misaligned samples: {len(samples)} vs {len(predictions)}")

    def sub(indices: list[int]) -> EvalReport:
        return _core_report([predictions[i] for i in indices], [gold[i] for i in indices])

    if history_lengths is not None:
        idx = [
            i
            for i, s in enumerate(samples)
            if history_lengths.get(s.user_id, 0) < lurker_threshold
        ]
        report.lurkers = sub(idx)
    if train_user_ids is not None:
        idx = [i for i, s in enumerate(samples) if s.user_id not in train_user_ids]
        report.unseen = sub(idx)
    if beliefs_by_user is not None:
        segments: dict[str, list[int]] = {}
        for i, s in enumerate(samples):
            for belief in beliefs_by_user.get(s.user_id, ()):
                segments.setdefault(belief, []).append(i)
        report.per_belief = {b: sub(idx) for b, idx in segments.items()}
    return report
