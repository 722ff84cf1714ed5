"""Supervised training: RAdam, linear warmup/decay, joint cross-entropy
over the polarity and intensity heads, early stopping on the dev split.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .data import POLARITIES, Polarity
from .embed import EmbeddingTable
from .graph import HeteroGraph
from .hgt import (
    CompiledGraph,
    HgtConfig,
    compile_graph,
    cross_entropy_grad,
    init_params,
    model_forward,
)
from .metrics import EvalReport, evaluate

if TYPE_CHECKING:
    from .data import Dataset, ResponseRecord


class TrainError(ValueError):
    pass


POLARITY_INDEX = {p: i for i, p in enumerate(POLARITIES)}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    weight_decay: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    epochs: int = 1000
    patience: int = 300
    warmup_ratio: float = 0.06
    batch_size: int = 1  # 0 = accumulate over the whole epoch per step
    seed: int = 42
    task: str = "joint"  # joint | polarity | intensity

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise TrainError("learning_rate and epsilon must be positive")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise TrainError("warmup_ratio must be in [0, 1)")
        if self.epochs < 1 or self.patience < 0 or self.batch_size < 0:
            raise TrainError("epochs >= 1, patience >= 0, batch_size >= 0 required")
        if self.task not in ("joint", "polarity", "intensity"):
            raise TrainError(f"unknown task {self.task!r}")


def cross_entropy(logits: Sequence[float], label_index: int) -> float:
    """-log softmax(logits)[label]."""
    arr = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise TrainError("logits must be finite")
    if not 0 <= label_index < arr.size:
        raise TrainError(f"label index {label_index} out of range for {arr.size} classes")
    shifted = arr - arr.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label_index])


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)


def radam_step(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    config: TrainConfig,
    lr_t: float,
    rectify: bool = True,
) -> dict[str, np.ndarray]:
    """One rectified-Adam update; returns new parameter arrays.

    The variance rectifier r_t multiplies the adaptive step only once the
    approximated SMA length rho_t exceeds 4; earlier steps fall back to
    bias-corrected momentum. Weight decay is decoupled: an extra
    -lr_t * wd * theta using the pre-step parameters.
    """
    beta1, beta2 = config.betas
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    new_params: dict[str, np.ndarray] = {}
    for name, theta in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainError(f"non-finite gradient for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
            state.t[name] = 0
        state.t[name] += 1
        t = state.t[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = state.m[name] / (1.0 - beta1**t)
        rho_t = rho_inf - 2.0 * t * beta2**t / (1.0 - beta2**t)
        if rectify and rho_t > 4.0:
            v_hat = np.sqrt(state.v[name] / (1.0 - beta2**t))
            r_t = math.sqrt(
                ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
            )
            update = lr_t * r_t * m_hat / (v_hat + config.epsilon)
        else:
            update = lr_t * m_hat
        new_params[name] = theta - update - lr_t * config.weight_decay * theta
    return new_params


def lr_schedule(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear 0 -> lr over ceil(warmup_ratio * total) steps, then lr -> 0."""
    if not 0 <= step <= total_steps:
        raise TrainError(f"step {step} outside 0..{total_steps}")
    if total_steps == 0:
        return 0.0
    warmup = math.ceil(config.warmup_ratio * total_steps)
    if warmup > 0 and step < warmup:
        return config.learning_rate * step / warmup
    decay_span = max(total_steps - warmup, 1)
    return config.learning_rate * (total_steps - step) / decay_span


def table_to_arrays(table: EmbeddingTable, cgraph: CompiledGraph) -> dict[str, np.ndarray]:
    """Stack table vectors in compiled node order, as float64."""
    from .hgt import _initial_arrays

    return _initial_arrays(table, cgraph)


def predict(
    graph: HeteroGraph | CompiledGraph,
    H0: dict[str, np.ndarray],
    params: dict[str, np.ndarray],
    config: HgtConfig,
    pairs: Sequence[tuple[str, str]],
) -> list[tuple[Polarity, int]]:
    """Argmax labels for each (user, news) pair in eval mode."""
    if not pairs:
        return []
    pol_logits, int_logits, _ = model_forward(graph, H0, params, config, pairs, mode="eval")
    pol_idx = pol_logits.argmax(axis=1)
    int_idx = int_logits.argmax(axis=1)
    return [(POLARITIES[p], int(i)) for p, i in zip(pol_idx, int_idx)]


def _labels(samples: "Sequence[ResponseRecord]") -> tuple[np.ndarray, np.ndarray]:
    pol = np.array([POLARITY_INDEX[s.polarity] for s in samples], dtype=np.int64)
    inten = np.array([s.intensity for s in samples], dtype=np.int64)
    return pol, inten


def _eval_split(cgraph, H0, params, hgt_config, samples) -> EvalReport:
    pairs = [(s.user_id, s.news_id) for s in samples]
    preds = predict(cgraph, H0, params, hgt_config, pairs)
    gold = [(s.polarity, s.intensity) for s in samples]
    return evaluate(preds, gold)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_r_s: float
    dev_r: float
    dev_mif1: float
    dev_maf1: float
    lr: float


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]  # best-dev checkpoint
    final_params: dict[str, np.ndarray]  # parameters after the last epoch run
    history: list[EpochStats]
    best_epoch: int
    best_score: float
    hgt_config: HgtConfig
    schema: "object"


def _selection_score(report: EvalReport, task: str) -> float:
    if task == "polarity":
        return report.maf1
    if task == "intensity":
        return report.r_s
    return report.maf1 + report.r_s


def train(
    graph: HeteroGraph,
    table: EmbeddingTable,
    dataset: "Dataset",
    hgt_config: HgtConfig | None = None,
    train_config: TrainConfig | None = None,
    params: dict[str, np.ndarray] | None = None,
) -> TrainResult:
    """Full-graph training; a pure function of (inputs, seed).

    Each epoch walks the train pairs in a seed-shuffled order, taking one
    gradient step every batch_size samples over a fresh full-graph forward.
    The dev split is scored each epoch (macro-F1 for polarity, Spearman for
    intensity, their sum for the joint task) and training stops once the
    score has not improved for `patience` epochs. Returns the best-dev
    checkpoint.
    """
    hgt_config = hgt_config or HgtConfig()
    train_config = train_config or TrainConfig()
    cgraph = compile_graph(graph)
    train_samples = dataset.samples("train")
    if not train_samples:
        raise TrainError("empty train split")
    dev_samples = dataset.samples("dev")

    if params is None:
        params = init_params(hgt_config, cgraph.schema, seed=train_config.seed)
    H0 = table_to_arrays(table, cgraph)
    state = OptimizerState()
    shuffle_rng = np.random.default_rng([train_config.seed, 1])
    dropout_rng = np.random.default_rng([train_config.seed, 2])

    n = len(train_samples)
    batch = train_config.batch_size if train_config.batch_size > 0 else n
    steps_per_epoch = math.ceil(n / batch)
    total_steps = train_config.epochs * steps_per_epoch

    pol_labels, int_labels = _labels(train_samples)
    all_pairs = [(s.user_id, s.news_id) for s in train_samples]

    history: list[EpochStats] = []
    best_score = -np.inf
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    global_step = 0
    lr_t = 0.0

    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            pairs = [all_pairs[i] for i in idx]
            pol_logits, int_logits, trace = model_forward(
                cgraph, H0, params, hgt_config, pairs, mode="train", dropout_rng=dropout_rng
            )
            loss_p, grad_p = cross_entropy_grad(pol_logits, pol_labels[idx])
            loss_i, grad_i = cross_entropy_grad(int_logits, int_labels[idx])
            if train_config.task == "polarity":
                loss, grad_i = loss_p, np.zeros_like(grad_i)
            elif train_config.task == "intensity":
                loss, grad_p = loss_i, np.zeros_like(grad_p)
            else:
                loss = loss_p + loss_i
            if not np.isfinite(loss):
                raise TrainError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss
            grads = _backward(trace, np.concatenate([grad_p, grad_i], axis=1))
            global_step += 1
            lr_t = lr_schedule(global_step, total_steps, train_config)
            params = radam_step(state, params, grads, train_config, lr_t)

        if dev_samples:
            report = _eval_split(cgraph, H0, params, hgt_config, dev_samples)
            score = _selection_score(report, train_config.task)
        else:
            report = EvalReport(degenerate_r_s=True, degenerate_r=True)
            score = -epoch_loss
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=epoch_loss / n,
                dev_r_s=report.r_s,
                dev_r=report.r,
                dev_mif1=report.mif1,
                dev_maf1=report.maf1,
                lr=lr_t,
            )
        )
        if score > best_score:
            best_score = score
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        if epoch - best_epoch >= train_config.patience:
            break

    return TrainResult(
        params=best_params,
        final_params=params,
        history=history,
        best_epoch=best_epoch,
        best_score=best_score,
        hgt_config=hgt_config,
        schema=cgraph.schema,
    )


def _backward(trace: dict, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    from .hgt import backward

    return backward(trace, grad_logits)


def write_history_csv(history: Sequence[EpochStats], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "dev_r_s", "dev_r", "dev_mif1", "dev_maf1", "lr"])
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    f"{row.train_loss:.6f}",
                    f"{row.dev_r_s:.4f}",
                    f"{row.dev_r:.4f}",
                    f"{row.dev_mif1:.4f}",
                    f"{row.dev_maf1:.4f}",
                    f"{row.lr:.8f}",
                ]
            )
