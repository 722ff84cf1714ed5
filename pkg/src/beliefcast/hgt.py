"""Heterogeneous graph transformer propagation with an explicit gradient
contract.

Per layer, for each target node t with incoming typed edges (s, e, t) and
d_k = dim/heads, head i:

    k_i(s) = K-lin_{kind(s),i}(H[s])          q_i(t) = Q-lin_{kind(t),i}(H[t])
    score_i(s,e,t) = (k_i(s)^T W_att[e,i] q_i(t)) * mu[e] / sqrt(d_k)
    weights        = softmax over all incoming edges of t, per head
    msg_i(s,e,t)   = W_msg[e,i] V-lin_{kind(s),i}(H[s])
    h~(t)          = concat_i sum_edges weights * msg
    H'(t)          = A-lin_{kind(t)}(act(dropout(h~(t)))) + H[t]

Targets with zero in-degree pass through exactly. In eval mode, per-target
float reductions order contributions by content before summing, so the
forward output is a function of the edge multiset only and relabeling node
ids permutes outputs bitwise-exactly; train mode sums in the precomputed
fixed edge order (deterministic given the build, cheaper).

The prediction head concatenates a pair's final user and media vectors and
maps 2d -> d -> 7 logits (3 polarity + 4 intensity) through one shared
hidden layer.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import HeteroGraph


class HgtError(ValueError):
    pass


# (name, source kind, target kind); reverse types exist for every relation
EDGE_TYPES = (
    ("follows", "user", "user"),
    ("followed_by", "user", "user"),
    ("interacts", "user", "media"),
    ("interacted_by", "media", "user"),
    ("believes", "user", "belief"),
    ("believed_by", "belief", "user"),
)


@dataclass(frozen=True)
class HgtConfig:
    layers: int = 3
    heads: int = 4
    dim: int = 128
    dropout: float = 0.2
    activation: str = "relu"
    intensity_classes: int = 4
    polarity_classes: int = 3

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise HgtError(f"dim {self.dim} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise HgtError("dropout must be in [0, 1)")
        if self.activation not in ("relu", "tanh"):
            raise HgtError(f"unknown activation {self.activation!r}")
        if self.layers < 0:
            raise HgtError("layers must be >= 0")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def n_classes(self) -> int:
        return self.polarity_classes + self.intensity_classes

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "heads": self.heads,
            "dim": self.dim,
            "dropout": self.dropout,
            "activation": self.activation,
            "intensity_classes": self.intensity_classes,
            "polarity_classes": self.polarity_classes,
        }


@dataclass(frozen=True)
class GraphSchema:
    """Node kinds and typed relations present in a graph build."""

    kinds: tuple[str, ...]
    edge_types: tuple[tuple[str, str, str], ...]

    @staticmethod
    def from_graph(graph: HeteroGraph) -> "GraphSchema":
        kinds = ["user", "media"] + (["belief"] if graph.beliefs else [])
        etypes = tuple(
            (name, sk, dk) for name, sk, dk in EDGE_TYPES if sk in kinds and dk in kinds
        )
        return GraphSchema(kinds=tuple(kinds), edge_types=etypes)

    def to_dict(self) -> dict:
        return {"kinds": list(self.kinds), "edge_types": [list(e) for e in self.edge_types]}

    @staticmethod
    def from_dict(obj: dict) -> "GraphSchema":
        return GraphSchema(
            kinds=tuple(obj["kinds"]),
            edge_types=tuple(tuple(e) for e in obj["edge_types"]),
        )


@dataclass
class SegmentPlan:
    """Precomputed sort-by-group permutation for one fixed index array."""

    order: np.ndarray
    groups: np.ndarray  # group id per segment
    starts: np.ndarray  # reduceat starts into the ordered array

    @staticmethod
    def for_indices(idx: np.ndarray) -> "SegmentPlan":
        order = np.argsort(idx, kind="stable")
        g = idx[order]
        starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]]) if len(g) else np.empty(0, np.int64)
        return SegmentPlan(order=order, groups=g[starts] if len(g) else g, starts=starts)


@dataclass
class CompiledGraph:
    """Kind-local node orderings, integer edge arrays, and reusable scatter
    plans (edge indices never change, so their sorts are computed once)."""

    schema: GraphSchema
    nodes: dict[str, tuple[str, ...]]
    index: dict[str, dict[str, int]]
    edges: dict[str, tuple[np.ndarray, np.ndarray]]  # etype -> (src_idx, dst_idx)
    plans: dict[str, SegmentPlan]  # "etype.src" / "etype.dst" / "kind.all_dst"
    all_dst: dict[str, np.ndarray]  # per dst kind: concatenated dst indices


def compile_graph(graph: HeteroGraph) -> CompiledGraph:
    schema = GraphSchema.from_graph(graph)
    nodes = {"user": graph.users, "media": graph.media}
    if graph.beliefs:
        nodes["belief"] = graph.beliefs
    index = {kind: {nid: i for i, nid in enumerate(ids)} for kind, ids in nodes.items()}

    def idx_arrays(pairs, src_kind, dst_kind):
        src = np.array([index[src_kind][a] for a, _ in pairs], dtype=np.int64)
        dst = np.array([index[dst_kind][b] for _, b in pairs], dtype=np.int64)
        return src, dst

    edges: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    edges["follows"] = idx_arrays(graph.follow, "user", "user")
    edges["followed_by"] = idx_arrays([(d, s) for s, d in graph.follow], "user", "user")
    edges["interacts"] = idx_arrays(graph.interact, "user", "media")
    edges["interacted_by"] = idx_arrays([(m, u) for u, m in graph.interact], "media", "user")
    if graph.beliefs:
        edges["believes"] = idx_arrays(graph.belief_edges, "user", "belief")
        edges["believed_by"] = idx_arrays(
            [(b, u) for u, b in graph.belief_edges], "belief", "user"
        )

    plans: dict[str, SegmentPlan] = {}
    all_dst: dict[str, np.ndarray] = {}
    for etype, (src_idx, dst_idx) in edges.items():
        plans[f"{etype}.src"] = SegmentPlan.for_indices(src_idx)
        plans[f"{etype}.dst"] = SegmentPlan.for_indices(dst_idx)
    for kind in schema.kinds:
        parts = [
            edges[etype][1]
            for etype, _, dkind in schema.edge_types
            if dkind == kind and etype in edges and len(edges[etype][1])
        ]
        concat = np.concatenate(parts) if parts else np.empty(0, np.int64)
        all_dst[kind] = concat
        plans[f"{kind}.all_dst"] = SegmentPlan.for_indices(concat)
    return CompiledGraph(
        schema=schema, nodes=nodes, index=index, edges=edges, plans=plans, all_dst=all_dst
    )


# ---------------------------------------------------------------------------
# Parameters


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    config: HgtConfig, schema: GraphSchema, seed: int = 0
) -> dict[str, np.ndarray]:
    """Xavier-uniform linear maps and attention/message matrices, biases 0,
    all meta-relation priors mu = 1.0; deterministic per seed."""
    rng = np.random.default_rng(seed)
    d, h, dk = config.dim, config.heads, config.head_dim
    params: dict[str, np.ndarray] = {}
    for layer in range(config.layers):
        for kind in schema.kinds:
            for name in ("k", "q", "v", "a"):
                params[f"layer{layer}.{kind}.{name}_w"] = _xavier(rng, d, d, (d, d))
                params[f"layer{layer}.{kind}.{name}_b"] = np.zeros(d)
        for etype, _, _ in schema.edge_types:
            params[f"layer{layer}.{etype}.att"] = _xavier(rng, dk, dk, (h, dk, dk))
            params[f"layer{layer}.{etype}.msg"] = _xavier(rng, dk, dk, (h, dk, dk))
            params[f"layer{layer}.{etype}.mu"] = np.array(1.0)
    params["head.w1"] = _xavier(rng, d, 2 * d, (d, 2 * d))
    params["head.b1"] = np.zeros(d)
    params["head.w2"] = _xavier(rng, config.n_classes, d, (config.n_classes, d))
    params["head.b2"] = np.zeros(config.n_classes)
    return params


# ---------------------------------------------------------------------------
# Canonical reductions


def _grouped_sum(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    """Per-group row sums with contributions in content-derived order.

    Within each group, rows are ordered by their raw bytes before summing,
    so every sum is a function of the contribution multiset alone. That is
    what exact relabel-equivariance requires: float addition is not
    associative, and scatter order would otherwise leak the node labeling.
    (Rows with identical bytes are interchangeable, so ties are harmless.)
    """
    flat = np.ascontiguousarray(values.reshape(len(groups), -1))
    out = np.zeros((n_groups, flat.shape[1]), dtype=values.dtype)
    if len(groups) == 0:
        return out.reshape((n_groups,) + values.shape[1:])
    content = flat.view(np.dtype((np.void, flat.shape[1] * flat.itemsize))).ravel()
    order = np.lexsort((content, groups))
    g = groups[order]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    out[g[starts]] = np.add.reduceat(flat[order], starts, axis=0)
    return out.reshape((n_groups,) + values.shape[1:])


def _segment_max(values: np.ndarray, plan: SegmentPlan, out: np.ndarray) -> np.ndarray:
    """Exact per-group column max written into ``out`` (max is order-free)."""
    if len(plan.order) == 0:
        return out
    out[plan.groups] = np.maximum.reduceat(values[plan.order], plan.starts, axis=0)
    return out


def _planned_sum(values: np.ndarray, plan: SegmentPlan, n_groups: int) -> np.ndarray:
    """Per-group sums in the plan's fixed edge order (deterministic, fast)."""
    flat = values.reshape(len(plan.order), -1)
    out = np.zeros((n_groups, flat.shape[1]), dtype=values.dtype)
    if len(plan.order):
        out[plan.groups] = np.add.reduceat(flat[plan.order], plan.starts, axis=0)
    return out.reshape((n_groups,) + values.shape[1:])


def _scatter_add(
    target: np.ndarray, idx: np.ndarray, values: np.ndarray, plan: SegmentPlan | None = None
) -> None:
    """target[idx] += values via a grouped reduceat (np.add.at is too slow
    for per-edge arrays, and the gradient path needs no canonical order)."""
    if len(idx) == 0:
        return
    if plan is None:
        plan = SegmentPlan.for_indices(idx)
    flat = values.reshape(len(idx), -1)[plan.order]
    sums = np.add.reduceat(flat, plan.starts, axis=0)
    target.reshape(target.shape[0], -1)[plan.groups] += sums


def _per_head(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """out[e,h,l] = sum_k a[e,h,k] w[h,k,l] as a batched matmul (BLAS path;
    einsum would route through the slow generic kernel)."""
    return np.matmul(a.transpose(1, 0, 2), w).transpose(1, 0, 2)


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    return np.tanh(x)


def _act_grad(pre: np.ndarray, act_out: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0.0).astype(pre.dtype)
    return 1.0 - act_out * act_out


# ---------------------------------------------------------------------------
# Forward


def hgt_layer_forward(
    H: dict[str, np.ndarray],
    cgraph: CompiledGraph,
    params: dict[str, np.ndarray],
    layer: int,
    config: HgtConfig,
    mode: str = "eval",
    dropout_rng: np.random.Generator | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """One propagation layer; returns (H_next, trace) with every intermediate
    needed for an exact backward pass."""
    if mode not in ("train", "eval"):
        raise HgtError(f"unknown mode {mode!r}")
    # non-finite values are caught by the explicit fail-fast check below;
    # keep numpy from warning about them mid-flight
    with np.errstate(invalid="ignore", over="ignore"):
        return _layer_forward_body(H, cgraph, params, layer, config, mode, dropout_rng)


def _layer_forward_body(H, cgraph, params, layer, config, mode, dropout_rng):
    d, h, dk = config.dim, config.heads, config.head_dim
    schema = cgraph.schema
    sqrt_dk = np.sqrt(float(dk))

    kqv: dict[str, dict[str, np.ndarray]] = {}
    for kind in schema.kinds:
        n = len(cgraph.nodes[kind])
        Hk = H[kind]
        if Hk.shape != (n, d):
            raise HgtError(f"H[{kind}] has shape {Hk.shape}, expected {(n, d)}")
        kqv[kind] = {
            "k": (Hk @ params[f"layer{layer}.{kind}.k_w"].T + params[f"layer{layer}.{kind}.k_b"]),
            "q": (Hk @ params[f"layer{layer}.{kind}.q_w"].T + params[f"layer{layer}.{kind}.q_b"]),
            "v": (Hk @ params[f"layer{layer}.{kind}.v_w"].T + params[f"layer{layer}.{kind}.v_b"]),
        }

    # per-edge scores and messages, grouped by target kind
    by_dst: dict[str, list[dict]] = {kind: [] for kind in schema.kinds}
    for etype, sk, dkind in schema.edge_types:
        src_idx, dst_idx = cgraph.edges.get(etype, (np.empty(0, np.int64),) * 2)
        if len(src_idx) == 0:
            continue
        k_e = kqv[sk]["k"][src_idx].reshape(-1, h, dk)
        q_e = kqv[dkind]["q"][dst_idx].reshape(-1, h, dk)
        v_e = kqv[sk]["v"][src_idx].reshape(-1, h, dk)
        w_att = params[f"layer{layer}.{etype}.att"]
        w_msg = params[f"layer{layer}.{etype}.msg"]
        mu = params[f"layer{layer}.{etype}.mu"]
        kA = _per_head(k_e, w_att)
        base = (kA * q_e).sum(axis=2)
        score = base * (float(mu) / sqrt_dk)
        msg = _per_head(v_e, w_msg.transpose(0, 2, 1))
        by_dst[dkind].append(
            {
                "etype": etype,
                "src_kind": sk,
                "src_idx": src_idx,
                "dst_idx": dst_idx,
                "k_e": k_e,
                "q_e": q_e,
                "v_e": v_e,
                "kA": kA,
                "base": base,
                "score": score,
                "msg": msg,
            }
        )

    # eval mode sums per-target contributions in content-canonical order
    # (exact relabel-equivariance); train mode uses the precomputed fixed
    # edge order, which is deterministic given the build and much cheaper.
    reduce_sum = _grouped_sum if mode == "eval" else None

    H_next: dict[str, np.ndarray] = {}
    trace: dict = {"layer": layer, "H_in": H, "kqv": kqv, "dst": {}}
    for kind in schema.kinds:
        blocks = by_dst[kind]
        n = len(cgraph.nodes[kind])
        if not blocks:
            H_next[kind] = H[kind]
            continue
        all_dst = cgraph.all_dst[kind]
        plan = cgraph.plans[f"{kind}.all_dst"]
        all_score = np.concatenate([b["score"] for b in blocks])
        all_msg = np.concatenate([b["msg"] for b in blocks])

        score_max = _segment_max(all_score, plan, np.full((n, h), -np.inf))
        ex = np.exp(all_score - score_max[all_dst])
        if reduce_sum is not None:
            denom = reduce_sum(ex, all_dst, n)
        else:
            denom = _planned_sum(ex, plan, n)
        att = ex / denom[all_dst]
        weighted = att[:, :, None] * all_msg
        if reduce_sum is not None:
            agg = reduce_sum(weighted, all_dst, n)
        else:
            agg = _planned_sum(weighted, plan, n)
        h_tilde = agg.reshape(n, d)

        has_in = np.zeros(n, dtype=bool)
        has_in[all_dst] = True
        if mode == "train" and config.dropout > 0.0:
            if dropout_rng is None:
                raise HgtError("train mode with dropout needs a dropout_rng")
            keep = dropout_rng.random((n, d)) >= config.dropout
            drop_mask = keep.astype(h_tilde.dtype) / (1.0 - config.dropout)
        else:
            drop_mask = None
        pre = h_tilde if drop_mask is None else h_tilde * drop_mask
        act_out = _act(pre, config.activation)
        out_nr = act_out @ params[f"layer{layer}.{kind}.a_w"].T + params[f"layer{layer}.{kind}.a_b"]
        H_next[kind] = np.where(has_in[:, None], out_nr + H[kind], H[kind])
        if not np.all(np.isfinite(H_next[kind])):
            raise HgtError(f"non-finite values in layer {layer} ({kind} nodes)")
        trace["dst"][kind] = {
            "blocks": blocks,
            "all_dst": all_dst,
            "att": att,
            "msg": all_msg,
            "h_tilde": h_tilde,
            "drop_mask": drop_mask,
            "pre": pre,
            "act": act_out,
            "has_in": has_in,
        }
    return H_next, trace


def _initial_arrays(H0, cgraph: CompiledGraph) -> dict[str, np.ndarray]:
    if isinstance(H0, dict):
        return {k: np.asarray(v) for k, v in H0.items()}
    # an EmbeddingTable: stack vectors in compiled node order, as float64
    return {
        kind: np.stack([H0.get(kind, node_id) for node_id in ids]).astype(np.float64)
        for kind, ids in cgraph.nodes.items()
    }


def _pair_indices(
    cgraph: CompiledGraph, pairs: Sequence[tuple[str, str]]
) -> tuple[np.ndarray, np.ndarray]:
    try:
        u_idx = np.array([cgraph.index["user"][u] for u, _ in pairs], dtype=np.int64)
        m_idx = np.array([cgraph.index["media"][m] for _, m in pairs], dtype=np.int64)
    except KeyError as exc:
        raise HgtError(f"pair references missing node {exc}") from exc
    return u_idx, m_idx


def model_forward(
    graph: HeteroGraph | CompiledGraph,
    H0,
    params: dict[str, np.ndarray],
    config: HgtConfig,
    pairs: Sequence[tuple[str, str]],
    mode: str = "eval",
    dropout_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Run all layers plus the prediction head over (user, news) pairs.

    ``H0`` is either a dict of per-kind arrays or an EmbeddingTable.
    Returns (polarity_logits, intensity_logits, trace). Pairs are
    independent: permuting them permutes the logit rows identically.
    """
    cgraph = graph if isinstance(graph, CompiledGraph) else compile_graph(graph)
    H = _initial_arrays(H0, cgraph)
    layer_traces = []
    for layer in range(config.layers):
        H, tr = hgt_layer_forward(H, cgraph, params, layer, config, mode, dropout_rng)
        layer_traces.append(tr)

    u_idx, m_idx = _pair_indices(cgraph, pairs)
    X = np.concatenate([H["user"][u_idx], H["media"][m_idx]], axis=1)
    pre1 = X @ params["head.w1"].T + params["head.b1"]
    hid = _act(pre1, config.activation)
    logits = hid @ params["head.w2"].T + params["head.b2"]
    pol = logits[:, : config.polarity_classes]
    inten = logits[:, config.polarity_classes :]
    trace = {
        "cgraph": cgraph,
        "config": config,
        "params": params,
        "layers": layer_traces,
        "H_final": H,
        "head": {"X": X, "pre1": pre1, "hid": hid, "u_idx": u_idx, "m_idx": m_idx},
    }
    return pol, inten, trace


# ---------------------------------------------------------------------------
# Backward


def backward(trace: dict, loss_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for every parameter.

    ``loss_grad`` is d(loss)/d(logits), shape (n_pairs, 3 + 4). Parameters
    the loss does not depend on get exactly-zero gradients.
    """
    config: HgtConfig = trace["config"]
    cgraph: CompiledGraph = trace["cgraph"]
    head = trace["head"]
    d, h, dk = config.dim, config.heads, config.head_dim
    sqrt_dk = np.sqrt(float(dk))
    n_pairs = head["X"].shape[0]
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape != (n_pairs, config.n_classes):
        raise HgtError(
            f"loss_grad shape {loss_grad.shape} does not match {(n_pairs, config.n_classes)}"
        )

    grads: dict[str, np.ndarray] = {}

    # head
    w1 = _p(trace, "head.w1")
    w2 = _p(trace, "head.w2")
    grads["head.w2"] = loss_grad.T @ head["hid"]
    grads["head.b2"] = loss_grad.sum(axis=0)
    dhid = loss_grad @ w2
    dpre1 = dhid * _act_grad(head["pre1"], head["hid"], config.activation)
    grads["head.w1"] = dpre1.T @ head["X"]
    grads["head.b1"] = dpre1.sum(axis=0)
    dX = dpre1 @ w1

    dH = {kind: np.zeros_like(arr) for kind, arr in trace["H_final"].items()}
    _scatter_add(dH["user"], head["u_idx"], dX[:, :d])
    _scatter_add(dH["media"], head["m_idx"], dX[:, d:])

    for layer_trace in reversed(trace["layers"]):
        layer = layer_trace["layer"]
        H_in = layer_trace["H_in"]
        kqv = layer_trace["kqv"]
        dkqv = {
            kind: {name: np.zeros_like(v) for name, v in parts.items()}
            for kind, parts in kqv.items()
        }
        dH_prev = {kind: dH[kind].copy() for kind in dH}

        for kind, dst_tr in layer_trace["dst"].items():
            has_in = dst_tr["has_in"]
            dout = dH[kind] * has_in[:, None]
            act_out = dst_tr["act"]
            a_w = _p_layer(trace, layer, kind, "a_w")
            _acc(grads, f"layer{layer}.{kind}.a_w", dout.T @ act_out)
            _acc(grads, f"layer{layer}.{kind}.a_b", dout.sum(axis=0))
            dact = dout @ a_w
            dpre = dact * _act_grad(dst_tr["pre"], act_out, config.activation)
            if dst_tr["drop_mask"] is not None:
                dh_tilde = dpre * dst_tr["drop_mask"]
            else:
                dh_tilde = dpre
            n = dh_tilde.shape[0]
            dagg = dh_tilde.reshape(n, h, dk)

            all_dst = dst_tr["all_dst"]
            att = dst_tr["att"]
            all_msg = dst_tr["msg"]
            dagg_e = dagg[all_dst]
            datt = (dagg_e * all_msg).sum(axis=2)
            dmsg = att[:, :, None] * dagg_e
            att_datt = att * datt
            dot = np.zeros((n, h))
            _scatter_add(dot, all_dst, att_datt, cgraph.plans[f"{kind}.all_dst"])
            dscore = att * (datt - dot[all_dst])

            offset = 0
            for block in dst_tr["blocks"]:
                etype = block["etype"]
                sk = block["src_kind"]
                n_e = len(block["src_idx"])
                dsc = dscore[offset : offset + n_e]
                dmsg_b = dmsg[offset : offset + n_e]
                offset += n_e

                mu = float(_p_layer(trace, layer, etype, "mu"))
                w_att = _p_layer(trace, layer, etype, "att")
                w_msg = _p_layer(trace, layer, etype, "msg")

                _acc(
                    grads,
                    f"layer{layer}.{etype}.mu",
                    np.array(np.sum(dsc * block["base"]) / sqrt_dk),
                )
                dbase = dsc * (mu / sqrt_dk)
                dkA = dbase[:, :, None] * block["q_e"]
                dq_e = dbase[:, :, None] * block["kA"]
                _acc(
                    grads,
                    f"layer{layer}.{etype}.att",
                    np.matmul(block["k_e"].transpose(1, 2, 0), dkA.transpose(1, 0, 2)),
                )
                dk_e = _per_head(dkA, w_att.transpose(0, 2, 1))
                _acc(
                    grads,
                    f"layer{layer}.{etype}.msg",
                    np.matmul(dmsg_b.transpose(1, 2, 0), block["v_e"].transpose(1, 0, 2)),
                )
                dv_e = _per_head(dmsg_b, w_msg)

                src_plan = cgraph.plans[f"{etype}.src"]
                dst_plan = cgraph.plans[f"{etype}.dst"]
                _scatter_add(dkqv[sk]["k"], block["src_idx"], dk_e.reshape(n_e, d), src_plan)
                _scatter_add(dkqv[kind]["q"], block["dst_idx"], dq_e.reshape(n_e, d), dst_plan)
                _scatter_add(dkqv[sk]["v"], block["src_idx"], dv_e.reshape(n_e, d), src_plan)

        for kind in kqv:
            Hk = H_in[kind]
            for name in ("k", "q", "v"):
                dmat = dkqv[kind][name]
                _acc(grads, f"layer{layer}.{kind}.{name}_w", dmat.T @ Hk)
                _acc(grads, f"layer{layer}.{kind}.{name}_b", dmat.sum(axis=0))
                dH_prev[kind] += dmat @ _p_layer(trace, layer, kind, f"{name}_w")
        dH = dH_prev

    # parameters untouched by this graph/loss still get exact zeros
    for name, arr in trace["params"].items():
        if name not in grads:
            grads[name] = np.zeros_like(arr)
    return grads


def _acc(grads: dict[str, np.ndarray], name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


def _p(trace: dict, name: str) -> np.ndarray:
    return trace["params"][name]


def _p_layer(trace: dict, layer: int, part: str, name: str) -> np.ndarray:
    return trace["params"][f"layer{layer}.{part}.{name}"]


# ---------------------------------------------------------------------------
# Gradient checking


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed CE loss over rows and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    loss = float(-np.log(probs[rows, labels]).sum())
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    return loss, grad


def check_gradients(
    graph: HeteroGraph | CompiledGraph,
    H0,
    params: dict[str, np.ndarray],
    config: HgtConfig,
    pairs: Sequence[tuple[str, str]],
    eps: float = 1e-4,
    labels: tuple[np.ndarray, np.ndarray] | None = None,
    loss_grad: np.ndarray | None = None,
) -> tuple[float, str]:
    """Compare backward() against central finite differences.

    ``H0`` is a dict of per-kind arrays or an EmbeddingTable. Returns
    (max relative error, name of the worst parameter). Relative error is
    |a-b| / max(|a|, |b|) with 0/0 -> 0 and an absolute floor of 1e-9
    below which a difference counts as zero (central-difference truncation
    noise). Requires dropout disabled.
    """
    if eps <= 0:
        raise HgtError("eps must be > 0")
    if config.dropout != 0.0:
        raise HgtError("gradient checking requires dropout 0")
    cgraph = graph if isinstance(graph, CompiledGraph) else compile_graph(graph)
    H0 = _initial_arrays(H0, cgraph)
    if labels is None and loss_grad is None:
        # deterministic default labels derived from pair position
        labels = (
            np.array([i % config.polarity_classes for i in range(len(pairs))]),
            np.array([i % config.intensity_classes for i in range(len(pairs))]),
        )

    def loss_of(p: dict[str, np.ndarray]) -> float:
        pol, inten, _ = model_forward(cgraph, H0, p, config, pairs, mode="eval")
        if loss_grad is not None:
            return float(np.sum(loss_grad * np.concatenate([pol, inten], axis=1)))
        lp, _ = cross_entropy_grad(pol, labels[0])
        li, _ = cross_entropy_grad(inten, labels[1])
        return lp + li

    pol, inten, trace = model_forward(cgraph, H0, params, config, pairs, mode="eval")
    if loss_grad is not None:
        grad_logits = np.asarray(loss_grad, dtype=np.float64)
    else:
        _, gp = cross_entropy_grad(pol, labels[0])
        _, gi = cross_entropy_grad(inten, labels[1])
        grad_logits = np.concatenate([gp, gi], axis=1)
    analytic = backward(trace, grad_logits)

    worst = 0.0
    worst_name = ""
    for name in sorted(params):
        base = params[name]
        flat = base.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_of(params)
            flat[i] = orig - eps
            down = loss_of(params)
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * eps)
        a = analytic[name].reshape(-1)
        for i in range(flat.size):
            diff = abs(a[i] - fd[i])
            if diff < 1e-9:
                continue
            scale = max(abs(a[i]), abs(fd[i]))
            rel = 0.0 if scale == 0.0 else diff / scale
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{i}]"
    return worst, worst_name


# ---------------------------------------------------------------------------
# Checkpoint format: magic "SSCK", u32 version, u32 config length + JSON,
# u32 tensor count, then per tensor: u16 name length, name, u8 ndim,
# ndim x u32 dims, f32 LE data.

_MAGIC = b"SSCK"
_VERSION = 1


def save_checkpoint(
    params: dict[str, np.ndarray], config: HgtConfig, schema: GraphSchema, path
) -> None:
    meta = json.dumps(
        {"config": config.to_dict(), "schema": schema.to_dict()},
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = params[name]
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], HgtConfig, GraphSchema]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise HgtError(f"{path}: bad magic, not a checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise HgtError(f"{path}: unsupported version {version}")
    (meta_len,) = struct.unpack_from("<I", data, 8)
    offset = 12
    meta = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    offset += meta_len
    config = HgtConfig(**meta["config"])
    schema = GraphSchema.from_dict(meta["schema"])
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset) if ndim else ()
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        params[name] = arr.astype(np.float64).reshape(shape)
    if offset != len(data):
        raise HgtError(f"{path}: trailing bytes")
    return params, config, schema
