"""Dual message-passing encoder over heterogeneous molecular graphs.

Per layer, every node aggregates attention-weighted messages from its
incoming edges while every edge aggregates from its source node and the
edges incoming to that source (the reverse edge included). All messages
of a layer are computed from the previous layer's embeddings before any
update applies (synchronous semantics). Readout pools the union of node
and edge embeddings by learned scores.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor, constant
from .hmg import (
    DNODE_FEATURE_DIM,
    FRAGMENT_FEATURE_DIM,
    HMG,
    KNOWLEDGE_NODE_FEATURE_DIM,
    EdgeType,
    NodeType,
)
from .chem.features import ATOM_FEATURE_DIM, BOND_FEATURE_DIM
from .kg import HOP_FEATURE_DIM
from .rng import stream


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 64
    layers: int = 3
    heads: int = 4
    k_pe: int = 8
    leaky_slope: float = 0.01
    pool_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ValueError(f"hidden width {self.d} not divisible by {self.heads} heads")
        if self.layers < 1 or self.heads < 1:
            raise ValueError("layers and heads must be at least 1")
        if not (0.0 < self.pool_ratio <= 1.0):
            raise ValueError("pool_ratio must lie in (0, 1]")

    @property
    def head_dim(self) -> int:
        return self.d // self.heads


@dataclass(frozen=True)
class FeatureSchema:
    node_dims: tuple[tuple[str, int], ...]
    edge_dims: tuple[tuple[str, int], ...]

    @classmethod
    def default(cls, n_rules: int = 8) -> "FeatureSchema":
        return cls(
            node_dims=(
                (NodeType.Atom.value, ATOM_FEATURE_DIM),
                (NodeType.Fragment.value, FRAGMENT_FEATURE_DIM),
                (NodeType.Element.value, KNOWLEDGE_NODE_FEATURE_DIM),
                (NodeType.FunctionalGroup.value, KNOWLEDGE_NODE_FEATURE_DIM),
                (NodeType.DNode.value, DNODE_FEATURE_DIM),
            ),
            edge_dims=(
                (EdgeType.Bond.value, BOND_FEATURE_DIM),
                (EdgeType.Reaction.value, n_rules),
                (EdgeType.Join.value, 1),
                (EdgeType.AE.value, 1),
                (EdgeType.FrFu.value, 1),
                (EdgeType.EE.value, HOP_FEATURE_DIM),
                (EdgeType.FuFu.value, HOP_FEATURE_DIM),
                (EdgeType.EFu.value, HOP_FEATURE_DIM),
                (EdgeType.AD.value, 1),
                (EdgeType.FrD.value, 1),
            ),
        )

    def node_dim(self, node_type: NodeType) -> int:
        return dict(self.node_dims)[node_type.value]

    def edge_dim(self, edge_type: EdgeType) -> int:
        return dict(self.edge_dims)[edge_type.value]


class EncoderState:
    """All learnable parameter groups, seeded uniform in [-1/sqrt(d), 1/sqrt(d)]."""

    def __init__(self, config: EncoderConfig, schema: FeatureSchema | None = None,
                 d_z: int = 32, mp_tasks: int = 1):
        self.config = config
        self.schema = schema or FeatureSchema.default()
        self.d_z = d_z
        self.mp_tasks = mp_tasks
        self.seed = config.seed
        self.params: dict[str, Parameter] = {}
        d, dk = config.d, config.head_dim

        for ntype in NodeType:
            self._new(f"A.{ntype.value}", "A", (self.schema.node_dim(ntype), d))
        for etype in EdgeType:
            self._new(f"B.{etype.value}", "B", (self.schema.edge_dim(etype), d))
        self._new("a0", "init_bias", (d,))
        self._new("b0", "init_bias", (d,))
        self._new("C0", "pe", (config.k_pe, d))
        self._new("c0", "pe", (d,))
        for l in range(config.layers):
            for k in range(config.heads):
                self._new(f"WQ.{l}.{k}", "qkv", (d, dk))
                self._new(f"WK.{l}.{k}", "qkv", (d, dk))
                self._new(f"WV.{l}.{k}", "qkv", (d, dk))
        for ntype in NodeType:
            self._new(f"Wtype_v.{ntype.value}", "type_transform", (dk, dk))
        for etype in EdgeType:
            self._new(f"Wtype_e.{etype.value}", "type_transform", (dk, dk))
        for l in range(config.layers):
            self._new(f"WVout.{l}", "head_out", (d, d))
            self._new(f"WEout.{l}", "head_out", (d, d))
        for l in range(config.layers):
            for ntype in NodeType:
                self._new(f"Wupd_v.{l}.{ntype.value}", "update", (2 * d, d))
            for etype in EdgeType:
                self._new(f"Wupd_e.{l}.{etype.value}", "update", (2 * d, d))
        self._new("pool.w", "pool", (d, 1))
        self._new("proj.W1", "projector", (d, d))
        self._new("proj.b1", "projector", (d,))
        self._new("proj.W2", "projector", (d, d_z))
        self._new("proj.b2", "projector", (d_z,))
        self._init_mp_head()
        self._init_ddi_head()

    def _new(self, name: str, group: str, shape) -> Parameter:
        bound = 1.0 / math.sqrt(self.config.d)
        data = stream(self.seed, "param", name).uniform(-bound, bound, size=shape)
        param = Parameter(data, name=name, group=group)
        self.params[name] = param
        return param

    def _init_mp_head(self):
        d = self.config.d
        self._new("mp.W1", "mp_head", (d, d))
        self._new("mp.b1", "mp_head", (d,))
        self._new("mp.W2", "mp_head", (d, self.mp_tasks))
        self._new("mp.b2", "mp_head", (self.mp_tasks,))

    def _init_ddi_head(self):
        d = self.config.d
        self._new("ddi.W1", "ddi_head", (2 * d, d))
        self._new("ddi.b1", "ddi_head", (d,))
        self._new("ddi.W2", "ddi_head", (d, 1))
        self._new("ddi.b2", "ddi_head", (1,))

    def reinit_mp_head(self, task_count: int, seed: int) -> None:
        """Fresh property head for a fine-tuning task."""
        self.mp_tasks = task_count
        self.seed = seed
        self._init_mp_head()
        self.seed = self.config.seed

    def reinit_ddi_head(self, seed: int) -> None:
        self.seed = seed
        self._init_ddi_head()
        self.seed = self.config.seed

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, param in self.params.items():
            if name not in arrays:
                raise ad.CheckpointError(f"checkpoint missing parameter '{name}'")
            if arrays[name].shape != param.data.shape:
                raise ad.CheckpointError(
                    f"parameter '{name}' shape {arrays[name].shape} != {param.data.shape}"
                )
            param.data = arrays[name].astype(np.float64).copy()
        extra = set(arrays) - set(self.params)
        if extra:
            raise ad.CheckpointError(f"checkpoint has unknown parameters {sorted(extra)}")

    def config_digest(self) -> str:
        c = self.config
        text = "|".join([
            f"d={c.d}", f"layers={c.layers}", f"heads={c.heads}", f"k_pe={c.k_pe}",
            f"slope={c.leaky_slope!r}", f"pool_ratio={c.pool_ratio!r}",
            f"d_z={self.d_z}", f"mp_tasks={self.mp_tasks}",
            "nodes=" + ",".join(f"{k}:{v}" for k, v in self.schema.node_dims),
            "edges=" + ",".join(f"{k}:{v}" for k, v in self.schema.edge_dims),
        ])
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Graph indexing (host-side constants shared by all layers)


@dataclass
class GraphIndex:
    n: int
    m: int
    node_groups: list[tuple[NodeType, np.ndarray]]
    node_inverse: np.ndarray
    edge_groups: list[tuple[EdgeType, np.ndarray]]
    edge_inverse: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    in_mask: np.ndarray  # (n, m): edge e is incoming to node i
    sender_mask: np.ndarray  # (m, 1+m): col 0 = source node, col 1+f = edge f into source
    node_feats: dict[NodeType, np.ndarray]
    node_pes: dict[NodeType, np.ndarray]
    edge_feats: dict[EdgeType, np.ndarray]


def _group_inverse(groups) -> np.ndarray:
    order = np.concatenate([idx for _, idx in groups]) if groups else np.zeros(0, np.intp)
    inverse = np.empty(order.size, dtype=np.intp)
    inverse[order] = np.arange(order.size)
    return inverse


def build_graph_index(hmg: HMG) -> GraphIndex:
    n, m = len(hmg.nodes), len(hmg.edges)
    node_groups = []
    node_feats: dict[NodeType, np.ndarray] = {}
    node_pes: dict[NodeType, np.ndarray] = {}
    for ntype in NodeType:
        idx = np.array([i for i, nd in enumerate(hmg.nodes) if nd.node_type == ntype],
                       dtype=np.intp)
        if idx.size:
            node_groups.append((ntype, idx))
            node_feats[ntype] = np.stack([hmg.nodes[i].feature for i in idx])
            node_pes[ntype] = np.stack([hmg.nodes[i].pe for i in idx])
    edge_groups = []
    edge_feats: dict[EdgeType, np.ndarray] = {}
    for etype in EdgeType:
        idx = np.array([i for i, e in enumerate(hmg.edges) if e.edge_type == etype],
                       dtype=np.intp)
        if idx.size:
            edge_groups.append((etype, idx))
            edge_feats[etype] = np.stack([hmg.edges[i].feature for i in idx])
    src = np.array([e.src for e in hmg.edges], dtype=np.intp)
    dst = np.array([e.dst for e in hmg.edges], dtype=np.intp)
    in_mask = np.zeros((n, m), dtype=bool)
    in_mask[dst, np.arange(m)] = True
    sender_mask = np.zeros((m, 1 + m), dtype=bool)
    sender_mask[:, 0] = True
    if m:
        sender_mask[:, 1:] = dst[None, :] == src[:, None]
    return GraphIndex(
        n=n, m=m,
        node_groups=node_groups, node_inverse=_group_inverse(node_groups),
        edge_groups=edge_groups, edge_inverse=_group_inverse(edge_groups),
        src=src, dst=dst, in_mask=in_mask, sender_mask=sender_mask,
        node_feats=node_feats, node_pes=node_pes, edge_feats=edge_feats,
    )


def graph_index(hmg: HMG) -> GraphIndex:
    """Cached index; HMGs are treated as immutable once built."""
    cached = getattr(hmg, "_graph_index", None)
    if cached is None:
        cached = build_graph_index(hmg)
        hmg._graph_index = cached
    return cached


# ---------------------------------------------------------------------------
# Encoder operations


def _reassemble(parts: list[Tensor], inverse: np.ndarray) -> Tensor:
    merged = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
    return ad.gather_rows(merged, inverse)


def init_embeddings(hmg: HMG, state: EncoderState) -> tuple[Tensor, Tensor]:
    """Typed linear projections of raw features into the hidden width.

    Node embeddings add the projected positional vector; each directed
    edge embedding adds its source node's embedding, so the two directions
    of a bond differ."""
    idx = graph_index(hmg)
    a0, c0, b0 = state["a0"], state["c0"], state["b0"]
    c_mat = state["C0"]
    node_parts = []
    for ntype, rows in idx.node_groups:
        feats = constant(idx.node_feats[ntype])
        if feats.shape[1] != state.schema.node_dim(ntype):
            raise ad.ShapeMismatch(
                f"{ntype.value} features are {feats.shape[1]}-wide, schema says "
                f"{state.schema.node_dim(ntype)}"
            )
        base = ad.add(ad.matmul(feats, state[f"A.{ntype.value}"]), a0)
        pe = ad.add(ad.matmul(constant(idx.node_pes[ntype]), c_mat), c0)
        node_parts.append(ad.add(base, pe))
        del rows
    h_nodes = _reassemble(node_parts, idx.node_inverse)
    if idx.m == 0:
        return h_nodes, constant(np.zeros((0, state.config.d)))
    edge_parts = []
    for etype, rows in idx.edge_groups:
        feats = constant(idx.edge_feats[etype])
        if feats.shape[1] != state.schema.edge_dim(etype):
            raise ad.ShapeMismatch(
                f"{etype.value} features are {feats.shape[1]}-wide, schema says "
                f"{state.schema.edge_dim(etype)}"
            )
        edge_parts.append(ad.add(ad.matmul(feats, state[f"B.{etype.value}"]), b0))
        del rows
    h_edges = _reassemble(edge_parts, idx.edge_inverse)
    h_edges = ad.add(h_edges, ad.gather_rows(h_nodes, idx.src))
    return h_nodes, h_edges


def qkv_project(h: np.ndarray, type_value: str, layer: int, head: int,
                state: EncoderState, kind: str = "node"):
    """Reference single-vector projection h @ W_{Q|K|V} @ W_type per head."""
    prefix = "Wtype_v" if kind == "node" else "Wtype_e"
    w_type = state[f"{prefix}.{type_value}"].data
    out = []
    for name in ("WQ", "WK", "WV"):
        w = state[f"{name}.{layer}.{head}"].data
        out.append(h @ w @ w_type)
    return tuple(out)


def attention(q: np.ndarray, senders) -> tuple[np.ndarray, np.ndarray]:
    """Reference attention for one receiver: softmax(q.k/sqrt(dk)) over the
    sender list, returning (message, weights). No senders -> zero message."""
    if not senders:
        return np.zeros_like(q), np.zeros(0)
    keys = np.stack([k for k, _ in senders])
    values = np.stack([v for _, v in senders])
    logits = keys @ q / math.sqrt(q.shape[0])
    logits -= logits.max()
    weights = np.exp(logits)
    weights /= weights.sum()
    return weights @ values, weights


def _typed_qkv(h: Tensor, groups, inverse, w_stack: Tensor, type_prefix: str,
               state: EncoderState) -> Tensor:
    """(count, d) -> (count, heads, head_dim) with per-type unified transforms."""
    cfg = state.config
    base = ad.reshape(ad.matmul(h, w_stack), (h.shape[0], cfg.heads, cfg.head_dim))
    parts = []
    for type_enum, rows in groups:
        w_type = state[f"{type_prefix}.{type_enum.value}"]
        parts.append(ad.matmul(ad.gather_rows(base, rows), w_type))
    return _reassemble(parts, inverse)


@dataclass
class AttentionDump:
    view: str
    node_types: list[str]
    edge_types: list[str]
    src: np.ndarray
    dst: np.ndarray
    node_weights: list[np.ndarray] = field(default_factory=list)  # (K, n, m) per layer
    edge_weights: list[np.ndarray] = field(default_factory=list)  # (K, m, 1+m) per layer
    pool_scores: np.ndarray | None = None
    pool_kept: np.ndarray | None = None

    def receiver_records(self, layer: int | None = None) -> list[dict]:
        """One record per receiver at the given layer (default: final)."""
        layer = len(self.node_weights) - 1 if layer is None else layer
        node_w = self.node_weights[layer].mean(axis=0)
        edge_w = self.edge_weights[layer].mean(axis=0) if self.edge_weights[layer].size else None
        records = []
        m = len(self.edge_types)
        for i in range(len(self.node_types)):
            senders = [e for e in range(m) if self.dst[e] == i]
            records.append({
                "view": self.view,
                "layer": layer + 1,
                "receiver_kind": "node",
                "receiver_id": i,
                "sender_ids": [f"e{e}" for e in senders],
                "weights": [float(node_w[i, e]) for e in senders],
            })
        for e in range(m):
            source = int(self.src[e])
            incoming = [f for f in range(m) if self.dst[f] == source]
            records.append({
                "view": self.view,
                "layer": layer + 1,
                "receiver_kind": "edge",
                "receiver_id": e,
                "sender_ids": [f"v{source}"] + [f"e{f}" for f in incoming],
                "weights": [float(edge_w[e, 0])] + [float(edge_w[e, 1 + f]) for f in incoming],
            })
        return records

    def pool_records(self) -> list[dict]:
        """Per-node pooling scores, softmax-normalized within each node type."""
        scores = self.pool_scores[: len(self.node_types)]
        normalized = np.zeros_like(scores)
        for t in sorted(set(self.node_types)):
            rows = np.array([i for i, x in enumerate(self.node_types) if x == t])
            e = np.exp(scores[rows] - scores[rows].max())
            normalized[rows] = e / e.sum()
        return [
            {
                "view": self.view,
                "node_id": i,
                "node_type": self.node_types[i],
                "pool_score_normalized_by_type": float(normalized[i]),
            }
            for i in range(len(self.node_types))
        ]


@dataclass
class EncodeResult:
    h_graph: Tensor
    dump: AttentionDump | None


def _content_key(row: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(row).tobytes()).hexdigest()


def sag_pool(h_nodes: Tensor, h_edges: Tensor, state: EncoderState,
             dump: AttentionDump | None = None) -> Tensor:
    """Score-based top-k pooling over the union of node and edge embeddings.

    Keeps ceil(pool_ratio * count) items by score (ties by content hash of
    the embedding, never by input position) and sums tanh(score)-gated
    embeddings."""
    items = h_nodes if h_edges.shape[0] == 0 else ad.concat([h_nodes, h_edges], axis=0)
    scores = ad.matmul(items, state["pool.w"])  # (count, 1)
    flat = scores.data[:, 0]
    order = sorted(range(flat.size),
                   key=lambda i: (-flat[i], _content_key(items.data[i])))
    keep = max(1, math.ceil(state.config.pool_ratio * flat.size))
    kept = np.array(order[:keep], dtype=np.intp)
    gates = ad.tanh(ad.gather_rows(scores, kept))  # (keep, 1)
    pooled = ad.matmul(ad.transpose(gates, (1, 0)), ad.gather_rows(items, kept))
    if dump is not None:
        dump.pool_scores = flat.copy()
        dump.pool_kept = kept
    return ad.reshape(pooled, (state.config.d,))


def encode(hmg: HMG, state: EncoderState, collect_attention: bool = False) -> EncodeResult:
    """Full pass: typed init, `layers` rounds of synchronous dual message
    passing, then pooled readout. With collect_attention, per-layer
    attention weights and final pooling scores are captured for export."""
    cfg = state.config
    idx = graph_index(hmg)
    scale = 1.0 / math.sqrt(cfg.head_dim)
    h_nodes, h_edges = init_embeddings(hmg, state)
    dump = None
    if collect_attention:
        dump = AttentionDump(
            view=hmg.view,
            node_types=[nd.node_type.value for nd in hmg.nodes],
            edge_types=[e.edge_type.value for e in hmg.edges],
            src=idx.src, dst=idx.dst,
        )

    n, m = idx.n, idx.m
    for layer in range(cfg.layers):
        wq = ad.concat([state[f"WQ.{layer}.{k}"] for k in range(cfg.heads)], axis=1)
        wk = ad.concat([state[f"WK.{layer}.{k}"] for k in range(cfg.heads)], axis=1)
        wv = ad.concat([state[f"WV.{layer}.{k}"] for k in range(cfg.heads)], axis=1)

        q_v = _typed_qkv(h_nodes, idx.node_groups, idx.node_inverse, wq, "Wtype_v", state)
        k_v = _typed_qkv(h_nodes, idx.node_groups, idx.node_inverse, wk, "Wtype_v", state)
        v_v = _typed_qkv(h_nodes, idx.node_groups, idx.node_inverse, wv, "Wtype_v", state)

        if m:
            q_e = _typed_qkv(h_edges, idx.edge_groups, idx.edge_inverse, wq, "Wtype_e", state)
            k_e = _typed_qkv(h_edges, idx.edge_groups, idx.edge_inverse, wk, "Wtype_e", state)
            v_e = _typed_qkv(h_edges, idx.edge_groups, idx.edge_inverse, wv, "Wtype_e", state)
            k_e_t = ad.transpose(k_e, (1, 2, 0))  # (K, dk, m)
            v_e_t = ad.transpose(v_e, (1, 0, 2))  # (K, m, dk)

            # Node aggregation: messages from incoming edges.
            logits_n = ad.scale(ad.matmul(ad.transpose(q_v, (1, 0, 2)), k_e_t), scale)
            w_n = ad.masked_softmax(logits_n, idx.in_mask[None, :, :])
            msg_n = ad.matmul(w_n, v_e_t)  # (K, n, dk)
            m_v = ad.matmul(
                ad.reshape(ad.transpose(msg_n, (1, 0, 2)), (n, cfg.d)),
                state[f"WVout.{layer}"],
            )

            # Edge aggregation: source node plus edges incoming to the source.
            k_src = ad.gather_rows(k_v, idx.src)  # (m, K, dk)
            v_src = ad.gather_rows(v_v, idx.src)
            logit_src = ad.scale(
                ad.sum_axis(ad.mul(q_e, k_src), axis=-1, keepdims=True), scale
            )  # (m, K, 1)
            logits_e = ad.concat(
                [
                    ad.transpose(logit_src, (1, 0, 2)),  # (K, m, 1)
                    ad.scale(ad.matmul(ad.transpose(q_e, (1, 0, 2)), k_e_t), scale),
                ],
                axis=-1,
            )  # (K, m, 1+m)
            w_e = ad.masked_softmax(logits_e, idx.sender_mask[None, :, :])
            w_src = ad.slice_axis(w_e, 2, 0, 1)  # (K, m, 1)
            w_in = ad.slice_axis(w_e, 2, 1, 1 + m)  # (K, m, m)
            msg_e = ad.add(
                ad.mul(w_src, ad.transpose(v_src, (1, 0, 2))),
                ad.matmul(w_in, v_e_t),
            )  # (K, m, dk)
            m_e = ad.matmul(
                ad.reshape(ad.transpose(msg_e, (1, 0, 2)), (m, cfg.d)),
                state[f"WEout.{layer}"],
            )
            if collect_attention:
                dump.node_weights.append(w_n.data.copy())
                dump.edge_weights.append(w_e.data.copy())
        else:
            m_v = constant(np.zeros((n, cfg.d)))
            if collect_attention:
                dump.node_weights.append(np.zeros((cfg.heads, n, 0)))
                dump.edge_weights.append(np.zeros((cfg.heads, 0, 1)))

        # Synchronous update: both loops read only layer l-1 state.
        cat_v = ad.concat([h_nodes, m_v], axis=1)
        parts = [
            ad.matmul(ad.gather_rows(cat_v, rows), state[f"Wupd_v.{layer}.{t.value}"])
            for t, rows in idx.node_groups
        ]
        h_nodes = ad.leaky_relu(_reassemble(parts, idx.node_inverse), cfg.leaky_slope)
        if m:
            cat_e = ad.concat([h_edges, m_e], axis=1)
            parts = [
                ad.matmul(ad.gather_rows(cat_e, rows), state[f"Wupd_e.{layer}.{t.value}"])
                for t, rows in idx.edge_groups
            ]
            h_edges = ad.leaky_relu(_reassemble(parts, idx.edge_inverse), cfg.leaky_slope)

    h_graph = sag_pool(h_nodes, h_edges, state, dump)
    return EncodeResult(h_graph=h_graph, dump=dump)


# ---------------------------------------------------------------------------
# Per-receiver reference path (host arrays; mirrors the batched pass)


def node_aggregate(hmg: HMG, h_nodes: np.ndarray, h_edges: np.ndarray,
                   node_idx: int, layer: int, state: EncoderState) -> np.ndarray:
    """Message for one node: per-head attention over its incoming edges,
    heads concatenated, times the node output transform."""
    cfg = state.config
    incoming = [e for e, edge in enumerate(hmg.edges) if edge.dst == node_idx]
    ntype = hmg.nodes[node_idx].node_type.value
    per_head = []
    for k in range(cfg.heads):
        q = qkv_project(h_nodes[node_idx], ntype, layer, k, state, kind="node")[0]
        senders = []
        for e in incoming:
            _, ke, ve = qkv_project(h_edges[e], hmg.edges[e].edge_type.value,
                                    layer, k, state, kind="edge")
            senders.append((ke, ve))
        per_head.append(attention(q, senders)[0])
    return np.concatenate(per_head) @ state[f"WVout.{layer}"].data


def edge_aggregate(hmg: HMG, h_nodes: np.ndarray, h_edges: np.ndarray,
                   edge_idx: int, layer: int, state: EncoderState) -> np.ndarray:
    """Message for one edge: attention over its source node plus every edge
    incoming to that source (the reverse edge among them)."""
    cfg = state.config
    source = hmg.edges[edge_idx].src
    incoming = [e for e, edge in enumerate(hmg.edges) if edge.dst == source]
    etype = hmg.edges[edge_idx].edge_type.value
    per_head = []
    for k in range(cfg.heads):
        q = qkv_project(h_edges[edge_idx], etype, layer, k, state, kind="edge")[0]
        _, kn, vn = qkv_project(h_nodes[source], hmg.nodes[source].node_type.value,
                                layer, k, state, kind="node")
        senders = [(kn, vn)]
        for e in incoming:
            _, ke, ve = qkv_project(h_edges[e], hmg.edges[e].edge_type.value,
                                    layer, k, state, kind="edge")
            senders.append((ke, ve))
        per_head.append(attention(q, senders)[0])
    return np.concatenate(per_head) @ state[f"WEout.{layer}"].data


def update(h_prev: np.ndarray, message: np.ndarray, type_value: str, layer: int,
           state: EncoderState, kind: str = "node") -> np.ndarray:
    """LeakyReLU((h || m) @ W) with the type- and layer-specific update matrix."""
    prefix = "Wupd_v" if kind == "node" else "Wupd_e"
    pre = np.concatenate([h_prev, message]) @ state[f"{prefix}.{layer}.{type_value}"].data
    slope = state.config.leaky_slope
    return np.where(pre >= 0, pre, slope * pre)


def reference_encode_embeddings(hmg: HMG, state: EncoderState):
    """Run the full message-passing stack through the per-receiver reference
    path, returning final (h_nodes, h_edges) host arrays."""
    with ad.no_grad():
        h_nodes_t, h_edges_t = init_embeddings(hmg, state)
    h_nodes, h_edges = h_nodes_t.data, h_edges_t.data
    for layer in range(state.config.layers):
        new_nodes = np.stack([
            update(h_nodes[i], node_aggregate(hmg, h_nodes, h_edges, i, layer, state),
                   hmg.nodes[i].node_type.value, layer, state, kind="node")
            for i in range(len(hmg.nodes))
        ])
        if len(hmg.edges):
            new_edges = np.stack([
                update(h_edges[e], edge_aggregate(hmg, h_nodes, h_edges, e, layer, state),
                       hmg.edges[e].edge_type.value, layer, state, kind="edge")
                for e in range(len(hmg.edges))
            ])
        else:
            new_edges = h_edges
        h_nodes, h_edges = new_nodes, new_edges
    return h_nodes, h_edges
