"""Cross-view contrastive objective and the pretraining loop.

The per-anchor loss contrasts one molecule's embedding in an anchor view
against its positive in the other view, normalized by intra-view and
inter-view negatives only (the positive pair is excluded from the
denominator, read literally from the loss definition; per-anchor values
can therefore go negative). View-pair losses average both directions over
the items present in both views; the total sums the three view pairings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, backward, constant, zero_grads
from .batching import MiniBatch, PretrainItem, generate_batches
from .encoder import EncoderConfig, EncoderState, encode
from .rng import stream


class NoNegatives(ValueError):
    pass


def project(h_graph: Tensor, state: EncoderState) -> Tensor:
    """Projector head: d -> d -> d_z with LeakyReLU between the layers."""
    x = ad.reshape(h_graph, (1, state.config.d))
    hidden = ad.leaky_relu(ad.linear(x, state["proj.W1"], state["proj.b1"]),
                           state.config.leaky_slope)
    return ad.linear(hidden, state["proj.W2"], state["proj.b2"])


@dataclass
class ViewProjections:
    """Per-view projection matrices plus the item ids indexing their rows."""
    ids: dict[str, list[str]]
    z: dict[str, Tensor]

    def views(self):
        return [v for v in ("M", "EM", "DM") if v in self.z]


def batch_projections(batch: MiniBatch, state: EncoderState) -> ViewProjections:
    ids: dict[str, list[str]] = {"M": [], "EM": [], "DM": []}
    rows: dict[str, list[Tensor]] = {"M": [], "EM": [], "DM": []}
    for item in batch.items:
        for view in ("M", "EM", "DM"):
            if view in item.views:
                ids[view].append(item.mol_id)
                rows[view].append(project(encode(item.views[view], state).h_graph, state))
    z = {view: ad.concat(rows[view], axis=0) for view in rows if rows[view]}
    return ViewProjections(ids={v: ids[v] for v in z}, z=z)


def pair_loss(view1: str, view2: str, mol_id: str, zs: ViewProjections,
              tau: float) -> Tensor:
    """-log of the positive-pair term over the summed intra- and
    inter-view negative terms, for one anchor in view1."""
    ids1, ids2 = zs.ids[view1], zs.ids[view2]
    if mol_id not in ids1 or mol_id not in ids2:
        raise KeyError(f"molecule {mol_id} lacks a projection in {view1} or {view2}")
    i1, i2 = ids1.index(mol_id), ids2.index(mol_id)
    n_neg = (len(ids1) - 1) + (len(ids2) - 1)
    if n_neg < 1:
        raise NoNegatives(f"no negatives for ({view1}, {view2})")
    z1 = ad.l2_normalize_rows(zs.z[view1])
    z2 = ad.l2_normalize_rows(zs.z[view2])
    anchor = ad.gather_rows(z1, [i1])  # (1, d_z)
    sims11 = ad.scale(ad.matmul(anchor, ad.transpose(z1, (1, 0))), 1.0 / tau)
    sims12 = ad.scale(ad.matmul(anchor, ad.transpose(z2, (1, 0))), 1.0 / tau)
    pos = ad.reshape(ad.slice_axis(sims12, 1, i2, i2 + 1), (1,))
    mask1 = np.ones((1, len(ids1)))
    mask1[0, i1] = 0.0
    mask2 = np.ones((1, len(ids2)))
    mask2[0, i2] = 0.0
    denom = ad.add(
        ad.sum_axis(ad.mul(ad.exp(sims11), constant(mask1))),
        ad.sum_axis(ad.mul(ad.exp(sims12), constant(mask2))),
    )
    loss = ad.add(ad.log(denom), ad.scale(pos, -1.0))
    return ad.reshape(loss, ())


def paired_ids(view1: str, view2: str, zs: ViewProjections) -> list[str]:
    second = set(zs.ids[view2])
    return [mol_id for mol_id in zs.ids[view1] if mol_id in second]


def view_pair_loss(view1: str, view2: str, zs: ViewProjections, tau: float) -> Tensor:
    """Symmetrized average of the directional losses over the paired items."""
    pairs = paired_ids(view1, view2, zs)
    if not pairs:
        raise NoNegatives(f"no paired items between {view1} and {view2}")
    forward = [pair_loss(view1, view2, mol_id, zs, tau) for mol_id in pairs]
    reverse = [pair_loss(view2, view1, mol_id, zs, tau) for mol_id in pairs]
    stacked = ad.concat([ad.reshape(t, (1,)) for t in forward + reverse], axis=0)
    return ad.scale(ad.sum_axis(stacked), 1.0 / len(pairs))


VIEW_PAIRS = (("M", "EM"), ("M", "DM"), ("EM", "DM"))


def total_loss(zs: ViewProjections, tau: float) -> tuple[Tensor, dict[str, Tensor]]:
    """Sum of the three view-pair losses."""
    if len(zs.ids.get("M", [])) < 2:
        raise NoNegatives("need at least 2 items in the batch")
    if len(zs.ids.get("DM", [])) < 2:
        raise NoNegatives("need at least 2 items with drug views")
    components = {
        f"{a},{b}": view_pair_loss(a, b, zs, tau) for a, b in VIEW_PAIRS
    }
    total = components["M,EM"]
    total = ad.add(total, components["M,DM"])
    total = ad.add(total, components["EM,DM"])
    return total, components


# ---------------------------------------------------------------------------
# Pretraining loop


@dataclass(frozen=True)
class PretrainConfig:
    batch_size: int = 16  # N of the batch generator
    complement: int = 1  # n, the random drug top-up per batch
    tau: float = 0.1
    epochs: int = 10
    step_size: float = 1e-3
    seed: int = 0
    max_steps: int | None = None


@dataclass
class PretrainResult:
    state: EncoderState
    trace: list[dict]


def pretrain(items: list[PretrainItem], state: EncoderState,
             config: PretrainConfig, trace_path=None) -> PretrainResult:
    """Adam over the total cross-view loss on regenerated balanced batches.

    The loss trace records one row per optimizer step; when trace_path is
    given the rows are also written as CSV."""
    non_drug = [item for item in items if not item.has_drug_view]
    drug = [item for item in items if item.has_drug_view]
    adam = AdamState()
    params = state.parameters()
    trace: list[dict] = []
    step = 0
    done = False
    for epoch in range(config.epochs):
        epoch_seed = int(stream(config.seed, "pretrain-epoch", epoch).integers(2**63))
        batches = generate_batches(non_drug, drug, config.batch_size,
                                   config.complement, epoch_seed)
        for batch in batches:
            zs = batch_projections(batch, state)
            loss, components = total_loss(zs, config.tau)
            zero_grads(params)
            backward(loss)
            ad.adam_step(params, adam, step_size=config.step_size)
            step += 1
            trace.append({
                "step": step,
                "loss_total": float(loss.data),
                "loss_M_EM": float(components["M,EM"].data),
                "loss_M_DM": float(components["M,DM"].data),
                "loss_EM_DM": float(components["EM,DM"].data),
            })
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
        if done:
            break
    if trace_path is not None:
        write_trace(trace_path, trace)
    return PretrainResult(state=state, trace=trace)


def write_trace(path, trace: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss_total,loss_M_EM,loss_M_DM,loss_EM_DM\n")
        for row in trace:
            fh.write(
                f"{row['step']},{row['loss_total']!r},{row['loss_M_EM']!r},"
                f"{row['loss_M_DM']!r},{row['loss_EM_DM']!r}\n"
            )


def evaluate_separation(items: list[PretrainItem], state: EncoderState):
    """Mean cosine of positive (same molecule, different view) pairs minus
    the mean over cross-molecule pairs; returns (mean_pos, mean_neg)."""
    with ad.no_grad():
        zs: dict[str, dict[str, np.ndarray]] = {}
        for item in items:
            for view, hmg in item.views.items():
                z = project(encode(hmg, state).h_graph, state).data[0]
                zs.setdefault(view, {})[item.mol_id] = z / max(np.linalg.norm(z), 1e-12)
    positives, negatives = [], []
    for a, b in VIEW_PAIRS:
        if a not in zs or b not in zs:
            continue
        ids_a, ids_b = sorted(zs[a]), sorted(zs[b])
        for ia in ids_a:
            for ib in ids_b:
                cos = float(zs[a][ia] @ zs[b][ib])
                (positives if ia == ib else negatives).append(cos)
    return (
        float(np.mean(positives)) if positives else math.nan,
        float(np.mean(negatives)) if negatives else math.nan,
    )
