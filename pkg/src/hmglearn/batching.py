"""Balanced mini-batch generation for contrastive pretraining.

Molecules without a drug id are clustered (capacity-constrained k-means
over path fingerprints); each cluster is filled with the nearest drug
molecules, which enter a used-set, then topped up with drug molecules
sampled from outside that set. Every emitted batch has exactly N items,
drug items last.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hmg import HMG
from .rng import stream


class BatchingError(ValueError):
    pass


class EmptyInput(BatchingError):
    pass


class InsufficientCandidates(BatchingError):
    pass


class InsufficientDrugMolecules(BatchingError):
    pass


@dataclass
class PretrainItem:
    mol_id: str
    smiles: str
    drug_id: str | None
    fingerprint: np.ndarray
    views: dict[str, HMG] = field(default_factory=dict)

    @property
    def has_drug_view(self) -> bool:
        return "DM" in self.views


@dataclass
class MiniBatch:
    items: list[PretrainItem]
    drug_count: int

    def __len__(self) -> int:
        return len(self.items)


def drug_slots(batch_size: int) -> int:
    """round(0.3 N) with round-half-up, the per-batch drug allocation."""
    return int(np.floor(0.3 * batch_size + 0.5))


def _kmeans_once(points: np.ndarray, k: int, capacity: int, rng,
                 max_iter: int, tol: float):
    n = points.shape[0]
    # k-means++ style seeding.
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centers[c] = points[pick]
        closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1))

    labels = np.full(n, -1, dtype=np.intp)
    for _ in range(max_iter):
        dists = np.sqrt(((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2))
        order = np.argsort(dists, axis=None, kind="stable")
        room = np.full(k, capacity, dtype=np.intp)
        new_labels = np.full(n, -1, dtype=np.intp)
        assigned = 0
        for flat in order:
            p, c = divmod(int(flat), k)
            if new_labels[p] >= 0 or room[c] == 0:
                continue
            new_labels[p] = c
            room[c] -= 1
            assigned += 1
            if assigned == n:
                break
        movement = 0.0
        new_centers = centers.copy()
        for c in range(k):
            members = points[new_labels == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
                movement = max(movement, float(np.linalg.norm(new_centers[c] - centers[c])))
        converged = np.array_equal(new_labels, labels) or movement < tol
        labels, centers = new_labels, new_centers
        if converged:
            break
    objective = 0.0
    for c in range(k):
        members = points[labels == c]
        if len(members):
            objective += float(np.sum((members - centers[c]) ** 2))
    return labels, centers, objective


def constrained_kmeans(points: np.ndarray, capacity: int, seed: int,
                       max_iter: int = 100, tol: float = 1e-6,
                       restarts: int = 5):
    """Lloyd iterations with greedy capacity-respecting assignment.

    Cluster count is ceil(len(points) / capacity). Assignment walks all
    (point, center) pairs in ascending distance order, giving each point
    its nearest center that still has room. The best of `restarts`
    seeded k-means++ initializations (by within-cluster sum of squares)
    is returned as (labels, centers); everything is seed-deterministic.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise EmptyInput("constrained_kmeans needs a non-empty 2-D point array")
    if capacity < 1:
        raise BatchingError("capacity must be at least 1")
    n = points.shape[0]
    k = -(-n // capacity)
    best = None
    for r in range(restarts):
        rng = stream(seed, "kmeans-init", r)
        labels, centers, objective = _kmeans_once(points, k, capacity, rng, max_iter, tol)
        if best is None or objective < best[2]:
            best = (labels, centers, objective)
    return best[0], best[1]


def nearest_neighbors(center: np.ndarray, candidates: list[tuple[str, np.ndarray]],
                      count: int) -> list[str]:
    """Ids of the `count` candidates closest to center; ties by candidate id."""
    if count > len(candidates):
        raise InsufficientCandidates(
            f"asked for {count} neighbors from {len(candidates)} candidates"
        )
    ranked = sorted(
        candidates, key=lambda item: (float(np.linalg.norm(item[1] - center)), item[0])
    )
    return [cid for cid, _ in ranked[:count]]


def generate_batches(non_drug: list[PretrainItem], drug: list[PretrainItem],
                     batch_size: int, complement: int, seed: int) -> list[MiniBatch]:
    """Balanced batches: capacity-clustered non-drug items, nearest-drug
    fill into a used-set, then a random complement from outside it.

    Trailing non-drug items that do not fill a whole cluster are dropped so
    every batch has exactly batch_size items.
    """
    if batch_size < 4:
        raise BatchingError("batch size must be at least 4")
    slots = drug_slots(batch_size)
    if not (0 <= complement <= slots):
        raise BatchingError(
            f"complement {complement} outside [0, round(0.3N)={slots}]"
        )
    if not non_drug:
        raise EmptyInput("no non-drug molecules to cluster")
    capacity = batch_size - slots
    points = np.stack([item.fingerprint for item in non_drug])
    labels, centers = constrained_kmeans(points, capacity, seed)
    # Exactly floor(n / capacity) full clusters feed batches: keep the
    # largest clusters, top the under-full ones up with the nearest points
    # from the clusters being dropped, and discard the remainder.
    n_full = len(non_drug) // capacity
    if n_full == 0:
        raise EmptyInput("fewer non-drug molecules than one batch's capacity")
    sizes = np.bincount(labels, minlength=centers.shape[0])
    keep_order = sorted(range(centers.shape[0]), key=lambda c: (-sizes[c], c))
    kept, dropped = keep_order[:n_full], keep_order[n_full:]
    pool = [i for c in dropped for i in np.flatnonzero(labels == c)]
    clusters = []
    for c in kept:
        member_idx = list(np.flatnonzero(labels == c))
        while len(member_idx) < capacity:
            nearest = min(pool, key=lambda i: (
                float(np.linalg.norm(points[i] - centers[c])), non_drug[i].mol_id))
            pool.remove(nearest)
            member_idx.append(nearest)
        clusters.append(([non_drug[i] for i in member_idx], centers[c]))
    if len(drug) < len(clusters) * slots:
        raise InsufficientDrugMolecules(
            f"{len(drug)} drug molecules cannot fill {len(clusters)} batches "
            f"of {slots} drug slots"
        )

    by_id = {item.mol_id: item for item in drug}
    nn_fill = slots - complement
    used: set[str] = set()
    filled: list[list[PretrainItem]] = []
    candidates = [(item.mol_id, item.fingerprint) for item in drug]
    for members, center in clusters:
        picked = nearest_neighbors(center, candidates, nn_fill)
        used.update(picked)
        filled.append(list(members) + [by_id[cid] for cid in picked])

    rng = stream(seed, "batch-complement")
    remaining_ids = sorted(set(by_id) - used)
    batches = []
    for items in filled:
        if complement:
            if len(remaining_ids) < complement:
                raise InsufficientDrugMolecules(
                    "random complement exhausted the unused drug molecules"
                )
            picks = rng.choice(len(remaining_ids), size=complement, replace=False)
            items = items + [by_id[remaining_ids[j]] for j in sorted(picks)]
        batches.append(MiniBatch(items=items, drug_count=slots))
    return batches
