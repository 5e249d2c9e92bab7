"""Knowledge graphs: triple loading, 2-hop edge derivation, embeddings.

Triple files are UTF-8 TSV lines ``head<TAB>relation<TAB>tail`` with ``#``
comments. Two reserved relations drive entity-kind assignment:

* ``kindIs`` - pseudo-triple; the tail names the head's kind (class,
  element, functional_group, property, drug, other). Consumed at load
  time, not stored as a triple.
* ``hasSmarts`` - the tail is a SMARTS-lite pattern for the head, which
  becomes a functional_group entity; the pattern text is exposed through
  ``group_patterns``. These triples stay in the graph.

Entities named like chemical element symbols default to kind ``element``;
everything else defaults to ``other``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chem.smiles import ELEMENTS
from .rng import stream

KINDS = ("class", "element", "functional_group", "property", "drug", "other")
RELATION_BUCKETS = 16
HOP_FEATURE_DIM = len(KINDS) + 2 * RELATION_BUCKETS

KIND_RELATION = "kindIs"
SMARTS_RELATION = "hasSmarts"


class KgError(ValueError):
    pass


class MalformedLine(KgError):
    pass


class EmptyFile(KgError):
    pass


class DimensionMismatch(KgError):
    pass


class UnknownEntityAtLookup(KeyError):
    pass


@dataclass
class KnowledgeGraph:
    entity_names: list[str] = field(default_factory=list)
    entity_kinds: list[str] = field(default_factory=list)
    relation_names: list[str] = field(default_factory=list)
    triples: set[tuple[int, int, int]] = field(default_factory=set)
    triple_order: list[tuple[int, int, int]] = field(default_factory=list)
    group_patterns: dict[str, str] = field(default_factory=dict)
    duplicates_dropped: int = 0
    _entity_index: dict[str, int] = field(default_factory=dict, repr=False)
    _relation_index: dict[str, int] = field(default_factory=dict, repr=False)

    def entity_id(self, name: str) -> int:
        if name not in self._entity_index:
            self._entity_index[name] = len(self.entity_names)
            self.entity_names.append(name)
            self.entity_kinds.append("other")
        return self._entity_index[name]

    def relation_id(self, name: str) -> int:
        if name not in self._relation_index:
            self._relation_index[name] = len(self.relation_names)
            self.relation_names.append(name)
        return self._relation_index[name]

    def has_entity(self, name: str) -> bool:
        return name in self._entity_index

    def kind_of(self, entity_id: int) -> str:
        return self.entity_kinds[entity_id]

    def entities_of_kind(self, kind: str) -> list[int]:
        return [i for i, k in enumerate(self.entity_kinds) if k == kind]

    def degree(self, entity_id: int) -> int:
        return sum(1 for h, _, t in self.triples if h == entity_id or t == entity_id)

    def add_triple(self, head: str, relation: str, tail: str) -> bool:
        """Returns False when the triple was a duplicate."""
        trip = (self.entity_id(head), self.relation_id(relation), self.entity_id(tail))
        if trip in self.triples:
            self.duplicates_dropped += 1
            return False
        self.triples.add(trip)
        self.triple_order.append(trip)
        return True


def _default_kind(name: str) -> str:
    return "element" if name in ELEMENTS else "other"


def load_triples(path) -> KnowledgeGraph:
    """Parse a triple TSV into a KnowledgeGraph (first-appearance vocabularies)."""
    kg = KnowledgeGraph()
    explicit_kinds: dict[str, str] = {}
    saw_data = False
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedLine(
                    f"{path}:{line_no}: expected 3 tab-separated fields, got {len(parts)}"
                )
            head, relation, tail = (p.strip() for p in parts)
            if not head or not relation or not tail:
                raise MalformedLine(f"{path}:{line_no}: empty field")
            saw_data = True
            if relation == KIND_RELATION:
                if tail not in KINDS:
                    raise MalformedLine(f"{path}:{line_no}: unknown kind '{tail}'")
                kg.entity_id(head)
                explicit_kinds[head] = tail
                continue
            if relation == SMARTS_RELATION:
                kg.group_patterns[head] = tail
                explicit_kinds.setdefault(head, "functional_group")
                explicit_kinds.setdefault(tail, "property")
            kg.add_triple(head, relation, tail)
    if not saw_data:
        raise EmptyFile(f"{path}: no triples")
    for i, name in enumerate(kg.entity_names):
        kg.entity_kinds[i] = explicit_kinds.get(name, _default_kind(name))
    return kg


# ---------------------------------------------------------------------------
# 2-hop derivation


@dataclass(frozen=True)
class DerivedEdge:
    endpoints: tuple[int, int]
    hop_feature_key: tuple[str, int, int]  # (intermediate kind, rel bucket a, rel bucket b)
    multiplicity_key: tuple[int, tuple[int, int]]

    def hop_feature(self) -> np.ndarray:
        kind, bucket_a, bucket_b = self.hop_feature_key
        vec = np.zeros(HOP_FEATURE_DIM)
        vec[KINDS.index(kind)] = 1.0
        vec[len(KINDS) + bucket_a] = 1.0
        vec[len(KINDS) + RELATION_BUCKETS + bucket_b] = 1.0
        return vec


_ALLOWED_PAIRS = {
    ("element", "element"),
    ("functional_group", "functional_group"),
    ("element", "functional_group"),
}


def two_hop_edges(kg: KnowledgeGraph, kind_pair: tuple[str, str]) -> list[DerivedEdge]:
    """All endpoint pairs of the requested kinds linked through exactly one
    intermediate entity, one edge per (intermediate, relation-pair).

    Triples are treated as undirected for path finding. Same-kind pairs are
    canonicalized with the smaller entity id first; (element, functional_group)
    pairs keep the element first.
    """
    if kind_pair not in _ALLOWED_PAIRS:
        raise KgError(f"unsupported kind pair {kind_pair}")
    kind_a, kind_b = kind_pair

    # Undirected relation sets per linked entity pair.
    links: dict[int, dict[int, set[int]]] = {}
    for h, r, t in kg.triples:
        if h == t:
            continue
        links.setdefault(h, {}).setdefault(t, set()).add(r)
        links.setdefault(t, {}).setdefault(h, set()).add(r)

    edges: list[DerivedEdge] = []
    for mid in range(len(kg.entity_names)):
        neighbors = links.get(mid)
        if not neighbors:
            continue
        side_a = sorted(n for n in neighbors if kg.entity_kinds[n] == kind_a)
        side_b = sorted(n for n in neighbors if kg.entity_kinds[n] == kind_b)
        mid_kind = kg.entity_kinds[mid]
        for a in side_a:
            for b in side_b:
                if a == b:
                    continue
                if kind_a == kind_b and a > b:
                    continue  # unordered pair, emit once
                for ra in sorted(neighbors[a]):
                    for rb in sorted(neighbors[b]):
                        edges.append(
                            DerivedEdge(
                                endpoints=(a, b),
                                hop_feature_key=(
                                    mid_kind,
                                    ra % RELATION_BUCKETS,
                                    rb % RELATION_BUCKETS,
                                ),
                                multiplicity_key=(mid, (ra, rb)),
                            )
                        )
    edges.sort(key=lambda e: (e.endpoints, e.multiplicity_key))
    return edges


# ---------------------------------------------------------------------------
# Embeddings


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    # Relation vectors are a training byproduct kept for evaluation only;
    # they are not persisted by save_embeddings.
    relations: dict[str, np.ndarray] = field(default_factory=dict)

    def lookup(self, name: str) -> np.ndarray:
        if name not in self.vectors:
            raise UnknownEntityAtLookup(name)
        return self.vectors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embeddings(path) -> EmbeddingTable:
    """Read ``entity<TAB>v1<TAB>...<TAB>vd`` rows; ragged rows are rejected."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise MalformedLine(f"{path}:{line_no}: expected name and values")
            name = parts[0]
            try:
                values = np.array([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise MalformedLine(f"{path}:{line_no}: bad float") from exc
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise DimensionMismatch(
                    f"{path}:{line_no}: expected {dim} values, got {values.size}"
                )
            if not np.all(np.isfinite(values)):
                raise MalformedLine(f"{path}:{line_no}: non-finite value")
            vectors[name] = values
    if dim is None:
        raise EmptyFile(f"{path}: no embeddings")
    return EmbeddingTable(dim=dim, vectors=vectors)


def save_embeddings(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, vec in table.vectors.items():
            fh.write(name + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")


def train_transe(kg: KnowledgeGraph, dim: int, epochs: int = 200,
                 margin: float = 1.0, step_size: float = 0.01,
                 seed: int = 0, loss_trace: list | None = None) -> EmbeddingTable:
    """Translational embeddings via margin-ranking with uniform corruption.

    Entity vectors are renormalized to unit length at the end of every
    epoch; the update order is fixed, so results are seed-deterministic.
    When loss_trace is a list, the mean margin loss against a fixed
    corruption sample is appended once per epoch. Returns entity
    embeddings keyed by name.
    """
    if not kg.triples:
        raise KgError("cannot train embeddings on an empty graph")
    if dim < 2:
        raise KgError("embedding dimension must be at least 2")
    n_ent = len(kg.entity_names)
    n_rel = len(kg.relation_names)
    rng = stream(seed, "transe")
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_ent, dim))
    rel = rng.uniform(-bound, bound, size=(n_rel, dim))
    rel /= np.maximum(np.linalg.norm(rel, axis=1, keepdims=True), 1e-12)
    triples = list(kg.triple_order)
    known = kg.triples

    eval_negs = None
    if loss_trace is not None:
        eval_rng = stream(seed, "transe-eval")
        eval_negs = []
        for h, r, t in triples:
            if eval_rng.random() < 0.5:
                eval_negs.append((int(eval_rng.integers(n_ent)), r, t))
            else:
                eval_negs.append((h, r, int(eval_rng.integers(n_ent))))

    def mean_margin_loss():
        total = 0.0
        for (h, r, t), (hc, rc, tc) in zip(triples, eval_negs):
            pos = np.linalg.norm(ent[h] + rel[r] - ent[t])
            neg = np.linalg.norm(ent[hc] + rel[rc] - ent[tc])
            total += max(0.0, margin + pos - neg)
        return total / len(triples)

    for _ in range(epochs):
        ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)
        if loss_trace is not None:
            loss_trace.append(mean_margin_loss())
        for h, r, t in triples:
            corrupt_head = rng.random() < 0.5
            for _attempt in range(10):
                cand = int(rng.integers(n_ent))
                neg = (cand, r, t) if corrupt_head else (h, r, cand)
                if neg not in known:
                    break
            else:
                continue
            hc, _, tc = neg
            pos_diff = ent[h] + rel[r] - ent[t]
            neg_diff = ent[hc] + rel[r] - ent[tc]
            pos_d = np.linalg.norm(pos_diff)
            neg_d = np.linalg.norm(neg_diff)
            if margin + pos_d - neg_d <= 0:
                continue
            gp = pos_diff / max(pos_d, 1e-12)
            gn = neg_diff / max(neg_d, 1e-12)
            ent[h] -= step_size * gp
            ent[t] += step_size * gp
            rel[r] -= step_size * (gp - gn)
            ent[hc] += step_size * gn
            ent[tc] -= step_size * gn
    ent /= np.maximum(np.linalg.norm(ent, axis=1, keepdims=True), 1e-12)
    return EmbeddingTable(
        dim=dim,
        vectors={name: ent[i].copy() for i, name in enumerate(kg.entity_names)},
        relations={name: rel[i].copy() for i, name in enumerate(kg.relation_names)},
    )


def transe_energy(table: EmbeddingTable, kg: KnowledgeGraph,
                  triple: tuple[int, int, int]) -> float:
    """||h + r - t|| for one triple under a trained table."""
    h, r, t = triple
    hv = table.lookup(kg.entity_names[h])
    tv = table.lookup(kg.entity_names[t])
    rv = table.relations.get(kg.relation_names[r], np.zeros(table.dim))
    return float(np.linalg.norm(hv + rv - tv))
