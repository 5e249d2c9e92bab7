"""Heterogeneous molecular graphs: the molecule, element, and drug views.

An HMG is a typed, directed multigraph. Every logical edge is stored as a
directed pair with mutual reverse indices. Atom and Fragment nodes carry
Laplacian positional vectors; knowledge nodes carry zeros. Parallel edges
are permitted only for the knowledge-derived EE/FuFu/EFu types.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .chem.features import ATOM_FEATURE_DIM, atom_features, bond_features
from .chem.fragment import FragmentSet
from .chem.smarts import match_smarts, parse_smarts
from .chem.smiles import MolecularGraph
from .kg import (
    HOP_FEATURE_DIM,
    KINDS,
    RELATION_BUCKETS,
    EmbeddingTable,
    KnowledgeGraph,
    two_hop_edges,
)


class NodeType(enum.Enum):
    Atom = "Atom"
    Fragment = "Fragment"
    Element = "Element"
    FunctionalGroup = "FunctionalGroup"
    DNode = "DNode"


class EdgeType(enum.Enum):
    Bond = "Bond"
    Reaction = "Reaction"
    Join = "Join"
    AE = "AE"
    FrFu = "FrFu"
    EE = "EE"
    FuFu = "FuFu"
    EFu = "EFu"
    AD = "AD"
    FrD = "FrD"


PARALLEL_EDGE_TYPES = {EdgeType.EE, EdgeType.FuFu, EdgeType.EFu}

FRAGMENT_FEATURE_DIM = ATOM_FEATURE_DIM + 1
KNOWLEDGE_NODE_FEATURE_DIM = len(KINDS) + 1
DNODE_FEATURE_DIM = 32  # drug embeddings are padded/truncated to this width
DEFAULT_PE_DIM = 8


class HmgError(ValueError):
    pass


class PartitionMismatch(HmgError):
    pass


@dataclass
class HmgNode:
    node_type: NodeType
    feature: np.ndarray
    pe: np.ndarray


@dataclass
class HmgEdge:
    src: int
    dst: int
    edge_type: EdgeType
    feature: np.ndarray
    reverse: int


@dataclass
class HMG:
    nodes: list[HmgNode]
    edges: list[HmgEdge]
    view: str  # M, EM, or DM
    drug_id: str | None = None
    # Construction provenance, used by the view-augmenting builders.
    # Not serialized; absent on deserialized graphs.
    source_mol: MolecularGraph | None = field(default=None, repr=False)
    fragments: FragmentSet | None = field(default=None, repr=False)

    def nodes_of_type(self, node_type: NodeType) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.node_type == node_type]

    def edges_of_type(self, edge_type: EdgeType) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.edge_type == edge_type]

    def in_edges(self, node_idx: int) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.dst == node_idx]


def add_edge_pair(hmg: HMG, src: int, dst: int, edge_type: EdgeType,
                  feature: np.ndarray) -> tuple[int, int]:
    """Append the directed pair src->dst, dst->src with mutual reverse indices."""
    base = len(hmg.edges)
    hmg.edges.append(HmgEdge(src=src, dst=dst, edge_type=edge_type,
                             feature=feature.copy(), reverse=base + 1))
    hmg.edges.append(HmgEdge(src=dst, dst=src, edge_type=edge_type,
                             feature=feature.copy(), reverse=base))
    return base, base + 1


def validate(hmg: HMG) -> None:
    """Check structural invariants; raises HmgError on violation."""
    n = len(hmg.nodes)
    for i, e in enumerate(hmg.edges):
        if not (0 <= e.src < n and 0 <= e.dst < n) or e.src == e.dst:
            raise HmgError(f"edge {i} has bad endpoints ({e.src}, {e.dst})")
        rev = hmg.edges[e.reverse]
        if rev.reverse != i or rev.src != e.dst or rev.dst != e.src or rev.edge_type != e.edge_type:
            raise HmgError(f"edge {i} lacks a consistent reverse pair")
    seen: dict[tuple[int, int, EdgeType], int] = {}
    for e in hmg.edges:
        key = (e.src, e.dst, e.edge_type)
        seen[key] = seen.get(key, 0) + 1
    for (src, dst, etype), count in seen.items():
        if count > 1 and etype not in PARALLEL_EDGE_TYPES:
            raise HmgError(f"parallel {etype.value} edges between {src} and {dst}")
    if hmg.view == "DM":
        dnodes = hmg.nodes_of_type(NodeType.DNode)
        if len(dnodes) != 1:
            raise HmgError(f"DM view must have exactly one DNode, found {len(dnodes)}")
        dnode = dnodes[0]
        linked = {e.src for e in hmg.edges
                  if e.dst == dnode and e.edge_type in (EdgeType.AD, EdgeType.FrD)}
        expected = set(hmg.nodes_of_type(NodeType.Atom)) | set(
            hmg.nodes_of_type(NodeType.Fragment))
        if linked != expected:
            raise HmgError("DNode must link every Atom and Fragment node")
    for i, node in enumerate(hmg.nodes):
        scaffold = node.node_type in (NodeType.Atom, NodeType.Fragment)
        if not scaffold and np.any(node.pe != 0.0):
            raise HmgError(f"knowledge node {i} must carry a zero positional vector")


# ---------------------------------------------------------------------------
# Positional encoding


def laplacian_pe(hmg: HMG, k: int) -> np.ndarray:
    """Rows of the k smallest-nontrivial eigenvectors of the normalized
    Laplacian over the Atom/Fragment scaffold (Bond/Join/Reaction edges,
    undirected). Each eigenvector's sign is fixed so its largest-magnitude
    entry is positive; graphs with fewer than k+1 scaffold nodes zero-pad.
    """
    if k < 1:
        raise HmgError("positional dimension must be >= 1")
    scaffold = [i for i, nd in enumerate(hmg.nodes)
                if nd.node_type in (NodeType.Atom, NodeType.Fragment)]
    pos = {node: j for j, node in enumerate(scaffold)}
    n = len(scaffold)
    out = np.zeros((n, k))
    if n <= 1:
        return out
    adj = np.zeros((n, n))
    for e in hmg.edges:
        if e.edge_type in (EdgeType.Bond, EdgeType.Join, EdgeType.Reaction):
            i, j = pos[e.src], pos[e.dst]
            adj[i, j] = 1.0
            adj[j, i] = 1.0
    deg = adj.sum(axis=1)
    inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros(n), where=deg > 0)
    lap = np.eye(n) - inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    eigvals, eigvecs = np.linalg.eigh(lap)
    order = np.argsort(eigvals)
    take = min(k, n - 1)
    for col, idx in enumerate(order[1 : 1 + take]):
        vec = eigvecs[:, idx]
        # Anchor on the first entry whose magnitude ties the maximum (within
        # float noise), so exact symmetric ties resolve deterministically.
        mags = np.abs(vec)
        anchor = int(np.flatnonzero(mags > mags.max() - 1e-9)[0])
        if vec[anchor] < 0:
            vec = -vec
        out[:, col] = vec
    return out


# ---------------------------------------------------------------------------
# View builders


def build_molecule_view(mol: MolecularGraph, frags: FragmentSet,
                        k_pe: int = DEFAULT_PE_DIM) -> HMG:
    """Atoms plus one Fragment node per fragment; Bond, Reaction, and Join
    edge pairs; Laplacian positional vectors over the scaffold."""
    covered = set().union(*frags.fragments) if frags.fragments else set()
    if covered != {a.index for a in mol.atoms} or sum(
        len(f) for f in frags.fragments
    ) != len(mol.atoms):
        raise PartitionMismatch("fragments do not partition the molecule's atoms")

    hmg = HMG(nodes=[], edges=[], view="M", source_mol=mol, fragments=frags)
    for atom in mol.atoms:
        hmg.nodes.append(HmgNode(NodeType.Atom, atom_features(atom, mol), np.zeros(k_pe)))
    n_atoms = len(mol.atoms)
    for frag in frags.fragments:
        members = sorted(frag)
        feat = np.zeros(FRAGMENT_FEATURE_DIM)
        feat[:ATOM_FEATURE_DIM] = np.mean(
            [atom_features(mol.atoms[a], mol) for a in members], axis=0
        )
        feat[ATOM_FEATURE_DIM] = len(members) / len(mol.atoms)
        hmg.nodes.append(HmgNode(NodeType.Fragment, feat, np.zeros(k_pe)))

    for bond in mol.bonds:
        add_edge_pair(hmg, bond.endpoints[0], bond.endpoints[1],
                      EdgeType.Bond, bond_features(bond))
    rule_index = {rid: i for i, rid in enumerate(frags.rule_ids)}
    for reaction in frags.reactions:
        feat = np.zeros(len(frags.rule_ids))
        feat[rule_index[reaction.rule_id]] = 1.0
        fa, fb = reaction.fragment_pair
        add_edge_pair(hmg, n_atoms + fa, n_atoms + fb, EdgeType.Reaction, feat)
    for frag_idx, frag in enumerate(frags.fragments):
        for atom_idx in sorted(frag):
            add_edge_pair(hmg, atom_idx, n_atoms + frag_idx, EdgeType.Join, np.ones(1))

    pe = laplacian_pe(hmg, k_pe)
    for i in range(len(hmg.nodes)):
        hmg.nodes[i].pe = pe[i]
    return hmg


def _clone_base(base: HMG, view: str) -> HMG:
    return HMG(
        nodes=[HmgNode(n.node_type, n.feature.copy(), n.pe.copy()) for n in base.nodes],
        edges=[HmgEdge(e.src, e.dst, e.edge_type, e.feature.copy(), e.reverse)
               for e in base.edges],
        view=view,
        drug_id=base.drug_id,
        source_mol=base.source_mol,
        fragments=base.fragments,
    )


def _knowledge_node_feature(kind: str, degree: int) -> np.ndarray:
    vec = np.zeros(KNOWLEDGE_NODE_FEATURE_DIM)
    vec[KINDS.index(kind)] = 1.0
    vec[len(KINDS)] = degree / (1.0 + degree)
    return vec


def _efu_feature(relation_id: int) -> np.ndarray:
    # Shares the 2-hop feature layout; direct triples fill only the first
    # relation-bucket block.
    vec = np.zeros(HOP_FEATURE_DIM)
    vec[len(KINDS) + relation_id % RELATION_BUCKETS] = 1.0
    return vec


def build_element_view(base: HMG, ekg: KnowledgeGraph) -> HMG:
    """Augment a molecule view with Element and FunctionalGroup nodes.

    Element nodes link by symbol (AE). Functional groups whose SMARTS-lite
    pattern matches inside a single fragment link from that fragment
    (FrFu). 2-hop derived EE/FuFu edges and direct EFu triples are copied
    for the nodes actually added; those three types may be parallel.
    """
    if base.view != "M":
        raise HmgError("element view must be built from a molecule view")
    if base.source_mol is None or base.fragments is None:
        raise HmgError("base view lacks construction provenance")
    mol, frags = base.source_mol, base.fragments
    hmg = _clone_base(base, "EM")
    k_pe = base.nodes[0].pe.shape[0] if base.nodes else DEFAULT_PE_DIM
    n_atoms = len(mol.atoms)

    element_node: dict[int, int] = {}  # ekg entity id -> hmg node index
    symbols = sorted({a.element for a in mol.atoms})
    for symbol in symbols:
        if not ekg.has_entity(symbol):
            continue
        ent = ekg.entity_id(symbol)
        if ekg.kind_of(ent) != "element":
            continue
        idx = len(hmg.nodes)
        hmg.nodes.append(HmgNode(
            NodeType.Element,
            _knowledge_node_feature("element", ekg.degree(ent)),
            np.zeros(k_pe),
        ))
        element_node[ent] = idx
        for atom in mol.atoms:
            if atom.element == symbol:
                add_edge_pair(hmg, atom.index, idx, EdgeType.AE, np.ones(1))

    group_node: dict[int, int] = {}
    for name in sorted(ekg.group_patterns):
        pattern = parse_smarts(ekg.group_patterns[name])
        matches = match_smarts(pattern, mol)
        if not matches:
            continue
        ent = ekg.entity_id(name)
        hit_fragments = sorted({
            frag_idx
            for frag_idx, frag in enumerate(frags.fragments)
            for m in matches
            if set(m) <= frag
        })
        if not hit_fragments:
            continue
        idx = len(hmg.nodes)
        hmg.nodes.append(HmgNode(
            NodeType.FunctionalGroup,
            _knowledge_node_feature("functional_group", ekg.degree(ent)),
            np.zeros(k_pe),
        ))
        group_node[ent] = idx
        for frag_idx in hit_fragments:
            add_edge_pair(hmg, n_atoms + frag_idx, idx, EdgeType.FrFu, np.ones(1))

    for derived in two_hop_edges(ekg, ("element", "element")):
        a, b = derived.endpoints
        if a in element_node and b in element_node:
            add_edge_pair(hmg, element_node[a], element_node[b],
                          EdgeType.EE, derived.hop_feature())
    for derived in two_hop_edges(ekg, ("functional_group", "functional_group")):
        a, b = derived.endpoints
        if a in group_node and b in group_node:
            add_edge_pair(hmg, group_node[a], group_node[b],
                          EdgeType.FuFu, derived.hop_feature())
    for h, r, t in sorted(ekg.triples):
        pair = None
        if h in element_node and t in group_node:
            pair = (element_node[h], group_node[t])
        elif h in group_node and t in element_node:
            pair = (element_node[t], group_node[h])
        if pair is not None:
            add_edge_pair(hmg, pair[0], pair[1], EdgeType.EFu, _efu_feature(r))
    return hmg


def build_drug_view(base: HMG, dkg: KnowledgeGraph | None, emb: EmbeddingTable,
                    drug_id: str) -> HMG:
    """Augment a molecule view with a single DNode hub (AD/FrD edges).

    The DNode feature is the drug's knowledge-graph embedding padded or
    truncated to DNODE_FEATURE_DIM. dkg is accepted for interface symmetry;
    the embedding already condenses it.
    """
    if base.view != "M":
        raise HmgError("drug view must be built from a molecule view")
    vector = emb.lookup(drug_id)
    hmg = _clone_base(base, "DM")
    hmg.drug_id = drug_id
    k_pe = base.nodes[0].pe.shape[0] if base.nodes else DEFAULT_PE_DIM
    feat = np.zeros(DNODE_FEATURE_DIM)
    take = min(DNODE_FEATURE_DIM, vector.shape[0])
    feat[:take] = vector[:take]
    dnode = len(hmg.nodes)
    hmg.nodes.append(HmgNode(NodeType.DNode, feat, np.zeros(k_pe)))
    for idx in hmg.nodes_of_type(NodeType.Atom):
        add_edge_pair(hmg, idx, dnode, EdgeType.AD, np.ones(1))
    for idx in hmg.nodes_of_type(NodeType.Fragment):
        add_edge_pair(hmg, idx, dnode, EdgeType.FrD, np.ones(1))
    return hmg


# ---------------------------------------------------------------------------
# Serialization (HMG v1)


def _csv(values: np.ndarray) -> str:
    return ",".join(repr(float(x)) for x in values)


def serialize(hmg: HMG) -> str:
    lines = [f"HMG v1 view={hmg.view} drug={hmg.drug_id or '-'}"]
    for node in hmg.nodes:
        lines.append(
            f"N {node.node_type.value} {_csv(node.feature)} {_csv(node.pe)}"
        )
    for e in hmg.edges:
        lines.append(
            f"E {e.src} {e.dst} {e.edge_type.value} {e.reverse} {_csv(e.feature)}"
        )
    return "\n".join(lines) + "\n"


def deserialize(text: str) -> HMG:
    lines = text.splitlines()
    if not lines:
        raise HmgError("empty HMG payload")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "HMG" or header[1] != "v1":
        raise HmgError(f"bad HMG header: '{lines[0]}'")
    view = header[2].removeprefix("view=")
    drug = header[3].removeprefix("drug=")
    if view not in ("M", "EM", "DM"):
        raise HmgError(f"unknown view '{view}'")
    hmg = HMG(nodes=[], edges=[], view=view, drug_id=None if drug == "-" else drug)
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "N":
            if len(parts) != 4:
                raise HmgError(f"line {line_no}: bad node record")
            hmg.nodes.append(HmgNode(
                NodeType(parts[1]),
                np.array([float(x) for x in parts[2].split(",")]),
                np.array([float(x) for x in parts[3].split(",")]),
            ))
        elif parts[0] == "E":
            if len(parts) != 6:
                raise HmgError(f"line {line_no}: bad edge record")
            hmg.edges.append(HmgEdge(
                src=int(parts[1]), dst=int(parts[2]),
                edge_type=EdgeType(parts[3]), feature=np.array(
                    [float(x) for x in parts[5].split(",")]),
                reverse=int(parts[4]),
            ))
        else:
            raise HmgError(f"line {line_no}: unknown record '{parts[0]}'")
    validate(hmg)
    return hmg
