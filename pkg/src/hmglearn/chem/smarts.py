"""SMARTS-lite pattern parsing and subgraph matching.

Supported atom constraints: element, aromaticity (case), formal charge,
explicit-H count (Hn), connection count (Xn, hydrogens included), and
ring membership (R / R0). Bond constraints: default (single or aromatic),
-, =, #, :. No logical OR/NOT, no recursive patterns.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import permutations

from .smiles import AROMATIC_SYMBOLS, ELEMENTS, MolecularGraph


class SmartsError(ValueError):
    pass


@dataclass(frozen=True)
class AtomConstraint:
    element: str | None = None
    aromatic: bool | None = None
    charge: int | None = None
    h_count: int | None = None
    connections: int | None = None
    in_ring: bool | None = None

    def matches(self, mol: MolecularGraph, idx: int) -> bool:
        a = mol.atoms[idx]
        if self.element is not None and a.element != self.element:
            return False
        if self.aromatic is not None and a.aromatic != self.aromatic:
            return False
        if self.charge is not None and a.formal_charge != self.charge:
            return False
        if self.h_count is not None and a.explicit_h != self.h_count:
            return False
        if self.connections is not None:
            if mol.degree(idx) + a.explicit_h != self.connections:
                return False
        if self.in_ring is not None and a.ring_member != self.in_ring:
            return False
        return True


@dataclass(frozen=True)
class BondConstraint:
    endpoints: tuple[int, int]
    order: str | None = None  # None means "single or aromatic"

    def matches_order(self, order: str) -> bool:
        if self.order is None:
            return order in ("single", "aromatic")
        return order == self.order


@dataclass
class SmartsPattern:
    pattern_atoms: list[AtomConstraint]
    pattern_bonds: list[BondConstraint]
    source_text: str
    _adjacency: dict[int, list[tuple[int, BondConstraint]]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        if not self._adjacency:
            adj: dict[int, list[tuple[int, BondConstraint]]] = {
                i: [] for i in range(len(self.pattern_atoms))
            }
            for bc in self.pattern_bonds:
                i, j = bc.endpoints
                adj[i].append((j, bc))
                adj[j].append((i, bc))
            self._adjacency = adj


_BRACKET_TOKEN = re.compile(
    r"(Cl|Br|[BCNOPSFI]|[bcnops])|H(\d?)|X(\d)|R(0?)|(\+\d|-\d|\+|-)|([;&])"
)


def _parse_bracket_constraint(body: str, pos: int) -> AtomConstraint:
    if body == "H":  # bare hydrogen atom, not an H-count constraint
        return AtomConstraint(element="H", aromatic=False)
    element = None
    aromatic = None
    charge = None
    h_count = None
    connections = None
    in_ring = None
    i = 0
    while i < len(body):
        m = _BRACKET_TOKEN.match(body, i)
        if m is None:
            raise SmartsError(f"unsupported token in '[{body}]' at offset {i} (position {pos})")
        if m.group(1):
            sym = m.group(1)
            if sym in AROMATIC_SYMBOLS:
                element, aromatic = sym.capitalize(), True
            else:
                element, aromatic = sym, False
            if element not in ELEMENTS:
                raise SmartsError(f"unknown element '{sym}' in pattern")
        elif m.group(0).startswith("H"):
            h_count = int(m.group(2)) if m.group(2) else 1
        elif m.group(3) is not None:
            connections = int(m.group(3))
        elif m.group(0).startswith("R"):
            in_ring = m.group(4) != "0"
        elif m.group(5):
            tok = m.group(5)
            if tok == "+":
                charge = 1
            elif tok == "-":
                charge = -1
            else:
                charge = int(tok) if tok[0] == "-" else int(tok[1:])
        # ';' and '&' are AND joiners; nothing to record.
        i = m.end()
    return AtomConstraint(element=element, aromatic=aromatic, charge=charge,
                          h_count=h_count, connections=connections, in_ring=in_ring)


def parse_smarts(text: str) -> SmartsPattern:
    """Parse a SMARTS-lite string into a connected pattern graph."""
    if not text or not text.strip():
        raise SmartsError("empty pattern")
    s = text.strip()
    atoms: list[AtomConstraint] = []
    bonds: list[BondConstraint] = []
    prev: int | None = None
    branch_stack: list[int | None] = []
    ring_open: dict[int, tuple[int, str | None]] = {}
    pending: str | None = None

    order_map = {"-": "single", "=": "double", "#": "triple", ":": "aromatic"}

    def add_bond(a, b, symbol):
        order = order_map[symbol] if symbol else None
        bonds.append(BondConstraint(endpoints=(a, b), order=order))

    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "(":
            if prev is None:
                raise SmartsError("branch before any atom")
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmartsError("unmatched ')' in pattern")
            prev = branch_stack.pop()
            i += 1
        elif ch in order_map:
            pending = ch
            i += 1
        elif ch.isdigit():
            num = int(ch)
            if num in ring_open:
                other, sym = ring_open.pop(num)
                add_bond(other, prev, pending or sym)
            else:
                ring_open[num] = (prev, pending)
            pending = None
            i += 1
        elif ch == "[":
            end = s.find("]", i)
            if end < 0:
                raise SmartsError(f"unterminated bracket at position {i}")
            atoms.append(_parse_bracket_constraint(s[i + 1 : end], i))
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending)
            prev = idx
            pending = None
            i = end + 1
        elif ch.isupper():
            sym = ch
            if s[i : i + 2] in ("Cl", "Br"):
                sym = s[i : i + 2]
            if sym not in ELEMENTS:
                raise SmartsError(f"unknown element '{sym}' in pattern")
            atoms.append(AtomConstraint(element=sym, aromatic=False))
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending)
            prev = idx
            pending = None
            i += len(sym)
        elif ch.islower():
            if ch not in AROMATIC_SYMBOLS:
                raise SmartsError(f"unknown aromatic symbol '{ch}' in pattern")
            atoms.append(AtomConstraint(element=ch.upper(), aromatic=True))
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending)
            prev = idx
            pending = None
            i += 1
        else:
            raise SmartsError(f"unexpected character '{ch}' in pattern")

    if branch_stack:
        raise SmartsError("unclosed '(' in pattern")
    if ring_open:
        raise SmartsError("unclosed ring bond in pattern")
    if not atoms:
        raise SmartsError("no atoms in pattern")

    pattern = SmartsPattern(pattern_atoms=atoms, pattern_bonds=bonds, source_text=s)
    # Connectivity invariant.
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in pattern._adjacency[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(atoms):
        raise SmartsError(f"disconnected pattern '{text}'")
    return pattern


def _extend(pattern, mol, mapping, used, results, stop_first):
    """Backtracking embedding search; pattern atoms assigned in index order."""
    k = len(mapping)
    if k == len(pattern.pattern_atoms):
        results.append(tuple(mapping))
        return stop_first
    # Candidate molecule atoms for pattern atom k: neighbors of an already
    # mapped pattern neighbor when one exists, else all atoms.
    anchor = None
    for j, bc in pattern._adjacency[k]:
        if j < k:
            anchor = (j, bc)
            break
    if anchor is None:
        candidates = range(len(mol.atoms))
    else:
        candidates = mol.neighbors(mapping[anchor[0]])
    constraint = pattern.pattern_atoms[k]
    for cand in sorted(candidates):
        if cand in used or not constraint.matches(mol, cand):
            continue
        ok = True
        for j, bc in pattern._adjacency[k]:
            if j >= k:
                continue
            bond = mol.bond_between(mapping[j], cand)
            if bond is None or not bc.matches_order(bond.order):
                ok = False
                break
        if not ok:
            continue
        mapping.append(cand)
        used.add(cand)
        if _extend(pattern, mol, mapping, used, results, stop_first):
            return True
        mapping.pop()
        used.remove(cand)
    return False


def _all_embeddings(pattern, mol):
    results: list[tuple[int, ...]] = []
    _extend(pattern, mol, [], set(), results, stop_first=False)
    return results


def pattern_automorphisms(pattern: SmartsPattern) -> list[tuple[int, ...]]:
    """All constraint-preserving automorphisms of the pattern graph."""
    n = len(pattern.pattern_atoms)
    edge_orders = {}
    for bc in pattern.pattern_bonds:
        i, j = bc.endpoints
        edge_orders[(min(i, j), max(i, j))] = bc.order
    autos = []
    for perm in permutations(range(n)):
        if all(pattern.pattern_atoms[i] == pattern.pattern_atoms[perm[i]] for i in range(n)):
            mapped = {}
            for (i, j), order in edge_orders.items():
                key = (min(perm[i], perm[j]), max(perm[i], perm[j]))
                mapped[key] = order
            if mapped == edge_orders:
                autos.append(perm)
    return autos


def match_smarts(pattern: SmartsPattern, mol: MolecularGraph) -> list[tuple[int, ...]]:
    """All embeddings of the pattern, deduplicated up to pattern automorphism,
    in lexicographic order of the mapped atom indices."""
    embeddings = _all_embeddings(pattern, mol)
    if not embeddings:
        return []
    autos = pattern_automorphisms(pattern)
    canonical = {}
    for emb in embeddings:
        rep = min(tuple(emb[perm[i]] for i in range(len(emb))) for perm in autos)
        canonical[rep] = True
    return sorted(canonical)


def matches_at(pattern: SmartsPattern, mol: MolecularGraph, atom_idx: int) -> bool:
    """True when some embedding maps the pattern's first atom onto atom_idx."""
    if not pattern.pattern_atoms[0].matches(mol, atom_idx):
        return False
    results: list[tuple[int, ...]] = []
    return _extend(pattern, mol, [atom_idx], {atom_idx}, results, stop_first=True)
