"""SMILES parsing into an explicit molecular graph.

Covers the organic subset plus bracket atoms (charge, explicit H count),
ring closures (including %nn), branches, and aromatic lowercase symbols.
Implicit hydrogens are materialized as per-atom counts using fixed
standard valences; ring perception produces a smallest set of smallest
rings. Stereo markers are parsed and discarded with a warning.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field


class SmilesError(ValueError):
    """Base class for SMILES parse failures."""


class UnknownElement(SmilesError):
    pass


class UnclosedRing(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class MultiComponentInput(SmilesError):
    pass


class ValenceViolation(SmilesError):
    pass


# Symbols accepted as atoms. Two-letter symbols must be checked first
# during tokenization ("Br" before "B", "Cl" before "C").
ELEMENTS = ("H", "B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_SYMBOLS = ("b", "c", "n", "o", "p", "s")

# Allowed total valences per element, smallest first. Multi-valent S and P
# follow common usage (sulfone, phosphate); everything else is single-valued.
VALENCES = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

BOND_ORDERS = {"single": 1, "double": 2, "triple": 3, "aromatic": 1}


@dataclass
class Atom:
    element: str
    formal_charge: int = 0
    explicit_h: int = 0
    aromatic: bool = False
    ring_member: bool = False
    index: int = 0


@dataclass
class Bond:
    endpoints: tuple[int, int]
    order: str  # one of single/double/triple/aromatic
    ring_member: bool = False


@dataclass
class MolecularGraph:
    atoms: list[Atom]
    bonds: list[Bond]
    rings: list[tuple[int, ...]]
    source_smiles: str
    _adjacency: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def neighbors(self, idx: int) -> list[int]:
        return self._adjacency.get(idx, [])

    def bond_between(self, i: int, j: int) -> Bond | None:
        for b in self.bonds:
            if set(b.endpoints) == {i, j}:
                return b
        return None

    def degree(self, idx: int) -> int:
        return len(self.neighbors(idx))


_BRACKET_RE = re.compile(
    r"^(?P<isotope>\d+)?(?P<symbol>[A-Z][a-z]?|[bcnops])(?P<chiral>@{1,2})?"
    r"(?P<hcount>H\d*)?(?P<charge>\+{1,3}|-{1,3}|\+\d|-\d)?$"
)


def _parse_bracket(body: str, pos: int) -> tuple[str, bool, int, int]:
    """Return (element, aromatic, explicit_h, charge) for a bracket body."""
    m = _BRACKET_RE.match(body)
    if m is None:
        raise UnknownElement(f"unparseable bracket atom '[{body}]' at position {pos}")
    symbol = m.group("symbol")
    aromatic = symbol in AROMATIC_SYMBOLS
    element = symbol.capitalize() if aromatic else symbol
    if element not in ELEMENTS:
        raise UnknownElement(f"unknown element '{symbol}' at position {pos}")
    if m.group("chiral"):
        warnings.warn("stereochemistry marker discarded", stacklevel=3)
    h = m.group("hcount")
    explicit_h = 0 if h is None else (1 if h == "H" else int(h[1:]))
    c = m.group("charge")
    if c is None:
        charge = 0
    elif c in ("+", "++", "+++"):
        charge = len(c)
    elif c in ("-", "--", "---"):
        charge = -len(c)
    else:
        charge = int(c) if c[0] == "-" else int(c[1:])
    return element, aromatic, explicit_h, charge


def _bond_order_sum(atom: Atom, orders: list[str]) -> int:
    # Aromatic bonds count 1 each; the delocalized slot is handled separately.
    return sum(BOND_ORDERS[o] for o in orders)


def _assign_hydrogens(atoms, bond_orders, from_bracket):
    """Fill implicit H counts and validate valences in place."""
    for atom in atoms:
        orders = bond_orders[atom.index]
        strict = _bond_order_sum(atom, orders)
        allowed = [v + atom.formal_charge for v in VALENCES[atom.element]]
        allowed = [v for v in allowed if v >= 0] or [0]
        if from_bracket[atom.index]:
            # Bracket atoms carry their H count verbatim; only validate.
            if strict + atom.explicit_h > max(allowed):
                raise ValenceViolation(
                    f"atom {atom.index} ({atom.element}, charge {atom.formal_charge}) "
                    f"has valence {strict + atom.explicit_h}, allowed {allowed}"
                )
            continue
        if strict > max(allowed):
            raise ValenceViolation(
                f"atom {atom.index} ({atom.element}) has bond order sum {strict}, "
                f"allowed {allowed}"
            )
        target = min(v for v in allowed if v >= strict)
        # Aromatic atoms reserve one slot for the delocalized system.
        occupied = strict + (1 if atom.aromatic else 0)
        atom.explicit_h = max(0, target - occupied)


def _perceive_rings(n_atoms, bonds) -> list[tuple[int, ...]]:
    """Smallest set of smallest rings via shortest-cycle search per bond.

    Collects, for every bond, the shortest cycle through it, then greedily
    keeps cycles (smallest first) that are independent in GF(2) edge space
    until the cyclomatic number is reached.
    """
    adj: dict[int, set[int]] = {i: set() for i in range(n_atoms)}
    for b in bonds:
        i, j = b.endpoints
        adj[i].add(j)
        adj[j].add(i)
    cyclomatic = len(bonds) - n_atoms + 1
    if cyclomatic <= 0:
        return []

    def shortest_cycle_through(i, j):
        # BFS from i to j with the direct edge removed.
        from collections import deque

        prev = {i: None}
        queue = deque([i])
        while queue:
            u = queue.popleft()
            for v in sorted(adj[u]):
                if u == i and v == j:
                    continue
                if v not in prev:
                    prev[v] = u
                    if v == j:
                        path = [v]
                        while path[-1] is not None and prev[path[-1]] is not None:
                            path.append(prev[path[-1]])
                        return tuple(path)
                    queue.append(v)
        return None

    candidates = []
    for b in bonds:
        cyc = shortest_cycle_through(*b.endpoints)
        if cyc is not None:
            candidates.append(cyc)
    candidates.sort(key=lambda c: (len(c), c))

    def edge_set(cycle):
        es = set()
        for k in range(len(cycle)):
            a, b = cycle[k], cycle[(k + 1) % len(cycle)]
            es.add((min(a, b), max(a, b)))
        return frozenset(es)

    rings: list[tuple[int, ...]] = []
    basis: list[frozenset] = []
    for cyc in candidates:
        es = edge_set(cyc)
        # GF(2) independence: reduce against current basis.
        reduced = set(es)
        for bvec in basis:
            if reduced & bvec:
                reduced ^= bvec
        if reduced:
            basis.append(frozenset(reduced))
            rings.append(cyc)
        if len(rings) == cyclomatic:
            break
    return rings


def parse_smiles(text: str) -> MolecularGraph:
    """Parse a single-component SMILES string into a MolecularGraph."""
    if not text or not text.strip():
        raise SmilesError("empty SMILES input")
    s = text.strip()
    if "." in s:
        raise MultiComponentInput(f"multi-component input rejected: '{text}'")

    atoms: list[Atom] = []
    bonds: list[Bond] = []
    from_bracket: list[bool] = []
    prev: int | None = None
    branch_stack: list[int | None] = []
    ring_open: dict[int, tuple[int, str | None]] = {}
    pending_bond: str | None = None  # explicit bond symbol awaiting the next atom

    def add_atom(element, aromatic, explicit_h, charge, bracket):
        idx = len(atoms)
        atoms.append(
            Atom(element=element, formal_charge=charge, explicit_h=explicit_h,
                 aromatic=aromatic, index=idx)
        )
        from_bracket.append(bracket)
        return idx

    def resolve_order(a_idx, b_idx, symbol):
        if symbol == "-" or symbol in ("/", "\\"):
            return "single"
        if symbol == "=":
            return "double"
        if symbol == "#":
            return "triple"
        if symbol == ":":
            return "aromatic"
        # No explicit symbol: aromatic when both ends are aromatic.
        if atoms[a_idx].aromatic and atoms[b_idx].aromatic:
            return "aromatic"
        return "single"

    def add_bond(a_idx, b_idx, symbol):
        if a_idx == b_idx:
            raise SmilesError(f"self-bond on atom {a_idx}")
        order = resolve_order(a_idx, b_idx, symbol)
        bonds.append(Bond(endpoints=(a_idx, b_idx), order=order))

    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "(":
            if prev is None:
                raise UnbalancedBranch(f"branch opened before any atom at position {i}")
            branch_stack.append(prev)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise UnbalancedBranch(f"unmatched ')' at position {i}")
            prev = branch_stack.pop()
            i += 1
        elif ch in "-=#:":
            pending_bond = ch
            i += 1
        elif ch in "/\\":
            warnings.warn("stereochemistry marker discarded", stacklevel=2)
            pending_bond = ch
            i += 1
        elif ch.isdigit() or ch == "%":
            if prev is None:
                raise SmilesError(f"ring closure before any atom at position {i}")
            if ch == "%":
                if i + 2 >= len(s) or not s[i + 1 : i + 3].isdigit():
                    raise UnclosedRing(f"malformed %nn ring closure at position {i}")
                num = int(s[i + 1 : i + 3])
                i += 3
            else:
                num = int(ch)
                i += 1
            if num in ring_open:
                other, sym_open = ring_open.pop(num)
                symbol = pending_bond or sym_open
                add_bond(other, prev, symbol)
            else:
                ring_open[num] = (prev, pending_bond)
            pending_bond = None
        elif ch == "[":
            end = s.find("]", i)
            if end < 0:
                raise SmilesError(f"unterminated bracket atom at position {i}")
            element, aromatic, eh, charge = _parse_bracket(s[i + 1 : end], i)
            idx = add_atom(element, aromatic, eh, charge, bracket=True)
            if prev is not None:
                add_bond(prev, idx, pending_bond)
            prev = idx
            pending_bond = None
            i = end + 1
        elif ch.isupper():
            symbol = ch
            if s[i : i + 2] in ("Cl", "Br"):
                symbol = s[i : i + 2]
            if symbol not in ELEMENTS:
                raise UnknownElement(f"unknown element '{symbol}' at position {i}")
            idx = add_atom(symbol, False, 0, 0, bracket=False)
            if prev is not None:
                add_bond(prev, idx, pending_bond)
            prev = idx
            pending_bond = None
            i += len(symbol)
        elif ch.islower():
            if ch not in AROMATIC_SYMBOLS:
                raise UnknownElement(f"unknown aromatic symbol '{ch}' at position {i}")
            idx = add_atom(ch.upper(), True, 0, 0, bracket=False)
            if prev is not None:
                add_bond(prev, idx, pending_bond)
            prev = idx
            pending_bond = None
            i += 1
        else:
            raise SmilesError(f"unexpected character '{ch}' at position {i}")

    if branch_stack:
        raise UnbalancedBranch(f"{len(branch_stack)} unclosed '(' in '{text}'")
    if ring_open:
        raise UnclosedRing(f"unclosed ring bond number(s) {sorted(ring_open)} in '{text}'")
    if not atoms:
        raise SmilesError(f"no atoms in '{text}'")

    for b in bonds:
        i0, j0 = b.endpoints
        if b.order == "aromatic" and not (atoms[i0].aromatic and atoms[j0].aromatic):
            raise ValenceViolation(
                f"aromatic bond between non-aromatic atoms {i0}-{j0}"
            )

    bond_orders: dict[int, list[str]] = {a.index: [] for a in atoms}
    adjacency: dict[int, list[int]] = {a.index: [] for a in atoms}
    for b in bonds:
        i0, j0 = b.endpoints
        bond_orders[i0].append(b.order)
        bond_orders[j0].append(b.order)
        adjacency[i0].append(j0)
        adjacency[j0].append(i0)

    # Connectivity: single-component inputs must yield one component.
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(atoms):
        raise MultiComponentInput(f"disconnected graph parsed from '{text}'")

    _assign_hydrogens(atoms, bond_orders, from_bracket)

    rings = _perceive_rings(len(atoms), bonds)
    ring_atoms = {a for ring in rings for a in ring}
    ring_edges = set()
    for ring in rings:
        for k in range(len(ring)):
            a, b2 = ring[k], ring[(k + 1) % len(ring)]
            ring_edges.add((min(a, b2), max(a, b2)))
    # Edges on any cycle (not only SSSR members) are ring bonds; recover the
    # full set from the GF(2) span by marking bridge edges via the cyclomatic
    # decomposition: an edge is a ring edge iff removing it keeps its
    # endpoints connected.
    for b in bonds:
        i0, j0 = b.endpoints
        if (min(i0, j0), max(i0, j0)) in ring_edges:
            b.ring_member = True
        else:
            b.ring_member = _still_connected(adjacency, i0, j0)
        if b.ring_member:
            ring_atoms.add(i0)
            ring_atoms.add(j0)
    for a in atoms:
        a.ring_member = a.index in ring_atoms
        if a.aromatic and not a.ring_member:
            raise ValenceViolation(
                f"aromatic atom {a.index} ({a.element}) is not in a ring"
            )

    return MolecularGraph(atoms=atoms, bonds=bonds, rings=rings,
                          source_smiles=s, _adjacency=adjacency)


def _still_connected(adjacency, i, j):
    """True when i and j stay connected after dropping one i-j edge."""
    seen = {i}
    stack = [i]
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if u == i and v == j:
                continue
            if v == j:
                return True
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def mol_to_text(mol: MolecularGraph) -> str:
    """Canonical line dump of a parsed molecule (not a SMILES writer)."""
    lines = [f"MOL {len(mol.atoms)} {len(mol.bonds)} {len(mol.rings)}"]
    for a in mol.atoms:
        lines.append(
            f"A {a.index} {a.element} {a.formal_charge} {a.explicit_h} "
            f"{int(a.aromatic)} {int(a.ring_member)}"
        )
    for b in mol.bonds:
        lines.append(
            f"B {b.endpoints[0]} {b.endpoints[1]} {b.order} {int(b.ring_member)}"
        )
    for r in mol.rings:
        lines.append("R " + ",".join(str(x) for x in r))
    return "\n".join(lines) + "\n"


def mol_from_text(text: str) -> MolecularGraph:
    """Inverse of mol_to_text."""
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split()
    if header[0] != "MOL":
        raise SmilesError("bad molecule dump header")
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    rings: list[tuple[int, ...]] = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "A":
            atoms.append(Atom(element=parts[2], formal_charge=int(parts[3]),
                              explicit_h=int(parts[4]), aromatic=bool(int(parts[5])),
                              ring_member=bool(int(parts[6])), index=int(parts[1])))
        elif parts[0] == "B":
            bonds.append(Bond(endpoints=(int(parts[1]), int(parts[2])),
                              order=parts[3], ring_member=bool(int(parts[4]))))
        elif parts[0] == "R":
            rings.append(tuple(int(x) for x in parts[1].split(",")))
    adjacency: dict[int, list[int]] = {a.index: [] for a in atoms}
    for b in bonds:
        adjacency[b.endpoints[0]].append(b.endpoints[1])
        adjacency[b.endpoints[1]].append(b.endpoints[0])
    return MolecularGraph(atoms=atoms, bonds=bonds, rings=rings,
                          source_smiles="", _adjacency=adjacency)
