"""Feature vectors for atoms and bonds, plus a folded path fingerprint."""
from __future__ import annotations

import hashlib

import numpy as np

from .smiles import ELEMENTS, Atom, Bond, MolecularGraph

ATOM_FEATURE_DIM = 25  # 11 element + 6 degree + charge + aromatic + 5 H + ring
BOND_FEATURE_DIM = 5  # 4 order + ring
FINGERPRINT_BITS = 128

_BOND_ORDER_INDEX = {"single": 0, "double": 1, "triple": 2, "aromatic": 3}
_BOND_ORDER_MARK = {"single": "-", "double": "=", "triple": "#", "aromatic": ":"}


def atom_features(atom: Atom, mol: MolecularGraph) -> np.ndarray:
    """Fixed-width atom descriptor; every entry lies in [-1, 1]."""
    vec = np.zeros(ATOM_FEATURE_DIM)
    vec[ELEMENTS.index(atom.element)] = 1.0
    degree = min(mol.degree(atom.index), 5)
    vec[11 + degree] = 1.0
    vec[17] = atom.formal_charge / 4.0
    vec[18] = 1.0 if atom.aromatic else 0.0
    vec[19 + min(atom.explicit_h, 4)] = 1.0
    vec[24] = 1.0 if atom.ring_member else 0.0
    return vec


def bond_features(bond: Bond) -> np.ndarray:
    vec = np.zeros(BOND_FEATURE_DIM)
    vec[_BOND_ORDER_INDEX[bond.order]] = 1.0
    vec[4] = 1.0 if bond.ring_member else 0.0
    return vec


def _atom_mark(atom: Atom) -> str:
    return atom.element.lower() if atom.aromatic else atom.element


def _stable_bit(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % FINGERPRINT_BITS


def path_fingerprint(mol: MolecularGraph) -> np.ndarray:
    """128-bit folded hash of atom/bond paths with up to three bonds.

    Paths are read in both directions and the lexicographically smaller
    string is hashed, so the fingerprint is independent of atom numbering.
    """
    bond_lookup = {}
    for b in mol.bonds:
        i, j = b.endpoints
        bond_lookup[(i, j)] = b.order
        bond_lookup[(j, i)] = b.order

    bits = np.zeros(FINGERPRINT_BITS)

    def record(path: list[int]):
        marks = []
        for k, idx in enumerate(path):
            if k > 0:
                marks.append(_BOND_ORDER_MARK[bond_lookup[(path[k - 1], idx)]])
            marks.append(_atom_mark(mol.atoms[idx]))
        forward = "".join(marks)
        backward = forward[::-1]
        bits[_stable_bit(min(forward, backward))] = 1.0

    def walk(path: list[int], depth: int):
        record(path)
        if depth == 3:
            return
        for nxt in mol.neighbors(path[-1]):
            if nxt not in path:
                walk(path + [nxt], depth + 1)

    for a in mol.atoms:
        walk([a.index], 0)
    return bits
