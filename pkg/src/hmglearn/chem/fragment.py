"""Rule-driven molecular fragmentation.

A rule names a pair of SMARTS-lite environments. Every acyclic single
bond whose endpoints match a rule's (left, right) environments, in either
orientation, is marked broken; fragments are the connected components
after removing the broken bonds.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .smarts import SmartsPattern, parse_smarts, matches_at
from .smiles import MolecularGraph


@dataclass(frozen=True)
class BricsRule:
    rule_id: str
    left: SmartsPattern
    right: SmartsPattern


@dataclass
class Reaction:
    fragment_pair: tuple[int, int]
    broken_bond: tuple[int, int]
    rule_id: str


@dataclass
class FragmentSet:
    fragments: list[frozenset[int]]
    reactions: list[Reaction]
    rule_ids: tuple[str, ...]  # table order, for one-hot reaction features

    def fragment_of(self, atom_idx: int) -> int:
        for i, frag in enumerate(self.fragments):
            if atom_idx in frag:
                return i
        raise KeyError(f"atom {atom_idx} not in any fragment")


class RuleTableError(ValueError):
    pass


def load_brics_rules(path=None) -> list[BricsRule]:
    """Load cleavage rules from a TSV (rule_id, left_smarts, right_smarts).

    Without a path, the bundled default table ships eight rules covering
    amide, ester, ether, amine, ring junction, sulfonamide, olefin, and
    aromatic-aliphatic cleavages.
    """
    if path is None:
        text = resources.files("hmglearn.data").joinpath("brics_rules.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rules: list[BricsRule] = []
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise RuleTableError(f"line {line_no}: expected 3 tab-separated fields")
        rid, left, right = parts
        if rid in seen:
            raise RuleTableError(f"line {line_no}: duplicate rule id '{rid}'")
        seen.add(rid)
        rules.append(BricsRule(rule_id=rid, left=parse_smarts(left), right=parse_smarts(right)))
    if not rules:
        raise RuleTableError("rule table is empty")
    return rules


def brics_fragment(mol: MolecularGraph, rules: list[BricsRule]) -> FragmentSet:
    """Break matching acyclic single bonds and return the fragment partition."""
    broken: list[tuple[int, str]] = []  # (bond index, rule id)
    for b_idx, bond in enumerate(mol.bonds):
        if bond.order != "single" or bond.ring_member:
            continue
        u, v = bond.endpoints
        rule_hit = None
        for rule in rules:
            if (matches_at(rule.left, mol, u) and matches_at(rule.right, mol, v)) or (
                matches_at(rule.left, mol, v) and matches_at(rule.right, mol, u)
            ):
                rule_hit = rule.rule_id
                break
        if rule_hit is not None:
            broken.append((b_idx, rule_hit))

    broken_set = {b for b, _ in broken}
    adj: dict[int, list[int]] = {a.index: [] for a in mol.atoms}
    for b_idx, bond in enumerate(mol.bonds):
        if b_idx in broken_set:
            continue
        i, j = bond.endpoints
        adj[i].append(j)
        adj[j].append(i)

    assigned: dict[int, int] = {}
    fragments: list[frozenset[int]] = []
    for start in range(len(mol.atoms)):
        if start in assigned:
            continue
        component = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in component:
                    component.add(w)
                    stack.append(w)
        frag_idx = len(fragments)
        fragments.append(frozenset(component))
        for a in component:
            assigned[a] = frag_idx

    reactions = [
        Reaction(
            fragment_pair=(assigned[mol.bonds[b_idx].endpoints[0]],
                           assigned[mol.bonds[b_idx].endpoints[1]]),
            broken_bond=mol.bonds[b_idx].endpoints,
            rule_id=rule_id,
        )
        for b_idx, rule_id in broken
    ]
    return FragmentSet(fragments=fragments, reactions=reactions,
                       rule_ids=tuple(r.rule_id for r in rules))
