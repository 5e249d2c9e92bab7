from itertools import permutations

import pytest

from hmglearn.chem import (
    SmartsError,
    load_brics_rules,
    match_smarts,
    matches_at,
    parse_smarts,
    parse_smiles,
    pattern_automorphisms,
)


def brute_force_matches(pattern, mol):
    """Oracle: enumerate every injective vertex mapping, filter by all
    constraints, dedupe up to pattern automorphism, sort."""
    n_pat = len(pattern.pattern_atoms)
    hits = []
    for perm in permutations(range(len(mol.atoms)), n_pat):
        if not all(
            c.matches(mol, perm[i]) for i, c in enumerate(pattern.pattern_atoms)
        ):
            continue
        ok = True
        for bc in pattern.pattern_bonds:
            i, j = bc.endpoints
            bond = mol.bond_between(perm[i], perm[j])
            if bond is None or not bc.matches_order(bond.order):
                ok = False
                break
        if ok:
            hits.append(perm)
    autos = pattern_automorphisms(pattern)
    canonical = {
        min(tuple(hit[p[i]] for i in range(n_pat)) for p in autos) for hit in hits
    }
    return sorted(canonical)


def test_acetal_pattern_from_knowledge_graph_matches():
    pattern = parse_smarts("O[CH1][OX2H0]")
    mol = parse_smiles("COC(C)OC")
    hits = match_smarts(pattern, mol)
    assert hits
    # Every hit is centered on the acetal carbon (index 2).
    assert all(m[1] == 2 for m in hits)


def test_no_nitrogen_means_no_match():
    assert match_smarts(parse_smarts("N"), parse_smiles("CCO")) == []


def test_aromatic_vs_aliphatic_case():
    benzene = parse_smiles("c1ccccc1")
    assert match_smarts(parse_smarts("c"), benzene)
    assert match_smarts(parse_smarts("C"), benzene) == []


def test_connection_count_includes_hydrogens():
    mol = parse_smiles("CO")  # methanol: O has 1 neighbor + 1 H
    assert match_smarts(parse_smarts("[OX2]"), mol)
    assert match_smarts(parse_smarts("[OX2H0]"), mol) == []


def test_ring_constraint():
    mol = parse_smiles("C1CC1C")
    in_ring = match_smarts(parse_smarts("[CR]"), mol)
    assert sorted(m[0] for m in in_ring) == [0, 1, 2]
    out_ring = match_smarts(parse_smarts("[CR0]"), mol)
    assert [m[0] for m in out_ring] == [3]


def test_charge_constraint():
    mol = parse_smiles("C[N+](=O)[O-]")
    assert [m[0] for m in match_smarts(parse_smarts("[N+]"), mol)] == [1]
    assert [m[0] for m in match_smarts(parse_smarts("[O-]"), mol)] == [3]


def test_bond_order_constraints():
    mol = parse_smiles("C=CC#CC")
    assert len(match_smarts(parse_smarts("C=C"), mol)) == 1
    assert len(match_smarts(parse_smarts("C#C"), mol)) == 1
    assert len(match_smarts(parse_smarts("C-C"), mol)) == 2


def test_automorphism_dedup_symmetric_pattern():
    # O-C-O is reversal-symmetric: each embedding counted once.
    pattern = parse_smarts("OCO")
    mol = parse_smiles("OCO")
    assert match_smarts(pattern, mol) == [(0, 1, 2)]


def test_matches_at_anchoring():
    pattern = parse_smarts("C=O")
    mol = parse_smiles("CC(=O)N")
    assert matches_at(pattern, mol, 1)
    assert not matches_at(pattern, mol, 0)
    assert not matches_at(pattern, mol, 2)  # O side, element mismatch


@pytest.mark.parametrize(
    "smiles",
    [
        "CCO", "c1ccccc1", "CC(=O)NC1CC1", "COC(C)OC", "C[N+](=O)[O-]",
        "CS(=O)(=O)N", "c1cc[nH]c1", "CC(C)Cc1ccc(C)cc1", "O=C1CCCC1",
        "ClCBr", "C#N", "OCC(O)CO",
    ],
)
def test_matcher_equals_brute_force_on_rule_table(smiles):
    mol = parse_smiles(smiles)
    assert len(mol.atoms) <= 12
    patterns = [parse_smarts(p) for p in (
        "O[CH1][OX2H0]", "C=O", "[NX3]", "[OX2H0]", "[CX4]", "[NX3H0]",
        "[R]", "[CX4R0]", "S(=O)=O", "C=C", "c", "N", "OCO",
    )]
    for rule in load_brics_rules():
        patterns.extend([rule.left, rule.right])
    for pattern in patterns:
        assert match_smarts(pattern, mol) == brute_force_matches(pattern, mol)


def test_pattern_errors():
    for bad in ["", "C(C", "C1CC", "[Q]", "C.C", "[C;$(C=O)]"]:
        with pytest.raises(SmartsError):
            parse_smarts(bad)


def test_pattern_connectivity_required():
    with pytest.raises(SmartsError):
        parse_smarts("C.O")
