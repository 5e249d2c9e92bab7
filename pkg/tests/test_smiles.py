import pytest

from hmglearn.chem import (
    MultiComponentInput,
    UnbalancedBranch,
    UnclosedRing,
    UnknownElement,
    ValenceViolation,
    mol_from_text,
    mol_to_text,
    parse_smiles,
)


def test_ethanol():
    mol = parse_smiles("CCO")
    assert [a.element for a in mol.atoms] == ["C", "C", "O"]
    assert len(mol.bonds) == 2
    assert all(b.order == "single" for b in mol.bonds)
    assert [a.explicit_h for a in mol.atoms] == [3, 2, 1]
    assert mol.rings == []


def test_benzene():
    mol = parse_smiles("c1ccccc1")
    assert len(mol.atoms) == 6
    assert all(a.element == "C" and a.aromatic for a in mol.atoms)
    assert len(mol.bonds) == 6
    assert all(b.order == "aromatic" and b.ring_member for b in mol.bonds)
    assert len(mol.rings) == 1 and len(mol.rings[0]) == 6
    assert all(a.explicit_h == 1 for a in mol.atoms)


def test_branched_amide_with_ring():
    mol = parse_smiles("CC(=O)NC1CC1")
    assert len(mol.atoms) == 7
    assert len(mol.bonds) == 7
    assert len(mol.rings) == 1 and len(mol.rings[0]) == 3
    # CH3, C(=O), O, NH, ring CH, CH2, CH2
    assert [a.explicit_h for a in mol.atoms] == [3, 0, 0, 1, 1, 2, 2]
    ring_atoms = {a.index for a in mol.atoms if a.ring_member}
    assert ring_atoms == {4, 5, 6}


def test_charges_and_brackets():
    mol = parse_smiles("C[N+](=O)[O-]")
    charges = {a.element: a.formal_charge for a in mol.atoms if a.formal_charge}
    assert charges == {"N": 1, "O": -1}
    assert mol.atoms[0].explicit_h == 3
    assert mol.atoms[1].explicit_h == 0


def test_bracket_h_counts_are_verbatim():
    mol = parse_smiles("c1cc[nH]c1")
    n = next(a for a in mol.atoms if a.element == "N")
    assert n.explicit_h == 1 and n.aromatic


def test_multivalent_sulfur():
    mol = parse_smiles("CS(=O)(=O)N")
    s = next(a for a in mol.atoms if a.element == "S")
    assert s.explicit_h == 0
    n = next(a for a in mol.atoms if a.element == "N")
    assert n.explicit_h == 2


def test_two_letter_elements():
    mol = parse_smiles("ClCBr")
    assert [a.element for a in mol.atoms] == ["Cl", "C", "Br"]
    assert mol.atoms[1].explicit_h == 2


def test_fused_rings():
    mol = parse_smiles("c1ccc2ccccc2c1")
    assert len(mol.atoms) == 10
    assert len(mol.bonds) == 11
    assert len(mol.rings) == 2
    assert sum(a.explicit_h for a in mol.atoms) == 8


def test_stereo_discarded_with_warning():
    with pytest.warns(UserWarning):
        mol = parse_smiles("C/C=C/C")
    assert len(mol.atoms) == 4
    with pytest.warns(UserWarning):
        mol2 = parse_smiles("C[C@@H](N)O")
    assert len(mol2.atoms) == 4


@pytest.mark.parametrize(
    "bad,exc",
    [
        ("CCX", UnknownElement),
        ("[Zz]", UnknownElement),
        ("C1CC", UnclosedRing),
        ("C(C", UnbalancedBranch),
        ("CC)", UnbalancedBranch),
        ("CC.O", MultiComponentInput),
        ("C(C)(C)(C)(C)C", ValenceViolation),
        ("O=C=O=C", ValenceViolation),
        ("cC", ValenceViolation),  # aromatic atom outside any ring
    ],
)
def test_parse_errors(bad, exc):
    with pytest.raises(exc):
        parse_smiles(bad)


def test_parse_is_deterministic():
    a = mol_to_text(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"))
    b = mol_to_text(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"))
    assert a == b


def test_dump_round_trip():
    mol = parse_smiles("CC(=O)NC1CC1")
    text = mol_to_text(mol)
    again = mol_from_text(text)
    assert mol_to_text(again) == text


def test_ring_flags_consistent_with_rings():
    mol = parse_smiles("C1CC1CCC2CCC2")
    ring_atoms = {a for ring in mol.rings for a in ring}
    for atom in mol.atoms:
        assert atom.ring_member == (atom.index in ring_atoms)
    for bond in mol.bonds:
        i, j = bond.endpoints
        in_some_ring = any(
            i in ring and j in ring
            and (abs(ring.index(i) - ring.index(j)) in (1, len(ring) - 1))
            for ring in mol.rings
        )
        assert bond.ring_member == in_some_ring
