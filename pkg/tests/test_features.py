import numpy as np
import pytest

from hmglearn.chem import (
    ATOM_FEATURE_DIM,
    BOND_FEATURE_DIM,
    atom_features,
    bond_features,
    parse_smiles,
    path_fingerprint,
)

CORPUS = [
    "C", "CCO", "c1ccccc1", "CC(=O)NC1CC1", "C[N+](=O)[O-]", "CS(=O)(=O)N",
    "CC(C)Cc1ccc(C)cc1", "OCC(O)CO", "C#N", "ClCBr", "c1cc[nH]c1",
]


def test_isolated_carbon_features():
    mol = parse_smiles("C")
    vec = atom_features(mol.atoms[0], mol)
    assert vec.shape == (ATOM_FEATURE_DIM,)
    assert vec[2] == 1.0  # element C slot
    assert vec[11] == 1.0  # degree 0
    assert vec[17] == 0.0  # charge
    assert vec[19 + 4] == 1.0  # four hydrogens
    assert vec[24] == 0.0  # not in a ring


def test_ethanol_oxygen_features():
    mol = parse_smiles("CCO")
    vec = atom_features(mol.atoms[2], mol)
    assert vec[4] == 1.0  # element O slot
    assert vec[11 + 1] == 1.0  # degree 1
    assert vec[18] == 0.0  # not aromatic
    assert vec[19 + 1] == 1.0  # one hydrogen


def test_bond_feature_vectors():
    mol = parse_smiles("CCO")
    assert np.array_equal(bond_features(mol.bonds[0]), [1, 0, 0, 0, 0])
    ring = parse_smiles("c1ccccc1")
    assert np.array_equal(bond_features(ring.bonds[0]), [0, 0, 0, 1, 1])


@pytest.mark.parametrize("smiles", CORPUS)
def test_features_bounded_on_corpus(smiles):
    mol = parse_smiles(smiles)
    for atom in mol.atoms:
        vec = atom_features(atom, mol)
        assert vec.shape == (ATOM_FEATURE_DIM,)
        assert np.all(np.isfinite(vec))
        assert np.all(vec >= -1.0) and np.all(vec <= 1.0)
    for bond in mol.bonds:
        vec = bond_features(bond)
        assert vec.shape == (BOND_FEATURE_DIM,)
        assert vec[:4].sum() == 1.0
        assert vec[4] in (0.0, 1.0)


def test_fingerprint_ignores_atom_numbering():
    a = path_fingerprint(parse_smiles("CCO"))
    b = path_fingerprint(parse_smiles("OCC"))
    assert np.array_equal(a, b)


def test_fingerprint_distinguishes_structures():
    a = path_fingerprint(parse_smiles("CCO"))
    b = path_fingerprint(parse_smiles("CCN"))
    assert not np.array_equal(a, b)


def test_fingerprint_binary_and_stable():
    fp = path_fingerprint(parse_smiles("CC(=O)NC1CC1"))
    assert set(np.unique(fp)) <= {0.0, 1.0}
    assert np.array_equal(fp, path_fingerprint(parse_smiles("CC(=O)NC1CC1")))
