import pytest

from hmglearn.fileio import (
    InputFormatError,
    read_config,
    read_ddi_pairs,
    read_smiles_list,
)


def test_smiles_list_with_ids_and_labels(tmp_path):
    path = tmp_path / "mols.tsv"
    path.write_text(
        "# comment line\n"
        "CCO\tDRG1\t1.0\t\n"
        "CCN\t\t0.0\t2.5\n"
        "CC\n",
        encoding="utf-8",
    )
    records = read_smiles_list(path)
    assert len(records) == 3
    assert records[0].drug_id == "DRG1"
    assert records[0].labels == [1.0, None]
    assert records[1].drug_id is None
    assert records[1].labels == [0.0, 2.5]
    assert records[1].mol_id == "mol3"
    assert records[2].labels == []


def test_smiles_list_errors_cite_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("CCO\t\tok\n", encoding="utf-8")
    with pytest.raises(InputFormatError) as err:
        read_smiles_list(path)
    assert err.value.line_no == 1


def test_empty_smiles_list_rejected(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("# nothing\n", encoding="utf-8")
    with pytest.raises(InputFormatError):
        read_smiles_list(path)


def test_ddi_pairs(tmp_path):
    path = tmp_path / "pairs.tsv"
    path.write_text("CCO\tCCN\t1\nCC\tCCO\t0\n", encoding="utf-8")
    records = read_ddi_pairs(path)
    assert [(r.smiles_a, r.smiles_b, r.label) for r in records] == [
        ("CCO", "CCN", 1), ("CC", "CCO", 0),
    ]
    bad = tmp_path / "badpairs.tsv"
    bad.write_text("CCO\tCCN\t2\n", encoding="utf-8")
    with pytest.raises(InputFormatError):
        read_ddi_pairs(bad)


def test_config_round_trip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# run settings\nseed=7\ntau=0.2\nsmiles=data/mols.tsv\n",
                    encoding="utf-8")
    cfg = read_config(path)
    assert cfg == {"seed": "7", "tau": "0.2", "smiles": "data/mols.tsv"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("seed 7\n", encoding="utf-8")
    with pytest.raises(InputFormatError):
        read_config(bad)
