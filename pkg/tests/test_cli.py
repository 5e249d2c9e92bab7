import json

import numpy as np
import pytest

from hmglearn.cli import main
from hmglearn.synthetic import (
    contains_nitrogen,
    heavy_atom_count,
    synthetic_molecules,
    write_drug_kg,
    write_elemental_kg,
    write_smiles_list,
)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    records = synthetic_molecules(24, 8, seed=100)
    write_smiles_list(root / "mols.tsv", records)
    write_smiles_list(root / "labeled.tsv", records, label_fns=[contains_nitrogen])
    write_smiles_list(root / "regression.tsv", records, label_fns=[heavy_atom_count])
    write_elemental_kg(root / "elements.tsv")
    write_drug_kg(root / "drugs.tsv", [r.drug_id for r in records if r.drug_id],
                  seed=100)
    return root


def run(argv):
    return main([str(a) for a in argv])


def test_build_hmg_writes_files_and_manifest(workspace, tmp_path):
    out = tmp_path / "hmgs"
    code = run(["build-hmg", "--smiles", workspace / "mols.tsv",
                "--elemental_triples", workspace / "elements.tsv",
                "--views", "M,EM", "--seed", "3", "--out", out])
    assert code == 0
    manifest = (out / "manifest.tsv").read_text().splitlines()
    assert len(manifest) == 48  # 24 molecules x 2 views
    first = manifest[0].split("\t")
    assert (out / first[3]).exists()


def test_build_hmg_reports_bad_line(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("CCO\nC1CC\n", encoding="utf-8")
    code = run(["build-hmg", "--smiles", bad, "--views", "M",
                "--seed", "1", "--out", tmp_path / "o"])
    assert code == 1
    err = capsys.readouterr().err
    assert "line 2" in err


def test_build_hmg_requires_seed(workspace, tmp_path):
    code = run(["build-hmg", "--smiles", workspace / "mols.tsv",
                "--views", "M", "--out", tmp_path / "o"])
    assert code == 1


def test_build_hmg_drug_views(workspace, tmp_path):
    out = tmp_path / "dm"
    code = run(["build-hmg", "--smiles", workspace / "mols.tsv",
                "--elemental_triples", workspace / "elements.tsv",
                "--drug_triples", workspace / "drugs.tsv",
                "--transe_epochs", "20", "--views", "M,EM,DM",
                "--seed", "3", "--out", out])
    assert code == 0
    manifest = (out / "manifest.tsv").read_text().splitlines()
    # 24 molecules x (M, EM) + 8 drug-tagged x DM
    assert len(manifest) == 56


def test_pretrain_deterministic_and_round_trip(workspace, tmp_path):
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        code = run([
            "pretrain", "--smiles", workspace / "mols.tsv",
            "--elemental_triples", workspace / "elements.tsv",
            "--drug_triples", workspace / "drugs.tsv",
            "--transe_epochs", "10",
            "--seed", "17", "--out", out,
            "--d", "8", "--L", "1", "--K", "2", "--k_pe", "2", "--d_z", "4",
            "--N", "6", "--n", "1", "--epochs", "1", "--max_steps", "2",
        ])
        assert code == 0
        outs.append(out)
    a, b = outs
    assert (a / "checkpoint.ckpt").read_bytes() == (b / "checkpoint.ckpt").read_bytes()
    assert (a / "trace.csv").read_text() == (b / "trace.csv").read_text()
    lines = (a / "trace.csv").read_text().splitlines()
    assert lines[0] == "step,loss_total,loss_M_EM,loss_M_DM,loss_EM_DM"
    assert len(lines) == 3


def test_finetune_predict_eval_pipeline(workspace, tmp_path):
    out = tmp_path / "ft"
    code = run([
        "finetune", "--smiles", workspace / "labeled.tsv",
        "--task", "classification", "--seed", "5", "--out", out,
        "--d", "8", "--L", "1", "--K", "2", "--k_pe", "2", "--d_z", "4",
        "--epochs", "2", "--patience", "2", "--folds", "2", "--batch_size", "8",
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert "mean" in report and "folds" in report

    scores = tmp_path / "scores.tsv"
    code = run([
        "predict", "--smiles", workspace / "mols.tsv",
        "--checkpoint", out / "checkpoint.ckpt",
        "--config", out / "model.cfg",
        "--out", scores,
    ])
    assert code == 0
    rows = scores.read_text().splitlines()
    assert len(rows) == 24
    assert all(len(r.split("\t")) == 2 for r in rows)

    # Perfect predictions give ROC-AUC 1.0 through cmd_eval.
    preds = tmp_path / "preds.tsv"
    preds.write_text("1\t0.9\n1\t0.8\n0\t0.2\n0\t0.1\n", encoding="utf-8")
    report_path = tmp_path / "eval.json"
    code = run(["eval", "--predictions", preds, "--task", "classification",
                "--seed", "0", "--out", report_path])
    assert code == 0
    eval_report = json.loads(report_path.read_text())
    assert eval_report["roc_auc"] == 1.0


def test_finetune_ddi_cli(workspace, tmp_path):
    pairs = tmp_path / "pairs.tsv"
    records = synthetic_molecules(12, 12, seed=55)
    rows = []
    for i in range(0, 12, 2):
        a, b = records[i].smiles, records[i + 1].smiles
        rows.append(f"{a}\t{b}\t{i % 4 == 0 and 1 or 0}")
    pairs.write_text("\n".join(rows) + "\n", encoding="utf-8")
    out = tmp_path / "ddi"
    code = run([
        "finetune", "--task", "ddi", "--pairs", pairs,
        "--split_mode", "transductive", "--seed", "9", "--out", out,
        "--d", "8", "--L", "1", "--K", "2", "--k_pe", "2", "--d_z", "4",
        "--epochs", "2", "--patience", "2", "--batch_size", "4",
    ])
    assert code == 0
    assert (out / "report.json").exists()


def test_export_attention(workspace, tmp_path):
    pre = tmp_path / "pre"
    code = run([
        "pretrain", "--smiles", workspace / "mols.tsv",
        "--elemental_triples", workspace / "elements.tsv",
        "--drug_triples", workspace / "drugs.tsv", "--transe_epochs", "5",
        "--seed", "23", "--out", pre,
        "--d", "8", "--L", "1", "--K", "2", "--k_pe", "2", "--d_z", "4",
        "--N", "6", "--n", "1", "--epochs", "1", "--max_steps", "1",
    ])
    assert code == 0
    single = tmp_path / "single.tsv"
    single.write_text("CCO\n", encoding="utf-8")
    dump = tmp_path / "attention.jsonl"
    code = run([
        "export-attention", "--smiles", single,
        "--checkpoint", pre / "checkpoint.ckpt", "--config", pre / "model.cfg",
        "--views", "M", "--out", dump,
    ])
    assert code == 0
    rows = [json.loads(line) for line in dump.read_text().splitlines()]
    receiver_rows = [r for r in rows if "receiver_kind" in r]
    pool_rows = [r for r in rows if "pool_score_normalized_by_type" in r]
    # CCO molecule view: 4 nodes + 10 directed edges = 14 receivers + 4 nodes.
    assert len(receiver_rows) == 14
    assert len(pool_rows) == 4
    by_type = {}
    for row in pool_rows:
        by_type.setdefault(row["node_type"], 0.0)
        by_type[row["node_type"]] += row["pool_score_normalized_by_type"]
    for total in by_type.values():
        assert total == pytest.approx(1.0, abs=1e-9)
    for row in receiver_rows:
        if row["sender_ids"]:
            assert sum(row["weights"]) == pytest.approx(1.0, abs=1e-9)


def test_checkpoint_digest_mismatch(workspace, tmp_path):
    pre = tmp_path / "pre2"
    code = run([
        "pretrain", "--smiles", workspace / "mols.tsv",
        "--elemental_triples", workspace / "elements.tsv",
        "--drug_triples", workspace / "drugs.tsv", "--transe_epochs", "5",
        "--seed", "29", "--out", pre,
        "--d", "8", "--L", "1", "--K", "2", "--k_pe", "2", "--d_z", "4",
        "--N", "6", "--n", "1", "--epochs", "1", "--max_steps", "1",
    ])
    assert code == 0
    # Wrong architecture flags -> digest mismatch -> input error.
    code = run([
        "predict", "--smiles", workspace / "mols.tsv",
        "--checkpoint", pre / "checkpoint.ckpt",
        "--seed", "1", "--d", "16", "--L", "1", "--K", "2",
        "--out", tmp_path / "nope.tsv",
    ])
    assert code == 1
