"""Command-line entry points: build-hmg, pretrain, finetune, predict, eval,
export-attention.

Settings resolve as defaults < config file (--config, key=value lines) <
command-line flags. The seed is mandatory and is the only source of
randomness. Exit codes: 0 success, 1 input error, 2 numeric error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from .autodiff import load_checkpoint, save_checkpoint
from .batching import BatchingError
from .chem.fragment import RuleTableError, brics_fragment, load_brics_rules
from .chem.smiles import SmilesError, parse_smiles
from .contrastive import NoNegatives, PretrainConfig, pretrain
from .encoder import EncoderConfig, EncoderState, FeatureSchema, encode
from .fileio import InputFormatError, read_config, read_ddi_pairs, read_smiles_list
from .finetune import (
    DdiTask,
    FinetuneConfig,
    FinetuneError,
    PropertyTask,
    finetune,
    predict_property,
)
from .hmg import HmgError, build_molecule_view, serialize
from .kg import KgError, load_embeddings, load_triples, train_transe
from .metrics import DegenerateLabels, metrics
from .pipeline import build_views, load_pretrain_items

INPUT_ERRORS = (
    InputFormatError, SmilesError, KgError, RuleTableError, HmgError,
    BatchingError, FinetuneError, NoNegatives, DegenerateLabels,
    ad.CheckpointError, FileNotFoundError, ValueError, KeyError,
)

# key -> (type, default); None defaults mean "must be provided when used".
SETTINGS = {
    "seed": (int, None),
    "views": (str, "M,EM"),
    "k_pe": (int, 8),
    "d": (int, 64),
    "L": (int, 3),
    "K": (int, 4),
    "leaky_slope": (float, 0.01),
    "pool_ratio": (float, 0.5),
    "d_z": (int, 32),
    "N": (int, 10),
    "n": (int, 1),
    "tau": (float, 0.1),
    "epochs": (int, 5),
    "step_size": (float, 1e-3),
    "max_steps": (int, 0),  # 0 means no cap
    "d_kg": (int, 16),
    "transe_epochs": (int, 100),
    "transe_margin": (float, 1.0),
    "transe_step": (float, 0.01),
    "patience": (int, 10),
    "folds": (int, 5),
    "batch_size": (int, 32),
    "symmetrize": (int, 1),
    "split_mode": (str, "transductive"),
    "task": (str, "classification"),
    "mp_tasks": (int, 1),
    "smiles": (str, None),
    "elemental_triples": (str, None),
    "drug_triples": (str, None),
    "embeddings": (str, None),
    "rules": (str, None),
    "pairs": (str, None),
    "checkpoint": (str, None),
    "predictions": (str, None),
    "out": (str, None),
}


def resolve_settings(args) -> dict:
    values = {key: default for key, (_, default) in SETTINGS.items()}
    if getattr(args, "config", None):
        for key, raw in read_config(args.config).items():
            if key not in SETTINGS:
                raise InputFormatError(args.config, 0, f"unknown config key '{key}'")
            values[key] = SETTINGS[key][0](raw)
    for key in SETTINGS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = SETTINGS[key][0](flag)
    if values["seed"] is None:
        raise ValueError("a seed is required (--seed or config 'seed')")
    return values


def require(values, *keys):
    for key in keys:
        if values[key] is None:
            raise ValueError(f"missing required setting '{key}'")


def encoder_config(values) -> EncoderConfig:
    return EncoderConfig(
        d=values["d"], layers=values["L"], heads=values["K"], k_pe=values["k_pe"],
        leaky_slope=values["leaky_slope"], pool_ratio=values["pool_ratio"],
        seed=values["seed"],
    )


def load_rules(values):
    return load_brics_rules(values["rules"])


def resolve_embeddings(values):
    """Prefer an embeddings file; otherwise train translational embeddings
    from the drug triples."""
    if values["embeddings"]:
        return load_embeddings(values["embeddings"])
    if values["drug_triples"]:
        dkg = load_triples(values["drug_triples"])
        return train_transe(dkg, dim=values["d_kg"], epochs=values["transe_epochs"],
                            margin=values["transe_margin"],
                            step_size=values["transe_step"], seed=values["seed"])
    return None


def write_model_config(path, values, state: EncoderState) -> None:
    keys = ("d", "L", "K", "k_pe", "leaky_slope", "pool_ratio", "d_z", "seed")
    with open(path, "w", encoding="utf-8") as fh:
        for key in keys:
            fh.write(f"{key}={values[key]}\n")
        fh.write(f"mp_tasks={state.mp_tasks}\n")


def state_from_checkpoint(values) -> EncoderState:
    require(values, "checkpoint")
    arrays, digest = load_checkpoint(values["checkpoint"])
    state = EncoderState(encoder_config(values), FeatureSchema.default(),
                         d_z=values["d_z"], mp_tasks=values["mp_tasks"])
    if digest != state.config_digest():
        raise ad.CheckpointError(
            "checkpoint was produced with a different architecture; "
            "pass the model config that was written next to it"
        )
    state.load_arrays(arrays)
    return state


# ---------------------------------------------------------------------------
# Subcommands


def cmd_build_hmg(args) -> int:
    values = resolve_settings(args)
    require(values, "smiles", "out")
    views = tuple(v.strip() for v in values["views"].split(",") if v.strip())
    for view in views:
        if view not in ("M", "EM", "DM"):
            raise ValueError(f"unknown view '{view}'")
    records = read_smiles_list(values["smiles"])
    rules = load_rules(values)
    ekg = load_triples(values["elemental_triples"]) if "EM" in views else None
    emb = resolve_embeddings(values) if "DM" in views else None
    os.makedirs(values["out"], exist_ok=True)
    manifest = []
    for record in records:
        try:
            built = build_views(record.smiles, record.drug_id, ekg, emb, rules,
                                values["k_pe"], views=views)
        except SmilesError as exc:
            raise SmilesError(f"line {record.line_no}: {exc}") from exc
        for view, hmg in built.items():
            name = f"{record.mol_id}.{view}.hmg"
            path = os.path.join(values["out"], name)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(serialize(hmg))
            manifest.append(f"{record.line_no}\t{record.mol_id}\t{view}\t{name}")
    with open(os.path.join(values["out"], "manifest.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"wrote {len(manifest)} HMG files to {values['out']}")
    return 0


def cmd_pretrain(args) -> int:
    values = resolve_settings(args)
    require(values, "smiles", "elemental_triples", "out")
    records = read_smiles_list(values["smiles"])
    rules = load_rules(values)
    ekg = load_triples(values["elemental_triples"])
    emb = resolve_embeddings(values)
    if emb is None:
        raise ValueError("pretraining needs drug embeddings "
                         "(--embeddings or --drug_triples)")
    items = load_pretrain_items(records, ekg, emb, rules, values["k_pe"])
    state = EncoderState(encoder_config(values), FeatureSchema.default(),
                         d_z=values["d_z"])
    config = PretrainConfig(
        batch_size=values["N"], complement=values["n"], tau=values["tau"],
        epochs=values["epochs"], step_size=values["step_size"],
        seed=values["seed"],
        max_steps=values["max_steps"] or None,
    )
    os.makedirs(values["out"], exist_ok=True)
    result = pretrain(items, state, config,
                      trace_path=os.path.join(values["out"], "trace.csv"))
    save_checkpoint(os.path.join(values["out"], "checkpoint.ckpt"),
                    state.named_arrays(), state.config_digest())
    write_model_config(os.path.join(values["out"], "model.cfg"), values, state)
    print(f"pretrained {len(result.trace)} steps; "
          f"final loss {result.trace[-1]['loss_total']:.6f}" if result.trace
          else "no steps run")
    return 0


def _labeled_property_task(records, kind):
    width = max(len(r.labels) for r in records)
    if width == 0:
        raise ValueError("no label columns in the SMILES list")
    labels = np.zeros((len(records), width))
    mask = np.zeros((len(records), width), dtype=bool)
    for i, record in enumerate(records):
        for t, value in enumerate(record.labels):
            if value is not None:
                labels[i, t] = value
                mask[i, t] = True
    return PropertyTask(kind=kind, task_count=width, labels=labels, mask=mask)


def cmd_finetune(args) -> int:
    values = resolve_settings(args)
    require(values, "out")
    rules = load_rules(values)
    config = FinetuneConfig(
        epochs=values["epochs"], patience=values["patience"],
        batch_size=values["batch_size"], step_size=values["step_size"],
        seed=values["seed"], symmetrize=bool(values["symmetrize"]),
        folds=values["folds"],
    )
    if values["checkpoint"]:
        state = state_from_checkpoint(values)
    else:
        state = EncoderState(encoder_config(values), FeatureSchema.default(),
                             d_z=values["d_z"], mp_tasks=values["mp_tasks"])

    if values["task"] == "ddi":
        require(values, "pairs")
        pair_records = read_ddi_pairs(values["pairs"])
        smiles_index: dict[str, int] = {}
        hmgs = []
        pairs, labels = [], []
        for record in pair_records:
            for smiles in (record.smiles_a, record.smiles_b):
                if smiles not in smiles_index:
                    mol = parse_smiles(smiles)
                    smiles_index[smiles] = len(hmgs)
                    hmgs.append(build_molecule_view(
                        mol, brics_fragment(mol, rules), k_pe=values["k_pe"]))
            pairs.append((smiles_index[record.smiles_a], smiles_index[record.smiles_b]))
            labels.append(record.label)
        task = DdiTask(pairs=pairs, labels=np.array(labels, dtype=float),
                       split_mode=values["split_mode"])
    else:
        require(values, "smiles")
        kind = ("binary-classification" if values["task"] == "classification"
                else "regression")
        records = read_smiles_list(values["smiles"])
        hmgs = []
        for record in records:
            try:
                mol = parse_smiles(record.smiles)
            except SmilesError as exc:
                raise SmilesError(f"line {record.line_no}: {exc}") from exc
            hmgs.append(build_molecule_view(mol, brics_fragment(mol, rules),
                                            k_pe=values["k_pe"]))
        task = _labeled_property_task(records, kind)

    os.makedirs(values["out"], exist_ok=True)
    result = finetune(hmgs, task, state, config)
    save_checkpoint(os.path.join(values["out"], "checkpoint.ckpt"),
                    result.state.named_arrays(), result.state.config_digest())
    values["mp_tasks"] = result.state.mp_tasks
    write_model_config(os.path.join(values["out"], "model.cfg"), values, result.state)
    with open(os.path.join(values["out"], "report.json"), "w", encoding="utf-8") as fh:
        json.dump(result.report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(result.report["mean"], sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    values = resolve_settings(args)
    require(values, "smiles", "out")
    state = state_from_checkpoint(values)
    rules = load_rules(values)
    records = read_smiles_list(values["smiles"])
    rows = []
    for record in records:
        try:
            mol = parse_smiles(record.smiles)
        except SmilesError as exc:
            raise SmilesError(f"line {record.line_no}: {exc}") from exc
        hmg = build_molecule_view(mol, brics_fragment(mol, rules),
                                  k_pe=values["k_pe"])
        with ad.no_grad():
            scores = predict_property(hmg, state).data
        rows.append(record.mol_id + "\t" + "\t".join(repr(float(s)) for s in scores))
    with open(values["out"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {len(rows)} score rows to {values['out']}")
    return 0


def cmd_eval(args) -> int:
    values = resolve_settings(args)
    require(values, "predictions", "out")
    labels, scores = [], []
    with open(values["predictions"], encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InputFormatError(values["predictions"], line_no,
                                       "expected label<TAB>score")
            labels.append(float(parts[0]))
            scores.append(float(parts[1]))
    kind = ("binary-classification" if values["task"] == "classification"
            else "regression")
    report = metrics(labels, scores, kind)
    with open(values["out"], "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(report.as_dict(), sort_keys=True))
    return 0


def cmd_export_attention(args) -> int:
    values = resolve_settings(args)
    require(values, "smiles", "out")
    state = state_from_checkpoint(values)
    rules = load_rules(values)
    views = tuple(v.strip() for v in values["views"].split(",") if v.strip())
    ekg = load_triples(values["elemental_triples"]) if "EM" in views else None
    emb = resolve_embeddings(values) if "DM" in views else None
    records = read_smiles_list(values["smiles"])
    count = 0
    with open(values["out"], "w", encoding="utf-8") as fh:
        for record in records:
            built = build_views(record.smiles, record.drug_id, ekg, emb, rules,
                                values["k_pe"], views=views)
            for view, hmg in built.items():
                dump = encode(hmg, state, collect_attention=True).dump
                for row in dump.receiver_records() + dump.pool_records():
                    row = {"mol_id": record.mol_id, **row}
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
                    count += 1
    print(f"wrote {count} attention records to {values['out']}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmglearn",
        description="Heterogeneous molecular graph learning pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "build-hmg": (cmd_build_hmg, "Build and serialize HMG views"),
        "pretrain": (cmd_pretrain, "Contrastive pretraining"),
        "finetune": (cmd_finetune, "Fine-tune for property or DDI prediction"),
        "predict": (cmd_predict, "Per-molecule property scores"),
        "eval": (cmd_eval, "Metrics from a label/score file"),
        "export-attention": (cmd_export_attention, "Attention weight dump"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value settings file")
        for key in SETTINGS:
            p.add_argument(f"--{key}", default=None, help=argparse.SUPPRESS)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ad.NonFiniteValue as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
