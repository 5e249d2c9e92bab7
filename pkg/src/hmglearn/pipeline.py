"""Glue from raw inputs (SMILES records, knowledge graphs, embeddings) to
ready-to-encode view sets and pretraining items."""
from __future__ import annotations

from .batching import PretrainItem
from .chem.fragment import BricsRule, brics_fragment
from .chem.features import path_fingerprint
from .chem.smiles import parse_smiles
from .fileio import MoleculeRecord
from .hmg import HMG, build_drug_view, build_element_view, build_molecule_view
from .kg import EmbeddingTable, KnowledgeGraph


def build_views(smiles: str, drug_id: str | None, ekg: KnowledgeGraph | None,
                emb: EmbeddingTable | None, rules: list[BricsRule], k_pe: int,
                views: tuple[str, ...] = ("M", "EM", "DM")) -> dict[str, HMG]:
    """Parse, fragment, and build the requested views for one molecule.

    The drug view is produced only when requested, a drug id is present,
    and the id resolves in the embedding table."""
    mol = parse_smiles(smiles)
    frags = brics_fragment(mol, rules)
    base = build_molecule_view(mol, frags, k_pe=k_pe)
    out: dict[str, HMG] = {}
    if "M" in views:
        out["M"] = base
    if "EM" in views:
        if ekg is None:
            raise ValueError("element view requested without an elemental KG")
        out["EM"] = build_element_view(base, ekg)
    if "DM" in views and drug_id is not None and emb is not None and drug_id in emb:
        out["DM"] = build_drug_view(base, None, emb, drug_id)
    return out


def load_pretrain_items(records: list[MoleculeRecord], ekg: KnowledgeGraph,
                        emb: EmbeddingTable, rules: list[BricsRule],
                        k_pe: int) -> list[PretrainItem]:
    """One PretrainItem per record: always M and EM views, plus DM when the
    drug id resolves in the embedding table."""
    items = []
    for record in records:
        views = build_views(record.smiles, record.drug_id, ekg, emb, rules, k_pe)
        items.append(PretrainItem(
            mol_id=record.mol_id,
            smiles=record.smiles,
            drug_id=record.drug_id,
            fingerprint=path_fingerprint(parse_smiles(record.smiles)),
            views=views,
        ))
    return items
