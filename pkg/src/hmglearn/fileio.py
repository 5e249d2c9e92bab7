"""Line-oriented input formats: SMILES lists, DDI pairs, key=value configs.

All readers skip blank lines and ``#`` comments and report errors with
1-based line numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field


class InputFormatError(ValueError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


@dataclass
class MoleculeRecord:
    line_no: int
    smiles: str
    drug_id: str | None = None
    labels: list[float | None] = field(default_factory=list)

    @property
    def mol_id(self) -> str:
        return self.drug_id if self.drug_id else f"mol{self.line_no}"


def read_smiles_list(path) -> list[MoleculeRecord]:
    """``smiles[TAB]optional_drug_id[TAB]optional_label(s)`` per line;
    empty label fields become None (missing-label mask)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            smiles = parts[0].strip()
            if not smiles:
                raise InputFormatError(path, line_no, "empty SMILES field")
            drug_id = parts[1].strip() if len(parts) > 1 and parts[1].strip() else None
            labels: list[float | None] = []
            for col, cell in enumerate(parts[2:], start=3):
                cell = cell.strip()
                if not cell:
                    labels.append(None)
                    continue
                try:
                    labels.append(float(cell))
                except ValueError:
                    raise InputFormatError(path, line_no, f"bad label in column {col}")
            records.append(MoleculeRecord(line_no=line_no, smiles=smiles,
                                          drug_id=drug_id, labels=labels))
    if not records:
        raise InputFormatError(path, 0, "no molecules")
    return records


@dataclass
class DdiRecord:
    line_no: int
    smiles_a: str
    smiles_b: str
    label: int


def read_ddi_pairs(path) -> list[DdiRecord]:
    """``smiles_a[TAB]smiles_b[TAB]label`` with label in {0, 1}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputFormatError(path, line_no, "expected 3 tab-separated fields")
            try:
                label = int(parts[2])
            except ValueError:
                raise InputFormatError(path, line_no, "label must be 0 or 1")
            if label not in (0, 1):
                raise InputFormatError(path, line_no, "label must be 0 or 1")
            records.append(DdiRecord(line_no=line_no, smiles_a=parts[0].strip(),
                                     smiles_b=parts[1].strip(), label=label))
    if not records:
        raise InputFormatError(path, 0, "no pairs")
    return records


def read_config(path) -> dict[str, str]:
    """key=value lines; later keys override earlier ones."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputFormatError(path, line_no, "expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
