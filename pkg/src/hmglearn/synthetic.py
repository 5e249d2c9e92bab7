"""Deterministic synthetic inputs for demos and desk-scale training runs.

Molecules are random bond trees over {C, N, O, S} with optional carbonyl
and phenyl decorations, emitted directly as valid SMILES. Knowledge
graphs mirror the hierarchy conventions of the triple loader.
"""
from __future__ import annotations

from .fileio import MoleculeRecord
from .rng import stream

# Remaining bonding slots once an atom already has one tree bond.
_TREE_CAPACITY = {"C": 3, "N": 2, "O": 1, "S": 1}
_ATOM_POOL = ["C", "C", "C", "C", "N", "O", "S"]


def random_smiles(seed: int, index: int, min_heavy: int = 3, max_heavy: int = 8) -> str:
    """One random tree-shaped molecule, deterministic in (seed, index)."""
    rng = stream(seed, "molecule", index)
    n = int(rng.integers(min_heavy, max_heavy + 1))
    symbols = [str(rng.choice(_ATOM_POOL))]
    capacity = [_TREE_CAPACITY[symbols[0]] + 1]
    children: list[list[int]] = [[]]
    for _ in range(n - 1):
        open_parents = [i for i in range(len(symbols)) if capacity[i] > 0]
        if not open_parents:
            break
        parent = int(rng.choice(open_parents))
        symbol = str(rng.choice(_ATOM_POOL))
        symbols.append(symbol)
        capacity.append(_TREE_CAPACITY[symbol])
        capacity[parent] -= 1
        children[parent].append(len(symbols) - 1)
        children.append([])

    decorations = [""] * len(symbols)
    carbons = [i for i, s in enumerate(symbols) if s == "C"]
    if carbons and rng.random() < 0.35:
        target = int(rng.choice([i for i in carbons if capacity[i] >= 2] or carbons))
        if capacity[target] >= 2:
            decorations[target] = "(=O)"
            capacity[target] -= 2
    if carbons and rng.random() < 0.25:
        target = int(rng.choice([i for i in carbons if capacity[i] >= 1] or carbons))
        if capacity[target] >= 1:
            decorations[target] += "(c1ccccc1)"
            capacity[target] -= 1

    def emit(node: int) -> str:
        text = symbols[node] + decorations[node]
        kids = children[node]
        for kid in kids[:-1]:
            text += "(" + emit(kid) + ")"
        if kids:
            text += emit(kids[-1])
        return text

    return emit(0)


def synthetic_molecules(count: int, drug_count: int, seed: int) -> list[MoleculeRecord]:
    """Random molecules; the first drug_count carry drug ids DRG0000..."""
    records = []
    for i in range(count):
        drug_id = f"DRG{i:04d}" if i < drug_count else None
        records.append(MoleculeRecord(line_no=i + 1, smiles=random_smiles(seed, i),
                                      drug_id=drug_id))
    return records


ELEMENTAL_KG_TEXT = """\
# Toy elemental hierarchy: class, element/group, and property levels.
ReactiveNonmetal\tkindIs\tclass
Nonmetals\tkindIs\tclass
ReactiveNonmetal\tisSubClassOf\tNonmetals
C\tbelongsTo\tReactiveNonmetal
N\tbelongsTo\tReactiveNonmetal
O\tbelongsTo\tReactiveNonmetal
S\tbelongsTo\tReactiveNonmetal
Weight1\tkindIs\tproperty
Weight2\tkindIs\tproperty
Period2\tkindIs\tproperty
Period3\tkindIs\tproperty
C\thasWeight\tWeight1
N\thasWeight\tWeight1
O\thasWeight\tWeight2
S\thasWeight\tWeight2
C\tisInPeriod\tPeriod2
N\tisInPeriod\tPeriod2
O\tisInPeriod\tPeriod2
S\tisInPeriod\tPeriod3
Hydroxyl\thasSmarts\t[OX2H1]
Carbonyl\thasSmarts\tC=O
Amine\thasSmarts\t[NX3]
Ether\thasSmarts\t[OX2H0]
Thiol\thasSmarts\t[SX2H1]
O\tisPartOf\tHydroxyl
O\tisPartOf\tCarbonyl
O\tisPartOf\tEther
C\tisPartOf\tCarbonyl
N\tisPartOf\tAmine
S\tisPartOf\tThiol
Hydroxyl\tcontainsElement\tOxygenBearing
Carbonyl\tcontainsElement\tOxygenBearing
Ether\tcontainsElement\tOxygenBearing
OxygenBearing\tkindIs\tother
"""


def write_elemental_kg(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ELEMENTAL_KG_TEXT)


def write_drug_kg(path, drug_ids: list[str], seed: int) -> None:
    """Drugs wired to shared genes/diseases so 2-hop structure exists and
    the translational trainer has signal."""
    rng = stream(seed, "drug-kg")
    genes = [f"GENE{i}" for i in range(6)]
    diseases = [f"DIS{i}" for i in range(4)]
    with open(path, "w", encoding="utf-8") as fh:
        for drug in drug_ids:
            fh.write(f"{drug}\tkindIs\tdrug\n")
            for gene in rng.choice(genes, size=int(rng.integers(1, 4)), replace=False):
                fh.write(f"{drug}\ttargets\t{gene}\n")
            for disease in rng.choice(diseases, size=int(rng.integers(1, 3)), replace=False):
                fh.write(f"{drug}\ttreats\t{disease}\n")


def write_smiles_list(path, records: list[MoleculeRecord],
                      label_fns: list | None = None) -> None:
    """SMILES list file, optionally with trailing computed label columns."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            row = [record.smiles, record.drug_id or ""]
            for fn in label_fns or []:
                value = fn(record.smiles)
                row.append("" if value is None else repr(float(value)))
            fh.write("\t".join(row).rstrip("\t") + "\n")


def contains_nitrogen(smiles: str) -> float:
    from .chem.smiles import parse_smiles

    return 1.0 if any(a.element == "N" for a in parse_smiles(smiles).atoms) else 0.0


def heavy_atom_count(smiles: str) -> float:
    from .chem.smiles import parse_smiles

    return float(len(parse_smiles(smiles).atoms))


def synthetic_ddi_pairs(count: int, seed: int):
    """Drug-pair records with a structural label: 1 when both molecules
    contain nitrogen. Returns (records_a, records_b, labels)."""
    rng = stream(seed, "ddi-pairs")
    pairs = []
    for i in range(count):
        a = random_smiles(seed + 1, int(rng.integers(10_000)))
        b = random_smiles(seed + 2, int(rng.integers(10_000)))
        label = int(contains_nitrogen(a) and contains_nitrogen(b))
        pairs.append((a, b, label))
    return pairs
