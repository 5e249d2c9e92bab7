from .smiles import (
    Atom,
    Bond,
    MolecularGraph,
    MultiComponentInput,
    SmilesError,
    UnbalancedBranch,
    UnclosedRing,
    UnknownElement,
    ValenceViolation,
    mol_from_text,
    mol_to_text,
    parse_smiles,
)
from .smarts import (
    AtomConstraint,
    BondConstraint,
    SmartsError,
    SmartsPattern,
    match_smarts,
    matches_at,
    parse_smarts,
    pattern_automorphisms,
)
from .fragment import (
    BricsRule,
    FragmentSet,
    Reaction,
    RuleTableError,
    brics_fragment,
    load_brics_rules,
)
from .features import (
    ATOM_FEATURE_DIM,
    BOND_FEATURE_DIM,
    FINGERPRINT_BITS,
    atom_features,
    bond_features,
    path_fingerprint,
)

__all__ = [
    "Atom", "Bond", "MolecularGraph", "parse_smiles", "mol_to_text", "mol_from_text",
    "SmilesError", "UnknownElement", "UnclosedRing", "UnbalancedBranch",
    "MultiComponentInput", "ValenceViolation",
    "SmartsPattern", "AtomConstraint", "BondConstraint", "SmartsError",
    "parse_smarts", "match_smarts", "matches_at", "pattern_automorphisms",
    "BricsRule", "FragmentSet", "Reaction", "RuleTableError",
    "brics_fragment", "load_brics_rules",
    "ATOM_FEATURE_DIM", "BOND_FEATURE_DIM", "FINGERPRINT_BITS",
    "atom_features", "bond_features", "path_fingerprint",
]
