"""Amino-acid alphabet and per-residue physicochemical tables."""

import numpy as np

from .errors import InvalidResidueSymbol

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
INDEX = {aa: i for i, aa in enumerate(ALPHABET)}

THREE_TO_ONE = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F",
    "GLY": "G", "HIS": "H", "ILE": "I", "LYS": "K", "LEU": "L",
    "MET": "M", "ASN": "N", "PRO": "P", "GLN": "Q", "ARG": "R",
    "SER": "S", "THR": "T", "VAL": "V", "TRP": "W", "TYR": "Y",
}
ONE_TO_THREE = {v: k for k, v in THREE_TO_ONE.items()}

# Kyte-Doolittle hydropathy
HYDROPATHY = {
    "A": 1.8, "C": 2.5, "D": -3.5, "E": -3.5, "F": 2.8, "G": -0.4,
    "H": -3.2, "I": 4.5, "K": -3.9, "L": 3.8, "M": 1.9, "N": -3.5,
    "P": -1.6, "Q": -3.5, "R": -4.5, "S": -0.8, "T": -0.7, "V": 4.2,
    "W": -0.9, "Y": -1.3,
}
# net charge at pH 7 (His counted as +0.1)
CHARGE = {aa: 0.0 for aa in ALPHABET}
CHARGE.update({"D": -1.0, "E": -1.0, "K": 1.0, "R": 1.0, "H": 0.1})
POLAR = set("CDEHKNQRSTY")
AROMATIC = set("FHWY")
# average residue mass (Da)
MASS = {
    "A": 71.08, "C": 103.14, "D": 115.09, "E": 129.12, "F": 147.18,
    "G": 57.05, "H": 137.14, "I": 113.16, "K": 128.17, "L": 113.16,
    "M": 131.19, "N": 114.10, "P": 97.12, "Q": 128.13, "R": 156.19,
    "S": 87.08, "T": 101.10, "V": 99.13, "W": 186.21, "Y": 163.18,
}

N_PHYSCHEM = 5


def physchem(aa):
    """Five scalars: hydropathy/4.5, charge, polarity flag, mass/200, aromaticity flag."""
    return np.array([
        HYDROPATHY[aa] / 4.5,
        CHARGE[aa],
        1.0 if aa in POLAR else 0.0,
        MASS[aa] / 200.0,
        1.0 if aa in AROMATIC else 0.0,
    ])


PHYSCHEM_TABLE = np.stack([physchem(aa) for aa in ALPHABET])


def validate_sequence(seq):
    for pos, aa in enumerate(seq):
        if aa not in INDEX:
            raise InvalidResidueSymbol(f"invalid residue {aa!r} at position {pos}")
    return seq


def encode(seq):
    """Map a sequence to integer codes 0..19."""
    validate_sequence(seq)
    return np.fromiter((INDEX[aa] for aa in seq), dtype=np.int64, count=len(seq))


def decode(codes):
    return "".join(ALPHABET[int(c)] for c in codes)


def residue_features(seq):
    """Per-residue node features: 20-dim one-hot followed by the 5 physicochemical scalars."""
    codes = encode(seq)
    onehot = np.zeros((len(seq), len(ALPHABET)))
    onehot[np.arange(len(seq)), codes] = 1.0
    return np.concatenate([onehot, PHYSCHEM_TABLE[codes]], axis=1)


# Side-chain chi definitions (atom quadruples), standard IUPAC naming.
CHI_ATOMS = {
    "ARG": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "NE"), ("CG", "CD", "NE", "CZ")],
    "ASN": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "OD1")],
    "ASP": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "OD1")],
    "CYS": [("N", "CA", "CB", "SG")],
    "GLN": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "OE1")],
    "GLU": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "OE1")],
    "HIS": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "ND1")],
    "ILE": [("N", "CA", "CB", "CG1"), ("CA", "CB", "CG1", "CD1")],
    "LEU": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")],
    "LYS": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "CE"), ("CG", "CD", "CE", "NZ")],
    "MET": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "SD"),
            ("CB", "CG", "SD", "CE")],
    "PHE": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")],
    "PRO": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD")],
    "SER": [("N", "CA", "CB", "OG")],
    "THR": [("N", "CA", "CB", "OG1")],
    "TRP": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")],
    "TYR": [("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")],
    "VAL": [("N", "CA", "CB", "CG1")],
    "ALA": [],
    "GLY": [],
}
N_CHI = {THREE_TO_ONE[k]: len(v) for k, v in CHI_ATOMS.items()}
