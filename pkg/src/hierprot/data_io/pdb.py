"""Fixed-column PDB ATOM records: backbone reader and Cα/backbone writer."""

import warnings

import numpy as np

from ..errors import MalformedAtomLine
from ..residues import ONE_TO_THREE, THREE_TO_ONE
from .records import ProteinRecord

BACKBONE = ("N", "CA", "C")
ALIASES = {"MSE": "MET"}


class PdbWarning(UserWarning):
    def __init__(self, message, dropped=0):
        super().__init__(message)
        self.dropped = dropped


def _float(line, lo, hi, lineno, field):
    try:
        return float(line[lo:hi])
    except ValueError:
        raise MalformedAtomLine(lineno, f"non-numeric {field} field {line[lo:hi]!r}") from None


def parse_pdb_backbone(text, record_id="pdb", side_chains=False):
    """Read N/CA/C atoms of the first chain of the first model.

    Columns follow the PDB layout: atom name 13-16, altloc 17, residue name
    18-20, chain 22, residue number 23-26, insertion code 27, x/y/z 31-54.
    Residues lacking any backbone atom are dropped and reported through a
    :class:`PdbWarning`. With ``side_chains=True`` every atom is kept and χ
    angles are computed from them.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    residues = {}
    order = []
    chain = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("ENDMDL"):
            break
        if not line.startswith("ATOM"):
            continue
        if len(line) < 54:
            raise MalformedAtomLine(lineno, "ATOM record shorter than 54 columns")
        name = line[12:16].strip()
        altloc = line[16]
        resname = line[17:20].strip()
        chain_id = line[21]
        key = (line[22:26], line[26])
        xyz = (_float(line, 30, 38, lineno, "x"), _float(line, 38, 46, lineno, "y"),
               _float(line, 46, 54, lineno, "z"))
        if chain is None:
            chain = chain_id
        elif chain_id != chain:
            continue
        if altloc not in (" ", "A"):
            continue
        if key not in residues:
            residues[key] = (resname, {})
            order.append(key)
        residues[key][1].setdefault(name, xyz)
    kept, dropped = [], 0
    for key in order:
        resname, atoms = residues[key]
        resname = ALIASES.get(resname, resname)
        if resname not in THREE_TO_ONE or not all(a in atoms for a in BACKBONE):
            dropped += 1
            continue
        kept.append((resname, atoms))
    if dropped:
        warnings.warn(PdbWarning(f"dropped {dropped} residues with missing backbone atoms "
                                 "or unknown residue names", dropped), stacklevel=2)
    if not kept:
        return []
    seq = "".join(THREE_TO_ONE[r] for r, _ in kept)
    backbone = np.array([[atoms[a] for a in BACKBONE] for _, atoms in kept], dtype=np.float64)
    torsions = None
    if side_chains:
        from ..geometry import chi_angles
        torsions = chi_angles([(r, {k: np.asarray(v) for k, v in atoms.items()})
                               for r, atoms in kept])
    return [ProteinRecord(id=f"{record_id}_{chain.strip() or '_'}", sequence=seq,
                          ca_coords=backbone[:, 1], backbone=backbone, torsions=torsions)]


def _atom_line(serial, name, resname, chain, resseq, xyz, element):
    padded = f" {name:<3}" if len(name) < 4 else name
    return (f"ATOM  {serial:5d} {padded:<4} {resname:>3} {chain:1}{resseq:4d}    "
            f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {element:>2}")


def format_pdb(record, chain="A", ca_only=None):
    """Render a record as PDB ATOM lines (backbone if present, else a Cα trace)."""
    if ca_only is None:
        ca_only = record.backbone is None
    lines, serial = [], 1
    for i, aa in enumerate(record.sequence):
        atoms = [("CA", record.ca_coords[i])] if ca_only else list(zip(BACKBONE, record.backbone[i]))
        for name, xyz in atoms:
            lines.append(_atom_line(serial, name, ONE_TO_THREE[aa], chain, i + 1, xyz, name[0]))
            serial += 1
    lines.append("TER")
    lines.append("END")
    return "\n".join(lines) + "\n"


def write_pdb(path, record, **kwargs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_pdb(record, **kwargs))
