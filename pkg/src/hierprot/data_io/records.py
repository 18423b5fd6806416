"""Protein records and their JSON-lines file format."""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import CorruptFile, VersionMismatch
from ..geometry import TorsionSet
from ..residues import validate_sequence

RECORD_FORMAT = "hierprot-records"
RECORD_VERSION = 1


@dataclass
class ProteinRecord:
    id: str
    sequence: str
    ca_coords: np.ndarray
    labels: tuple = ()
    backbone: Optional[np.ndarray] = None  # (L, 3, 3) ordered N, CA, C
    torsions: Optional[TorsionSet] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        validate_sequence(self.sequence)
        self.ca_coords = np.asarray(self.ca_coords, dtype=np.float64).reshape(-1, 3)
        self.labels = tuple(int(x) for x in self.labels)
        n = len(self.sequence)
        if len(self.ca_coords) != n:
            raise ValueError(f"{self.id}: {len(self.ca_coords)} Cα coordinates for {n} residues")
        if self.backbone is not None:
            self.backbone = np.asarray(self.backbone, dtype=np.float64).reshape(-1, 3, 3)
            if len(self.backbone) != n:
                raise ValueError(f"{self.id}: backbone length {len(self.backbone)} != {n}")
        if self.torsions is not None and len(self.torsions.angles) != n:
            raise ValueError(f"{self.id}: torsion length {len(self.torsions.angles)} != {n}")

    def __len__(self):
        return len(self.sequence)

    @property
    def label(self):
        return self.labels[0] if self.labels else None

    def to_json(self):
        out = {"id": self.id, "sequence": self.sequence, "labels": list(self.labels),
               "ca_coords": self.ca_coords.tolist()}
        if self.backbone is not None:
            out["backbone"] = self.backbone.tolist()
        if self.torsions is not None:
            out["torsions"] = self.torsions.angles.tolist()
            out["torsion_mask"] = self.torsions.mask.astype(int).tolist()
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_json(cls, obj):
        torsions = None
        if "torsions" in obj:
            torsions = TorsionSet(np.asarray(obj["torsions"], dtype=np.float64).reshape(-1, 4),
                                  np.asarray(obj["torsion_mask"], dtype=bool).reshape(-1, 4))
        return cls(id=obj["id"], sequence=obj["sequence"],
                   ca_coords=np.asarray(obj["ca_coords"], dtype=np.float64),
                   labels=tuple(obj.get("labels", ())),
                   backbone=None if "backbone" not in obj else np.asarray(obj["backbone"]),
                   torsions=torsions, meta=obj.get("meta", {}))

    def equals(self, other):
        def same(a, b):
            return (a is None and b is None) or (a is not None and b is not None
                                                 and np.array_equal(a, b))
        return (self.id == other.id and self.sequence == other.sequence
                and self.labels == other.labels and same(self.ca_coords, other.ca_coords)
                and same(self.backbone, other.backbone)
                and same(None if self.torsions is None else self.torsions.angles,
                         None if other.torsions is None else other.torsions.angles)
                and same(None if self.torsions is None else self.torsions.mask,
                         None if other.torsions is None else other.torsions.mask)
                and self.meta == other.meta)


def dumps_records(records):
    lines = [json.dumps({"format": RECORD_FORMAT, "version": RECORD_VERSION})]
    lines += [json.dumps(r.to_json(), separators=(",", ":")) for r in records]
    return "\n".join(lines) + "\n"


def write_records(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_records(records))


def loads_records(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"bad record header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != RECORD_FORMAT:
        raise CorruptFile("not a hierprot record file")
    if header.get("version") != RECORD_VERSION:
        raise VersionMismatch(f"record file version {header.get('version')} unsupported")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            out.append(ProteinRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"record line {lineno}: {exc}") from None
    return out


def read_records(path):
    with open(path, encoding="utf-8") as fh:
        return loads_records(fh.read())
