"""Deterministic synthetic protein corpus with class-specific sequence motifs.

Randomness comes only from :class:`SplitMix64`, a 64-bit generator small
enough to re-implement anywhere:

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)          # all arithmetic mod 2**64

Uniform floats take the top 53 bits; normals use Box-Muller.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import TorsionSet
from ..residues import ALPHABET, INDEX, N_CHI
from .records import ProteinRecord

GENERATOR_VERSION = "synthetic-helix-1"
MASK64 = (1 << 64) - 1

MOTIF_DENSITY = 0.4
# start probability p with 3p / (3p + 1 - p) = density
MOTIF_START = MOTIF_DENSITY / (3.0 - 2.0 * MOTIF_DENSITY)
HELIX_RADIUS = 2.3
HELIX_TWIST = math.radians(100.0)
RISE_RANGE = (1.35, 1.65)
COORD_NOISE = 0.05
ROTAMERS = (math.radians(-65.0), math.pi, math.radians(65.0))
CHI_NOISE = math.radians(12.0)


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, n):
        """Unbiased integer in [0, n) by rejection."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normal(self):
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items):
        items = list(items)
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 3
    n_per_class: int = 50
    min_length: int = 40
    max_length: int = 60
    seed: int = 0


def class_motifs(n_classes, rng):
    """One 3-residue motif per class, residue-disjoint while the alphabet allows."""
    motifs = []
    pool = []
    while len(motifs) < n_classes:
        if len(pool) < 3:
            pool = rng.shuffle(ALPHABET)
        motif = "".join(pool[:3])
        pool = pool[3:]
        if motif not in motifs:
            motifs.append(motif)
    return motifs


def class_rise(k, n_classes):
    lo, hi = RISE_RANGE
    return lo + (hi - lo) * (k - 1) / max(n_classes - 1, 1)


def _sequence(length, motif, rng):
    out = []
    while len(out) < length:
        if len(out) + 3 <= length and rng.uniform() < MOTIF_START:
            out.extend(motif)
        else:
            out.append(ALPHABET[rng.randint(20)])
    return "".join(out)


def _unit(v):
    return v / np.linalg.norm(v)


def _backbone(length, rise, rng):
    bb = np.zeros((length, 3, 3))
    for i in range(length):
        a = HELIX_TWIST * i
        ca = np.array([HELIX_RADIUS * math.cos(a), HELIX_RADIUS * math.sin(a), rise * i])
        tangent = _unit(np.array([-HELIX_RADIUS * HELIX_TWIST * math.sin(a),
                                  HELIX_RADIUS * HELIX_TWIST * math.cos(a), rise]))
        inward = np.array([-math.cos(a), -math.sin(a), 0.0])
        binormal = np.cross(tangent, inward)
        n_atom = ca + 1.458 * _unit(-0.6 * tangent + 0.5 * inward + 0.62 * binormal)
        c_atom = ca + 1.525 * _unit(0.6 * tangent + 0.5 * inward - 0.62 * binormal)
        bb[i] = [n_atom, ca, c_atom]
    noise = np.array([rng.normal() for _ in range(length * 9)]).reshape(length, 3, 3)
    return bb + COORD_NOISE * noise


def _torsions(seq, rng):
    angles = np.zeros((len(seq), 4))
    mask = np.zeros((len(seq), 4), dtype=bool)
    for i, aa in enumerate(seq):
        for k in range(N_CHI[aa]):
            choice = (INDEX[aa] + k) % 3
            if rng.uniform() < 0.2:
                choice = rng.randint(3)
            value = ROTAMERS[choice] + CHI_NOISE * rng.normal()
            angles[i, k] = math.atan2(math.sin(value), math.cos(value))
            mask[i, k] = True
    return TorsionSet(angles, mask)


def generate_synthetic(n_classes=3, n_per_class=50, length_range=(40, 60), seed=0):
    """Records for classes ``1..n_classes``; byte-identical for a fixed seed."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    lo, hi = length_range
    if not 3 <= lo <= hi:
        raise ValueError("length range must satisfy 3 <= min <= max")
    rng = SplitMix64(seed)
    motifs = class_motifs(n_classes, rng)
    records = []
    for k in range(1, n_classes + 1):
        rise = class_rise(k, n_classes)
        for i in range(n_per_class):
            length = lo + rng.randint(hi - lo + 1)
            seq = _sequence(length, motifs[k - 1], rng)
            bb = _backbone(length, rise, rng)
            records.append(ProteinRecord(
                id=f"syn{k}_{i:04d}", sequence=seq, ca_coords=bb[:, 1].copy(), labels=(k,),
                backbone=bb, torsions=_torsions(seq, rng),
                meta={"motif": motifs[k - 1], "generator": GENERATOR_VERSION}))
    return records


def split_records(records, test_fraction=0.2, seed=0):
    """Stratified split by first label; returns (train, test)."""
    rng = SplitMix64(seed ^ 0x5EED)
    by_class = {}
    for r in records:
        by_class.setdefault(r.label, []).append(r)
    train, test = [], []
    for label in sorted(by_class, key=lambda x: (x is None, x)):
        members = rng.shuffle(by_class[label])
        n_test = int(round(test_fraction * len(members)))
        test.extend(members[:n_test])
        train.extend(members[n_test:])
    return train, test
