"""Distribution distances over embeddings and structure/sequence diversity scores."""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DimensionMismatch, EmptySequence, LengthMismatch, TooFewSamples
from .residues import ALPHABET, PHYSCHEM_TABLE, encode

BUILTIN_DIM = 20 + 400 + 5


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray
    source: str = "builtin"

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or len(v) < 1:
            raise ValueError(f"embedding set must be a nonempty (n, D) matrix, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embeddings must be finite")
        object.__setattr__(self, "vectors", v)

    def __len__(self):
        return len(self.vectors)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def mean(self):
        # exactly rounded column sums keep the mean independent of row order
        sums = [math.fsum(col) for col in self.vectors.T]
        return np.asarray(sums, dtype=np.float64) / len(self.vectors)

    def subset(self, index):
        return EmbeddingSet(self.vectors[index], self.source)


def as_embedding_set(x):
    return x if isinstance(x, EmbeddingSet) else EmbeddingSet(np.asarray(x, dtype=np.float64))


def kmer_spectrum(seq):
    """1-mer (20) and 2-mer (400) frequency blocks of one sequence."""
    codes = encode(seq)
    mono = np.bincount(codes, minlength=20) / max(len(codes), 1)
    di = np.zeros(400)
    if len(codes) > 1:
        di = np.bincount(codes[:-1] * 20 + codes[1:], minlength=400) / (len(codes) - 1)
    return np.concatenate([mono, di])


def builtin_embedding(seq):
    """Stand-in sequence embedding: k-mer spectrum plus pooled physicochemical means."""
    codes = encode(seq)
    if len(codes) == 0:
        raise EmptySequence("cannot embed an empty sequence")
    return np.concatenate([kmer_spectrum(seq), PHYSCHEM_TABLE[codes].mean(axis=0)])


def embed_sequences(sequences, provider="builtin"):
    """Embed sequences with the built-in featurizer, a callable, or the k-mer spectrum.

    ``provider`` may be ``"builtin"``, ``"spectrum"`` (k-mer blocks only) or
    any callable mapping a sequence to a vector.
    """
    if provider == "builtin":
        fn, tag = builtin_embedding, "builtin"
    elif provider == "spectrum":
        fn, tag = kmer_spectrum, "spectrum"
    elif callable(provider):
        fn, tag = provider, getattr(provider, "__name__", "custom")
    else:
        raise ValueError(f"unknown embedding provider {provider!r}")
    return EmbeddingSet(np.stack([np.asarray(fn(s), dtype=np.float64) for s in sequences]), tag)


def _check_dims(x, y):
    x, y = as_embedding_set(x), as_embedding_set(y)
    if x.dim != y.dim:
        raise DimensionMismatch(f"embedding dims differ: {x.dim} vs {y.dim}")
    return x, y


def protein_mmd(x, y):
    """Squared distance between mean embeddings (biased MMD, linear kernel)."""
    x, y = _check_dims(x, y)
    diff = x.mean() - y.mean()
    return float(diff @ diff)


def median_bandwidth(x, y):
    pooled = np.concatenate([x.vectors, y.vectors])
    sq = np.sum(pooled ** 2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * pooled @ pooled.T, 0.0)
    upper = d2[np.triu_indices(len(pooled), k=1)]
    med = np.median(upper[upper > 0]) if np.any(upper > 0) else 1.0
    return float(np.sqrt(0.5 * med))


def rbf_mmd(x, y, bandwidth=None):
    """Biased MMD² with a Gaussian kernel; bandwidth defaults to the median heuristic."""
    x, y = _check_dims(x, y)
    sigma = median_bandwidth(x, y) if bandwidth is None else bandwidth

    def k(a, b):
        d2 = (np.sum(a ** 2, 1)[:, None] + np.sum(b ** 2, 1)[None, :] - 2 * a @ b.T)
        return np.exp(-np.maximum(d2, 0.0) / (2 * sigma ** 2))

    xv, yv = x.vectors, y.vectors
    value = k(xv, xv).mean() + k(yv, yv).mean() - 2 * k(xv, yv).mean()
    return float(max(value, 0.0))


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray


def fit_gaussian(x, regularize=True):
    """Mean and unbiased covariance, plus ``1e-6·tr(Σ)/D`` on the diagonal."""
    x = as_embedding_set(x)
    if len(x) < 2:
        raise TooFewSamples("a Gaussian fit needs at least two samples")
    cov = np.cov(x.vectors, rowvar=False, ddof=1).reshape(x.dim, x.dim)
    cov = 0.5 * (cov + cov.T)
    if regularize:
        cov = cov + (1e-6 * np.trace(cov) / x.dim) * np.eye(x.dim)
    return GaussianFit(x.mean(), cov)


def _psd_sqrt(m):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def frechet_distance(a, b):
    """``‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^½)`` with the trace term via ``Σa^½ Σb Σa^½``."""
    sa = _psd_sqrt(a.cov)
    inner = np.linalg.eigvalsh(0.5 * ((sa @ b.cov @ sa) + (sa @ b.cov @ sa).T))
    trace_sqrt = np.sum(np.sqrt(np.maximum(inner, 0.0)))
    diff = a.mean - b.mean
    value = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt
    return float(max(value, 0.0))


def protein_fid(x, y):
    x, y = _check_dims(x, y)
    return frechet_distance(fit_gaussian(x), fit_gaussian(y))


# ---------------------------------------------------------------------------
# structural diversity


def _paired(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) != len(b):
        raise LengthMismatch(f"structures have {len(a)} and {len(b)} residues")
    if len(a) == 0:
        raise LengthMismatch("structures are empty")
    return a, b


def kabsch(a, b):
    """Proper rotation ``R`` and translation ``t`` minimizing ``‖(a Rᵀ + t) − b‖``."""
    a, b = _paired(a, b)
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cb - r @ ca


def superpose(a, b):
    r, t = kabsch(a, b)
    return np.asarray(a, dtype=np.float64) @ r.T + t


def kabsch_rmsd(a, b):
    a, b = _paired(a, b)
    diff = superpose(a, b) - b
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def tm_d0(length):
    return max(1.24 * np.cbrt(length - 15.0) - 1.8, 0.5)


def tm_score(a, b):
    """Index-correspondence TM-score evaluated at the Kabsch superposition."""
    a, b = _paired(a, b)
    d = np.linalg.norm(superpose(a, b) - b, axis=1)
    d0 = tm_d0(len(a))
    return float(np.mean(1.0 / (1.0 + (d / d0) ** 2)))


def nw_alignment_stats(a, b, match=1.0, mismatch=0.0, gap=-1.0):
    """Global alignment ``(score, identities, alignment_length)``."""
    if not a or not b:
        raise EmptySequence("sequences must be nonempty")
    return _accel.nw_align(encode(a), encode(b), float(match), float(mismatch), float(gap))


def seq_id(a, b):
    """Percent identity over the Needleman–Wunsch alignment (match 1, mismatch 0, gap −1)."""
    _, identities, length = nw_alignment_stats(a, b)
    return 100.0 * identities / length


def pairwise_mean(items, fn):
    """Mean of ``fn`` over unordered pairs of ``items``; NaN for fewer than two items."""
    values = [fn(items[i], items[j]) for i in range(len(items)) for j in range(i + 1, len(items))]
    return float(np.mean(values)) if values else float("nan")


METRIC_COLUMNS = ("metric", "set_a", "set_b", "value")


def metrics_csv(rows):
    """CSV with fixed columns ``metric,set_a,set_b,value``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        metric, set_a, set_b, value = row
        writer.writerow([metric, set_a, set_b, repr(float(value))])
    return buf.getvalue()


__all__ = [
    "ALPHABET", "BUILTIN_DIM", "EmbeddingSet", "GaussianFit", "builtin_embedding",
    "embed_sequences", "fit_gaussian", "frechet_distance", "kabsch", "kabsch_rmsd",
    "kmer_spectrum", "metrics_csv", "protein_fid", "protein_mmd", "rbf_mmd", "seq_id",
    "superpose", "tm_score",
]
