"""Evaluating conditional-consistency metrics by how well they rank the true class."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import CorruptFile, MetricArityError, UnknownLabel
from .metrics import EmbeddingSet, as_embedding_set

METRICS = {
    "protein-mmd": metrics.protein_mmd,
    "protein-fid": metrics.protein_fid,
    "mmd": metrics.rbf_mmd,
}
# which embedding each metric compares; "mmd" sees sequence statistics only
METRIC_FEATURES = {"protein-mmd": "embedding", "protein-fid": "embedding", "mmd": "spectrum"}


@dataclass(frozen=True)
class ClassReference:
    label: int
    embeddings: EmbeddingSet


def _metric_fn(metric):
    try:
        return METRICS[metric]
    except KeyError:
        raise MetricArityError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}") from None


def class_distance(query, ref, metric="protein-mmd"):
    """Distance between a query (one vector or a set) and a class reference set."""
    fn = _metric_fn(metric)
    query = as_embedding_set(query)
    ref_set = ref.embeddings if isinstance(ref, ClassReference) else as_embedding_set(ref)
    if metric == "protein-fid" and (len(query) < 2 or len(ref_set) < 2):
        raise MetricArityError("protein-fid needs query and reference sets of size >= 2")
    return fn(query, ref_set)


def _as_refs(refs):
    if isinstance(refs, dict):
        refs = [r if isinstance(r, ClassReference) else ClassReference(k, as_embedding_set(r))
                for k, r in refs.items()]
    refs = sorted(refs, key=lambda r: r.label)
    if len(refs) < 2:
        raise ValueError("need at least two class references")
    return refs


def rank_of(distances, labels, true_label):
    """1-based rank of ``true_label`` by ascending distance; ties go to the smaller class id."""
    d_true = distances[labels.index(true_label)]
    better = sum(1 for d, lab in zip(distances, labels)
                 if d < d_true or (d == d_true and lab < true_label))
    return better + 1


@dataclass
class QueryResult:
    query_id: str
    true_label: int
    distances: dict
    rank: int
    predicted: int
    tied: bool


@dataclass
class RankingReport:
    metric: str
    n_classes: int
    queries: list = field(default_factory=list)

    @property
    def ranks(self):
        return [q.rank for q in self.queries]

    @property
    def accuracy(self):
        return float(np.mean([r == 1 for r in self.ranks]))

    @property
    def mrr(self):
        return mean_reciprocal_rank(self.ranks)

    @property
    def nmr(self):
        return normalized_mean_rank(self.ranks, self.n_classes)

    @property
    def tie_count(self):
        return sum(q.tied for q in self.queries)

    def summary(self):
        return {"metric": self.metric, "queries": len(self.queries), "classes": self.n_classes,
                "accuracy": self.accuracy, "mrr": self.mrr, "nmr": self.nmr,
                "ties": self.tie_count}

    def summary_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "queries", "classes", "accuracy", "mrr", "nmr", "ties"])
        s = self.summary()
        w.writerow([s["metric"], s["queries"], s["classes"], repr(s["accuracy"]),
                    repr(s["mrr"]), repr(s["nmr"]), s["ties"]])
        return buf.getvalue()

    def queries_csv(self):
        labels = sorted(self.queries[0].distances) if self.queries else []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["query_id", "true_label", "rank", "predicted"] + [f"d_{l}" for l in labels])
        for q in self.queries:
            w.writerow([q.query_id, q.true_label, q.rank, q.predicted]
                       + [repr(q.distances[l]) for l in labels])
        return buf.getvalue()


def mean_reciprocal_rank(ranks):
    return float(np.mean([1.0 / r for r in ranks]))


def normalized_mean_rank(ranks, n_classes):
    return float(np.mean([(r - 1) / (n_classes - 1) for r in ranks]))


def evaluate_metric(queries, refs, metric="protein-mmd"):
    """Rank every query's true class among all references.

    ``queries`` is an iterable of ``(embedding_or_set, true_label)`` or
    ``(query_id, embedding_or_set, true_label)``.
    """
    refs = _as_refs(refs)
    labels = [r.label for r in refs]
    report = RankingReport(metric, len(refs))
    for n, item in enumerate(queries):
        qid, emb, true_label = item if len(item) == 3 else (str(n), *item)
        if true_label not in labels:
            raise UnknownLabel(f"query {qid}: label {true_label!r} has no reference set")
        dists = [class_distance(emb, r, metric) for r in refs]
        rank = rank_of(dists, labels, true_label)
        order = sorted(range(len(labels)), key=lambda i: (dists[i], labels[i]))
        d_true = dists[labels.index(true_label)]
        tied = sum(1 for d in dists if d == d_true) > 1
        report.queries.append(QueryResult(qid, true_label, dict(zip(labels, dists)), rank,
                                          labels[order[0]], tied))
    if not report.queries:
        raise ValueError("no queries")
    return report


@dataclass
class ProbeResult:
    target: int
    fractions: np.ndarray
    distances: np.ndarray  # (steps, K) distance of each interpolant to each class
    labels: list
    ranks: list
    crossing_index: int  # first step from which the target is strictly nearest; -1 if never

    @property
    def target_distances(self):
        return self.distances[:, self.labels.index(self.target)]

    def is_non_increasing(self, tol=0.0):
        d = self.target_distances
        return bool(np.all(np.diff(d) <= tol))


def monotone_consistency_probe(refs, target, start, steps=11, metric="protein-mmd"):
    """Walk from ``start`` to the target class centroid and record class distances.

    Interpolants are ``x_s = (1 − s)·start + s·centroid`` at evenly spaced
    ``s`` in [0, 1], each evaluated as a one-element query set.
    """
    refs = _as_refs(refs)
    labels = [r.label for r in refs]
    if target not in labels:
        raise UnknownLabel(f"target {target!r} has no reference set")
    centroid = refs[labels.index(target)].embeddings.mean()
    start = np.asarray(start, dtype=np.float64).reshape(-1)
    fractions = np.linspace(0.0, 1.0, steps)
    dist = np.zeros((steps, len(refs)))
    ranks = []
    for i, s in enumerate(fractions):
        x = centroid.copy() if s == 1.0 else (1.0 - s) * start + s * centroid
        dist[i] = [class_distance(x[None, :], r, metric) for r in refs]
        ranks.append(rank_of(list(dist[i]), labels, target))
    k = labels.index(target)
    others = np.delete(dist, k, axis=1).min(axis=1)
    strict = dist[:, k] < others
    crossing = -1
    for i in range(steps - 1, -1, -1):
        if not strict[i]:
            break
        crossing = i
    return ProbeResult(target, fractions, dist, labels, ranks, crossing)


# ---------------------------------------------------------------------------
# query files


@dataclass(frozen=True)
class LabeledItem:
    id: str
    vector: np.ndarray
    labels: tuple

    @property
    def label(self):
        return self.labels[0]


def loads_labeled_items(text, provider="builtin"):
    """Parse a hierprot record file or JSON lines ``{id, sequence | embedding, true_label(s)}``.

    Sequences are embedded with ``provider``; ``embedding`` gives the vector inline.
    """
    from .data_io.records import RECORD_FORMAT, loads_records

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    try:
        first = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"line 1: {exc}") from None
    if isinstance(first, dict) and first.get("format") == RECORD_FORMAT:
        records = loads_records(text)
        emb = metrics.embed_sequences([r.sequence for r in records], provider) if records else None
        return [LabeledItem(r.id, emb.vectors[i], r.labels) for i, r in enumerate(records)]
    items = []
    for n, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
            labels = obj["true_labels"] if "true_labels" in obj else [obj["true_label"]]
            if "embedding" in obj:
                vec = np.asarray(obj["embedding"], dtype=np.float64).reshape(-1)
            else:
                vec = metrics.embed_sequences([obj["sequence"]], provider).vectors[0]
            items.append(LabeledItem(str(obj.get("id", n)), vec, tuple(int(x) for x in labels)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"line {n}: {exc!r}") from None
        if not items[-1].labels:
            raise CorruptFile(f"line {n}: no true label")
    return items


def read_labeled_items(path, provider="builtin"):
    with open(path, encoding="utf-8") as fh:
        return loads_labeled_items(fh.read(), provider)


def references_from_items(items):
    by_label = {}
    for item in items:
        by_label.setdefault(item.label, []).append(item.vector)
    return {k: EmbeddingSet(np.stack(v)) for k, v in sorted(by_label.items())}


def grouped_queries(items, group_size=1):
    """Query tuples ``(id, vectors, label)``, pooling ``group_size`` same-class items in file order."""
    if group_size == 1:
        return [(it.id, it.vector[None, :], it.label) for it in items]
    by_label = {}
    for it in items:
        by_label.setdefault(it.label, []).append(it)
    out = []
    for label, members in sorted(by_label.items()):
        for start in range(0, len(members) - group_size + 1, group_size):
            chunk = members[start:start + group_size]
            out.append(("+".join(m.id for m in chunk), np.stack([m.vector for m in chunk]), label))
    return out


# ---------------------------------------------------------------------------
# label-set adherence


def iou(predicted, true):
    """Intersection over union of two label sets; two empty sets score 1."""
    a, b = set(predicted), set(true)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass
class IoUReport:
    values: list

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def max(self):
        return float(np.max(self.values))

    def histogram(self, bins=10):
        counts, edges = np.histogram(self.values, bins=bins, range=(0.0, 1.0))
        return counts, edges

    def histogram_csv(self, bins=10):
        counts, edges = self.histogram(bins)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c)])
        return buf.getvalue()


def iou_report(pairs):
    """Aggregate IoU over ``(predicted_set, true_set)`` pairs."""
    values = [iou(p, t) for p, t in pairs]
    if not values:
        raise ValueError("no label-set pairs")
    return IoUReport(values)
