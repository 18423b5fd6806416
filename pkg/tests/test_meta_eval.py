import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hierprot import meta_eval as ME
from hierprot import metrics
from hierprot.errors import CorruptFile, InvalidResidueSymbol, MetricArityError, UnknownLabel


def test_distance_zero_to_own_set(rng):
    x = rng.normal(size=(4, 3))
    assert ME.class_distance(x, ME.ClassReference(1, ME.as_embedding_set(x))) == 0.0


def test_toy_distances():
    refs = {1: [[-1.0], [1.0]], 2: [[1.0], [3.0]]}
    report = ME.evaluate_metric([([[0.0]], 1)], refs)
    assert report.queries[0].distances == {1: 0.0, 2: 4.0}
    assert report.queries[0].predicted == 1


def test_label_equivariance(rng):
    sets = {k: rng.normal(size=(3, 2)) + k for k in (1, 2, 3)}
    q = rng.normal(size=(1, 2))
    base = {k: ME.class_distance(q, v) for k, v in sets.items()}
    perm = {1: 3, 2: 1, 3: 2}
    permuted = {perm[k]: ME.class_distance(q, v) for k, v in sets.items()}
    assert all(permuted[perm[k]] == base[k] for k in base)


def test_fid_requires_sets(rng):
    refs = {1: rng.normal(size=(5, 2)), 2: rng.normal(size=(5, 2))}
    with pytest.raises(MetricArityError):
        ME.evaluate_metric([(rng.normal(size=(1, 2)), 1)], refs, "protein-fid")
    report = ME.evaluate_metric([(rng.normal(size=(3, 2)), 1)], refs, "protein-fid")
    assert report.queries[0].rank in (1, 2)


def test_unknown_metric_and_label(rng):
    refs = {1: rng.normal(size=(2, 2)), 2: rng.normal(size=(2, 2))}
    with pytest.raises(MetricArityError):
        ME.class_distance(np.ones((1, 2)), refs[1], "bogus")
    with pytest.raises(UnknownLabel):
        ME.evaluate_metric([(np.ones((1, 2)), 9)], refs)


def test_all_rank_one():
    assert ME.mean_reciprocal_rank([1, 1, 1]) == 1.0
    assert ME.normalized_mean_rank([1, 1, 1], 7) == 0.0


def test_rank_formulas():
    assert ME.mean_reciprocal_rank([1, 2, 4]) == pytest.approx((1 + 1 / 2 + 1 / 4) / 3, abs=1e-12)
    assert ME.mean_reciprocal_rank([1, 2, 4]) == pytest.approx(0.58333, abs=1e-5)
    assert ME.normalized_mean_rank([1, 2, 4], 7) == pytest.approx((0 + 1 / 6 + 3 / 6) / 3, abs=1e-12)
    assert ME.normalized_mean_rank([1, 2, 4], 7) == pytest.approx(0.22222, abs=1e-5)


def test_report_end_to_end():
    # 1-D classes at 0..6; queries placed to land at ranks 1, 2 and 4
    refs = {k: [[float(10 * k)]] for k in range(1, 8)}
    queries = [([[10.0]], 1), ([[24.0]], 3), ([[47.0]], 3)]
    rep = ME.evaluate_metric(queries, refs)
    assert rep.ranks == [1, 2, 4]
    assert rep.accuracy == pytest.approx(1 / 3)
    assert rep.mrr == pytest.approx(0.5833333333)
    assert rep.nmr == pytest.approx(0.2222222222)
    assert rep.summary_csv().startswith("metric,queries,classes,accuracy,mrr,nmr,ties")


def test_tie_break_by_class_id():
    refs = {1: [[-1.0]], 2: [[1.0]]}
    rep = ME.evaluate_metric([([[0.0]], 2), ([[0.0]], 1)], refs)
    assert rep.ranks == [2, 1] and rep.tie_count == 2


@given(st.lists(st.integers(1, 7), min_size=1, max_size=10), st.data())
def test_rank_degradation_moves_mrr_and_nmr_oppositely(ranks, data):
    i = data.draw(st.integers(0, len(ranks) - 1))
    if ranks[i] == 7:
        return
    worse = list(ranks)
    worse[i] += 1
    assert ME.mean_reciprocal_rank(worse) < ME.mean_reciprocal_rank(ranks)
    assert ME.normalized_mean_rank(worse, 7) > ME.normalized_mean_rank(ranks, 7)


def test_copies_of_query_equal_single(rng):
    refs = {k: rng.normal(size=(4, 3)) + k for k in (1, 2, 3)}
    q = (rng.normal(size=(1, 3)) + 2, 2)
    one = ME.evaluate_metric([q], refs).summary()
    many = ME.evaluate_metric([q] * 5, refs).summary()
    assert {k: one[k] for k in ("accuracy", "mrr", "nmr")} == {k: many[k] for k in ("accuracy", "mrr", "nmr")}


class TestProbe:
    def test_one_dimensional_walk(self):
        refs = {1: [[0.0]], 2: [[10.0]]}
        res = ME.monotone_consistency_probe(refs, 1, start=[10.0], steps=11)
        np.testing.assert_allclose(res.target_distances, [(10 - i) ** 2 for i in range(11)], atol=1e-12)
        np.testing.assert_allclose(res.distances[:, 1], [i ** 2 for i in range(11)], atol=1e-12)
        # equal at the midpoint (25 vs 25), strictly nearer from the next step on
        assert res.distances[5, 0] == pytest.approx(res.distances[5, 1])
        assert res.crossing_index == 6
        assert res.ranks[-1] == 1 and res.target_distances[-1] == 0.0

    def test_random_configurations(self, rng):
        for _ in range(30):
            k, d = int(rng.integers(2, 6)), int(rng.integers(1, 8))
            refs = {c: rng.normal(size=(int(rng.integers(1, 6)), d)) * 3 for c in range(1, k + 1)}
            target = int(rng.integers(1, k + 1))
            res = ME.monotone_consistency_probe(refs, target, rng.normal(size=d) * 10, steps=17)
            assert res.is_non_increasing(tol=1e-12)
            assert res.target_distances[-1] == 0.0 and res.ranks[-1] == 1
            assert 0 <= res.crossing_index <= 16


class TestIoU:
    def test_cases(self):
        assert ME.iou({"a", "b"}, {"a", "b"}) == 1.0
        assert ME.iou({"a"}, {"b"}) == 0.0
        assert ME.iou({"a", "b", "c"}, {"b", "c", "d"}) == 0.5
        assert ME.iou(set(), set()) == 1.0

    def test_report(self):
        rep = ME.iou_report([({"a"}, {"a"}), ({"a"}, {"b"}), ({"a", "b", "c"}, {"b", "c", "d"})])
        assert rep.mean == pytest.approx(0.5) and rep.max == 1.0
        rows = rep.histogram_csv(bins=4).splitlines()
        assert rows[0] == "bin_low,bin_high,count" and len(rows) == 5
        assert sum(int(r.split(",")[2]) for r in rows[1:]) == 3


class TestQueryFiles:
    def test_inline_embeddings_and_label_sets(self):
        text = "\n".join(json.dumps(o) for o in [
            {"id": "a", "embedding": [0.0, 0.0], "true_label": 1},
            {"id": "b", "embedding": [0.2, 0.0], "true_labels": [1, 4]},
            {"id": "c", "embedding": [5.0, 5.0], "true_label": 2},
        ])
        items = ME.loads_labeled_items(text)
        assert [it.labels for it in items] == [(1,), (1, 4), (2,)]
        refs = ME.references_from_items(items)
        np.testing.assert_array_equal(refs[1].mean(), [0.1, 0.0])
        report = ME.evaluate_metric(ME.grouped_queries(items), refs)
        assert report.ranks == [1, 1, 1]

    def test_sequences_use_provider(self):
        text = json.dumps({"id": "s", "sequence": "ACDA", "true_label": 3})
        item = ME.loads_labeled_items(text, provider="spectrum")[0]
        np.testing.assert_array_equal(item.vector, metrics.kmer_spectrum("ACDA"))

    def test_grouping_drops_incomplete_sets(self):
        items = [ME.LabeledItem(str(i), np.array([float(i)]), (1 + i % 2,)) for i in range(7)]
        groups = ME.grouped_queries(items, 2)
        assert [g[0] for g in groups] == ["0+2", "4+6", "1+3"]
        assert all(g[1].shape == (2, 1) for g in groups)

    @pytest.mark.parametrize("line,error", [
        ('{"id": 1}', CorruptFile), ('{"sequence": "AC"}', CorruptFile), ("not json", CorruptFile),
        ('{"embedding": [1], "true_labels": []}', CorruptFile),
        ('{"sequence": "AZ", "true_label": 1}', InvalidResidueSymbol),
    ])
    def test_bad_lines(self, line, error):
        with pytest.raises(error):
            ME.loads_labeled_items(line)

    def test_record_files_accepted(self):
        from hierprot.data_io import dumps_records, generate_synthetic
        recs = generate_synthetic(2, 2, (6, 8), seed=0)
        items = ME.loads_labeled_items(dumps_records(recs))
        assert [it.id for it in items] == [r.id for r in recs]
        np.testing.assert_array_equal(items[0].vector, metrics.builtin_embedding(recs[0].sequence))
