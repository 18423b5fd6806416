import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierprot import data_io
from hierprot.data_io import checkpoint as ck
from hierprot.data_io.synthetic import MOTIF_DENSITY, MOTIF_START
from hierprot.errors import CorruptFile, HierProtError, MalformedAtomLine, VersionMismatch
from hierprot.meta_eval import evaluate_metric
from hierprot.metrics import embed_sequences

CA_LINE = "ATOM      2  CA  ALA A   1      11.104   6.134  -6.504  1.00  0.00           C"


def atom(serial, name, resname, resseq, xyz, chain="A"):
    padded = f" {name:<3}" if len(name) < 4 else name
    return (f"ATOM  {serial:5d} {padded:<4} {resname:>3} {chain}{resseq:4d}    "
            f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}  1.00  0.00           {name[0]}")


class TestPdb:
    def test_fixture_line_columns(self):
        text = "\n".join([
            "ATOM      1  N   ALA A   1      11.639   6.071  -5.147  1.00  0.00           N",
            CA_LINE,
            "ATOM      3  C   ALA A   1      12.446   6.659  -7.044  1.00  0.00           C",
        ])
        (rec,) = data_io.parse_pdb_backbone(text)
        assert rec.sequence == "A"
        assert rec.ca_coords[0].tolist() == [11.104, 6.134, -6.504]
        # manual slicing of columns 31-38, 39-46, 47-54
        assert (float(CA_LINE[30:38]), float(CA_LINE[38:46]), float(CA_LINE[46:54])) == (11.104, 6.134, -6.504)
        assert CA_LINE[12:16].strip() == "CA" and CA_LINE[17:20] == "ALA"

    def test_empty(self):
        assert data_io.parse_pdb_backbone("") == []

    def test_bad_float_names_line(self):
        bad = CA_LINE[:30] + "  abc.de" + CA_LINE[38:]
        with pytest.raises(MalformedAtomLine) as err:
            data_io.parse_pdb_backbone("REMARK x\n" + bad)
        assert err.value.line_number == 2

    def test_missing_backbone_dropped_with_warning(self):
        lines = [atom(1, "N", "GLY", 1, (0, 0, 0)), atom(2, "CA", "GLY", 1, (1.4, 0, 0)),
                 atom(3, "C", "GLY", 1, (2, 1, 0)), atom(4, "CA", "SER", 2, (3, 1, 0))]
        with pytest.warns(data_io.PdbWarning) as rec:
            (out,) = data_io.parse_pdb_backbone("\n".join(lines))
        assert rec[0].message.dropped == 1
        assert out.sequence == "G"

    def test_first_chain_first_model(self):
        lines = []
        for i, chain in ((1, "A"), (2, "B")):
            lines += [atom(3 * i, n, "ALA", i, (i, k, 0), chain) for k, n in enumerate(("N", "CA", "C"))]
        lines.insert(3, "ENDMDL")
        (out,) = data_io.parse_pdb_backbone("\n".join(lines))
        assert len(out) == 1 and out.id.endswith("_A")

    def test_round_trip_export(self):
        rec = data_io.generate_synthetic(2, 1, (5, 5), seed=1)[0]
        (back,) = data_io.parse_pdb_backbone(data_io.format_pdb(rec))
        assert back.sequence == rec.sequence
        np.testing.assert_allclose(back.backbone, rec.backbone, atol=5e-4)
        ca_only = data_io.format_pdb(rec, ca_only=True)
        assert sum(line.startswith("ATOM") for line in ca_only.splitlines()) == len(rec)

    def test_side_chain_torsions(self):
        lines = [atom(1, "N", "SER", 1, (1, 0, 0)), atom(2, "CA", "SER", 1, (0, 0, 0)),
                 atom(3, "C", "SER", 1, (-0.5, -1.2, 0)), atom(4, "CB", "SER", 1, (0, 1, 0)),
                 atom(5, "OG", "SER", 1, (0, 1, 1))]
        (rec,) = data_io.parse_pdb_backbone("\n".join(lines), side_chains=True)
        assert rec.torsions.mask[0].tolist() == [True, False, False, False]
        assert rec.torsions.angles[0, 0] == pytest.approx(np.pi / 2)

    @settings(max_examples=200, deadline=None)
    @given(st.binary(max_size=400) | st.text(max_size=400))
    def test_parser_is_total(self, blob):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                out = data_io.parse_pdb_backbone(blob)
            except HierProtError:
                return
        assert isinstance(out, list)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.sampled_from([CA_LINE, CA_LINE.replace(" CA ", " N  "), "ENDMDL", "HETATM",
                                     CA_LINE[:40], "ATOM" + "x" * 60]), max_size=8))
    def test_parser_total_on_atom_like_lines(self, lines):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                data_io.parse_pdb_backbone("\n".join(lines))
            except HierProtError:
                pass


class TestRecords:
    def test_round_trip(self, tmp_path):
        recs = data_io.generate_synthetic(3, 1, (6, 9), seed=3)
        path = tmp_path / "r.jsonl"
        data_io.write_records(path, recs)
        back = data_io.read_records(path)
        assert len(back) == 3
        assert all(a.equals(b) for a, b in zip(recs, back))

    def test_version_mismatch(self):
        with pytest.raises(VersionMismatch):
            data_io.loads_records('{"format": "hierprot-records", "version": 9}\n')

    def test_corrupt(self):
        with pytest.raises(CorruptFile):
            data_io.loads_records('{"format": "hierprot-records", "version": 1}\n{"id": 1\n')

    def test_length_invariant(self):
        with pytest.raises(ValueError):
            data_io.ProteinRecord("x", "AC", np.zeros((3, 3)))


class TestCheckpoint:
    def tensors(self):
        rng = np.random.default_rng(0)
        return {"a.weight": rng.normal(size=(3, 4)), "b": rng.normal(size=(5,)),
                "scalar": np.array(3.25), "empty": np.zeros((0, 2))}

    def test_round_trip_bit_exact(self, tmp_path):
        t = self.tensors()
        data_io.save_checkpoint(tmp_path / "c.bin", t, {"level": 3})
        back, meta = data_io.load_checkpoint(tmp_path / "c.bin")
        assert meta == {"level": 3}
        assert list(back) == list(t)
        for k in t:
            assert back[k].shape == t[k].shape
            assert back[k].tobytes() == np.asarray(t[k], dtype="<f8").tobytes()

    def test_truncated(self):
        blob = data_io.dumps_checkpoint(self.tensors())
        for cut in (3, 20, len(blob) // 2, len(blob) - 1):
            with pytest.raises(CorruptFile):
                data_io.loads_checkpoint(blob[:cut])

    def test_bit_flip(self):
        blob = bytearray(data_io.dumps_checkpoint(self.tensors()))
        blob[40] ^= 0x10
        with pytest.raises(CorruptFile):
            data_io.loads_checkpoint(bytes(blob))

    def test_v1_still_parses(self):
        blob = data_io.dumps_checkpoint(self.tensors(), version=1)
        back, meta = data_io.loads_checkpoint(blob)
        assert meta == {} and set(back) == set(self.tensors())

    def test_future_version(self):
        blob = bytearray(data_io.dumps_checkpoint({}))
        blob[8] = 7
        with pytest.raises(VersionMismatch):
            data_io.loads_checkpoint(bytes(blob))

    def test_embeddings_binary_and_csv(self, tmp_path):
        m = np.arange(12, dtype=np.float32).reshape(3, 4) / 7
        data_io.save_embeddings(tmp_path / "e.bin", m)
        np.testing.assert_array_equal(data_io.load_embeddings(tmp_path / "e.bin"), m)
        (tmp_path / "e.csv").write_text("1,2\n3,4.5\n")
        np.testing.assert_array_equal(data_io.load_embeddings(tmp_path / "e.csv"), [[1, 2], [3, 4.5]])
        with pytest.raises(CorruptFile):
            ck.loads_embeddings(ck.dumps_embeddings(m)[:-3])


class TestSynthetic:
    def test_splitmix_reference_values(self):
        # first outputs for seed 0 of the published SplitMix64 reference
        rng = data_io.SplitMix64(0)
        assert [rng.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_deterministic(self):
        a = data_io.dumps_records(data_io.generate_synthetic(3, 5, (10, 20), seed=42))
        b = data_io.dumps_records(data_io.generate_synthetic(3, 5, (10, 20), seed=42))
        c = data_io.dumps_records(data_io.generate_synthetic(3, 5, (10, 20), seed=43))
        assert a == b and a != c

    def test_counts(self):
        recs = data_io.generate_synthetic(3, 50, (40, 60), seed=0)
        assert len(recs) == 150
        assert [sum(r.label == k for r in recs) for k in (1, 2, 3)] == [50, 50, 50]
        assert all(40 <= len(r) <= 60 for r in recs)

    def test_motif_density(self):
        assert 3 * MOTIF_START / (3 * MOTIF_START + 1 - MOTIF_START) == pytest.approx(MOTIF_DENSITY)
        recs = data_io.generate_synthetic(3, 40, (40, 60), seed=5)
        covered = []
        for r in recs:
            motif = r.meta["motif"]
            covered.append(3 * r.sequence.count(motif) / len(r))
        assert 0.33 < np.mean(covered) < 0.45

    def test_builtin_featurizer_separates_classes(self):
        recs = data_io.generate_synthetic(3, 50, (40, 60), seed=0)
        train, test = data_io.split_records(recs, 0.2, seed=0)
        refs = {k: embed_sequences([r.sequence for r in train if r.label == k]) for k in (1, 2, 3)}
        queries = [(embed_sequences([r.sequence]), r.label) for r in test]
        report = evaluate_metric(queries, refs, "protein-mmd")
        assert report.accuracy > 0.9

    def test_split_disjoint(self):
        recs = data_io.generate_synthetic(2, 10, (5, 8), seed=2)
        train, test = data_io.split_records(recs, 0.3, seed=1)
        m = data_io.DatasetManifest(2, "g", [r.id for r in train], [r.id for r in test])
        assert len(m.train_ids) + len(m.test_ids) == 20
        with pytest.raises(ValueError):
            data_io.DatasetManifest(2, "g", ["a"], ["a"])
