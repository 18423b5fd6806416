import csv
import json
import math
import os
from pathlib import Path

import pytest

from hierprot import cli
from hierprot.data_io import read_json, read_records
from hierprot.errors import ConfigError

GOLDEN = Path(__file__).parent / "golden" / "toy_report.csv"
# relative tolerance for golden values: runs are bit-deterministic on one machine,
# the slack only absorbs BLAS summation-order differences across platforms
GOLDEN_RTOL = 1e-6


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    captured = capsys.readouterr() if capsys else None
    return code, captured


class TestConfig:
    def test_defaults_and_env_root(self, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
        c = cli.resolve_config("gen-data")
        assert c["n_per_class"] == 50 and c["out"] == str(tmp_path / "gen-data")

    def test_flags_override_file(self):
        c = cli.resolve_config("gen-data", {"n_per_class": 7, "seed": 3}, {"n_per_class": 9})
        assert c["n_per_class"] == 9 and c["seed"] == 3

    @pytest.mark.parametrize("values,match", [
        ({"bogus": 1}, "unknown"),
        ({"n_per_class": "ten"}, "expected int"),
        ({"n_per_class": True}, "expected int"),
        ({"n_classes": 1}, "at least 2"),
        ({"min_length": 50, "max_length": 40}, "min_length"),
    ])
    def test_rejections(self, values, match):
        with pytest.raises(ConfigError, match=match):
            cli.resolve_config("gen-data", values)

    def test_choices_and_required(self):
        with pytest.raises(ConfigError, match="not in"):
            cli.resolve_config("train-diff", {"vae_dir": "x", "max_len": 100})
        with pytest.raises(ConfigError, match="not in"):
            cli.resolve_config("train-diff", {"vae_dir": "x", "remove": ["amino_acid"]})
        with pytest.raises(ConfigError, match="missing"):
            cli.resolve_config("train-diff", {})

    def test_every_option_documented(self):
        doc = (Path(__file__).parents[1] / "docs" / "cli.md").read_text(encoding="utf-8")
        for sub in cli.SCHEMA:
            assert f"### {sub}" in doc
            for key, opt in cli.schema_for(sub).items():
                assert f"| `{key}` | {opt.type} | `{json.dumps(opt.default)}` |" in doc, (sub, key)


class TestCommands:
    def test_structured_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"bogus": 1}')
        code, out = run(["gen-data", "--config", bad], capsys)
        assert code == cli.EXIT_CONFIG
        assert json.loads(out.err)["error"] == "ConfigError"

    def test_missing_input(self, tmp_path, capsys):
        code, out = run(["featurize", "--records", tmp_path / "none.jsonl", "--out", tmp_path], capsys)
        assert code == cli.EXIT_INPUT and json.loads(out.err)["error"] == "MissingInput"

    def test_canon_check(self, tmp_path, capsys):
        code, out = run(["canon-check", "--n", 50, "--seed", 7, "--out", tmp_path], capsys)
        assert code == 0 and "PASS" in out.out
        manifest = read_json(tmp_path / "manifest.json")
        assert manifest["seed"] == 7 and manifest["config"]["n"] == 50
        assert len(manifest["config_hash"]) == 64

    def test_canon_check_fails_on_impossible_tolerance(self, tmp_path):
        assert run(["canon-check", "--n", 20, "--tolerance", 0.0, "--out", tmp_path])[0] == cli.EXIT_FAIL

    def test_rerun_from_manifest(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["gen-data", "--n-per-class", 4, "--seed", 5, "--out", a])[0] == 0
        assert run(["gen-data", "--config", a / "manifest.json", "--out", b])[0] == 0
        for name in ("train.jsonl", "test.jsonl", "dataset.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_meta_eval_csv(self, tmp_path, capsys):
        data = tmp_path / "data"
        run(["gen-data", "--n-per-class", 20, "--seed", 2, "--out", data], capsys)
        code, out = run(["meta-eval", "--metric", "protein-mmd", "--refs", data / "train.jsonl",
                         "--queries", data / "test.jsonl", "--out", tmp_path / "me"], capsys)
        assert code == 0
        rows = list(csv.DictReader(out.out.splitlines()))
        assert rows[0]["metric"] == "protein-mmd" and rows[0]["queries"] == "12"
        assert float(rows[0]["accuracy"]) > 0.9


def toy_pipeline(root):
    steps = [
        ["gen-data", "--n-per-class", 6, "--seed", 1, "--out", root / "data"],
        ["train-vae", "--records", root / "data" / "train.jsonl", "--steps", 10, "--seed", 1,
         "--out", root / "vae"],
        ["train-diff", "--vae-dir", root / "vae", "--epochs", 3, "--seed", 1, "--out", root / "diff"],
        ["generate", "--model-dir", root / "diff", "--vae-dir", root / "vae", "--n-per-class", 3,
         "--seed", 1, "--out", root / "gen"],
        ["evaluate", "--generated", root / "gen" / "generated.jsonl",
         "--reference", root / "data" / "train.jsonl", "--out", root / "eval"],
    ]
    for argv in steps:
        assert run(argv)[0] == 0, argv
    return (root / "eval" / "metrics.csv").read_text(encoding="utf-8")


def _rows(text):
    return [(r["metric"], r["set_a"], r["set_b"], float(r["value"]))
            for r in csv.DictReader(text.splitlines())]


def test_golden_report(tmp_path):
    report = toy_pipeline(tmp_path)
    if os.environ.get("HIERPROT_REGEN_GOLDEN"):
        GOLDEN.write_text(report, encoding="utf-8")
    expected, got = _rows(GOLDEN.read_text(encoding="utf-8")), _rows(report)
    assert [r[:3] for r in got] == [r[:3] for r in expected]
    for (m, a, b, want), (_, _, _, value) in zip(expected, got):
        if math.isnan(want):
            assert math.isnan(value), (m, a, b)
        else:
            assert value == pytest.approx(want, rel=GOLDEN_RTOL, abs=1e-12), (m, a, b)
    gen = read_records(tmp_path / "gen" / "generated.jsonl")
    assert len(gen) == 9 and {r.label for r in gen} == {1, 2, 3}
