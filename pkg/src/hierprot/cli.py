"""Command-line entry point: ``hierprot <subcommand> [--config FILE] [flags]``.

Every subcommand reads its settings from three layers, later ones winning:
schema defaults, a JSON config file, command-line flags. Unknown config keys
are rejected. Each run writes ``manifest.json`` into its output directory.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, geometry, meta_eval, metrics
from .data_io import (DatasetManifest, generate_synthetic, load_checkpoint, read_json, read_records,
                      run_manifest, save_checkpoint, save_embeddings, split_records, write_json,
                      write_pdb, write_records)
from .data_io.records import ProteinRecord
from .data_io.synthetic import GENERATOR_VERSION
from .diffusion import (ALL_LEVELS, CONDITIONING, MAX_LENGTHS, DiffusionConfig, HierarchicalDiffusion,
                        LatentDataset, ablate_levels)
from .errors import ConfigError, HierProtError
from .vae import (BACKBONE, LEVEL_NAMES, VaeConfig, featurize, fit_step_direction, load_vae, save_vae,
                  trace_from_steps, train_vae)

OUTPUT_ROOT_ENV = "HIERPROT_OUTPUT_ROOT"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INPUT, EXIT_ERROR = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class Option:
    type: str  # int | float | str | bool | ints | strs
    default: object
    help: str
    choices: tuple = ()
    required: bool = False


COMMON = {
    "out": Option("str", None, f"output directory (default: ${OUTPUT_ROOT_ENV}/<subcommand>)"),
    "seed": Option("int", 0, "master seed"),
}

SCHEMA = {
    "gen-data": {
        "n_classes": Option("int", 3, "number of classes K"),
        "n_per_class": Option("int", 50, "records per class"),
        "min_length": Option("int", 40, "shortest chain"),
        "max_length": Option("int", 60, "longest chain"),
        "test_fraction": Option("float", 0.2, "held-out fraction per class"),
    },
    "featurize": {
        "records": Option("str", None, "record file (JSON lines)", required=True),
        "provider": Option("str", "builtin", "sequence embedding", ("builtin", "spectrum")),
        "threshold": Option("float", 8.0, "contact threshold in angstrom"),
    },
    "train-vae": {
        "records": Option("str", None, "training record file", required=True),
        "levels": Option("ints", [1, 2, 3], "levels to train (1 atom, 2 backbone, 3 amino acid)"),
        "latent_dim": Option("int", 16, "latent width d"),
        "hidden": Option("int", 32, "hidden width"),
        "heads": Option("int", 2, "attention heads"),
        "blocks": Option("int", 2, "decoder blocks"),
        "rounds": Option("int", 2, "message-passing rounds"),
        "threshold": Option("float", 8.0, "contact threshold in angstrom"),
        "kl_weight": Option("float", 1e-5, "KL weight"),
        "lr": Option("float", 3e-3, "peak learning rate"),
        "steps": Option("int", 300, "optimizer steps per level"),
        "batch_size": Option("int", 32, "graphs per step"),
    },
    "train-diff": {
        "vae_dir": Option("str", None, "train-vae output directory", required=True),
        "remove": Option("strs", [], "levels to ablate", ("atom", "backbone")),
        "max_len": Option("int", 64, "crop length", tuple(MAX_LENGTHS)),
        "steps": Option("int", 200, "diffusion steps T"),
        "beta_start": Option("float", 1e-4, "first beta"),
        "beta_end": Option("float", 0.02, "last beta"),
        "epochs": Option("int", 100, "training epochs"),
        "hidden": Option("int", 32, "denoiser width"),
        "heads": Option("int", 2, "attention heads"),
        "blocks": Option("int", 2, "transformer blocks"),
        "time_dim": Option("int", 64, "timestep embedding width"),
        "conditioning": Option("str", "adaln", "how c and the timestep enter the denoiser",
                               CONDITIONING),
        "lr": Option("float", 2e-3, "learning rate"),
        "batch_size": Option("int", 32, "sequences per step"),
    },
    "generate": {
        "model_dir": Option("str", None, "train-diff output directory", required=True),
        "vae_dir": Option("str", None, "train-vae output directory", required=True),
        "classes": Option("ints", [], "classes to sample (default: all)"),
        "n_per_class": Option("int", 20, "samples per class"),
        "pdb": Option("bool", False, "also write Cα-trace PDB files"),
    },
    "evaluate": {
        "generated": Option("str", None, "generated record file", required=True),
        "reference": Option("str", None, "reference record file", required=True),
        "metrics": Option("strs", ["protein-mmd", "protein-fid", "mmd"], "distances per class pair",
                          tuple(meta_eval.METRICS)),
        "diversity": Option("bool", True, "pairwise Seq.ID, RMSD and TM-score within each class"),
    },
    "meta-eval": {
        "refs": Option("str", None, "reference items: record file or query-format JSON lines",
                       required=True),
        "queries": Option("str", None, "query items: record file or query-format JSON lines",
                          required=True),
        "metric": Option("str", "protein-mmd", "metric under evaluation", tuple(meta_eval.METRICS)),
        "group_size": Option("int", 1, "queries pooled per set, grouped by class in file order"),
    },
    "canon-check": {
        "n": Option("int", 1000, "random chains"),
        "min_length": Option("int", 3, "shortest chain"),
        "max_length": Option("int", 60, "longest chain"),
        "tolerance": Option("float", 1e-6, "pass threshold on canonical coordinates"),
    },
}


def schema_for(subcommand):
    return {**COMMON, **SCHEMA[subcommand]}


# ---------------------------------------------------------------------------
# config resolution


def _coerce(key, opt, value):
    def fail():
        raise ConfigError(f"{key}: expected {opt.type}, got {value!r}")

    if opt.type == "bool":
        if not isinstance(value, bool):
            fail()
    elif opt.type == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            fail()
    elif opt.type == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail()
        value = float(value)
    elif opt.type == "str":
        if value is not None and not isinstance(value, str):
            fail()
    else:
        elem = int if opt.type == "ints" else str
        if not isinstance(value, list) or not all(isinstance(v, elem) and not isinstance(v, bool)
                                                  for v in value):
            fail()
        value = list(value)
    if opt.choices:
        bad = [v for v in (value if isinstance(value, list) else [value]) if v not in opt.choices]
        if bad:
            raise ConfigError(f"{key}: {bad[0]!r} not in {list(opt.choices)}")
    return value


def load_config_file(path):
    try:
        data = read_json(path)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    if "manifest_version" in data:  # rerun from a manifest
        data = data.get("config", {})
    return data


def resolve_config(subcommand, file_values=None, flag_values=None):
    """Merge defaults, file values and flag values, then validate."""
    schema = schema_for(subcommand)
    file_values = dict(file_values or {})
    file_values.pop("subcommand", None)
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: {unknown}")
    config = {k: opt.default for k, opt in schema.items()}
    for source in (file_values, flag_values or {}):
        for k, v in source.items():
            if v is not None:
                config[k] = _coerce(k, schema[k], v)
    missing = [k for k, opt in schema.items() if opt.required and config[k] is None]
    if missing:
        raise ConfigError(f"{subcommand}: missing required settings {missing}")
    if config["out"] is None:
        config["out"] = str(Path(os.environ.get(OUTPUT_ROOT_ENV, "hierprot-runs")) / subcommand)
    _validate(subcommand, config)
    return config


def _validate(sub, c):
    def positive(*keys):
        for k in keys:
            if c[k] <= 0:
                raise ConfigError(f"{k} must be positive, got {c[k]}")

    if sub in ("gen-data", "canon-check"):
        if sub == "gen-data":
            positive("n_per_class")
            if c["n_classes"] < 2:
                raise ConfigError("n_classes must be at least 2")
            if not 0 <= c["test_fraction"] < 1:
                raise ConfigError("test_fraction must lie in [0, 1)")
        if not 3 <= c["min_length"] <= c["max_length"]:
            raise ConfigError("need 3 <= min_length <= max_length")
    if sub == "train-vae":
        positive("latent_dim", "hidden", "heads", "steps", "batch_size", "lr")
        if any(lv not in ALL_LEVELS for lv in c["levels"]):
            raise ConfigError(f"levels must be drawn from {list(ALL_LEVELS)}")
    if sub == "train-diff":
        positive("steps", "epochs", "hidden", "heads", "batch_size", "lr")
        if not 0 < c["beta_start"] <= c["beta_end"] < 1:
            raise ConfigError("need 0 < beta_start <= beta_end < 1")
    if sub == "generate":
        positive("n_per_class")
    if sub == "meta-eval":
        positive("group_size")
    if sub == "canon-check":
        positive("n")


# ---------------------------------------------------------------------------
# subcommands


def _out(config):
    path = Path(config["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_gen_data(c, emit):
    """Write a synthetic class-conditional dataset with a train/test split."""
    out = _out(c)
    records = generate_synthetic(c["n_classes"], c["n_per_class"], (c["min_length"], c["max_length"]),
                                 seed=c["seed"])
    train, test = split_records(records, c["test_fraction"], seed=c["seed"])
    write_records(out / "train.jsonl", train)
    write_records(out / "test.jsonl", test)
    manifest = DatasetManifest(c["seed"], GENERATOR_VERSION, [r.id for r in train], [r.id for r in test])
    write_json(out / "dataset.json", manifest.to_json())
    emit(f"wrote {len(train)} train and {len(test)} test records to {out}")
    return ["train.jsonl", "test.jsonl", "dataset.json"]


def cmd_featurize(c, emit):
    """Embed record sequences and summarize their contact graphs."""
    out = _out(c)
    records = read_records(c["records"])
    emb = metrics.embed_sequences([r.sequence for r in records], c["provider"])
    save_embeddings(out / "embeddings.emb", emb.vectors)
    rows = []
    for r in records:
        graph = geometry.build_residue_graph(r.ca_coords, threshold=c["threshold"])
        rows.append({"id": r.id, "labels": list(r.labels), "length": len(r),
                     "contacts": int(len(graph.senders) // 2)})
    write_json(out / "index.json", {"provider": c["provider"], "dim": emb.dim, "records": rows})
    emit(f"embedded {len(records)} records ({emb.dim} dims)")
    return ["embeddings.emb", "index.json"]


def cmd_train_vae(c, emit):
    """Train the per-level VAEs and encode the training latents."""
    out = _out(c)
    records = read_records(c["records"])
    if not records:
        raise ConfigError(f"{c['records']} holds no records")
    vcfg = VaeConfig(latent_dim=c["latent_dim"], hidden=c["hidden"], heads=c["heads"],
                     blocks=c["blocks"], rounds=c["rounds"], threshold=c["threshold"],
                     kl_weight=c["kl_weight"], lr=c["lr"], steps=c["steps"],
                     batch_size=c["batch_size"], seed=c["seed"])
    latents, files = {}, []
    with open(out / "vae_loss.csv", "w", encoding="utf-8") as fh:
        fh.write("level,step,total,ce,mse,kl\n")
        for lv in sorted(set(c["levels"])):
            inputs = [featurize(r, lv, c["threshold"]) for r in records]
            model, history = train_vae(records, lv, vcfg, inputs=inputs)
            for step, parts in enumerate(history):
                fh.write(f"{lv},{step},{parts.total!r},{parts.ce!r},{parts.mse!r},{parts.kl!r}\n")
            save_vae(out / f"vae_level{lv}.ckpt", model)
            files.append(f"vae_level{lv}.ckpt")
            for r, z in zip(records, model.encode_many(inputs)):
                latents[f"level{lv}/{r.id}"] = z
            emit(f"level {lv} ({LEVEL_NAMES[lv]}): final loss {history[-1].total:.4f}")
    meta = {"kind": "latents", "ids": [r.id for r in records],
            "labels": [list(r.labels) for r in records], "levels": sorted(set(c["levels"]))}
    save_checkpoint(out / "latents.ckpt", latents, meta)
    write_json(out / "step_direction.json", fit_step_direction(records).tolist())
    return files + ["latents.ckpt", "step_direction.json", "vae_loss.csv"]


def _load_latents(vae_dir):
    tensors, meta = load_checkpoint(Path(vae_dir) / "latents.ckpt")
    lat = {lv: [tensors[f"level{lv}/{i}"] for i in meta["ids"]] for lv in meta["levels"]}
    return lat, [labels[0] for labels in meta["labels"]], meta


def cmd_train_diff(c, emit):
    """Train the hierarchical latent diffusion model (optionally ablated)."""
    out = _out(c)
    latents, labels, _ = _load_latents(c["vae_dir"])
    base = DiffusionConfig(n_classes=max(labels), latent_dim=latents[3][0].shape[1],
                           hidden=c["hidden"], heads=c["heads"], blocks=c["blocks"],
                           time_dim=c["time_dim"], conditioning=c["conditioning"], steps=c["steps"],
                           beta_start=c["beta_start"], beta_end=c["beta_end"], lr=c["lr"],
                           batch_size=c["batch_size"], max_len=c["max_len"], seed=c["seed"])
    dcfg = ablate_levels(base, c["remove"]) if c["remove"] else base
    pipe = HierarchicalDiffusion(dcfg)
    data = LatentDataset({lv: latents[lv] for lv in dcfg.levels if lv in latents}, labels)
    history = pipe.fit(data, c["epochs"])
    pipe.save(out)
    with open(out / "diffusion_loss.csv", "w", encoding="utf-8") as fh:
        fh.write("level,epoch,loss\n")
        for lv, losses in sorted(history.items()):
            fh.writelines(f"{lv},{e},{v!r}\n" for e, v in enumerate(losses, start=1))
    emit(f"levels {list(dcfg.levels)}: final loss "
         + ", ".join(f"{lv}={h[-1]:.4f}" for lv, h in sorted(history.items())))
    return ["diffusion_loss.csv"] + sorted(p.name for p in out.glob("*.ckpt"))


def cmd_generate(c, emit):
    """Sample class-conditional proteins from a trained model."""
    out = _out(c)
    pipe = HierarchicalDiffusion.load(c["model_dir"])
    vae_dir = Path(c["vae_dir"])
    vaes = {lv: load_vae(vae_dir / f"vae_level{lv}.ckpt") for lv in pipe.levels
            if (vae_dir / f"vae_level{lv}.ckpt").exists()}
    classes = c["classes"] or list(range(1, pipe.config.n_classes + 1))
    conditions = [k for k in classes for _ in range(c["n_per_class"])]
    want_geometry = BACKBONE in pipe.levels and BACKBONE in vaes
    result = pipe.sample(conditions, seed=c["seed"], vaes=vaes, decode_geometry=want_geometry)
    direction = None
    if want_geometry and (vae_dir / "step_direction.json").exists():
        direction = np.asarray(read_json(vae_dir / "step_direction.json"))
    records, files = [], ["generated.jsonl", "generated_latents.ckpt"]
    for n, (label, seq) in enumerate(zip(conditions, result.sequences)):
        meta = {"condition": label, "seed": c["seed"], "sample_index": n}
        if direction is not None:
            ca, meta["trace"] = trace_from_steps(result.geometry[BACKBONE][n], direction), "decoded"
        else:
            ca, meta["trace"] = np.zeros((len(seq), 3)), "none"
        records.append(ProteinRecord(f"gen{n:04d}", seq, ca, (label,), meta=meta))
    write_records(out / "generated.jsonl", records)
    latents = {f"level{lv}/{r.id}": z for lv, zs in result.latents.items() for r, z in zip(records, zs)}
    save_checkpoint(out / "generated_latents.ckpt", latents,
                    {"kind": "generated-latents", "seed": c["seed"], "conditions": conditions,
                     "levels": sorted(result.latents)})
    if c["pdb"] and direction is not None:
        (out / "pdb").mkdir(exist_ok=True)
        for r in records:
            write_pdb(out / "pdb" / f"{r.id}.pdb", r, ca_only=True)
            files.append(f"pdb/{r.id}.pdb")
    emit(f"generated {len(records)} sequences for classes {classes}")
    return files


def _by_class(records):
    out = {}
    for r in records:
        out.setdefault(r.label, []).append(r)
    return out


def cmd_evaluate(c, emit):
    """Score generated sets against reference classes."""
    out = _out(c)
    gen, ref = _by_class(read_records(c["generated"])), _by_class(read_records(c["reference"]))
    rows = []
    for metric in c["metrics"]:
        provider = "spectrum" if meta_eval.METRIC_FEATURES[metric] == "spectrum" else "builtin"
        ref_sets = {k: metrics.embed_sequences([r.sequence for r in v], provider) for k, v in ref.items()}
        for k in sorted(gen):
            g = metrics.embed_sequences([r.sequence for r in gen[k]], provider)
            for j in sorted(ref_sets):
                value = float("nan")
                if metric != "protein-fid" or (len(g) > 1 and len(ref_sets[j]) > 1):
                    value = meta_eval.class_distance(g, ref_sets[j], metric)
                rows.append((metric, f"gen{k}", f"ref{j}", value))
    if c["diversity"]:
        for k in sorted(gen):
            members = gen[k]
            rows.append(("seq-id", f"gen{k}", f"gen{k}",
                         metrics.pairwise_mean([r.sequence for r in members], metrics.seq_id)))
            traced = [r.ca_coords for r in members if r.meta.get("trace") != "none"]
            by_len = {}
            for ca in traced:
                by_len.setdefault(len(ca), []).append(ca)
            same = [group for group in by_len.values() if len(group) > 1]
            for name, fn in (("rmsd", metrics.kabsch_rmsd), ("tm-score", metrics.tm_score)):
                vals = [metrics.pairwise_mean(group, fn) for group in same]
                rows.append((name, f"gen{k}", f"gen{k}", float(np.mean(vals)) if vals else float("nan")))
    text = metrics.metrics_csv(rows)
    (out / "metrics.csv").write_text(text, encoding="utf-8")
    emit(text.rstrip("\n"))
    return ["metrics.csv"]


def cmd_meta_eval(c, emit):
    """Rank true classes under a consistency metric (accuracy, MRR, NMR)."""
    out = _out(c)
    provider = "spectrum" if meta_eval.METRIC_FEATURES[c["metric"]] == "spectrum" else "builtin"
    refs = meta_eval.references_from_items(meta_eval.read_labeled_items(c["refs"], provider))
    queries = meta_eval.grouped_queries(meta_eval.read_labeled_items(c["queries"], provider),
                                        c["group_size"])
    if not queries:
        raise ConfigError("no query sets; lower group_size")
    report = meta_eval.evaluate_metric(queries, refs, c["metric"])
    (out / "summary.csv").write_text(report.summary_csv(), encoding="utf-8")
    (out / "queries.csv").write_text(report.queries_csv(), encoding="utf-8")
    emit(report.summary_csv().rstrip("\n"))
    return ["summary.csv", "queries.csv"]


def cmd_canon_check(c, emit):
    """Check SE(3) invariance of canonicalization on random chains."""
    out = _out(c)
    t0 = time.perf_counter()
    canon, dist = geometry.rigid_invariance_check(c["n"], c["seed"], (c["min_length"], c["max_length"]))
    ok = canon < c["tolerance"]
    report = {"chains": c["n"], "max_canonical_deviation": canon, "max_distance_deviation": dist,
              "seconds": time.perf_counter() - t0, "pass": ok}
    write_json(out / "canon_check.json", report)
    emit(f"max coordinate deviation {canon:.3e} (distance deviation {dist:.3e}) "
         f"over {c['n']} chains: {'PASS' if ok else 'FAIL'}")
    return ["canon_check.json"], ok


COMMANDS = {
    "gen-data": cmd_gen_data, "featurize": cmd_featurize, "train-vae": cmd_train_vae,
    "train-diff": cmd_train_diff, "generate": cmd_generate, "evaluate": cmd_evaluate,
    "meta-eval": cmd_meta_eval, "canon-check": cmd_canon_check,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="hierprot", description="Hierarchical protein diffusion toolkit.")
    parser.add_argument("--version", action="version", version=f"hierprot {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in COMMANDS:
        p = subs.add_parser(name, help=COMMANDS[name].__doc__)
        p.add_argument("--config", help="JSON config file (a run manifest also works)")
        for key, opt in schema_for(name).items():
            flag = "--" + key.replace("_", "-")
            kw = {"dest": key, "default": None, "help": f"{opt.help} [default: {opt.default!r}]"}
            if opt.type == "bool":
                p.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
            elif opt.type in ("ints", "strs"):
                p.add_argument(flag, nargs="*", type=int if opt.type == "ints" else str, **kw)
            else:
                p.add_argument(flag, type={"int": int, "float": float, "str": str}[opt.type], **kw)
    return parser


def _error(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    sub = args.subcommand
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        config = resolve_config(sub, file_values, flags)
        outcome = COMMANDS[sub](config, lambda msg: print(msg, file=stdout))
        outputs, ok = outcome if isinstance(outcome, tuple) else (outcome, True)
        manifest = run_manifest(sub, config, config["seed"], outputs)
        write_json(Path(config["out"]) / "manifest.json", manifest)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), EXIT_CONFIG)
    except FileNotFoundError as exc:
        return _error("MissingInput", f"{exc.filename}: {exc.strerror}", EXIT_INPUT)
    except HierProtError as exc:
        return _error(type(exc).__name__, str(exc), EXIT_ERROR)
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
