"""Ingestion, synthesis and persistence."""

from .checkpoint import (load_checkpoint, load_embeddings, loads_checkpoint, dumps_checkpoint,
                         save_checkpoint, save_embeddings)
from .manifest import DatasetManifest, config_hash, read_json, run_manifest, write_json
from .pdb import PdbWarning, format_pdb, parse_pdb_backbone, write_pdb
from .records import ProteinRecord, dumps_records, loads_records, read_records, write_records
from .synthetic import SplitMix64, generate_synthetic, split_records

__all__ = [
    "DatasetManifest", "PdbWarning", "ProteinRecord", "SplitMix64", "config_hash",
    "dumps_checkpoint", "dumps_records", "format_pdb", "generate_synthetic", "load_checkpoint",
    "load_embeddings", "loads_checkpoint", "loads_records", "parse_pdb_backbone", "read_json",
    "read_records", "run_manifest", "save_checkpoint", "save_embeddings", "split_records",
    "write_json", "write_pdb", "write_records",
]
