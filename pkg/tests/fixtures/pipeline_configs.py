# ------------------------------------------------------------------------------
# Small pipeline configs for end-to-end runs
# ------------------------------------------------------------------------------

from __future__ import annotations

from pathlib import Path
from typing import Any

from src.core.config import Settings
from src.runtime import DEFAULT_CONFIG, PipelineConfig, load_pipeline_config

TINY_OVERRIDES: dict[str, Any] = {
    'seed': 7,
    'deterministic': True,
    'occupations': ['doctor', 'nurse'],
    'corpus': {'size': 1500, 'heldout_size': 100},
    'model': {'d_model': 16, 'n_heads': 2, 'n_layers': 1, 'd_ff': 32},
    'train': {'epochs': 1},
    'templates': {'max_len': 6, 'top_k': 5, 'max_restarts': 5},
    'debias': {'n': 2, 'm': 3},
    'eval': {'seat_permutations': 20, 'neighbor_k': 5},
}


def tiny_config(out_dir: Path, **overrides: Any) -> PipelineConfig:
    """The bundled desk config shrunk to run in seconds."""
    merged = {**TINY_OVERRIDES, **overrides, 'paths': {'out_dir': str(out_dir)}}
    return load_pipeline_config(DEFAULT_CONFIG, merged, settings=Settings())
