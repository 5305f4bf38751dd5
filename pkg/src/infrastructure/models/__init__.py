"""Language-model backends.

This package contains ONLY model implementations and their storage format.
Debiasing, evaluation and pipeline logic live in the domain and runtime
layers.
"""
from .checkpoint import (
    checkpoint_bytes,
    decode_container,
    encode_container,
    model_from_checkpoint,
    patch_bytes,
    read_patch,
)
from .hf_adapter import HuggingFaceCausalLM
from .toy_backend import ToyLanguageModel, init_toy_model
from .toy_transformer import (
    ToyArchConfig,
    ToyTransformer,
    mean_token_row_norm,
    round_to_float32_grid,
    scale_residual_stream,
)
