# ------------------------------------------------------------------------------
# Small toy models, built once per test session
# ------------------------------------------------------------------------------

from __future__ import annotations

from functools import lru_cache

from src.core.config import Settings
from src.domain.corpus_synth import (
    BiasProfile,
    TrainConfig,
    build_vocabulary,
    generate_corpus,
    train_reference_pair,
    train_toy_model,
)
from src.infrastructure.models import ToyArchConfig, ToyLanguageModel, init_toy_model
from src.runtime import DEFAULT_CONFIG, PipelineConfig, load_pipeline_config

SMALL_ARCH = ToyArchConfig(d_model=16, n_heads=2, n_layers=1, context_length=16, d_ff=32)
SMALL_TRAIN = TrainConfig(epochs=2, batch_size=64, init_seed=3, shuffle_seed=4)

SMALL_PROFILE = BiasProfile(
    occupations={'doctor': 0.95, 'engineer': 0.9, 'nurse': 0.05, 'teacher': 0.5},
)


@lru_cache(maxsize=None)
def untrained_model(seed: int = 0) -> ToyLanguageModel:
    vocabulary = build_vocabulary(SMALL_PROFILE.occupation_words)
    return init_toy_model(vocabulary, SMALL_ARCH, seed)


@lru_cache(maxsize=None)
def trained_pair() -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """(biased, reference) trained on 2000-sentence corpora; callers must copy before mutating."""
    return train_reference_pair(SMALL_PROFILE, 2000, 11, SMALL_ARCH, SMALL_TRAIN)


@lru_cache(maxsize=None)
def desk_config() -> PipelineConfig:
    return load_pipeline_config(DEFAULT_CONFIG, {'seed': 0}, settings=Settings())


@lru_cache(maxsize=None)
def desk_biased_model() -> ToyLanguageModel:
    """The bundled desk run's biased model; callers must copy before mutating."""
    cfg = desk_config()
    corpus = generate_corpus(cfg.profile, cfg.corpus.size, cfg.stage_seeds()['corpus'])
    return train_toy_model(corpus, cfg.model, cfg.train_config())
