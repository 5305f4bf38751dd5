"""Synthetic gender-imbalanced corpora and the toy models trained on them."""
from .corpus import (
    Corpus,
    cooccurrence_counts,
    cooccurrence_rates,
    generate_corpus,
    read_corpus,
    read_sentences,
)
from .grammar import DEFINITIONAL_PAIRS, GrammarFamily, build_vocabulary
from .profile import BiasProfile, load_profile
from .training import TrainConfig, TrainingRun, fit_toy_model, train_reference_pair, train_toy_model
