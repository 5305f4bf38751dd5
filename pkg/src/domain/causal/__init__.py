"""Causal effect estimation: gender predictions, TDE, TE and its decomposition."""
from .effects import (
    IDENTITY_TOLERANCE,
    decompose,
    gender_prediction,
    gender_predictions,
    male_probabilities,
    mean_tde,
    renormalize,
    rows_digest,
    tde_per_template,
    total_effect,
)
from .entities import EffectDecomposition, EffectReport, GenderPrediction, TdeEstimate
