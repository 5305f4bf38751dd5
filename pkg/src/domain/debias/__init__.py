"""Embedding-only debiasing: per-word penalized optimization, then shared-token merge."""
from .damp import damp_debias, occupation_token_ids
from .entities import DebiasConfig, DebiasReport, DebiasResult, WordReport
from .loss import (
    PROB_FLOOR,
    TemplateEntropyLoss,
    per_template_loss,
    per_template_loss_tensor,
    total_loss,
    total_loss_tensor,
)
from .merge import EmbeddingPatch, merge_shared_tokens
from .pipeline import DebiasOutcome, debias_vocabulary
