"""Entropy surrogate for TDE plus the quadratic anchor penalty.

per template: 1 + p1 log_b p1 + p2 log_b p2, zero at p1 = p2 = 0.5 and one
at a point mass (base 2). Probabilities are clipped at 1e-12 inside the log
only, so 0 * log 0 contributes exactly 0.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence

import numpy as np
import torch

from src.core.types import FloatArray, TokenIds
from src.domain.causal import male_probabilities
from src.domain.model_api import LanguageModel, RowOverrides, ScalarLossSpec
from src.domain.templates import Template

PROB_FLOOR = 1e-12


def per_template_loss(p1: float, p2: float, base: float = 2.0) -> float:
    total = 1.0
    for p in (p1, p2):
        total += p * math.log(min(max(p, PROB_FLOOR), 1.0), base)
    return total


def per_template_loss_tensor(p_male: torch.Tensor, base: float = 2.0) -> torch.Tensor:
    p_female = 1.0 - p_male
    scale = 1.0 / math.log(base)
    entropy_terms = p_male * torch.log(p_male.clamp(PROB_FLOOR, 1.0)) + p_female * torch.log(
        p_female.clamp(PROB_FLOOR, 1.0)
    )
    return 1.0 + scale * entropy_terms


def _as_rows(rows: Mapping[int, object]) -> dict[int, torch.Tensor]:
    return {
        int(t): r if isinstance(r, torch.Tensor) else torch.as_tensor(np.asarray(r, np.float64))
        for t, r in rows.items()
    }


def total_loss_tensor(
    model: LanguageModel,
    contexts: Sequence[TokenIds],
    rows: RowOverrides,
    original_rows: Mapping[int, torch.Tensor],
    alpha: float,
    base: float = 2.0,
) -> torch.Tensor:
    """mean_t per_template_loss + alpha * sum ||row - original||^2 over the occupation's rows."""
    p_male = male_probabilities(model, contexts, rows)
    entropy = per_template_loss_tensor(p_male, base).mean()
    penalty = torch.zeros((), dtype=torch.float64)
    for token_id, row in rows.items():
        diff = row - original_rows[token_id]
        penalty = penalty + (diff * diff).sum()
    return entropy + alpha * penalty


def total_loss(
    model: LanguageModel,
    templates: Sequence[Template | TokenIds],
    occupation_rows: Mapping[int, FloatArray],
    original_rows: Mapping[int, FloatArray],
    alpha: float,
    base: float = 2.0,
) -> float:
    contexts = [list(t.token_ids if isinstance(t, Template) else t) for t in templates]
    with torch.no_grad():
        value = total_loss_tensor(
            model, contexts, _as_rows(occupation_rows), _as_rows(original_rows), alpha, base
        )
    return float(value)


class TemplateEntropyLoss(ScalarLossSpec):
    """total_loss as a loss spec, so embedding_gradient can differentiate it."""

    def __init__(
        self,
        templates: Sequence[Template | TokenIds],
        original_rows: Mapping[int, FloatArray],
        alpha: float = 0.0,
        base: float = 2.0,
    ) -> None:
        self.contexts = [list(t.token_ids if isinstance(t, Template) else t) for t in templates]
        self.original_rows = _as_rows(original_rows)
        self.alpha = float(alpha)
        self.base = float(base)

    def evaluate(self, model: LanguageModel, rows: RowOverrides) -> torch.Tensor:
        # Rows without an anchor are anchored at their stored value.
        anchors = {
            t: self.original_rows[t]
            if t in self.original_rows
            else torch.as_tensor(model.get_embedding(t))
            for t in rows
        }
        return total_loss_tensor(model, self.contexts, dict(rows), anchors, self.alpha, self.base)
