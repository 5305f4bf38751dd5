"""Penalized gradient descent on one occupation's embedding rows.

Only the constituent-token rows of the word move. Each iteration evaluates
the loss with the current rows, takes one Adam step and installs the new
rows into the model, so the next evaluation sees the update. K is
fingerprinted before and after; any change is an error.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
import torch

from src.core.errors import InvalidInputError, OptimizationFailureError, ParameterPartitionError
from src.core.observability import Span, log_event, new_trace_id
from src.domain.causal import mean_tde
from src.domain.model_api import LanguageModel, embedding_digest, fingerprint
from src.domain.templates import Template

from .entities import DebiasConfig, DebiasResult
from .loss import total_loss_tensor


def occupation_token_ids(model: LanguageModel, occupation: str) -> tuple[int, ...]:
    """Constituent token ids, first occurrence order, duplicates dropped."""
    return tuple(dict.fromkeys(model.constituent_tokens(occupation.strip().lower())))


def damp_debias(
    model: LanguageModel,
    occupation: str,
    templates: Sequence[Template],
    config: DebiasConfig,
    *,
    held_out: Sequence[Template] | None = None,
    template_seeds: dict[str, int] | None = None,
    trace_id: str | None = None,
) -> DebiasResult:
    """Debias `occupation` in place on `model` and return the trajectory.

    TDE before and after is measured on `held_out` when given, otherwise on
    the optimization templates.
    """
    if not templates:
        raise InvalidInputError(f"No templates for '{occupation}'.")
    trace_id = trace_id or new_trace_id()
    span = Span(name='debias.word', trace_id=trace_id, attributes={'occupation': occupation})
    evaluation = list(held_out) if held_out else list(templates)

    token_ids = occupation_token_ids(model, occupation)
    k_before = fingerprint(model)
    others_before = embedding_digest(model, exclude=frozenset(token_ids))

    initial = {t: torch.as_tensor(model.get_embedding(t)) for t in token_ids}
    rows = {t: initial[t].clone().requires_grad_(True) for t in token_ids}
    contexts = [list(t.token_ids) for t in templates]
    tde_before = mean_tde(model, evaluation, occupation).mean

    curve: list[float] = []
    iteration = 0
    try:
        for round_index in range(config.alpha_rounds):
            alpha = config.alpha * config.alpha_growth**round_index
            optimizer = torch.optim.Adam(list(rows.values()), lr=config.lr)
            for _ in range(config.m):
                optimizer.zero_grad(set_to_none=True)
                loss = total_loss_tensor(model, contexts, rows, initial, alpha, config.log_base)
                value = loss.item()
                if not math.isfinite(value):
                    raise OptimizationFailureError(
                        f"Loss for '{occupation}' is not finite", iteration=iteration
                    )
                loss.backward()
                optimizer.step()
                curve.append(value)
                for t, row in rows.items():
                    model.set_embedding(t, row.detach().numpy())
                iteration += 1
    finally:
        span.end()

    if fingerprint(model) != k_before:
        raise ParameterPartitionError(f"Debiasing '{occupation}' changed knowledge parameters.")
    if embedding_digest(model, exclude=frozenset(token_ids)) != others_before:
        raise ParameterPartitionError(f"Debiasing '{occupation}' changed unrelated embedding rows.")

    initial_rows = np.stack([initial[t].numpy() for t in token_ids])
    final_rows = np.stack([model.get_embedding(t) for t in token_ids])
    displacement = float(np.sqrt(((final_rows - initial_rows) ** 2).sum()))
    tde_after = mean_tde(model, evaluation, occupation).mean

    log_event(
        'debias.word',
        trace_id=trace_id,
        span=span,
        level=logging.INFO,
        occupation=occupation,
        tde_before=tde_before,
        tde_after=tde_after,
        displacement=displacement,
        loss_first=curve[0],
        loss_last=curve[-1],
    )
    return DebiasResult(
        occupation=occupation,
        token_ids=token_ids,
        initial_rows=initial_rows,
        final_rows=final_rows,
        loss_curve=tuple(curve),
        tde_before=tde_before,
        tde_after=tde_after,
        displacement=displacement,
        template_seeds=dict(template_seeds or {}),
    )
