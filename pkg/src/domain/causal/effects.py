"""Gender predictions, TDE and the TE = TDE + NIE decomposition.

The outcome Y is p_male = p(he|t) / (p(he|t) + p(she|t)). The unbiased
target for a gender-neutral occupation is 0.5, so TDE against that target
needs no reference model; the decomposition compares against one.
"""

from __future__ import annotations

import hashlib
from collections.abc import Mapping, Sequence

import numpy as np
import torch

from src.core.errors import (
    DecompositionIdentityError,
    DegenerateDistributionError,
    InvalidInputError,
)
from src.core.types import FloatArray, TokenIds
from src.domain.model_api import LanguageModel, fingerprint
from src.domain.templates import Template

from .entities import EffectDecomposition, GenderPrediction, TdeEstimate

IDENTITY_TOLERANCE = 1e-9
_BATCH = 256


def _contexts(templates: Sequence[Template | TokenIds]) -> list[list[int]]:
    return [list(t.token_ids if isinstance(t, Template) else t) for t in templates]


def male_probabilities(
    model: LanguageModel,
    contexts: Sequence[TokenIds],
    overrides: Mapping[int, torch.Tensor] | None = None,
) -> torch.Tensor:
    """p_male per context as a float64 tensor; differentiable through `overrides`."""
    vocab = model.vocabulary
    parts: list[torch.Tensor] = []
    for start in range(0, len(contexts), _BATCH):
        log_probs = model.last_token_log_probs(contexts[start : start + _BATCH], overrides)
        pair = torch.stack([log_probs[:, vocab.he_id], log_probs[:, vocab.she_id]], dim=-1)
        if not bool(torch.isfinite(pair).any(dim=-1).all()):
            bad = int((~torch.isfinite(pair).any(dim=-1)).nonzero()[0]) + start
            raise DegenerateDistributionError(
                f'p(he|t) + p(she|t) = 0 for context #{bad}; cannot renormalize.'
            )
        parts.append(torch.softmax(pair, dim=-1)[:, 0])
    if not parts:
        return torch.zeros(0, dtype=torch.float64)
    return torch.cat(parts)


def renormalize(p_he: float, p_she: float, template_ref: str | None = None) -> GenderPrediction:
    total = p_he + p_she
    if not total > 0:
        raise DegenerateDistributionError('p(he|t) + p(she|t) = 0; cannot renormalize.')
    p_male = p_he / total
    return GenderPrediction(p_male=p_male, p_female=1.0 - p_male, template_ref=template_ref)


def gender_predictions(
    model: LanguageModel, templates: Sequence[Template | TokenIds]
) -> list[GenderPrediction]:
    with torch.no_grad():
        p_male = male_probabilities(model, _contexts(templates)).numpy()
    refs = [t.text if isinstance(t, Template) else None for t in templates]
    return [
        GenderPrediction(p_male=float(p), p_female=1.0 - float(p), template_ref=ref)
        for p, ref in zip(p_male, refs)
    ]


def gender_prediction(model: LanguageModel, template: Template | TokenIds) -> GenderPrediction:
    return gender_predictions(model, [template])[0]


def tde_per_template(model: LanguageModel, template: Template | TokenIds) -> float:
    return abs(0.5 - gender_prediction(model, template).p_male)


def _p_male_array(
    model: LanguageModel,
    templates: Sequence[Template | TokenIds],
    overrides: Mapping[int, FloatArray] | None = None,
) -> FloatArray:
    rows = (
        {int(t): torch.as_tensor(np.asarray(r, dtype=np.float64)) for t, r in overrides.items()}
        if overrides
        else None
    )
    with torch.no_grad():
        return male_probabilities(model, _contexts(templates), rows).numpy()


def mean_tde(
    model: LanguageModel,
    templates: Sequence[Template | TokenIds],
    occupation: str | None = None,
) -> TdeEstimate:
    if not templates:
        raise InvalidInputError('mean_tde needs at least one template.')
    p_male = _p_male_array(model, templates)
    per_template = np.abs(0.5 - p_male)
    if occupation is None:
        first = templates[0]
        occupation = first.occupation if isinstance(first, Template) else ''
    return TdeEstimate(
        occupation=occupation,
        per_template=tuple(float(v) for v in per_template),
        mean=float(per_template.mean()),
        mean_signed_bias=float((p_male - 0.5).mean()),
    )


def _check_compatible(a: LanguageModel, b: LanguageModel) -> None:
    if a.vocabulary != b.vocabulary:
        raise InvalidInputError('Models must share one vocabulary.')
    if a.embedding_dim != b.embedding_dim:
        raise InvalidInputError('Models must share the embedding dimension.')


def total_effect(
    biased_model: LanguageModel,
    reference_model: LanguageModel,
    templates: Sequence[Template | TokenIds],
) -> float:
    """Mean over templates of p_male(biased) - p_male(reference)."""
    _check_compatible(biased_model, reference_model)
    if not templates:
        raise InvalidInputError('total_effect needs at least one template.')
    diff = _p_male_array(biased_model, templates) - _p_male_array(reference_model, templates)
    return float(diff.mean())


def rows_digest(rows: Mapping[int, FloatArray]) -> str:
    h = hashlib.sha256()
    for token_id in sorted(rows):
        h.update(int(token_id).to_bytes(8, 'little'))
        h.update(np.ascontiguousarray(rows[token_id], dtype='<f8').tobytes())
    return h.hexdigest()


def decompose(
    biased_model: LanguageModel,
    intervened_embeddings: Mapping[int, FloatArray],
    reference_model: LanguageModel,
    templates: Sequence[Template | TokenIds],
    occupation: str | None = None,
) -> EffectDecomposition:
    """Split TE into the embedding-driven TDE and the knowledge-driven NIE.

    With Y(x, k) the mean p_male:
      tde = Y(x, k) - Y(x_hat, k)
      nie = Y(x_hat, k) - Y(x_hat, k0)
      te  = Y(x, k) - Y(x_hat, k0)
    x_hat is installed per call through row overrides; neither model is mutated.
    """
    _check_compatible(biased_model, reference_model)
    if not templates:
        raise InvalidInputError('decompose needs at least one template.')
    for token_id, row in intervened_embeddings.items():
        biased_model.vocabulary.check_ids([token_id])
        if np.shape(row) != (biased_model.embedding_dim,):
            raise InvalidInputError(f'Intervened row for token {token_id} has the wrong shape.')

    y_x_k = float(_p_male_array(biased_model, templates).mean())
    y_hat_k = float(_p_male_array(biased_model, templates, intervened_embeddings).mean())
    y_hat_k0 = float(_p_male_array(reference_model, templates, intervened_embeddings).mean())

    tde = y_x_k - y_hat_k
    nie = y_hat_k - y_hat_k0
    te = y_x_k - y_hat_k0
    if abs(te - (tde + nie)) >= IDENTITY_TOLERANCE:
        raise DecompositionIdentityError(f'te={te!r} but tde + nie = {tde + nie!r}')

    if occupation is None:
        first = templates[0]
        occupation = first.occupation if isinstance(first, Template) else ''
    return EffectDecomposition(
        occupation=occupation,
        te=te,
        tde=tde,
        nie=nie,
        biased_model_id=fingerprint(biased_model).hex[:16],
        reference_model_id=fingerprint(reference_model).hex[:16],
        intervened_embedding_id=rows_digest(intervened_embeddings)[:16],
    )
