"""Embedding geometry: gender subspace and the projection / neighbour diagnostic."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.stats import spearmanr
from sklearn.decomposition import PCA

from src.core.errors import DegenerateStatisticsError, InvalidInputError
from src.core.types import FloatArray
from src.domain.model_api import LanguageModel

_RANK_TOL = 1e-12


class GeometryReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    subspace_basis: list[list[float]]
    projections: dict[str, float]
    neighbor_fractions: dict[str, float]
    correlation: float

    def to_csv(self) -> str:
        lines = ['word,projection,neighbor_fraction']
        for word, projection in self.projections.items():
            lines.append(f'{word},{projection!r},{self.neighbor_fractions[word]!r}')
        return '\n'.join(lines) + '\n'


def word_vector(model: LanguageModel, word: str) -> FloatArray:
    """Embedding of a word; multi-token words use the mean of their rows."""
    ids = model.constituent_tokens(word)
    return np.mean([model.get_embedding(t) for t in ids], axis=0)


def gender_subspace(
    model: LanguageModel,
    definitional_pairs: Sequence[tuple[str, str]],
    n_components: int = 1,
) -> FloatArray:
    """Top principal directions of the centred pair members, shape (n_components, d).

    Each pair (a, b) contributes +(a - b)/2 and -(a - b)/2. Every direction is
    signed so that he - she projects positive (the first pair when that is degenerate).
    """
    if not definitional_pairs:
        raise InvalidInputError('gender_subspace needs at least one pair.')
    diffs = np.stack(
        [(word_vector(model, a) - word_vector(model, b)) / 2.0 for a, b in definitional_pairs]
    )
    samples = np.concatenate([diffs, -diffs])
    if float(np.linalg.norm(samples)) <= _RANK_TOL:
        raise DegenerateStatisticsError('Every definitional pair has identical embeddings.')
    n_components = min(n_components, np.linalg.matrix_rank(samples))
    if n_components < 1:
        raise DegenerateStatisticsError('Definitional pairs span no direction.')
    pca = PCA(n_components=n_components, svd_solver='full').fit(samples)
    basis = pca.components_.astype(np.float64)
    vocab = model.vocabulary
    he_minus_she = model.get_embedding(vocab.he_id) - model.get_embedding(vocab.she_id)
    for i in range(len(basis)):
        basis[i] /= np.linalg.norm(basis[i])
        anchor = he_minus_she if abs(float(basis[i] @ he_minus_she)) > _RANK_TOL else diffs[0]
        if float(basis[i] @ anchor) < 0:
            basis[i] = -basis[i]
    return basis


def projection_neighbor_curve(
    model: LanguageModel,
    occupation_words: Sequence[str],
    k: int,
    *,
    basis: FloatArray | None = None,
    definitional_pairs: Sequence[tuple[str, str]] = (('he', 'she'),),
    reference: LanguageModel | None = None,
) -> GeometryReport:
    """Projection on the gender direction vs. share of male-leaning cosine neighbours.

    Rows are centred on the mean row of `reference` (default `model`). The
    projections and the male/female label of every vocabulary row come from
    `reference`; the neighbours come from `model`. Passing the debiased model
    with its original as `reference` plots neighbour bias against original bias.
    """
    reference = model if reference is None else reference
    vocab_size = len(model.vocabulary)
    if k < 1:
        raise InvalidInputError('k must be at least 1.')
    if k >= vocab_size:
        raise InvalidInputError(f'k={k} must be smaller than the vocabulary ({vocab_size}).')
    if reference.vocabulary != model.vocabulary:
        raise InvalidInputError('reference and model must share a vocabulary.')
    if basis is None:
        basis = gender_subspace(reference, definitional_pairs)
    direction = np.asarray(basis, dtype=np.float64).reshape(-1, model.embedding_dim)[0]

    original = reference.embedding_matrix()
    centre = original.mean(axis=0)
    leaning = (original - centre) @ direction > 0
    table = model.embedding_matrix() - centre
    norms = np.linalg.norm(table, axis=1)
    norms[norms == 0] = 1.0
    unit = table / norms[:, None]

    projections: dict[str, float] = {}
    fractions: dict[str, float] = {}
    for word in occupation_words:
        projections[word] = float((word_vector(reference, word) - centre) @ direction)
        vector = word_vector(model, word) - centre
        length = float(np.linalg.norm(vector)) or 1.0
        similarity = unit @ (vector / length)
        similarity[list(model.constituent_tokens(word))] = -np.inf
        neighbours = np.argsort(-similarity, kind='stable')[:k]
        fractions[word] = float(leaning[neighbours].mean())

    correlation = 0.0
    if len(projections) > 1:
        rho = spearmanr(list(projections.values()), list(fractions.values())).statistic
        correlation = 0.0 if np.isnan(rho) else float(rho)
    return GeometryReport(
        k=k,
        subspace_basis=np.asarray(basis, dtype=np.float64).tolist(),
        projections=projections,
        neighbor_fractions=fractions,
        correlation=correlation,
    )
