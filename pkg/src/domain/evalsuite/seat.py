"""Sentence-level embedding association test.

s(w, A, B) = mean_a cos(w, a) - mean_b cos(w, b)
d = (mean_x s(x) - mean_y s(y)) / std_{w in X u Y} s(w)   (sample std, ddof=1)

Positive d means X associates with A. Sentences are encoded as the mean of
the model's final-layer hidden states.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.core.errors import ConfigError, DegenerateStatisticsError, InvalidInputError
from src.core.types import FloatArray, derive_seed
from src.domain.model_api import LanguageModel

_EXACT_LIMIT = 100_000


class SeatSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    name: str = 'seat'
    targets_x: list[str] = Field(min_length=1)
    targets_y: list[str] = Field(min_length=1)
    attributes_a: list[str] = Field(min_length=1)
    attributes_b: list[str] = Field(min_length=1)

    def swapped_targets(self) -> SeatSpec:
        return self.model_copy(update={'targets_x': self.targets_y, 'targets_y': self.targets_x})

    def swapped_attributes(self) -> SeatSpec:
        return self.model_copy(
            update={'attributes_a': self.attributes_b, 'attributes_b': self.attributes_a}
        )


@dataclass(frozen=True)
class SeatResult:
    name: str
    effect_size: float
    p_value: float | None
    permutations: int
    exact: bool


def load_seat_spec(path: Path) -> SeatSpec:
    try:
        return SeatSpec.model_validate(json.loads(path.read_text(encoding='utf-8')))
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f'Invalid SEAT spec {path}: {exc}') from exc


def encode(model: LanguageModel, text: str) -> FloatArray:
    token_ids = model.tokenize(text)
    if not token_ids:
        raise InvalidInputError(f'Cannot encode empty text {text!r}.')
    return model.hidden_states(token_ids).mean(axis=0)


def _encode_all(model: LanguageModel, texts: list[str]) -> FloatArray:
    return np.stack([encode(model, t) for t in texts])


def _unit_rows(m: FloatArray) -> FloatArray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateStatisticsError('Cannot take the cosine of a zero vector.')
    return m / norms


def associations(w: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    """s(w, A, B) for every row of `w`."""
    wn, an, bn = _unit_rows(w), _unit_rows(a), _unit_rows(b)
    return (wn @ an.T).mean(axis=1) - (wn @ bn.T).mean(axis=1)


def effect_size_from_vectors(
    x: FloatArray, y: FloatArray, a: FloatArray, b: FloatArray
) -> float:
    s_x = associations(x, a, b)
    s_y = associations(y, a, b)
    spread = float(np.std(np.concatenate([s_x, s_y]), ddof=1))
    if not spread > 0:
        raise DegenerateStatisticsError('All associations are equal; the effect size is undefined.')
    return float((s_x.mean() - s_y.mean()) / spread)


def permutation_p_value(
    s_x: FloatArray,
    s_y: FloatArray,
    *,
    samples: int = 10_000,
    seed: int = 0,
) -> tuple[float, int, bool]:
    """One-sided p: share of equal-size re-partitions whose statistic reaches the observed one.

    Enumerates every partition when there are at most 100k of them, samples otherwise.
    """
    pooled = np.concatenate([s_x, s_y])
    n, size = len(pooled), len(s_x)
    total = float(pooled.sum())
    observed = 2.0 * float(s_x.sum()) - total
    partitions = math.comb(n, size)
    if partitions <= _EXACT_LIMIT:
        hits = 0
        for subset in itertools.combinations(range(n), size):
            stat = 2.0 * float(pooled[list(subset)].sum()) - total
            hits += stat >= observed - 1e-12
        return hits / partitions, partitions, True
    rng = np.random.default_rng(derive_seed(seed, 'seat-permutation'))
    hits = 0
    for _ in range(samples):
        subset = rng.permutation(n)[:size]
        stat = 2.0 * float(pooled[subset].sum()) - total
        hits += stat >= observed - 1e-12
    return (hits + 1) / (samples + 1), samples, False


def seat_effect_size(model: LanguageModel, spec: SeatSpec) -> float:
    return effect_size_from_vectors(
        _encode_all(model, spec.targets_x),
        _encode_all(model, spec.targets_y),
        _encode_all(model, spec.attributes_a),
        _encode_all(model, spec.attributes_b),
    )


def run_seat(
    model: LanguageModel,
    spec: SeatSpec,
    *,
    permutations: int | None = 10_000,
    seed: int = 0,
) -> SeatResult:
    x = _encode_all(model, spec.targets_x)
    y = _encode_all(model, spec.targets_y)
    a = _encode_all(model, spec.attributes_a)
    b = _encode_all(model, spec.attributes_b)
    d = effect_size_from_vectors(x, y, a, b)
    if not permutations:
        return SeatResult(name=spec.name, effect_size=d, p_value=None, permutations=0, exact=False)
    p, count, exact = permutation_p_value(
        associations(x, a, b), associations(y, a, b), samples=permutations, seed=seed
    )
    return SeatResult(name=spec.name, effect_size=d, p_value=p, permutations=count, exact=exact)
