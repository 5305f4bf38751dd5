from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from src.core.errors import InvalidInputError
from src.core.types import FloatArray
from src.domain.model_api import LanguageModel, Vocabulary
from src.infrastructure.models import patch_bytes, read_patch

from .entities import DebiasResult


@dataclass(frozen=True)
class EmbeddingPatch:
    """Replacement rows keyed by token id; everything else stays as stored."""

    rows: Mapping[int, FloatArray]

    @property
    def token_ids(self) -> list[int]:
        return sorted(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def matrix(self, d: int) -> FloatArray:
        if not self.rows:
            return np.zeros((0, d), dtype=np.float64)
        return np.stack([np.asarray(self.rows[t], dtype=np.float64) for t in self.token_ids])

    def apply_to(self, model: LanguageModel) -> LanguageModel:
        for token_id in self.token_ids:
            model.set_embedding(token_id, self.rows[token_id])
        return model

    def rounded_to_float32(self) -> EmbeddingPatch:
        return EmbeddingPatch(
            {t: np.asarray(r, dtype=np.float32).astype(np.float64) for t, r in self.rows.items()}
        )

    def to_bytes(self, d: int) -> bytes:
        return patch_bytes(self.token_ids, self.matrix(d))

    @classmethod
    def from_bytes(cls, data: bytes) -> EmbeddingPatch:
        token_ids, rows = read_patch(data)
        return cls({t: rows[i] for i, t in enumerate(token_ids)})


def merge_shared_tokens(results: Sequence[DebiasResult], vocabulary: Vocabulary) -> EmbeddingPatch:
    """One row per touched token: the arithmetic mean over the words that share it."""
    seen: set[str] = set()
    contributions: dict[int, list[FloatArray]] = {}
    width: int | None = None
    for result in results:
        if result.occupation in seen:
            raise InvalidInputError(f"Duplicate result for '{result.occupation}'.")
        seen.add(result.occupation)
        vocabulary.check_ids(result.token_ids)
        final = np.asarray(result.final_rows, dtype=np.float64)
        if final.ndim != 2 or final.shape[0] != len(result.token_ids):
            raise InvalidInputError(f"Rows for '{result.occupation}' do not match its tokens.")
        if width is None:
            width = final.shape[1]
        elif final.shape[1] != width:
            raise InvalidInputError(
                f"Rows for '{result.occupation}' have dimension {final.shape[1]}, expected {width}."
            )
        for i, token_id in enumerate(result.token_ids):
            contributions.setdefault(int(token_id), []).append(final[i])

    merged: dict[int, FloatArray] = {}
    for token_id in sorted(contributions):
        rows = contributions[token_id]
        if len(rows) == 1:
            merged[token_id] = rows[0].copy()
        else:
            merged[token_id] = np.sum(np.stack(rows), axis=0) / len(rows)
    return EmbeddingPatch(merged)
