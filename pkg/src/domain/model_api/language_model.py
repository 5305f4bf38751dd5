"""Language-model contract.

Every analysis in this package goes through this narrow interface, so the
built-in toy transformer and the adapter around a pre-trained model are
interchangeable. Parameters split into two disjoint sets:

- X: the token-embedding rows (readable and writable row by row)
- K: everything else ("knowledge" parameters), exposed read-only for
  fingerprinting

Read operations are safe to call concurrently on one handle;
`set_embedding` needs exclusive access.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from typing import Any

import numpy as np
import torch

from src.core.errors import InvalidInputError
from src.core.types import FloatArray, TokenIds

from .vocabulary import Vocabulary

RowOverrides = Mapping[int, torch.Tensor]


class LanguageModel(ABC):
    """Next-token predictor with a mutable embedding table."""

    backend_name: str = 'abstract'

    # ---------------------------------
    # structure
    # ---------------------------------

    @property
    @abstractmethod
    def vocabulary(self) -> Vocabulary: ...

    @property
    @abstractmethod
    def embedding_dim(self) -> int: ...

    @property
    def metadata(self) -> dict[str, Any]:
        return {
            'backend': self.backend_name,
            'd': self.embedding_dim,
            'vocab_size': len(self.vocabulary),
        }

    @abstractmethod
    def embedding_parameter_names(self) -> tuple[str, ...]:
        """Names of the parameters that make up X."""

    @abstractmethod
    def trainable_parameter_names(self) -> tuple[str, ...]:
        """All trainable parameter names, in declaration order."""

    @abstractmethod
    def knowledge_parameters(self) -> list[tuple[str, FloatArray]]:
        """K: every non-embedding parameter as (name, array), in declaration order."""

    @abstractmethod
    def copy(self) -> LanguageModel:
        """Independent deep copy (private embedding table and parameters)."""

    # ---------------------------------
    # tokens
    # ---------------------------------

    @abstractmethod
    def tokenize(self, text: str) -> list[int]: ...

    def decode(self, token_ids: TokenIds) -> str:
        return ' '.join(self.vocabulary.surfaces(token_ids))

    def constituent_tokens(self, word: str) -> list[int]:
        """Token ids that spell `word` when it follows another word."""
        ids = self.tokenize(word)
        if not ids:
            raise InvalidInputError(f"'{word}' does not tokenize to anything.")
        return ids

    # ---------------------------------
    # prediction
    # ---------------------------------

    @abstractmethod
    def last_token_log_probs(
        self,
        contexts: Sequence[TokenIds],
        overrides: RowOverrides | None = None,
    ) -> torch.Tensor:
        """Batched next-token log-probabilities after each context, shape (B, |V|), float64.

        `overrides` replaces embedding rows for this call only. The result is
        differentiable with respect to any override tensor that requires grad;
        nothing else receives gradient.
        """

    @abstractmethod
    def token_log_likelihoods(self, token_ids: TokenIds) -> FloatArray:
        """log p(token_i | start, token_<i) for every token of the sequence."""

    @abstractmethod
    def hidden_states(self, token_ids: TokenIds) -> FloatArray:
        """Final-layer representations, shape (len(token_ids), d)."""

    def next_token_distribution(self, context: TokenIds) -> FloatArray:
        self._check_context(context)
        log_probs = self.last_token_log_probs([list(context)])[0]
        return log_probs.detach().exp().cpu().numpy().astype(np.float64)

    # ---------------------------------
    # embedding rows (X)
    # ---------------------------------

    @abstractmethod
    def embedding_matrix(self) -> FloatArray:
        """Copy of the full embedding table, shape (|V|, d)."""

    @abstractmethod
    def _read_row(self, token_id: int) -> FloatArray: ...

    @abstractmethod
    def _write_row(self, token_id: int, vector: FloatArray) -> None: ...

    def get_embedding(self, token_id: int) -> FloatArray:
        self.vocabulary.check_ids([token_id])
        return self._read_row(int(token_id)).copy()

    def set_embedding(self, token_id: int, vector: Any) -> LanguageModel:
        self.vocabulary.check_ids([token_id])
        row = np.asarray(vector, dtype=np.float64)
        if row.shape != (self.embedding_dim,):
            raise InvalidInputError(
                f'Embedding row must have shape ({self.embedding_dim},), got {row.shape}.'
            )
        if not np.all(np.isfinite(row)):
            raise InvalidInputError('Embedding rows must be finite.')
        self._write_row(int(token_id), row)
        return self

    # ---------------------------------
    # helpers
    # ---------------------------------

    def _check_context(self, context: TokenIds) -> None:
        if len(context) == 0:
            raise InvalidInputError('Context must contain at least one token.')
        self.vocabulary.check_ids(context)


def next_token_distribution(model: LanguageModel, context: TokenIds) -> FloatArray:
    return model.next_token_distribution(context)


def get_embedding(model: LanguageModel, token_id: int) -> FloatArray:
    return model.get_embedding(token_id)


def set_embedding(model: LanguageModel, token_id: int, vector: Any) -> LanguageModel:
    return model.set_embedding(token_id, vector)
