from __future__ import annotations

import copy
from collections.abc import Sequence
from typing import Any

import numpy as np
import torch

from src.core.errors import InvalidInputError
from src.core.types import FloatArray, TokenIds
from src.domain.model_api import LanguageModel, RowOverrides, Vocabulary

from .toy_transformer import TOKEN_EMBEDDING, ToyArchConfig, ToyTransformer, initialize_parameters


class ToyLanguageModel(LanguageModel):
    """LanguageModel over a word-level vocabulary and a `ToyTransformer`.

    Every sequence is scored after an implicit start token; sequences longer
    than the context window keep their most recent tokens.
    """

    backend_name = 'toy'

    def __init__(self, module: ToyTransformer, vocabulary: Vocabulary) -> None:
        if module.vocab_size != len(vocabulary):
            raise InvalidInputError(
                f'Module has {module.vocab_size} embedding rows but the vocabulary has '
                f'{len(vocabulary)} tokens.'
            )
        self._module = module
        self._vocabulary = vocabulary
        self.freeze()

    # ---------------------------------
    # structure
    # ---------------------------------

    @property
    def module(self) -> ToyTransformer:
        return self._module

    @property
    def arch(self) -> ToyArchConfig:
        return self._module.cfg

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    @property
    def embedding_dim(self) -> int:
        return self.arch.d_model

    @property
    def metadata(self) -> dict[str, Any]:
        return {**super().metadata, 'arch': self.arch.model_dump()}

    def embedding_parameter_names(self) -> tuple[str, ...]:
        return (TOKEN_EMBEDDING,)

    def trainable_parameter_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self._module.named_parameters())

    def knowledge_parameters(self) -> list[tuple[str, FloatArray]]:
        return [
            (name, param.detach().numpy().copy())
            for name, param in self._module.named_parameters()
            if name != TOKEN_EMBEDDING
        ]

    def copy(self) -> ToyLanguageModel:
        return ToyLanguageModel(copy.deepcopy(self._module), self._vocabulary)

    def freeze(self) -> None:
        self._module.eval()
        for param in self._module.parameters():
            param.requires_grad_(False)

    # ---------------------------------
    # tokens
    # ---------------------------------

    def tokenize(self, text: str) -> list[int]:
        return [self._vocabulary.id_of(word) for word in text.lower().split()]

    # ---------------------------------
    # prediction
    # ---------------------------------

    def last_token_log_probs(
        self,
        contexts: Sequence[TokenIds],
        overrides: RowOverrides | None = None,
    ) -> torch.Tensor:
        if not contexts:
            raise InvalidInputError('At least one context is required.')
        for context in contexts:
            self._check_context(context)
        ids, lengths = self._batch(contexts)
        table = self._table_with(overrides)
        with torch.set_grad_enabled(table.requires_grad):
            logits = self._module(ids, table)
            last = logits[torch.arange(len(contexts)), lengths - 1]
            return torch.log_softmax(last, dim=-1)

    def token_log_likelihoods(self, token_ids: TokenIds) -> FloatArray:
        if len(token_ids) == 0:
            return np.zeros(0, dtype=np.float64)
        self._vocabulary.check_ids(token_ids)
        window = self.arch.context_length
        sequence = [self._vocabulary.bos_id, *(int(t) for t in token_ids)]
        with torch.no_grad():
            if len(sequence) <= window:
                ids = torch.tensor([sequence], dtype=torch.long)
                log_probs = torch.log_softmax(self._module(ids), dim=-1)[0]
                targets = torch.tensor(sequence[1:], dtype=torch.long)
                picked = log_probs[torch.arange(len(targets)), targets]
                return picked.numpy().astype(np.float64)
            # Past the window every target is scored on its own truncated prefix.
            prefixes = [sequence[: i + 1][-window:] for i in range(len(token_ids))]
            log_probs = self._last_positions(prefixes)
            targets = torch.tensor(sequence[1:], dtype=torch.long)
            picked = log_probs[torch.arange(len(targets)), targets]
            return picked.numpy().astype(np.float64)

    def hidden_states(self, token_ids: TokenIds) -> FloatArray:
        self._check_context(token_ids)
        sequence = [self._vocabulary.bos_id, *(int(t) for t in token_ids)]
        sequence = sequence[-self.arch.context_length :]
        with torch.no_grad():
            states = self._module.features(torch.tensor([sequence], dtype=torch.long))[0]
        keep = min(len(token_ids), len(sequence))
        return states[-keep:].numpy().astype(np.float64)

    # ---------------------------------
    # embedding rows
    # ---------------------------------

    def embedding_matrix(self) -> FloatArray:
        return self._module.token_embedding.weight.detach().numpy().copy()

    def _read_row(self, token_id: int) -> FloatArray:
        return self._module.token_embedding.weight[token_id].detach().numpy()

    def _write_row(self, token_id: int, vector: FloatArray) -> None:
        with torch.no_grad():
            self._module.token_embedding.weight[token_id] = torch.from_numpy(vector)

    # ---------------------------------
    # helpers
    # ---------------------------------

    def _batch(self, contexts: Sequence[TokenIds]) -> tuple[torch.Tensor, torch.Tensor]:
        window = self.arch.context_length
        rows = [[self._vocabulary.bos_id, *(int(t) for t in c)][-window:] for c in contexts]
        width = max(len(r) for r in rows)
        pad = self._vocabulary.pad_id
        ids = torch.tensor([r + [pad] * (width - len(r)) for r in rows], dtype=torch.long)
        lengths = torch.tensor([len(r) for r in rows], dtype=torch.long)
        return ids, lengths

    def _last_positions(self, prefixes: list[list[int]]) -> torch.Tensor:
        width = max(len(p) for p in prefixes)
        pad = self._vocabulary.pad_id
        ids = torch.tensor([p + [pad] * (width - len(p)) for p in prefixes], dtype=torch.long)
        lengths = torch.tensor([len(p) for p in prefixes], dtype=torch.long)
        logits = self._module(ids)
        return torch.log_softmax(logits[torch.arange(len(prefixes)), lengths - 1], dim=-1)

    def _table_with(self, overrides: RowOverrides | None) -> torch.Tensor:
        table = self._module.token_embedding.weight
        if not overrides:
            return table
        token_ids = sorted(overrides)
        self._vocabulary.check_ids(token_ids)
        rows = []
        for t in token_ids:
            row = torch.as_tensor(overrides[t], dtype=torch.float64)
            if row.shape != (self.embedding_dim,):
                raise InvalidInputError(
                    f'Override for token {t} must have shape ({self.embedding_dim},).'
                )
            rows.append(row)
        index = torch.tensor(token_ids, dtype=torch.long)
        return table.detach().index_put((index,), torch.stack(rows))


def init_toy_model(vocabulary: Vocabulary, arch: ToyArchConfig, seed: int) -> ToyLanguageModel:
    module = ToyTransformer(arch, len(vocabulary))
    initialize_parameters(module, seed)
    return ToyLanguageModel(module, vocabulary)
