"""Adapter that puts a pre-trained causal LM from `transformers` behind `LanguageModel`.

`transformers` is an optional dependency (`pip install damp-debias[adapter]`)
and is imported lazily.

GPT-2 ties its output head to the input embedding. The adapter clones the
head into its own parameter on load, so the head belongs to K and writes to
embedding rows never leak into the output projection.
"""

from __future__ import annotations

import copy
from collections.abc import Sequence
from typing import Any

import numpy as np
import torch
from torch import nn

from src.core.errors import ConfigError, InvalidInputError
from src.core.types import FloatArray, TokenIds
from src.domain.model_api import LanguageModel, RowOverrides, Vocabulary


class HuggingFaceCausalLM(LanguageModel):
    backend_name = 'adapter'

    def __init__(self, model: Any, tokenizer: Any, *, model_name: str) -> None:
        self._model = model
        self._tokenizer = tokenizer
        self._model_name = model_name
        self._embedding = model.get_input_embeddings().weight
        self._embedding_name = next(
            name for name, p in model.named_parameters() if p is self._embedding
        )
        ids = range(len(tokenizer))
        pieces = tokenizer.convert_ids_to_tokens(list(ids))
        surfaces = [tokenizer.convert_tokens_to_string([p]) for p in pieces]
        self._vocabulary = Vocabulary(
            pieces,
            he_token=pieces[tokenizer.encode(' he')[0]],
            she_token=pieces[tokenizer.encode(' she')[0]],
            bos_token=tokenizer.bos_token,
            pad_token=None,
            surfaces=surfaces,
        )

    @classmethod
    def from_pretrained(cls, model_name: str) -> HuggingFaceCausalLM:
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ConfigError(
                "The adapter backend needs the 'adapter' extra (transformers)."
            ) from exc
        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModelForCausalLM.from_pretrained(model_name)
        head = model.get_output_embeddings()
        if head is not None and head.weight is model.get_input_embeddings().weight:
            head.weight = nn.Parameter(head.weight.detach().clone())
        model = model.double().eval()
        for param in model.parameters():
            param.requires_grad_(False)
        return cls(model, tokenizer, model_name=model_name)

    # ---------------------------------
    # structure
    # ---------------------------------

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    @property
    def embedding_dim(self) -> int:
        return int(self._embedding.shape[1])

    @property
    def context_length(self) -> int:
        return int(getattr(self._model.config, 'n_positions', 1024))

    @property
    def metadata(self) -> dict[str, Any]:
        return {**super().metadata, 'model_name': self._model_name, 'output_head': 'untied'}

    def embedding_parameter_names(self) -> tuple[str, ...]:
        return (self._embedding_name,)

    def trainable_parameter_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self._model.named_parameters())

    def knowledge_parameters(self) -> list[tuple[str, FloatArray]]:
        return [
            (name, p.detach().cpu().numpy().copy())
            for name, p in self._model.named_parameters()
            if name != self._embedding_name
        ]

    def copy(self) -> HuggingFaceCausalLM:
        return HuggingFaceCausalLM(
            copy.deepcopy(self._model), self._tokenizer, model_name=self._model_name
        )

    # ---------------------------------
    # tokens
    # ---------------------------------

    def tokenize(self, text: str) -> list[int]:
        return list(self._tokenizer.encode(text))

    def decode(self, token_ids: TokenIds) -> str:
        return str(self._tokenizer.decode(list(token_ids)))

    def constituent_tokens(self, word: str) -> list[int]:
        # Mid-sentence spelling: BPE pieces carry the leading-space marker.
        return super().constituent_tokens(' ' + word.strip())

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
        rows = [self._with_bos(c) for c in contexts]
        width = max(len(r) for r in rows)
        pad = self._vocabulary.pad_id
        ids = torch.tensor([r + [pad] * (width - len(r)) for r in rows], dtype=torch.long)
        mask = torch.tensor([[1] * len(r) + [0] * (width - len(r)) for r in rows])
        lengths = torch.tensor([len(r) for r in rows], dtype=torch.long)

        table = self._embedding
        if overrides:
            index = torch.tensor(sorted(overrides), dtype=torch.long)
            stacked = torch.stack(
                [torch.as_tensor(overrides[int(t)], dtype=torch.float64) for t in index]
            )
            table = table.detach().index_put((index,), stacked)
        with torch.set_grad_enabled(table.requires_grad):
            out = self._model(inputs_embeds=table[ids], attention_mask=mask)
            last = out.logits[torch.arange(len(rows)), lengths - 1]
            return torch.log_softmax(last.to(torch.float64), dim=-1)

    def token_log_likelihoods(self, token_ids: TokenIds) -> FloatArray:
        if len(token_ids) == 0:
            return np.zeros(0, dtype=np.float64)
        self._vocabulary.check_ids(token_ids)
        sequence = self._with_bos(token_ids)
        with torch.no_grad():
            logits = self._model(torch.tensor([sequence])).logits[0]
            log_probs = torch.log_softmax(logits.to(torch.float64), dim=-1)
        targets = torch.tensor(sequence[1:], dtype=torch.long)
        picked = log_probs[torch.arange(len(targets)), targets]
        return picked.numpy().astype(np.float64)

    def hidden_states(self, token_ids: TokenIds) -> FloatArray:
        self._check_context(token_ids)
        sequence = self._with_bos(token_ids)
        with torch.no_grad():
            out = self._model(torch.tensor([sequence]), output_hidden_states=True)
        return out.hidden_states[-1][0, 1:].numpy().astype(np.float64)

    def _with_bos(self, token_ids: TokenIds) -> list[int]:
        """BOS plus the tokens; a sequence past the context window is an error, not a truncation."""
        sequence = [self._vocabulary.bos_id, *(int(t) for t in token_ids)]
        if len(sequence) > self.context_length:
            raise InvalidInputError(
                f'{len(token_ids)} tokens plus BOS exceed the context window '
                f'of {self.context_length}.'
            )
        return sequence

    # ---------------------------------
    # embedding rows
    # ---------------------------------

    def embedding_matrix(self) -> FloatArray:
        return self._embedding.detach().cpu().numpy().copy()

    def _read_row(self, token_id: int) -> FloatArray:
        return self._embedding[token_id].detach().cpu().numpy()

    def _write_row(self, token_id: int, vector: FloatArray) -> None:
        with torch.no_grad():
            self._embedding[token_id] = torch.from_numpy(vector)
