# ------------------------------------------------------------------------------
# Minimal stand-ins for a transformers causal LM and its tokenizer
# ------------------------------------------------------------------------------
"""Just enough of the `transformers` surface for HuggingFaceCausalLM.

The model mixes positions with a causal running sum, so every logit depends
on the whole prefix, BOS included.
"""

from __future__ import annotations

from types import SimpleNamespace

import torch
from torch import nn

BOS = '<|endoftext|>'
WORDS = (BOS, 'the', 'doctor', 'nurse', 'said', 'that', 'he', 'she', 'was', 'tired', '.')


class WordTokenizer:
    bos_token = BOS

    def __init__(self, words: tuple[str, ...] = WORDS) -> None:
        self._words = words
        self._ids = {w: i for i, w in enumerate(words)}

    def __len__(self) -> int:
        return len(self._words)

    def encode(self, text: str) -> list[int]:
        return [self._ids[w] for w in text.split()]

    def decode(self, ids: list[int]) -> str:
        return ' '.join(self._words[i] for i in ids)

    def convert_ids_to_tokens(self, ids: list[int]) -> list[str]:
        return [self._words[i] for i in ids]

    def convert_tokens_to_string(self, tokens: list[str]) -> str:
        return ' '.join(tokens)


class RunningSumLM(nn.Module):
    def __init__(self, vocab_size: int, d: int = 4, n_positions: int = 6, seed: int = 0) -> None:
        super().__init__()
        torch.manual_seed(seed)
        self.config = SimpleNamespace(n_positions=n_positions)
        self.wte = nn.Embedding(vocab_size, d)
        self.wpe = nn.Embedding(n_positions, d)
        self.head = nn.Linear(d, vocab_size)
        self.double()
        for param in self.parameters():
            param.requires_grad_(False)

    def get_input_embeddings(self) -> nn.Embedding:
        return self.wte

    def get_output_embeddings(self) -> nn.Linear:
        return self.head

    def forward(
        self,
        input_ids: torch.Tensor | None = None,
        *,
        inputs_embeds: torch.Tensor | None = None,
        attention_mask: torch.Tensor | None = None,
        output_hidden_states: bool = False,
    ) -> SimpleNamespace:
        x = self.wte(input_ids) if inputs_embeds is None else inputs_embeds
        T = x.shape[1]
        h = torch.tanh(x.cumsum(dim=1) + self.wpe(torch.arange(T))[None])
        return SimpleNamespace(logits=self.head(h), hidden_states=(x, h))
