"""Small pre-LayerNorm decoder-only transformer, float64 throughout.

Layout per block: x + attn(ln1(x)), then x + mlp(ln2(x)). Token and learned
position tables feed the residual stream; a final LayerNorm and an untied
output head (with bias) produce logits.
"""

from __future__ import annotations

import math

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator
from torch import nn

TOKEN_EMBEDDING = 'token_embedding.weight'


class ToyArchConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    d_model: int = Field(default=64, ge=2)
    n_heads: int = Field(default=2, ge=1)
    n_layers: int = Field(default=2, ge=1)
    context_length: int = Field(default=16, ge=2)
    d_ff: int = Field(default=256, ge=1)
    # Embedding rows are rescaled far below unit norm, so LayerNorm needs a tiny eps.
    ln_eps: float = Field(default=1e-12, gt=0)
    init_std: float = Field(default=0.02, gt=0)
    embedding_init_std: float = Field(default=0.003, gt=0)

    @model_validator(mode='after')
    def _heads_divide_width(self) -> ToyArchConfig:
        if self.d_model % self.n_heads:
            raise ValueError('d_model must be divisible by n_heads')
        return self


class CausalSelfAttention(nn.Module):
    def __init__(self, cfg: ToyArchConfig) -> None:
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.d_model // cfg.n_heads
        self.qkv = nn.Linear(cfg.d_model, 3 * cfg.d_model)
        self.proj = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, D = x.shape
        q, k, v = self.qkv(x).split(D, dim=-1)
        q = q.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(B, T, self.n_heads, self.head_dim).transpose(1, 2)

        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        causal = torch.ones(T, T, dtype=torch.bool, device=x.device).tril()
        scores = scores.masked_fill(~causal, float('-inf'))
        weights = torch.softmax(scores, dim=-1)

        y = (weights @ v).transpose(1, 2).reshape(B, T, D)
        return self.proj(y)


class MLP(nn.Module):
    def __init__(self, cfg: ToyArchConfig) -> None:
        super().__init__()
        self.fc = nn.Linear(cfg.d_model, cfg.d_ff)
        self.act = nn.GELU()  # exact erf form
        self.out = nn.Linear(cfg.d_ff, cfg.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.out(self.act(self.fc(x)))


class DecoderBlock(nn.Module):
    def __init__(self, cfg: ToyArchConfig) -> None:
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model, eps=cfg.ln_eps)
        self.attn = CausalSelfAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.d_model, eps=cfg.ln_eps)
        self.mlp = MLP(cfg)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        x = x + self.mlp(self.ln2(x))
        return x


class ToyTransformer(nn.Module):
    def __init__(self, cfg: ToyArchConfig, vocab_size: int) -> None:
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.token_embedding = nn.Embedding(vocab_size, cfg.d_model)
        self.position_embedding = nn.Embedding(cfg.context_length, cfg.d_model)
        self.blocks = nn.ModuleList([DecoderBlock(cfg) for _ in range(cfg.n_layers)])
        self.ln_f = nn.LayerNorm(cfg.d_model, eps=cfg.ln_eps)
        self.lm_head = nn.Linear(cfg.d_model, vocab_size, bias=True)
        self.double()

    def features(self, ids: torch.Tensor, token_table: torch.Tensor | None = None) -> torch.Tensor:
        """Final-LayerNorm hidden states, shape (B, T, d).

        `token_table` replaces the stored token embedding table for this call.
        """
        T = ids.shape[1]
        if T > self.cfg.context_length:
            raise ValueError(f'sequence length {T} exceeds context {self.cfg.context_length}')
        table = self.token_embedding.weight if token_table is None else token_table
        positions = torch.arange(T, device=ids.device)
        x = table[ids] + self.position_embedding(positions)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.ln_f(x)

    def forward(self, ids: torch.Tensor, token_table: torch.Tensor | None = None) -> torch.Tensor:
        return self.lm_head(self.features(ids, token_table))


def initialize_parameters(module: ToyTransformer, seed: int) -> None:
    """Seeded init on the float32 grid, so a float32 checkpoint is lossless."""
    cfg = module.cfg
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, param in module.named_parameters():
            if name in (TOKEN_EMBEDDING, 'position_embedding.weight'):
                values = torch.randn(param.shape, generator=gen, dtype=torch.float64)
                values = values * cfg.embedding_init_std
            elif name.endswith('.bias'):
                values = torch.zeros(param.shape, dtype=torch.float64)
            elif '.ln' in f'.{name}' and name.endswith('.weight'):
                values = torch.ones(param.shape, dtype=torch.float64)
            else:
                values = torch.randn(param.shape, generator=gen, dtype=torch.float64) * cfg.init_std
            param.copy_(values.to(torch.float32).to(torch.float64))


def round_to_float32_grid(module: nn.Module) -> None:
    with torch.no_grad():
        for param in module.parameters():
            param.copy_(param.to(torch.float32).to(torch.float64))


def mean_token_row_norm(module: ToyTransformer) -> float:
    return float(module.token_embedding.weight.detach().norm(dim=1).mean())


def scale_residual_stream(module: ToyTransformer, factor: float) -> None:
    """Multiply everything written into the residual stream by `factor`.

    Every reader of the stream is a LayerNorm, so the logits are unchanged up
    to ln_eps; only the absolute scale of the embedding rows moves.
    """
    if not factor > 0:
        raise ValueError(f'factor must be positive, got {factor}')
    with torch.no_grad():
        module.token_embedding.weight.mul_(factor)
        module.position_embedding.weight.mul_(factor)
        for block in module.blocks:
            for writer in (block.attn.proj, block.mlp.out):
                writer.weight.mul_(factor)
                writer.bias.mul_(factor)
