"""Train toy models on synthetic corpora.

Next-token cross-entropy with AdamW. The token and position tables sit in
their own parameter group with a reduced learning rate and strong decoupled
weight decay. After training the residual stream is rescaled so the mean
token row has norm `embedding_norm`; the logits do not change, but the
absolute distances the debias penalty measures do. Parameters end on the
float32 grid.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import TrainingFailureError
from src.core.observability import Span, log_event, new_trace_id
from src.core.types import derive_seed
from src.infrastructure.models import (
    ToyArchConfig,
    ToyLanguageModel,
    init_toy_model,
    mean_token_row_norm,
    round_to_float32_grid,
    scale_residual_stream,
)

from .corpus import Corpus, generate_corpus
from .profile import BiasProfile

EMBEDDING_PARAMETERS = ('token_embedding.weight', 'position_embedding.weight')
_LOSS_PROBE_SENTENCES = 2048


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    epochs: int = Field(default=6, ge=0)
    batch_size: int = Field(default=64, ge=1)
    lr: float = Field(default=3e-3, gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    embedding_lr_scale: float = Field(default=0.1, gt=0)
    embedding_weight_decay: float = Field(default=10.0, ge=0)
    grad_clip: float | None = Field(default=1.0, gt=0)
    embedding_norm: float | None = Field(default=0.004, gt=0)
    init_seed: int = 0
    shuffle_seed: int = 0


@dataclass(frozen=True)
class TrainingRun:
    model: ToyLanguageModel
    initial_loss: float
    final_loss: float
    epoch_losses: tuple[float, ...]
    steps: int


def _encode(corpus: Corpus, context_length: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Inputs and targets; padded target positions carry -100."""
    bos, pad = corpus.vocabulary.bos_id, corpus.vocabulary.pad_id
    rows = [[bos, *ids][: context_length + 1] for ids in corpus.token_ids()]
    width = max(len(r) for r in rows)
    inputs = torch.full((len(rows), width - 1), pad, dtype=torch.long)
    targets = torch.full((len(rows), width - 1), -100, dtype=torch.long)
    for i, r in enumerate(rows):
        inputs[i, : len(r) - 1] = torch.tensor(r[:-1])
        targets[i, : len(r) - 1] = torch.tensor(r[1:])
    return inputs, targets


def _mean_loss(model: ToyLanguageModel, inputs: torch.Tensor, targets: torch.Tensor) -> float:
    with torch.no_grad():
        logits = model.module(inputs)
        loss = torch.nn.functional.cross_entropy(
            logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=-100
        )
    return float(loss)


def fit_toy_model(
    corpus: Corpus,
    arch: ToyArchConfig,
    train: TrainConfig,
    *,
    trace_id: str | None = None,
) -> TrainingRun:
    trace_id = trace_id or new_trace_id()
    span = Span(name='train.toy_model', trace_id=trace_id)
    model = init_toy_model(corpus.vocabulary, arch, train.init_seed)
    module = model.module
    inputs, targets = _encode(corpus, arch.context_length)
    probe = slice(0, min(len(inputs), _LOSS_PROBE_SENTENCES))
    initial_loss = _mean_loss(model, inputs[probe], targets[probe])

    for param in module.parameters():
        param.requires_grad_(True)
    module.train()
    named = dict(module.named_parameters())
    optimizer = torch.optim.AdamW(
        [
            {
                'params': [named[n] for n in EMBEDDING_PARAMETERS],
                'lr': train.lr * train.embedding_lr_scale,
                'weight_decay': train.embedding_weight_decay,
            },
            {
                'params': [p for n, p in named.items() if n not in EMBEDDING_PARAMETERS],
                'lr': train.lr,
                'weight_decay': train.weight_decay,
            },
        ]
    )

    epoch_losses: list[float] = []
    step = 0
    try:
        for epoch in range(train.epochs):
            order = np.random.default_rng(derive_seed(train.shuffle_seed, 'epoch', epoch))
            perm = torch.from_numpy(order.permutation(len(inputs)))
            total, batches = 0.0, 0
            for start in range(0, len(perm), train.batch_size):
                idx = perm[start : start + train.batch_size]
                logits = module(inputs[idx])
                loss = torch.nn.functional.cross_entropy(
                    logits.reshape(-1, logits.shape[-1]),
                    targets[idx].reshape(-1),
                    ignore_index=-100,
                )
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingFailureError('Training loss is not finite', iteration=step)
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                if train.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(module.parameters(), train.grad_clip)
                optimizer.step()
                total += value
                batches += 1
                step += 1
            epoch_losses.append(total / max(batches, 1))
            log_event(
                'train.epoch',
                trace_id=trace_id,
                level=logging.DEBUG,
                epoch=epoch,
                loss=epoch_losses[-1],
            )
    finally:
        model.freeze()
        span.end()

    scale = 1.0
    if train.embedding_norm is not None:
        scale = train.embedding_norm / mean_token_row_norm(module)
        scale_residual_stream(module, scale)
    round_to_float32_grid(module)

    final_loss = _mean_loss(model, inputs[probe], targets[probe])
    if not math.isfinite(final_loss):
        raise TrainingFailureError('Trained model produces a non-finite loss', iteration=step)
    log_event(
        'train.done',
        trace_id=trace_id,
        span=span,
        steps=step,
        initial_loss=initial_loss,
        final_loss=final_loss,
        residual_scale=scale,
    )
    return TrainingRun(
        model=model,
        initial_loss=initial_loss,
        final_loss=final_loss,
        epoch_losses=tuple(epoch_losses),
        steps=step,
    )


def train_toy_model(corpus: Corpus, arch: ToyArchConfig, train: TrainConfig) -> ToyLanguageModel:
    return fit_toy_model(corpus, arch, train).model


def train_reference_pair(
    profile: BiasProfile,
    size: int,
    seed: int,
    arch: ToyArchConfig,
    train: TrainConfig,
    *,
    jobs: int = 1,
) -> tuple[ToyLanguageModel, ToyLanguageModel]:
    """(biased, reference): same vocabulary and initialization, corpora differ only in rates."""
    biased_corpus = generate_corpus(profile, size, seed, jobs=jobs)
    reference_corpus = generate_corpus(
        profile.balanced(), size, seed, vocabulary=biased_corpus.vocabulary, jobs=jobs
    )
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            biased_f = pool.submit(train_toy_model, biased_corpus, arch, train)
            reference_f = pool.submit(train_toy_model, reference_corpus, arch, train)
            return biased_f.result(), reference_f.result()
    return (
        train_toy_model(biased_corpus, arch, train),
        train_toy_model(reference_corpus, arch, train),
    )
