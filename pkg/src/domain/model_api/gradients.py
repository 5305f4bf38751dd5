"""Scalar losses over embedding rows and their exact gradients.

A loss spec maps (model, row overrides) to a scalar tensor. The overrides
are the rows under optimization; everything else comes from the model as
stored. Autograd supplies the derivative, so the gradient is exact up to
float64 rounding.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping

import numpy as np
import torch

from src.core.errors import InvalidInputError, UnsupportedOperationError
from src.core.types import FloatArray

from .language_model import LanguageModel, RowOverrides


class ScalarLossSpec(ABC):
    differentiable: bool = True

    @abstractmethod
    def evaluate(self, model: LanguageModel, rows: RowOverrides) -> torch.Tensor:
        """Scalar float64 tensor for the model with `rows` installed."""


class ConstantLoss(ScalarLossSpec):
    def __init__(self, value: float = 0.0) -> None:
        self.value = float(value)

    def evaluate(self, model: LanguageModel, rows: RowOverrides) -> torch.Tensor:
        return torch.tensor(self.value, dtype=torch.float64)


class AnchorDistanceLoss(ScalarLossSpec):
    """weight * sum_t ||row_t - anchor_t||^2 over the anchored token ids."""

    def __init__(self, anchors: Mapping[int, FloatArray], weight: float = 1.0) -> None:
        self.anchors = {int(t): np.asarray(v, dtype=np.float64) for t, v in anchors.items()}
        self.weight = float(weight)

    def evaluate(self, model: LanguageModel, rows: RowOverrides) -> torch.Tensor:
        total = torch.zeros((), dtype=torch.float64)
        for token_id, anchor in self.anchors.items():
            if token_id in rows:
                row = rows[token_id]
            else:
                row = torch.as_tensor(model.get_embedding(token_id), dtype=torch.float64)
            diff = row - torch.as_tensor(anchor, dtype=torch.float64)
            total = total + (diff * diff).sum()
        return self.weight * total


class CallableLoss(ScalarLossSpec):
    """Wraps an ad-hoc scalar; declare `differentiable=True` only for torch-traceable callables."""

    def __init__(
        self,
        fn: Callable[[LanguageModel, RowOverrides], torch.Tensor | float],
        *,
        differentiable: bool = False,
    ) -> None:
        self._fn = fn
        self.differentiable = differentiable

    def evaluate(self, model: LanguageModel, rows: RowOverrides) -> torch.Tensor:
        value = self._fn(model, rows)
        if isinstance(value, torch.Tensor):
            return value
        return torch.tensor(float(value), dtype=torch.float64)


def embedding_gradient(
    model: LanguageModel,
    spec: ScalarLossSpec,
    token_id: int,
) -> FloatArray:
    """d spec / d row(token_id), evaluated at the model's current row."""
    if not spec.differentiable:
        raise UnsupportedOperationError(
            f'{type(spec).__name__} is not differentiable with respect to embedding rows.'
        )
    row = torch.tensor(model.get_embedding(token_id), dtype=torch.float64, requires_grad=True)
    value = spec.evaluate(model, {int(token_id): row})
    if value.ndim != 0:
        raise InvalidInputError('Loss specs must evaluate to a scalar.')
    if not value.requires_grad:
        return np.zeros(model.embedding_dim, dtype=np.float64)
    (grad,) = torch.autograd.grad(value, row, allow_unused=True)
    if grad is None:
        return np.zeros(model.embedding_dim, dtype=np.float64)
    return grad.detach().numpy().astype(np.float64)
