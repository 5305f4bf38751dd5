from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.types import FloatArray


class DebiasConfig(BaseModel):
    """Optimizer settings for one occupation word.

    `lr` is the step size lambda. `alpha_rounds > 1` runs a geometric penalty
    schedule (alpha, alpha * growth, ...), each round a fresh minimization.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    n: int = Field(default=50, ge=1)
    m: int = Field(default=100, ge=1)
    alpha: float = Field(default=1000.0, ge=0.0)
    lr: float = Field(default=0.002, ge=0.0)
    optimizer: Literal['adam'] = 'adam'
    seed: int = 0
    log_base: float = Field(default=2.0, gt=1.0)
    alpha_rounds: int = Field(default=1, ge=1, le=3)
    alpha_growth: float = Field(default=10.0, ge=1.0)


@dataclass
class DebiasResult:
    occupation: str
    token_ids: tuple[int, ...]
    initial_rows: FloatArray
    final_rows: FloatArray
    loss_curve: tuple[float, ...]
    tde_before: float
    tde_after: float
    displacement: float
    template_seeds: dict[str, int] = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.loss_curve)

    def final_row(self, token_id: int) -> FloatArray:
        return np.asarray(self.final_rows[self.token_ids.index(token_id)])

    def report(self) -> dict[str, object]:
        return {
            'tde_before': self.tde_before,
            'tde_after': self.tde_after,
            'displacement': self.displacement,
            'loss_first': self.loss_curve[0] if self.loss_curve else None,
            'loss_last': self.loss_curve[-1] if self.loss_curve else None,
            'iterations': self.iterations,
            'template_seeds': dict(self.template_seeds),
        }


class WordReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    token_ids: list[int]
    tde_before: float
    tde_after: float
    tde_after_merged: float | None = None
    displacement: float
    loss_first: float | None
    loss_last: float | None
    iterations: int
    template_seeds: dict[str, int]


class DebiasReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    words: dict[str, WordReport] = Field(default_factory=dict)
    failures: dict[str, str] = Field(default_factory=dict)
    fingerprint_before: str
    fingerprint_after: str
    fingerprint_equal: bool
    patched_token_ids: list[int] = Field(default_factory=list)

    @property
    def mean_tde_before(self) -> float | None:
        values = [w.tde_before for w in self.words.values()]
        return float(np.mean(values)) if values else None

    @property
    def mean_tde_after(self) -> float | None:
        values = [
            w.tde_after_merged if w.tde_after_merged is not None else w.tde_after
            for w in self.words.values()
        ]
        return float(np.mean(values)) if values else None
