from __future__ import annotations

from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict


@dataclass(frozen=True)
class GenderPrediction:
    """Renormalized two-point distribution over {he, she} after one template."""

    p_male: float
    p_female: float
    template_ref: str | None = None


@dataclass(frozen=True)
class TdeEstimate:
    occupation: str
    per_template: tuple[float, ...]
    mean: float
    mean_signed_bias: float

    @property
    def template_count(self) -> int:
        return len(self.per_template)


@dataclass(frozen=True)
class EffectDecomposition:
    """te = tde + nie, all signed, in units of p_male."""

    occupation: str
    te: float
    tde: float
    nie: float
    biased_model_id: str
    reference_model_id: str
    intervened_embedding_id: str


class EffectReport(BaseModel):
    """One occupation's row in the effect report.

    te/tde/nie are null when no reference model exists (adapter backend).
    """

    model_config = ConfigDict(frozen=True)

    occupation: str
    n_templates: int
    mean_tde_before: float
    mean_tde_after: float
    mean_signed_bias_before: float
    mean_signed_bias_after: float
    te: float | None = None
    tde: float | None = None
    nie: float | None = None
    biased_model_id: str
    reference_model_id: str | None = None
    reference_label: str | None = None
    seeds: dict[str, int]
