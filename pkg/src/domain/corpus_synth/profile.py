from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.core.errors import ConfigError

from .grammar import GrammarFamily

DEFAULT_GRAMMAR: dict[GrammarFamily, float] = {
    GrammarFamily.DIRECT: 0.35,
    GrammarFamily.HEARSAY: 0.3,
    GrammarFamily.NEUTRAL: 0.1,
    GrammarFamily.ATTRIBUTE: 0.1,
    GrammarFamily.GENDERED: 0.15,
}


class BiasProfile(BaseModel):
    """Per-occupation probability that a pronoun pairing is male, plus the sentence mix.

    `ambiguity` pulls hearsay pronouns toward 0.5: a hearsay sentence uses
    0.5 + (rate - 0.5) * (1 - ambiguity). `attribute_skew` is the probability
    that an attribute sentence pairs a male noun with a career word (and a
    female noun with a family word).
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    occupations: dict[str, float] = Field(default_factory=dict)
    grammar: dict[GrammarFamily, float] = Field(default_factory=lambda: dict(DEFAULT_GRAMMAR))
    ambiguity: float = Field(default=0.5, ge=0.0, le=1.0)
    attribute_skew: float = Field(default=0.8, ge=0.0, le=1.0)

    @field_validator('occupations')
    @classmethod
    def _rates_in_unit_interval(cls, value: dict[str, float]) -> dict[str, float]:
        out: dict[str, float] = {}
        for word, rate in value.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"male_rate for '{word}' must be in [0, 1], got {rate}")
            if not word or word != word.strip().lower() or ' ' in word:
                raise ValueError(f"occupation '{word}' must be one lowercase word")
            out[word] = float(rate)
        return out

    @field_validator('grammar')
    @classmethod
    def _weights_positive(cls, value: dict[GrammarFamily, float]) -> dict[GrammarFamily, float]:
        if not value or any(w < 0 for w in value.values()) or sum(value.values()) <= 0:
            raise ValueError('grammar needs at least one family with positive weight')
        return value

    @property
    def occupation_words(self) -> list[str]:
        return list(self.occupations)

    def male_rate(self, occupation: str) -> float:
        return self.occupations[occupation]

    def hearsay_rate(self, occupation: str) -> float:
        return 0.5 + (self.occupations[occupation] - 0.5) * (1.0 - self.ambiguity)

    @property
    def is_balanced(self) -> bool:
        return all(rate == 0.5 for rate in self.occupations.values())

    def balanced(self) -> BiasProfile:
        """Same occupations and grammar, every rate at 0.5."""
        return self.model_copy(
            update={
                'occupations': {word: 0.5 for word in self.occupations},
                'attribute_skew': 0.5,
            }
        )


def load_profile(path: Path) -> BiasProfile:
    """Read a profile from TOML: top-level scalars plus an `[occupations]` table."""
    try:
        data = tomllib.loads(path.read_text(encoding='utf-8'))
        return BiasProfile.model_validate(data)
    except (OSError, tomllib.TOMLDecodeError, ValidationError) as exc:
        raise ConfigError(f'Invalid bias profile {path}: {exc}') from exc
