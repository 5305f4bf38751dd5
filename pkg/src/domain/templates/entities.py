from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import InvalidInputError


class GenderedWordList:
    """V_gender: lowercase words whose presence makes a context non-neutral."""

    def __init__(self, words: Iterable[str]) -> None:
        self.words = frozenset(w.strip().lower() for w in words if w.strip())
        missing = {'he', 'she'} - self.words
        if missing:
            raise InvalidInputError(f'Gendered word list must contain {sorted(missing)}.')

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and word.strip().lower() in self.words

    def __len__(self) -> int:
        return len(self.words)


class TemplateGenConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    s: float = Field(default=0.08, gt=0.0, lt=0.5)
    max_len: int = Field(default=15, ge=2)
    top_k: int = Field(default=40, ge=1)
    n: int = Field(default=50, ge=0)
    seed: int = 0
    max_restarts: int = Field(default=200, ge=1)


@dataclass(frozen=True)
class Template:
    occupation: str
    token_ids: tuple[int, ...]
    tokens: tuple[str, ...]
    p_he: float
    p_she: float

    @property
    def text(self) -> str:
        return ' '.join(self.tokens)


@dataclass
class TemplateBatch:
    """Per-occupation template sets plus the occupations that failed, with reasons."""

    sets: dict[str, list[Template]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
