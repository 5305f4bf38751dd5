from __future__ import annotations

from collections.abc import Sequence

from src.core.types import TokenIds
from src.domain.model_api import LanguageModel, Vocabulary

from .entities import GenderedWordList


def is_neutral(
    tokens: Sequence[str] | TokenIds,
    gendered_words: GenderedWordList,
    vocabulary: Vocabulary | None = None,
) -> bool:
    """True iff no token is in V_gender. Token ids need the vocabulary to resolve surfaces."""
    if vocabulary is not None:
        surfaces = vocabulary.surfaces(int(t) for t in tokens)
    else:
        surfaces = [str(t) for t in tokens]
    return not any(s in gendered_words for s in surfaces)


def pronoun_probabilities(model: LanguageModel, token_ids: TokenIds) -> tuple[float, float]:
    """Raw (p_he, p_she) for the next token after `token_ids`."""
    probs = model.next_token_distribution(token_ids)
    vocab = model.vocabulary
    return float(probs[vocab.he_id]), float(probs[vocab.she_id])


def is_intermediary(model: LanguageModel, token_ids: TokenIds, s: float) -> bool:
    p_he, p_she = pronoun_probabilities(model, token_ids)
    return p_he > s and p_she > s
