from __future__ import annotations

import math
from collections.abc import Sequence

from src.core.errors import InvalidInputError
from src.core.types import TokenIds
from src.domain.model_api import LanguageModel


def corpus_nll(model: LanguageModel, sentences: Sequence[TokenIds | str]) -> tuple[float, int]:
    """(summed natural-log NLL, number of predicted tokens), summed in sentence order."""
    total, count = 0.0, 0
    for sentence in sentences:
        ids = model.tokenize(sentence) if isinstance(sentence, str) else list(sentence)
        if not ids:
            continue
        log_likelihoods = model.token_log_likelihoods(ids)
        total -= float(log_likelihoods.sum())
        count += len(log_likelihoods)
    return total, count


def perplexity(model: LanguageModel, sentences: Sequence[TokenIds | str]) -> float:
    """exp of the mean next-token NLL over every token of every sentence."""
    total, count = corpus_nll(model, sentences)
    if count == 0:
        raise InvalidInputError('Perplexity needs at least one token.')
    return math.exp(total / count)
