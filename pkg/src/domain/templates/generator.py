"""Template generation by constrained top-k continuation sampling.

Starting from "the <occupation>", sample continuations until both raw
pronoun probabilities exceed s. The check runs only after a sampled token
is appended, so the bare prefix is never a template. A sampled gendered
token is skipped but still spends one unit of the length budget; an
exhausted budget restarts from the prefix.
"""

from __future__ import annotations

import logging
from collections.abc import Collection, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from src.core.errors import DampError, GenerationFailureError, InvalidInputError
from src.core.observability import Span, log_event, new_trace_id
from src.core.types import FloatArray, derive_seed
from src.domain.model_api import LanguageModel

from .entities import GenderedWordList, Template, TemplateBatch, TemplateGenConfig
from .validators import is_neutral, pronoun_probabilities


def top_k_sample(probs: FloatArray, k: int, rng: np.random.Generator) -> int:
    order = np.argsort(-probs, kind='stable')[:k]
    weights = probs[order]
    total = weights.sum()
    if not total > 0:
        return int(order[0])
    return int(order[rng.choice(len(order), p=weights / total)])


def template_prefix(model: LanguageModel, occupation: str, gendered: GenderedWordList) -> list[int]:
    occupation = occupation.strip().lower()
    if occupation in gendered:
        raise InvalidInputError(f"'{occupation}' is itself a gendered word.")
    prefix = [*model.tokenize('the'), *model.constituent_tokens(occupation)]
    if not is_neutral(prefix, gendered, model.vocabulary):
        raise InvalidInputError(f"The prefix for '{occupation}' contains a gendered token.")
    return prefix


def generate_template(
    model: LanguageModel,
    occupation: str,
    config: TemplateGenConfig,
    rng: np.random.Generator,
    gendered: GenderedWordList,
    *,
    exclude: Collection[tuple[int, ...]] = frozenset(),
) -> Template:
    """Sample one template; a result whose token ids are in `exclude` costs a restart."""
    vocab = model.vocabulary
    prefix = template_prefix(model, occupation, gendered)
    blocked = np.array(sorted(vocab.special_ids), dtype=np.int64)

    for _ in range(config.max_restarts):
        ids = list(prefix)
        for _ in range(config.max_len):
            probs = model.next_token_distribution(ids)
            probs[blocked] = 0.0
            token = top_k_sample(probs, config.top_k, rng)
            if vocab.surface(token) in gendered:
                continue
            ids.append(token)
            p_he, p_she = pronoun_probabilities(model, ids)
            if p_he > config.s and p_she > config.s:
                break
        else:
            continue
        if tuple(ids) in exclude:
            continue
        return Template(
            occupation=occupation.strip().lower(),
            token_ids=tuple(ids),
            tokens=tuple(vocab.token(t) for t in ids),
            p_he=p_he,
            p_she=p_she,
        )
    raise GenerationFailureError(occupation, config.max_restarts)


def generate_template_set(
    model: LanguageModel,
    occupation: str,
    config: TemplateGenConfig,
    gendered: GenderedWordList,
    *,
    exclude: Collection[tuple[int, ...]] = frozenset(),
    trace_id: str | None = None,
) -> list[Template]:
    """n templates on the RNG stream derived from (seed, occupation), none of them in `exclude`."""
    span = Span(name='templates.generate', trace_id=trace_id or new_trace_id())
    rng = np.random.default_rng(derive_seed(config.seed, occupation.strip().lower()))
    excluded = frozenset(tuple(ids) for ids in exclude)
    try:
        return [
            generate_template(model, occupation, config, rng, gendered, exclude=excluded)
            for _ in range(config.n)
        ]
    finally:
        span.end()
        log_event(
            'templates.set',
            trace_id=span.trace_id,
            span=span,
            level=logging.DEBUG,
            occupation=occupation,
            n=config.n,
            excluded=len(excluded),
        )


def held_out_config(config: TemplateGenConfig) -> TemplateGenConfig:
    """Same generator on an independent seed."""
    return config.model_copy(update={'seed': derive_seed(config.seed, 'held-out')})


def token_id_set(templates: Iterable[Template]) -> frozenset[tuple[int, ...]]:
    return frozenset(t.token_ids for t in templates)


def generate_template_sets(
    model: LanguageModel,
    occupations: Sequence[str],
    config: TemplateGenConfig,
    gendered: GenderedWordList,
    *,
    exclude: Mapping[str, Iterable[Template]] | None = None,
    jobs: int = 1,
    trace_id: str | None = None,
) -> TemplateBatch:
    """Template sets for many words; a failing word is recorded and skipped.

    `exclude` maps a word to templates its new set must not repeat.
    """
    trace_id = trace_id or new_trace_id()
    exclude = exclude or {}

    def one(word: str) -> tuple[str, list[Template] | None, str | None]:
        try:
            templates = generate_template_set(
                model,
                word,
                config,
                gendered,
                exclude=token_id_set(exclude.get(word, ())),
                trace_id=trace_id,
            )
            return word, templates, None
        except DampError as exc:
            return word, None, str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, occupations))
    else:
        outcomes = [one(w) for w in occupations]

    batch = TemplateBatch()
    for word, templates, error in outcomes:
        if templates is not None:
            batch.sets[word] = templates
        else:
            batch.failures[word] = error or 'unknown error'
            log_event(
                'templates.failed',
                trace_id=trace_id,
                level=logging.WARNING,
                occupation=word,
                error=error,
            )
    return batch


def revalidate(
    model: LanguageModel,
    templates: Sequence[Template],
    gendered: GenderedWordList,
    s: float,
) -> list[str]:
    """Independent re-check; returns one message per failing template."""
    failures: list[str] = []
    for i, t in enumerate(templates):
        if not is_neutral(t.token_ids, gendered, model.vocabulary):
            failures.append(f'#{i} {t.text!r}: contains a gendered token')
            continue
        p_he, p_she = pronoun_probabilities(model, t.token_ids)
        if not (p_he > s and p_she > s):
            failures.append(f'#{i} {t.text!r}: p_he={p_he:.4f} p_she={p_she:.4f} not above {s}')
    return failures
