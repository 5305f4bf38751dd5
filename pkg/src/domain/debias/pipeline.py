"""Debias a whole occupation vocabulary.

Per word: templates (given or generated) -> damp_debias on a private copy of
the model. Then the per-word rows are merged, rounded to float32 and
installed into one copy of the input model. Word failures are collected and
reported; the run continues.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from src.core.errors import DampError, InvalidInputError, ParameterPartitionError
from src.core.observability import Span, log_event, new_trace_id
from src.core.types import derive_seed
from src.domain.causal import mean_tde
from src.domain.model_api import LanguageModel, embedding_digest, fingerprint
from src.domain.templates import (
    GenderedWordList,
    Template,
    TemplateGenConfig,
    generate_template_set,
    held_out_config,
    token_id_set,
)

from .damp import damp_debias
from .entities import DebiasConfig, DebiasReport, DebiasResult, WordReport
from .merge import EmbeddingPatch, merge_shared_tokens


@dataclass
class DebiasOutcome:
    model: LanguageModel
    patch: EmbeddingPatch
    report: DebiasReport
    results: dict[str, DebiasResult] = field(default_factory=dict)


def debias_vocabulary(
    model: LanguageModel,
    occupations: Sequence[str],
    gen_config: TemplateGenConfig,
    debias_config: DebiasConfig,
    gendered: GenderedWordList,
    *,
    template_sets: Mapping[str, Sequence[Template]] | None = None,
    held_out_sets: Mapping[str, Sequence[Template]] | None = None,
    jobs: int = 1,
    trace_id: str | None = None,
) -> DebiasOutcome:
    """Return a debiased copy of `model`; the input model is left untouched."""
    trace_id = trace_id or new_trace_id()
    span = Span(name='debias.vocabulary', trace_id=trace_id)
    k_before = fingerprint(model)
    optimization_config = gen_config.model_copy(update={'n': debias_config.n})
    evaluation_config = held_out_config(optimization_config)

    def one(word: str) -> tuple[str, DebiasResult | None, list[Template], str | None]:
        seeds = {
            'optimization': derive_seed(optimization_config.seed, word),
            'held_out': derive_seed(evaluation_config.seed, word),
        }
        held: list[Template] = []
        try:
            if template_sets is not None and word in template_sets:
                templates = list(template_sets[word])
            else:
                templates = generate_template_set(
                    model, word, optimization_config, gendered, trace_id=trace_id
                )
            if held_out_sets is not None and word in held_out_sets:
                held = list(held_out_sets[word])
                shared = token_id_set(held) & token_id_set(templates)
                if shared:
                    raise InvalidInputError(
                        f"{len(shared)} held-out template(s) for '{word}' "
                        'repeat optimization templates.'
                    )
            else:
                held = generate_template_set(
                    model,
                    word,
                    evaluation_config,
                    gendered,
                    exclude=token_id_set(templates),
                    trace_id=trace_id,
                )
            result = damp_debias(
                model.copy(),
                word,
                templates,
                debias_config,
                held_out=held,
                template_seeds=seeds,
                trace_id=trace_id,
            )
            return word, result, held, None
        except ParameterPartitionError:
            raise
        except DampError as exc:
            return word, None, held, str(exc)

    if jobs > 1 and len(occupations) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, occupations))
    else:
        outcomes = [one(word) for word in occupations]

    results: dict[str, DebiasResult] = {}
    held_by_word: dict[str, list[Template]] = {}
    failures: dict[str, str] = {}
    for word, result, held, error in outcomes:
        if result is None:
            failures[word] = error or 'unknown error'
            log_event(
                'debias.word_failed',
                trace_id=trace_id,
                level=logging.WARNING,
                occupation=word,
                error=error,
            )
            continue
        results[word] = result
        held_by_word[word] = held

    patch = merge_shared_tokens(list(results.values()), model.vocabulary).rounded_to_float32()
    debiased = patch.apply_to(model.copy())

    k_after = fingerprint(debiased)
    if k_after != k_before:
        raise ParameterPartitionError('Installing the merged patch changed knowledge parameters.')
    untouched = frozenset(patch.token_ids)
    if embedding_digest(debiased, exclude=untouched) != embedding_digest(model, exclude=untouched):
        raise ParameterPartitionError('Installing the merged patch changed unrelated rows.')

    words: dict[str, WordReport] = {}
    for word, result in results.items():
        merged_tde = mean_tde(debiased, held_by_word[word], word).mean
        words[word] = WordReport(
            token_ids=list(result.token_ids),
            tde_before=result.tde_before,
            tde_after=result.tde_after,
            tde_after_merged=merged_tde,
            displacement=result.displacement,
            loss_first=result.loss_curve[0],
            loss_last=result.loss_curve[-1],
            iterations=result.iterations,
            template_seeds=result.template_seeds,
        )

    report = DebiasReport(
        words=words,
        failures=failures,
        fingerprint_before=k_before.hex,
        fingerprint_after=k_after.hex,
        fingerprint_equal=k_after == k_before,
        patched_token_ids=patch.token_ids,
    )
    span.end()
    log_event(
        'debias.vocabulary',
        trace_id=trace_id,
        span=span,
        words=len(words),
        failures=len(failures),
        mean_tde_before=report.mean_tde_before,
        mean_tde_after=report.mean_tde_after,
    )
    return DebiasOutcome(model=debiased, patch=patch, results=results, report=report)
