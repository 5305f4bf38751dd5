"""Stage bodies of the debias pipeline.

Each stage reads its upstream artifacts through `StageRun.input` (which
raises MissingUpstreamError for anything absent) and writes its own through
`StageRun.write_*`; the orchestrator turns the recorded inputs and outputs
into the stage manifest.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from src.core.errors import ConfigError
from src.domain.causal import EffectReport, decompose, mean_tde
from src.domain.corpus_synth import (
    Corpus,
    TrainingRun,
    cooccurrence_counts,
    fit_toy_model,
    generate_corpus,
    read_corpus,
    read_sentences,
)
from src.domain.debias import DebiasReport, EmbeddingPatch, debias_vocabulary
from src.domain.evalsuite import (
    gender_subspace,
    load_seat_spec,
    load_stereo_fixture,
    perplexity,
    projection_neighbor_curve,
    projection_neighbor_svg,
    projection_plane_svg,
    run_seat,
    stereo_metrics,
    word_vector,
)
from src.domain.model_api import (
    LanguageModel,
    Vocabulary,
    fingerprint,
    read_vocabulary,
    vocabulary_text,
)
from src.domain.templates import (
    GenderedWordList,
    Template,
    generate_template_sets,
    held_out_config,
    load_gendered_words,
    read_templates,
    revalidate,
    templates_jsonl,
)
from src.infrastructure.models import HuggingFaceCausalLM, checkpoint_bytes, model_from_checkpoint

from .artifact_store import ArtifactStore, file_digest
from .pipeline_config import PipelineConfig

REFERENCE_LABEL = 'balanced-corpus twin'


@dataclass
class StageRun:
    """One execution of one stage: what it read, what it wrote, which seeds it used."""

    name: str
    config: PipelineConfig
    store: ArtifactStore
    trace_id: str
    cache: dict[tuple[str, str], Any]
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)
    seeds: dict[str, int] = field(default_factory=dict)

    def input(self, upstream: str, name: str) -> Path:
        path = self.store.require(self.name, upstream, name)
        if path not in self.inputs:
            self.inputs.append(path)
        return path

    def data_file(self, path: Path) -> Path:
        if path not in self.inputs:
            self.inputs.append(path)
        return path

    def write_bytes(self, name: str, data: bytes) -> Path:
        path = self.store.write_bytes(self.name, name, data)
        self.outputs.append(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.store.write_text(self.name, name, text)
        self.outputs.append(path)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.store.write_json(self.name, name, payload)
        self.outputs.append(path)
        return path

    def read_json(self, upstream: str, name: str) -> Any:
        self.input(upstream, name)
        return self.store.read_json(self.name, upstream, name)


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------
# model loading
# ---------------------------------


def _vocabulary(run: StageRun) -> Vocabulary:
    path = run.input('synth', 'vocab.txt')
    key = ('vocabulary', file_digest(path))
    if key not in run.cache:
        run.cache[key] = read_vocabulary(path)
    return run.cache[key]


def _checkpoint(run: StageRun, name: str) -> LanguageModel:
    vocabulary = _vocabulary(run)
    path = run.input('train', name)
    key = ('checkpoint', file_digest(path))
    if key not in run.cache:
        run.cache[key] = model_from_checkpoint(path.read_bytes(), vocabulary)
    return run.cache[key]


def biased_model(run: StageRun) -> LanguageModel:
    if run.config.backend == 'adapter':
        spec = run.read_json('train', 'model.json')
        key = ('adapter', spec['model_name'])
        if key not in run.cache:
            run.cache[key] = HuggingFaceCausalLM.from_pretrained(spec['model_name'])
        return run.cache[key]
    return _checkpoint(run, 'biased.ckpt')


def reference_model(run: StageRun) -> LanguageModel | None:
    if run.config.backend == 'adapter':
        return None
    return _checkpoint(run, 'reference.ckpt')


def load_patch(run: StageRun) -> EmbeddingPatch:
    return EmbeddingPatch.from_bytes(run.input('debias', 'patch.bin').read_bytes())


def debiased_model(run: StageRun) -> LanguageModel:
    """The biased model plus the embedding patch, on a private copy."""
    return load_patch(run).apply_to(biased_model(run).copy())


def _gendered(run: StageRun) -> GenderedWordList:
    return load_gendered_words(run.data_file(run.config.paths.gendered_words))


def _debias_report(run: StageRun) -> DebiasReport:
    raw = run.read_json('debias', 'debias_report.json')
    raw.pop('mean_tde_before', None)
    raw.pop('mean_tde_after', None)
    return DebiasReport.model_validate(raw)


def _template_sets(run: StageRun, kind: str, words: Sequence[str]) -> dict[str, list[Template]]:
    return {w: read_templates(run.input('templates', f'{kind}/{w}.jsonl')) for w in words}


# ---------------------------------
# stages
# ---------------------------------


def run_synth(run: StageRun) -> None:
    cfg = run.config
    seeds = cfg.stage_seeds()
    run.seeds = {'corpus': seeds['corpus'], 'heldout_corpus': seeds['heldout_corpus']}
    profile = cfg.profile
    biased = generate_corpus(profile, cfg.corpus.size, seeds['corpus'], jobs=cfg.jobs)
    balanced = generate_corpus(
        profile.balanced(),
        cfg.corpus.size,
        seeds['corpus'],
        vocabulary=biased.vocabulary,
        jobs=cfg.jobs,
    )
    heldout = generate_corpus(
        profile.balanced(),
        cfg.corpus.heldout_size,
        seeds['heldout_corpus'],
        vocabulary=biased.vocabulary,
        jobs=cfg.jobs,
    )
    run.write_text('vocab.txt', vocabulary_text(biased.vocabulary))
    run.write_text('corpus_biased.txt', biased.text())
    run.write_text('corpus_balanced.txt', balanced.text())
    run.write_text('corpus_heldout.txt', heldout.text())

    rows: list[list[Any]] = []
    table: dict[str, dict[str, Any]] = {}
    for label, corpus in (('biased', biased), ('balanced', balanced)):
        counts = cooccurrence_counts(corpus.sentences, corpus.profile.occupation_words)
        for word in corpus.profile.occupation_words:
            male, total = counts.get(word, (0, 0))
            rate = male / total if total else None
            target = corpus.profile.male_rate(word)
            rows.append([label, word, target, male, total, rate])
            table.setdefault(label, {})[word] = {
                'target_rate': target,
                'male': male,
                'total': total,
                'rate': rate,
            }
    run.write_text(
        'cooccurrence.csv',
        _csv(('corpus', 'occupation', 'target_rate', 'male', 'total', 'rate'), rows),
    )
    run.write_json('cooccurrence.json', table)


def _read_synth_corpus(run: StageRun, name: str, vocabulary: Vocabulary, seed: int) -> Corpus:
    return read_corpus(run.input('synth', name), run.config.profile, seed, vocabulary)


def run_train(run: StageRun) -> None:
    cfg = run.config
    if cfg.backend == 'adapter':
        run.write_json('model.json', {'backend': 'adapter', 'model_name': cfg.adapter.model_name})
        return

    train = cfg.train_config()
    run.seeds = {'init': train.init_seed, 'shuffle': train.shuffle_seed}
    vocabulary = _vocabulary(run)
    corpus_seed = cfg.stage_seeds()['corpus']
    biased_corpus = _read_synth_corpus(run, 'corpus_biased.txt', vocabulary, corpus_seed)
    reference_corpus = _read_synth_corpus(run, 'corpus_balanced.txt', vocabulary, corpus_seed)

    def fit(corpus: Corpus) -> TrainingRun:
        return fit_toy_model(corpus, cfg.model, train, trace_id=run.trace_id)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            biased, reference = pool.map(fit, (biased_corpus, reference_corpus))
    else:
        biased, reference = fit(biased_corpus), fit(reference_corpus)

    run.write_bytes('biased.ckpt', checkpoint_bytes(biased.model))
    run.write_bytes('reference.ckpt', checkpoint_bytes(reference.model))
    run.write_json(
        'training.json',
        {
            label: {
                'initial_loss': r.initial_loss,
                'final_loss': r.final_loss,
                'epoch_losses': list(r.epoch_losses),
                'steps': r.steps,
                'fingerprint': fingerprint(r.model).hex,
            }
            for label, r in (('biased', biased), ('reference', reference))
        },
    )


def run_templates(run: StageRun) -> None:
    cfg = run.config
    model = biased_model(run)
    gendered = _gendered(run)
    words = cfg.occupation_words()
    optimization = cfg.template_config()
    evaluation = held_out_config(optimization)
    run.seeds = {'optimization': optimization.seed, 'held_out': evaluation.seed}

    optimization_batch = generate_template_sets(
        model, words, optimization, gendered, jobs=cfg.jobs, trace_id=run.trace_id
    )
    held_out_batch = generate_template_sets(
        model,
        words,
        evaluation,
        gendered,
        exclude=optimization_batch.sets,
        jobs=cfg.jobs,
        trace_id=run.trace_id,
    )
    batches = {'optimization': optimization_batch, 'held_out': held_out_batch}
    failures: dict[str, str] = {}
    for kind, batch in batches.items():
        for word, error in batch.failures.items():
            failures.setdefault(word, f'{kind}: {error}')

    summary: dict[str, Any] = {}
    for word in words:
        if word in failures:
            continue
        entry: dict[str, Any] = {}
        for kind, batch in batches.items():
            templates = batch.sets[word]
            run.write_text(f'{kind}/{word}.jsonl', templates_jsonl(templates))
            rejected = revalidate(model, templates, gendered, optimization.s)
            entry[kind] = {'count': len(templates), 'revalidation_failures': len(rejected)}
        summary[word] = entry
    run.write_json('templates.json', {'words': summary, 'failures': failures})


def run_debias(run: StageRun) -> None:
    cfg = run.config
    model = biased_model(run)
    gendered = _gendered(run)
    generated = run.read_json('templates', 'templates.json')
    words = [w for w in cfg.occupation_words() if w in generated['words']]
    optimization_sets = _template_sets(run, 'optimization', words)
    held_out_sets = _template_sets(run, 'held_out', words)
    debias_config = cfg.debias_config()
    run.seeds = {'debias': debias_config.seed}

    outcome = debias_vocabulary(
        model,
        words,
        cfg.template_config(),
        debias_config,
        gendered,
        template_sets=optimization_sets,
        held_out_sets=held_out_sets,
        jobs=cfg.jobs,
        trace_id=run.trace_id,
    )
    report = outcome.report.model_copy(
        update={'failures': {**generated['failures'], **outcome.report.failures}}
    )
    run.write_bytes('patch.bin', outcome.patch.to_bytes(model.embedding_dim))
    run.write_json(
        'debias_report.json',
        {
            **report.model_dump(mode='json'),
            'mean_tde_before': report.mean_tde_before,
            'mean_tde_after': report.mean_tde_after,
        },
    )
    curves = [
        [word, i, loss]
        for word, result in outcome.results.items()
        for i, loss in enumerate(result.loss_curve)
    ]
    run.write_text('loss_curves.csv', _csv(('occupation', 'iteration', 'loss'), curves))


def run_tde(run: StageRun) -> None:
    biased = biased_model(run)
    reference = reference_model(run)
    debiased = debiased_model(run)
    patch = load_patch(run)
    report = _debias_report(run)
    held_out = _template_sets(run, 'held_out', list(report.words))
    biased_id = fingerprint(biased).hex[:16]

    effects: list[EffectReport] = []
    for word, word_report in report.words.items():
        templates = held_out[word]
        before = mean_tde(biased, templates, word)
        after = mean_tde(debiased, templates, word)
        te = tde = nie = None
        reference_id = None
        if reference is not None:
            rows = {t: patch.rows[t] for t in word_report.token_ids}
            split = decompose(biased, rows, reference, templates, word)
            te, tde, nie = split.te, split.tde, split.nie
            reference_id = split.reference_model_id
        effects.append(
            EffectReport(
                occupation=word,
                n_templates=len(templates),
                mean_tde_before=before.mean,
                mean_tde_after=after.mean,
                mean_signed_bias_before=before.mean_signed_bias,
                mean_signed_bias_after=after.mean_signed_bias,
                te=te,
                tde=tde,
                nie=nie,
                biased_model_id=biased_id,
                reference_model_id=reference_id,
                reference_label=REFERENCE_LABEL if reference is not None else None,
                seeds=word_report.template_seeds,
            )
        )

    run.write_json('effects.json', [e.model_dump(mode='json') for e in effects])
    run.write_text(
        'effects.csv',
        _csv(
            ('occupation', 'mean_tde_before', 'mean_tde_after', 'te', 'tde', 'nie'),
            [
                [e.occupation, e.mean_tde_before, e.mean_tde_after, e.te, e.tde, e.nie]
                for e in effects
            ],
        ),
    )


def run_eval_seat(run: StageRun) -> None:
    """One before/after SEAT result per bundled spec, keyed by spec name."""
    cfg = run.config
    specs = [load_seat_spec(run.data_file(path)) for path in cfg.paths.seat_specs]
    names = [spec.name for spec in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f'SEAT spec names must be distinct, got {names}.')
    seed = cfg.stage_seeds()['seat']
    run.seeds = {'seat': seed}
    models = (('before', biased_model(run)), ('after', debiased_model(run)))
    results = {
        spec.name: {
            label: dataclasses.asdict(
                run_seat(model, spec, permutations=cfg.eval.seat_permutations, seed=seed)
            )
            for label, model in models
        }
        for spec in specs
    }
    run.write_json('seat.json', results)


def run_eval_ppl(run: StageRun) -> None:
    sentences = [' '.join(s) for s in read_sentences(run.input('synth', 'corpus_heldout.txt'))]
    before = perplexity(biased_model(run), sentences)
    after = perplexity(debiased_model(run), sentences)
    run.write_json(
        'perplexity.json',
        {
            'before': before,
            'after': after,
            'relative_change': after / before - 1.0,
            'sentences': len(sentences),
        },
    )


def run_eval_stereo(run: StageRun) -> None:
    items = load_stereo_fixture(run.data_file(run.config.paths.stereo_fixture))
    run.write_json(
        'stereo.json',
        {
            label: stereo_metrics(model, items).model_dump(mode='json')
            for label, model in (('before', biased_model(run)), ('after', debiased_model(run)))
        },
    )


def run_geometry(run: StageRun) -> None:
    cfg = run.config
    biased = biased_model(run)
    debiased = debiased_model(run)
    words = list(_debias_report(run).words)
    k = min(cfg.eval.neighbor_k, len(biased.vocabulary) - 1)
    basis = gender_subspace(biased, cfg.eval.definitional_pairs, n_components=2)

    before = projection_neighbor_curve(biased, words, k, basis=basis)
    after = projection_neighbor_curve(debiased, words, k, basis=basis, reference=biased)
    run.write_text('geometry_before.csv', before.to_csv())
    run.write_text('geometry_after.csv', after.to_csv())
    run.write_json(
        'geometry.json',
        {'before': before.model_dump(mode='json'), 'after': after.model_dump(mode='json')},
    )

    def plane(model: LanguageModel) -> np.ndarray:
        if not words:
            return np.zeros((0, len(basis)))
        return np.stack([word_vector(model, w) for w in words]) @ basis.T

    run.write_bytes(
        'projection_plane.svg', projection_plane_svg(words, plane(biased), plane(debiased))
    )
    run.write_bytes('projection_neighbors.svg', projection_neighbor_svg(before, after))


def run_report(run: StageRun) -> None:
    cfg = run.config
    manifests = {
        stage: run.read_json(stage, 'manifest.json') for stage in STAGE_ORDER if stage != 'report'
    }
    debias = _debias_report(run)
    effects = run.read_json('tde', 'effects.json')
    ppl = run.read_json('eval-ppl', 'perplexity.json')
    seat = run.read_json('eval-seat', 'seat.json')
    stereo = run.read_json('eval-stereo', 'stereo.json')

    k_before = fingerprint(biased_model(run))
    k_after = fingerprint(debiased_model(run))

    def mean(values: list[float]) -> float | None:
        return float(np.mean(values)) if values else None

    run.write_json(
        'summary.json',
        {
            'config_hash': cfg.config_hash(),
            'seed': cfg.seed,
            'backend': cfg.backend,
            'stages': manifests,
            'headline': {
                'debiased_words': len(debias.words),
                'failed_words': sorted(debias.failures),
                'mean_tde_before': mean([e['mean_tde_before'] for e in effects]),
                'mean_tde_after': mean([e['mean_tde_after'] for e in effects]),
                'fingerprint_before': k_before.hex,
                'fingerprint_after': k_after.hex,
                'fingerprint_equal': k_before == k_after,
                'perplexity_before': ppl['before'],
                'perplexity_after': ppl['after'],
                'seat_d': {
                    name: {label: result[label]['effect_size'] for label in ('before', 'after')}
                    for name, result in seat.items()
                },
                'icat_before': stereo['before']['icat'],
                'icat_after': stereo['after']['icat'],
            },
        },
    )


@dataclass(frozen=True)
class StageSpec:
    name: str
    body: Callable[[StageRun], None]
    upstream: tuple[str, ...]


STAGES: dict[str, StageSpec] = {
    spec.name: spec
    for spec in (
        StageSpec('synth', run_synth, ()),
        StageSpec('train', run_train, ('synth',)),
        StageSpec('templates', run_templates, ('train',)),
        StageSpec('debias', run_debias, ('templates',)),
        StageSpec('tde', run_tde, ('debias',)),
        StageSpec('eval-seat', run_eval_seat, ('debias',)),
        StageSpec('eval-ppl', run_eval_ppl, ('debias',)),
        StageSpec('eval-stereo', run_eval_stereo, ('debias',)),
        StageSpec('geometry', run_geometry, ('debias',)),
        StageSpec(
            'report',
            run_report,
            ('tde', 'eval-seat', 'eval-ppl', 'eval-stereo', 'geometry'),
        ),
    )
}
STAGE_ORDER: tuple[str, ...] = tuple(STAGES)
