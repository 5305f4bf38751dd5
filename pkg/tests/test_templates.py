from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.core.errors import GenerationFailureError, InvalidInputError
from src.domain.templates import (
    GenderedWordList,
    Template,
    TemplateGenConfig,
    generate_template,
    generate_template_set,
    generate_template_sets,
    held_out_config,
    is_intermediary,
    is_neutral,
    load_gendered_words,
    parse_templates_jsonl,
    read_word_list,
    revalidate,
    template_prefix,
    templates_jsonl,
    token_id_set,
    top_k_sample,
)

from tests.fixtures.static_model import StaticLanguageModel, static_vocabulary
from tests.fixtures.toy_models import desk_biased_model, untrained_model

GENDERED = GenderedWordList(['he', 'she', 'his', 'her', 'man', 'woman'])
DATA = Path(__file__).resolve().parents[1] / 'src' / 'data'
GENDERED_TOY = load_gendered_words(DATA / 'gendered_words.txt')


def _chain_model() -> StaticLanguageModel:
    """the doctor -> said -> that, where "that" is the first intermediary context."""
    return StaticLanguageModel.with_rows(
        static_vocabulary(),
        {
            'doctor': {'said': 0.9, 'he': 0.01, 'she': 0.01},
            'said': {'that': 0.9, 'he': 0.01, 'she': 0.01},
            'that': {'he': 0.3, 'she': 0.3},
            'nurse': {'he': 0.6, 'she': 0.01},
        },
    )


def test_top_k_sample_only_returns_top_candidates() -> None:
    probs = np.array([0.1, 0.5, 0.05, 0.35])
    rng = np.random.default_rng(0)
    draws = {top_k_sample(probs, 2, rng) for _ in range(200)}
    assert draws == {1, 3}
    assert top_k_sample(probs, 1, rng) == 1


def test_generate_template_follows_the_chain_until_intermediary() -> None:
    model = _chain_model()
    config = TemplateGenConfig(top_k=1, n=1)
    template = generate_template(model, 'doctor', config, np.random.default_rng(0), GENDERED)
    assert template.text == 'the doctor said that'
    assert template.p_he == pytest.approx(0.3)
    assert template.p_she == pytest.approx(0.3)
    assert is_intermediary(model, template.token_ids, config.s)


def test_gendered_samples_are_skipped_and_exhaust_the_restart_budget() -> None:
    model = _chain_model()
    config = TemplateGenConfig(top_k=1, max_len=4, max_restarts=3)
    with pytest.raises(GenerationFailureError) as info:
        generate_template(model, 'nurse', config, np.random.default_rng(0), GENDERED)
    assert info.value.occupation == 'nurse'
    assert info.value.restarts == 3


def test_gendered_occupation_is_rejected() -> None:
    with pytest.raises(InvalidInputError):
        template_prefix(_chain_model(), 'man', GENDERED)


def test_template_set_is_seeded_per_word() -> None:
    model = StaticLanguageModel.with_rows(
        static_vocabulary(),
        {
            'doctor': {'said': 0.3, 'was': 0.3, 'tired': 0.3},
            'said': {'he': 0.2, 'she': 0.2},
            'was': {'he': 0.2, 'she': 0.2},
            'tired': {'he': 0.2, 'she': 0.2},
        },
    )
    config = TemplateGenConfig(top_k=3, n=8, seed=4)
    first = generate_template_set(model, 'doctor', config, GENDERED)
    again = generate_template_set(model, 'doctor', config, GENDERED)
    assert [t.token_ids for t in first] == [t.token_ids for t in again]
    assert len(first) == 8
    assert all(len(t.token_ids) == 3 for t in first)


def test_held_out_config_changes_only_the_seed() -> None:
    config = TemplateGenConfig(seed=1, n=7)
    held = held_out_config(config)
    assert held.seed != config.seed
    assert held.model_copy(update={'seed': config.seed}) == config


def test_batch_generation_records_failures_and_continues() -> None:
    model = _chain_model()
    config = TemplateGenConfig(top_k=1, n=2, max_len=3, max_restarts=2)
    batch = generate_template_sets(model, ['doctor', 'nurse'], config, GENDERED, jobs=2)
    assert list(batch.sets) == ['doctor']
    assert 'nurse' in batch.failures


def test_revalidate_flags_templates_that_are_not_intermediary_or_not_neutral() -> None:
    model = _chain_model()
    vocab = model.vocabulary
    good = generate_template_set(model, 'doctor', TemplateGenConfig(top_k=1, n=2), GENDERED)
    assert revalidate(model, good, GENDERED, 0.08) == []

    bad = Template('doctor', (vocab.id_of('the'), vocab.id_of('doctor')), ('the', 'doctor'), 0, 0)
    gendered = Template('doctor', (vocab.id_of('man'),), ('man',), 0, 0)
    failures = revalidate(model, [bad, gendered], GENDERED, 0.08)
    assert len(failures) == 2
    assert 'gendered' in failures[1]


def test_is_neutral_on_words_and_ids() -> None:
    vocab = static_vocabulary()
    assert is_neutral(['the', 'doctor'], GENDERED)
    assert not is_neutral(['the', 'Woman'], GENDERED)
    assert not is_neutral([vocab.id_of('his')], GENDERED, vocab)


def test_gendered_word_list_requires_both_pronouns() -> None:
    with pytest.raises(InvalidInputError):
        GenderedWordList(['he', 'man'])


def test_template_jsonl_roundtrip_and_word_list_comments(tmp_path) -> None:
    templates = generate_template_set(
        _chain_model(), 'doctor', TemplateGenConfig(top_k=1, n=2), GENDERED
    )
    assert parse_templates_jsonl(templates_jsonl(templates)) == templates
    with pytest.raises(InvalidInputError):
        parse_templates_jsonl('{"occupation": "doctor"}\n')

    path = tmp_path / 'words.txt'
    path.write_text('# header\ndoctor\n\nnurse  # trailing\n', encoding='utf-8')
    assert read_word_list(path) == ['doctor', 'nurse']


def test_a_qualifying_prefix_still_gets_a_sampled_continuation() -> None:
    model = StaticLanguageModel.with_rows(
        static_vocabulary(),
        {
            'doctor': {'was': 0.5, 'he': 0.2, 'she': 0.2},
            'was': {'he': 0.2, 'she': 0.2},
        },
    )
    config = TemplateGenConfig(top_k=1, n=1)
    assert is_intermediary(model, model.tokenize('the doctor'), config.s)
    template = generate_template(model, 'doctor', config, np.random.default_rng(0), GENDERED)
    assert template.text == 'the doctor was'


def test_excluded_templates_cost_restarts() -> None:
    model = _chain_model()
    config = TemplateGenConfig(top_k=1, n=1, max_restarts=4)
    seen = generate_template_set(model, 'doctor', config, GENDERED)
    with pytest.raises(GenerationFailureError) as info:
        generate_template_set(model, 'doctor', config, GENDERED, exclude=token_id_set(seen))
    assert info.value.restarts == 4


def test_held_out_sets_never_repeat_optimization_templates() -> None:
    model = StaticLanguageModel.with_rows(
        static_vocabulary(),
        {
            'doctor': {'said': 0.3, 'was': 0.3, 'tired': 0.3},
            'said': {'he': 0.2, 'she': 0.2},
            'was': {'he': 0.2, 'she': 0.2},
            'tired': {'he': 0.2, 'she': 0.2},
        },
    )
    config = TemplateGenConfig(top_k=3, n=1, seed=2)
    optimization = generate_template_sets(model, ['doctor'], config, GENDERED)
    held_config = held_out_config(config).model_copy(update={'n': 4})
    held_out = generate_template_sets(
        model, ['doctor'], held_config, GENDERED, exclude=optimization.sets
    )
    used = token_id_set(optimization.sets['doctor'])
    assert len(held_out.sets['doctor']) == 4
    assert token_id_set(held_out.sets['doctor']).isdisjoint(used)


def test_untrained_model_cannot_reach_both_pronouns() -> None:
    config = TemplateGenConfig(n=2, max_restarts=3)
    with pytest.raises(GenerationFailureError):
        generate_template_set(untrained_model(), 'doctor', config, GENDERED_TOY)
    empty = config.model_copy(update={'n': 0})
    assert generate_template_set(untrained_model(), 'doctor', empty, GENDERED_TOY) == []


@pytest.mark.parametrize('word', ['doctor', 'nurse', 'teacher'])
def test_trained_model_yields_templates_that_revalidate(word: str) -> None:
    model = desk_biased_model()
    config = TemplateGenConfig(n=5, s=0.08, max_len=15, seed=3)
    templates = generate_template_set(model, word, config, GENDERED_TOY)
    assert len(templates) == 5
    assert revalidate(model, templates, GENDERED_TOY, config.s) == []
    assert all(len(t.token_ids) <= 2 + config.max_len for t in templates)


def test_trained_model_cannot_balance_a_strongly_biased_word_at_high_threshold() -> None:
    config = TemplateGenConfig(n=1, s=0.49, max_restarts=10)
    with pytest.raises(GenerationFailureError):
        generate_template_set(desk_biased_model(), 'mechanic', config, GENDERED_TOY)
