from __future__ import annotations

import math

import numpy as np
import pytest

from src.core.errors import ConfigError, InvalidInputError
from src.domain.corpus_synth import (
    BiasProfile,
    GrammarFamily,
    build_vocabulary,
    cooccurrence_counts,
    cooccurrence_rates,
    fit_toy_model,
    generate_corpus,
    load_profile,
    read_corpus,
    train_toy_model,
)
from src.domain.corpus_synth.grammar import FEMALE_NOUNS, MALE_NOUNS
from src.domain.model_api import fingerprint
from src.infrastructure.models import (
    checkpoint_bytes,
    mean_token_row_norm,
    model_from_checkpoint,
    scale_residual_stream,
)

from tests.fixtures.toy_models import SMALL_ARCH, SMALL_PROFILE, SMALL_TRAIN, trained_pair


def test_cooccurrence_rates_track_the_profile() -> None:
    corpus = generate_corpus(SMALL_PROFILE, 5000, seed=1)
    counts = cooccurrence_counts(corpus.sentences, SMALL_PROFILE.occupation_words)
    blocks = math.ceil(5000 / 1000)
    for word, (male, total) in counts.items():
        assert abs(male / total - SMALL_PROFILE.male_rate(word)) <= 0.5 * blocks / total + 1e-12


def test_balanced_twin_is_balanced() -> None:
    balanced = SMALL_PROFILE.balanced()
    assert balanced.is_balanced
    assert not SMALL_PROFILE.is_balanced
    rates = cooccurrence_rates(generate_corpus(balanced, 4000, seed=2))
    assert all(abs(r - 0.5) < 0.05 for r in rates.values())


def test_generation_is_seeded_and_independent_of_jobs() -> None:
    a = generate_corpus(SMALL_PROFILE, 2500, seed=5)
    b = generate_corpus(SMALL_PROFILE, 2500, seed=5, jobs=3)
    c = generate_corpus(SMALL_PROFILE, 2500, seed=6)
    assert a.sentences == b.sentences
    assert a.sentences != c.sentences
    assert len(a) == 2500


def test_every_family_appears_and_sentences_end_with_a_period() -> None:
    corpus = generate_corpus(SMALL_PROFILE, 1000, seed=0)
    assert all(s[-1] == '.' for s in corpus.sentences)
    assert any(s[2:4] == ('talked', 'about') for s in corpus.sentences)
    assert any(s[1] == 'doctor' and s[3] == 'that' for s in corpus.sentences)


def test_hearsay_rate_is_pulled_toward_half() -> None:
    profile = SMALL_PROFILE.model_copy(update={'ambiguity': 0.5})
    assert profile.hearsay_rate('doctor') == pytest.approx(0.725)
    assert profile.model_copy(update={'ambiguity': 1.0}).hearsay_rate('doctor') == 0.5


def test_profile_validation() -> None:
    with pytest.raises(ValueError):
        BiasProfile(occupations={'doctor': 1.5})
    with pytest.raises(ValueError):
        BiasProfile(occupations={'Doctor': 0.5})
    with pytest.raises(ValueError):
        BiasProfile(occupations={'doctor': 0.5}, grammar={GrammarFamily.DIRECT: 0.0})


def test_load_profile_reads_toml(tmp_path) -> None:
    path = tmp_path / 'profile.toml'
    path.write_text('ambiguity = 0.25\n[occupations]\nnurse = 0.1\n', encoding='utf-8')
    profile = load_profile(path)
    assert profile.occupations == {'nurse': 0.1}
    assert profile.ambiguity == 0.25

    path.write_text('[occupations]\nnurse = 2.0\n', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_profile(path)


def test_generate_corpus_rejects_bad_input() -> None:
    with pytest.raises(InvalidInputError):
        generate_corpus(SMALL_PROFILE, 0, seed=0)
    with pytest.raises(InvalidInputError):
        generate_corpus(BiasProfile(), 10, seed=0)


def test_corpus_file_roundtrip(tmp_path) -> None:
    corpus = generate_corpus(SMALL_PROFILE, 300, seed=9)
    path = tmp_path / 'corpus.txt'
    path.write_text(corpus.text(), encoding='utf-8')
    again = read_corpus(path, SMALL_PROFILE, 9, corpus.vocabulary)
    assert again.sentences == corpus.sentences


def test_vocabulary_puts_specials_first() -> None:
    vocab = build_vocabulary(['pilot'])
    assert vocab.tokens[:2] == ('<s>', '<pad>')
    assert 'pilot' in vocab and 'he' in vocab and 'household' in vocab


def test_training_lowers_the_loss_and_ends_on_the_float32_grid() -> None:
    corpus = generate_corpus(SMALL_PROFILE, 1000, seed=3)
    run = fit_toy_model(corpus, SMALL_ARCH, SMALL_TRAIN)
    assert run.final_loss < run.initial_loss
    assert len(run.epoch_losses) == SMALL_TRAIN.epochs
    for param in run.model.module.parameters():
        values = param.detach().numpy()
        np.testing.assert_array_equal(values, values.astype(np.float32).astype(np.float64))
        assert not param.requires_grad


def test_reference_pair_shares_vocabulary_but_not_weights() -> None:
    biased, reference = trained_pair()
    assert biased.vocabulary == reference.vocabulary
    assert fingerprint(biased) != fingerprint(reference)


def test_checkpoint_roundtrip_is_lossless() -> None:
    biased, _ = trained_pair()
    restored = model_from_checkpoint(checkpoint_bytes(biased), biased.vocabulary)
    assert fingerprint(restored) == fingerprint(biased)
    np.testing.assert_array_equal(restored.embedding_matrix(), biased.embedding_matrix())


def test_checkpoint_rejects_a_foreign_vocabulary() -> None:
    biased, _ = trained_pair()
    with pytest.raises(InvalidInputError):
        model_from_checkpoint(checkpoint_bytes(biased), build_vocabulary(['pilot']))


def test_training_is_reproducible_for_fixed_seeds() -> None:
    corpus = generate_corpus(SMALL_PROFILE, 500, seed=8)
    first = train_toy_model(corpus, SMALL_ARCH, SMALL_TRAIN)
    again = train_toy_model(corpus, SMALL_ARCH, SMALL_TRAIN)
    assert fingerprint(first) == fingerprint(again)
    np.testing.assert_array_equal(first.embedding_matrix(), again.embedding_matrix())


def test_training_rescales_embedding_rows_to_the_target_norm() -> None:
    corpus = generate_corpus(SMALL_PROFILE, 500, seed=5)
    run = fit_toy_model(corpus, SMALL_ARCH, SMALL_TRAIN)
    assert SMALL_TRAIN.embedding_norm is not None
    norm = mean_token_row_norm(run.model.module)
    assert norm == pytest.approx(SMALL_TRAIN.embedding_norm, rel=1e-5)


def test_residual_rescale_leaves_predictions_unchanged() -> None:
    model = trained_pair()[0].copy()
    contexts = [model.tokenize(t) for t in ('the doctor said that', 'the nurse told the child')]
    before = model.last_token_log_probs(contexts).detach().numpy()
    norm = mean_token_row_norm(model.module)

    scale_residual_stream(model.module, 4.0)

    assert mean_token_row_norm(model.module) == pytest.approx(4.0 * norm)
    after = model.last_token_log_probs(contexts).detach().numpy()
    np.testing.assert_allclose(after, before, atol=1e-5)
    with pytest.raises(ValueError):
        scale_residual_stream(model.module, 0.0)


def test_gendered_family_pairs_nouns_with_agreeing_pronouns() -> None:
    profile = BiasProfile(occupations=SMALL_PROFILE.occupations, grammar={'gendered': 1.0})
    corpus = generate_corpus(profile, 200, seed=6)
    for sentence in corpus.sentences:
        noun, pronoun = sentence[1], sentence[4]
        assert pronoun == ('he' if noun in MALE_NOUNS else 'she')
        assert noun in MALE_NOUNS or noun in FEMALE_NOUNS
