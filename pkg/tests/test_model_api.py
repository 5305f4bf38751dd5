from __future__ import annotations

import numpy as np
import pytest
import torch
from scipy.special import erf

from src.core.errors import InvalidInputError, UnsupportedOperationError
from src.domain.model_api import (
    AnchorDistanceLoss,
    CallableLoss,
    ConstantLoss,
    Vocabulary,
    embedding_digest,
    embedding_gradient,
    fingerprint,
    get_embedding,
    next_token_distribution,
    read_vocabulary,
    set_embedding,
    vocabulary_text,
)
from src.infrastructure.models import HuggingFaceCausalLM, ToyLanguageModel

from tests.fixtures.causal_lm_stub import RunningSumLM, WordTokenizer
from tests.fixtures.toy_models import untrained_model


def _layer_norm(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * weight + bias


def _numpy_logits(model: ToyLanguageModel, ids: list[int]) -> np.ndarray:
    """Independent re-implementation of the decoder for one unpadded sequence."""
    p = {n: t.detach().numpy() for n, t in model.module.named_parameters()}
    cfg = model.arch
    seq = [model.vocabulary.bos_id, *ids]
    T, D, H = len(seq), cfg.d_model, cfg.n_heads
    x = p['token_embedding.weight'][seq] + p['position_embedding.weight'][:T]
    for layer in range(cfg.n_layers):
        pre = f'blocks.{layer}.'
        h = _layer_norm(x, p[pre + 'ln1.weight'], p[pre + 'ln1.bias'], cfg.ln_eps)
        qkv = h @ p[pre + 'attn.qkv.weight'].T + p[pre + 'attn.qkv.bias']
        q, k, v = np.split(qkv, 3, axis=-1)
        hd = D // H
        heads = []
        for i in range(H):
            sl = slice(i * hd, (i + 1) * hd)
            scores = q[:, sl] @ k[:, sl].T / np.sqrt(hd)
            scores[np.triu_indices(T, 1)] = -np.inf
            w = np.exp(scores - scores.max(axis=-1, keepdims=True))
            w /= w.sum(axis=-1, keepdims=True)
            heads.append(w @ v[:, sl])
        attn = np.concatenate(heads, axis=-1) @ p[pre + 'attn.proj.weight'].T
        x = x + attn + p[pre + 'attn.proj.bias']
        h = _layer_norm(x, p[pre + 'ln2.weight'], p[pre + 'ln2.bias'], cfg.ln_eps)
        f = h @ p[pre + 'mlp.fc.weight'].T + p[pre + 'mlp.fc.bias']
        f = 0.5 * f * (1.0 + erf(f / np.sqrt(2.0)))
        x = x + f @ p[pre + 'mlp.out.weight'].T + p[pre + 'mlp.out.bias']
    x = _layer_norm(x, p['ln_f.weight'], p['ln_f.bias'], cfg.ln_eps)
    return x @ p['lm_head.weight'].T + p['lm_head.bias']


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def test_vocabulary_roundtrips_through_text(tmp_path) -> None:
    vocab = Vocabulary(['<s>', '<pad>', 'the', 'he', 'she'])
    path = tmp_path / 'vocab.txt'
    path.write_text(vocabulary_text(vocab), encoding='utf-8')
    assert read_vocabulary(path) == vocab
    assert vocab.id_of('she') == 4
    assert vocab.special_ids == frozenset({0, 1})


def test_vocabulary_rejects_duplicates_and_missing_pronouns() -> None:
    with pytest.raises(InvalidInputError):
        Vocabulary(['<s>', '<pad>', 'he', 'he', 'she'])
    with pytest.raises(InvalidInputError):
        Vocabulary(['<s>', '<pad>', 'he'])


def test_next_token_distribution_sums_to_one_and_matches_numpy_oracle() -> None:
    model = untrained_model()
    ids = model.tokenize('the doctor said that')
    probs = next_token_distribution(model, ids)
    assert probs.shape == (len(model.vocabulary),)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    expected = np.exp(_log_softmax(_numpy_logits(model, ids))[-1])
    np.testing.assert_allclose(probs, expected, rtol=1e-9, atol=1e-15)


def test_token_log_likelihoods_match_numpy_oracle() -> None:
    model = untrained_model()
    ids = model.tokenize('the nurse said that she was tired .')
    oracle = _log_softmax(_numpy_logits(model, ids))
    expected = np.array([oracle[i, t] for i, t in enumerate(ids)])
    np.testing.assert_allclose(model.token_log_likelihoods(ids), expected, rtol=1e-9)


def test_batched_contexts_match_single_calls() -> None:
    model = untrained_model()
    contexts = [model.tokenize('the doctor'), model.tokenize('the nurse said that he was')]
    batched = model.last_token_log_probs(contexts)
    for i, c in enumerate(contexts):
        single = model.last_token_log_probs([c])[0]
        torch.testing.assert_close(batched[i], single, rtol=1e-12, atol=1e-12)


def test_long_context_keeps_most_recent_tokens() -> None:
    model = untrained_model()
    window = model.arch.context_length
    tail = model.tokenize('the doctor said that he was tired')
    long = model.tokenize('the') * (window + 4) + tail
    truncated = long[-window:]
    np.testing.assert_allclose(
        model.next_token_distribution(long), model.next_token_distribution(truncated)
    )


def test_empty_context_and_bad_ids_are_rejected() -> None:
    model = untrained_model()
    with pytest.raises(InvalidInputError):
        model.next_token_distribution([])
    with pytest.raises(InvalidInputError):
        model.next_token_distribution([len(model.vocabulary)])


def test_set_embedding_changes_only_that_row_and_not_k() -> None:
    model = untrained_model().copy()
    token = model.vocabulary.id_of('doctor')
    before_k = fingerprint(model)
    before_rest = embedding_digest(model, exclude=frozenset({token}))
    new_row = np.linspace(-0.01, 0.01, model.embedding_dim)
    assert set_embedding(model, token, new_row) is model
    np.testing.assert_array_equal(get_embedding(model, token), new_row)
    assert fingerprint(model) == before_k
    assert embedding_digest(model, exclude=frozenset({token})) == before_rest


def test_set_embedding_validates_shape_and_finiteness() -> None:
    model = untrained_model().copy()
    with pytest.raises(InvalidInputError):
        model.set_embedding(3, np.zeros(model.embedding_dim + 1))
    with pytest.raises(InvalidInputError):
        model.set_embedding(3, np.full(model.embedding_dim, np.nan))


def test_overrides_do_not_mutate_the_model() -> None:
    model = untrained_model()
    token = model.vocabulary.id_of('doctor')
    stored = model.get_embedding(token)
    context = model.tokenize('the doctor')
    plain = model.last_token_log_probs([context])
    row = torch.as_tensor(stored + 0.5)
    shifted = model.last_token_log_probs([context], {token: row})
    assert not torch.allclose(plain, shifted)
    np.testing.assert_array_equal(model.get_embedding(token), stored)


def test_fingerprint_ignores_embeddings_but_sees_knowledge_changes() -> None:
    model = untrained_model().copy()
    base = fingerprint(model)
    model.set_embedding(5, model.get_embedding(5) + 1.0)
    assert fingerprint(model) == base
    with torch.no_grad():
        model.module.lm_head.bias[0] += 1e-6
    assert fingerprint(model) != base
    assert len(base.hex) == 64


def test_knowledge_parameters_exclude_the_token_table() -> None:
    names = [n for n, _ in untrained_model().knowledge_parameters()]
    assert 'token_embedding.weight' not in names
    assert names[0] == 'position_embedding.weight'
    assert 'lm_head.weight' in names


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_embedding_gradient_matches_central_differences(seed: int) -> None:
    model = untrained_model()
    vocab = model.vocabulary
    token = vocab.id_of('doctor')
    contexts = [model.tokenize('the doctor'), model.tokenize('the doctor said that')]

    def log_odds(m, rows):
        log_probs = m.last_token_log_probs(contexts, rows)
        return (log_probs[:, vocab.he_id] - log_probs[:, vocab.she_id]).sum()

    spec = CallableLoss(log_odds, differentiable=True)
    grad = embedding_gradient(model, spec, token)
    rng = np.random.default_rng(seed)
    base = model.get_embedding(token)
    h = 1e-6
    for coord in rng.choice(model.embedding_dim, size=5, replace=False):
        step = np.zeros_like(base)
        step[coord] = h
        plus = float(log_odds(model, {token: torch.as_tensor(base + step)}))
        minus = float(log_odds(model, {token: torch.as_tensor(base - step)}))
        assert grad[coord] == pytest.approx((plus - minus) / (2 * h), rel=1e-4, abs=1e-8)


def test_constant_loss_has_zero_gradient() -> None:
    model = untrained_model()
    grad = embedding_gradient(model, ConstantLoss(3.0), 4)
    np.testing.assert_array_equal(grad, np.zeros(model.embedding_dim))


def test_anchor_distance_gradient_is_twice_the_offset() -> None:
    model = untrained_model()
    token = 4
    anchor = model.get_embedding(token) - 0.25
    grad = embedding_gradient(model, AnchorDistanceLoss({token: anchor}, weight=3.0), token)
    np.testing.assert_allclose(grad, np.full(model.embedding_dim, 2 * 3.0 * 0.25))


def test_non_differentiable_loss_is_unsupported() -> None:
    model = untrained_model()
    with pytest.raises(UnsupportedOperationError):
        embedding_gradient(model, CallableLoss(lambda m, rows: 1.0), 4)


# ---------------------------------
# transformers adapter
# ---------------------------------


def _adapter() -> HuggingFaceCausalLM:
    tokenizer = WordTokenizer()
    return HuggingFaceCausalLM(RunningSumLM(len(tokenizer)), tokenizer, model_name='stub')


def test_adapter_scores_next_tokens_and_sequences_on_the_same_bos_prefix() -> None:
    model = _adapter()
    ids = model.tokenize('the doctor said that he')
    log_likelihoods = model.token_log_likelihoods(ids)
    assert log_likelihoods.shape == (len(ids),)
    for i in range(1, len(ids)):
        last = model.last_token_log_probs([ids[:i]])[0]
        assert float(last[ids[i]]) == pytest.approx(log_likelihoods[i], abs=1e-12)
    assert model.hidden_states(ids).shape == (len(ids), model.embedding_dim)


def test_adapter_rejects_sequences_past_the_context_window() -> None:
    model = _adapter()
    ids = model.tokenize('the doctor said that he was tired')
    assert len(ids) + 1 > model.context_length
    with pytest.raises(InvalidInputError):
        model.token_log_likelihoods(ids)
    with pytest.raises(InvalidInputError):
        model.last_token_log_probs([ids])
    with pytest.raises(InvalidInputError):
        model.hidden_states(ids)
