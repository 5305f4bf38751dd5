from __future__ import annotations

import json
from pathlib import Path

import pytest

from src.core.config import Settings
from src.core.errors import ConfigError, InvalidInputError, MissingUpstreamError
from src.runtime import (
    DEFAULT_CONFIG,
    STAGE_ORDER,
    ArtifactStore,
    PipelineOrchestrator,
    canonical_json,
    file_digest,
    load_pipeline_config,
)

from tests.fixtures.pipeline_configs import tiny_config

PROFILE = '[profile.occupations]\ndoctor = 0.9\nnurse = 0.1\n'


def _write_config(tmp_path: Path, body: str) -> Path:
    path = tmp_path / 'run.toml'
    path.write_text(body, encoding='utf-8')
    return path


# ---------------------------------
# configuration
# ---------------------------------


def test_bundled_config_loads() -> None:
    config = load_pipeline_config(DEFAULT_CONFIG, settings=Settings())
    assert config.seed == 0
    assert config.backend == 'toy'
    assert config.occupation_words() == [
        'doctor', 'engineer', 'pilot', 'mechanic', 'nurse', 'housekeeper'
    ]
    assert config.paths.occupations.is_file()


def test_precedence_settings_then_toml_then_overrides() -> None:
    settings = Settings(jobs=3, backend='toy')
    assert load_pipeline_config(DEFAULT_CONFIG, settings=settings).jobs == 3
    config = load_pipeline_config(DEFAULT_CONFIG, {'seed': 5, 'jobs': 2}, settings=settings)
    assert config.seed == 5 and config.jobs == 2
    assert load_pipeline_config(DEFAULT_CONFIG, {'seed': None}, settings=settings).seed == 0


def test_deterministic_forces_one_job() -> None:
    config = load_pipeline_config(
        DEFAULT_CONFIG, {'deterministic': True, 'jobs': 4}, settings=Settings()
    )
    assert config.jobs == 1


def test_relative_input_paths_resolve_against_the_config_file(tmp_path) -> None:
    (tmp_path / 'words.txt').write_text('nurse\n', encoding='utf-8')
    path = _write_config(tmp_path, f'seed = 1\n[paths]\noccupations = "words.txt"\n{PROFILE}')
    config = load_pipeline_config(path, settings=Settings())
    assert config.paths.occupations == (tmp_path / 'words.txt').resolve()
    assert config.occupation_words() == ['nurse']


def test_missing_seed_is_drawn_unless_deterministic(tmp_path) -> None:
    config = load_pipeline_config(
        _write_config(tmp_path, PROFILE), {'occupations': ['doctor']}, settings=Settings()
    )
    assert isinstance(config.seed, int)
    with pytest.raises(ConfigError):
        load_pipeline_config(
            _write_config(tmp_path, f'deterministic = true\n{PROFILE}'),
            {'occupations': ['doctor']},
            settings=Settings(),
        )


@pytest.mark.parametrize(
    'body',
    [
        'seed = [',
        f'seed = 1\nunknown_key = 3\n{PROFILE}',
        f'seed = 1\noccupations = ["pilot"]\n{PROFILE}',
        'seed = 1\noccupations = []\n',
        f'seed = 1\n[paths]\nseat_specs = ["missing.json"]\n{PROFILE}',
        f'seed = 1\n[debias]\nlr = -1.0\n{PROFILE}',
    ],
)
def test_invalid_configs_raise_config_error(tmp_path, body: str) -> None:
    with pytest.raises(ConfigError):
        load_pipeline_config(_write_config(tmp_path, body), settings=Settings())


def test_unreadable_config_is_a_config_error(tmp_path) -> None:
    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / 'nope.toml', settings=Settings())


def test_config_hash_ignores_output_location_and_jobs(tmp_path) -> None:
    a = tiny_config(tmp_path / 'a')
    b = tiny_config(tmp_path / 'b', deterministic=False, jobs=3)
    c = tiny_config(tmp_path / 'c', deterministic=False, jobs=1)
    assert b.config_hash() == c.config_hash()
    assert a.config_hash() != b.config_hash()
    assert tiny_config(tmp_path / 'd', seed=8).config_hash() != a.config_hash()


def test_stage_seeds_derive_from_the_global_seed(tmp_path) -> None:
    config = tiny_config(tmp_path)
    seeds = config.stage_seeds()
    assert len(set(seeds.values())) == len(seeds)
    assert config.template_config().seed == seeds['templates']
    assert config.template_config().n == config.debias.n
    assert config.debias_config().seed == seeds['debias']
    assert config.train_config().init_seed == seeds['init']
    assert tiny_config(tmp_path, seed=8).stage_seeds() != seeds


# ---------------------------------
# artifact store
# ---------------------------------


def test_store_writes_atomically_and_leaves_no_temp_files(tmp_path) -> None:
    store = ArtifactStore(tmp_path)
    path = store.write_json('synth', 'table.json', {'b': 1, 'a': [1.5]})
    assert path == tmp_path / 'synth' / 'table.json'
    assert path.read_text(encoding='utf-8') == canonical_json({'a': [1.5], 'b': 1})
    store.write_text('synth', 'table.json', 'replaced\n')
    assert [p.name for p in (tmp_path / 'synth').iterdir()] == ['table.json']


def test_canonical_json_is_sorted_and_rejects_nan() -> None:
    text = canonical_json({'b': 1, 'a': 2})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith('\n')
    with pytest.raises(ValueError):
        canonical_json({'x': float('nan')})


def test_missing_upstream_artifact(tmp_path) -> None:
    store = ArtifactStore(tmp_path)
    with pytest.raises(MissingUpstreamError) as info:
        store.require('train', 'synth', 'vocab.txt')
    assert info.value.upstream == 'synth'
    assert info.value.missing == 'synth/vocab.txt'
    assert store.read_manifest('synth') is None


def test_manifest_records_relative_labels_and_digests(tmp_path) -> None:
    store = ArtifactStore(tmp_path / 'run')
    output = store.write_text('synth', 'vocab.txt', 'he\nshe\n')
    outside = tmp_path / 'input.txt'
    outside.write_text('doctor\n', encoding='utf-8')
    store.write_manifest(
        'synth', config_hash='abc', seeds={'corpus': 3}, inputs=[outside], outputs=[output]
    )
    manifest = store.read_manifest('synth')
    assert manifest['outputs'] == {'synth/vocab.txt': file_digest(output)}
    assert manifest['inputs'] == {str(outside): file_digest(outside)}
    assert manifest['seeds'] == {'corpus': 3}
    assert 'time' not in json.dumps(manifest)


# ---------------------------------
# orchestrator
# ---------------------------------


@pytest.mark.asyncio
async def test_full_pipeline_is_reproducible(tmp_path) -> None:
    first = PipelineOrchestrator(config=tiny_config(tmp_path / 'first'))
    summary = await first.full_pipeline()

    headline = summary['headline']
    assert headline['fingerprint_equal'] is True
    assert headline['debiased_words'] + len(headline['failed_words']) == 2
    assert set(headline['seat_d']) == {'gender-career', 'gender-occupation'}
    assert summary['config_hash'] == tiny_config(tmp_path / 'x').config_hash()
    assert set(summary['stages']) == set(STAGE_ORDER) - {'report'}
    for stage in STAGE_ORDER:
        assert first.store.read_manifest(stage) is not None
    assert (tmp_path / 'first' / 'debias' / 'patch.bin').is_file()
    assert (tmp_path / 'first' / 'geometry' / 'projection_plane.svg').is_file()

    second = PipelineOrchestrator(config=tiny_config(tmp_path / 'second'))
    await second.full_pipeline()
    name = Path('report') / 'summary.json'
    assert (tmp_path / 'first' / name).read_bytes() == (tmp_path / 'second' / name).read_bytes()


@pytest.mark.asyncio
async def test_stage_without_upstream_fails(tmp_path) -> None:
    orchestrator = PipelineOrchestrator(config=tiny_config(tmp_path))
    with pytest.raises(MissingUpstreamError) as info:
        await orchestrator.run_stage('debias')
    assert info.value.upstream == 'templates'
    assert not (tmp_path / 'debias' / 'manifest.json').exists()


@pytest.mark.asyncio
async def test_single_stage_returns_its_manifest(tmp_path) -> None:
    orchestrator = PipelineOrchestrator(config=tiny_config(tmp_path))
    manifest = await orchestrator.run_stage('synth')
    assert manifest['stage'] == 'synth'
    assert 'synth/vocab.txt' in manifest['outputs']
    assert manifest['seeds']
    with pytest.raises(InvalidInputError):
        await orchestrator.run_stage('publish')
