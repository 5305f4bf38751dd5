"""Pipeline configuration: one TOML file with nested sections.

Precedence, lowest first: process settings (`DAMP_*` env), the TOML file,
command-line overrides. Relative input paths in `[paths]` resolve against
the directory holding the TOML file; `out_dir` resolves against the
working directory.
"""

from __future__ import annotations

import hashlib
import json
import secrets
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.config import Settings, get_settings
from src.core.errors import ConfigError
from src.core.types import derive_seed
from src.domain.corpus_synth import DEFINITIONAL_PAIRS, BiasProfile, TrainConfig
from src.domain.debias import DebiasConfig
from src.domain.templates import TemplateGenConfig, read_word_list
from src.infrastructure.models import ToyArchConfig

DATA_DIR = Path(__file__).resolve().parents[1] / 'data'
DEFAULT_CONFIG = DATA_DIR / 'desk.toml'

_INPUT_PATHS = ('occupations', 'gendered_words', 'stereo_fixture')


def _require_file(value: Path) -> Path:
    if not value.is_file():
        raise ValueError(f'input file {value} does not exist')
    return value


class PathsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    out_dir: Path = Path('runs/desk')
    occupations: Path = DATA_DIR / 'occupations.txt'
    gendered_words: Path = DATA_DIR / 'gendered_words.txt'
    seat_specs: list[Path] = Field(
        default_factory=lambda: [
            DATA_DIR / 'seat_gender_career.json',
            DATA_DIR / 'seat_gender_occupation.json',
        ],
        min_length=1,
    )
    stereo_fixture: Path = DATA_DIR / 'stereo_gender_occupation.jsonl'

    @field_validator(*_INPUT_PATHS)
    @classmethod
    def _exists(cls, value: Path) -> Path:
        return _require_file(value)

    @field_validator('seat_specs')
    @classmethod
    def _specs_exist(cls, value: list[Path]) -> list[Path]:
        for path in value:
            _require_file(path)
        return value


class CorpusConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    size: int = Field(default=20_000, ge=1)
    heldout_size: int = Field(default=2_000, ge=1)


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    seat_permutations: int = Field(default=10_000, ge=0)
    neighbor_k: int = Field(default=20, ge=1)
    definitional_pairs: list[tuple[str, str]] = Field(
        default_factory=lambda: list(DEFINITIONAL_PAIRS), min_length=1
    )


class AdapterConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    model_name: str = 'gpt2'


class PipelineConfig(BaseModel):
    """Everything a run needs; stage seeds are derived from `seed`."""

    model_config = ConfigDict(extra='forbid')

    seed: int
    deterministic: bool = False
    backend: Literal['toy', 'adapter'] = 'toy'
    jobs: int = Field(default=1, ge=1)
    occupations: list[str] | None = None
    paths: PathsConfig = Field(default_factory=PathsConfig)
    profile: BiasProfile = Field(default_factory=BiasProfile)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    model: ToyArchConfig = Field(default_factory=ToyArchConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    templates: TemplateGenConfig = Field(default_factory=TemplateGenConfig)
    debias: DebiasConfig = Field(default_factory=DebiasConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    adapter: AdapterConfig = Field(default_factory=AdapterConfig)

    @model_validator(mode='before')
    @classmethod
    def _seed_required_when_deterministic(cls, data: Any) -> Any:
        if not isinstance(data, dict) or data.get('seed') is not None:
            return data
        if data.get('deterministic'):
            raise ValueError('deterministic runs need an explicit seed')
        return {**data, 'seed': secrets.randbelow(2**31)}

    @model_validator(mode='after')
    def _check(self) -> PipelineConfig:
        if self.deterministic:
            self.jobs = 1
        if not self.profile.occupations:
            raise ValueError('[profile.occupations] must name at least one occupation')
        if self.backend == 'toy':
            unknown = [w for w in self.occupation_words() if w not in self.profile.occupations]
            if unknown:
                raise ValueError(f'occupations not in the bias profile: {unknown}')
        return self

    def occupation_words(self) -> list[str]:
        """Words to debias: the inline list when given, else the occupations file."""
        if self.occupations is not None:
            words = self.occupations
        else:
            words = read_word_list(self.paths.occupations)
        return [w.strip().lower() for w in words]

    def stage_seeds(self) -> dict[str, int]:
        return {
            'corpus': derive_seed(self.seed, 'corpus'),
            'heldout_corpus': derive_seed(self.seed, 'heldout-corpus'),
            'init': derive_seed(self.seed, 'init'),
            'shuffle': derive_seed(self.seed, 'shuffle'),
            'templates': derive_seed(self.seed, 'templates'),
            'debias': derive_seed(self.seed, 'debias'),
            'seat': derive_seed(self.seed, 'seat'),
        }

    def train_config(self) -> TrainConfig:
        seeds = self.stage_seeds()
        return self.train.model_copy(
            update={'init_seed': seeds['init'], 'shuffle_seed': seeds['shuffle']}
        )

    def template_config(self) -> TemplateGenConfig:
        """Generator settings for the optimization set; n follows the debias config."""
        return self.templates.model_copy(
            update={'seed': self.stage_seeds()['templates'], 'n': self.debias.n}
        )

    def debias_config(self) -> DebiasConfig:
        return self.debias.model_copy(update={'seed': self.stage_seeds()['debias']})

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON; output location and job count are not part of it."""
        payload = self.model_dump(mode='json', exclude={'jobs': True, 'paths': {'out_dir'}})
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _merge(base: Mapping[str, Any], top: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in top.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _settings_layer(settings: Settings) -> dict[str, Any]:
    return {
        'backend': settings.backend,
        'jobs': settings.jobs,
        'paths': {'out_dir': settings.out_dir},
        'adapter': {'model_name': settings.adapter_model_name},
    }


def _resolve(value: Any, base: Path) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p).resolve()


def _resolve_inputs(paths: Mapping[str, Any], base: Path) -> dict[str, Any]:
    out = dict(paths)
    for key in _INPUT_PATHS:
        if key in out:
            out[key] = _resolve(out[key], base)
    if isinstance(out.get('seat_specs'), list):
        out['seat_specs'] = [_resolve(p, base) for p in out['seat_specs']]
    return out


def load_pipeline_config(
    path: Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    *,
    settings: Settings | None = None,
) -> PipelineConfig:
    """Parse and validate; any failure surfaces as ConfigError before work starts."""
    data = _settings_layer(settings or get_settings())
    try:
        if path is not None:
            raw = tomllib.loads(path.read_text(encoding='utf-8'))
            if 'paths' in raw:
                raw['paths'] = _resolve_inputs(raw['paths'], path.resolve().parent)
            data = _merge(data, raw)
        data = _merge(data, {k: v for k, v in (overrides or {}).items() if v is not None})
        return PipelineConfig.model_validate(data)
    except OSError as exc:
        raise ConfigError(f'Cannot read config {path}: {exc}') from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f'Config {path} is not valid TOML: {exc}') from exc
    except ValidationError as exc:
        raise ConfigError(f'Invalid pipeline config: {exc}') from exc
