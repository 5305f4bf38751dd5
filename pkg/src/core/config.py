from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level defaults; pipeline TOML and CLI flags override them."""

    model_config = SettingsConfigDict(env_file='.env', env_prefix='DAMP_', extra='ignore')

    log_level: str = 'INFO'
    out_dir: str = 'runs/desk'
    jobs: int = 1
    backend: Literal['toy', 'adapter'] = 'toy'
    adapter_model_name: str = 'gpt2'


def get_settings() -> Settings:
    return Settings()
