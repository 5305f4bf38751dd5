"""Pipeline runtime (config -> stages -> artifacts + manifests)."""
from .artifact_store import ArtifactStore, canonical_json, file_digest
from .orchestrator import PipelineOrchestrator, apply_determinism
from .pipeline_config import (
    DEFAULT_CONFIG,
    AdapterConfig,
    CorpusConfig,
    EvalConfig,
    PathsConfig,
    PipelineConfig,
    load_pipeline_config,
)
from .stages import STAGE_ORDER, STAGES, StageRun
