"""Pipeline orchestration:
    synth -> train -> templates -> debias -> tde / eval-* / geometry -> report.

Stage bodies are synchronous numerical code; they run in a worker thread
so the event loop stays free for logging and cancellation. Every stage
gets a span, and its manifest is written only after the body succeeded.
A failing stage stops the pipeline; artifacts already written stay on
disk for inspection.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Any

import torch

from src.core.errors import InvalidInputError, MissingUpstreamError
from src.core.observability import Span, log_event, new_trace_id

from .artifact_store import MANIFEST, ArtifactStore
from .pipeline_config import PipelineConfig
from .stages import STAGE_ORDER, STAGES, StageRun


def apply_determinism(config: PipelineConfig) -> None:
    """Single thread, deterministic kernels; jobs is already forced to 1 by the config."""
    if config.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


class PipelineOrchestrator:
    """Runs named stages against one artifact directory."""

    def __init__(
        self,
        *,
        config: PipelineConfig,
        store: ArtifactStore | None = None,
        trace_id: str | None = None,
    ) -> None:
        self._config = config
        self._store = store or ArtifactStore(config.paths.out_dir)
        self._trace_id = trace_id or new_trace_id()
        self._cache: dict[tuple[str, str], Any] = {}
        apply_determinism(config)

    @property
    def store(self) -> ArtifactStore:
        return self._store

    @property
    def trace_id(self) -> str:
        return self._trace_id

    def _check_upstream(self, name: str) -> None:
        for upstream in STAGES[name].upstream:
            if self._store.read_manifest(upstream) is None:
                raise MissingUpstreamError(name, upstream, f'{upstream}/{MANIFEST}')

    async def run_stage(self, name: str) -> dict[str, Any]:
        """Run one stage and return its manifest."""
        if name not in STAGES:
            raise InvalidInputError(f"Unknown stage '{name}'; expected one of {list(STAGE_ORDER)}.")
        self._check_upstream(name)

        span = Span(name=f'stage.{name}', trace_id=self._trace_id)
        log_event('stage.start', trace_id=self._trace_id, stage=name)
        run = StageRun(
            name=name,
            config=self._config,
            store=self._store,
            trace_id=self._trace_id,
            cache=self._cache,
        )
        try:
            await asyncio.to_thread(STAGES[name].body, run)
        except Exception as exc:
            span.end()
            log_event(
                'stage.failed',
                trace_id=self._trace_id,
                span=span,
                level=logging.ERROR,
                stage=name,
                error_type=type(exc).__name__,
                error=str(exc),
            )
            raise
        self._store.write_manifest(
            name,
            config_hash=self._config.config_hash(),
            seeds=run.seeds,
            inputs=run.inputs,
            outputs=run.outputs,
        )
        span.end()
        log_event(
            'stage.done',
            trace_id=self._trace_id,
            span=span,
            stage=name,
            outputs=len(run.outputs),
        )
        return self._store.read_json(name, name, MANIFEST)

    async def full_pipeline(self) -> dict[str, Any]:
        """Every stage in dependency order; returns the summary report."""
        span = Span(name='pipeline', trace_id=self._trace_id)
        log_event(
            'pipeline.start',
            trace_id=self._trace_id,
            backend=self._config.backend,
            seed=self._config.seed,
            config_hash=self._config.config_hash(),
        )
        try:
            for name in STAGE_ORDER:
                await self.run_stage(name)
        finally:
            span.end()
        summary = self._store.read_json('report', 'report', 'summary.json')
        log_event(
            'pipeline.done',
            trace_id=self._trace_id,
            span=span,
            **{k: v for k, v in summary['headline'].items() if not isinstance(v, list)},
        )
        return summary
