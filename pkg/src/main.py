"""Command-line entry point.

    damp --config src/data/desk.toml                 # full pipeline
    damp --config src/data/desk.toml --stage debias  # one stage

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 numerical failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from src.core.config import get_settings
from src.core.errors import NUMERICAL_ERRORS, ConfigError, DampError, MissingUpstreamError
from src.core.observability import configure_logging, log_event, new_trace_id
from src.runtime import DEFAULT_CONFIG, STAGE_ORDER, PipelineOrchestrator, load_pipeline_config

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING_UPSTREAM = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='damp',
        description='Debias occupation embeddings of a language model by minimizing the TDE.',
    )
    parser.add_argument('--config', type=Path, default=DEFAULT_CONFIG, help='pipeline TOML file')
    parser.add_argument('--stage', choices=STAGE_ORDER, help='run one stage instead of all')
    parser.add_argument('--seed', type=int, help='global seed; stage seeds derive from it')
    parser.add_argument(
        '--deterministic',
        action='store_true',
        default=None,
        help='bit-stable output: one job, one torch thread, deterministic kernels',
    )
    parser.add_argument('--out', type=Path, help='artifact directory')
    parser.add_argument('--backend', choices=('toy', 'adapter'))
    parser.add_argument('--jobs', type=int, help='per-occupation parallelism')
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {
        'seed': args.seed,
        'deterministic': args.deterministic,
        'backend': args.backend,
        'jobs': args.jobs,
    }
    if args.out is not None:
        overrides['paths'] = {'out_dir': args.out}
    return overrides


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, MissingUpstreamError):
        return EXIT_MISSING_UPSTREAM
    if isinstance(exc, NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    return EXIT_FAILURE


async def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    trace_id = new_trace_id()
    try:
        config = load_pipeline_config(args.config, _overrides(args))
        orchestrator = PipelineOrchestrator(config=config, trace_id=trace_id)
        if args.stage:
            result = await orchestrator.run_stage(args.stage)
        else:
            result = await orchestrator.full_pipeline()
    except DampError as exc:
        code = exit_code(exc)
        log_event(
            'cli.error',
            trace_id=trace_id,
            level=logging.ERROR,
            error_type=type(exc).__name__,
            error=str(exc),
            exit_code=code,
        )
        print(f'error: {exc}', file=sys.stderr)
        return code

    print(json.dumps(result.get('headline', result), indent=2, sort_keys=True, ensure_ascii=False))
    return EXIT_OK


def run() -> None:
    sys.exit(asyncio.run(main()))


if __name__ == '__main__':
    run()
