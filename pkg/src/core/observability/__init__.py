"""Observability helpers (tracing + structured logs)."""
from .tracing import LOGGER_NAME, Span, configure_logging, log_event, new_trace_id
