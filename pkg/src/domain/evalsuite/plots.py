"""Standalone SVG figures (matplotlib Agg backend, no display needed)."""

from __future__ import annotations

import io
from collections.abc import Sequence

import matplotlib

matplotlib.use('Agg')
matplotlib.rcParams['svg.hashsalt'] = 'damp'

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.core.types import FloatArray  # noqa: E402

from .geometry import GeometryReport  # noqa: E402


def _svg(fig: plt.Figure) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format='svg', metadata={'Date': None})
    plt.close(fig)
    return buf.getvalue()


def projection_plane_svg(
    words: Sequence[str],
    before: FloatArray,
    after: FloatArray,
    title: str = 'Occupation words in the gender plane',
) -> bytes:
    """Scatter of (first, second) gender-component coordinates before and after debiasing."""
    fig, ax = plt.subplots(figsize=(6, 5))
    for coords, label, marker in ((before, 'before', 'o'), (after, 'after', 'x')):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        ys = coords[:, 1] if coords.shape[1] > 1 else np.zeros(len(words))
        ax.scatter(coords[:, 0], ys, marker=marker, label=label)
        for word, x, y in zip(words, coords[:, 0], ys):
            ax.annotate(word, (x, y), fontsize=7)
    ax.axvline(0.0, color='grey', linewidth=0.5)
    ax.set_xlabel('gender component 1')
    ax.set_ylabel('gender component 2')
    ax.set_title(title)
    ax.legend()
    return _svg(fig)


def projection_neighbor_svg(
    before: GeometryReport,
    after: GeometryReport | None = None,
    title: str = 'Projection vs. male-leaning neighbours',
) -> bytes:
    fig, ax = plt.subplots(figsize=(6, 5))
    series = [(before, f'before (rho={before.correlation:.2f})', 'o')]
    if after is not None:
        series.append((after, f'after (rho={after.correlation:.2f})', 'x'))
    for report, label, marker in series:
        words = list(report.projections)
        xs = [report.projections[w] for w in words]
        ys = [report.neighbor_fractions[w] for w in words]
        ax.scatter(xs, ys, marker=marker, label=label)
    ax.set_xlabel('projection on gender direction')
    ax.set_ylabel(f'male-leaning share of {before.k} nearest neighbours')
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(title)
    ax.legend()
    return _svg(fig)
