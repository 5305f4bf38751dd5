# ---------------------------------
# SHARED TYPE ALIASES
# ---------------------------------
from __future__ import annotations

import hashlib
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

TokenIds = Sequence[int]
FloatArray = npt.NDArray[np.float64]


def derive_seed(seed: int, *labels: object) -> int:
    """Derive an independent 63-bit seed from a base seed and labels.

    Stable across processes and platforms (no use of `hash()`), so per-block
    and per-word RNG streams do not depend on scheduling.
    """
    material = '\x1f'.join([str(seed), *(str(label) for label in labels)])
    digest = hashlib.sha256(material.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little') & ((1 << 63) - 1)
