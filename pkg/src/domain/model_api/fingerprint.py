from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .language_model import LanguageModel


@dataclass(frozen=True)
class ModelFingerprint:
    """SHA-256 over the canonical serialization of K.

    Each knowledge parameter contributes its name, its shape and its values
    as little-endian float64, in declaration order. Embedding rows never
    enter the digest.
    """

    digest: bytes

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex


def fingerprint(model: LanguageModel) -> ModelFingerprint:
    h = hashlib.sha256()
    for name, values in model.knowledge_parameters():
        array = np.ascontiguousarray(values, dtype='<f8')
        h.update(name.encode('utf-8'))
        h.update(b'\x00')
        h.update(np.asarray(array.shape, dtype='<i8').tobytes())
        h.update(array.tobytes())
    return ModelFingerprint(digest=h.digest())


def embedding_digest(model: LanguageModel, *, exclude: frozenset[int] = frozenset()) -> str:
    """Hex digest of the embedding table, skipping the rows in `exclude`."""
    table = np.ascontiguousarray(model.embedding_matrix(), dtype='<f8')
    keep = [i for i in range(table.shape[0]) if i not in exclude]
    return hashlib.sha256(table[keep].tobytes()).hexdigest()
