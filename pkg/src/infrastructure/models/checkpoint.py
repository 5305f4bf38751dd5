"""Tensor container for checkpoints and embedding patches.

Layout: one line of JSON (sorted keys, UTF-8) terminated by a newline, then
the raw little-endian float32 tensors in `manifest` order. The header
carries `format`, `version`, `kind` and a `manifest` of `{name, shape}`
entries plus whatever fields the writer adds.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from typing import Any

import numpy as np
import torch

from src.core.errors import InvalidInputError
from src.domain.model_api import Vocabulary

from .toy_backend import ToyLanguageModel
from .toy_transformer import ToyArchConfig, ToyTransformer

FORMAT = 'damp-tensors'
VERSION = 1


def encode_container(
    kind: str,
    tensors: Sequence[tuple[str, np.ndarray]],
    **fields: Any,
) -> bytes:
    manifest = [{'name': name, 'shape': list(np.shape(values))} for name, values in tensors]
    header = {'format': FORMAT, 'version': VERSION, 'kind': kind, 'manifest': manifest, **fields}
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode('utf-8') + b'\n'
    body = b''.join(np.ascontiguousarray(v, dtype='<f4').tobytes() for _, v in tensors)
    return head + body


def decode_container(data: bytes) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    newline = data.find(b'\n')
    if newline < 0:
        raise InvalidInputError('Tensor container has no header line.')
    try:
        header = json.loads(data[:newline].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f'Unreadable tensor container header: {exc}') from exc
    if header.get('format') != FORMAT or header.get('version') != VERSION:
        raise InvalidInputError(
            f"Unsupported container {header.get('format')!r} v{header.get('version')!r}."
        )

    tensors: dict[str, np.ndarray] = {}
    offset = newline + 1
    for entry in header['manifest']:
        shape = tuple(int(s) for s in entry['shape'])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(data):
            raise InvalidInputError(f"Tensor container truncated inside '{entry['name']}'.")
        values = np.frombuffer(data[offset:end], dtype='<f4').reshape(shape)
        tensors[entry['name']] = values.astype(np.float64)
        offset = end
    if offset != len(data):
        raise InvalidInputError('Tensor container has trailing bytes.')
    return header, tensors


# ---------------------------------
# toy checkpoints
# ---------------------------------


def checkpoint_bytes(model: ToyLanguageModel) -> bytes:
    tensors = [
        (name, param.detach().numpy()) for name, param in model.module.named_parameters()
    ]
    return encode_container(
        'checkpoint',
        tensors,
        backend=model.backend_name,
        d=model.embedding_dim,
        vocab_size=len(model.vocabulary),
        arch=model.arch.model_dump(),
    )


def model_from_checkpoint(data: bytes, vocabulary: Vocabulary) -> ToyLanguageModel:
    header, tensors = decode_container(data)
    if header.get('kind') != 'checkpoint' or header.get('backend') != 'toy':
        raise InvalidInputError('Not a toy-model checkpoint.')
    if header['vocab_size'] != len(vocabulary):
        raise InvalidInputError(
            f"Checkpoint expects {header['vocab_size']} tokens, vocabulary has {len(vocabulary)}."
        )
    module = ToyTransformer(ToyArchConfig(**header['arch']), len(vocabulary))
    expected = [name for name, _ in module.named_parameters()]
    if expected != [e['name'] for e in header['manifest']]:
        raise InvalidInputError('Checkpoint manifest does not match the architecture.')
    with torch.no_grad():
        for name, param in module.named_parameters():
            param.copy_(torch.from_numpy(tensors[name]))
    return ToyLanguageModel(module, vocabulary)


# ---------------------------------
# embedding patches
# ---------------------------------


def patch_bytes(token_ids: Sequence[int], rows: np.ndarray, **fields: Any) -> bytes:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != len(token_ids):
        raise InvalidInputError('Patch rows must be a (len(token_ids), d) matrix.')
    return encode_container(
        'embedding_patch',
        [('rows', rows)],
        token_ids=[int(t) for t in token_ids],
        d=int(rows.shape[1]),
        **fields,
    )


def read_patch(data: bytes) -> tuple[list[int], np.ndarray]:
    header, tensors = decode_container(data)
    if header.get('kind') != 'embedding_patch':
        raise InvalidInputError('Not an embedding patch container.')
    return [int(t) for t in header['token_ids']], tensors['rows']
