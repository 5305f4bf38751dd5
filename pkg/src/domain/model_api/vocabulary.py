from __future__ import annotations

from collections.abc import Iterable, Sequence
from numbers import Integral
from pathlib import Path

from src.core.errors import InvalidInputError

BOS_TOKEN = '<s>'
PAD_TOKEN = '<pad>'


class Vocabulary:
    """Dense token inventory: ids are 0..|V|-1 and `id_of` is a bijection onto them.

    `surfaces` holds the human-readable, lowercase form of each token (for a BPE
    vocabulary the piece with its word-boundary marker stripped); the neutrality
    check compares surfaces against the gendered-word list.
    """

    def __init__(
        self,
        tokens: Sequence[str],
        *,
        he_token: str = 'he',
        she_token: str = 'she',
        bos_token: str = BOS_TOKEN,
        pad_token: str | None = PAD_TOKEN,
        surfaces: Sequence[str] | None = None,
    ) -> None:
        self._tokens = tuple(tokens)
        self._ids = {token: i for i, token in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise InvalidInputError('Vocabulary tokens must be unique.')
        if surfaces is not None and len(surfaces) != len(self._tokens):
            raise InvalidInputError('surfaces must align with tokens.')
        self._surfaces = tuple(
            s.strip().lower() for s in (surfaces if surfaces is not None else self._tokens)
        )
        self.he_id = self.id_of(he_token)
        self.she_id = self.id_of(she_token)
        if self.he_id == self.she_id:
            raise InvalidInputError('"he" and "she" must be distinct tokens.')
        self.bos_id = self.id_of(bos_token)
        self.pad_id = self.id_of(pad_token) if pad_token is not None else self.bos_id
        self._special = {'he': he_token, 'she': she_token, 'bos': bos_token, 'pad': pad_token}

    # ---------------------------------
    # lookups
    # ---------------------------------

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._ids

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._tokens == other._tokens and self._special == other._special

    def __hash__(self) -> int:
        return hash(self._tokens)

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise InvalidInputError(f"Token '{token}' is not in the vocabulary.") from None

    def token(self, token_id: int) -> str:
        self.check_ids([token_id])
        return self._tokens[token_id]

    def surface(self, token_id: int) -> str:
        self.check_ids([token_id])
        return self._surfaces[token_id]

    def surfaces(self, token_ids: Iterable[int]) -> list[str]:
        return [self.surface(t) for t in token_ids]

    def check_ids(self, token_ids: Iterable[int]) -> None:
        size = len(self._tokens)
        for t in token_ids:
            if isinstance(t, bool) or not isinstance(t, Integral) or not 0 <= int(t) < size:
                raise InvalidInputError(f'Token id {t!r} is outside 0..{size - 1}.')

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset({self.bos_id, self.pad_id})


# ---------------------------------
# vocabulary file: one token per line, line number = id
# ---------------------------------


def vocabulary_text(vocabulary: Vocabulary) -> str:
    return '\n'.join(vocabulary.tokens) + '\n'


def read_vocabulary(path: Path) -> Vocabulary:
    lines = path.read_text(encoding='utf-8').split('\n')
    if lines and lines[-1] == '':
        lines = lines[:-1]
    return Vocabulary(lines)
