from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.core.errors import InvalidInputError
from src.core.types import derive_seed
from src.domain.model_api import Vocabulary

from .grammar import (
    CAREER_WORDS,
    DIRECT_VERBS,
    FAMILY_WORDS,
    FEMALE_NOUNS,
    HEARSAY_VERBS,
    MALE_NOUNS,
    PARTNERS,
    PREDICATES,
    GrammarFamily,
    attribute_sentence,
    build_vocabulary,
    direct_sentence,
    gendered_sentence,
    hearsay_sentence,
    neutral_sentence,
    parse_direct,
)
from .profile import BiasProfile

BLOCK_SIZE = 1000


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[tuple[str, ...], ...]
    profile: BiasProfile
    seed: int
    vocabulary: Vocabulary

    def __len__(self) -> int:
        return len(self.sentences)

    def token_ids(self) -> list[list[int]]:
        return [[self.vocabulary.id_of(t) for t in s] for s in self.sentences]

    def text(self) -> str:
        return ''.join(' '.join(s) + '\n' for s in self.sentences)


def _stratified(rng: np.random.Generator, count: int, rate: float) -> list[bool]:
    """Exactly round(rate * count) True values, shuffled."""
    males = int(round(rate * count))
    flags = np.array([True] * males + [False] * (count - males), dtype=bool)
    rng.shuffle(flags)
    return flags.tolist()


def _block(profile: BiasProfile, size: int, seed: int) -> list[tuple[str, ...]]:
    rng = np.random.default_rng(seed)
    occupations = profile.occupation_words
    families = list(profile.grammar)
    weights = np.array([profile.grammar[f] for f in families], dtype=np.float64)
    weights /= weights.sum()

    picks = rng.choice(len(families), size=size, p=weights)
    plan: list[tuple[GrammarFamily, str | None]] = []
    for index in picks:
        family = families[int(index)]
        if family in (GrammarFamily.DIRECT, GrammarFamily.HEARSAY):
            plan.append((family, occupations[int(rng.integers(len(occupations)))]))
        else:
            plan.append((family, None))

    # Pronoun gender is assigned per (family, occupation) stratum within the block.
    strata: dict[tuple[GrammarFamily, str | None], list[int]] = {}
    for i, key in enumerate(plan):
        strata.setdefault(key, []).append(i)
    genders: dict[int, bool] = {}
    for (family, occupation), positions in sorted(
        strata.items(), key=lambda kv: (kv[0][0].value, kv[0][1] or '')
    ):
        if family is GrammarFamily.DIRECT:
            rate = profile.male_rate(occupation)  # type: ignore[arg-type]
        elif family is GrammarFamily.HEARSAY:
            rate = profile.hearsay_rate(occupation)  # type: ignore[arg-type]
        else:
            rate = 0.5
        for pos, male in zip(positions, _stratified(rng, len(positions), rate)):
            genders[pos] = male

    sentences: list[tuple[str, ...]] = []
    for i, (family, occupation) in enumerate(plan):
        male = genders[i]
        predicate = PREDICATES[int(rng.integers(len(PREDICATES)))]
        if family is GrammarFamily.DIRECT:
            verb = DIRECT_VERBS[int(rng.integers(len(DIRECT_VERBS)))]
            words = direct_sentence(occupation, verb, male, predicate)  # type: ignore[arg-type]
        elif family is GrammarFamily.HEARSAY:
            verb = HEARSAY_VERBS[int(rng.integers(len(HEARSAY_VERBS)))]
            partner = PARTNERS[int(rng.integers(len(PARTNERS)))]
            words = hearsay_sentence(occupation, verb, partner, male, predicate)  # type: ignore[arg-type]
        elif family is GrammarFamily.NEUTRAL:
            verb = DIRECT_VERBS[int(rng.integers(len(DIRECT_VERBS)))]
            partner = PARTNERS[int(rng.integers(len(PARTNERS)))]
            words = neutral_sentence(partner, verb, male, predicate)
        elif family is GrammarFamily.GENDERED:
            verb = DIRECT_VERBS[int(rng.integers(len(DIRECT_VERBS)))]
            nouns = MALE_NOUNS if male else FEMALE_NOUNS
            noun = nouns[int(rng.integers(len(nouns)))]
            words = gendered_sentence(noun, verb, male, predicate)
        else:
            nouns = MALE_NOUNS if male else FEMALE_NOUNS
            noun = nouns[int(rng.integers(len(nouns)))]
            stereotyped = bool(rng.random() < profile.attribute_skew)
            career = stereotyped == male
            pool = CAREER_WORDS if career else FAMILY_WORDS
            words = attribute_sentence(noun, male, pool[int(rng.integers(len(pool)))])
        sentences.append(tuple(words))
    return sentences


def generate_corpus(
    profile: BiasProfile,
    size: int,
    seed: int,
    *,
    vocabulary: Vocabulary | None = None,
    jobs: int = 1,
) -> Corpus:
    """Sample `size` sentences in blocks of 1000, each block on its own derived seed."""
    if size < 1:
        raise InvalidInputError('Corpus size must be at least 1.')
    if not profile.occupations:
        raise InvalidInputError('BiasProfile needs at least one occupation.')
    vocabulary = vocabulary or build_vocabulary(profile.occupation_words)
    missing = [w for w in profile.occupation_words if w not in vocabulary]
    if missing:
        raise InvalidInputError(f'Occupations missing from the vocabulary: {missing}')

    blocks = [
        (min(BLOCK_SIZE, size - start), derive_seed(seed, 'corpus-block', b))
        for b, start in enumerate(range(0, size, BLOCK_SIZE))
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda blk: _block(profile, *blk), blocks))
    else:
        parts = [_block(profile, n, block_seed) for n, block_seed in blocks]

    sentences = tuple(s for part in parts for s in part)
    return Corpus(sentences=sentences, profile=profile, seed=seed, vocabulary=vocabulary)


def cooccurrence_counts(
    sentences: Sequence[Sequence[str]], occupations: Sequence[str]
) -> dict[str, tuple[int, int]]:
    """occupation -> (male pairings, total pairings) over direct-family sentences."""
    males: Counter[str] = Counter()
    totals: Counter[str] = Counter()
    for tokens in sentences:
        parsed = parse_direct(tokens, occupations)
        if parsed is None:
            continue
        occupation, male = parsed
        totals[occupation] += 1
        males[occupation] += int(male)
    return {o: (males[o], totals[o]) for o in occupations if totals[o]}


def cooccurrence_rates(corpus: Corpus) -> dict[str, float]:
    counts = cooccurrence_counts(corpus.sentences, corpus.profile.occupation_words)
    return {o: m / n for o, (m, n) in counts.items()}


# ---------------------------------
# corpus file: one sentence per line, space-separated tokens
# ---------------------------------


def read_sentences(path: Path) -> list[tuple[str, ...]]:
    lines = path.read_text(encoding='utf-8').splitlines()
    return [tuple(line.split()) for line in lines if line.strip()]


def read_corpus(path: Path, profile: BiasProfile, seed: int, vocabulary: Vocabulary) -> Corpus:
    sentences = read_sentences(path)
    for s in sentences:
        for token in s:
            vocabulary.id_of(token)
    return Corpus(sentences=tuple(sentences), profile=profile, seed=seed, vocabulary=vocabulary)
