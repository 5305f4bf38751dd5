# ---------------------------------
# SENTENCE GRAMMAR
# ---------------------------------
"""Fixed lexicon and sentence skeletons for the synthetic corpus.

Families:
  direct     the OCC DVERB that PRON PRED .
  hearsay    the OCC HVERB the PARTNER that PRON PRED .
  neutral    the PARTNER DVERB that PRON PRED .
  attribute  the GNOUN talked about POSS ATTR .
  gendered   the GNOUN DVERB that PRON PRED .      (pronoun agrees with the noun)

Only `direct` sentences count toward an occupation's pronoun pairing; the
antecedent of a hearsay pronoun is ambiguous.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from enum import Enum

from src.domain.model_api import BOS_TOKEN, PAD_TOKEN, Vocabulary

PERIOD = '.'


class GrammarFamily(str, Enum):
    DIRECT = 'direct'
    HEARSAY = 'hearsay'
    NEUTRAL = 'neutral'
    ATTRIBUTE = 'attribute'
    GENDERED = 'gendered'


DIRECT_VERBS = (
    'said', 'thought', 'announced', 'believed', 'mentioned',
    'explained', 'claimed', 'insisted', 'felt', 'noted',
)
HEARSAY_VERBS = ('told', 'asked', 'reminded', 'promised', 'warned', 'assured', 'informed')
PARTNERS = (
    'patient', 'client', 'customer', 'student', 'neighbor', 'visitor',
    'child', 'manager', 'driver', 'guest', 'friend', 'tourist',
)
PREDICATES = (
    ('was', 'tired'),
    ('was', 'late'),
    ('was', 'busy', 'today'),
    ('would', 'arrive', 'soon'),
    ('liked', 'the', 'work'),
    ('needed', 'help'),
    ('had', 'finished'),
    ('felt', 'happy'),
    ('could', 'help'),
    ('worked', 'hard'),
    ('was', 'ready'),
    ('would', 'call', 'later'),
)
MALE_NOUNS = ('man', 'boy', 'father', 'brother', 'son', 'husband', 'king', 'uncle')
FEMALE_NOUNS = ('woman', 'girl', 'mother', 'sister', 'daughter', 'wife', 'queen', 'aunt')
CAREER_WORDS = (
    'office', 'salary', 'business', 'career', 'profession',
    'management', 'executive', 'professional', 'corporation', 'job',
)
FAMILY_WORDS = (
    'home', 'parents', 'children', 'family', 'cousins',
    'marriage', 'wedding', 'relatives', 'kids', 'household',
)
PRONOUNS = {True: 'he', False: 'she'}
POSSESSIVES = {True: 'his', False: 'her'}

# his/her rows mostly encode the career/family split of attribute sentences.
DEFINITIONAL_PAIRS: tuple[tuple[str, str], ...] = (
    ('he', 'she'),
    *zip(MALE_NOUNS, FEMALE_NOUNS),
)


def direct_sentence(occupation: str, verb: str, male: bool, predicate: Sequence[str]) -> list[str]:
    return ['the', occupation, verb, 'that', PRONOUNS[male], *predicate, PERIOD]


def hearsay_sentence(
    occupation: str, verb: str, partner: str, male: bool, predicate: Sequence[str]
) -> list[str]:
    return ['the', occupation, verb, 'the', partner, 'that', PRONOUNS[male], *predicate, PERIOD]


def neutral_sentence(partner: str, verb: str, male: bool, predicate: Sequence[str]) -> list[str]:
    return ['the', partner, verb, 'that', PRONOUNS[male], *predicate, PERIOD]


def attribute_sentence(noun: str, male: bool, attribute: str) -> list[str]:
    return ['the', noun, 'talked', 'about', POSSESSIVES[male], attribute, PERIOD]


def gendered_sentence(noun: str, verb: str, male: bool, predicate: Sequence[str]) -> list[str]:
    return ['the', noun, verb, 'that', PRONOUNS[male], *predicate, PERIOD]


def lexicon_words() -> set[str]:
    words: set[str] = {'the', 'that', 'talked', 'about', PERIOD}
    words.update(DIRECT_VERBS, HEARSAY_VERBS, PARTNERS, MALE_NOUNS, FEMALE_NOUNS)
    words.update(CAREER_WORDS, FAMILY_WORDS, PRONOUNS.values(), POSSESSIVES.values())
    for predicate in PREDICATES:
        words.update(predicate)
    return words


def build_vocabulary(occupations: Iterable[str], extra_words: Iterable[str] = ()) -> Vocabulary:
    """Specials first, then every lexicon, occupation and extra word in sorted order."""
    words = lexicon_words() | {o.lower() for o in occupations} | {w.lower() for w in extra_words}
    words -= {BOS_TOKEN, PAD_TOKEN}
    return Vocabulary([BOS_TOKEN, PAD_TOKEN, *sorted(words)])


def parse_direct(tokens: Sequence[str], occupations: Iterable[str]) -> tuple[str, bool] | None:
    """(occupation, is_male) when `tokens` is a direct-family sentence, else None."""
    if len(tokens) < 6 or tokens[0] != 'the' or tokens[3] != 'that':
        return None
    if tokens[1] not in set(occupations) or tokens[2] not in DIRECT_VERBS:
        return None
    if tokens[4] == PRONOUNS[True]:
        return tokens[1], True
    if tokens[4] == PRONOUNS[False]:
        return tokens[1], False
    return None
