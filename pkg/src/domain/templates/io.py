# ---------------------------------
# WORD LISTS AND TEMPLATE FILES
# ---------------------------------
from __future__ import annotations

import json
from collections.abc import Iterable
from pathlib import Path

from src.core.errors import InvalidInputError

from .entities import GenderedWordList, Template


def read_word_list(path: Path) -> list[str]:
    """One word per line; blank lines and `#` comments are skipped, order and case preserved."""
    words: list[str] = []
    for line in path.read_text(encoding='utf-8').splitlines():
        word = line.split('#', 1)[0].strip()
        if word:
            words.append(word)
    return words


def load_gendered_words(path: Path) -> GenderedWordList:
    return GenderedWordList(read_word_list(path))


def template_record(template: Template) -> dict[str, object]:
    return {
        'occupation': template.occupation,
        'tokens': list(template.tokens),
        'token_ids': list(template.token_ids),
        'p_he': template.p_he,
        'p_she': template.p_she,
    }


def templates_jsonl(templates: Iterable[Template]) -> str:
    return ''.join(
        json.dumps(template_record(t), sort_keys=True, ensure_ascii=False) + '\n'
        for t in templates
    )


def parse_templates_jsonl(text: str) -> list[Template]:
    templates: list[Template] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            templates.append(
                Template(
                    occupation=str(raw['occupation']),
                    token_ids=tuple(int(t) for t in raw['token_ids']),
                    tokens=tuple(str(t) for t in raw['tokens']),
                    p_he=float(raw['p_he']),
                    p_she=float(raw['p_she']),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f'Bad template record on line {lineno}: {exc}') from exc
    return templates


def read_templates(path: Path) -> list[Template]:
    return parse_templates_jsonl(path.read_text(encoding='utf-8'))
