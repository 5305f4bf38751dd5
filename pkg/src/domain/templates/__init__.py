"""Neutral, intermediary templates that elicit he/she predictions."""
from .entities import GenderedWordList, Template, TemplateBatch, TemplateGenConfig
from .generator import (
    generate_template,
    generate_template_set,
    generate_template_sets,
    held_out_config,
    revalidate,
    template_prefix,
    token_id_set,
    top_k_sample,
)
from .io import (
    load_gendered_words,
    parse_templates_jsonl,
    read_templates,
    read_word_list,
    template_record,
    templates_jsonl,
)
from .validators import is_intermediary, is_neutral, pronoun_probabilities
