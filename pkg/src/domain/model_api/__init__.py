"""Language-model contract: vocabulary, embedding rows (X), knowledge parameters (K)."""
from .fingerprint import ModelFingerprint, embedding_digest, fingerprint
from .gradients import (
    AnchorDistanceLoss,
    CallableLoss,
    ConstantLoss,
    ScalarLossSpec,
    embedding_gradient,
)
from .language_model import (
    LanguageModel,
    RowOverrides,
    get_embedding,
    next_token_distribution,
    set_embedding,
)
from .vocabulary import BOS_TOKEN, PAD_TOKEN, Vocabulary, read_vocabulary, vocabulary_text

__all__ = [
    'AnchorDistanceLoss',
    'BOS_TOKEN',
    'CallableLoss',
    'ConstantLoss',
    'LanguageModel',
    'ModelFingerprint',
    'PAD_TOKEN',
    'RowOverrides',
    'ScalarLossSpec',
    'Vocabulary',
    'embedding_digest',
    'embedding_gradient',
    'fingerprint',
    'get_embedding',
    'next_token_distribution',
    'read_vocabulary',
    'set_embedding',
    'vocabulary_text',
]
