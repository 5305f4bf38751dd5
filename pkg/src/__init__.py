"""Embedding-only gender debiasing of language models."""
