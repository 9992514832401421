"""Bandit learning arena for machine translation.

An evaluation service hands out source sentences one at a time and scores a
single proposed translation per source with smoothed sentence-BLEU; learners
adapt a seed model from that feedback alone.
"""
from .bleu import BACKEND, corpus_bleu, smoothed_sentence_bleu

__version__ = "0.1.0"
__all__ = ["BACKEND", "corpus_bleu", "smoothed_sentence_bleu"]
