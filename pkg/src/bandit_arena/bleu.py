"""Sentence- and corpus-level BLEU.

``smoothed_sentence_bleu`` is the bandit feedback function: zero n-gram match
counts are replaced by 0.01 (numerator only) before the geometric mean, and a
hypothesis shorter than n is treated as zero matches over a count of one.

The n-gram counting runs in a compiled kernel when one is available. Set
``BANDIT_ARENA_PURE_PYTHON=1`` to force the pure-Python implementation.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

from . import _bleu_py

MAX_ORDER = 4
SMOOTH_OFFSET = 0.01

Tokens = Sequence[str]


def _load_backend():
    if os.environ.get("BANDIT_ARENA_PURE_PYTHON"):
        return _bleu_py, "python"
    try:
        from . import _bleu_kernel
    except ImportError:
        return _bleu_py, "python"
    return _bleu_kernel, "cython"


_backend, BACKEND = _load_backend()


class BleuError(ValueError):
    pass


@dataclass(frozen=True)
class BleuBreakdown:
    precisions: tuple[float, ...]
    matches: tuple[int, ...]
    hyp_ngram_counts: tuple[int, ...]
    brevity_penalty: float
    score: float


def clipped_ngram_matches(hyp: Tokens, ref: Tokens, n: int) -> tuple[int, int]:
    """Clipped n-gram match count and number of hypothesis n-grams."""
    if not 1 <= n <= MAX_ORDER:
        raise BleuError(f"n-gram order must be in 1..{MAX_ORDER}, got {n}")
    return _backend.clipped_ngram_matches(list(hyp), list(ref), n)


def smoothed_sentence_bleu(hyp: Tokens, ref: Tokens) -> float:
    if len(ref) == 0:
        raise BleuError("empty reference")
    return _backend.smoothed_sentence_bleu(list(hyp), list(ref))


def sentence_bleu_breakdown(hyp: Tokens, ref: Tokens) -> BleuBreakdown:
    if len(ref) == 0:
        raise BleuError("empty reference")
    matches, counts = _backend.ngram_stats(list(hyp), list(ref))
    precisions = tuple(
        (m if m > 0 else SMOOTH_OFFSET) / (c if c > 0 else 1) for m, c in zip(matches, counts)
    )
    if len(hyp) == 0:
        return BleuBreakdown(precisions, tuple(matches), tuple(counts), 0.0, 0.0)
    bp = brevity_penalty(len(ref), len(hyp))
    score = smoothed_sentence_bleu(hyp, ref)
    return BleuBreakdown(precisions, tuple(matches), tuple(counts), bp, score)


def brevity_penalty(ref_len: int, hyp_len: int) -> float:
    if hyp_len == 0:
        return 0.0
    return math.exp(min(0.0, 1.0 - ref_len / hyp_len))


def corpus_bleu(pairs: Sequence[tuple[Tokens, Tokens]]) -> float:
    """Unsmoothed corpus BLEU over ``(hyp, ref)`` pairs."""
    if len(pairs) == 0:
        raise BleuError("corpus_bleu needs at least one pair")
    matches = [0] * MAX_ORDER
    counts = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        if len(ref) == 0:
            raise BleuError("empty reference")
        m, c = _backend.ngram_stats(list(hyp), list(ref))
        for k in range(MAX_ORDER):
            matches[k] += m[k]
            counts[k] += c[k]
        hyp_len += len(hyp)
        ref_len += len(ref)
    if any(m == 0 for m in matches):
        return 0.0
    log_sum = sum(math.log(m / c) for m, c in zip(matches, counts))
    return brevity_penalty(ref_len, hyp_len) * math.exp(log_sum / MAX_ORDER)
