"""Pure-Python BLEU kernels. Used when the compiled extension is unavailable."""
import math
from collections import Counter

MAX_ORDER = 4
SMOOTH_OFFSET = 0.01


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_ngram_matches(hyp, ref, n):
    hyp_count = max(len(hyp) - n + 1, 0)
    if hyp_count == 0:
        return 0, 0
    ref_grams = _ngrams(ref, n)
    matches = sum(min(c, ref_grams[g]) for g, c in _ngrams(hyp, n).items())
    return matches, hyp_count


def ngram_stats(hyp, ref):
    """Return ``(matches, hyp_counts)`` lists for orders 1..4."""
    matches = []
    counts = []
    for n in range(1, MAX_ORDER + 1):
        m, c = clipped_ngram_matches(hyp, ref, n)
        matches.append(m)
        counts.append(c)
    return matches, counts


def smoothed_sentence_bleu(hyp, ref):
    hyp_len = len(hyp)
    if hyp_len == 0:
        return 0.0
    ref_len = len(ref)
    log_sum = 0.0
    for n in range(1, MAX_ORDER + 1):
        m, c = clipped_ngram_matches(hyp, ref, n)
        num = m if m > 0 else SMOOTH_OFFSET
        log_sum += math.log(num / (c if c > 0 else 1))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_sum / MAX_ORDER)
