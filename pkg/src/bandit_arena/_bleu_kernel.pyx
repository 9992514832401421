# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled BLEU kernels.

Tokens are interned to integer ids once per call; n-gram counting then runs
over C arrays with a quadratic scan, which beats hashing for sentence-length
inputs.
"""
from libc.math cimport exp, log
from libc.stdlib cimport free, malloc

cdef enum:
    MAX_ORDER = 4
cdef double SMOOTH_OFFSET = 0.01


cdef int _intern(list tokens, dict vocab, int *out) except -1:
    cdef Py_ssize_t i
    cdef object idx
    for i in range(len(tokens)):
        tok = tokens[i]
        idx = vocab.get(tok)
        if idx is None:
            idx = len(vocab)
            vocab[tok] = idx
        out[i] = idx
    return 0


cdef inline bint _eq(const int *a, Py_ssize_t i, const int *b, Py_ssize_t j, int n) nogil:
    cdef int k
    for k in range(n):
        if a[i + k] != b[j + k]:
            return False
    return True


cdef long _clipped(const int *h, Py_ssize_t hl, const int *r, Py_ssize_t rl, int n) nogil:
    cdef Py_ssize_t hc = hl - n + 1
    cdef Py_ssize_t rc = rl - n + 1
    cdef Py_ssize_t i, j
    cdef long total = 0, ch, cr
    cdef bint seen
    if hc <= 0 or rc <= 0:
        return 0
    for i in range(hc):
        seen = False
        for j in range(i):
            if _eq(h, i, h, j, n):
                seen = True
                break
        if seen:
            continue
        ch = 1
        for j in range(i + 1, hc):
            if _eq(h, i, h, j, n):
                ch += 1
        cr = 0
        for j in range(rc):
            if _eq(h, i, r, j, n):
                cr += 1
        total += ch if ch < cr else cr
    return total


cdef int _stats(list hyp, list ref, long *matches, long *counts) except -1:
    cdef Py_ssize_t hl = len(hyp), rl = len(ref)
    cdef int *buf = <int *> malloc((hl + rl + 1) * sizeof(int))
    cdef int n
    cdef dict vocab = {}
    if buf == NULL:
        raise MemoryError()
    try:
        _intern(hyp, vocab, buf)
        _intern(ref, vocab, buf + hl)
        for n in range(1, MAX_ORDER + 1):
            matches[n - 1] = _clipped(buf, hl, buf + hl, rl, n)
            counts[n - 1] = hl - n + 1 if hl - n + 1 > 0 else 0
    finally:
        free(buf)
    return 0


def clipped_ngram_matches(hyp, ref, int n):
    cdef list h = list(hyp), r = list(ref)
    cdef long m[MAX_ORDER]
    cdef long c[MAX_ORDER]
    if n < 1 or n > MAX_ORDER:
        # orders above 4 are never needed; keep parity with the fallback
        from ._bleu_py import clipped_ngram_matches as slow
        return slow(h, r, n)
    _stats(h, r, m, c)
    return int(m[n - 1]), int(c[n - 1])


def ngram_stats(hyp, ref):
    cdef long m[MAX_ORDER]
    cdef long c[MAX_ORDER]
    _stats(list(hyp), list(ref), m, c)
    return [m[0], m[1], m[2], m[3]], [c[0], c[1], c[2], c[3]]


def smoothed_sentence_bleu(hyp, ref):
    cdef list h = list(hyp), r = list(ref)
    cdef Py_ssize_t hl = len(h), rl = len(r)
    cdef long m[MAX_ORDER]
    cdef long c[MAX_ORDER]
    cdef double log_sum = 0.0, num, bp
    cdef int k
    if hl == 0:
        return 0.0
    _stats(h, r, m, c)
    for k in range(MAX_ORDER):
        num = <double> m[k] if m[k] > 0 else SMOOTH_OFFSET
        log_sum += log(num / (<double> c[k] if c[k] > 0 else 1.0))
    bp = 1.0 if hl >= rl else exp(1.0 - <double> rl / <double> hl)
    return bp * exp(log_sum / MAX_ORDER)
