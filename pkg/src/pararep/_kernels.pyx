# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequence kernels: edit distance, LCS and the TER shift search.

Mirrors ``_pykernels`` exactly, including tie-breaking.
"""
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef Py_ssize_t _lev(const long long* a, Py_ssize_t n, const long long* b, Py_ssize_t m,
                     Py_ssize_t* prev, Py_ssize_t* cur) noexcept nogil:
    cdef Py_ssize_t i, j, sub, dele, ins, best
    cdef Py_ssize_t* tmp
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if a[i - 1] == b[j - 1] else 1)
            dele = prev[j] + 1
            ins = cur[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            cur[j] = best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m]


cdef cnp.ndarray _as_array(seq):
    return np.ascontiguousarray(np.asarray(seq, dtype=np.int64).reshape(-1))


def edit_distance(a, b):
    cdef cnp.ndarray aa = _as_array(a)
    cdef cnp.ndarray bb = _as_array(b)
    cdef Py_ssize_t n = aa.shape[0], m = bb.shape[0]
    cdef Py_ssize_t* prev = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cur = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t out
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    out = _lev(<long long*>cnp.PyArray_DATA(aa), n, <long long*>cnp.PyArray_DATA(bb), m, prev, cur)
    free(prev)
    free(cur)
    return int(out)


def lcs_length(a, b):
    cdef cnp.ndarray aa = _as_array(a)
    cdef cnp.ndarray bb = _as_array(b)
    cdef long long* pa = <long long*>cnp.PyArray_DATA(aa)
    cdef long long* pb = <long long*>cnp.PyArray_DATA(bb)
    cdef Py_ssize_t n = aa.shape[0], m = bb.shape[0], i, j
    cdef Py_ssize_t* prev = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cur = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* tmp
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    for j in range(m + 1):
        prev[j] = 0
    for i in range(1, n + 1):
        cur[0] = 0
        for j in range(1, m + 1):
            if pa[i - 1] == pb[j - 1]:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        tmp = prev
        prev = cur
        cur = tmp
    out = prev[m]
    free(prev)
    free(cur)
    return int(out)


cdef void _shift(const long long* src, Py_ssize_t n, Py_ssize_t start, Py_ssize_t length,
                 Py_ssize_t dest, long long* out) noexcept nogil:
    # remainder = src without the block; block lands at dest of the remainder
    cdef Py_ssize_t k = 0, i, r = 0
    for i in range(n):
        if i >= start and i < start + length:
            continue
        if r == dest:
            for k in range(length):
                out[r + k] = src[start + k]
        if r < dest:
            out[r] = src[i]
        else:
            out[r + length] = src[i]
        r += 1
    if r == dest:
        for k in range(length):
            out[r + k] = src[start + k]


def apply_shift(seq, Py_ssize_t start, Py_ssize_t length, Py_ssize_t dest):
    cdef cnp.ndarray s = _as_array(seq)
    cdef cnp.ndarray out = np.empty_like(s)
    _shift(<long long*>cnp.PyArray_DATA(s), s.shape[0], start, length, dest, <long long*>cnp.PyArray_DATA(out))
    return [int(v) for v in out]


cdef int _best_shift(const long long* hyp, Py_ssize_t n, const long long* ref, Py_ssize_t m,
                     Py_ssize_t max_block, long long* work, Py_ssize_t* prev, Py_ssize_t* cur,
                     Py_ssize_t* res) noexcept nogil:
    cdef Py_ssize_t base = _lev(hyp, n, ref, m, prev, cur)
    cdef Py_ssize_t best_gain = 0, gain, length, start, dest
    cdef int found = 0
    length = max_block if max_block < n else n
    while length >= 1:
        for start in range(n - length + 1):
            for dest in range(n - length + 1):
                if dest == start:
                    continue
                _shift(hyp, n, start, length, dest, work)
                gain = base - _lev(work, n, ref, m, prev, cur)
                if gain > best_gain:
                    best_gain = gain
                    res[0] = start
                    res[1] = length
                    res[2] = dest
                    found = 1
        length -= 1
    return found


def best_shift(hyp, ref, Py_ssize_t max_block):
    cdef cnp.ndarray h = _as_array(hyp)
    cdef cnp.ndarray r = _as_array(ref)
    cdef cnp.ndarray work = np.empty_like(h)
    cdef Py_ssize_t n = h.shape[0], m = r.shape[0]
    cdef Py_ssize_t res[3]
    cdef Py_ssize_t* prev = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cur = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef int found
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    found = _best_shift(<long long*>cnp.PyArray_DATA(h), n, <long long*>cnp.PyArray_DATA(r), m, max_block,
                        <long long*>cnp.PyArray_DATA(work), prev, cur, res)
    free(prev)
    free(cur)
    if not found:
        return None
    return (int(res[0]), int(res[1]), int(res[2]))


def ter_greedy(hyp, ref, Py_ssize_t max_block=10, Py_ssize_t max_iters=50):
    cdef cnp.ndarray h = _as_array(hyp).copy()
    cdef cnp.ndarray r = _as_array(ref)
    cdef cnp.ndarray work = np.empty_like(h)
    cdef long long* ph = <long long*>cnp.PyArray_DATA(h)
    cdef long long* pw = <long long*>cnp.PyArray_DATA(work)
    cdef long long* pr = <long long*>cnp.PyArray_DATA(r)
    cdef Py_ssize_t n = h.shape[0], m = r.shape[0], it, shifts = 0, k, dist
    cdef Py_ssize_t res[3]
    cdef Py_ssize_t* prev = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* cur = <Py_ssize_t*>malloc((m + 1) * sizeof(Py_ssize_t))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    with nogil:
        for it in range(max_iters):
            if not _best_shift(ph, n, pr, m, max_block, pw, prev, cur, res):
                break
            _shift(ph, n, res[0], res[1], res[2], pw)
            for k in range(n):
                ph[k] = pw[k]
            shifts += 1
        dist = _lev(ph, n, pr, m, prev, cur)
    free(prev)
    free(cur)
    return int(shifts), int(dist)
