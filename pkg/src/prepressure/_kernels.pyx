# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: masked log-sum-exp chains and exact MWIS search."""

import numpy as np

from libc.math cimport exp, log, INFINITY


def lse_chain(alpha0, masks, adds):
    cdef double[::1] cur = np.array(alpha0, dtype=np.float64)
    cdef const unsigned char[:, :, ::1] mk = np.ascontiguousarray(masks, dtype=np.uint8)
    cdef const double[:, ::1] ad = np.ascontiguousarray(adds, dtype=np.float64)
    cdef Py_ssize_t S = cur.shape[0]
    cdef Py_ssize_t steps = mk.shape[0]
    cdef double[::1] nxt = np.empty(S, dtype=np.float64)
    cdef double[::1] tmp
    cdef Py_ssize_t s, i, j
    cdef double top, acc
    for s in range(steps):
        for j in range(S):
            top = -INFINITY
            for i in range(S):
                if mk[s, i, j] and cur[i] > top:
                    top = cur[i]
            if top == -INFINITY:
                nxt[j] = -INFINITY
                continue
            acc = 0.0
            for i in range(S):
                if mk[s, i, j]:
                    acc += exp(cur[i] - top)
            nxt[j] = top + log(acc) + ad[s, j]
        tmp = cur
        cur = nxt
        nxt = tmp
    return np.asarray(cur).copy()


cdef struct MwisState:
    int n
    double best
    unsigned long long best_set


cdef double _rest_sum(double* w, int n, unsigned long long cand) nogil:
    cdef double s = 0.0
    cdef int v
    for v in range(n):
        if (cand >> v) & 1:
            s += w[v]
    return s


cdef void _rec(double* w, unsigned long long* adj, MwisState* st,
               unsigned long long cand, double cur_w, unsigned long long cur_set) nogil:
    cdef int v
    cdef unsigned long long bit
    if cand == 0:
        if cur_w > st.best:
            st.best = cur_w
            st.best_set = cur_set
        return
    if cur_w + _rest_sum(w, st.n, cand) <= st.best:
        return
    v = 0
    while not ((cand >> v) & 1):
        v += 1
    bit = (<unsigned long long>1) << v
    _rec(w, adj, st, cand & ~adj[v] & ~bit, cur_w + w[v], cur_set | bit)
    if adj[v] & cand:
        _rec(w, adj, st, cand & ~bit, cur_w, cur_set)


def mwis_bitmask(weights, adj):
    cdef double[::1] w = np.array(weights, dtype=np.float64)
    cdef unsigned long long[::1] a = np.array([int(x) for x in adj], dtype=np.uint64)
    cdef int n = w.shape[0]
    if n > 64:
        raise ValueError("at most 64 vertices")
    cdef MwisState st
    st.n = n
    st.best = -1.0
    st.best_set = 0
    cdef unsigned long long full
    if n == 0:
        full = 0
    elif n == 64:
        full = ~(<unsigned long long>0)
    else:
        full = ((<unsigned long long>1) << n) - 1
    if n:
        _rec(&w[0], &a[0], &st, full, 0.0, 0)
    else:
        st.best = 0.0
    return st.best, int(st.best_set)
