"""Pure-Python reference kernels.

Same algorithms as the compiled ``_kernels`` module. The branch and bound
returns identical results; the log-sum-exp chain may differ in the last
bits because numpy sums pairwise.
"""

import math

import numpy as np

NEG_INF = -math.inf


def lse_chain(alpha0, masks, adds):
    """Run a masked log-sum-exp recursion.

    ``new[j] = adds[s, j] + log sum_{i : masks[s, i, j]} exp(cur[i])`` for each
    step ``s``; unreachable states hold ``-inf``.
    """
    cur = np.array(alpha0, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    adds = np.asarray(adds, dtype=float)
    for s in range(masks.shape[0]):
        vals = np.where(masks[s], cur[:, None], NEG_INF)
        top = vals.max(axis=0)
        finite = np.isfinite(top)
        safe = np.where(finite, top, 0.0)
        acc = np.exp(vals - safe[None, :]).sum(axis=0)
        with np.errstate(divide="ignore"):
            nxt = np.where(finite, safe + np.log(np.where(finite, acc, 1.0)) + adds[s], NEG_INF)
        cur = nxt
    return cur


def mwis_bitmask(weights, adj):
    """Exact maximum-weight independent set by branch and bound.

    Parameters
    ----------
    weights : sequence of float
        Nonnegative vertex weights, at most 64 vertices.
    adj : sequence of int
        ``adj[v]`` is the neighbour bitmask of ``v`` (no self loops).

    Returns
    -------
    (float, int)
        Best weight and the chosen vertex bitmask. Branching is include-first
        over increasing vertex index and only strict improvements replace the
        incumbent, so the lowest-index optimum is the one reported.
    """
    w = [float(x) for x in weights]
    adj = [int(a) for a in adj]
    n = len(w)
    best = [-1.0, 0]

    def rest_sum(cand):
        s = 0.0
        for v in range(n):
            if cand >> v & 1:
                s += w[v]
        return s

    def rec(cand, cur_w, cur_set):
        if cand == 0:
            if cur_w > best[0]:
                best[0] = cur_w
                best[1] = cur_set
            return
        if cur_w + rest_sum(cand) <= best[0]:
            return
        v = (cand & -cand).bit_length() - 1
        bit = 1 << v
        rec(cand & ~adj[v] & ~bit, cur_w + w[v], cur_set | bit)
        if adj[v] & cand:
            rec(cand & ~bit, cur_w, cur_set)

    rec((1 << n) - 1 if n else 0, 0.0, 0)
    return best[0], best[1]
