"""Brute-force absorbing-chain solver over block-count states with <= 2 blocks.

Independent of the package: states are (n, k_1, ..., k_r) with k_i the number
of dormant blocks at atom i, and expected hitting times come from one dense
linear solve of the generator.
"""

import itertools

import numpy as np


def states(r, total=2, exact=False):
    out = []
    for n in range(total + 1):
        for ks in itertools.product(range(total + 1), repeat=r):
            if (n + sum(ks) == total) if exact else (1 <= n + sum(ks) <= total):
                out.append((n,) + ks)
    return out


def transitions(s, rates, weights):
    n, ks = s[0], list(s[1:])
    c = sum(weights)
    if n >= 2:
        yield (n - 1, *ks), n * (n - 1) / 2
    for i, (lam, w) in enumerate(zip(rates, weights)):
        if n >= 1 and w > 0:
            k2 = ks.copy()
            k2[i] += 1
            yield (n - 1, *k2), n * w
        if ks[i] >= 1:
            k2 = ks.copy()
            k2[i] -= 1
            yield (n + 1, *k2), lam * ks[i]
    del c


def hitting_times(rates, weights, target, exact=False):
    """Expected time to reach the set ``target`` from every state.

    With ``exact`` only states with exactly two blocks are used, which is
    enough for targets reached before any coalescence.
    """
    S = states(len(rates), exact=exact)
    idx = {s: i for i, s in enumerate(S)}
    N = len(S)
    A = np.zeros((N, N))
    b = np.zeros(N)
    for s in S:
        i = idx[s]
        if target(s):
            A[i, i] = 1.0
            continue
        out = 0.0
        for s2, q in transitions(s, rates, weights):
            A[i, idx[s2]] -= q
            out += q
        A[i, i] += out
        b[i] = 1.0
    sol = np.linalg.solve(A, b)
    return {s: sol[idx[s]] for s in S}
