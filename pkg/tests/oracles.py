"""Test-side brute-force evaluators, independent of the package code paths."""

import heapq
import math

import numpy as np


def generation_distribution(probs, n):
    """Exact law of ``N_n`` by composing the offspring generating polynomial ``n`` times."""
    g = np.polynomial.Polynomial(probs)
    dist = np.polynomial.Polynomial([0.0, 1.0])
    for _ in range(n):
        dist = g(dist)
    return dist.coef


def raw_moment(dist, l):
    k = np.arange(len(dist), dtype=float)
    return float(np.dot(dist, k**l))


def invasion_replay(bonds, raw, exposure):
    """Check greediness: at each acceptance, the accepted weight is minimal among exposed, unaccepted bonds.

    Returns the number of violations.  Quadratic; for small runs only.
    """
    accepted = set()
    bad = 0
    for i, b in enumerate(bonds):
        w = raw[b]
        for c, t in exposure.items():
            if t <= i and c not in accepted and c != b and raw[c] < w:
                bad += 1
                break
        accepted.add(b)
    return bad


def naive_invasion(d, budget, weight):
    """Greedy invasion with a deterministic weight function ``weight(bond)``; linear scans."""
    origin = (0,) * d
    steps = [tuple(int(i == j) * s for j in range(d)) for i in range(d) for s in (1, -1)]
    verts = {origin}
    boundary, seen = set(), set()

    def bond(a, b):
        return (a, b) if a <= b else (b, a)

    def add(v):
        for s in steps:
            u = tuple(a + c for a, c in zip(v, s))
            b = bond(v, u)
            if b not in seen:
                seen.add(b)
                boundary.add(b)

    add(origin)
    taken = []
    while len(taken) < budget:
        b = min(boundary, key=weight)
        boundary.discard(b)
        taken.append(b)
        for v in b:
            if v not in verts:
                verts.add(v)
                add(v)
    return taken


def heap_invasion(d, budget, weight):
    """Same greedy rule with a heap, as a second reference for ``naive_invasion``."""
    origin = (0,) * d
    steps = [tuple(int(i == j) * s for j in range(d)) for i in range(d) for s in (1, -1)]
    verts, seen, heap, out = {origin}, set(), [], []

    def add(v):
        for s in steps:
            u = tuple(a + c for a, c in zip(v, s))
            b = (v, u) if v <= u else (u, v)
            if b not in seen:
                seen.add(b)
                heapq.heappush(heap, (weight(b), b))

    add(origin)
    while len(out) < budget:
        _, b = heapq.heappop(heap)
        out.append(b)
        for v in b:
            if v not in verts:
                verts.add(v)
                add(v)
    return out


def stirling2(n, k):
    return sum((-1) ** (k - j) * math.comb(k, j) * j**n for j in range(k + 1)) // math.factorial(k)
