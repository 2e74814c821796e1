"""Independent closed forms and brute-force evaluators used as cross-checks.

None of these share code with the recursions they are compared against.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def m2_closed(t1, t2, k1, k2):
    """``int_0^{t1 ^ t2} exp(-|k1+k2|^2 u/2d - |k1|^2 (t1-u)/2d - |k2|^2 (t2-u)/2d) du``."""
    k1, k2 = np.atleast_1d(np.asarray(k1, float)), np.atleast_1d(np.asarray(k2, float))
    d = k1.size
    a = float((k1 + k2) @ (k1 + k2)) / (2 * d)
    b = float(k1 @ k1) / (2 * d)
    c = float(k2 @ k2) / (2 * d)
    S = min(t1, t2)
    lam = a - b - c
    pre = math.exp(-b * t1 - c * t2)
    if abs(lam * S) < 1e-8:
        integral = S - lam * S * S / 2
    else:
        integral = -math.expm1(-lam * S) / lam
    return pre * integral


def mm2_closed(s1, s2, k1, k2):
    """``int_0^{s1 ^ s2} (s1 + s2 - s) exp(...) ds`` in closed form."""
    k1, k2 = np.atleast_1d(np.asarray(k1, float)), np.atleast_1d(np.asarray(k2, float))
    d = k1.size
    a = float((k1 + k2) @ (k1 + k2)) / (2 * d)
    b = float(k1 @ k1) / (2 * d)
    c = float(k2 @ k2) / (2 * d)
    S = min(s1, s2)
    A = s1 + s2
    lam = a - b - c
    pre = math.exp(-b * s1 - c * s2)
    if abs(lam * S) < 1e-6:
        # series in lam up to second order
        i0 = A * S - S * S / 2
        i1 = A * S**2 / 2 - S**3 / 3
        i2 = A * S**3 / 3 - S**4 / 4
        return pre * (i0 - lam * i1 + lam * lam * i2 / 2)
    e = math.exp(-lam * S)
    first = A * (1 - e) / lam
    second = (1 - e * (1 + lam * S)) / lam**2
    return pre * (first - second)


def tower_value(l, t):
    """``M^(l)_{t..t}(0) = t^{l-1} 2^{-(l-1)} l!``."""
    return t ** (l - 1) * 2.0 ** -(l - 1) * math.factorial(l)


def direct_fourier(points, probs, k):
    """``sum_x D(x) cos(k.x)`` by plain summation."""
    k = np.asarray(k, float)
    return float(sum(q * math.cos(float(np.dot(x, k))) for x, q in zip(points, probs)))


def binary_tau(dhat, times, kvecs):
    """Iterated binary-branching formula for ``tau^`` (offspring 0 or 2 with mass 1/2).

    ``dhat`` is the step characteristic function.  Zero-time coordinates are
    dropped.  The final leftover term ``Dhat(k_J)^{n_min} tau^_{n - n_min}``
    covers the part of the iteration where all marks still share one line.
    """
    pairs = [(int(n), tuple(np.atleast_1d(k).astype(float))) for n, k in zip(times, kvecs) if n > 0]
    if not pairs:
        return 1.0
    n = [p[0] for p in pairs]
    K = [np.array(p[1]) for p in pairs]
    if len(pairs) == 1:
        return dhat(K[0]) ** n[0]
    J = range(len(pairs))
    nmin = min(n)
    kJ = sum(K)
    total = 0.0
    rest = list(J)[1:]
    for size in range(1, len(rest) + 1):
        for I in itertools.combinations(rest, size):
            Ic = [j for j in J if j not in I]
            kI = sum(K[j] for j in I)
            kIc = sum(K[j] for j in Ic)
            for m in range(nmin):
                a = binary_tau(dhat, [n[j] - m - 1 for j in I], [K[j] for j in I])
                b = binary_tau(dhat, [n[j] - m - 1 for j in Ic], [K[j] for j in Ic])
                total += dhat(kJ) ** m * dhat(kI) * a * dhat(kIc) * b
    total += dhat(kJ) ** nmin * binary_tau(dhat, [x - nmin for x in n], K)
    return total


def spanning_trees(n_vertices, edges):
    """All spanning trees of a multigraph as sorted tuples of edge indices."""
    out = []
    for combo in itertools.combinations(range(len(edges)), n_vertices - 1):
        parent = list(range(n_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for e in combo:
            a, b = find(edges[e][0]), find(edges[e][1])
            if a == b:
                ok = False
                break
            parent[a] = b
        if ok:
            out.append(tuple(combo))
    return out


def lerw_triangle_direct():
    """``P(LERW from a to {c} on the triangle is the single edge a-c)``.

    From ``a`` the walk goes to ``c`` (prob 1/2) or ``b``; from ``b`` it goes
    to ``c`` (path a-b-c) or back to ``a`` (loop erased, restart).  Solving
    ``x = 1/2 + 1/4 x``.
    """
    A = np.array([[1 - 0.25]])
    return float(np.linalg.solve(A, [0.5])[0])


def brw_mode_bias(law, n, m=1):
    """Conditioned-minus-size-biased mean of ``N_m`` for BRW at horizon ``n`` (relative to the latter)."""
    from .branching import survival_probability

    c = survival_probability(law, n)
    if m != 1:
        raise NotImplementedError
    eq = sum(q * N * -math.expm1(N * math.log1p(-c[n - 1])) / c[n] for N, q in enumerate(law.probs) if N)
    ep = 1 + law.sigma_p_sq
    return (eq - ep) / ep
