"""Exact Fourier-space r-point functions of branching random walk and its IIC.

``tau_fourier`` evaluates the partition recursion bottom-up over the shift
``s`` (number of generations already descended) and bitmask subsets of the
marked points, so deep time vectors never hit the recursion limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .branching import OffspringLaw, StepLaw, enumerate_embedded_trees
from .errors import ValidationError

MAX_MARKED = 6
IMAG_TOL = 1e-9


@dataclass(frozen=True)
class MomentValue:
    value: float
    error: float = 0.0
    provenance: str = "exact recursion"
    imag: float = 0.0

    def __float__(self):
        return float(self.value)

    def to_json(self):
        return {"value": self.value, "error": self.error, "provenance": self.provenance, "imag": self.imag}


@dataclass(frozen=True)
class ScalingConstants:
    A: float = 1.0
    V: float = 1.0
    v: float = 1.0
    delta: float = 0.5

    def __post_init__(self):
        if min(self.A, self.V, self.v) <= 0:
            raise ValidationError("A, V, v must be positive", "constants")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)", "constants.delta")

    @classmethod
    def brw(cls, law: OffspringLaw, delta=0.5):
        return cls(A=1.0, V=law.sigma_p_sq, v=1.0, delta=delta)


@dataclass(frozen=True)
class RPointQuery:
    times: tuple
    kvecs: tuple

    def __post_init__(self):
        times = tuple(int(n) for n in self.times)
        kvecs = tuple(tuple(float(c) for c in np.atleast_1d(k)) for k in self.kvecs)
        if len(times) != len(kvecs) or not times:
            raise ValidationError("need one wave vector per time and r >= 2", "query")
        if any(n < 0 for n in times):
            raise ValidationError("times must be >= 0", "query.times")
        if len({len(k) for k in kvecs}) != 1:
            raise ValidationError("wave vectors differ in dimension", "query.kvecs")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "kvecs", kvecs)

    @property
    def r(self):
        return len(self.times) + 1


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def partitions(r_minus_1: int, j: int):
    """Partitions of ``{1..r-1}`` into ``j`` blocks, blocks ordered by minimum."""
    if not 1 <= j <= r_minus_1:
        raise ValidationError(f"need 1 <= j <= r-1, got j={j}", "j")
    out = []
    for part in _set_partitions(list(range(1, r_minus_1 + 1))):
        if len(part) == j:
            out.append(tuple(sorted((frozenset(b) for b in part), key=min)))
    return sorted(out, key=lambda p: [sorted(b) for b in p])


@lru_cache(maxsize=None)
def _mask_partitions(mask: int):
    """Set partitions of a bitmask, as tuples of block masks."""
    bits = [1 << i for i in range(mask.bit_length()) if mask >> i & 1]
    return tuple(tuple(sum(b) for b in part) for part in _set_partitions(bits))


# ---------------------------------------------------------------------------
# tau and rho
# ---------------------------------------------------------------------------


def _check(law, step, times, kvecs):
    q = RPointQuery(times, kvecs)
    if len(q.times) > MAX_MARKED:
        raise ValidationError(f"r-1 = {len(q.times)} exceeds the configured maximum {MAX_MARKED}", "query.r")
    if len(q.kvecs[0]) != step.d:
        raise ValidationError(f"wave vectors must have dimension {step.d}", "query.kvecs")
    return q


def _canonical(times, kvecs):
    pairs = sorted((n, k) for n, k in zip(times, kvecs) if n > 0)
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


def tau_value(law: OffspringLaw, step: StepLaw, times, kvecs, cache=None) -> complex:
    """``tau^_{n}(k)`` as a Python number (complex for asymmetric steps)."""
    q = _check(law, step, times, kvecs)
    times, kvecs = _canonical(q.times, q.kvecs)
    if not times:
        return 1.0
    key = None
    if cache is not None:
        key = (law.probs, step.key, times, kvecs)
        if key in cache:
            return cache[key]
    val = _tau_dp(law, step, times, kvecs)
    if cache is not None:
        cache[key] = val
    return val


def _tau_dp(law, step, times, kvecs):
    r1 = len(times)
    full = (1 << r1) - 1
    K = np.asarray(kvecs, dtype=float)
    dhat = [0.0] * (full + 1)
    for mask in range(1, full + 1):
        idx = [i for i in range(r1) if mask >> i & 1]
        dhat[mask] = step.fourier(K[idx].sum(axis=0))
    f = [law.factorial_moment(j) for j in range(r1 + 1)]
    n_max = max(times)

    def active(mask, s):
        return sum(1 << i for i in range(r1) if mask >> i & 1 and times[i] > s)

    # level[mask] = tau for the marked subset ``mask`` at shift s (all active)
    nxt = {0: 1.0}
    for s in range(n_max - 1, -1, -1):
        act = active(full, s)
        cur = {0: 1.0}
        sub = act
        masks = []
        while sub:
            masks.append(sub)
            sub = (sub - 1) & act
        for mask in masks:
            total = 0.0
            for part in _mask_partitions(mask):
                fj = f[len(part)]
                if fj == 0.0:
                    continue
                term = fj
                for b in part:
                    term *= dhat[b] * nxt[active(b, s + 1)]
                total += term
            cur[mask] = total
        nxt = cur
    return nxt[active(full, 0)]


def _moment(val, strict, provenance="exact recursion"):
    """``strict``: the step law is symmetric, so any imaginary part is round-off."""
    val = complex(val)
    if strict and abs(val.imag) > IMAG_TOL * max(1.0, abs(val)):
        raise ValidationError(f"imaginary residue {val.imag!r} exceeds tolerance", "moment.imag")
    return MomentValue(val.real, 0.0, provenance, val.imag)


def tau_fourier(law: OffspringLaw, step: StepLaw, times, kvecs, cache=None) -> MomentValue:
    return _moment(tau_value(law, step, times, kvecs, cache), step.symmetric)


def rho_fourier(law: OffspringLaw, step: StepLaw, times, kvecs, cache=None) -> MomentValue:
    """``rho^_{m}(k) = tau^_{(max m, m)}(0, k)``."""
    q = _check(law, step, times, kvecs)
    if len(q.times) + 1 > MAX_MARKED:
        raise ValidationError(f"r = {len(q.times) + 1} exceeds the configured maximum", "query.r")
    mbar = max(q.times)
    zero = (0.0,) * step.d
    return _moment(tau_value(law, step, (mbar,) + q.times, (zero,) + q.kvecs, cache), step.symmetric)


# ---------------------------------------------------------------------------
# Brute-force oracle by enumeration
# ---------------------------------------------------------------------------


def tau_lattice_oracle(law, step, times, sites, trees=None, bound=None):
    """``tau_{n}(x) = E[prod_j mu_{n_j}(x_j)]`` summed over all enumerated prefixes."""
    times = tuple(int(n) for n in times)
    sites = tuple(tuple(int(v) for v in np.atleast_1d(x)) for x in sites)
    if trees is None:
        kw = {} if bound is None else {"bound": bound}
        trees = enumerate_embedded_trees(law, step, max(times), **kw)
    total = 0.0
    for et, p in trees:
        prod = 1
        for n, x in zip(times, sites):
            prod *= et.site_populations(n).get(x, 0)
            if prod == 0:
                break
        total += p * prod
    return total


class EnumerationTable:
    """Per-prefix Fourier masses ``mu_n^(k)`` for a fixed wave-vector list.

    Used to evaluate ``sum_C P(C) prod_j mu_{n_j}^(k_j)`` for many queries.
    """

    def __init__(self, law, step, depth, kvecs, bound=None):
        kw = {} if bound is None else {"bound": bound}
        trees = enumerate_embedded_trees(law, step, depth, **kw)
        self.kvecs = [tuple(np.atleast_1d(k).astype(float)) for k in kvecs]
        self.depth = depth
        self.probs = np.array([p for _, p in trees])
        K = np.asarray(self.kvecs, dtype=float)
        F = np.zeros((len(trees), depth + 1, len(K)), dtype=complex)
        for t, (et, _) in enumerate(trees):
            for n in range(depth + 1):
                pts = [x for w, x in et.sites.items() if len(w) - 1 == n]
                if pts:
                    F[t, n] = np.exp(1j * (np.asarray(pts, float) @ K.T)).sum(axis=0)
        self.F = F
        self.trees = trees

    def tau(self, times, k_idx) -> complex:
        prod = np.ones(len(self.probs), dtype=complex)
        for n, j in zip(times, k_idx):
            prod = prod * self.F[:, n, j]
        return complex(np.dot(self.probs, prod))

    def rho(self, times, k_idx, zero_idx) -> complex:
        mbar = max(times)
        return self.tau((mbar,) + tuple(times), (zero_idx,) + tuple(k_idx))


# ---------------------------------------------------------------------------
# Scaling comparison
# ---------------------------------------------------------------------------


def scaled_query(step, consts, times, kvecs, m):
    """Integer times ``round(m t)`` and wave vectors ``k / sqrt(sigma^2 v m)``."""
    scale = math.sqrt(step.sigma_sq * consts.v * m)
    ns = tuple(int(round(m * t)) for t in times)
    ks = tuple(tuple(np.atleast_1d(k).astype(float) / scale) for k in kvecs)
    return ns, ks


def scaling_gap(law, step, consts, times, kvecs, m, tol=None, cache=None, limit=None):
    """Relative gap between rescaled ``rho^`` and ``m^{r-1} M^_inf``.

    ``limit`` may carry a precomputed ``MomentValue`` for ``M^_inf_t(k)``.
    """
    from .sbm import icsbm_moment

    l = len(times)
    ns, ks = scaled_query(step, consts, times, kvecs, m)
    rho = rho_fourier(law, step, ns, ks, cache).value
    if limit is None:
        limit = icsbm_moment(l, times, kvecs, tol=tol)
    target = m**l * limit.value
    return abs(rho / (consts.A**2 * consts.V) ** l - target) / target
