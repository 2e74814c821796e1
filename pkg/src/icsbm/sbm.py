"""Fourier moment measures of the canonical measure of super-Brownian motion.

Orders ``l >= 2`` are evaluated from the first-branching-time recursion by
nested adaptive Gauss-Kronrod quadrature (``scipy.integrate.quad``).  Each
level splits its error budget between the outer rule and the inner calls,
using the a priori bound ``|M^(i)_t| <= M^(i)_{t..t}(0) = t^{i-1} i! / 2^{i-1}``.
"""

from __future__ import annotations

import math
import warnings
from itertools import combinations

import numpy as np
from scipy import integrate

from .errors import QuadratureError, ValidationError
from .moments import MomentValue

BASE_TOL = 1e-8
QUAD_LIMIT = 200


def default_tol(l: int) -> float:
    """``1e-8`` at ``l = 2``, relaxed tenfold per extra level."""
    return BASE_TOL * 10.0 ** max(l - 2, 0)


def sb_exp_moment(l: int, s: float) -> float:
    """``s^l 2^{-l} (l+1)!``, the moments of a size-biased exponential."""
    if l < 0 or s <= 0:
        raise ValidationError("need l >= 0 and s > 0", "sb_exp")
    return s**l * 2.0**-l * math.factorial(l + 1)


def _mass_bound(i: int, t: float) -> float:
    return t ** (i - 1) * math.factorial(i) / 2 ** (i - 1)


def _m1(t, k2, d):
    return math.exp(-k2 * t / (2 * d))


def _moment(times, K, d, tol):
    """Returns ``(value, error bound)`` for ``M^(l)_times(K)``; ``K`` has shape ``(l, d)``."""
    l = len(times)
    if l == 1:
        return _m1(times[0], float(K[0] @ K[0]), d), 0.0
    tmin = min(times)
    if tmin <= 0:
        return 0.0, 0.0
    kJ = K.sum(axis=0)
    kJ2 = float(kJ @ kJ)
    rest = list(range(1, l))
    splits = []
    for size in range(1, l):
        for I in combinations(rest, size):
            Ic = [j for j in range(l) if j not in I]
            splits.append((list(I), Ic))
    tbar = max(times)
    budget = sum(_mass_bound(len(I), tbar) + _mass_bound(len(Ic), tbar) for I, Ic in splits)
    inner_tol = tol / (4.0 * tmin * budget)
    inner_err = [0.0]
    times = np.asarray(times, dtype=float)

    def integrand(u):
        total, err = 0.0, 0.0
        for I, Ic in splits:
            a, ea = _moment(tuple(times[I] - u), K[I], d, inner_tol)
            b, eb = _moment(tuple(times[Ic] - u), K[Ic], d, inner_tol)
            total += a * b
            err += ea * abs(b) + eb * abs(a) + ea * eb
        inner_err[0] = max(inner_err[0], err)
        return _m1(u, kJ2, d) * total

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, qerr = integrate.quad(integrand, 0.0, tmin, epsabs=tol / 2, epsrel=0.0, limit=QUAD_LIMIT)
        except integrate.IntegrationWarning as w:
            raise QuadratureError(f"order {l}: {str(w).splitlines()[0]}") from None
    return val, qerr + tmin * inner_err[0]


def _prepare(l, times, kvecs):
    times = tuple(float(t) for t in np.atleast_1d(times))
    if l < 1 or len(times) != l:
        raise ValidationError(f"order l={l} needs {l} times", "mm.times")
    if any(t <= 0 or not math.isfinite(t) for t in times):
        raise ValidationError("times must be positive", "mm.times")
    K = np.asarray(kvecs, dtype=float)
    if K.ndim == 1:
        K = K.reshape(l, -1)
    if K.ndim != 2 or K.shape[0] != l:
        raise ValidationError(f"order l={l} needs {l} wave vectors", "mm.kvecs")
    return times, K


def sbm_moment(l: int, times, kvecs, tol=None) -> MomentValue:
    """``M^(l)_t(k)``; the reported error is an a posteriori bound."""
    times, K = _prepare(l, times, kvecs)
    if tol is None:
        tol = default_tol(l)
    if l == 1:
        return MomentValue(_m1(times[0], float(K[0] @ K[0]), K.shape[1]), 0.0, "closed form")
    val, err = _moment(times, K, K.shape[1], tol)
    if not err <= tol:
        raise QuadratureError(f"estimated error {err:.3g} exceeds tolerance {tol:.3g} at order {l}")
    return MomentValue(val, err, "quadrature")


def icsbm_moment(l: int, times, kvecs, tol=None) -> MomentValue:
    """``M^_inf^(l)_s(k) = M^(l+1)_{(max s, s)}(0, k)``."""
    times, K = _prepare(l, times, kvecs)
    full_t = (max(times),) + times
    full_k = np.vstack([np.zeros((1, K.shape[1])), K])
    if tol is None:
        tol = default_tol(l + 1)
    return sbm_moment(l + 1, full_t, full_k, tol)
