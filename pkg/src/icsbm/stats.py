"""Bootstrap standard errors for means and ratio estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import as_generator

DEFAULT_RESAMPLES = 1000
_CHUNK_CELLS = 4_000_000


@dataclass
class Estimate:
    value: float | np.ndarray
    se: float | np.ndarray
    n: int

    def ci(self, z=1.96):
        return self.value - z * self.se, self.value + z * self.se

    def to_json(self):
        conv = lambda x: x.tolist() if isinstance(x, np.ndarray) else float(x)
        return {"value": conv(self.value), "se": conv(self.se), "n": int(self.n)}


def _weight_chunks(n, B, rng):
    """Yield multinomial resampling weight matrices covering ``B`` resamples."""
    per = max(1, _CHUNK_CELLS // max(n, 1))
    done = 0
    p = np.full(n, 1.0 / n)
    while done < B:
        b = min(per, B - done)
        yield rng.multinomial(n, p, size=b).astype(float)
        done += b


def mean_estimate(X, rng=None, B=DEFAULT_RESAMPLES) -> Estimate:
    """Column means with bootstrap SE (plain ``std/sqrt(n)`` when ``B == 0``)."""
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    n = X.shape[0]
    mean = X.mean(axis=0)
    if B == 0 or n < 2:
        se = X.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(X.shape[1])
    else:
        rng = as_generator(rng)
        reps = np.vstack([W @ X / n for W in _weight_chunks(n, B, rng)])
        se = reps.std(axis=0, ddof=1)
    if squeeze:
        return Estimate(float(mean[0]), float(se[0]), n)
    return Estimate(mean, se, n)


def bootstrap_ratio(num, den, rng=None, B=DEFAULT_RESAMPLES) -> Estimate:
    """``sum(num) / sum(den)`` with bootstrap SE over sample rows."""
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    n = num.size
    value = num.sum() / den.sum()
    if B == 0:
        # delta method
        r = num - value * den
        se = math.sqrt(np.sum(r * r)) / den.sum()
        return Estimate(float(value), float(se), n)
    rng = as_generator(rng)
    reps = []
    for W in _weight_chunks(n, B, rng):
        d = W @ den
        with np.errstate(invalid="ignore", divide="ignore"):
            reps.append((W @ num) / d)
    reps = np.concatenate(reps)
    reps = reps[np.isfinite(reps)]
    return Estimate(float(value), float(reps.std(ddof=1)) if reps.size > 1 else 0.0, n)


def bootstrap_ratio_diff(f, wa, wb, rng=None, B=DEFAULT_RESAMPLES):
    """Two weighted means of ``f`` on the same rows, and the paired SE of their difference."""
    f, wa, wb = (np.asarray(x, float) for x in (f, wa, wb))
    n = f.size
    rng = as_generator(rng)
    va = (f * wa).sum() / wa.sum()
    vb = (f * wb).sum() / wb.sum()
    ra, rb = [], []
    for W in _weight_chunks(n, B, rng):
        with np.errstate(invalid="ignore", divide="ignore"):
            ra.append((W @ (f * wa)) / (W @ wa))
            rb.append((W @ (f * wb)) / (W @ wb))
    ra, rb = np.concatenate(ra), np.concatenate(rb)
    ok = np.isfinite(ra) & np.isfinite(rb)
    ra, rb = ra[ok], rb[ok]
    return (
        Estimate(float(va), float(ra.std(ddof=1)), n),
        Estimate(float(vb), float(rb.std(ddof=1)), n),
        float((ra - rb).std(ddof=1)),
    )
