"""Rescaling, moment comparisons and exponent fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rng import as_generator
from .stats import DEFAULT_RESAMPLES, _weight_chunks

log = logging.getLogger(__name__)

Z_BAND = 3.0


@dataclass
class RescaledMeasure:
    n: int
    t: float
    masses: dict

    @property
    def total_mass(self):
        return sum(self.masses.values())


def rescale(populations, n, t, sigma_sq):
    """``X_{n,t}``: mass ``mu_{floor(nt)}`` in cells of side ``sqrt(sigma^2 n)``, divided by ``n``.

    ``populations`` is a list of ``site -> count`` dicts indexed by generation.
    """
    g = math.floor(n * t + 1e-12)
    if g >= len(populations):
        raise ValidationError(f"generation {g} missing (have {len(populations)})", "populations")
    scale = math.sqrt(sigma_sq * n)
    masses = {}
    for x, c in populations[g].items():
        cell = tuple(math.floor(v / scale) for v in x)
        masses[cell] = masses.get(cell, 0.0) + c / n
    return RescaledMeasure(n, t, masses)


@dataclass
class MomentCheck:
    l: int
    mean: float
    se: float
    target: float
    limit: float

    @property
    def z(self):
        if self.se == 0:
            return 0.0 if self.mean == self.target else math.inf
        return (self.mean - self.target) / self.se

    @property
    def passed(self):
        return abs(self.z) <= Z_BAND

    def to_json(self):
        return {"l": self.l, "mean": self.mean, "se": self.se, "target": self.target, "limit": self.limit,
                "z": self.z, "pass": self.passed}


@dataclass
class SBExpReport:
    checks: list
    note: str

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_json(self):
        return {"checks": [c.to_json() for c in self.checks], "note": self.note, "pass": self.passed}


def sb_exp_limit(l, sigma_p_sq):
    """``(sigma_p^2)^l 2^{-l} (l+1)!``."""
    return sigma_p_sq**l * 2.0**-l * math.factorial(l + 1)


def sb_exp_test(samples, sigma_p_sq, orders=(1, 2, 3), targets=None, rng=None, B=DEFAULT_RESAMPLES):
    """Empirical moments of ``N_m / m`` against the size-biased exponential law.

    ``targets`` maps ``l`` to exact finite-``m`` values; without it the
    ``m -> infinity`` limit is the target.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 1000:
        raise ValidationError(f"need at least 1000 samples, got {x.size}", "samples")
    rng = as_generator(rng)
    X = np.column_stack([x**l for l in orders])
    n = x.size
    if np.all(x == x[0]):
        se = np.zeros(len(orders))
    else:
        reps = np.vstack([W @ X / n for W in _weight_chunks(n, B, rng)])
        se = reps.std(axis=0, ddof=1)
    checks = []
    for j, l in enumerate(orders):
        limit = sb_exp_limit(l, sigma_p_sq)
        target = limit if targets is None else float(targets[l])
        checks.append(MomentCheck(l, float(X[:, j].mean()), float(se[j]), target, limit))
    note = ("targets are exact finite-m values" if targets is not None
            else "targets are m -> infinity limits; finite-m bias of relative order 1/m is expected")
    return SBExpReport(checks, note)


@dataclass
class FitResult:
    slope: float
    se: float
    intercept: float
    radii: list
    residuals: list
    excluded: list = field(default_factory=list)

    def within(self, target, band):
        return abs(self.slope - target) <= band

    def to_json(self):
        return {"slope": self.slope, "se": self.se, "intercept": self.intercept, "radii": self.radii,
                "residuals": self.residuals, "excluded": self.excluded}


def _check_radii(R):
    if len(R) < 4:
        raise ValidationError("need at least 4 scale points", "fit.radii")
    if max(R) / min(R) < 4:
        raise ValidationError("scale points must span a factor of at least 4", "fit.radii")


def fit_exponent(radii, masses, se=None) -> FitResult:
    """Weighted least squares of ``log M`` on ``log R``; weights ``(M / se)^2``."""
    R = np.asarray(radii, dtype=float)
    M = np.asarray(masses, dtype=float)
    S = None if se is None else np.asarray(se, dtype=float)
    keep = M > 0
    excluded = R[~keep].tolist()
    if excluded:
        log.warning("excluding nonpositive mass estimates at R=%s", excluded)
    R, M = R[keep], M[keep]
    if S is not None:
        S = S[keep]
    _check_radii(R)
    x, y = np.log(R), np.log(M)
    w = np.ones_like(x) if S is None or np.any(S <= 0) else (M / S) ** 2
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    if S is None or np.any(S <= 0):
        dof = max(len(x) - 2, 1)
        s2 = float(resid @ resid) / dof
        se_slope = math.sqrt(s2 * cov[1, 1])
    else:
        se_slope = math.sqrt(cov[1, 1])
    se_slope = max(se_slope, np.finfo(float).eps)
    return FitResult(float(beta[1]), se_slope, float(beta[0]), R.tolist(), resid.tolist(), excluded)


def fit_exponent_samples(radii, rows, rng=None, B=DEFAULT_RESAMPLES) -> FitResult:
    """Fit on per-sample rows ``rows[i, j] = M_i(R_j)``; slope SE by bootstrap over samples.

    Rows for different ``R`` come from the same samples, so the bootstrap
    keeps their correlation.
    """
    rows = np.asarray(rows, dtype=float)
    R = np.asarray(radii, dtype=float)
    _check_radii(R)
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    base = fit_exponent(R, mean, se)
    rng = as_generator(rng)
    n = rows.shape[0]
    x = np.log(R)
    xc = x - x.mean()
    slopes = []
    for W in _weight_chunks(n, B, rng):
        m = W @ rows / n
        with np.errstate(divide="ignore"):
            y = np.log(m)
        slopes.append((y - y.mean(axis=1, keepdims=True)) @ xc / (xc @ xc))
    slopes = np.concatenate(slopes)
    slopes = slopes[np.isfinite(slopes)]
    return FitResult(base.slope, max(float(slopes.std(ddof=1)), np.finfo(float).eps), base.intercept,
                     base.radii, base.residuals, base.excluded)


@dataclass
class ComparisonReport:
    z: list
    amplitude: float
    passed: bool
    gaps: list

    def to_json(self):
        return {"z": self.z, "amplitude": self.amplitude, "pass": self.passed, "relative_gaps": self.gaps}


def compare_to_moments(estimates, targets, fit_amplitude=False, band=Z_BAND) -> ComparisonReport:
    """z-scores of Monte Carlo (or exact) estimates against targets.

    ``estimates`` is a list of ``(value, se)``.  With ``fit_amplitude`` a
    single factor ``c`` minimising ``sum ((v - c t) / se)^2`` is fitted first.
    """
    vals = np.array([float(v) for v, _ in estimates])
    ses = np.array([float(s) for _, s in estimates])
    tg = np.asarray(targets, dtype=float)
    if vals.shape != tg.shape:
        raise ValidationError("estimates and targets differ in length", "compare")
    c = 1.0
    if fit_amplitude:
        if np.any(ses <= 0):
            raise ValidationError("amplitude fit needs positive standard errors", "compare.se")
        c = float(np.sum(vals * tg / ses**2) / np.sum(tg**2 / ses**2))
    diff = vals - c * tg
    z = []
    for dv, s in zip(diff, ses):
        if s > 0:
            z.append(float(dv / s))
        elif abs(dv) <= 1e-12 * max(1.0, abs(c)):
            z.append(0.0)
        else:
            raise ValidationError("degenerate variance: zero SE with nonzero gap", "compare.se")
    gaps = [float(abs(dv) / abs(c * t)) if t != 0 else float(abs(dv)) for dv, t in zip(diff, tg)]
    return ComparisonReport(z, c, all(abs(x) <= band for x in z), gaps)
