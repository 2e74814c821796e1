"""Incipient infinite branching random walk: exact cylinder probabilities and spine samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .branching import (
    DEFAULT_POPULATION_CAP,
    ROOT,
    EmbeddedTree,
    OffspringLaw,
    StepLaw,
    Tree,
    embedded_probability,
    generation,
    survival_probability,
)
from .errors import ResourceLimitError, ValidationError
from .rng import as_generator


@dataclass(frozen=True)
class SpineStep:
    V: int
    zeta: int

    def __post_init__(self):
        if not 1 <= self.V <= self.zeta + 1:
            raise ValidationError(f"spine index V={self.V} outside 1..{self.zeta + 1}", "spine")


@dataclass(frozen=True, eq=False)
class CylinderEvent:
    """The event ``(T, phi)_m = C`` for a depth-``m`` prefix ``C``."""

    prefix: EmbeddedTree

    def __post_init__(self):
        if self.prefix.tree.depth_cap is None:
            raise ValidationError("cylinder prefix needs an explicit depth", "cylinder.depth")

    @property
    def m(self) -> int:
        return self.prefix.tree.depth_cap

    @property
    def N_m(self) -> int:
        return sum(1 for w in self.prefix.tree.words if generation(w) == self.m)

    def to_json(self):
        return self.prefix.to_json()

    @classmethod
    def from_json(cls, obj):
        if "depth" not in obj or obj["depth"] is None:
            raise ValidationError("missing required field", "cylinder.depth")
        return cls(EmbeddedTree.from_json(obj))


def _as_cylinder(C):
    return C if isinstance(C, CylinderEvent) else CylinderEvent(C)


def iibrw_probability(law: OffspringLaw, step: StepLaw, C) -> float:
    """``P_inf(C) = N_m(C) P^brw(C)``."""
    C = _as_cylinder(C)
    n = C.N_m
    return 0.0 if n == 0 else n * embedded_probability(law, step, C.prefix)


def survival_given(theta: float, N: int) -> float:
    """``1 - (1 - theta)^N`` without cancellation."""
    if N == 0 or theta <= 0:
        return 0.0
    if theta >= 1:
        return 1.0
    return -math.expm1(N * math.log1p(-theta))


def finite_n_Q(law: OffspringLaw, step: StepLaw, C, n: int, curve=None) -> float:
    """``Q_n(C) = P(C) (1 - (1 - theta_{n-m})^{N_m}) / theta_n``."""
    C = _as_cylinder(C)
    if n < C.m:
        raise ValidationError(f"n={n} must be >= m={C.m}", "n")
    if curve is None or len(curve) <= n:
        curve = survival_probability(law, n)
    p = embedded_probability(law, step, C.prefix)
    return p * survival_given(curve[n - C.m], C.N_m) / curve[n]


def sample_spine_steps(law: OffspringLaw, size, rng):
    """Arrays ``(V, zeta)`` with ``P(V=j, zeta=k) = p_{k+1}``."""
    rng = as_generator(rng)
    zp = law.zeta_probs()
    zeta = rng.choice(len(zp), size=size, p=zp)
    V = 1 + np.floor(rng.random(size) * (zeta + 1)).astype(np.int64)
    return V, zeta


def sample_iibrw(law, step, m, seed, population_cap=DEFAULT_POPULATION_CAP):
    """Spine construction to horizon ``m``, with labelled words and a spine marker."""
    if m < 0:
        raise ValidationError("horizon must be >= 0", "horizon")
    rng = as_generator(seed)
    sites = {ROOT: (0,) * step.d}
    spine = [ROOT]
    frontier = [ROOT]
    for _ in range(m):
        s = spine[-1]
        V, zeta = sample_spine_steps(law, 1, rng)
        others = [w for w in frontier if w != s]
        xi = law.sample(rng, len(others)) if others else np.zeros(0, dtype=np.int64)
        counts = dict(zip(others, xi.tolist()))
        counts[s] = int(zeta[0]) + 1
        total = sum(counts.values())
        if total > population_cap:
            raise ResourceLimitError(f"live population {total} exceeds cap {population_cap}")
        steps = step.sample(rng, total)
        nxt, c = [], 0
        for w in frontier:
            base = np.asarray(sites[w])
            for j in range(1, counts[w] + 1):
                child = w + (j,)
                sites[child] = tuple((base + steps[c]).tolist())
                c += 1
                nxt.append(child)
        spine.append(s + (int(V[0]),))
        frontier = nxt
    tree = Tree(frozenset(sites), m)
    return EmbeddedTree(tree, sites, tuple(spine))


def sample_iibrw_spatial(law, step, m, seed, population_cap=DEFAULT_POPULATION_CAP):
    """Site populations ``mu_0..mu_m``: one walk path with side BRWs hung off it.

    Returns a list of dicts ``site -> count``.
    """
    if m < 0:
        raise ValidationError("horizon must be >= 0", "horizon")
    rng = as_generator(seed)
    spine = np.zeros(step.d, dtype=np.int64)
    side = np.zeros((0, step.d), dtype=np.int64)
    out = [_count_sites(spine[None, :])]
    for _ in range(m):
        xi = law.sample(rng, side.shape[0])
        _, zeta = sample_spine_steps(law, 1, rng)
        parents = np.repeat(side, xi, axis=0)
        kids = np.vstack([parents, np.repeat(spine[None, :], int(zeta[0]), axis=0)])
        if kids.shape[0] > population_cap:
            raise ResourceLimitError(f"live population {kids.shape[0]} exceeds cap {population_cap}")
        side = kids + step.sample(rng, kids.shape[0])
        spine = spine + step.sample(rng, 1)[0]
        out.append(_count_sites(np.vstack([side, spine[None, :]])))
    return out


def _count_sites(pts):
    uniq, cnt = np.unique(pts, axis=0, return_counts=True)
    return {tuple(x): int(c) for x, c in zip(uniq.tolist(), cnt)}


# ---------------------------------------------------------------------------
# Vectorised samplers across many independent samples
# ---------------------------------------------------------------------------


def offspring_totals(law, counts, rng):
    """Total offspring of ``counts[i]`` independent parents, for each ``i``."""
    probs = np.asarray(law.probs)
    support = np.flatnonzero(probs)
    if support.size == 2 and support[0] == 0:
        # two-point law {0, a}: a * Binomial
        a = int(support[1])
        return a * rng.binomial(counts, probs[a])
    return rng.multinomial(counts, probs) @ np.arange(len(probs))


def sample_iibrw_populations(law, horizon, n_samples, rng, population_cap=DEFAULT_POPULATION_CAP):
    """``N_0..N_horizon`` under the spine construction, shape ``(n_samples, horizon + 1)``."""
    rng = as_generator(rng)
    zp = law.zeta_probs()
    out = np.empty((n_samples, horizon + 1), dtype=np.int64)
    side = np.zeros(n_samples, dtype=np.int64)
    out[:, 0] = 1
    for k in range(1, horizon + 1):
        zeta = rng.choice(len(zp), size=n_samples, p=zp)
        side = offspring_totals(law, side, rng) + zeta
        if side.max(initial=0) >= population_cap:
            raise ResourceLimitError(f"live population exceeds cap {population_cap}")
        out[:, k] = side + 1
    return out


def sample_iibrw_ball_mass(law, step, radii, horizon, n_samples, rng, population_cap=DEFAULT_POPULATION_CAP):
    """Per-sample ``M(R) = sum_{n <= horizon} mu_n(|x| <= R)`` (Euclidean ball).

    All samples of a call are advanced together; returns ``(n_samples, len(radii))``.
    """
    rng = as_generator(rng)
    r2 = np.asarray(radii, dtype=np.int64) ** 2
    d = step.d
    zp = law.zeta_probs()
    probs = np.asarray(law.probs)
    out = np.zeros((n_samples, len(r2)), dtype=np.int64)
    # row 0 of each sample's particles is the spine
    spine = np.zeros((n_samples, d), dtype=np.int64)
    pos = np.zeros((0, d), dtype=np.int64)
    owner = np.zeros(0, dtype=np.int64)
    out += 1  # generation 0: the origin
    ids = np.arange(n_samples)
    for _ in range(horizon):
        if pos.shape[0]:
            xi = rng.choice(len(probs), size=pos.shape[0], p=probs)
            pos = np.repeat(pos, xi, axis=0)
            owner = np.repeat(owner, xi)
        zeta = rng.choice(len(zp), size=n_samples, p=zp)
        pos = np.vstack([pos, np.repeat(spine, zeta, axis=0)])
        owner = np.concatenate([owner, np.repeat(ids, zeta)])
        if pos.shape[0] > population_cap:
            raise ResourceLimitError(f"live population {pos.shape[0]} exceeds cap {population_cap}")
        pos += step.sample(rng, pos.shape[0])
        spine += step.sample(rng, n_samples)
        dist = np.einsum("ij,ij->i", pos, pos)
        dsp = np.einsum("ij,ij->i", spine, spine)
        for j, rr in enumerate(r2):
            inside = dist <= rr
            out[:, j] += np.bincount(owner[inside], minlength=n_samples) + (dsp <= rr)
    return out


def walk_ball_occupation(step, radii, horizon, n_walks, rng, weights=None):
    """Per-walk ``sum_n w_n 1{|S_n| <= R}`` for independent step-law walks."""
    rng = as_generator(rng)
    r2 = np.asarray(radii, dtype=np.int64) ** 2
    w = np.ones(horizon + 1) if weights is None else np.asarray(weights, dtype=float)
    pos = np.zeros((n_walks, step.d), dtype=np.int64)
    out = np.tile(w[0], (n_walks, len(r2)))
    for n in range(1, horizon + 1):
        pos += step.sample(rng, n_walks)
        dist = np.einsum("ij,ij->i", pos, pos)
        out += w[n] * (dist[:, None] <= r2[None, :])
    return out


def expected_ball_mass_identity(law, step, radii, horizon, n_walks, rng):
    """Samples whose mean is ``E_inf[M(R)]``, via ``E_inf[mu_n] = (1 + sigma_p^2 n) D^{*n}``."""
    weights = 1.0 + law.sigma_p_sq * np.arange(horizon + 1)
    return walk_ball_occupation(step, radii, horizon, n_walks, rng, weights)
