"""Offspring and step laws, family trees and their lattice embeddings.

Trees use the word representation: the root is the word ``(0,)``, the
children of a word ``w`` with ``xi`` offspring are ``w + (1,)``, ...,
``w + (xi,)``.  Two trees are equal iff their word sets are equal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import EnumerationBoundError, ResourceLimitError, ValidationError
from .rng import as_generator

TOL = 1e-12
DEFAULT_POPULATION_CAP = 10**7
DEFAULT_ENUMERATION_BOUND = 10**6

ROOT = (0,)


# ---------------------------------------------------------------------------
# Offspring laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OffspringLaw:
    """Critical offspring distribution on ``{0, ..., M_max}``.

    ``probs[m]`` is the probability of ``m`` children.  Construction fails
    unless the total mass and the mean are both 1 within ``1e-12``.
    """

    probs: tuple
    name: str = "custom"

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        object.__setattr__(self, "probs", p)
        if not p:
            raise ValidationError("empty offspring table", "offspring")
        if any(x < 0 or not math.isfinite(x) for x in p):
            raise ValidationError("probabilities must be finite and nonnegative", "offspring")
        total = math.fsum(p)
        if abs(total - 1.0) > TOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1", "offspring.normalization")
        mean = math.fsum(m * x for m, x in enumerate(p))
        if abs(mean - 1.0) > TOL:
            raise ValidationError(f"mean offspring {mean!r} != 1 (law is not critical)", "offspring.criticality")
        if self.sigma_p_sq <= 0:
            raise ValidationError("offspring variance must be positive", "offspring.variance")

    @classmethod
    def binary(cls):
        return cls((0.5, 0.0, 0.5), name="binary")

    @classmethod
    def from_pairs(cls, pairs, name="custom"):
        pairs = [(int(m), float(q)) for m, q in pairs]
        if any(m < 0 for m, _ in pairs):
            raise ValidationError("offspring counts must be >= 0", "offspring")
        probs = [0.0] * (max(m for m, _ in pairs) + 1)
        for m, q in pairs:
            probs[m] += q
        return cls(tuple(probs), name=name)

    @classmethod
    def poisson1(cls, m_max: int = 30):
        """Poisson(1) truncated at ``m_max``, renormalized and re-centred to mean 1.

        Re-centring moves mass between ``p_0`` and ``p_2``, which changes the
        mean by twice the moved mass and keeps the total fixed.
        """
        if m_max < 2:
            raise ValidationError("m_max must be >= 2", "offspring.m_max")
        raw = [math.exp(-1.0) / math.factorial(m) for m in range(m_max + 1)]
        z = math.fsum(raw)
        p = [x / z for x in raw]
        for _ in range(3):
            p[0] = 1.0 - math.fsum(p[1:])
            mean = math.fsum(m * x for m, x in enumerate(p))
            eps = (1.0 - mean) / 2.0
            p[0] -= eps
            p[2] += eps
        return cls(tuple(p), name=f"poisson1[{m_max}]")

    @property
    def m_max(self) -> int:
        return len(self.probs) - 1

    @property
    def mean(self) -> float:
        return math.fsum(m * x for m, x in enumerate(self.probs))

    @property
    def sigma_p_sq(self) -> float:
        return math.fsum(m * (m - 1) * x for m, x in enumerate(self.probs))

    def factorial_moment(self, j: int) -> float:
        """``f_j = sum_m m!/(m-j)! p_m``; zero for ``j > M_max``."""
        if j < 0:
            raise ValidationError("j must be >= 0", "j")
        return math.fsum(math.perm(m, j) * x for m, x in enumerate(self.probs) if m >= j)

    def pgf(self, s: float) -> float:
        return math.fsum(x * s**m for m, x in enumerate(self.probs))

    def survival_step(self, theta: float) -> float:
        """``1 - g(1 - theta)`` without cancellation for small ``theta``."""
        if theta <= 0.0:
            return 0.0
        if theta >= 1.0:
            return 1.0 - self.probs[0]
        lg = math.log1p(-theta)
        return -math.fsum(x * math.expm1(m * lg) for m, x in enumerate(self.probs) if m > 0 and x > 0)

    def zeta_probs(self) -> np.ndarray:
        """Law of the number of non-spine children of a spine node: ``(k+1) p_{k+1}``."""
        return np.array([(k + 1) * self.probs[k + 1] for k in range(self.m_max)])

    def spine_joint(self) -> dict:
        """``P(V = j, zeta = k) = p_{k+1}`` for ``1 <= j <= k+1``."""
        return {(j, k): self.probs[k + 1] for k in range(self.m_max) for j in range(1, k + 2) if self.probs[k + 1] > 0}

    def sample(self, rng, size):
        rng = as_generator(rng)
        return rng.choice(len(self.probs), size=size, p=np.asarray(self.probs))

    def to_config(self):
        return [[m, x] for m, x in enumerate(self.probs) if x > 0]


# ---------------------------------------------------------------------------
# Step laws
# ---------------------------------------------------------------------------


class StepLaw:
    """Finite-support step distribution ``D`` on ``Z^d``.

    Symmetry ``D(x) = D(-x)`` is required unless ``allow_asymmetric`` is set
    (only the oriented-percolation sampler accepts asymmetric tables).
    """

    def __init__(self, support, probs, name="custom", delta=0.5, allow_asymmetric=False):
        support = np.atleast_2d(np.asarray(support, dtype=np.int64))
        probs = np.asarray(probs, dtype=float)
        if support.shape[0] != probs.shape[0]:
            raise ValidationError("support and probabilities differ in length", "step")
        if np.any(probs < 0):
            raise ValidationError("negative step probability", "step")
        keep = probs > 0
        support, probs = support[keep], probs[keep]
        if support.shape[0] == 0:
            raise ValidationError("empty step support", "step")
        if len({tuple(x) for x in support}) != support.shape[0]:
            raise ValidationError("duplicate support points", "step")
        if abs(math.fsum(probs) - 1.0) > TOL:
            raise ValidationError(f"step probabilities sum to {math.fsum(probs)!r}", "step.normalization")
        if not 0.0 < delta < 1.0:
            raise ValidationError("delta must lie in (0, 1)", "step.delta")
        self.support = support
        self.probs = probs
        self.name = name
        self.delta = float(delta)
        self.d = support.shape[1]
        lookup = {tuple(x): q for x, q in zip(support.tolist(), probs)}
        self.symmetric = all(abs(lookup.get(tuple(-v for v in x), 0.0) - q) <= TOL for x, q in lookup.items())
        if not self.symmetric and not allow_asymmetric:
            raise ValidationError("step law must be symmetric, D(x) = D(-x)", "step.symmetry")
        if self.sigma_sq <= 0 and not allow_asymmetric:
            raise ValidationError("step variance must be positive", "step.variance")
        self._lookup = lookup
        self._uniform = bool(np.allclose(probs, probs[0], rtol=0, atol=1e-15))

    @classmethod
    def simple(cls, d: int = 1):
        e = np.eye(d, dtype=np.int64)
        return cls(np.vstack([e, -e]), np.full(2 * d, 1.0 / (2 * d)), name=f"simple[{d}]")

    @classmethod
    def spread_out(cls, d: int, L: int):
        """Uniform law on ``0 < ||x||_inf <= L``."""
        pts = np.array([x for x in itertools.product(range(-L, L + 1), repeat=d) if any(x)], dtype=np.int64)
        return cls(pts, np.full(len(pts), 1.0 / ((2 * L + 1) ** d - 1)), name=f"spread_out[{d},{L}]")

    @classmethod
    def from_pairs(cls, pairs, allow_asymmetric=False):
        pts = [tuple(int(v) for v in np.atleast_1d(x)) for x, _ in pairs]
        return cls(pts, [float(q) for _, q in pairs], allow_asymmetric=allow_asymmetric)

    @property
    def key(self):
        return (self.name, self.support.tobytes(), self.probs.tobytes())

    def __eq__(self, other):
        return isinstance(other, StepLaw) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"StepLaw({self.name}, d={self.d}, |support|={len(self.probs)})"

    def prob(self, x) -> float:
        return self._lookup.get(tuple(int(v) for v in x), 0.0)

    @property
    def sigma_sq(self) -> float:
        return float(np.dot(self.probs, np.sum(self.support.astype(float) ** 2, axis=1)))

    def moment(self, power: float) -> float:
        return float(np.dot(self.probs, np.linalg.norm(self.support, axis=1) ** power))

    @property
    def max_norm(self) -> int:
        return int(np.max(np.abs(self.support)))

    def fourier(self, k) -> float | np.ndarray:
        """``D^(k) = sum_x D(x) e^{ik.x}``; real (a cosine sum) for symmetric laws.

        Accepts ``(d,)`` or ``(..., d)``.
        """
        k = np.asarray(k, dtype=float)
        if k.shape[-1] != self.d:
            raise ValidationError(f"wave vector has dimension {k.shape[-1]}, expected {self.d}", "k")
        phases = k @ self.support.T.astype(float)
        if self.symmetric:
            out = np.cos(phases) @ self.probs
        else:
            out = np.exp(1j * phases) @ self.probs
        if np.ndim(out) == 0:
            return float(out) if self.symmetric else complex(out)
        return out

    def sample(self, rng, size) -> np.ndarray:
        rng = as_generator(rng)
        if self._uniform:
            idx = rng.integers(len(self.probs), size=size)
        else:
            idx = rng.choice(len(self.probs), size=size, p=self.probs)
        return self.support[idx]

    def to_config(self):
        if self.name.startswith("simple["):
            return "simple"
        if self.name.startswith("spread_out["):
            return f"spread_out({self.name.split(',')[1].rstrip(']')})"
        return [[x.tolist(), float(q)] for x, q in zip(self.support, self.probs)]


def step_fourier(step: StepLaw, k) -> float | complex:
    return step.fourier(k)


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


def generation(word) -> int:
    return len(word) - 1


@dataclass(frozen=True)
class Tree:
    """Family tree as a prefix-closed word set.

    ``depth_cap`` marks a truncated tree: nodes at that generation have an
    unrecorded number of offspring, and no deeper nodes exist.
    """

    words: frozenset
    depth_cap: int | None = None

    def __post_init__(self):
        words = frozenset(tuple(int(a) for a in w) for w in self.words)
        object.__setattr__(self, "words", words)
        if ROOT not in words:
            raise ValidationError("tree must contain the root word (0,)", "tree")
        for w in words:
            if w[0] != 0 or any(a < 1 for a in w[1:]):
                raise ValidationError(f"malformed word {w}", "tree")
            if len(w) > 1:
                if w[:-1] not in words:
                    raise ValidationError(f"word set is not prefix-closed at {w}", "tree")
                if w[-1] > 1 and w[:-1] + (w[-1] - 1,) not in words:
                    raise ValidationError(f"child indices have a gap at {w}", "tree")
            if self.depth_cap is not None and generation(w) > self.depth_cap:
                raise ValidationError(f"word {w} deeper than depth cap {self.depth_cap}", "tree")

    @classmethod
    def from_words(cls, words, depth_cap=None):
        return cls(frozenset(words), depth_cap)

    @classmethod
    def from_offspring(cls, counts, depth_cap=None):
        """Build from offspring counts listed in breadth-first order."""
        words, queue, it = [ROOT], [ROOT], iter(counts)
        while queue:
            w = queue.pop(0)
            if depth_cap is not None and generation(w) >= depth_cap:
                continue
            xi = next(it, 0)
            kids = [w + (j,) for j in range(1, xi + 1)]
            words.extend(kids)
            queue.extend(kids)
        return cls(frozenset(words), depth_cap)

    def children(self, word):
        out, j = [], 1
        while word + (j,) in self.words:
            out.append(word + (j,))
            j += 1
        return out

    def offspring(self, word) -> int | None:
        if self.depth_cap is not None and generation(word) >= self.depth_cap:
            return None
        return len(self.children(word))

    @property
    def height(self) -> int:
        return max(generation(w) for w in self.words)

    def generation_sizes(self, up_to=None):
        top = self.height if up_to is None else up_to
        sizes = [0] * (top + 1)
        for w in self.words:
            g = generation(w)
            if g <= top:
                sizes[g] += 1
        return sizes

    def restrict(self, m: int) -> "Tree":
        return Tree(frozenset(w for w in self.words if generation(w) <= m), m)

    def sorted_words(self):
        return sorted(self.words, key=lambda w: (len(w), w))


def tree_probability(law: OffspringLaw, tree: Tree) -> float:
    """Product of ``p_{xi_i}`` over nodes whose offspring is recorded."""
    out = 1.0
    for w in tree.words:
        xi = tree.offspring(w)
        if xi is None:
            continue
        if xi > law.m_max:
            raise ValidationError(f"node {w} has {xi} children, beyond M_max={law.m_max}", "tree")
        out *= law.probs[xi]
    return out


@dataclass(frozen=True, eq=False)
class EmbeddedTree:
    """A tree plus a site map ``phi`` with ``phi(root) = 0``."""

    tree: Tree
    sites: dict
    spine: tuple | None = None
    d: int = field(default=1)

    def __post_init__(self):
        sites = {tuple(w): tuple(int(v) for v in x) for w, x in self.sites.items()}
        object.__setattr__(self, "sites", sites)
        if set(sites) != set(self.tree.words):
            raise ValidationError("site map must cover exactly the tree's words", "sites")
        if any(v != 0 for v in sites[ROOT]):
            raise ValidationError("root must sit at the origin", "sites")
        object.__setattr__(self, "d", len(sites[ROOT]))

    def validate_steps(self, step: StepLaw):
        for w, x in self.sites.items():
            if len(w) > 1:
                parent = self.sites[w[:-1]]
                if step.prob(np.subtract(x, parent)) <= 0:
                    raise ValidationError(f"edge into {w} is not a step of the law", "sites")

    @property
    def populations(self):
        """``N_n`` for ``n = 0..height``."""
        return self.tree.generation_sizes()

    def site_populations(self, n: int) -> dict:
        """``mu_n(x)``: number of generation-``n`` particles at each site."""
        out = {}
        for w, x in self.sites.items():
            if generation(w) == n:
                out[x] = out.get(x, 0) + 1
        return out

    def fourier_mass(self, n: int, k) -> complex:
        """``mu_n^(k) = sum_x mu_n(x) exp(i k.x)``."""
        pts = [x for w, x in self.sites.items() if generation(w) == n]
        if not pts:
            return 0j
        return complex(np.sum(np.exp(1j * (np.asarray(pts, float) @ np.asarray(k, float)))))

    def restrict(self, m: int) -> "EmbeddedTree":
        t = self.tree.restrict(m)
        spine = None if self.spine is None else self.spine[: m + 1]
        return EmbeddedTree(t, {w: self.sites[w] for w in t.words}, spine)

    def key(self):
        """Identity of the cylinder: labelled word set plus site map."""
        return (self.tree.depth_cap, tuple(sorted(self.sites.items())))

    def to_json(self):
        words = self.tree.sorted_words()
        out = {
            "depth": self.tree.depth_cap,
            "words": [list(w) for w in words],
            "sites": [list(self.sites[w]) for w in words],
        }
        if self.spine is not None:
            out["spine"] = [list(w) for w in self.spine]
        return out

    @classmethod
    def from_json(cls, obj):
        words = [tuple(w) for w in obj["words"]]
        tree = Tree(frozenset(words), obj.get("depth"))
        spine = tuple(tuple(w) for w in obj["spine"]) if obj.get("spine") else None
        return cls(tree, dict(zip(words, (tuple(x) for x in obj["sites"]))), spine)


def embedded_probability(law: OffspringLaw, step: StepLaw, et: EmbeddedTree) -> float:
    """``P^brw((T, phi)_m = C)``: offspring factors times step factors."""
    out = tree_probability(law, et.tree)
    for w, x in et.sites.items():
        if len(w) > 1:
            out *= step.prob(np.subtract(x, et.sites[w[:-1]]))
    return out


def sample_embedded_tree(law, step, depth_cap, seed, population_cap=DEFAULT_POPULATION_CAP):
    """One branching random walk, truncated at generation ``depth_cap``."""
    if depth_cap < 0:
        raise ValidationError("depth_cap must be >= 0", "depth_cap")
    rng = as_generator(seed)
    words, sites = [ROOT], {ROOT: (0,) * step.d}
    frontier = [ROOT]
    for _ in range(depth_cap):
        if not frontier:
            break
        xi = law.sample(rng, len(frontier))
        total = int(xi.sum())
        if total > population_cap:
            raise ResourceLimitError(f"live population {total} exceeds cap {population_cap}")
        steps = step.sample(rng, total)
        nxt, c = [], 0
        for w, n_kids in zip(frontier, xi.tolist()):
            base = np.asarray(sites[w])
            for j in range(1, n_kids + 1):
                child = w + (j,)
                sites[child] = tuple((base + steps[c]).tolist())
                c += 1
                nxt.append(child)
        words.extend(nxt)
        frontier = nxt
    return EmbeddedTree(Tree(frozenset(words), depth_cap), sites)


def enumeration_size(law: OffspringLaw, step: StepLaw, m: int) -> int:
    size = 1
    K = len(step.probs)
    support = [x for x, q in enumerate(law.probs) if q > 0]
    for _ in range(m):
        size = sum((K * size) ** xi for xi in support)
    return size


def enumerate_embedded_trees(law, step, m, bound=DEFAULT_ENUMERATION_BOUND):
    """Every depth-``m`` prefix ``(T, phi)_m`` with its probability."""
    if m < 0:
        raise ValidationError("depth must be >= 0", "m")
    size = enumeration_size(law, step, m)
    if size > bound:
        raise EnumerationBoundError(f"{size} prefixes at depth {m} exceed the bound {bound}")
    out = []
    for words, sites, p in _subtrees(law, step, m):
        tree = Tree(frozenset(words), m)
        out.append((EmbeddedTree(tree, dict(zip(words, sites))), p))
    return out


def _subtrees(law, step, depth):
    """Rooted subtrees as (words, sites, prob), words relative to root ``(0,)``."""
    return _subtrees_cached(law, step, depth)


@lru_cache(maxsize=64)
def _subtrees_cached(law, step, depth):
    origin = (0,) * step.d
    if depth == 0:
        return [((ROOT,), (origin,), 1.0)]
    below = _subtrees_cached(law, step, depth - 1)
    moves = [(tuple(x), q) for x, q in zip(step.support.tolist(), step.probs)]
    branch = [(mv, sub) for mv in moves for sub in below]
    out = []
    for xi, pxi in enumerate(law.probs):
        if pxi <= 0:
            continue
        for combo in itertools.product(branch, repeat=xi):
            words, sites, p = [ROOT], [origin], pxi
            for j, ((dx, q), (sw, ss, sp)) in enumerate(combo, start=1):
                p *= q * sp
                for w, x in zip(sw, ss):
                    words.append((0, j) + w[1:])
                    sites.append(tuple(a + b for a, b in zip(x, dx)))
            out.append((tuple(words), tuple(sites), p))
    return out


# ---------------------------------------------------------------------------
# Survival probabilities
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    thetas: np.ndarray
    law: OffspringLaw

    def __getitem__(self, n):
        return self.thetas[n]

    def __len__(self):
        return len(self.thetas)

    def scaled(self) -> np.ndarray:
        """``n * theta_n``."""
        return np.arange(len(self.thetas)) * self.thetas


def survival_probability(law: OffspringLaw, n: int) -> SurvivalCurve:
    """``theta_k = P(generation k is nonempty)`` for ``k = 0..n``."""
    if n < 0:
        raise ValidationError("n must be >= 0", "n")
    return SurvivalCurve(_survival(law, n).copy(), law)


@lru_cache(maxsize=32)
def _survival(law, n):
    out = np.empty(n + 1)
    theta = 1.0
    out[0] = theta
    for k in range(1, n + 1):
        theta = law.survival_step(theta)
        out[k] = theta
    return out


def factorial_moment(law: OffspringLaw, j: int) -> float:
    return law.factorial_moment(j)


# ---------------------------------------------------------------------------
# Frontier (population-only) samplers
# ---------------------------------------------------------------------------


def sample_generation_sizes(law, n_samples, depth, rng, population_cap=DEFAULT_POPULATION_CAP):
    """Array ``(n_samples, depth + 1)`` of ``N_0..N_depth`` for independent BRWs."""
    rng = as_generator(rng)
    probs = np.asarray(law.probs)
    counts = np.arange(len(probs))
    out = np.zeros((n_samples, depth + 1), dtype=np.int64)
    cur = np.ones(n_samples, dtype=np.int64)
    out[:, 0] = cur
    for k in range(1, depth + 1):
        if cur.max(initial=0) > population_cap:
            raise ResourceLimitError(f"live population exceeds cap {population_cap}")
        cur = rng.multinomial(cur, probs) @ counts
        out[:, k] = cur
    return out
