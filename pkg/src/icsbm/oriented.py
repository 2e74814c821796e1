"""Spread-out oriented percolation on Z^d x Z_+ and its incipient infinite cluster.

Clusters grow generation by generation.  Bonds with the same occupation
probability form a group; for a frontier site the number of occupied bonds
in a group of size K is Binomial(K, q) and the targets are a uniform subset
of that size.  All samples of a block grow together in flat arrays.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from networkx.algorithms.flow import edmonds_karp

from .errors import ResourceLimitError, ValidationError, ZeroEffectiveSampleError
from .rng import BLOCK_SIZE, map_blocks, stream
from .stats import Estimate, bootstrap_ratio, bootstrap_ratio_diff, mean_estimate

DEFAULT_FRONTIER_CAP = 10**6


@dataclass(frozen=True)
class OPConfig:
    """Oriented percolation parameters.

    ``kind`` is ``"spread_out"`` (bond (x,n)->(y,n+1) occupied with
    probability ``p D(y-x)``, ``D`` uniform on ``0 < |y-x|_inf <= L``),
    ``"table"`` (explicit ``(offset, D)`` pairs, scaled by ``p``) or
    ``"contact"`` (``p(0) = 1 - eps``, ``p(x) = lam eps D(x)``).
    """

    d: int = 5
    L: int = 3
    p: float = 1.0
    kind: str = "spread_out"
    table: tuple | None = None
    lam: float | None = None
    eps: float | None = None
    p_c: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("d must be >= 1", "op.d")
        if self.kind not in ("spread_out", "table", "contact"):
            raise ValidationError(f"unknown kind {self.kind!r}", "op.kind")
        if self.kind == "table":
            if not self.table:
                raise ValidationError("table kind needs offset pairs", "op.table")
            object.__setattr__(
                self, "table", tuple((tuple(int(c) for c in np.atleast_1d(x)), float(q)) for x, q in self.table)
            )
            if any(len(x) != self.d for x, _ in self.table):
                raise ValidationError("table offsets must have dimension d", "op.table")
            if abs(math.fsum(q for _, q in self.table) - 1.0) > 1e-12:
                raise ValidationError("table probabilities must sum to 1", "op.table")
        elif self.L < 1:
            raise ValidationError("L must be >= 1", "op.L")
        if self.kind == "contact":
            if self.lam is None or self.eps is None:
                raise ValidationError("contact kind needs lam and eps", "op.contact")
            if not 0 < self.eps <= 1 or self.lam < 0:
                raise ValidationError("need 0 < eps <= 1 and lam >= 0", "op.contact")
        elif self.p < 0:
            raise ValidationError("p must be >= 0", "op.p")
        offsets, q = self.bonds()
        if q.size and q.max() > 1 + 1e-12:
            raise ValidationError(f"bond probability {q.max():.4g} exceeds 1", "op.p")

    @classmethod
    def contact(cls, d, L, lam, eps):
        return cls(d=d, L=L, p=lam, kind="contact", lam=lam, eps=eps)

    def with_p(self, p):
        kw = dict(self.__dict__)
        kw["p"] = p
        if self.kind == "contact":
            kw["lam"] = p
        return OPConfig(**kw)

    @property
    def box_size(self) -> int:
        return (2 * self.L + 1) ** self.d - 1

    def box(self):
        return np.array([x for x in itertools.product(range(-self.L, self.L + 1), repeat=self.d) if any(x)], dtype=np.int64)

    def bonds(self):
        """All offsets with their occupation probabilities."""
        if self.kind == "table":
            off = np.array([x for x, _ in self.table], dtype=np.int64)
            q = self.p * np.array([w for _, w in self.table])
        elif self.kind == "spread_out":
            off = self.box()
            q = np.full(len(off), self.p / self.box_size)
        else:
            box = self.box()
            off = np.vstack([np.zeros((1, self.d), dtype=np.int64), box])
            q = np.concatenate([[1.0 - self.eps], np.full(len(box), self.lam * self.eps / self.box_size)])
        keep = q > 0
        return off[keep], q[keep]

    def groups(self):
        """Offsets grouped by equal probability: list of ``(offsets, q)``."""
        off, q = self.bonds()
        out = []
        for val in np.unique(q):
            sel = q == val
            out.append((off[sel], float(val)))
        return out

    @property
    def max_range(self) -> int:
        off, _ = self.bonds()
        return int(np.abs(off).max()) if off.size else 0

    @property
    def sigma_sq(self) -> float:
        """Variance of the normalised bond distribution."""
        off, q = self.bonds()
        return float(q @ (off.astype(float) ** 2).sum(axis=1) / q.sum()) if q.size else 0.0

    def to_config(self):
        out = {"d": self.d, "L": self.L, "p": self.p, "kind": self.kind}
        if self.table:
            out["table"] = [[list(x), q] for x, q in self.table]
        if self.kind == "contact":
            out.update(lam=self.lam, eps=self.eps)
        if self.p_c is not None:
            out["p_c"] = self.p_c
        return out


# ---------------------------------------------------------------------------
# Cluster containers
# ---------------------------------------------------------------------------


@dataclass
class ClusterSample:
    """Generation-indexed occupied sites of ``C(0,0)`` up to a horizon."""

    generations: list
    bonds: list | None = None

    def __post_init__(self):
        g0 = self.generations[0]
        if g0.shape[0] != 1 or np.any(g0 != 0):
            raise ValidationError("generation 0 must be the origin", "cluster")

    @property
    def horizon(self):
        return len(self.generations) - 1

    @property
    def populations(self):
        return [g.shape[0] for g in self.generations]

    @property
    def survival(self):
        return [g.shape[0] > 0 for g in self.generations]

    @property
    def N_n(self):
        return self.generations[-1].shape[0]

    @property
    def size(self):
        return sum(self.populations)

    def ball_mass(self, R):
        return ball_mass(self, R)


def ball_mass(cluster: ClusterSample, R) -> int:
    """Number of cluster points ``(y, m)`` with ``|y| <= R``."""
    r2 = R * R
    return int(sum(np.count_nonzero(np.einsum("ij,ij->i", g, g) <= r2) for g in cluster.generations))


@dataclass
class ClusterBatch:
    """Many clusters in flat arrays: ``gens[k] = (owner, coords)`` sorted by owner."""

    n_samples: int
    gens: list
    bonds: list | None = None
    extinct_at: np.ndarray | None = field(default=None)

    @property
    def horizon(self):
        return len(self.gens) - 1

    def populations(self) -> np.ndarray:
        out = np.zeros((self.n_samples, len(self.gens)), dtype=np.int64)
        for k, (owner, _) in enumerate(self.gens):
            out[:, k] = np.bincount(owner, minlength=self.n_samples)
        return out

    def ball_mass(self, radii, up_to=None) -> np.ndarray:
        r2 = np.asarray(radii, dtype=np.int64) ** 2
        top = self.horizon if up_to is None else up_to
        out = np.zeros((self.n_samples, len(r2)), dtype=np.int64)
        for owner, coords in self.gens[: top + 1]:
            dist = np.einsum("ij,ij->i", coords, coords)
            for j, rr in enumerate(r2):
                out[:, j] += np.bincount(owner[dist <= rr], minlength=self.n_samples)
        return out

    def phase(self, n, k) -> np.ndarray:
        """Per-sample ``sum_x mu_n(x) exp(i k.x)``."""
        owner, coords = self.gens[n]
        ph = np.exp(1j * (coords @ np.asarray(k, dtype=float)))
        return np.bincount(owner, weights=ph.real, minlength=self.n_samples) + 1j * np.bincount(
            owner, weights=ph.imag, minlength=self.n_samples
        )

    def sample(self, i) -> ClusterSample:
        gens, index = [], []
        for owner, coords in self.gens:
            lo, hi = np.searchsorted(owner, [i, i + 1])
            gens.append(coords[lo:hi])
            index.append(lo)
        bonds = None
        if self.bonds is not None:
            bonds = []
            for k, (src, dst) in enumerate(self.bonds):
                sel = self.gens[k][0][src] == i
                bonds.append((src[sel] - index[k], dst[sel] - index[k + 1]))
        return ClusterSample(gens, bonds)


def _distinct_offsets(rng, src, K):
    """Offset indices in ``0..K-1``, distinct among bonds sharing a source."""
    idx = rng.integers(K, size=src.size)
    while True:
        key = src * K + idx
        order = np.argsort(key, kind="stable")
        sk = key[order]
        dup = np.zeros(src.size, dtype=bool)
        dup[order[1:]] = sk[1:] == sk[:-1]
        n_dup = int(dup.sum())
        if not n_dup:
            return idx
        idx[dup] = rng.integers(K, size=n_dup)


def _site_keys(owner, coords, shift, base):
    key = owner.astype(np.int64)
    for c in range(coords.shape[1] - 1, -1, -1):
        key = key * base + (coords[:, c] + shift)
    return key


def grow_clusters(cfg: OPConfig, horizon, n_samples, rng, record_bonds=False, frontier_cap=DEFAULT_FRONTIER_CAP,
                  stop_when_extinct=False):
    """Grow ``n_samples`` independent clusters for ``horizon`` generations."""
    groups = cfg.groups()
    d = cfg.d
    shift = max(horizon, 1) * max(cfg.max_range, 1)
    base = 2 * shift + 1
    use_keys = math.log2(max(n_samples, 1)) + d * math.log2(base) < 62
    owner = np.arange(n_samples, dtype=np.int64)
    coords = np.zeros((n_samples, d), dtype=np.int64)
    gens = [(owner, coords)]
    bonds = [] if record_bonds else None
    for _ in range(horizon):
        if owner.size == 0:
            if stop_when_extinct:
                break
            gens.append((owner, coords))
            if record_bonds:
                bonds.append((np.zeros(0, np.int64), np.zeros(0, np.int64)))
            continue
        srcs, kids = [], []
        for off, q in groups:
            K = off.shape[0]
            if q >= 1.0:
                src = np.repeat(np.arange(owner.size), K)
                idx = np.tile(np.arange(K), owner.size)
            else:
                cnt = rng.binomial(K, q, size=owner.size)
                src = np.repeat(np.arange(owner.size), cnt)
                idx = _distinct_offsets(rng, src, K)
            srcs.append(src)
            kids.append(coords[src] + off[idx])
        src = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
        kid = np.vstack(kids) if kids else np.zeros((0, d), np.int64)
        kid_owner = owner[src]
        if use_keys:
            keys = _site_keys(kid_owner, kid, shift, base)
            _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        else:
            stacked = np.column_stack([kid_owner, kid])
            _, first, inv = np.unique(stacked, axis=0, return_index=True, return_inverse=True)
        inv = inv.reshape(-1)
        new_owner = kid_owner[first]
        new_coords = kid[first]
        if new_owner.size:
            top = np.bincount(new_owner).max()
            if top > frontier_cap:
                raise ResourceLimitError(f"frontier of {top} sites exceeds cap {frontier_cap}")
        if record_bonds:
            bonds.append((src, inv))
        owner, coords = new_owner, new_coords
        gens.append((owner, coords))
    return ClusterBatch(n_samples, gens, bonds)


def sample_cluster(cfg: OPConfig, n, seed, record_bonds=False, frontier_cap=DEFAULT_FRONTIER_CAP) -> ClusterSample:
    batch = grow_clusters(cfg, n, 1, stream(seed, "op.cluster"), record_bonds, frontier_cap)
    return batch.sample(0)


def _batched(cfg, n, samples, seed, tag, fn, workers=1, record_bonds=False, frontier_cap=DEFAULT_FRONTIER_CAP):
    """Apply ``fn(batch)`` per block of samples and stack the per-sample rows."""

    def run(rng, size):
        return fn(grow_clusters(cfg, n, size, rng, record_bonds, frontier_cap))

    parts = map_blocks(run, samples, seed, tag, workers=workers, block_size=BLOCK_SIZE)
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


@dataclass
class ThetaCurve:
    theta: np.ndarray
    se: np.ndarray
    samples: int

    @property
    def scaled(self):
        k = np.arange(len(self.theta))
        return k * self.theta

    def ci(self, z=1.96):
        return self.theta - z * self.se, self.theta + z * self.se

    def plateau_drift(self, lo, hi):
        """Relative spread ``(max - min) / mean`` of ``k theta_k`` over ``[lo, hi]``."""
        seg = self.scaled[lo: hi + 1]
        return float((seg.max() - seg.min()) / seg.mean()) if seg.mean() > 0 else math.inf

    def to_rows(self):
        return [
            {"k": k, "theta": float(t), "se": float(s), "k_theta": float(k * t)}
            for k, (t, s) in enumerate(zip(self.theta, self.se))
        ]


def estimate_theta(cfg, n, samples, seed, workers=1, frontier_cap=DEFAULT_FRONTIER_CAP, bootstrap=1000) -> ThetaCurve:
    """Survival curve ``P(S_k)`` for ``k <= n``; SE by bootstrap."""
    alive = _batched(cfg, n, samples, seed, "op.theta", lambda b: b.populations() > 0, workers,
                     frontier_cap=frontier_cap).astype(float)
    est = mean_estimate(alive, stream(seed, "op.theta.boot"), bootstrap)
    return ThetaCurve(est.value, est.se, samples)


def theta_drift(curve: ThetaCurve, n):
    """Ratio ``n theta_n / ((n/2) theta_{n/2}) - 1``."""
    h = n // 2
    a = h * curve.theta[h]
    return (n * curve.theta[n]) / a - 1.0 if a > 0 else -1.0


def estimate_pc(cfg, n, samples, seed, lo=0.8, hi=1.3, iters=12, workers=1):
    """Bisection on ``p`` for zero drift of ``k theta_k`` between ``n/2`` and ``n``.

    All evaluations reuse one random stream (common random numbers).
    Returns ``(p_hat, history)``.
    """
    history = []
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        curve = estimate_theta(cfg.with_p(mid), n, samples, seed, workers, bootstrap=0)
        drift = theta_drift(curve, n)
        history.append((mid, drift))
        if drift > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), history


def _weights(batch, n, mode):
    N = np.bincount(batch.gens[n][0], minlength=batch.n_samples).astype(float)
    if mode == "size-biased":
        return N
    if mode == "conditioned":
        return (N > 0).astype(float)
    raise ValidationError(f"unknown mode {mode!r}", "mode")


def iic_estimate(cfg, statistic, n, mode, samples, seed, workers=1, bootstrap=1000) -> Estimate:
    """IIC-weighted mean of ``statistic(batch) -> per-sample values``.

    ``size-biased`` weights by ``N_n``; ``conditioned`` by ``1{S_n}``.
    """
    if mode not in ("size-biased", "conditioned"):
        raise ValidationError(f"unknown mode {mode!r}", "mode")

    def fn(batch):
        w = _weights(batch, n, mode)
        return np.column_stack([w * np.asarray(statistic(batch), float), w])

    rows = _batched(cfg, n, samples, seed, "op.iic", fn, workers)
    if rows[:, 1].sum() == 0:
        raise ZeroEffectiveSampleError(f"no sample has positive weight in mode {mode!r}")
    return bootstrap_ratio(rows[:, 0], rows[:, 1], stream(seed, "op.iic.boot"), bootstrap)


@dataclass
class ModeComparison:
    name: str
    size_biased: Estimate
    conditioned: Estimate
    diff: float
    diff_se: float
    combined_se: float

    @property
    def z(self):
        return self.diff / self.diff_se if self.diff_se > 0 else (0.0 if self.diff == 0 else math.inf)

    def passed(self, k=3.0):
        return abs(self.diff) <= k * self.diff_se

    def to_json(self):
        return {
            "statistic": self.name,
            "size_biased": self.size_biased.to_json(),
            "conditioned": self.conditioned.to_json(),
            "diff": self.diff,
            "diff_se_paired": self.diff_se,
            "combined_se": self.combined_se,
            "z": self.z,
        }


def iic_compare(cfg, statistics, n, samples, seed, workers=1, bootstrap=1000):
    """Both IIC modes from the same clusters; paired bootstrap SE of the difference."""
    names = list(statistics)

    def fn(batch):
        N = np.bincount(batch.gens[n][0], minlength=batch.n_samples).astype(float)
        cols = [N, (N > 0).astype(float)]
        for name in names:
            cols.append(np.asarray(statistics[name](batch), float))
        return np.column_stack(cols)

    rows = _batched(cfg, n, samples, seed, "op.iic", fn, workers)
    wa, wb = rows[:, 0], rows[:, 1]
    if wb.sum() == 0:
        raise ZeroEffectiveSampleError("no sample survives to generation n")
    out = []
    for j, name in enumerate(names):
        f = rows[:, 2 + j]
        ea, eb, dse = bootstrap_ratio_diff(f, wa, wb, stream(seed, "op.iic.boot", j), bootstrap)
        out.append(ModeComparison(name, ea, eb, ea.value - eb.value, dse, math.hypot(ea.se, eb.se)))
    return out


def default_cylinder_statistics(m=2, R=3):
    """Bounded statistics of the cluster up to generation ``m``."""
    return {
        "N_1": lambda b: np.minimum(np.bincount(b.gens[1][0], minlength=b.n_samples), 50),
        f"N_{m}>=2": lambda b: (np.bincount(b.gens[m][0], minlength=b.n_samples) >= 2).astype(float),
        f"ball_mass_{R}_to_{m}": lambda b: np.minimum(b.ball_mass([R], up_to=m)[:, 0], 200),
    }


@dataclass
class RPointOP:
    tau: Estimate
    rho: Estimate

    def to_json(self):
        return {"tau": self.tau.to_json(), "rho": self.rho.to_json()}


def estimate_rpoint_op(cfg, times, kvecs, samples, seed, horizon=None, workers=1, bootstrap=1000) -> RPointOP:
    """``tau^op`` (unconditioned) and ``rho^op`` (size-biased by ``N_horizon``)."""
    times = [int(t) for t in times]
    horizon = max(times) if horizon is None else horizon
    if horizon < max(times):
        raise ValidationError("horizon must cover all times", "horizon")
    kvecs = [np.atleast_1d(np.asarray(k, float)) for k in kvecs]

    def fn(batch):
        prod = np.ones(batch.n_samples, dtype=complex)
        for t, k in zip(times, kvecs):
            prod *= batch.phase(t, k)
        N = np.bincount(batch.gens[horizon][0], minlength=batch.n_samples).astype(float)
        return np.column_stack([prod.real, N * prod.real, N])

    rows = _batched(cfg, horizon, samples, seed, "op.rpoint", fn, workers)
    rng = stream(seed, "op.rpoint.boot")
    tau = mean_estimate(rows[:, :1], rng, bootstrap)
    tau = Estimate(float(tau.value[0]), float(tau.se[0]), samples)
    if rows[:, 2].sum() == 0:
        raise ZeroEffectiveSampleError("no sample survives to the horizon")
    rho = bootstrap_ratio(rows[:, 1], rows[:, 2], rng, bootstrap)
    return RPointOP(tau, rho)


def susceptibility(cfg, samples, seed, max_generations=10**4, frontier_cap=DEFAULT_FRONTIER_CAP, bootstrap=1000):
    """Mean total cluster size; aborts if clusters outlive ``max_generations``."""

    def run(rng, size):
        batch = grow_clusters(cfg, max_generations, size, rng, frontier_cap=frontier_cap, stop_when_extinct=True)
        if batch.gens[-1][0].size and batch.horizon == max_generations:
            raise ResourceLimitError(
                f"runaway cluster: {batch.gens[-1][0].size} sites alive after {max_generations} generations "
                f"(p={cfg.p} is too close to or above p_c)"
            )
        return batch.populations().sum(axis=1)[:, None].astype(float)

    sizes = np.concatenate(map_blocks(run, samples, seed, "op.chi", block_size=BLOCK_SIZE))
    est = mean_estimate(sizes, stream(seed, "op.chi.boot"), bootstrap)
    return Estimate(float(est.value[0]), float(est.se[0]), samples)


@dataclass
class BallMassResult:
    radii: list
    estimates: list
    warnings: list

    def to_json(self):
        return {"radii": self.radii, "estimates": [e.to_json() for e in self.estimates], "warnings": self.warnings}


def iic_ball_mass(cfg, radii, n, samples, seed, workers=1, bootstrap=1000) -> BallMassResult:
    """``E_inf[M^op(R)]`` estimated under size-biasing by ``N_n``."""
    warnings = []
    for R in radii:
        if cfg.sigma_sq * n < 4 * R * R:
            warnings.append(f"horizon n={n} is short for R={R}: sigma^2 n < 4 R^2, mass is truncated")

    def fn(batch):
        N = np.bincount(batch.gens[n][0], minlength=batch.n_samples).astype(float)
        return np.column_stack([N[:, None] * batch.ball_mass(radii), N])

    rows = _batched(cfg, n, samples, seed, "op.mass", fn, workers)
    if rows[:, -1].sum() == 0:
        raise ZeroEffectiveSampleError("no sample survives to generation n")
    rng = stream(seed, "op.mass.boot")
    ests = [bootstrap_ratio(rows[:, j], rows[:, -1], rng, bootstrap) for j in range(len(radii))]
    return BallMassResult(list(radii), ests, warnings)


def max_flow_two(cluster: ClusterSample, m, k) -> int:
    """``min(2, max flow)`` from distinct generation-``m`` sites to generation ``k``.

    Each source site gets a unit-capacity edge from a super-source; every
    occupied bond has unit capacity; generation-``k`` sites drain to the sink.
    """
    if cluster.bonds is None:
        raise ValidationError("cluster has no bond record", "bonds")
    n_m = cluster.generations[m].shape[0]
    if k == m:
        return min(2, n_m)
    if cluster.generations[k].shape[0] == 0:
        return 0
    G = nx.DiGraph()
    for i in range(n_m):
        G.add_edge("s", (m, i), capacity=1)
    for g in range(m, k):
        src, dst = cluster.bonds[g]
        for a, b in zip(src.tolist(), dst.tolist()):
            G.add_edge((g, a), (g + 1, b), capacity=1)
    for i in range(cluster.generations[k].shape[0]):
        G.add_edge((k, i), "t", capacity=2)
    if "t" not in G or "s" not in G:
        return 0
    R = edmonds_karp(G, "s", "t", capacity="capacity", cutoff=2)
    return min(2, int(R.graph["flow_value"]))


def disjoint_survival(cfg, m, k, n, samples, seed, max_edges=10**5) -> Estimate:
    """``Q_n``-probability of two bond-disjoint occupied paths from level ``m`` to ``k``."""
    if not (0 <= m <= k <= n):
        raise ValidationError("need 0 <= m <= k <= n", "disjoint")

    def run(rng, size):
        batch = grow_clusters(cfg, n, size, rng, record_bonds=True)
        alive = np.bincount(batch.gens[n][0], minlength=size) > 0
        out = np.zeros((size, 2))
        for i in np.flatnonzero(alive):
            c = batch.sample(int(i))
            if sum(len(b[0]) for b in c.bonds[m:k]) > max_edges:
                raise ResourceLimitError(f"flow graph exceeds {max_edges} edges")
            out[i] = (max_flow_two(c, m, k) >= 2, 1.0)
        return out

    rows = np.concatenate(map_blocks(run, samples, seed, "op.disjoint", block_size=BLOCK_SIZE))
    if rows[:, 1].sum() == 0:
        raise ZeroEffectiveSampleError("no sample survives to generation n")
    return bootstrap_ratio(rows[:, 0], rows[:, 1], stream(seed, "op.disjoint.boot"), 1000)


# ---------------------------------------------------------------------------
# Bond-record framing
# ---------------------------------------------------------------------------

MAGIC = b"OPBR"
VERSION = 1


def encode_bond_record(cluster: ClusterSample) -> bytes:
    """Little-endian framing.

    Header: magic ``OPBR``, u16 version, u16 d, u32 number of generations.
    Per generation k: u32 n_sites, n_sites*d int32 coordinates, u32 n_bonds
    (bonds from k to k+1; zero for the last generation), then n_bonds pairs
    of u32 (source index in k, target index in k+1).
    """
    if cluster.bonds is None:
        raise ValidationError("cluster has no bond record", "bonds")
    d = cluster.generations[0].shape[1]
    parts = [MAGIC, struct.pack("<HHI", VERSION, d, len(cluster.generations))]
    for g, sites in enumerate(cluster.generations):
        parts.append(struct.pack("<I", sites.shape[0]))
        parts.append(np.ascontiguousarray(sites, dtype="<i4").tobytes())
        if g < len(cluster.bonds):
            src, dst = cluster.bonds[g]
            parts.append(struct.pack("<I", len(src)))
            parts.append(np.column_stack([src, dst]).astype("<u4").tobytes())
        else:
            parts.append(struct.pack("<I", 0))
    return b"".join(parts)


def decode_bond_record(data: bytes) -> ClusterSample:
    if data[:4] != MAGIC:
        raise ValidationError("not a bond record (bad magic)", "bond_record")
    version, d, n_gen = struct.unpack_from("<HHI", data, 4)
    if version != VERSION:
        raise ValidationError(f"unsupported bond-record version {version}", "bond_record")
    pos = 12
    gens, bonds = [], []
    for g in range(n_gen):
        (ns,) = struct.unpack_from("<I", data, pos)
        pos += 4
        gens.append(np.frombuffer(data, dtype="<i4", count=ns * d, offset=pos).reshape(ns, d).astype(np.int64))
        pos += 4 * ns * d
        (nb,) = struct.unpack_from("<I", data, pos)
        pos += 4
        pairs = np.frombuffer(data, dtype="<u4", count=2 * nb, offset=pos).reshape(nb, 2).astype(np.int64)
        pos += 8 * nb
        if g < n_gen - 1:
            bonds.append((pairs[:, 0], pairs[:, 1]))
    return ClusterSample(gens, bonds)
