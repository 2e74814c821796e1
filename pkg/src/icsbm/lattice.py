"""Wired spanning forests by Wilson's algorithm, loop-erased walks, invasion percolation.

Two Wilson kernels share one convention (walk until the current tree is hit,
record the last exit slot, then retrace):

* ``wilson_multigraph`` works on any multigraph in CSR form, keeping the
  identity of parallel edges.
* ``wilson_wired`` works on a box of Z^d with all outgoing edges wired to a
  single root and computes neighbours by index arithmetic, so boxes with
  ~10^8 vertices fit in memory.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import GuardError, ResourceLimitError, ValidationError
from .rng import as_generator, stream
from .stats import Estimate, mean_estimate

WIRED = -1


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


@dataclass
class Multigraph:
    """Undirected multigraph in CSR form; slot ``s`` of vertex ``v`` leads to ``nbr[s]`` via edge ``eid[s]``."""

    n: int
    edges: list
    indptr: np.ndarray = field(init=False)
    nbr: np.ndarray = field(init=False)
    eid: np.ndarray = field(init=False)

    def __post_init__(self):
        adj = [[] for _ in range(self.n)]
        for e, (a, b) in enumerate(self.edges):
            if a == b:
                raise ValidationError("self-loops are not allowed", "graph")
            adj[a].append((b, e))
            adj[b].append((a, e))
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        self.indptr[1:] = np.cumsum([len(x) for x in adj])
        self.nbr = np.array([b for x in adj for b, _ in x], dtype=np.int64)
        self.eid = np.array([e for x in adj for _, e in x], dtype=np.int64)

    def degree(self, v):
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbours(self, v):
        return self.nbr[self.indptr[v]: self.indptr[v + 1]].tolist()

    def is_connected(self):
        seen, todo = {0}, [0]
        while todo:
            v = todo.pop()
            for u in self.neighbours(v):
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
        return len(seen) == self.n


def triangle():
    return Multigraph(3, [(0, 1), (1, 2), (0, 2)])


@dataclass(frozen=True)
class WiredBox:
    """Box ``prod_i [-a_i, b_i]`` of Z^d, nearest-neighbour edges, boundary wired to one root."""

    shape: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not shape or min(shape) < 1:
            raise ValidationError("box sides must be >= 1", "box")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def centered(cls, d, N):
        """``Lambda_N = [-N, N]^d``."""
        if N < 0:
            raise ValidationError("N must be >= 0", "box.N")
        return cls((2 * N + 1,) * d)

    @property
    def d(self):
        return len(self.shape)

    @property
    def n_vertices(self):
        return math.prod(self.shape)

    @property
    def root(self):
        """Index of the wired vertex."""
        return self.n_vertices

    @property
    def strides(self):
        out, s = [], 1
        for side in self.shape:
            out.append(s)
            s *= side
        return np.array(out, dtype=np.int64)

    @property
    def center(self):
        return np.array([(s - 1) // 2 for s in self.shape], dtype=np.int64)

    def index(self, x):
        """Index of the site with coordinates ``x`` relative to the centre."""
        c = np.asarray(x, dtype=np.int64) + self.center
        if np.any(c < 0) or np.any(c >= np.array(self.shape)):
            raise ValidationError(f"site {tuple(x)} outside the box", "box")
        return int(c @ self.strides)

    def coords(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        out = np.empty(idx.shape + (self.d,), dtype=np.int64)
        rem = idx.copy()
        for i, side in enumerate(self.shape):
            out[..., i] = rem % side
            rem //= side
        return out - self.center

    @property
    def origin(self):
        return self.index(np.zeros(self.d, dtype=np.int64))

    def edge_of(self, v, slot):
        """Canonical edge id for direction ``slot`` (``2i`` = +e_i, ``2i+1`` = -e_i) at ``v``."""
        nb = _box_neighbour(v, slot, np.array(self.shape), self.strides)
        if nb < 0:
            return ("w", int(v), int(slot))
        dim = slot // 2
        return ("i", int(min(v, nb)), int(dim))

    def multigraph(self):
        """Explicit multigraph (vertex ``n_vertices`` is the wired root) with matching edge ids."""
        edges, ids = [], []
        sh, st = np.array(self.shape), self.strides
        seen = set()
        for v in range(self.n_vertices):
            for slot in range(2 * self.d):
                key = self.edge_of(v, slot)
                if key in seen:
                    continue
                seen.add(key)
                nb = _box_neighbour(v, slot, sh, st)
                edges.append((v, self.root if nb < 0 else int(nb)))
                ids.append(key)
        g = Multigraph(self.n_vertices + 1, edges)
        g.edge_keys = ids
        return g


def _box_neighbour(v, slot, shape, strides):
    dim, sign = slot // 2, 1 if slot % 2 == 0 else -1
    c = (v // strides[dim]) % shape[dim]
    c2 = c + sign
    if c2 < 0 or c2 >= shape[dim]:
        return -1
    return v + sign * strides[dim]


# ---------------------------------------------------------------------------
# Wilson kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _wilson_csr(indptr, nbr, root, order, seed, max_steps):
    np.random.seed(seed)
    n = indptr.size - 1
    in_tree = np.zeros(n, dtype=np.bool_)
    nxt = np.full(n, -1, dtype=np.int64)
    in_tree[root] = True
    steps = 0
    for i in order:
        u = i
        while not in_tree[u]:
            deg = indptr[u + 1] - indptr[u]
            s = indptr[u] + np.random.randint(deg)
            nxt[u] = s
            u = nbr[s]
            steps += 1
            if steps > max_steps:
                return nxt, False
        u = i
        while not in_tree[u]:
            in_tree[u] = True
            u = nbr[nxt[u]]
    return nxt, True


@numba.njit(cache=True)
def _wilson_csr_batch(indptr, nbr, root, order, seeds, max_steps):
    out = np.empty((seeds.size, indptr.size - 1), dtype=np.int64)
    ok = np.empty(seeds.size, dtype=np.bool_)
    for j in range(seeds.size):
        nxt, good = _wilson_csr(indptr, nbr, root, order, seeds[j], max_steps)
        out[j] = nxt
        ok[j] = good
    return out, ok


@numba.njit(cache=True)
def _wilson_box(shape, strides, seed, max_steps):
    np.random.seed(seed)
    d = shape.size
    n = 1
    for s in shape:
        n *= s
    # slot[v] = direction taken out of v in the tree; -1 for untouched
    slot = np.full(n, -1, dtype=np.int8)
    in_tree = np.zeros(n, dtype=np.bool_)
    steps = 0
    for i in range(n):
        u = i
        while u >= 0 and not in_tree[u]:
            s = np.random.randint(2 * d)
            slot[u] = s
            dim = s // 2
            c = (u // strides[dim]) % shape[dim]
            if s % 2 == 0:
                u = u + strides[dim] if c + 1 < shape[dim] else -1
            else:
                u = u - strides[dim] if c > 0 else -1
            steps += 1
            if steps > max_steps:
                return slot, False
        u = i
        while u >= 0 and not in_tree[u]:
            in_tree[u] = True
            s = slot[u]
            dim = s // 2
            c = (u // strides[dim]) % shape[dim]
            if s % 2 == 0:
                u = u + strides[dim] if c + 1 < shape[dim] else -1
            else:
                u = u - strides[dim] if c > 0 else -1
    return slot, True


def _seed_for(rng):
    return int(rng.integers(0, 2**31 - 1))


def wilson_multigraph(g: Multigraph, root, seed, order=None, max_steps=10**9):
    """Uniform spanning tree of ``g``; returns the parent-slot array (``-1`` at the root)."""
    order = np.array([v for v in range(g.n) if v != root] if order is None else order, dtype=np.int64)
    rng = as_generator(seed)
    for _ in range(3):
        nxt, ok = _wilson_csr(g.indptr, g.nbr, root, order, _seed_for(rng), max_steps)
        if ok:
            return nxt
    raise ResourceLimitError("Wilson walk exceeded the step budget three times")


def wilson_multigraph_batch(g: Multigraph, root, n_samples, seed, order=None, max_steps=10**9):
    """Tree edge-id sets for ``n_samples`` independent spanning trees, shape ``(n_samples, n-1)``."""
    order = np.array([v for v in range(g.n) if v != root] if order is None else order, dtype=np.int64)
    rng = stream(seed, "wilson.batch")
    seeds = rng.integers(0, 2**31 - 1, size=n_samples)
    nxt, ok = _wilson_csr_batch(g.indptr, g.nbr, root, order, seeds, max_steps)
    if not ok.all():
        raise ResourceLimitError("Wilson walk exceeded the step budget")
    verts = np.array([v for v in range(g.n) if v != root])
    return np.sort(g.eid[nxt[:, verts]], axis=1)


@dataclass
class ForestSample:
    """Wired spanning tree of a box, stored as one outgoing direction per vertex."""

    box: WiredBox
    slot: np.ndarray

    def parent(self, v):
        nb = _box_neighbour(v, int(self.slot[v]), np.array(self.box.shape), self.box.strides)
        return self.box.root if nb < 0 else int(nb)

    def parents(self):
        return np.array([self.parent(v) for v in range(self.box.n_vertices)])

    def edge_keys(self):
        return sorted(self.box.edge_of(v, int(self.slot[v])) for v in range(self.box.n_vertices))

    def component_shells(self, max_dist, start=None):
        """Vertices of ``T(start)`` grouped by tree distance ``0..max_dist`` from ``start``."""
        return _tree_shells(self.box, self.slot, self.box.origin if start is None else start, max_dist)

    def component(self, start=None):
        """All of ``T(start)`` grouped by tree distance."""
        return self.component_shells(-1, start)


def wilson_wired(box: WiredBox, seed, max_steps=None) -> ForestSample:
    """Uniform spanning tree of the wired box, rooted at the wired vertex."""
    if max_steps is None:
        max_steps = max(10**9, 1000 * box.n_vertices)
    shape = np.array(box.shape, dtype=np.int64)
    rng = as_generator(seed)
    for _ in range(3):
        slot, ok = _wilson_box(shape, box.strides, _seed_for(rng), max_steps)
        if ok:
            return ForestSample(box, slot)
    raise ResourceLimitError("Wilson walk exceeded the step budget three times")


@numba.njit(cache=True)
def _shells_kernel(shape, strides, slot, start, max_dist):
    d = shape.size
    n = slot.size
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head, tail = 0, 0
    queue[tail] = start
    tail += 1
    dist[start] = 0
    while head < tail:
        v = queue[head]
        head += 1
        if max_dist >= 0 and dist[v] >= max_dist:
            continue
        # parent of v
        s = slot[v]
        dim = s // 2
        c = (v // strides[dim]) % shape[dim]
        if s % 2 == 0:
            p = v + strides[dim] if c + 1 < shape[dim] else -1
        else:
            p = v - strides[dim] if c > 0 else -1
        if p >= 0 and dist[p] < 0:
            dist[p] = dist[v] + 1
            queue[tail] = p
            tail += 1
        # children: neighbours whose outgoing slot points back at v
        for t in range(2 * d):
            dim = t // 2
            c = (v // strides[dim]) % shape[dim]
            if t % 2 == 0:
                u = v + strides[dim] if c + 1 < shape[dim] else -1
                back = 2 * dim + 1
            else:
                u = v - strides[dim] if c > 0 else -1
                back = 2 * dim
            if u >= 0 and dist[u] < 0 and slot[u] == back:
                dist[u] = dist[v] + 1
                queue[tail] = u
                tail += 1
    return queue[:tail], dist[queue[:tail]]


def _tree_shells(box, slot, start, max_dist):
    verts, dist = _shells_kernel(np.array(box.shape, dtype=np.int64), box.strides, slot, start, max_dist)
    top = int(dist.max()) if dist.size else 0
    return [verts[dist == m] for m in range(top + 1)]


def lerw(graph, start, targets, seed, max_steps=10**8):
    """Chronological loop erasure of a simple random walk from ``start`` stopped at ``targets``.

    ``graph`` maps each vertex to its neighbour list (a ``networkx`` graph
    works).  Returns the vertex path, or ``[]`` when ``start`` is a target.
    """
    targets = set(targets)
    if start in targets:
        return []
    rng = as_generator(seed)
    nbrs = {v: list(graph[v]) for v in graph}
    path, pos = [start], {start: 0}
    u = start
    for _ in range(max_steps):
        nb = nbrs[u]
        if not nb:
            raise ValidationError(f"vertex {u!r} has no neighbours", "graph")
        u = nb[int(rng.integers(len(nb)))]
        if u in pos:
            cut = pos[u]
            for w in path[cut + 1:]:
                del pos[w]
            del path[cut + 1:]
        else:
            pos[u] = len(path)
            path.append(u)
        if u in targets:
            return path
    raise ResourceLimitError("loop-erased walk exceeded the step budget")


@dataclass
class USFResult:
    times: list
    estimates: Estimate
    shell_profile: Estimate
    samples: int

    def to_json(self):
        return {"times": self.times, "rho": self.estimates.to_json(), "shell_profile": self.shell_profile.to_json(),
                "samples": self.samples}


def usf_rpoint(d, N, times, kvecs, samples, seed, profile_to=None, bootstrap=1000) -> USFResult:
    """``rho^st`` estimates: products over ``i`` of phase sums on the shells ``|SP(x)| = m_i`` of ``T(0)``."""
    times = [int(m) for m in times]
    mbar = max(times)
    if 4 * mbar > N:
        raise GuardError(f"boundary guard violated: max time {mbar} > N/4 = {N / 4}")
    kvecs = [np.atleast_1d(np.asarray(k, float)) for k in kvecs]
    top = max(mbar, profile_to or 0)
    box = WiredBox.centered(d, N)
    rows, prof = [], []
    for i in range(samples):
        f = wilson_wired(box, stream(seed, "usf", i))
        shells = f.component_shells(top)
        sums = []
        for m, k in zip(times, kvecs):
            pts = box.coords(shells[m]) if m < len(shells) else np.zeros((0, d))
            sums.append(np.exp(1j * (pts @ k)).sum())
        rows.append(np.prod(sums).real)
        prof.append([len(shells[m]) if m < len(shells) else 0 for m in range(top + 1)])
    rng = stream(seed, "usf.boot")
    return USFResult(times, mean_estimate(np.array(rows), rng, bootstrap),
                     mean_estimate(np.array(prof, float), rng, bootstrap), samples)


# ---------------------------------------------------------------------------
# Invasion percolation
# ---------------------------------------------------------------------------


def _nn_steps(d):
    e = np.eye(d, dtype=np.int64)
    return [tuple(x) for x in np.vstack([e, -e]).tolist()]


class _IndexedSet:
    """Set with O(1) insert, delete and uniform choice."""

    def __init__(self):
        self.items, self.pos = [], {}

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def remove(self, x):
        i = self.pos.pop(x)
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def choice(self, rng):
        return self.items[int(rng.integers(len(self.items)))]

    def __len__(self):
        return len(self.items)


@dataclass
class InvasionState:
    bonds: list
    vertices: set
    weights: list
    raw_weights: list
    exposure: dict
    p_c: float | None = None
    uniform_picks: int = 0

    @property
    def capped(self):
        return self.p_c is not None


def _bond(a, b):
    return (a, b) if a <= b else (b, a)


def invade(d=2, budget=1000, seed=0, steps=None, p_c=None, max_exposed=10**7) -> InvasionState:
    """Invasion percolation from the origin of Z^d for ``budget`` bonds.

    Each bond gets an independent uniform ``U`` on first exposure.  With
    ``p_c`` set, the capped variant uses weight ``U`` if ``U <= p_c`` and
    ``inf`` otherwise (same ``U``, so the two runs are coupled).  When no
    finite-weight boundary bond remains the capped run picks uniformly among
    the (infinite-weight) boundary bonds.  Bonds whose endpoints are both
    invaded stay on the boundary until invaded themselves.
    """
    if budget < 1:
        raise ValidationError("bond budget must be >= 1", "budget")
    rng = as_generator(seed)
    steps = _nn_steps(d) if steps is None else [tuple(s) for s in steps]
    origin = (0,) * d
    vertices = {origin}
    raw, heap, infinite = {}, [], _IndexedSet()
    exposure = {}
    counter = itertools.count()
    bonds, weights, raw_trace = [], [], []
    picks = 0

    def expose(v):
        for s in steps:
            u = tuple(a + b for a, b in zip(v, s))
            b = _bond(v, u)
            if b in raw:
                continue
            w = float(rng.random())
            raw[b] = w
            exposure[b] = len(bonds)
            if p_c is not None and w > p_c:
                infinite.add(b)
            else:
                heapq.heappush(heap, (w, next(counter), b))
        if len(raw) > max_exposed:
            raise ResourceLimitError(f"exposed-bond set exceeds {max_exposed}")

    expose(origin)
    while len(bonds) < budget:
        if heap:
            w, _, b = heapq.heappop(heap)
        elif len(infinite):
            b = infinite.choice(rng)
            infinite.remove(b)
            w = math.inf
            picks += 1
        else:
            break
        bonds.append(b)
        weights.append(w)
        raw_trace.append(raw[b])
        for v in b:
            if v not in vertices:
                vertices.add(v)
                expose(v)
    return InvasionState(bonds, vertices, weights, raw_trace, exposure, p_c, picks)


def running_max_second_half(weights):
    w = np.asarray(weights, dtype=float)
    return float(w[len(w) // 2:].max())


def shortest_path_distances(bonds, origin):
    """BFS distances along the given bonds; vertices not reached are absent (distance ``inf``)."""
    adj = {}
    for a, b in bonds:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    dist = {origin: 0}
    q = deque([origin])
    while q:
        v = q.popleft()
        for u in adj.get(v, ()):
            if u not in dist:
                dist[u] = dist[v] + 1
                q.append(u)
    return dist


def distance(dist_map, x):
    return dist_map.get(x, math.inf)


def shell_profile(dist_map, top=None):
    top = max(dist_map.values()) if top is None else top
    prof = [0] * (top + 1)
    for m in dist_map.values():
        if m <= top:
            prof[m] += 1
    return prof


@dataclass
class InvasionRPoint:
    times: list
    estimate: Estimate
    shell_profile: Estimate
    samples: int

    def to_json(self):
        return {"times": self.times, "rho": self.estimate.to_json(), "shell_profile": self.shell_profile.to_json(),
                "samples": self.samples}


def invasion_rpoint(d, budget, times, kvecs, samples, seed, profile_to=20, p_c=None, bootstrap=1000):
    """``rho^ip``: phase sums over ``{x : |SP(x)| = m_j}`` in the invaded region."""
    times = [int(m) for m in times]
    kvecs = [np.atleast_1d(np.asarray(k, float)) for k in kvecs]
    rows, prof = [], []
    for i in range(samples):
        st = invade(d, budget, stream(seed, "invade", i), p_c=p_c)
        dist = shortest_path_distances(st.bonds, (0,) * d)
        shells = {}
        for x, m in dist.items():
            shells.setdefault(m, []).append(x)
        sums = []
        for m, k in zip(times, kvecs):
            pts = np.array(shells.get(m, []), dtype=float).reshape(-1, d)
            sums.append(np.exp(1j * (pts @ k)).sum())
        rows.append(np.prod(sums).real)
        prof.append(shell_profile(dist, profile_to))
    rng = stream(seed, "invade.boot")
    return InvasionRPoint(times, mean_estimate(np.array(rows), rng, bootstrap),
                          mean_estimate(np.array(prof, float), rng, bootstrap), samples)
