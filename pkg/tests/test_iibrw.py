import json
import math

import numpy as np
import pytest

from icsbm.branching import OffspringLaw, StepLaw, enumerate_embedded_trees, generation, survival_probability
from icsbm.errors import ValidationError
from icsbm.iibrw import (CylinderEvent, expected_ball_mass_identity, finite_n_Q, iibrw_probability,
                         sample_iibrw, sample_iibrw_ball_mass, sample_iibrw_populations, sample_iibrw_spatial,
                         sample_spine_steps, survival_given)
from icsbm.rng import stream

BINARY = OffspringLaw.binary()
SIMPLE = StepLaw.simple(1)


@pytest.fixture(scope="module")
def prefixes():
    return {m: enumerate_embedded_trees(BINARY, SIMPLE, m) for m in range(3)}


def test_normalization(prefixes):
    for m, trees in prefixes.items():
        assert abs(math.fsum(iibrw_probability(BINARY, SIMPLE, et) for et, _ in trees) - 1) <= 1e-9


def test_consistency(prefixes):
    parent = {et.key(): iibrw_probability(BINARY, SIMPLE, et) for et, _ in prefixes[1]}
    agg = {}
    for et, _ in prefixes[2]:
        k = et.restrict(1).key()
        agg[k] = agg.get(k, 0.0) + iibrw_probability(BINARY, SIMPLE, et)
    for k, v in parent.items():
        assert abs(agg.get(k, 0.0) - v) <= 1e-9


def test_q_converges_monotonically(prefixes):
    curve = survival_probability(BINARY, 10**4)
    gaps = []
    for n in (10, 100, 1000, 10**4):
        gaps.append(max(abs(finite_n_Q(BINARY, SIMPLE, et, n, curve) - iibrw_probability(BINARY, SIMPLE, et))
                        for et, _ in prefixes[2]))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    pmax = max(iibrw_probability(BINARY, SIMPLE, et) for et, _ in prefixes[2])
    assert gaps[-1] <= 1e-3 * pmax


def test_q_sums_to_one(prefixes):
    for n in (2, 7, 50):
        total = math.fsum(finite_n_Q(BINARY, SIMPLE, et, n) for et, _ in prefixes[2])
        assert abs(total - 1) <= 1e-12


def test_survival_given_small_theta():
    assert survival_given(1e-12, 3) == pytest.approx(3e-12, rel=1e-9)
    assert survival_given(0.5, 0) == 0.0


def test_spine_step_law():
    V, zeta = sample_spine_steps(BINARY, 20000, stream(3, "t"))
    # binary law: zeta = 1 always, V uniform on {1, 2}
    assert set(zeta.tolist()) == {1}
    assert abs(np.mean(V == 1) - 0.5) < 0.02


def test_spine_unique_per_generation():
    for seed in range(5):
        et = sample_iibrw(BINARY, StepLaw.simple(2), 8, seed)
        assert len(et.spine) == 9
        for k, w in enumerate(et.spine):
            assert generation(w) == k and w in et.tree.words
        assert all(et.spine[i + 1][:-1] == et.spine[i] for i in range(8))


def test_sample_determinism():
    a = sample_iibrw(BINARY, SIMPLE, 10, 4).to_json()
    b = sample_iibrw(BINARY, SIMPLE, 10, 4).to_json()
    assert a == b
    s1 = sample_iibrw_spatial(BINARY, SIMPLE, 10, 4)
    assert sum(s1[10].values()) >= 1


def test_cylinder_json_round_trip(prefixes):
    et, _ = prefixes[2][17]
    C = CylinderEvent(et)
    back = CylinderEvent.from_json(json.loads(json.dumps(C.to_json())))
    assert back.prefix.key() == et.key()
    assert iibrw_probability(BINARY, SIMPLE, back) == iibrw_probability(BINARY, SIMPLE, C)


def test_cylinder_needs_depth():
    with pytest.raises(ValidationError) as e:
        CylinderEvent.from_json({"words": [[0]], "sites": [[0]]})
    assert e.value.field == "cylinder.depth"


def test_population_moments_exact_targets():
    # E_inf[N_m] = 1 + sigma^2 m for the spine construction
    m = 8
    N = sample_iibrw_populations(BINARY, m, 50000, stream(5, "t"))[:, m].astype(float)
    se = N.std(ddof=1) / math.sqrt(N.size)
    assert abs(N.mean() - (1 + m)) <= 3 * se


def test_ball_mass_matches_identity():
    law, step = BINARY, StepLaw.spread_out(2, 1)
    radii = (1, 2, 4)
    rows = sample_iibrw_ball_mass(law, step, radii, 12, 4000, stream(6, "t"))
    ident = expected_ball_mass_identity(law, step, radii, 12, 20000, stream(7, "t"))
    m1, m2 = rows.mean(axis=0), ident.mean(axis=0)
    se = np.hypot(rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0]), ident.std(axis=0, ddof=1) / math.sqrt(ident.shape[0]))
    assert np.all(np.abs(m1 - m2) <= 3.5 * se)
