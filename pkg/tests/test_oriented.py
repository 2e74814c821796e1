import math

import numpy as np
import pytest

from icsbm.errors import ResourceLimitError, ValidationError
from icsbm.oriented import (ClusterSample, OPConfig, decode_bond_record, default_cylinder_statistics,
                            encode_bond_record, estimate_theta, grow_clusters, iic_compare, iic_estimate,
                            max_flow_two, sample_cluster, susceptibility)
from icsbm.rng import map_blocks, stream

CFG = OPConfig(d=2, L=1, p=1.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        OPConfig(d=2, L=1, p=20.0)
    with pytest.raises(ValidationError):
        OPConfig(kind="triangular")
    with pytest.raises(ValidationError):
        OPConfig(d=1, kind="table", table=[[[1], 0.5], [[-1], 0.4]])
    with pytest.raises(ValidationError):
        OPConfig(d=2, L=1, kind="contact", lam=1.0)


def test_contact_one_step_probabilities():
    for eps in (0.1, 0.01):
        cfg = OPConfig.contact(1, 1, 1.5, eps)
        off, q = cfg.bonds()
        table = {tuple(o): float(p) for o, p in zip(off.tolist(), q)}
        assert table[(0,)] == pytest.approx(1 - eps)
        assert table[(1,)] == pytest.approx(1.5 * eps / 2)
        assert table[(-1,)] == pytest.approx(1.5 * eps / 2)


def test_spread_out_variance():
    assert OPConfig(d=1, L=1).sigma_sq == pytest.approx(1.0)
    assert OPConfig(d=5, L=3).box_size == 7**5 - 1


def test_zero_p_gives_origin_only():
    c = sample_cluster(OPConfig(d=2, L=1, p=0.0), 4, 1)
    assert c.populations == [1, 0, 0, 0, 0]


def test_full_occupation_fills_the_cone():
    c = sample_cluster(OPConfig(d=1, kind="table", table=[[[1], 0.5], [[-1], 0.5]], p=2.0), 4, 1)
    assert c.populations == [1, 2, 3, 4, 5]


def test_sites_are_distinct_per_generation():
    batch = grow_clusters(OPConfig(d=2, L=1, p=1.2), 12, 200, stream(1, "t"))
    for owner, coords in batch.gens:
        stacked = np.column_stack([owner, coords])
        assert np.unique(stacked, axis=0).shape[0] == stacked.shape[0]


def test_one_step_occupation_law():
    cfg = OPConfig(d=1, L=2, p=1.0)
    batch = grow_clusters(cfg, 1, 40000, stream(2, "t"))
    n1 = batch.populations()[:, 1]
    # Binomial(4, 1/4)
    assert abs(n1.mean() - 1.0) < 0.02
    assert abs(n1.var() - 0.75) < 0.03


def test_determinism_and_block_invariance():
    a = sample_cluster(CFG, 15, 9)
    b = sample_cluster(CFG, 15, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.generations, b.generations))


def _pop_block(rng, size):
    return grow_clusters(CFG, 6, size, rng).populations()


def test_workers_do_not_change_results():
    one = np.vstack(map_blocks(_pop_block, 3000, 5, "t", workers=1, block_size=500))
    two = np.vstack(map_blocks(_pop_block, 3000, 5, "t", workers=2, block_size=500))
    assert np.array_equal(one, two)


def test_theta_monotone_per_stream():
    c = estimate_theta(CFG, 10, 5000, 3, bootstrap=0)
    assert np.all(np.diff(c.theta) <= 0)
    assert c.theta[0] == 1.0


def test_iic_constant_is_one():
    for mode in ("size-biased", "conditioned"):
        e = iic_estimate(CFG, lambda b: np.ones(b.n_samples), 8, mode, 3000, 4, bootstrap=50)
        assert e.value == 1.0


def test_iic_modes_agree_on_small_system():
    comps = iic_compare(CFG, default_cylinder_statistics(m=1, R=1), 8, 20000, 6, bootstrap=100)
    for c in comps:
        assert abs(c.diff) <= 4 * c.combined_se


def test_susceptibility_subcritical_and_runaway():
    e = susceptibility(OPConfig(d=2, L=1, p=0.3), 3000, 1, bootstrap=100)
    # sites per generation are at most p^n in expectation
    assert 1.0 < e.value < 1 / (1 - 0.3)
    with pytest.raises(ResourceLimitError):
        susceptibility(OPConfig(d=2, L=1, p=2.0), 20, 1, max_generations=30)


def _cluster(gens, bonds):
    return ClusterSample([np.array(g, dtype=np.int64).reshape(-1, 1) for g in gens],
                         [(np.array(s), np.array(t)) for s, t in bonds])


def test_max_flow_by_hand():
    # two sites at level 1 feeding one site at level 2: a bottleneck
    c = _cluster([[0], [-1, 1], [0], [1]], [([0, 0], [0, 1]), ([0, 1], [0, 0]), ([0], [0])])
    assert max_flow_two(c, 1, 2) == 2
    assert max_flow_two(c, 1, 3) == 1
    # a single source site caps the flow at one
    assert max_flow_two(c, 0, 1) == 1
    # disjoint ladders
    d = _cluster([[0], [-1, 1], [-1, 1], [-1, 1]], [([0, 0], [0, 1]), ([0, 1], [0, 1]), ([0, 1], [0, 1])])
    assert max_flow_two(d, 1, 3) == 2


def test_bond_record_round_trip():
    c = sample_cluster(OPConfig(d=3, L=1, p=1.0), 10, 2, record_bonds=True)
    data = encode_bond_record(c)
    assert data[:4] == b"OPBR"
    back = decode_bond_record(data)
    assert all(np.array_equal(x, y) for x, y in zip(c.generations, back.generations))
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(c.bonds, back.bonds))
    with pytest.raises(ValidationError):
        decode_bond_record(b"XXXX" + data[4:])
    with pytest.raises(ValidationError):
        decode_bond_record(data[:4] + b"\x09\x00" + data[6:])


def test_frontier_cap():
    with pytest.raises(ResourceLimitError):
        grow_clusters(OPConfig(d=2, L=2, p=5.0), 10, 1, stream(1, "t"), frontier_cap=50)
