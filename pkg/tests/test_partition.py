import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from contact_amr.contact import pair_nodes
from contact_amr.fem import FunctionSpace
from contact_amr.partition import (PartitionError, RegionState, compute_Rc, initial_owner,
                                   noncontact_start, plan, plan_from_mesh, plan_region, validate)

# per-region counts of the worked instance: super-elements on ranks 0-2, non-contact elements on 0-7
WORKED_SUPER = (3, 4, 3, 0, 0, 0, 0, 0)
WORKED_NONCONTACT = (4, 3, 5, 12, 6, 10, 11, 12)


def make_regions(supers, noncontact):
    regions, e = [], 0
    for r, (s, n) in enumerate(zip(supers, noncontact)):
        g = RegionState(r)
        for _ in range(s):
            g.contact.append((e, e + 1))
            e += 2
        g.noncontact = list(range(e, e + n))
        e += n
        regions.append(g)
    return regions


def oracle_rc(n_ec, n_e, R, c):
    if n_ec == 0:
        return 0
    if R == 1 or n_ec == n_e:
        return R
    rc = 0
    while rc < c * n_ec / n_e * R - 1e-12:
        rc += 1
    rc = min(rc, n_ec // 2)
    return R - 1 if rc >= R else rc


def oracle_plan(regions, R, c):
    """Walk every region's lists with an explicit rank cursor."""
    n_ec = sum(2 * len(g.contact) for g in regions)
    n_e = sum(2 * len(g.contact) + len(g.noncontact) for g in regions)
    rc = oracle_rc(n_ec, n_e, R, c)
    out = {}
    for g in regions:
        cursor = g.rank % rc if rc else 0
        for e1, e2 in g.contact:
            out[e1] = out[e2] = cursor
            cursor = cursor + 1 if cursor + 1 < rc else 0
        if rc < R:
            lo = rc
            cursor = g.rank + rc
            if cursor >= R:
                cursor = (g.rank + rc) % (R - rc) + rc
        else:
            lo, cursor = 0, g.rank
        for e in g.noncontact:
            out[e] = cursor
            cursor += 1
            if cursor == R:
                cursor = lo
    return rc, out


def test_worked_eight_rank_instance():
    regions = make_regions(WORKED_SUPER, WORKED_NONCONTACT)
    p = plan(regions, 8, 1.0)
    assert len(p.elements) == 83
    assert p.r_c == 2
    contact = {e for g in regions for pair in g.contact for e in pair}
    assert {p.rank_of(e) for e in contact} == {0, 1}
    assert {p.rank_of(e) for g in regions for e in g.noncontact} <= set(range(2, 8))
    assert p.rank_of(regions[4].noncontact[0]) == 6
    assert p.rank_of(regions[5].noncontact[0]) == 7
    rc, want = oracle_plan(regions, 8, 1.0)
    assert rc == p.r_c and all(p.rank_of(e) == r for e, r in want.items())
    pairs = [pair for g in regions for pair in g.contact]
    assert validate(p, pairs).ok


def test_compute_rc_examples():
    assert compute_Rc(20, 83, 8, 1.0) == 2
    assert compute_Rc(4, 32, 8, 1.0) == 1
    assert compute_Rc(2, 4, 8, 1.0) == 1
    assert compute_Rc(0, 10, 8, 1.0) == 0
    assert compute_Rc(10, 10, 8, 1.0) == 8
    assert compute_Rc(4, 6, 1, 1.0) == 1
    # ceil(8 * 40 / 41) = 8 = R leaves no non-contact rank, so one is given back
    assert compute_Rc(40, 41, 8, 1.0) == 7


@pytest.mark.parametrize("args", [(3, 10, 8, 1.0), (12, 10, 8, 1.0), (2, 10, 0, 1.0), (2, 10, 8, 0.0)])
def test_compute_rc_rejects(args):
    with pytest.raises(PartitionError):
        compute_Rc(*args)


def test_noncontact_start_wraps():
    assert noncontact_start(4, 8, 2) == 6
    assert noncontact_start(5, 8, 2) == 7
    assert noncontact_start(6, 8, 2) == 4    # (8 mod 6) + 2
    assert noncontact_start(7, 8, 2) == 5


def test_single_rank():
    regions = make_regions((2,), (5,))
    p = plan(regions, 1)
    assert p.r_c == 1 and set(p.ranks.tolist()) == {0}


def test_plan_rejects():
    with pytest.raises(PartitionError):
        plan([], 0)
    g = RegionState(0, [(0, 1)], [1])
    with pytest.raises(PartitionError):
        plan([g], 2)
    with pytest.raises(PartitionError):
        plan([RegionState(3, [], [0])], 2)


def random_regions(rng, R):
    supers = rng.integers(0, 6, R) * (rng.random(R) < 0.6)
    noncontact = rng.integers(0, 15, R)
    if supers.sum() == 0 and noncontact.sum() == 0:
        noncontact[0] = 1
    regions = make_regions(supers, noncontact)
    for g in regions:          # element ids need not be ordered by region
        rng.shuffle(g.noncontact)
    return regions


@pytest.mark.parametrize("seed", range(100))
def test_random_instances_against_oracle(seed):
    rng = np.random.default_rng(seed)
    R = int(rng.integers(1, 13))
    c = float(rng.choice([0.5, 1.0, 2.0]))
    regions = random_regions(rng, R)
    p = plan(regions, R, c)
    rc, want = oracle_plan(regions, R, c)
    assert p.r_c == rc
    assert {int(e): int(r) for e, r in zip(p.elements, p.ranks)} == want
    pairs = [pair for g in regions for pair in g.contact]
    rep = validate(p, pairs)
    assert rep.violations == 0 and rep.separated
    # per-rank spread bounded by the number of contributing regions
    if 0 < rc < R:
        supers = np.zeros(rc, int)
        for g in regions:
            for e1, _ in g.contact:
                supers[p.rank_of(e1)] += 1
        assert np.ptp(supers) <= sum(1 for g in regions if g.contact)
        nc = np.zeros(R - rc, int)
        for g in regions:
            for e in g.noncontact:
                nc[p.rank_of(e) - rc] += 1
        assert np.ptp(nc) <= sum(1 for g in regions if g.noncontact)


def test_adversarial_move_counts_one_violation():
    regions = make_regions(WORKED_SUPER, WORKED_NONCONTACT)
    p = plan(regions, 8)
    e1, e2 = regions[1].contact[2]
    p.owner[e2] = (p.owner[e2] + 1) % p.r_c
    pairs = [pair for g in regions for pair in g.contact]
    assert validate(p, pairs).violations == 1


@given(st.integers(0, 2 ** 31 - 1))
def test_deterministic(seed):
    rng = np.random.default_rng(seed)
    regions = random_regions(rng, 8)
    a, b = plan(regions, 8), plan(regions, 8)
    assert np.array_equal(a.elements, b.elements) and np.array_equal(a.ranks, b.ranks)


@given(st.integers(0, 2 ** 31 - 1))
def test_region_plan_uses_only_local_data(seed):
    rng = np.random.default_rng(seed)
    regions = random_regions(rng, 6)
    rc = plan(regions, 6).r_c
    target = regions[2]
    before = plan_region(target, 6, rc)
    others = random_regions(rng, 6)
    for g in others:
        g.contact = [(a + 10_000, b + 10_000) for a, b in g.contact]
        g.noncontact = [e + 10_000 for e in g.noncontact]
    assert plan_region(target, 6, rc) == before


@given(st.integers(1, 200), st.integers(1, 1000), st.integers(1, 32))
def test_rc_monotone_in_c(half, extra, R):
    n_ec = 2 * half
    n_e = n_ec + extra
    prev_rc, prev_load = 0, math.inf
    for c in (0.25, 0.5, 1.0, 1.5, 2.0, 4.0):
        rc = compute_Rc(n_ec, n_e, R, c)
        assert rc >= prev_rc
        load = n_ec / rc
        assert load <= prev_load
        prev_rc, prev_load = rc, load


def test_initial_owner_blocks(square4):
    owner = initial_owner(square4, 3)
    assert np.all(np.diff(owner) >= 0)
    assert np.ptp(np.bincount(owner)) <= 1


def test_plan_from_mesh_hertz(hertz_coarse):
    pr = pair_nodes(FunctionSpace(hertz_coarse))
    owner = initial_owner(hertz_coarse, 8)
    p = plan_from_mesh(hertz_coarse, pr.element_pairs, owner, 8)
    rep = validate(p, pr.element_pairs)
    assert rep.ok and len(p.elements) == hertz_coarse.n_leaves


def test_hertz_amr_imbalance(amr_runs):
    _, report, _, _ = amr_runs("AMR1", 0.02)
    assert report.records[2].imbalance <= 1.5
    assert all(r.violations == 0 for r in report.records)
    assert [p.r_c for p in report.plans] == [r.r_c for r in report.records]
