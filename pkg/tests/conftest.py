import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from contact_amr.amr import amr_contact_loop
from contact_amr.bench import BenchConfig, base_mesh, make_problem
from contact_amr.contact import active_set
from contact_amr.fem import assemble_stiffness
from contact_amr.mesh import CONTACT1, generate_half_disk_pair, generate_rectangle

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

R, GAP, ALPHA = 2.0, 2.0, 0.015


@pytest.fixture(scope="session")
def hertz_coarse():
    return generate_half_disk_pair(R, GAP, 4, 10)


@pytest.fixture
def square4():
    """Uniform 4x4 patch on the unit square."""
    return generate_rectangle(1.0, 1.0, 4, 4)


def random_refinement(mesh, rng, rounds=3, fraction=0.2):
    """Refine a random subset of leaves a few times (2:1 closure applies)."""
    for _ in range(rounds):
        leaves = mesh.leaves()
        k = max(1, int(fraction * len(leaves)))
        mesh = mesh.refine(rng.choice(leaves, size=k, replace=False))
    return mesh


def linear_field(coords, A, b):
    return (coords @ np.asarray(A).T + np.asarray(b)).ravel()


# ------------------------------------------------------------ heavy runs
class LoopTrace:
    """Per-iteration snapshots collected through the AMR callback."""

    def __init__(self, materials):
        self.materials = materials
        self.iterations = []

    def __call__(self, n, state, err, marked, plan):
        mesh = state.mesh
        res = state.result
        K_all, _ = assemble_stiffness(state.space, self.materials)
        energy = float(state.U @ (K_all @ state.U))
        leaves = mesh.leaves()
        lv = mesh.level[leaves]
        pairs, _, _ = mesh.leaf_edge_nodes(CONTACT1)
        touch = np.isin(mesh.corners[leaves], np.unique(pairs)).any(axis=1)
        touch &= mesh.solid[leaves] == 1
        self.iterations.append({
            "n": n, "err": err, "n_marked": len(marked), "r_c": plan.r_c,
            "finest": leaves[(lv == lv.max()) & (mesh.solid[leaves] == 1)],
            "contact_adjacent": leaves[touch], "max_level": int(lv.max()),
            "sweeps": res.sweeps, "converged": res.converged,
            "idempotent": np.array_equal(active_set(state.B, state.D, res.U), res.active),
            "xi2_sum": float(np.sum(err.xi ** 2)), "omega2_sum": float(np.sum(err.omega ** 2)),
            "xi_global": err.xi_global, "omega_global": err.omega_global, "energy": energy,
        })


def run_loop(mode, target, delta=0.001, n_max=10):
    cfg = BenchConfig(mode=mode, target=target, delta=delta, n_max=n_max)
    mesh = base_mesh(cfg)
    problem = make_problem(cfg, mesh)
    trace = LoopTrace(problem.materials)
    state, report = amr_contact_loop(mesh, problem, cfg.amr_config(), callback=trace)
    return state, report, problem, trace


_RUNS = {}


@pytest.fixture(scope="session")
def amr_runs():
    """Cached AMR runs keyed by (mode, target, delta)."""

    def get(mode, target, delta=0.001):
        key = (mode, target, delta)
        if key not in _RUNS:
            _RUNS[key] = run_loop(mode, target, delta)
        return _RUNS[key]

    return get
