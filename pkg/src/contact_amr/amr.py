"""Zienkiewicz-Zhu estimation, marking, stopping and the adaptive contact loop."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fem import ConfigError, default_points, gauss_stresses, material_table, shape_functions
from .geometry import gauss_square
from .partition import initial_owner, plan_from_mesh, validate
from .problem import solve

log = logging.getLogger(__name__)

ZZ_GLOBAL = "ZZ_GLOBAL"
LOC_LOCAL = "LOC_LOCAL"


# ---------------------------------------------------------------- recovery
def _extrapolation(order, npts):
    pts, _ = gauss_square(npts)
    n, _ = shape_functions(order, pts)      # (Q, nodes)
    return np.linalg.pinv(n)                 # nodes x Q


def recover_stress(space, U, materials, npts=None):
    """Nodal stresses (n_nodes, 3) by patch-averaged Gauss-point extrapolation.

    Each element's Gauss stresses are extrapolated to its nodes and averaged
    over the node's patch with element areas as weights.  Nodes never belong
    to two solids, so each solid is recovered on its own.  Hanging nodes take
    the constrained combination of their masters' values.
    """
    npts = npts or default_points(space.order)
    sig, _, w = gauss_stresses(space, U, materials, npts)
    nodal = np.einsum("aq,eqi->eai", _extrapolation(space.order, npts), sig)
    area = w.sum(axis=1)
    conn = space.conn
    acc = np.zeros((space.n_nodes, 3))
    wsum = np.zeros(space.n_nodes)
    np.add.at(acc, conn.ravel(), (nodal * area[:, None, None]).reshape(-1, 3))
    np.add.at(wsum, conn.ravel(), np.repeat(area, conn.shape[1]))
    used = wsum > 0
    acc[used] /= wsum[used, None]
    if space.is_hanging.any():
        Pn = space.P[::2, ::2]
        acc = Pn @ acc[space.conforming_nodes]
    return acc


# -------------------------------------------------------------- error field
@dataclass
class ErrorField:
    leaves: np.ndarray
    xi: np.ndarray
    omega: np.ndarray

    @property
    def xi_global(self):
        return float(np.sqrt(np.sum(self.xi ** 2)))

    @property
    def omega_global(self):
        return float(np.sqrt(np.sum(self.omega ** 2)))

    @property
    def gamma(self):
        w = self.omega_global
        return self.xi_global / w if w > 0 else 0.0

    @property
    def n_elements(self):
        return len(self.leaves)


def element_errors(space, U, sigma_star, materials, npts=None):
    """Element-wise estimated error xi_T and energy norm omega_T.

    xi_T^2 = int (s* - s_h) . C^-1 (s* - s_h) and
    omega_T^2 = int s_h . e_h + xi_T^2, both at the Gauss points of s_h.
    """
    npts = npts or default_points(space.order)
    pts, _ = gauss_square(npts)
    sig, eps, w = gauss_stresses(space, U, materials, npts)
    n, _ = shape_functions(space.order, pts)
    star = np.einsum("qa,eai->eqi", n, sigma_star[space.conn])
    comp = np.linalg.inv(material_table(space.mesh, materials, space.leaves))
    diff = star - sig
    xi2 = np.einsum("eqi,eij,eqj,eq->e", diff, comp, diff, w)
    en = np.einsum("eqi,eqi,eq->e", sig, eps, w)
    xi2 = np.maximum(xi2, 0.0)
    return ErrorField(space.leaves.copy(), np.sqrt(xi2), np.sqrt(np.maximum(en + xi2, 0.0)))


def estimate(space, U, materials):
    return element_errors(space, U, recover_stress(space, U, materials), materials)


# ------------------------------------------------------------- configuration
@dataclass(frozen=True)
class AmrConfig:
    combination: str = ZZ_GLOBAL
    target: float = 0.02          # e_Omega (ZZ) or e_Omega,LOC
    delta: float = 0.001
    n_max: int = 10
    ranks: int = 8
    c: float = 1.0

    def __post_init__(self):
        if self.combination not in (ZZ_GLOBAL, LOC_LOCAL):
            raise ConfigError(f"unknown AMR combination {self.combination!r}")
        if not 0 < self.target < 1:
            raise ConfigError("AMR target must lie in (0, 1)")
        if not 0 <= self.delta < 1:
            raise ConfigError("delta must lie in [0, 1)")
        if self.n_max < 1 or self.ranks < 1 or not self.c > 0:
            raise ConfigError("n_max and ranks must be >= 1 and c > 0")


def thresholds(err, config):
    """Per-element admissible error."""
    if config.combination == ZZ_GLOBAL:
        return np.full(err.n_elements, config.target * err.omega_global / math.sqrt(err.n_elements))
    return config.target * err.omega


def mark(err, limits, partner=None):
    """Leaves with xi above their limit plus the contact partners of those."""
    m0 = err.leaves[err.xi > limits]
    if partner is None or not len(m0):
        return m0
    p = partner[m0]
    return np.union1d(m0, p[p >= 0])


def marked_fraction(mesh, marked):
    if not len(marked):
        return 0.0
    return float(mesh.element_measure(marked).sum() / mesh.element_measure().sum())


def should_stop(err, marked, mesh, config, iteration):
    """(stop, reason) with reason in TARGET, EMPTY, LOCAL, BUDGET or ''."""
    if config.combination == ZZ_GLOBAL:
        if err.gamma <= config.target:
            return True, "TARGET"
        if not len(marked):
            return True, "EMPTY"
    else:
        if marked_fraction(mesh, marked) <= config.delta:
            return True, "LOCAL"
    if iteration >= config.n_max:
        return True, "BUDGET"
    return False, ""


# ------------------------------------------------------------------- driver
@dataclass
class IterationRecord:
    n: int
    n_elements: int
    n_dofs: int
    gamma: float
    eta: float
    marked: int
    contact_sweeps: int
    pcg_iterations: int
    active_sizes: list
    converged: bool
    interpenetration: float
    r_c: int
    imbalance: float
    violations: int


@dataclass
class AmrReport:
    records: list = field(default_factory=list)
    reason: str = ""
    plans: list = field(default_factory=list)

    @property
    def final(self):
        return self.records[-1]

    def rows(self):
        return [(r.n, r.n_elements, r.n_dofs, r.gamma, r.eta, r.marked, r.contact_sweeps,
                 r.pcg_iterations) for r in self.records]


class ContactNotConverged(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def amr_contact_loop(mesh, problem, config, callback=None):
    """Adaptive loop: solve contact, estimate, mark, stop-check, refine.

    The active set of each solve starts from the pairs whose solid-1 node
    was active in the previous iteration (node ids survive refinement, so
    surviving nodes keep their position).  The partition plan is rebuilt
    from the refined elements' inherited owners at every iteration.
    `callback(n, state, err, marked, plan)` is called after each estimate.
    Returns ``(state, report)``; the state holds the last solved mesh.
    """
    report = AmrReport()
    owner = initial_owner(mesh, config.ranks)
    active_nodes = None
    n = 0
    while True:
        n += 1
        try:
            state = solve(mesh, problem, warm_nodes=active_nodes)
        except Exception:
            log.error("solve failed at AMR iteration %d (%d elements)", n, mesh.n_leaves)
            raise
        res = state.result
        err = estimate(state.space, state.U, problem.materials)
        partner = state.pairing.partner_map(mesh.n_elements)
        plan = plan_from_mesh(mesh, state.pairing.element_pairs, owner, config.ranks, config.c)
        rep = validate(plan, state.pairing.element_pairs, mesh)
        limits = thresholds(err, config)
        marked = mark(err, limits, partner)
        eta = marked_fraction(mesh, marked)
        report.records.append(IterationRecord(
            n, mesh.n_leaves, state.n_dofs, err.gamma, eta, len(marked), res.sweeps,
            int(sum(res.pcg_iterations)), list(res.active_sizes), res.converged,
            state.interpenetration, plan.r_c, rep.imbalance, rep.violations))
        report.plans.append(plan)
        log.info("AMR %d: N_E=%d N=%d gamma=%.4g eta=%.4g marked=%d", n, mesh.n_leaves,
                 state.n_dofs, err.gamma, eta, len(marked))
        if callback is not None:
            callback(n, state, err, marked, plan)
        if not res.converged:
            raise ContactNotConverged(
                f"contact loop did not reach a fixed point at AMR iteration {n} "
                f"(active sizes {res.active_sizes})", report)
        stop, reason = should_stop(err, marked, mesh, config, n)
        if stop:
            report.reason = reason
            return state, report
        active_nodes = state.pairing.nodes1[res.active]
        mesh = mesh.refine(marked, partner)
        owner = inherit_owner(mesh, plan.owner)


def inherit_owner(mesh, owner):
    """Extend an element -> rank map to new elements through their parents."""
    out = np.full(mesh.n_elements, -1, np.int64)
    out[:len(owner)] = owner
    todo = np.flatnonzero(out < 0)
    while len(todo):
        out[todo] = out[mesh.parent[todo]]
        todo = todo[out[todo] < 0]
    return out
