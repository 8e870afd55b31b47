"""Node-to-node frictionless contact with penalty enforcement.

Pairs of facing boundary nodes define rows of a pairing matrix ``B`` with
``(B U)_i = u_N`` and gaps ``D``.  A pair is active when ``(B U)_i >= D_i``;
active rows enter the penalised system
``(K + k_N B^T B) U = L + k_N B^T D``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import pcg_solve
from .mesh import CONTACT1, CONTACT2, edge_key

log = logging.getLogger(__name__)


class PairingError(ValueError):
    pass


@dataclass
class ContactPairing:
    nodes1: np.ndarray
    nodes2: np.ndarray
    normal: np.ndarray
    gaps: np.ndarray
    B: sp.csr_matrix
    element_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))

    @property
    def n_pairs(self):
        return len(self.nodes1)

    def partner_map(self, n_elements):
        """element id -> paired element id (or -1), both directions."""
        out = np.full(n_elements, -1, np.int64)
        if len(self.element_pairs):
            out[self.element_pairs[:, 0]] = self.element_pairs[:, 1]
            out[self.element_pairs[:, 1]] = self.element_pairs[:, 0]
        return out


@dataclass(frozen=True)
class PenaltyConfig:
    k_n: float
    l_max: int = 10
    initial_active: tuple = None

    def __post_init__(self):
        if not self.k_n > 0:
            raise ValueError("penalty coefficient must be positive")
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")


def pairing_matrix(nodes1, nodes2, normal, n_dofs):
    """Rows with +n on solid-1 DOFs and -n on solid-2 DOFs (u_N = u1.n1 + u2.n2)."""
    n = np.asarray(normal, float)
    npairs = len(nodes1)
    rows = np.repeat(np.arange(npairs), 4)
    cols = np.column_stack([2 * nodes1, 2 * nodes1 + 1, 2 * nodes2, 2 * nodes2 + 1]).ravel()
    vals = np.tile([n[0], n[1], -n[0], -n[1]], npairs)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(npairs, n_dofs))
    B.eliminate_zeros()
    return B


def pair_nodes(space, tag1=CONTACT1, tag2=CONTACT2, normal=(0.0, 1.0), rtol=1e-8):
    """Pair every tag1 node with the tag2 node closest across the normal direction.

    Distances are measured transversally to `normal`, so facing nodes pair up
    whatever their separation.  Raises :class:`PairingError` unless the
    pairing is a bijection of matching positions.
    """
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    t = np.array([-n[1], n[0]])
    a = space.boundary_nodes(tag1)
    b = space.boundary_nodes(tag2)
    if not len(a) or not len(b):
        raise PairingError("empty contact boundary")
    if len(a) != len(b):
        raise PairingError(f"contact boundaries have {len(a)} and {len(b)} nodes")
    xa = space.coords[a]
    xb = space.coords[b]
    sa = xa @ t
    sb = xb @ t
    order = np.argsort(sb, kind="stable")
    sb_sorted = sb[order]
    pos = np.clip(np.searchsorted(sb_sorted, sa), 1, len(sb) - 1)
    left = sb_sorted[pos - 1]
    right = sb_sorted[pos]
    pick = np.where(np.abs(sa - left) <= np.abs(right - sa), pos - 1, pos)
    partner = b[order[pick]]
    scale = max(np.ptp(sa), np.ptp(xa @ n), 1e-300)
    mismatch = np.abs(sa - sb[order[pick]])
    if len(np.unique(partner)) != len(partner):
        raise PairingError("pairing is not one-to-one (non-matching interfaces)")
    if mismatch.max() > rtol * scale:
        raise PairingError(f"transverse mismatch {mismatch.max():.3e} exceeds tolerance")
    gaps = (space.coords[partner] - xa) @ n
    B = pairing_matrix(a, partner, n, space.n_dofs)
    elems = pair_elements(space.mesh, a, partner)
    return ContactPairing(a, partner, n, gaps, B, elems)


def pair_elements(mesh, nodes1, nodes2):
    """Leaf elements whose contact-edge nodes are all paired with each other."""
    mate = dict(zip(nodes1.tolist(), nodes2.tolist()))
    e1, own1, _ = mesh.leaf_edge_nodes(CONTACT1)
    e2, own2, _ = mesh.leaf_edge_nodes(CONTACT2)
    k2 = edge_key(e2[:, 0], e2[:, 1])
    order = np.argsort(k2)
    pairs = []
    for (a, b), el in zip(e1, own1):
        if a not in mate or b not in mate:
            continue
        k = edge_key(mate[a], mate[b])
        pos = np.searchsorted(k2, k, sorter=order)
        if pos < len(k2) and k2[order[pos]] == k:
            pairs.append((el, own2[order[pos]]))
    return np.array(pairs, np.int64).reshape(-1, 2)


def active_set(B, D, U):
    """Indices i with (B U)_i >= D_i (equality counts as active)."""
    return np.flatnonzero(B @ U >= D)


def restrict_and_project(B, D, active, P):
    """Active rows projected onto conforming DOFs: (B[A] P, D[A])."""
    active = np.asarray(active, np.int64)
    Ba = sp.csr_matrix(B)[active]
    return (Ba @ P).tocsr(), np.asarray(D)[active]


def form_penalized(K, L, B_hat, D_hat, k_n):
    """(K + k_N B^T B, L + k_N B^T D)."""
    if B_hat.shape[0] == 0:
        return K.copy(), np.array(L, float)
    BT = B_hat.T.tocsr()
    A = (K + k_n * (BT @ B_hat)).tocsr()
    A.sum_duplicates()
    return A, L + k_n * (BT @ D_hat)


def interpenetration(B, D, U):
    """Largest violation (B U - D)_i over pairs, zero when none."""
    v = B @ U - D
    return float(max(v.max(initial=0.0), 0.0))


@dataclass
class ContactResult:
    U: np.ndarray            # reduced (free-DOF) solution
    active: np.ndarray
    converged: bool
    active_sizes: list
    pcg_iterations: list
    cycles_broken: int = 0

    @property
    def sweeps(self):
        return len(self.pcg_iterations)


def solve_contact(K, L, B, D, config, rel_tol=1e-10, max_iter=None):
    """Fixed-point loop over the active set.

    `K`, `L` are the reduced SPD system; `B`, `D` the pairing rows expressed
    on the same unknowns (``B U >= D`` means active).  Each sweep forms the
    penalised system for the current set, solves it with PCG and recomputes
    the set; the loop ends when the set no longer changes or after
    ``config.l_max`` sweeps.
    """
    B = sp.csr_matrix(B)
    current = (np.zeros(0, np.int64) if config.initial_active is None
               else np.unique(np.asarray(config.initial_active, np.int64)))
    seen = {tuple(current.tolist())}
    sizes, iters = [], []
    x = None
    converged = False
    broken = 0
    for _ in range(config.l_max):
        A, rhs = form_penalized(K, L, B[current], D[current], config.k_n)
        x, it = pcg_solve(A, rhs, rel_tol=rel_tol, max_iter=max_iter, x0=x)
        iters.append(it)
        new = active_set(B, D, x)
        sizes.append(len(new))
        if np.array_equal(new, current):
            converged = True
            break
        key = tuple(new.tolist())
        if key in seen:
            new = np.union1d(new, current)
            broken += 1
            log.info("active set cycled; taking the union (%d pairs)", len(new))
            if np.array_equal(new, current):
                break   # the union no longer grows; further sweeps repeat this one
        seen.add(key)
        current = new
    return ContactResult(x, current, converged, sizes, iters, broken)


def contact_forces(B, D, U, active, k_n):
    """Penalty forces k_N (D - B U) on active pairs (<= 0 in compression)."""
    active = np.asarray(active, np.int64)
    return k_n * (D[active] - B[active] @ U)


def normal_traction(sigma, n):
    """(sigma n) . n for Voigt stresses (..., 3)."""
    return sigma[..., 0] * n[0] ** 2 + sigma[..., 1] * n[1] ** 2 + 2 * sigma[..., 2] * n[0] * n[1]


def contact_pressure_profile(space, sigma_star, pairing):
    """Pressure per contact pair against arc distance from the contact centre.

    Pressure is minus the normal traction of the recovered nodal stress,
    averaged over the two nodes of a pair (positive in compression).  The
    centre is the pair of smallest initial gap; distances follow the solid-1
    contact boundary.  Returns ``(r, p)`` sorted by r.
    """
    n = pairing.normal
    t = np.array([-n[1], n[0]])
    p = -0.5 * (normal_traction(sigma_star[pairing.nodes1], n)
                + normal_traction(sigma_star[pairing.nodes2], n))
    x = space.coords[pairing.nodes1]
    order = np.argsort(x @ t, kind="stable")
    seg = np.linalg.norm(np.diff(x[order], axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    gaps = pairing.gaps[order]
    centre = np.flatnonzero(gaps <= gaps.min() + 1e-12 * max(abs(gaps.min()), 1.0))
    s0 = s[centre].mean()
    r = np.abs(s - s0)
    k = np.argsort(r, kind="stable")
    return r[k], p[order][k]
