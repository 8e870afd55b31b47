"""Plane-strain linear elasticity on hierarchical quad meshes.

Displacements use a Q1 (or, on conforming meshes, Q2) Lagrange basis in the
element reference square; the element geometry comes from the mesh's
order-q map.  Systems are first assembled over *all* nodes, hanging ones
included, then restricted to conforming DOFs with the prolongation
``P = [Id; W]``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import gauss_square
from .mesh import EDGE_MIDPOINTS, GeometryError, edge_key


class ConfigError(ValueError):
    pass


class SolverError(RuntimeError):
    """PCG did not reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class MatrixError(RuntimeError):
    """The operator handed to PCG is not positive definite."""


@dataclass(frozen=True)
class Material:
    young_modulus: float
    poisson_ratio: float

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ConfigError("Young's modulus must be positive")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ConfigError("Poisson ratio must lie in [0, 0.5)")

    def elasticity(self):
        """Plane-strain matrix acting on (e_xx, e_yy, 2 e_xy)."""
        E, nu = self.young_modulus, self.poisson_ratio
        c = E / ((1 + nu) * (1 - 2 * nu))
        return c * np.array([[1 - nu, nu, 0.0], [nu, 1 - nu, 0.0], [0.0, 0.0, 0.5 * (1 - 2 * nu)]])

    def compliance(self):
        return np.linalg.inv(self.elasticity())


def material_table(mesh, materials, elems):
    """Stack of (3, 3) elasticity matrices for `elems`."""
    solids = mesh.solid[elems]
    out = np.empty((len(elems), 3, 3))
    for s in np.unique(solids):
        if int(s) not in materials:
            raise ConfigError(f"no material for solid {int(s)}")
        out[solids == s] = materials[int(s)].elasticity()
    return out


# --------------------------------------------------------------- shape functions
_Q2_INDEX = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)]


def shape_functions(order, ref):
    """Values (..., n) and reference gradients (..., n, 2) of the Q`order` basis."""
    ref = np.asarray(ref, float)
    if ref.ndim == 1:
        ref = ref[None]
    xi, eta = ref[..., 0], ref[..., 1]
    if order == 1:
        sx = np.array([-1, 1, 1, -1.0])
        sy = np.array([-1, -1, 1, 1.0])
        ax = 1 + xi[..., None] * sx
        ay = 1 + eta[..., None] * sy
        n = 0.25 * ax * ay
        dn = np.stack([0.25 * sx * ay, 0.25 * ax * sy], axis=-1)
        return n, dn
    if order == 2:
        def l1d(t):
            return np.stack([0.5 * t * (t - 1), 1 - t * t, 0.5 * t * (t + 1)], axis=-1)

        def d1d(t):
            return np.stack([t - 0.5, -2 * t, t + 0.5], axis=-1)
        lx, ly, dx, dy = l1d(xi), l1d(eta), d1d(xi), d1d(eta)
        n = np.stack([lx[..., i] * ly[..., j] for i, j in _Q2_INDEX], axis=-1)
        dn = np.stack([np.stack([dx[..., i] * ly[..., j], lx[..., i] * dy[..., j]], axis=-1)
                       for i, j in _Q2_INDEX], axis=-2)
        return n, dn
    raise ConfigError(f"unsupported solution order {order}")


def node_reference_points(order):
    if order == 1:
        return np.array([(-1.0, -1), (1, -1), (1, 1), (-1, 1)])
    return np.array([(i - 1.0, j - 1.0) for i, j in _Q2_INDEX])


# -------------------------------------------------------------- function space
class FunctionSpace:
    """Vector-valued Lagrange space on the leaves of a mesh.

    Nodes are numbered globally; node ``i`` carries DOFs ``2i`` (x) and
    ``2i + 1`` (y).  For order 1 the nodes are the mesh nodes, hanging nodes
    included.  Order 2 requires a conforming mesh.
    """

    def __init__(self, mesh, order=1):
        self.mesh = mesh
        self.order = order
        self.leaves = mesh.leaves()
        if order == 1:
            self.conn = mesh.corners[self.leaves]
            self.coords = mesh.nodes
            self.constraints = mesh.hanging_constraints()
            self._edge_nodes = None
        elif order == 2:
            if len(mesh.hanging_edges()):
                raise ConfigError("Q2 spaces need a conforming mesh")
            self._build_q2()
            self.constraints = []
        else:
            raise ConfigError(f"unsupported solution order {order}")
        self.n_nodes = len(self.coords)
        self.node_solid = np.zeros(self.n_nodes, np.int64)
        self.node_solid[self.conn.ravel()] = np.repeat(mesh.solid[self.leaves], self.conn.shape[1])
        slaves = np.array([c.slave_node for c in self.constraints], np.int64)
        is_slave = np.zeros(self.n_nodes, bool)
        is_slave[slaves] = True
        self.is_hanging = is_slave
        self.conforming_nodes = np.flatnonzero(~is_slave)
        self.node_to_conforming = np.full(self.n_nodes, -1, np.int64)
        self.node_to_conforming[self.conforming_nodes] = np.arange(len(self.conforming_nodes))
        self.P = self._prolongation()

    def _build_q2(self):
        mesh = self.mesh
        c = mesh.corners[self.leaves]
        keys = edge_key(c, np.roll(c, -1, axis=1))
        ukeys, inv = np.unique(keys, return_inverse=True)
        inv = inv.reshape(keys.shape)
        n0 = mesh.n_nodes
        edge_ids = n0 + np.arange(len(ukeys))
        centre_ids = n0 + len(ukeys) + np.arange(len(self.leaves))
        self.conn = np.column_stack([c, edge_ids[inv], centre_ids])
        first = np.zeros(len(ukeys), np.int64)
        first[inv.ravel()[::-1]] = np.arange(inv.size)[::-1]
        fe, fk = np.divmod(first, 4)
        exy = mesh.map_points(self.leaves[fe], EDGE_MIDPOINTS[fk][:, None, :])[:, 0]
        cxy = mesh.map_points(self.leaves, np.zeros((1, 2)))[:, 0]
        self.coords = np.vstack([mesh.nodes, exy, cxy])
        self._edge_nodes = (ukeys, edge_ids)

    @property
    def n_dofs(self):
        return 2 * self.n_nodes

    @property
    def n_conforming_dofs(self):
        return 2 * len(self.conforming_nodes)

    def dofs(self, nodes, component=None):
        nodes = np.asarray(nodes, np.int64)
        if component is None:
            return np.column_stack([2 * nodes, 2 * nodes + 1]).ravel()
        return 2 * nodes + component

    def conforming_dofs(self, nodes, component=None):
        cn = self.node_to_conforming[np.asarray(nodes, np.int64)]
        if np.any(cn < 0):
            raise ConfigError("hanging nodes have no conforming DOF")
        if component is None:
            return np.column_stack([2 * cn, 2 * cn + 1]).ravel()
        return 2 * cn + component

    def classify_dofs(self):
        """Per-DOF labels: 0 conforming, 1 hanging."""
        return np.repeat(self.is_hanging.astype(np.int64), 2)

    def boundary_nodes(self, tag):
        """Nodes on leaf edges carrying `tag`, mid-edge nodes included for Q2."""
        pairs, el, k = self.mesh.leaf_edge_nodes(tag, self.leaves)
        nodes = [pairs.ravel()]
        if self.order == 2:
            ukeys, ids = self._edge_nodes
            pos = np.searchsorted(ukeys, edge_key(pairs[:, 0], pairs[:, 1]))
            nodes.append(ids[pos])
        return np.unique(np.concatenate(nodes))

    def _prolongation(self):
        n = self.n_nodes
        rows, cols, vals = [], [], []
        cn = self.conforming_nodes
        rows.append(cn)
        cols.append(np.arange(len(cn)))
        vals.append(np.ones(len(cn)))
        for con in self.constraints:
            m = self.node_to_conforming[list(con.master_nodes)]
            if np.any(m < 0):
                raise RuntimeError(f"constraint of node {con.slave_node} has a non-conforming master")
            rows.append(np.full(len(m), con.slave_node))
            cols.append(m)
            vals.append(np.asarray(con.weights, float))
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
        # same scalar weights on x and y DOFs
        rr = np.concatenate([2 * r, 2 * r + 1])
        cc = np.concatenate([2 * c, 2 * c + 1])
        return sp.csr_matrix((np.concatenate([v, v]), (rr, cc)), shape=(2 * n, 2 * len(cn)))

    # ------------------------------------------------------------- kinematics
    def kinematics(self, idx, ref):
        """Physical points, |J| and physical basis gradients on leaves `idx`.

        `ref` is (Q, 2) or per element (E, Q, 2).
        """
        elems = self.leaves[idx]
        x, jac = self.mesh.map_points(elems, ref, jacobian=True)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0):
            raise GeometryError("non-positive Jacobian during integration")
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        _, dn = shape_functions(self.order, ref)
        if dn.ndim == 3:
            dndx = np.einsum("qac,eqcd->eqad", dn, inv)
        else:
            dndx = np.einsum("eqac,eqcd->eqad", dn, inv)
        return x, det, dndx

    def strains(self, U, idx, ref):
        """Engineering strains (E, Q, 3) of the full-DOF vector `U`."""
        _, det, dndx = self.kinematics(idx, ref)
        return strain_from_gradients(U, self.conn[idx], dndx), det

    def evaluate(self, U, idx, ref):
        n, _ = shape_functions(self.order, ref)
        u = U.reshape(-1, 2)[self.conn[idx]]
        return np.einsum("qa,ead->eqd", n, u)


def strain_from_gradients(U, conn, dndx):
    u = U.reshape(-1, 2)[conn]  # (E, n, 2)
    exx = np.einsum("eqa,ea->eq", dndx[..., 0], u[..., 0])
    eyy = np.einsum("eqa,ea->eq", dndx[..., 1], u[..., 1])
    gxy = np.einsum("eqa,ea->eq", dndx[..., 1], u[..., 0]) + np.einsum("eqa,ea->eq", dndx[..., 0], u[..., 1])
    return np.stack([exx, eyy, gxy], axis=-1)


def default_points(order):
    return order + 1


# ------------------------------------------------------------------- assembly
def element_stiffness(space, materials, idx, npts=None):
    """Element matrices (E, 2n, 2n) with DOFs ordered (ux0, uy0, ux1, ...)."""
    pts, wts = gauss_square(npts or default_points(space.order))
    _, det, dndx = space.kinematics(idx, pts)
    ne, nq, na, _ = dndx.shape
    B = np.zeros((ne, nq, 3, 2 * na))
    B[:, :, 0, 0::2] = dndx[..., 0]
    B[:, :, 1, 1::2] = dndx[..., 1]
    B[:, :, 2, 0::2] = dndx[..., 1]
    B[:, :, 2, 1::2] = dndx[..., 0]
    D = material_table(space.mesh, materials, space.leaves[idx])
    DB = np.einsum("eij,eqjk->eqik", D, B)
    return np.einsum("eqji,eqjk,eq->eik", B, DB, det * wts)


def assemble_stiffness(space, materials, npts=None, chunk=20_000):
    """All-node stiffness K~ (CSR) and external load L~ (zero body force)."""
    ne = len(space.leaves)
    na = space.conn.shape[1]
    rows, cols, vals = [], [], []
    for c0 in range(0, ne, chunk):
        idx = np.arange(c0, min(ne, c0 + chunk))
        ke = element_stiffness(space, materials, idx, npts)
        dofs = np.empty((len(idx), 2 * na), np.int64)
        dofs[:, 0::2] = 2 * space.conn[idx]
        dofs[:, 1::2] = 2 * space.conn[idx] + 1
        rows.append(np.repeat(dofs, 2 * na, axis=1).ravel())
        cols.append(np.tile(dofs, (1, 2 * na)).ravel())
        vals.append(ke.ravel())
    n = space.n_dofs
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    K.sum_duplicates()
    K.sort_indices()
    return K, np.zeros(n)


def build_prolongation(space):
    return space.P


def form_conforming(K_all, L_all, P):
    """Conforming system K = P^T K~ P, L = P^T L~."""
    if K_all.shape[0] != P.shape[0] or len(L_all) != P.shape[0]:
        raise ValueError("dimension mismatch between system and prolongation")
    PT = P.T.tocsr()
    K = (PT @ K_all @ P).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K, PT @ L_all


def symmetry_defect(A):
    A = sp.csr_matrix(A)
    d = abs(A - A.T)
    amax = abs(A).max()
    return (d.max() / amax) if amax > 0 else 0.0


# ------------------------------------------------------------------ Dirichlet
@dataclass
class ReducedSystem:
    """SPD system over free conforming DOFs plus the data to scatter back."""

    K: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    n: int
    K_fd: sp.csr_matrix = field(repr=False, default=None)

    def scatter(self, u_free):
        U = np.zeros(self.n)
        U[self.free] = u_free
        U[self.fixed] = self.values
        return U


def dirichlet_dofs(space, tag, component, value):
    """Conforming DOF indices and values for one displacement component on a tag."""
    nodes = space.boundary_nodes(tag)
    nodes = nodes[~space.is_hanging[nodes]]
    if not len(nodes):
        warnings.warn(f"boundary tag {tag} carries no DOFs", stacklevel=2)
    dofs = space.conforming_dofs(nodes, component)
    return dofs, np.full(len(dofs), float(value))


def apply_dirichlet(K, L, dofs, values):
    """Symmetric elimination of prescribed conforming DOFs."""
    n = K.shape[0]
    dofs = np.asarray(dofs, np.int64)
    values = np.asarray(values, float)
    if len(dofs) == 0:
        warnings.warn("no Dirichlet DOFs given", stacklevel=2)
    fixed, first = np.unique(dofs, return_index=True)
    values = values[first]
    mask = np.ones(n, bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    K = sp.csr_matrix(K)
    K_fd = K[free][:, fixed]
    K_ff = K[free][:, free].tocsr()
    rhs = np.asarray(L)[free] - K_fd @ values
    return ReducedSystem(K_ff, rhs, free, fixed, values, n, K_fd.tocsr())


# ------------------------------------------------------------------------ PCG
def pcg_solve(A, b, rel_tol=1e-10, max_iter=None, x0=None, callback=None):
    """Jacobi-preconditioned conjugate gradient.

    Returns ``(x, iterations)`` with ``||A x - b|| <= rel_tol ||b||``.  Raises
    :class:`SolverError` past `max_iter` (default ``50 sqrt(N)``) and
    :class:`MatrixError` when a search direction has ``p^T A p <= 0``.
    """
    A = sp.csr_matrix(A) if not sp.issparse(A) else A
    b = np.asarray(b, float)
    n = len(b)
    if max_iter is None:
        max_iter = max(100, int(50 * np.sqrt(max(n, 1))))
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    if n == 0 or bnorm == 0.0:
        return np.zeros(n), 0
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise MatrixError("non-positive diagonal entry; matrix is not SPD")
    minv = 1.0 / diag
    target = rel_tol * bnorm
    r = b - A @ x
    it = 0
    while True:
        if np.linalg.norm(r) <= target:
            break
        z = minv * r
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0:
                raise MatrixError(f"p^T A p = {pAp:.3e} <= 0 at iteration {it}")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            if callback is not None:
                callback(x, r)
            if np.linalg.norm(r) <= target:
                break
            z = minv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        # guard against drift of the recursive residual
        r = b - A @ x
        if np.linalg.norm(r) <= target:
            break
        if it >= max_iter:
            res = np.linalg.norm(r) / bnorm
            raise SolverError(f"PCG stopped after {it} iterations, relative residual {res:.3e}",
                              residual=res, iterations=it)
    return x, it


# ---------------------------------------------------------- stress evaluation
def gauss_stresses(space, U, materials, npts=None):
    """Stresses (E, Q, 3) at the Gauss points of every leaf, with |J| w."""
    pts, wts = gauss_square(npts or default_points(space.order))
    idx = np.arange(len(space.leaves))
    eps, det = space.strains(U, idx, pts)
    D = material_table(space.mesh, materials, space.leaves)
    sig = np.einsum("eij,eqj->eqi", D, eps)
    return sig, eps, det * wts


def strain_energy(space, U, materials):
    sig, eps, w = gauss_stresses(space, U, materials)
    return 0.5 * np.einsum("eqi,eqi,eq->", sig, eps, w)


# ------------------------------------------------------ cross-mesh energy norm
def locate_leaves(mesh, roots, rr):
    """Leaf of `mesh` containing root-reference point rr (P, 2) of `roots`."""
    e = np.asarray(roots, np.int64).copy()
    rr = np.asarray(rr, float)
    while True:
        kids = mesh.children[e, 0]
        inner = kids >= 0
        if not inner.any():
            return e
        box = mesh.box[e[inner]]
        half = 0.5 * box[:, 2]
        right = rr[inner, 0] >= box[:, 0] + half
        up = rr[inner, 1] >= box[:, 1] + half
        ci = np.where(up, np.where(right, 2, 3), np.where(right, 1, 0))
        e[inner] = mesh.children[e[inner], ci]


def _overlay_part(fine, Uf, coarse, Uc, materials, fine_idx, npts):
    """Energy of (u_f - u_c) over fine leaves whose coarse host contains them."""
    pts, wts = gauss_square(npts)
    mf = fine.mesh
    elems = fine.leaves[fine_idx]
    rr = mf.root_coordinates(elems, pts)  # (E, Q, 2)
    _, det, dndx = fine.kinematics(fine_idx, pts)
    ef = strain_from_gradients(Uf, fine.conn[fine_idx], dndx)
    centre = mf.root_coordinates(elems, np.zeros((1, 2)))[:, 0]
    host = locate_leaves(coarse.mesh, mf.root[elems], centre)
    box = coarse.mesh.box[host]
    cref = 2.0 * (rr - box[:, None, :2]) / box[:, None, 2:3] - 1.0
    leaf_pos = np.searchsorted(coarse.leaves, host)
    _, _, cdndx = coarse.kinematics(leaf_pos, cref)
    ec = strain_from_gradients(Uc, coarse.conn[leaf_pos], cdndx)
    D = material_table(mf, materials, elems)
    de = ef - ec
    return np.einsum("eqi,eij,eqj,eq->", de, D, de, det * wts)


def energy_error(space_a, Ua, space_b, Ub, materials, npts=4, chunk=20_000):
    """Energy norm of u_a - u_b for two spaces built on refinements of one mesh.

    Integrates over the common refinement: every leaf of one mesh whose host
    leaf in the other mesh is at least as coarse is integrated exactly once.
    """
    total = 0.0
    for fine, Uf, coarse, Uc, strict in ((space_a, Ua, space_b, Ub, False),
                                         (space_b, Ub, space_a, Ua, True)):
        mf, mc = fine.mesh, coarse.mesh
        elems = fine.leaves
        centre = mf.root_coordinates(elems, np.zeros((1, 2)))[:, 0]
        host = locate_leaves(mc, mf.root[elems], centre)
        own = mc.box[host, 2] > mf.box[elems, 2] if strict else mc.box[host, 2] >= mf.box[elems, 2]
        sel = np.flatnonzero(own)
        for c0 in range(0, len(sel), chunk):
            total += _overlay_part(fine, Uf, coarse, Uc, materials, sel[c0:c0 + chunk], npts)
    return np.sqrt(max(total, 0.0))
