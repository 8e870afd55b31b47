import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from contact_amr.fem import (ConfigError, FunctionSpace, Material, MatrixError, SolverError,
                             apply_dirichlet, assemble_stiffness, element_stiffness, energy_error,
                             form_conforming, gauss_stresses, pcg_solve, strain_energy,
                             symmetry_defect)
from contact_amr.mesh import DIRICHLET, generate_half_disk_pair, generate_rectangle

from conftest import linear_field, random_refinement

STEEL = {1: Material(210e9, 0.3), 2: Material(210e9, 0.3)}


def top88_ke(E, nu):
    """Textbook closed-form Q1 plane-stress stiffness of a unit square (CCW nodes from lower left)."""
    k = np.array([1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
                  -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8])
    idx = [[0, 1, 2, 3, 4, 5, 6, 7], [1, 0, 7, 6, 5, 4, 3, 2], [2, 7, 0, 5, 6, 3, 4, 1],
           [3, 6, 5, 0, 7, 2, 1, 4], [4, 5, 6, 7, 0, 1, 2, 3], [5, 4, 3, 2, 1, 0, 7, 6],
           [6, 3, 4, 1, 2, 7, 0, 5], [7, 2, 1, 4, 3, 6, 5, 0]]
    return E / (1 - nu ** 2) * k[np.array(idx)]


@pytest.mark.parametrize("nu", [0.0, 0.3])
def test_unit_square_element_stiffness(nu):
    space = FunctionSpace(generate_rectangle(1.0, 1.0, 1, 1))
    ke = element_stiffness(space, {1: Material(1.0, nu)}, np.array([0]))[0]
    # plane strain (E, nu) is plane stress (E / (1 - nu^2), nu / (1 - nu))
    want = top88_ke(1.0 / (1 - nu ** 2), nu / (1 - nu))
    np.testing.assert_allclose(ke, want, rtol=0, atol=1e-12)


def _straight_refined(seed):
    rng = np.random.default_rng(seed)
    return random_refinement(generate_rectangle(2.0, 1.0, 4, 2), rng, rounds=2, fraction=0.3)


@given(st.integers(0, 2 ** 31 - 1))
def test_rigid_modes_in_nullspace(seed):
    mesh = _straight_refined(seed)
    space = FunctionSpace(mesh)
    K, _ = assemble_stiffness(space, {1: Material(1.0, 0.25)})
    x = space.coords
    norm = abs(K).max()
    for u in (np.tile([1.0, 0.0], len(x)), np.tile([0.0, 1.0], len(x)),
              np.column_stack([-x[:, 1], x[:, 0]]).ravel()):
        assert np.abs(K @ u).max() <= 1e-9 * norm


def test_translation_nullspace_on_curved_mesh(hertz_coarse):
    space = FunctionSpace(hertz_coarse.refine_uniform(1))
    K, _ = assemble_stiffness(space, STEEL)
    for c in (0, 1):
        u = np.zeros(space.n_dofs)
        u[c::2] = 1.0
        assert np.abs(K @ u).max() <= 1e-9 * abs(K).max()


# ------------------------------------------------------------- prolongation
def test_conforming_prolongation_is_identity(square4):
    P = FunctionSpace(square4).P
    assert (P - sp.identity(P.shape[0])).count_nonzero() == 0


def test_one_hanging_node_rows():
    space = FunctionSpace(generate_rectangle(2.0, 1.0, 2, 1).refine([0]))
    (s,) = np.flatnonzero(space.is_hanging)
    masters = space.constraints[0].master_nodes
    for c in (0, 1):
        row = space.P[2 * s + c].toarray().ravel()
        cols = np.flatnonzero(row)
        assert sorted(cols.tolist()) == sorted(space.conforming_dofs(list(masters), c).tolist())
        np.testing.assert_array_equal(row[cols], [0.5, 0.5])


@given(st.integers(0, 2 ** 31 - 1), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_prolongation_reproduces_linear_fields(seed, coef):
    space = FunctionSpace(_straight_refined(seed))
    A, b = np.reshape(coef[:4], (2, 2)), coef[4:]
    full = linear_field(space.coords, A, b)
    cdofs = space.dofs(space.conforming_nodes)
    np.testing.assert_allclose(space.P @ full[cdofs], full, atol=1e-12)


# ----------------------------------------------------------- conforming form
def test_identity_projection_keeps_stiffness(square4):
    space = FunctionSpace(square4)
    K_all, L_all = assemble_stiffness(space, {1: Material(1.0, 0.3)})
    K, L = form_conforming(K_all, L_all, space.P)
    assert abs(K - K_all).max() == 0.0


@given(st.integers(0, 2 ** 31 - 1))
def test_congruence_symmetric_and_energy_equivalent(seed):
    rng = np.random.default_rng(seed)
    mesh = random_refinement(generate_half_disk_pair(2.0, 2.0, 2, 10), rng, rounds=2, fraction=0.2)
    space = FunctionSpace(mesh)
    K_all, L_all = assemble_stiffness(space, STEEL)
    K, _ = form_conforming(K_all, L_all, space.P)
    assert symmetry_defect(K) <= 1e-10
    U = rng.standard_normal(K.shape[0])
    PU = space.P @ U
    assert U @ (K @ U) == pytest.approx(PU @ (K_all @ PU), rel=1e-10)


def test_form_conforming_dimension_check(square4):
    space = FunctionSpace(square4)
    K_all, L_all = assemble_stiffness(space, {1: Material(1.0, 0.3)})
    with pytest.raises(ValueError):
        form_conforming(K_all, L_all[:-2], space.P)


# ---------------------------------------------------------------- Dirichlet
def _boxed(seed, tags=(DIRICHLET,) * 4):
    rng = np.random.default_rng(seed)
    mesh = generate_rectangle(2.0, 1.0, 4, 2, tags=tags)
    return random_refinement(mesh, rng, rounds=3, fraction=0.25)


def test_zero_dirichlet_gives_zero():
    space = FunctionSpace(_boxed(0))
    K_all, L_all = assemble_stiffness(space, {1: Material(1.0, 0.3)})
    K, L = form_conforming(K_all, L_all, space.P)
    nodes = space.boundary_nodes(DIRICHLET)
    dofs = space.conforming_dofs(nodes[~space.is_hanging[nodes]])
    sysd = apply_dirichlet(K, L, dofs, np.zeros(len(dofs)))
    u, it = pcg_solve(sysd.K, sysd.rhs)
    assert it == 0 and not np.any(u)


def test_eliminating_everything():
    K = sp.identity(4, format="csr")
    sysd = apply_dirichlet(K, np.zeros(4), np.arange(4), [1.0, 2.0, 3.0, 4.0])
    assert sysd.K.shape == (0, 0)
    np.testing.assert_array_equal(sysd.scatter(np.zeros(0)), [1.0, 2.0, 3.0, 4.0])


@given(st.integers(0, 2 ** 31 - 1), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_patch_test_through_hanging_nodes(seed, coef):
    space = FunctionSpace(_boxed(seed))
    A, b = np.reshape(coef[:4], (2, 2)), coef[4:]
    exact = linear_field(space.coords, A, b)
    K_all, L_all = assemble_stiffness(space, {1: Material(1.0, 0.3)})
    K, L = form_conforming(K_all, L_all, space.P)
    nodes = space.boundary_nodes(DIRICHLET)
    nodes = nodes[~space.is_hanging[nodes]]
    sysd = apply_dirichlet(K, L, space.conforming_dofs(nodes), exact[space.dofs(nodes)])
    u, _ = pcg_solve(sysd.K, sysd.rhs, rel_tol=1e-14)
    U = space.P @ sysd.scatter(u)
    assert np.abs(U - exact).max() <= 1e-9


def test_uniform_compression_constant_stress():
    E, nu, H, d = 1e3, 0.3, 1.0, 1e-3
    mesh = generate_rectangle(2.0, H, 4, 2, tags=(DIRICHLET, 0, DIRICHLET, 0)).refine([1, 5])
    space = FunctionSpace(mesh)
    mats = {1: Material(E, nu)}
    K_all, L_all = assemble_stiffness(space, mats)
    K, L = form_conforming(K_all, L_all, space.P)
    nodes = space.boundary_nodes(DIRICHLET)
    nodes = nodes[~space.is_hanging[nodes]]
    top = nodes[space.coords[nodes, 1] > 0.5 * H]
    dofs = [space.conforming_dofs(nodes, 1), space.conforming_dofs(nodes[:1], 0)]
    vals = [np.where(np.isin(nodes, top), -d, 0.0), [0.0]]
    sysd = apply_dirichlet(K, L, np.concatenate(dofs), np.concatenate(vals))
    u, _ = pcg_solve(sysd.K, sysd.rhs, rel_tol=1e-14)
    sig, _, _ = gauss_stresses(space, space.P @ sysd.scatter(u), mats)
    # lateral faces are free, so sigma_xx = 0 and sigma_yy = E/(1 - nu^2) eps_yy
    want = -E / (1 - nu ** 2) * d / H
    np.testing.assert_allclose(sig[..., 1], want, rtol=1e-8)
    assert np.abs(sig[..., 0]).max() <= 1e-8 * abs(want)


@given(st.integers(0, 2 ** 31 - 1))
def test_reduced_system_positive_definite(seed):
    rng = np.random.default_rng(seed)
    space = FunctionSpace(_boxed(seed, tags=(DIRICHLET, 0, 0, 0)))
    K_all, L_all = assemble_stiffness(space, {1: Material(2.0, 0.3)})
    K, L = form_conforming(K_all, L_all, space.P)
    nodes = space.boundary_nodes(DIRICHLET)
    dofs = space.conforming_dofs(nodes[~space.is_hanging[nodes]])
    sysd = apply_dirichlet(K, L, dofs, np.zeros(len(dofs)))
    V = rng.standard_normal((sysd.K.shape[0], 20))
    assert np.all(np.einsum("ij,ij->j", V, sysd.K @ V) > 0)
    assert np.linalg.eigvalsh(sysd.K.toarray()).min() > 0


# ----------------------------------------------------------------------- PCG
def test_pcg_identity():
    b = np.arange(1.0, 6.0)
    x, it = pcg_solve(sp.identity(5, format="csr"), b)
    np.testing.assert_allclose(x, b)
    assert it == 1


def test_pcg_diagonal_one_iteration():
    d = np.array([1.0, 3.0, 10.0, 1e4])
    x, it = pcg_solve(sp.diags(d).tocsr(), np.ones(4))
    np.testing.assert_allclose(x, 1 / d, rtol=1e-14)
    assert it == 1


@given(st.integers(0, 2 ** 31 - 1))
def test_pcg_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((50, 50))
    A = M.T @ M + np.eye(50)
    b = rng.standard_normal(50)
    x, _ = pcg_solve(sp.csr_matrix(A), b, rel_tol=1e-12)
    want = np.linalg.solve(A, b)
    assert np.linalg.norm(x - want) <= 1e-8 * np.linalg.norm(want)


def test_pcg_residual_monotone_in_energy_norm():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((40, 40))
    A = M.T @ M + 0.1 * np.eye(40)
    b = rng.standard_normal(40)
    xs = np.linalg.solve(A, b)
    errs = []
    pcg_solve(sp.csr_matrix(A), b, rel_tol=1e-12,
              callback=lambda x, r: errs.append((x - xs) @ A @ (x - xs)))
    assert all(b2 <= b1 * (1 + 1e-9) for b1, b2 in zip(errs, errs[1:]))


def test_pcg_errors():
    with pytest.raises(MatrixError):
        pcg_solve(sp.diags([1.0, -1.0]).tocsr(), np.ones(2))
    with pytest.raises(MatrixError):
        pcg_solve(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])), np.array([1.0, -1.0]))
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    with pytest.raises(SolverError):
        pcg_solve(sp.csr_matrix(M.T @ M + 1e-3 * np.eye(30)), np.ones(30), max_iter=2)


# ---------------------------------------------------------------- misc
def test_q2_needs_conforming_mesh(square4):
    with pytest.raises(ConfigError):
        FunctionSpace(square4.refine([0]), order=2)
    with pytest.raises(ConfigError):
        FunctionSpace(square4, order=3)


def test_materials_validated():
    with pytest.raises(ConfigError):
        Material(-1.0, 0.3)
    with pytest.raises(ConfigError):
        Material(1.0, 0.5)


def test_energy_error_between_orders(square4):
    mesh = square4
    mats = {1: Material(1.0, 0.3)}
    s1, s2 = FunctionSpace(mesh), FunctionSpace(mesh.refine_uniform(1), order=2)
    A = np.array([[0.1, 0.2], [0.0, -0.3]])
    u1 = linear_field(s1.coords, A, [0, 0])
    u2 = linear_field(s2.coords, A, [0, 0])
    assert energy_error(s1, u1, s2, u2, mats) <= 1e-12
    # the energy norm of u equals sqrt(2 * strain energy)
    assert energy_error(s1, u1, s1, 0 * u1, mats) == pytest.approx(np.sqrt(2 * strain_energy(s1, u1, mats)),
                                                                     rel=1e-12)
