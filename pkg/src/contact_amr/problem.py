"""Two-body contact problem on a hierarchical mesh: setup and one full solve."""

from dataclasses import dataclass, field

import numpy as np

from .contact import PenaltyConfig, interpenetration, pair_nodes, solve_contact
from .fem import (ConfigError, FunctionSpace, Material, apply_dirichlet,
                  assemble_stiffness, form_conforming)
from .mesh import CONTACT1, CONTACT2, DIRICHLET


@dataclass(frozen=True)
class DirichletCondition:
    """Prescribed displacement component on a boundary tag.

    With `anchor` set, only the tagged node closest to that point (and in
    `solid`, if given) is constrained.
    """

    tag: int
    component: int
    value: float
    solid: int = None
    anchor: tuple = None


@dataclass
class ContactProblem:
    materials: dict
    dirichlet: list
    penalty: PenaltyConfig
    normal: tuple = (0.0, 1.0)
    contact_tags: tuple = (CONTACT1, CONTACT2)
    # the penalty part k_N B^T D dominates ||b||; 1e-10 hides contact-edge forces
    pcg_tol: float = 1e-12

    def __post_init__(self):
        for s, m in self.materials.items():
            if not isinstance(m, Material):
                raise ConfigError(f"material of solid {s} is not a Material")


def hertz_problem(radius, gap, alpha, young_modulus=210e9, poisson_ratio=0.3,
                  k_n=None, l_max=10, full_clamp=False):
    """Two half-disks pushed together by u_D = gap/2 + alpha R on their flat faces.

    Solid 1 (below) moves up, solid 2 down.  By default the flat faces slide
    freely sideways and u_x is pinned at the face node nearest x = 0;
    ``full_clamp=True`` fixes u_x on the whole face instead.
    """
    u_d = 0.5 * gap + alpha * radius
    mat = Material(young_modulus, poisson_ratio)
    y1 = -(0.5 * gap + radius)
    bcs = [DirichletCondition(DIRICHLET, 1, u_d, solid=1),
           DirichletCondition(DIRICHLET, 1, -u_d, solid=2)]
    if full_clamp:
        bcs += [DirichletCondition(DIRICHLET, 0, 0.0)]
    else:
        bcs += [DirichletCondition(DIRICHLET, 0, 0.0, solid=1, anchor=(0.0, y1)),
                DirichletCondition(DIRICHLET, 0, 0.0, solid=2, anchor=(0.0, -y1))]
    if k_n is None:
        k_n = 1e4 * young_modulus
    return ContactProblem({1: mat, 2: mat}, bcs, PenaltyConfig(k_n, l_max))


def dirichlet_data(space, conditions):
    """Conforming DOFs and values for a list of DirichletCondition."""
    dofs, vals = [], []
    for bc in conditions:
        nodes = space.boundary_nodes(bc.tag)
        nodes = nodes[~space.is_hanging[nodes]]
        if bc.solid is not None:
            nodes = nodes[space.node_solid[nodes] == bc.solid]
        if bc.anchor is not None and len(nodes):
            d = np.linalg.norm(space.coords[nodes] - np.asarray(bc.anchor), axis=1)
            nodes = nodes[[np.argmin(d)]]
        if not len(nodes):
            raise ConfigError(f"Dirichlet condition on tag {bc.tag} selects no node")
        d = space.conforming_dofs(nodes, bc.component)
        dofs.append(d)
        vals.append(np.full(len(d), float(bc.value)))
    return np.concatenate(dofs), np.concatenate(vals)


@dataclass
class SolveState:
    mesh: object
    space: FunctionSpace
    system: object          # ReducedSystem
    pairing: object         # ContactPairing
    B: object               # pairing rows on free DOFs
    D: np.ndarray           # gaps shifted by prescribed DOFs
    result: object          # ContactResult
    U: np.ndarray           # all-node displacement vector
    penalty: PenaltyConfig = field(repr=False, default=None)

    @property
    def n_dofs(self):
        return len(self.system.free)

    @property
    def interpenetration(self):
        return interpenetration(self.pairing.B, self.pairing.gaps, self.U)


def reduced_pairing(pairing, space, system):
    """Pairing rows on the free conforming DOFs, prescribed values moved into D."""
    Bh = (pairing.B @ space.P).tocsc()
    B_free = Bh[:, system.free].tocsr()
    shift = Bh[:, system.fixed] @ system.values if len(system.fixed) else 0.0
    return B_free, pairing.gaps - shift


def solve(mesh, problem, order=1, initial_active=None, k_n=None, warm_nodes=None):
    """Assemble, restrict to conforming DOFs, eliminate Dirichlet data and run
    the active-set contact loop.  Returns a :class:`SolveState`.

    `warm_nodes` seeds the active set with the pairs whose solid-1 node id is
    listed, which is how a previous mesh's active set is carried over.
    """
    space = FunctionSpace(mesh, order)
    K_all, L_all = assemble_stiffness(space, problem.materials)
    K, L = form_conforming(K_all, L_all, space.P)
    dofs, vals = dirichlet_data(space, problem.dirichlet)
    system = apply_dirichlet(K, L, dofs, vals)
    pairing = pair_nodes(space, *problem.contact_tags, normal=problem.normal)
    B, D = reduced_pairing(pairing, space, system)
    if warm_nodes is not None:
        initial_active = np.flatnonzero(np.isin(pairing.nodes1, warm_nodes))
    cfg = problem.penalty
    if k_n is not None or initial_active is not None:
        cfg = PenaltyConfig(cfg.k_n if k_n is None else k_n, cfg.l_max,
                            None if initial_active is None else tuple(np.asarray(initial_active).tolist()))
    result = solve_contact(system.K, system.rhs, B, D, cfg, rel_tol=problem.pcg_tol)
    U = space.P @ system.scatter(result.U)
    return SolveState(mesh, space, system, pairing, B, D, result, U, cfg)
