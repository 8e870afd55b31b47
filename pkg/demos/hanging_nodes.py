"""Hanging nodes on a small patch: what refinement creates and how the constraints behave.

    python3 demos/hanging_nodes.py

A 4x2 rectangle gets one element split.  The neighbours of the split element
now carry mid-edge nodes that are not free unknowns; the prolongation P fills
them in from the two edge ends.  A linear displacement imposed on the boundary
is then reproduced exactly inside, hanging nodes included.
"""

import numpy as np

from contact_amr.fem import FunctionSpace, Material, apply_dirichlet, assemble_stiffness, form_conforming, pcg_solve
from contact_amr.mesh import DIRICHLET, generate_rectangle

mesh = generate_rectangle(2.0, 1.0, 4, 2, tags=(DIRICHLET,) * 4)
mesh = mesh.refine([1]).refine([mesh.n_elements])    # split element 1, then one of its children
space = FunctionSpace(mesh)

print(f"{mesh.n_leaves} leaves, {mesh.n_nodes} nodes, {int(space.is_hanging.sum())} hanging")
for node in np.flatnonzero(space.is_hanging):
    x, y = space.coords[node]
    row = space.P[2 * node]
    masters = [(c // 2, w) for c, w in zip(row.indices, row.data)]
    print(f"  node {node:3d} at ({x:.3f}, {y:.3f}) <- " +
          ", ".join(f"{w:.2f} x conforming node {c}" for c, w in masters))

# Patch test: u = A x + b on the boundary, solve, compare everywhere.
A = np.array([[1e-3, 2e-4], [-5e-4, 3e-4]])
b = np.array([1e-4, -2e-4])
exact = (space.coords @ A.T + b).ravel()

K_all, L_all = assemble_stiffness(space, {1: Material(210e9, 0.3)})
K, L = form_conforming(K_all, L_all, space.P)
nodes = space.boundary_nodes(DIRICHLET)
nodes = nodes[~space.is_hanging[nodes]]
system = apply_dirichlet(K, L, space.conforming_dofs(nodes), exact[space.dofs(nodes)])
u, iters = pcg_solve(system.K, system.rhs, rel_tol=1e-14)
U = space.P @ system.scatter(u)

print(f"\nPCG iterations: {iters}")
print(f"max |U - exact| over all nodes: {np.abs(U - exact).max():.2e}")
print(f"conforming system size {K.shape[0]} vs all-node size {K_all.shape[0]}")
