"""Two half-disks pressed together, refined adaptively until the ZZ estimate drops below 2%.

Run from the repository root:

    python3 demos/hertz_amr.py

Each AMR iteration prints the element count, the relative estimated error,
how many contact sweeps the active-set loop needed and where the finest
elements sit.  The last lines fit the Hertz law to the recovered contact
pressure.
"""

import numpy as np

from contact_amr.amr import amr_contact_loop
from contact_amr.bench import BenchConfig, base_mesh, calibrate_hertz, make_problem, pressure_profile

cfg = BenchConfig(mode="AMR1", target=0.02)
mesh = base_mesh(cfg)
problem = make_problem(cfg, mesh)
print(f"root mesh: {mesh.n_leaves} quads, geometry order {cfg.geom_order}")
print(f"Dirichlet push per solid: {cfg.gap / 2 + cfg.alpha * cfg.radius:.3f} m\n")


def show(n, state, err, marked, plan):
    m = state.mesh
    leaves = m.leaves()
    lv = m.level[leaves]
    fine = leaves[lv == lv.max()]
    r = np.abs(m.nodes[m.corners[fine]].mean(axis=1)[:, 0])
    res = state.result
    print(f"iter {n}: N_E={m.n_leaves:6d}  N={state.n_dofs:6d}  gamma={err.gamma:.4f}  "
          f"active pairs={len(res.active):3d} after {res.sweeps} sweeps  "
          f"finest level {lv.max()} spans |x| in [{r.min():.3f}, {r.max():.3f}]  R_C={plan.r_c}")


state, report = amr_contact_loop(mesh, problem, cfg.amr_config(), callback=show)
print(f"\nstopped: {report.reason}")

r, p = pressure_profile(state, problem.materials)
fit = calibrate_hertz(r, p)
print(f"Hertz fit: a = {fit.a:.4f} m, p0 = {fit.p0 / 1e9:.3f} GPa, residual {fit.residual:.2%}")

# The profile itself, sampled coarsely for a quick look.
order = np.argsort(r)
for k in order[:: max(1, len(order) // 12)]:
    print(f"  r = {r[k]:.4f} m   p = {p[k] / 1e9:7.3f} GPa   law {fit.pressure(r[k]) / 1e9:7.3f} GPa")
