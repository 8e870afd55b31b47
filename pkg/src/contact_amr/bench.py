"""Hertz half-disk benchmark runs: configuration, modes, fits and studies."""

import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import least_squares

from .amr import LOC_LOCAL, ZZ_GLOBAL, AmrConfig, amr_contact_loop, estimate, recover_stress
from .contact import contact_pressure_profile
from .fem import ConfigError, energy_error
from .io import write_csv, write_vtk
from .mesh import CONTACT1, generate_half_disk_pair
from .partition import initial_owner, plan_from_mesh, validate
from .problem import hertz_problem, solve

log = logging.getLogger(__name__)

MODES = {
    "AMR1": "adaptive loop, ZZ equidistribution marking with the global stop",
    "AMR2": "adaptive loop, local relative marking with the marked-area stop",
    "UNIFORM": "uniform refinement levels 0..levels",
    "PENALTY_SWEEP": "interpenetration against k_N on a fixed mesh and against h at fixed k_N",
    "CONVERGENCE": "energy-norm errors of uniform Q1/Q2 and adaptive Q1 against a fine reference",
}


def _floats(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class BenchConfig:
    mode: str = "AMR1"
    radius: float = 2.0
    gap: float = 2.0
    alpha: float = 0.015
    n0: int = 4
    geom_order: int = 10
    young_modulus: float = 210e9
    poisson_ratio: float = 0.3
    k_n_factor: float = 1e4
    k_n_mode: str = "constant"          # or "mesh": k_N = E / h_min
    l_max: int = 10
    full_clamp: bool = False
    target: float = 0.02
    delta: float = 0.001
    n_max: int = 10
    ranks: int = 8
    c: float = 1.0
    levels: int = 2
    sweep_level: int = 2
    penalty_factors: tuple = (1.0, 10.0, 1e2, 1e4, 1e6)
    study_levels: tuple = (1, 2, 3)
    q2_levels: tuple = (1, 2, 3)
    reference_level: int = 4
    reference_order: int = 2
    amr_targets: tuple = (0.2, 0.1, 0.05, 0.03)
    write_vtk: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        for name in ("radius", "gap", "alpha", "young_modulus", "k_n_factor", "c"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n0 < 2 or self.geom_order < 1:
            raise ConfigError("need n0 >= 2 and geom_order >= 1")
        if not 0 <= self.poisson_ratio < 0.5:
            raise ConfigError("poisson_ratio must lie in [0, 0.5)")
        if self.k_n_mode not in ("constant", "mesh"):
            raise ConfigError("k_n_mode must be 'constant' or 'mesh'")
        if self.levels < 0 or self.sweep_level < 0:
            raise ConfigError("levels must be >= 0")

    @classmethod
    def from_mapping(cls, values):
        kinds = {f.name: f.type for f in dataclasses.fields(cls) if not f.name.startswith("_")}
        parsed = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            kind = kinds[key]
            try:
                if kind is bool:
                    parsed[key] = _bool(raw)
                elif kind is int:
                    parsed[key] = int(raw)
                elif kind is float:
                    parsed[key] = float(raw)
                elif kind is tuple:
                    default = getattr(cls, key)
                    parsed[key] = _ints(raw) if isinstance(default[0], int) else _floats(raw)
                else:
                    parsed[key] = str(raw).strip()
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
        if "mode" in parsed:
            parsed["mode"] = parsed["mode"].upper()
        return cls(**parsed)

    def amr_config(self, target=None):
        comb = LOC_LOCAL if self.mode == "AMR2" else ZZ_GLOBAL
        try:
            return AmrConfig(comb, self.target if target is None else target, self.delta,
                             self.n_max, self.ranks, self.c)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def parse_config_text(text):
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            values = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return BenchConfig.from_mapping(values)


# ------------------------------------------------------------------ problem
def base_mesh(cfg):
    return generate_half_disk_pair(cfg.radius, cfg.gap, cfg.n0, cfg.geom_order)


def make_problem(cfg, mesh=None, k_n_factor=None):
    f = cfg.k_n_factor if k_n_factor is None else k_n_factor
    k_n = f * cfg.young_modulus
    if cfg.k_n_mode == "mesh":
        if mesh is None:
            raise ConfigError("k_n_mode=mesh needs a mesh")
        k_n = cfg.young_modulus / mesh.max_diameter(mesh.leaves()).min()
    return hertz_problem(cfg.radius, cfg.gap, cfg.alpha, cfg.young_modulus, cfg.poisson_ratio,
                         k_n=k_n, l_max=cfg.l_max, full_clamp=cfg.full_clamp)


# -------------------------------------------------------------- Hertz fit
@dataclass(frozen=True)
class HertzFit:
    a: float
    p0: float
    residual: float      # relative L2 misfit over the fitted points
    n_points: int

    def pressure(self, r):
        r = np.asarray(r, float)
        return self.p0 * np.sqrt(np.clip(self.a ** 2 - r ** 2, 0.0, None)) / self.a


class FitError(ValueError):
    pass


def compressive_support(r, p):
    """Mask of the points from the centre outwards up to the first non-positive pressure."""
    order = np.argsort(r, kind="stable")
    pos = p[order] > 0
    stop = len(pos) if pos.all() else int(np.argmin(pos))
    mask = np.zeros(len(r), bool)
    mask[order[:stop]] = True
    return mask


def calibrate_hertz(r, p):
    """Least-squares fit of p = p0 sqrt(a^2 - r^2) / a on the compressive support."""
    r = np.asarray(r, float)
    p = np.asarray(p, float)
    mask = compressive_support(r, p)
    if not mask.any():
        raise FitError("no compressive contact pressure to fit")
    rs, ps = r[mask], p[mask]
    a0 = max(rs.max(), 1e-12) * 1.05
    p00 = ps.max()

    def resid(x):
        a, p0 = x
        return (p0 * np.sqrt(np.clip(a * a - rs * rs, 0.0, None)) / a - ps) / p00

    sol = least_squares(resid, [a0, p00], x_scale=[a0, p00], xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        bounds=([1e-300, 0.0], [np.inf, np.inf]))
    a, p0 = sol.x
    model = p0 * np.sqrt(np.clip(a * a - rs * rs, 0.0, None)) / a
    res = np.linalg.norm(model - ps) / np.linalg.norm(ps)
    return HertzFit(float(a), float(p0), float(res), int(mask.sum()))


def profile_error(r, p, fit, extent=1.5):
    """Relative L2 distance on [0, extent a] between a profile and the fitted law."""
    r = np.asarray(r, float)
    p = np.asarray(p, float)
    ur, inv = np.unique(r, return_inverse=True)
    pm = np.bincount(inv, weights=p) / np.bincount(inv)
    grid = np.linspace(0.0, extent * fit.a, 2001)
    ph = np.interp(grid, ur, pm)
    pf = fit.pressure(grid)
    return float(np.sqrt(trapezoid((ph - pf) ** 2, grid) / trapezoid(pf ** 2, grid)))


def pressure_profile(state, materials):
    sig = recover_stress(state.space, state.U, materials)
    return contact_pressure_profile(state.space, sig, state.pairing)


def hertz_reference(cfg, level):
    """Uniformly refined Q1 solve of the configured pair and its Hertz fit."""
    mesh = base_mesh(cfg).refine_uniform(level)
    problem = make_problem(cfg, mesh)
    state = solve(mesh, problem)
    r, p = pressure_profile(state, problem.materials)
    return state, calibrate_hertz(r, p)


def contact_h(mesh):
    """Largest diameter of the leaves touching the solid-1 contact boundary."""
    _, el, _ = mesh.leaf_edge_nodes(CONTACT1)
    return float(mesh.max_diameter(np.unique(el)).max())


# ---------------------------------------------------------------- artifacts
class Artifacts:
    def __init__(self, out, cfg):
        self.out = out
        self.cfg = cfg
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def iteration(self, n, state, err, plan, materials):
        sig = recover_stress(state.space, state.U, materials)
        r, p = contact_pressure_profile(state.space, sig, state.pairing)
        write_csv(self.path(f"pressure_{n}.csv"), ["r_m", "pressure_Pa"], zip(r, p))
        leaves = state.mesh.leaves()
        write_csv(self.path(f"partition_{n}.csv"), ["element", "rank"],
                  zip(leaves.tolist(), plan.owner[leaves].tolist()))
        if self.cfg.write_vtk:
            n_nodes = state.mesh.n_nodes
            write_vtk(self.path(f"mesh_{n}.vtk"), state.mesh,
                      point_data={"displacement": state.U.reshape(-1, 2)[:n_nodes],
                                  "stress": sig[:n_nodes]},
                      cell_data={"solid": state.mesh.solid[leaves], "level": state.mesh.level[leaves],
                                 "rank": plan.owner[leaves], "xi": err.xi})
        return r, p


REPORT_HEADER = ["n", "N_E", "N_dofs", "gamma", "eta", "marked", "contact_sweeps", "pcg_iterations",
                 "interpenetration_m", "R_C", "imbalance"]


def _report_rows(records):
    return [(r.n, r.n_elements, r.n_dofs, r.gamma, r.eta, r.marked, r.contact_sweeps,
             r.pcg_iterations, r.interpenetration, r.r_c, r.imbalance) for r in records]


# -------------------------------------------------------------------- modes
def run_amr(cfg, art=None, target=None):
    mesh = base_mesh(cfg)
    problem = make_problem(cfg, mesh)
    acfg = cfg.amr_config(target)
    profiles = {}

    def cb(n, state, err, marked, plan):
        if art is not None:
            profiles[n] = art.iteration(n, state, err, plan, problem.materials)

    state, report = amr_contact_loop(mesh, problem, acfg, callback=cb)
    return state, report, problem


def _uniform_records(cfg, art):
    from .amr import IterationRecord
    mesh0 = base_mesh(cfg)
    records = []
    state = None
    for lev in range(cfg.levels + 1):
        mesh = mesh0.refine_uniform(lev)
        problem = make_problem(cfg, mesh)
        state = solve(mesh, problem)
        err = estimate(state.space, state.U, problem.materials)
        owner = initial_owner(mesh, cfg.ranks)
        plan = plan_from_mesh(mesh, state.pairing.element_pairs, owner, cfg.ranks, cfg.c)
        rep = validate(plan, state.pairing.element_pairs, mesh)
        res = state.result
        records.append(IterationRecord(lev, mesh.n_leaves, state.n_dofs, err.gamma, 0.0, 0, res.sweeps,
                                       int(sum(res.pcg_iterations)), list(res.active_sizes),
                                       res.converged, state.interpenetration, plan.r_c,
                                       rep.imbalance, rep.violations))
        if art is not None:
            art.iteration(lev, state, err, plan, problem.materials)
    return state, records, problem


def penalty_sweep(cfg):
    """Rows (k_N, interpenetration, active pairs, sweeps, pcg) on one mesh."""
    mesh = base_mesh(cfg).refine_uniform(cfg.sweep_level)
    problem = make_problem(cfg, mesh)
    rows = []
    for f in cfg.penalty_factors:
        st = solve(mesh, problem, k_n=f * cfg.young_modulus)
        rows.append((f * cfg.young_modulus, st.interpenetration, len(st.result.active),
                     st.result.sweeps, int(sum(st.result.pcg_iterations)), st.result.converged))
    return rows


def mesh_step_sweep(cfg, levels=None):
    """Rows (level, h, interpenetration, ratio) at fixed k_N."""
    levels = levels or (cfg.sweep_level, cfg.sweep_level + 1, cfg.sweep_level + 2)
    mesh0 = base_mesh(cfg)
    rows = []
    for lev in levels:
        mesh = mesh0.refine_uniform(lev)
        st = solve(mesh, make_problem(cfg, mesh))
        h = contact_h(mesh)
        rows.append((lev, h, st.interpenetration, st.interpenetration / h))
    return rows


def loglog_slope(x, y):
    x = np.log(np.asarray(x, float))
    y = np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ConvergenceStudy:
    rows: list                # (method, order, level, h, N, error)
    slopes: dict              # method -> (h-slope, N-slope)
    reference_dofs: int

    def dof_ratio(self):
        """Uniform Q1 DOFs over AMR Q1 DOFs at the finest uniform Q1 error."""
        q1 = [r for r in self.rows if r[0] == "UNIFORM_Q1"]
        if not q1:
            return float("nan")
        finest = min(q1, key=lambda r: r[5])
        return finest[4] / dofs_at_error(self.rows, "AMR_Q1", finest[5])


def convergence_study(cfg):
    """Energy-norm errors against a uniform reference on the same root mesh."""
    finest = max(max(cfg.study_levels), max(cfg.q2_levels) if cfg.q2_levels else 0)
    if cfg.reference_level < finest + 1:
        raise ConfigError("reference level must be finer than every study level")
    mesh0 = base_mesh(cfg)
    problem = make_problem(cfg, mesh0)
    mats = problem.materials
    ref_mesh = mesh0.refine_uniform(cfg.reference_level)
    ref = solve(ref_mesh, problem, order=cfg.reference_order)
    rows = []
    h0 = contact_h(mesh0)
    for order, levels in ((1, cfg.study_levels), (2, cfg.q2_levels)):
        for lev in levels:
            mesh = mesh0.refine_uniform(lev)
            st = solve(mesh, problem, order=order)
            e = energy_error(st.space, st.U, ref.space, ref.U, mats)
            rows.append((f"UNIFORM_Q{order}", order, lev, h0 / 2 ** lev, st.n_dofs, e))
            log.info("uniform Q%d level %d: N=%d error=%.4e", order, lev, st.n_dofs, e)
    for t in cfg.amr_targets:
        st, rep, _ = run_amr(dataclasses.replace(cfg, mode="AMR1"), target=t)
        e = energy_error(st.space, st.U, ref.space, ref.U, mats)
        rows.append(("AMR_Q1", 1, len(rep.records), float("nan"), st.n_dofs, e))
        log.info("AMR target %.3g: N=%d error=%.4e", t, st.n_dofs, e)
    slopes = {}
    if not rows:
        raise ConfigError("convergence study has no levels or targets")
    for method in sorted({r[0] for r in rows}):
        sub = [r for r in rows if r[0] == method]
        hs = loglog_slope([r[3] for r in sub], [r[5] for r in sub]) if method.startswith("UNIFORM") else float("nan")
        ns = loglog_slope([r[4] for r in sub], [r[5] for r in sub]) if len(sub) > 1 else float("nan")
        slopes[method] = (hs, ns)
    return ConvergenceStudy(rows, slopes, ref.n_dofs)


def dofs_at_error(rows, method, error):
    """DOF count of `method` at `error` by log-log interpolation of its curve."""
    sub = sorted((r[5], r[4]) for r in rows if r[0] == method)
    e = np.log([s[0] for s in sub])
    n = np.log([s[1] for s in sub])
    if not e[0] <= math.log(error) <= e[-1]:
        return float("nan")
    return float(np.exp(np.interp(math.log(error), e, n)))


# ---------------------------------------------------------------------- run
def run(cfg, out):
    """Run one benchmark mode, writing its artifacts to `out`.  Returns the summary text."""
    art = Artifacts(out, cfg)
    t0 = time.perf_counter()
    lines = [f"mode: {cfg.mode}", f"started: {time.strftime('%Y-%m-%d %H:%M:%S')}"]
    if cfg.mode in ("AMR1", "AMR2"):
        state, report, problem = run_amr(cfg, art)
        write_csv(art.path("report.csv"), REPORT_HEADER, _report_rows(report.records))
        f = report.final
        lines += [f"stop reason: {report.reason}", f"iterations: {len(report.records)}",
                  f"N_E: {f.n_elements}", f"N: {f.n_dofs}", f"gamma: {f.gamma:.6g}",
                  f"eta: {f.eta:.6g}", f"target: {cfg.target}"]
        lines += _fit_lines(state, problem)
    elif cfg.mode == "UNIFORM":
        state, records, problem = _uniform_records(cfg, art)
        write_csv(art.path("report.csv"), REPORT_HEADER, _report_rows(records))
        lines += [f"levels: {cfg.levels}"] + [f"level {r.n}: N_E={r.n_elements} N={r.n_dofs} gamma={r.gamma:.6g}"
                                             for r in records]
        lines += _fit_lines(state, problem)
    elif cfg.mode == "PENALTY_SWEEP":
        rows = penalty_sweep(cfg)
        write_csv(art.path("penalty.csv"),
                  ["k_N_N_per_m", "interpenetration_m", "active_pairs", "contact_sweeps", "pcg_iterations",
                   "converged"], rows)
        hrows = mesh_step_sweep(cfg)
        write_csv(art.path("penalty_mesh.csv"), ["level", "h_m", "interpenetration_m", "ratio"], hrows)
        sel = [r for r in rows if 1e2 * cfg.young_modulus <= r[0] <= 1e6 * cfg.young_modulus]
        if len(sel) > 1:
            lines.append(f"interpenetration slope over [1e2 E, 1e6 E]: "
                         f"{loglog_slope([r[0] for r in sel], [r[1] for r in sel]):.4f}")
        mono = all(b[1] < a[1] for a, b in zip(rows, rows[1:]))
        lines.append(f"interpenetration strictly decreasing: {mono}")
        ratios = [r[3] for r in hrows]
        lines.append(f"interpenetration/h: {', '.join(f'{v:.4e}' for v in ratios)}")
    elif cfg.mode == "CONVERGENCE":
        study = convergence_study(cfg)
        write_csv(art.path("convergence.csv"), ["method", "order", "level", "h_m", "N_dofs", "energy_error"],
                  study.rows)
        lines.append(f"reference: uniform level {cfg.reference_level}, order {cfg.reference_order}, "
                     f"N={study.reference_dofs}")
        for m, (hs, ns) in study.slopes.items():
            lines.append(f"{m}: h-slope {hs:.4f}, N-slope {ns:.4f}")
        lines.append(f"uniform Q1 / AMR Q1 DOFs at matched error: {study.dof_ratio():.3f}")
    lines.append(f"elapsed_s: {time.perf_counter() - t0:.1f}")
    text = "\n".join(lines) + "\n"
    with open(art.path("summary.txt"), "w") as fh:
        fh.write(text)
    return text


def _fit_lines(state, problem):
    r, p = pressure_profile(state, problem.materials)
    try:
        fit = calibrate_hertz(r, p)
    except FitError as exc:
        return [f"hertz fit: {exc}"]
    return [f"hertz a: {fit.a:.6g}", f"hertz p0: {fit.p0:.6g}", f"hertz residual: {fit.residual:.4g}"]
