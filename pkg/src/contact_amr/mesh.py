"""Hierarchical quadrilateral meshes with super-parametric geometry.

Every coarse element owns an order-q tensor Lagrange geometry (its *root*
map).  Refined elements never store their own geometric nodes: a child is
described by the dyadic sub-square ``box`` it occupies in the root
reference square, so the child map is the root map composed with an affine
embedding.  This is exactly the map obtained by interpolating the parent map
at the child's sub-square nodes, and it keeps curved boundaries intact under
any number of refinements.

Corner nodes are shared topologically.  A new mid-edge node is keyed by the
ids of the edge end points, never by its coordinates.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import gauss_square, gll_points, lagrange_1d

DIRICHLET = 1
CONTACT1 = 2
CONTACT2 = 3
TAG_NAMES = {DIRICHLET: "DIRICHLET", CONTACT1: "CONTACT1", CONTACT2: "CONTACT2"}

# lower-left offset of child c inside the parent square, in half-widths
CHILD_OFFSET = np.array([(0, 0), (1, 0), (1, 1), (0, 1)])
# parent sides touched by child c (edge k joins corners k and k+1)
CHILD_SIDES = ((0, 3), (0, 1), (1, 2), (2, 3))
EDGE_MIDPOINTS = np.array([(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)])
CORNER_REF = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


class GeometryError(ValueError):
    """Raised for degenerate or inverted element maps."""


class RefinementError(ValueError):
    pass


def edge_key(a, b):
    """Orientation-free int64 key of the edge joining nodes `a` and `b`."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return (np.minimum(a, b) << 32) | np.maximum(a, b)


def split_key(key):
    key = np.asarray(key, dtype=np.int64)
    return key >> 32, key & 0xFFFFFFFF


@dataclass(frozen=True)
class Element:
    """Read-only view of one element of a :class:`Mesh`."""

    id: int
    corner_node_ids: tuple
    geom_nodes: np.ndarray
    level: int
    parent: int | None
    children: tuple | None
    solid: int

    @property
    def is_leaf(self):
        return self.children is None


@dataclass(frozen=True)
class HangingConstraint:
    slave_node: int
    master_nodes: tuple
    weights: tuple


class Mesh:
    """Hierarchical quad mesh of one or two solids.

    Element arrays are indexed by element id and cover the whole refinement
    tree; ``is_leaf`` selects the active elements.
    """

    def __init__(self, nodes, corners, solid, edge_tags, root_geom, geom_order,
                 *, level=None, parent=None, children=None, child_index=None,
                 root=None, box=None, mid_keys=None, mid_nodes=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.corners = np.asarray(corners, dtype=np.int64)
        n = len(self.corners)
        self.solid = np.asarray(solid, dtype=np.int64)
        self.edge_tags = np.asarray(edge_tags, dtype=np.int64)
        self.root_geom = np.asarray(root_geom, dtype=float)
        self.geom_order = int(geom_order)
        self.level = np.zeros(n, np.int64) if level is None else np.asarray(level, np.int64)
        self.parent = np.full(n, -1, np.int64) if parent is None else np.asarray(parent, np.int64)
        self.children = (np.full((n, 4), -1, np.int64) if children is None
                         else np.asarray(children, np.int64))
        self.child_index = (np.full(n, -1, np.int64) if child_index is None
                            else np.asarray(child_index, np.int64))
        self.root = np.arange(n, dtype=np.int64) if root is None else np.asarray(root, np.int64)
        if box is None:
            box = np.tile([-1.0, -1.0, 2.0], (n, 1))
        self.box = np.asarray(box, dtype=float)
        self.mid_keys = np.zeros(0, np.int64) if mid_keys is None else np.asarray(mid_keys, np.int64)
        self.mid_nodes = np.zeros(0, np.int64) if mid_nodes is None else np.asarray(mid_nodes, np.int64)

    # ------------------------------------------------------------------ basics
    @property
    def n_elements(self):
        return len(self.corners)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def is_leaf(self):
        return self.children[:, 0] < 0

    def leaves(self):
        return np.flatnonzero(self.is_leaf)

    @property
    def n_leaves(self):
        return int(self.is_leaf.sum())

    def element(self, i):
        i = int(i)
        q = self.geom_order
        g = gll_points(q)
        xi, eta = np.meshgrid(g, g)
        ref = np.column_stack([xi.ravel(), eta.ravel()])
        geom = self.map_points([i], ref)[0].reshape(q + 1, q + 1, 2)
        ch = tuple(int(c) for c in self.children[i]) if self.children[i, 0] >= 0 else None
        par = int(self.parent[i]) if self.parent[i] >= 0 else None
        return Element(i, tuple(int(c) for c in self.corners[i]), geom, int(self.level[i]),
                       par, ch, int(self.solid[i]))

    @property
    def boundary_edges(self):
        """(element, local edge, tag) triples on leaf elements."""
        leaves = self.leaves()
        e, k = np.nonzero(self.edge_tags[leaves] > 0)
        return [(int(leaves[a]), int(b), int(self.edge_tags[leaves[a], b])) for a, b in zip(e, k)]

    def leaf_edge_nodes(self, tag, leaves=None):
        """Node pairs (n_edges, 2) of leaf edges carrying `tag`, plus owners."""
        if leaves is None:
            leaves = self.leaves()
        e, k = np.nonzero(self.edge_tags[leaves] == tag)
        el = leaves[e]
        a = self.corners[el, k]
        b = self.corners[el, (k + 1) % 4]
        return np.column_stack([a, b]), el, k

    def tagged_nodes(self, tag):
        pairs, _, _ = self.leaf_edge_nodes(tag)
        return np.unique(pairs)

    def max_diameter(self, elems=None):
        """Largest corner-to-corner distance of each element (mesh step h)."""
        if elems is None:
            elems = self.leaves()
        x = self.nodes[self.corners[elems]]
        d = np.stack([np.linalg.norm(x[:, i] - x[:, j], axis=1)
                      for i in range(4) for j in range(i + 1, 4)], axis=1)
        return d.max(axis=1)

    # ---------------------------------------------------------------- geometry
    def _eval_roots(self, roots, pts, jacobian):
        g = gll_points(self.geom_order)
        n = len(g)
        out = np.empty((len(pts), 2))
        jac = np.empty((len(pts), 2, 2)) if jacobian else None
        if jacobian:
            lx, dlx = lagrange_1d(g, pts[:, 0], derivative=True)
            ly, dly = lagrange_1d(g, pts[:, 1], derivative=True)
        else:
            lx = lagrange_1d(g, pts[:, 0])
            ly = lagrange_1d(g, pts[:, 1])
        order = np.argsort(roots, kind="stable")
        sr = roots[order]
        cuts = np.flatnonzero(np.diff(sr)) + 1
        starts = np.concatenate(([0], cuts))
        stops = np.concatenate((cuts, [len(sr)]))
        for s0, s1 in zip(starts, stops):
            idx = order[s0:s1]
            geo = self.root_geom[sr[s0]]
            # x = sum_ij ly_j lx_i G[j, i]
            t = np.einsum("pj,jid->pid", ly[idx], geo)
            out[idx] = np.einsum("pi,pid->pd", lx[idx], t)
            if jacobian:
                jac[idx, :, 0] = np.einsum("pi,pid->pd", dlx[idx], t)
                jac[idx, :, 1] = np.einsum("pi,pid->pd", lx[idx], np.einsum("pj,jid->pid", dly[idx], geo))
        return out, jac

    def root_coordinates(self, elems, ref):
        """Map element reference points to root reference coordinates."""
        elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
        ref = np.asarray(ref, dtype=float)
        box = self.box[elems]
        if ref.ndim == 2:
            ref = np.broadcast_to(ref, (len(elems),) + ref.shape)
        return box[:, None, :2] + 0.5 * (ref + 1.0) * box[:, None, 2:3]

    def map_points(self, elems, ref, jacobian=False, chunk=400_000):
        """Physical images of reference points.

        `ref` is (Q, 2) shared by all elements or (E, Q, 2).  Returns x with
        shape (E, Q, 2) and, if requested, J[e, q, d, c] = dx_d / dref_c.
        """
        elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
        rr = self.root_coordinates(elems, ref)
        ne, nq = rr.shape[:2]
        roots = np.repeat(self.root[elems], nq)
        flat = rr.reshape(-1, 2)
        x = np.empty((len(flat), 2))
        jac = np.empty((len(flat), 2, 2)) if jacobian else None
        for c0 in range(0, len(flat), chunk):
            sl = slice(c0, c0 + chunk)
            xx, jj = self._eval_roots(roots[sl], flat[sl], jacobian)
            x[sl] = xx
            if jacobian:
                jac[sl] = jj
        x = x.reshape(ne, nq, 2)
        if not jacobian:
            return x
        scale = 0.5 * self.box[elems, 2]
        jac = jac.reshape(ne, nq, 2, 2) * scale[:, None, None, None]
        return x, jac

    def geometry_map(self, element, ref_point):
        return self.map_points([element], np.atleast_2d(ref_point))[0, 0]

    def quadrature_order(self):
        return self.geom_order + 1

    def element_measure(self, elems=None, npts=None):
        """Area of each element from the order-q map, by Gauss quadrature."""
        if elems is None:
            elems = self.leaves()
        scalar = np.ndim(elems) == 0
        elems = np.atleast_1d(np.asarray(elems, dtype=np.int64))
        pts, wts = gauss_square(npts or self.quadrature_order())
        out = np.empty(len(elems))
        step = max(1, 200_000 // len(wts))
        for c0 in range(0, len(elems), step):
            sub = elems[c0:c0 + step]
            _, jac = self.map_points(sub, pts, jacobian=True)
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            if np.any(det <= 0):
                bad = sub[np.any(det <= 0, axis=1)]
                raise GeometryError(f"non-positive Jacobian in elements {bad[:10].tolist()}")
            out[c0:c0 + step] = det @ wts
        return out[0] if scalar else out

    def min_jacobian(self, elems=None, npts=None):
        if elems is None:
            elems = self.leaves()
        pts, _ = gauss_square(npts or self.quadrature_order())
        _, jac = self.map_points(elems, pts, jacobian=True)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        return det.min(axis=1)

    # -------------------------------------------------------------- refinement
    def _leaf_edge_table(self):
        leaves = self.leaves()
        c = self.corners[leaves]
        keys = edge_key(c, np.roll(c, -1, axis=1)).ravel()
        owners = np.repeat(leaves, 4)
        order = np.argsort(keys, kind="stable")
        return keys[order], owners[order]

    def _coarser_neighbors(self, elems, table):
        keys_sorted, owners = table
        elems = elems[self.level[elems] > 0]
        if not len(elems):
            return np.zeros(0, np.int64)
        par = self.parent[elems]
        ci = self.child_index[elems]
        found = []
        for side_slot in range(2):
            side = np.array([CHILD_SIDES[c][side_slot] for c in ci])
            a = self.corners[par, side]
            b = self.corners[par, (side + 1) % 4]
            k = edge_key(a, b)
            pos = np.searchsorted(keys_sorted, k)
            pos = np.minimum(pos, len(keys_sorted) - 1)
            hit = keys_sorted[pos] == k
            found.append(owners[pos[hit]])
        return np.unique(np.concatenate(found))

    def closure(self, marked, partner=None):
        """Smallest superset of `marked` whose refinement keeps the 2:1 rule.

        `partner` optionally maps element id -> paired element id (or -1);
        paired elements are refined together.
        """
        marked = np.unique(np.asarray(marked, dtype=np.int64))
        if len(marked) and not np.all(self.is_leaf[marked]):
            raise RefinementError("only leaf elements can be marked")
        flag = np.zeros(self.n_elements, bool)
        flag[marked] = True
        table = self._leaf_edge_table()
        frontier = marked
        while len(frontier):
            new = [self._coarser_neighbors(frontier, table)]
            if partner is not None:
                p = partner[frontier]
                new.append(p[p >= 0])
            new = np.unique(np.concatenate(new))
            new = new[~flag[new]]
            flag[new] = True
            frontier = new
        return np.flatnonzero(flag)

    def refine(self, marked, partner=None):
        """Return a new mesh with the 2:1 closure of `marked` split in four."""
        marked = np.asarray(marked, dtype=np.int64).ravel()
        if len(marked) == 0:
            return self
        todo = self.closure(marked, partner)
        return self._split(todo)

    def refine_uniform(self, levels=1):
        mesh = self
        for _ in range(levels):
            mesh = mesh._split(mesh.leaves())
        return mesh

    def _split(self, todo):
        todo = np.sort(np.asarray(todo, dtype=np.int64))
        m = len(todo)
        c = self.corners[todo]
        ekeys = edge_key(c, np.roll(c, -1, axis=1))
        mid = np.full((m, 4), -1, np.int64)
        if len(self.mid_keys):
            pos = np.minimum(np.searchsorted(self.mid_keys, ekeys), len(self.mid_keys) - 1)
            found = self.mid_keys[pos] == ekeys
            mid[found] = self.mid_nodes[pos[found]]
        else:
            found = np.zeros((m, 4), bool)
        n0 = self.n_nodes
        newkeys, first, inverse = np.unique(ekeys[~found], return_index=True, return_inverse=True)
        new_edge_ids = n0 + np.arange(len(newkeys))
        mid[~found] = new_edge_ids[inverse]
        # coordinates of new edge nodes from the first element that owns them
        flat_e, flat_k = np.nonzero(~found)
        src_e = todo[flat_e[first]]
        src_k = flat_k[first]
        ref = EDGE_MIDPOINTS[src_k][:, None, :]
        edge_xy = self.map_points(src_e, ref)[:, 0] if len(src_e) else np.zeros((0, 2))
        centre_ids = n0 + len(newkeys) + np.arange(m)
        centre_xy = self.map_points(todo, np.zeros((1, 2)))[:, 0]
        nodes = np.vstack([self.nodes, edge_xy, centre_xy])

        c0, c1, c2, c3 = c.T
        m0, m1, m2, m3 = mid.T
        ctr = centre_ids
        kids = np.stack([
            np.column_stack([c0, m0, ctr, m3]),
            np.column_stack([m0, c1, m1, ctr]),
            np.column_stack([ctr, m1, c2, m2]),
            np.column_stack([m3, ctr, m2, c3]),
        ], axis=1).reshape(-1, 4)
        t = self.edge_tags[todo]
        z = np.zeros(m, np.int64)
        kid_tags = np.stack([
            np.column_stack([t[:, 0], z, z, t[:, 3]]),
            np.column_stack([t[:, 0], t[:, 1], z, z]),
            np.column_stack([z, t[:, 1], t[:, 2], z]),
            np.column_stack([z, z, t[:, 2], t[:, 3]]),
        ], axis=1).reshape(-1, 4)
        ne = self.n_elements
        kid_ids = ne + np.arange(4 * m)
        b = self.box[todo]
        half = 0.5 * b[:, 2]
        kid_box = np.empty((m, 4, 3))
        for ci in range(4):
            kid_box[:, ci, 0] = b[:, 0] + CHILD_OFFSET[ci, 0] * half
            kid_box[:, ci, 1] = b[:, 1] + CHILD_OFFSET[ci, 1] * half
            kid_box[:, ci, 2] = half
        children = np.vstack([self.children, np.full((4 * m, 4), -1, np.int64)])
        children[todo] = kid_ids.reshape(m, 4)

        mid_keys = np.concatenate([self.mid_keys, newkeys])
        mid_nodes = np.concatenate([self.mid_nodes, new_edge_ids])
        order = np.argsort(mid_keys, kind="stable")
        return Mesh(
            nodes,
            np.vstack([self.corners, kids]),
            np.concatenate([self.solid, np.repeat(self.solid[todo], 4)]),
            np.vstack([self.edge_tags, kid_tags]),
            self.root_geom,
            self.geom_order,
            level=np.concatenate([self.level, np.repeat(self.level[todo] + 1, 4)]),
            parent=np.concatenate([self.parent, np.repeat(todo, 4)]),
            children=children,
            child_index=np.concatenate([self.child_index, np.tile(np.arange(4), m)]),
            root=np.concatenate([self.root, np.repeat(self.root[todo], 4)]),
            box=np.vstack([self.box, kid_box.reshape(-1, 3)]),
            mid_keys=mid_keys[order],
            mid_nodes=mid_nodes[order],
        )

    # ------------------------------------------------------------ hanging nodes
    def hanging_edges(self):
        """Raw (slave, master_a, master_b) rows for every hanging mid-edge node."""
        leaves = self.leaves()
        c = self.corners[leaves]
        a = c.ravel()
        b = np.roll(c, -1, axis=1).ravel()
        keys = edge_key(a, b)
        if not len(self.mid_keys):
            return np.zeros((0, 3), np.int64)
        pos = np.minimum(np.searchsorted(self.mid_keys, keys), len(self.mid_keys) - 1)
        hit = self.mid_keys[pos] == keys
        rows = np.column_stack([self.mid_nodes[pos[hit]], a[hit], b[hit]])
        return rows[np.argsort(rows[:, 0], kind="stable")]

    def check_two_to_one(self):
        """Edge scan for violations of the single-irregularity rule."""
        rows = self.hanging_edges()
        if not len(rows):
            return []
        sub = np.concatenate([edge_key(rows[:, 1], rows[:, 0]), edge_key(rows[:, 0], rows[:, 2])])
        pos = np.minimum(np.searchsorted(self.mid_keys, sub), len(self.mid_keys) - 1)
        bad = self.mid_keys[pos] == sub
        return np.unique(np.concatenate([rows[:, 0], rows[:, 0]])[bad]).tolist()

    def hanging_constraints(self):
        """Hanging-node constraints for a Q1 solution, resolved to conforming masters."""
        bad = self.check_two_to_one()
        if bad:
            raise RefinementError(f"2:1 rule violated at nodes {bad[:10]}")
        return resolve_constraints({int(s): ((int(a), int(b)), (0.5, 0.5))
                                    for s, a, b in self.hanging_edges()})

    # ---------------------------------------------------------------- checking
    def check(self, rtol=1e-10):
        """Assert the structural invariants; returns a dict of diagnostics."""
        leaves = self.leaves()
        minj = self.min_jacobian(leaves)
        if np.any(minj <= 0):
            raise GeometryError("inverted or degenerate leaf element")
        roots = np.flatnonzero(self.parent < 0)
        total = self.element_measure(roots).sum()
        tiled = self.element_measure(leaves).sum()
        if abs(total - tiled) > rtol * total:
            raise GeometryError(f"leaves do not tile the domain: {tiled} vs {total}")
        bad = self.check_two_to_one()
        if bad:
            raise RefinementError(f"2:1 rule violated at nodes {bad[:10]}")
        kids = self.children[~self.is_leaf]
        if np.any(kids < 0):
            raise RefinementError("refined element with fewer than 4 children")
        if np.any(self.level[kids] != self.level[~self.is_leaf][:, None] + 1):
            raise RefinementError("child level must be parent level + 1")
        s1 = np.unique(self.corners[leaves][self.solid[leaves] == 1])
        s2 = np.unique(self.corners[leaves][self.solid[leaves] == 2])
        if len(np.intersect1d(s1, s2)):
            raise GeometryError("solids share nodes")
        return {"area": total, "leaf_area": tiled, "min_jacobian": float(minj.min())}


def resolve_constraints(raw):
    """Substitute slaves appearing as masters until only free masters remain.

    `raw` maps slave -> (masters, weights).  Returns a list of
    :class:`HangingConstraint` sorted by slave id.
    """
    table = {s: dict(zip(m, w)) for s, (m, w) in raw.items()}
    for _ in range(len(table) + 1):
        changed = False
        for s, deps in table.items():
            if not any(m in table for m in deps):
                continue
            new = {}
            for m, w in deps.items():
                if m in table:
                    for mm, ww in table[m].items():
                        new[mm] = new.get(mm, 0.0) + w * ww
                else:
                    new[m] = new.get(m, 0.0) + w
            table[s] = new
            changed = True
        if not changed:
            break
    else:
        raise RefinementError("cyclic hanging-node constraints")
    return [HangingConstraint(s, tuple(sorted(d)), tuple(d[m] for m in sorted(d)))
            for s, d in sorted(table.items())]


# ------------------------------------------------------------------ generators
def coons_patch(bottom, top, left, right):
    """Transfinite map of the unit square from its four boundary curves.

    bottom/top are parametrised by u (v = 0 / 1), left/right by v (u = 0 / 1).
    """
    p00, p10 = bottom(np.array([0.0]))[0], bottom(np.array([1.0]))[0]
    p01, p11 = top(np.array([0.0]))[0], top(np.array([1.0]))[0]

    def fn(u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        uu, vv = u[..., None], v[..., None]
        return ((1 - vv) * bottom(u) + vv * top(u) + (1 - uu) * left(v) + uu * right(v)
                - ((1 - uu) * (1 - vv) * p00 + uu * (1 - vv) * p10
                   + (1 - uu) * vv * p01 + uu * vv * p11))
    return fn


def line(p, q):
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    return lambda t: p + np.asarray(t, float)[..., None] * (q - p)


def arc(radius, theta0, theta1, centre=(0.0, 0.0)):
    c = np.asarray(centre, float)

    def fn(t):
        th = theta0 + np.asarray(t, float) * (theta1 - theta0)
        return c + radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
    return fn


@dataclass
class Block:
    """Structured nu x nv patch of a solid; `tags` are for sides bottom/right/top/left."""

    map: object
    nu: int
    nv: int
    tags: tuple = (0, 0, 0, 0)


def _block_geometry(block, q):
    g = 0.5 * (gll_points(q) + 1.0)
    geoms, tags = [], []
    for j in range(block.nv):
        for i in range(block.nu):
            u = (i + g) / block.nu
            v = (j + g) / block.nv
            uu, vv = np.meshgrid(u, v)
            geoms.append(block.map(uu, vv))
            t = [0, 0, 0, 0]
            if j == 0:
                t[0] = block.tags[0]
            if i == block.nu - 1:
                t[1] = block.tags[1]
            if j == block.nv - 1:
                t[2] = block.tags[2]
            if i == 0:
                t[3] = block.tags[3]
            tags.append(t)
    return geoms, tags


def mirror_geometry(geom, tags, y_axis):
    """Reflect element geometries about y = y_axis, keeping counter-clockwise order."""
    out = []
    for gm in geom:
        m = gm[::-1].copy()
        m[..., 1] = 2 * y_axis - m[..., 1]
        out.append(m)
    new_tags = [[t[2], t[1], t[0], t[3]] for t in tags]
    return out, new_tags


def mesh_from_geometry(geoms, tags, solids, q, scale=1.0):
    """Build a coarse conforming mesh; corner nodes are merged by position."""
    geoms = np.asarray(geoms, float)
    corner_xy = np.stack([geoms[:, 0, 0], geoms[:, 0, -1], geoms[:, -1, -1], geoms[:, -1, 0]], axis=1)
    tol = 1e-9 * scale
    index = {}
    nodes = []
    corners = np.empty((len(geoms), 4), np.int64)
    for e in range(len(geoms)):
        for k in range(4):
            x = corner_xy[e, k]
            key = (int(round(x[0] / tol)), int(round(x[1] / tol)), int(solids[e]))
            if key not in index:
                index[key] = len(nodes)
                nodes.append(x)
            corners[e, k] = index[key]
    mesh = Mesh(np.array(nodes), corners, solids, np.array(tags, np.int64), geoms, q)
    minj = mesh.min_jacobian()
    if np.any(minj <= 0):
        raise GeometryError("initial mesh has non-positive Jacobians")
    return mesh


def half_disk_blocks(radius, n0, inner=0.5):
    """Blocks of a half disk {|x| <= R, y >= 0}: central rectangle + 3 arc blocks.

    The arc is tagged CONTACT1 and the flat side DIRICHLET.
    """
    r = float(radius)
    s = inner * r
    d = r / np.sqrt(2.0)
    ctr = Block(coons_patch(line((-s, 0), (s, 0)), line((-s, s), (s, s)),
                            line((-s, 0), (-s, s)), line((s, 0), (s, s))),
                2 * n0, n0, (DIRICHLET, 0, 0, 0))
    right = Block(coons_patch(line((s, 0), (r, 0)), line((s, s), (d, d)),
                              line((s, 0), (s, s)), arc(r, 0.0, np.pi / 4)),
                  n0, n0, (DIRICHLET, CONTACT1, 0, 0))
    top = Block(coons_patch(line((s, s), (d, d)), line((-s, s), (-d, d)),
                            line((s, s), (-s, s)), arc(r, np.pi / 4, 3 * np.pi / 4)),
                n0, 2 * n0, (0, CONTACT1, 0, 0))
    left = Block(coons_patch(line((-s, s), (-d, d)), line((-s, 0), (-r, 0)),
                             line((-s, s), (-s, 0)), arc(r, 3 * np.pi / 4, np.pi)),
                 n0, n0, (0, CONTACT1, DIRICHLET, 0))
    return [ctr, right, top, left]


def generate_half_disk_pair(radius, gap, n0, geom_order):
    """Two half disks of radius R facing each other across a gap.

    Solid 1 lies below with its flat side at y = -(gap/2 + R); solid 2 is its
    mirror image.  The facing arcs carry CONTACT1 / CONTACT2, the flat sides
    DIRICHLET.  Facing discretisations are mirror images of each other.
    """
    if geom_order < 1:
        raise GeometryError("geometric order must be >= 1")
    if radius <= 0 or gap < 0 or n0 < 2:
        raise ValueError("need radius > 0, gap >= 0 and n0 >= 2")
    shift = 0.5 * gap + radius
    geoms, tags = [], []
    for blk in half_disk_blocks(radius, n0):
        g, t = _block_geometry(blk, geom_order)
        geoms += g
        tags += t
    geoms = [gm - np.array([0.0, shift]) for gm in geoms]
    geoms2, tags2 = mirror_geometry(geoms, tags, 0.0)
    tags2 = [[CONTACT2 if x == CONTACT1 else x for x in t] for t in tags2]
    solids = [1] * len(geoms) + [2] * len(geoms2)
    return mesh_from_geometry(geoms + geoms2, tags + tags2, solids, geom_order, scale=radius)


def generate_blocks(blocks, geom_order, solid=1, scale=1.0):
    geoms, tags = [], []
    for blk in blocks:
        g, t = _block_geometry(blk, geom_order)
        geoms += g
        tags += t
    return mesh_from_geometry(geoms, tags, [solid] * len(geoms), geom_order, scale)


def rectangle_block(x0, y0, x1, y1, nx, ny, tags=(0, 0, 0, 0)):
    return Block(coons_patch(line((x0, y0), (x1, y0)), line((x0, y1), (x1, y1)),
                             line((x0, y0), (x0, y1)), line((x1, y0), (x1, y1))), nx, ny, tags)


def generate_rectangle(width, height, nx, ny, geom_order=1, tags=(0, 0, 0, 0), origin=(0.0, 0.0)):
    x0, y0 = origin
    blk = rectangle_block(x0, y0, x0 + width, y0 + height, nx, ny, tags)
    return generate_blocks([blk], geom_order, scale=max(width, height))


def generate_block_pair(width, height, gap, nx, ny, geom_order=1):
    """Two stacked rectangles with facing flat sides separated by `gap`.

    Solid 1 occupies [0, W] x [-gap/2 - H, -gap/2]; solid 2 is its mirror.
    """
    lo = Block(rectangle_block(0.0, -0.5 * gap - height, width, -0.5 * gap, nx, ny).map,
               nx, ny, (DIRICHLET, 0, CONTACT1, 0))
    g1, t1 = _block_geometry(lo, geom_order)
    g2, t2 = mirror_geometry(g1, t1, 0.0)
    t2 = [[CONTACT2 if x == CONTACT1 else x for x in t] for t in t2]
    solids = [1] * len(g1) + [2] * len(g2)
    return mesh_from_geometry(g1 + g2, t1 + t2, solids, geom_order, scale=max(width, height))


def tree_path(mesh, elem):
    """(root, (child indices...)) identifying `elem` independently of numbering."""
    path = []
    e = int(elem)
    while mesh.parent[e] >= 0:
        path.append(int(mesh.child_index[e]))
        e = int(mesh.parent[e])
    return e, tuple(reversed(path))
