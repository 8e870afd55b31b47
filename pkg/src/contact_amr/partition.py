"""Contact-aware element-to-rank planner.

Paired contact elements travel together as super-elements and are dealt
round-robin over the first ``R_C`` ranks; the remaining elements are dealt
over ranks ``R_C .. R-1``.  Every region (the elements a rank currently
owns) is planned from its own data and a few global counts.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import CONTACT1


class PartitionError(ValueError):
    pass


@dataclass
class RegionState:
    """Elements owned by one rank.

    `contact` lists super-elements as (solid-1 element, solid-2 element)
    tuples in local order; `noncontact` lists the other element ids.
    """

    rank: int
    contact: list = field(default_factory=list)
    noncontact: list = field(default_factory=list)

    @property
    def n_elements(self):
        return 2 * len(self.contact) + len(self.noncontact)


@dataclass
class PartitionPlan:
    elements: np.ndarray
    ranks: np.ndarray
    R: int
    r_c: int
    c: float
    owner: np.ndarray = None   # dense element id -> rank (-1 if unplanned)

    def rank_of(self, element):
        return int(self.owner[element])

    def counts(self):
        return np.bincount(self.ranks, minlength=self.R)


def compute_Rc(n_ec, n_e, R, c=1.0):
    """Number of ranks reserved for contact super-elements."""
    if n_ec % 2:
        raise PartitionError("contact element count must be even (elements come in pairs)")
    if not 0 <= n_ec <= n_e:
        raise PartitionError("need 0 <= N_EC <= N_E")
    if R < 1 or not c > 0:
        raise PartitionError("need R >= 1 and c > 0")
    if n_ec == 0:
        return 0
    if n_e == n_ec or R == 1:
        return R
    rc = math.ceil(c * n_ec / n_e * R)
    rc = min(rc, n_ec // 2)
    if rc >= R:
        rc = R - 1
    return rc


def noncontact_start(r, R, r_c):
    s = r + r_c
    if s < R:
        return s
    return (s % (R - r_c)) + r_c


def plan_region(region, R, r_c):
    """(element ids, ranks) for one region, using only its own data."""
    r = region.rank
    elems, ranks = [], []
    for k, (e1, e2) in enumerate(region.contact):
        rk = (r + k) % r_c
        elems += [e1, e2]
        ranks += [rk, rk]
    if region.noncontact:
        if r_c < R:
            lo, width = r_c, R - r_c
            start = noncontact_start(r, R, r_c) - lo
        else:
            lo, width, start = 0, R, r % R
        for k, e in enumerate(region.noncontact):
            elems.append(e)
            ranks.append(lo + (start + k) % width)
    return elems, ranks


def plan(regions, R, c=1.0):
    """Partition plan from per-region states.

    Raises :class:`PartitionError` for an empty rank set or for an element
    listed twice.
    """
    if R < 1:
        raise PartitionError("empty rank set")
    n_ec = sum(2 * len(g.contact) for g in regions)
    n_e = sum(g.n_elements for g in regions)
    r_c = compute_Rc(n_ec, n_e, R, c)
    elems, ranks = [], []
    for g in regions:
        if not 0 <= g.rank < R:
            raise PartitionError(f"region rank {g.rank} outside [0, {R})")
        e, rk = plan_region(g, R, r_c)
        elems += e
        ranks += rk
    elems = np.asarray(elems, np.int64)
    ranks = np.asarray(ranks, np.int64)
    if len(np.unique(elems)) != len(elems):
        raise PartitionError("an element appears in more than one place")
    owner = np.full(elems.max() + 1 if len(elems) else 0, -1, np.int64)
    owner[elems] = ranks
    return PartitionPlan(elems, ranks, R, r_c, c, owner)


@dataclass
class ValidationReport:
    violations: int
    counts: np.ndarray
    separated: bool
    imbalance: float

    @property
    def ok(self):
        return self.violations == 0 and self.separated


def validate(plan, element_pairs, mesh=None):
    """Check co-location of paired elements and contact/non-contact separation."""
    owner = plan.owner
    pairs = np.asarray(element_pairs, np.int64).reshape(-1, 2)
    viol = int(np.sum(owner[pairs[:, 0]] != owner[pairs[:, 1]])) if len(pairs) else 0
    is_contact = np.zeros(len(owner), bool)
    is_contact[pairs.ravel()] = True
    planned = owner >= 0
    separated = True
    if 0 < plan.r_c < plan.R:
        separated = bool(np.all(owner[is_contact & planned] < plan.r_c)
                         and np.all(owner[~is_contact & planned] >= plan.r_c))
    counts = plan.counts()
    imbalance = float(counts.max() / counts.mean()) if counts.sum() else 1.0
    return ValidationReport(viol, counts, separated, imbalance)


# ------------------------------------------------------------- mesh helpers
def initial_owner(mesh, R):
    """Leaves split into R contiguous blocks by element id."""
    owner = np.full(mesh.n_elements, -1, np.int64)
    leaves = mesh.leaves()
    owner[leaves] = np.arange(len(leaves)) * R // max(len(leaves), 1)
    return owner


def regions_from_mesh(mesh, element_pairs, owner, R):
    """RegionStates from the current leaf ownership.

    A super-element belongs to the region owning its solid-1 element.
    """
    leaves = mesh.leaves()
    pairs = np.asarray(element_pairs, np.int64).reshape(-1, 2)
    in_pair = np.zeros(mesh.n_elements, bool)
    in_pair[pairs.ravel()] = True
    mate = dict(zip(pairs[:, 0].tolist(), pairs[:, 1].tolist()))
    regions = [RegionState(r) for r in range(R)]
    for e in leaves.tolist():
        r = int(owner[e])
        if e in mate:
            regions[r].contact.append((e, mate[e]))
        elif not in_pair[e]:
            regions[r].noncontact.append(e)
    return regions


def plan_from_mesh(mesh, element_pairs, owner, R, c=1.0):
    return plan(regions_from_mesh(mesh, element_pairs, owner, R), R, c)


def contact_elements(mesh):
    """Leaves with an edge on the solid-1 contact boundary."""
    _, el, _ = mesh.leaf_edge_nodes(CONTACT1)
    return np.unique(el)
