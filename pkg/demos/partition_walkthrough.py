"""How the contact-aware planner deals elements to ranks.

    python3 demos/partition_walkthrough.py

Eight ranks own regions of a mesh.  Regions 0 to 2 hold pairs of
contact-facing elements ("super-elements") that must end up on the same rank.
The planner sizes a contact group R_C from the contact share of the work,
deals super-elements over ranks 0..R_C-1 and the rest over R_C..R-1, with every
region starting its own cursor so no communication is needed.
"""

from collections import Counter

from contact_amr.partition import RegionState, plan, validate

supers = (3, 4, 3, 0, 0, 0, 0, 0)
others = (4, 3, 5, 12, 6, 10, 11, 12)

regions, e = [], 0
for rank, (s, n) in enumerate(zip(supers, others)):
    g = RegionState(rank)
    for _ in range(s):
        g.contact.append((e, e + 1))
        e += 2
    g.noncontact = list(range(e, e + n))
    e += n
    regions.append(g)

p = plan(regions, 8, c=1.0)
n_contact = 2 * sum(supers)
print(f"{e} elements, {n_contact} on the contact boundary -> R_C = {p.r_c}")

for g in regions:
    sup = [p.rank_of(a) for a, _ in g.contact]
    non = [p.rank_of(x) for x in g.noncontact]
    print(f"region {g.rank}: super-elements -> {sup or '-'}; others -> {non or '-'}")

load = Counter(p.ranks.tolist())
print("\nelements per rank:", dict(sorted(load.items())))
pairs = [pair for g in regions for pair in g.contact]
rep = validate(p, pairs)
print(f"co-location violations: {rep.violations}, contact/non-contact ranks separated: {rep.separated}")
