"""Legacy VTK and CSV writers."""

import csv

import numpy as np

VTK_QUAD = 9


def write_vtk(path, mesh, point_data=None, cell_data=None, title="contact-amr"):
    """Leaf quads of `mesh` as an ASCII UNSTRUCTURED_GRID.

    `point_data` maps names to per-node arrays of shape (n_nodes,) or
    (n_nodes, 2|3); 2-component arrays are written as vectors with z = 0.
    `cell_data` maps names to per-leaf arrays.
    """
    leaves = mesh.leaves()
    conn = mesh.corners[leaves]
    pts = mesh.nodes
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    lines.append(f"CELLS {len(conn)} {5 * len(conn)}")
    lines += ["4 " + " ".join(map(str, c)) for c in conn.tolist()]
    lines.append(f"CELL_TYPES {len(conn)}")
    lines += [str(VTK_QUAD)] * len(conn)
    if point_data:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, arr in point_data.items():
            lines += _field(name, np.asarray(arr)[:len(pts)])
    if cell_data:
        lines.append(f"CELL_DATA {len(conn)}")
        for name, arr in cell_data.items():
            lines += _field(name, np.asarray(arr))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _field(name, arr):
    if arr.ndim == 1:
        kind = "int" if np.issubdtype(arr.dtype, np.integer) else "double"
        return [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"] + [f"{v:.17g}" if kind == "double" else str(v)
                                                                      for v in arr.tolist()]
    if arr.shape[1] == 2:
        arr = np.column_stack([arr, np.zeros(len(arr))])
    if arr.shape[1] == 3 and name.lower().startswith(("disp", "u")):
        return [f"VECTORS {name} double"] + [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in arr.tolist()]
    out = []
    for k in range(arr.shape[1]):
        out += [f"SCALARS {name}_{k} double 1", "LOOKUP_TABLE default"]
        out += [f"{v:.17g}" for v in arr[:, k].tolist()]
    return out


def write_csv(path, header, rows):
    """CSV with a header row; floats written with repr precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
