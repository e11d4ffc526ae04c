"""Simplicial meshes with a Dirichlet/traction boundary partition.

Mesh text format (``#`` starts a comment, blank lines are ignored)::

    dim 2
    vertices <nv>
    x y                 # one line per vertex
    cells <nc>
    i j k               # vertex indices, counter-clockwise
    boundary <nb>
    i j tag             # tag 1 = Dirichlet part, 2 = traction part

In 3D cells carry four indices and boundary faces three plus the tag.
Every boundary facet of the triangulation must be listed exactly once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np

__all__ = [
    "DIRICHLET",
    "TRACTION",
    "Mesh",
    "MeshError",
    "unit_square_mesh",
    "load_mesh",
    "save_mesh",
    "write_vtk",
]

DIRICHLET = 1
TRACTION = 2

SIDES = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    """Invalid mesh data; ``line`` is set when the data came from a file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _simplex_measure(vertices, cells):
    x = vertices[cells]
    jac = x[:, 1:, :] - x[:, :1, :]
    dim = vertices.shape[1]
    return np.linalg.det(jac) / factorial(dim)


def _facet_keys(facets):
    return [tuple(sorted(f)) for f in facets.tolist()]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh.

    ``boundary`` lists the boundary facets (edges in 2D) and
    ``boundary_tags`` assigns each one to the Dirichlet part (1) or the
    traction part (2).  Construction validates every invariant.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    boundary_tags: np.ndarray
    volumes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        bnd = np.ascontiguousarray(self.boundary, dtype=np.int64)
        tags = np.ascontiguousarray(self.boundary_tags, dtype=np.int64)
        for name, arr in (("vertices", verts), ("cells", cells), ("boundary", bnd), ("boundary_tags", tags)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "volumes", _validate(self))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def areas(self) -> np.ndarray:
        """Cell measures (areas in 2D)."""
        return self.volumes

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def facets(self, tag: int) -> np.ndarray:
        return self.boundary[self.boundary_tags == tag]

    def facet_measures(self, facets) -> np.ndarray:
        x = self.vertices[np.asarray(facets)]
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    def dirichlet_vertices(self) -> np.ndarray:
        return np.unique(self.facets(DIRICHLET))

    def same_topology(self, other: "Mesh") -> bool:
        return (
            self.vertices.shape == other.vertices.shape
            and self.cells.shape == other.cells.shape
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.boundary, other.boundary)
            and np.array_equal(self.boundary_tags, other.boundary_tags)
            and np.allclose(self.vertices, other.vertices, rtol=0, atol=1e-14)
        )


def _validate(mesh: Mesh, cell_lines=None, boundary_lines=None) -> np.ndarray:
    verts, cells, bnd, tags = mesh.vertices, mesh.cells, mesh.boundary, mesh.boundary_tags
    if verts.ndim != 2 or verts.shape[1] not in (2, 3):
        raise MeshError("vertices must be an (n, 2) or (n, 3) array")
    dim = verts.shape[1]
    if cells.ndim != 2 or cells.shape[1] != dim + 1 or len(cells) == 0:
        raise MeshError(f"cells must be a non-empty (n, {dim + 1}) array")
    if bnd.ndim != 2 or bnd.shape[1] != dim or len(bnd) != len(tags):
        raise MeshError(f"boundary must be an (n, {dim}) array with one tag per facet")

    def where(lines, k):
        return None if lines is None else lines[k]

    for k, c in enumerate(cells):
        if c.min() < 0 or c.max() >= len(verts):
            raise MeshError(f"cell {k} references a missing vertex", where(cell_lines, k))
        if len(set(c.tolist())) != dim + 1:
            raise MeshError(f"degenerate cell {k}: repeated vertex", where(cell_lines, k))
    vol = _simplex_measure(verts, cells)
    extent = np.ptp(verts, axis=0).max()
    tiny = 1e-12 * extent**dim
    for k in np.flatnonzero(np.abs(vol) <= tiny):
        raise MeshError(f"degenerate cell {k}: zero measure", where(cell_lines, k))
    for k in np.flatnonzero(vol < 0):
        raise MeshError(f"inverted cell {k}: negative orientation", where(cell_lines, k))

    counts: dict[tuple, int] = {}
    local = [np.delete(np.arange(dim + 1), i) for i in range(dim + 1)]
    for c in cells:
        for loc in local:
            key = tuple(sorted(c[loc].tolist()))
            counts[key] = counts.get(key, 0) + 1
    shared = [k for k, n in counts.items() if n > 2]
    if shared:
        raise MeshError(f"facet {shared[0]} is shared by more than two cells")
    true_boundary = {k for k, n in counts.items() if n == 1}

    seen: dict[tuple, int] = {}
    for k, key in enumerate(_facet_keys(bnd)):
        if tags[k] not in (DIRICHLET, TRACTION):
            raise MeshError(f"boundary facet {k} has tag {tags[k]}; expected 1 or 2", where(boundary_lines, k))
        if key in seen:
            raise MeshError(f"boundary facet {key} listed twice", where(boundary_lines, k))
        if key not in true_boundary:
            raise MeshError(f"listed boundary facet {key} is not on the boundary", where(boundary_lines, k))
        seen[key] = k
    missing = sorted(true_boundary - seen.keys())
    if missing:
        raise MeshError(f"untagged boundary facet {missing[0]} ({len(missing)} unclassified)")
    if not np.any(tags == DIRICHLET):
        raise MeshError("the Dirichlet boundary part is empty")
    return vol


def _parse_sides(gamma1) -> set[str]:
    if isinstance(gamma1, str):
        names = [s.strip() for s in gamma1.replace("+", ",").split(",") if s.strip()]
    else:
        names = list(gamma1)
    if names == ["all"]:
        names = list(SIDES)
    unknown = set(names) - set(SIDES)
    if unknown:
        raise MeshError(f"unknown side(s) {sorted(unknown)}; choose from {SIDES} or 'all'")
    if not names:
        raise MeshError("the Dirichlet boundary part is empty")
    return set(names)


def unit_square_mesh(nx: int, ny: int, gamma1="left", pattern: str = "crossed") -> Mesh:
    """Structured triangulation of the unit square.

    With ``pattern="crossed"`` each of the ``nx * ny`` squares is split
    into four triangles by its two diagonals (a centre vertex is added);
    with ``"alternating"`` it is cut along one diagonal, alternating in a
    checkerboard pattern.  ``gamma1`` names the sides belonging to the
    Dirichlet part (``"left"``, ``"left,bottom"``, ``"all"`` or a list);
    the remaining sides form the traction part.
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    if pattern not in ("crossed", "alternating"):
        raise MeshError(f"unknown pattern {pattern!r}; choose 'crossed' or 'alternating'")
    sides = _parse_sides(gamma1)
    xs, ys = np.linspace(0.0, 1.0, nx + 1), np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i + (nx + 1) * j

    cells = []
    centres = []
    for j in range(ny):
        for i in range(nx):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if pattern == "crossed":
                c = len(vertices) + len(centres)
                centres.append(((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2))
                cells += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
            elif (i + j) % 2 == 0:
                cells += [(v00, v10, v11), (v00, v11, v01)]
            else:
                cells += [(v00, v10, v01), (v10, v11, v01)]
    if centres:
        vertices = np.vstack([vertices, np.array(centres)])

    edges, tags = [], []
    for name, segs in (
        ("bottom", [(vid(i, 0), vid(i + 1, 0)) for i in range(nx)]),
        ("right", [(vid(nx, j), vid(nx, j + 1)) for j in range(ny)]),
        ("top", [(vid(i + 1, ny), vid(i, ny)) for i in range(nx)]),
        ("left", [(vid(0, j + 1), vid(0, j)) for j in range(ny)]),
    ):
        edges += segs
        tags += [DIRICHLET if name in sides else TRACTION] * len(segs)
    return Mesh(vertices, np.array(cells), np.array(edges), np.array(tags))


def save_mesh(mesh: Mesh, path) -> None:
    lines = ["# melanprager mesh", f"dim {mesh.dim}", f"vertices {mesh.n_vertices}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in mesh.vertices]
    lines.append(f"cells {mesh.n_cells}")
    lines += [" ".join(str(i) for i in row) for row in mesh.cells]
    lines.append(f"boundary {len(mesh.boundary)}")
    lines += [" ".join(str(i) for i in row) + f" {tag}" for row, tag in zip(mesh.boundary, mesh.boundary_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    """Read and validate a mesh in the text format described above."""
    text = Path(path).read_text()
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].split()
        if content:
            records.append((lineno, content))
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(records):
            raise MeshError(f"unexpected end of file, expected '{name} <count>'")
        lineno, toks = records[pos]
        if len(toks) != 2 or toks[0] != name:
            raise MeshError(f"expected '{name} <count>', got {' '.join(toks)!r}", lineno)
        try:
            value = int(toks[1])
        except ValueError:
            raise MeshError(f"'{name}' count must be an integer", lineno) from None
        if value < 0:
            raise MeshError(f"'{name}' count must be non-negative", lineno)
        pos += 1
        return value

    def block(count, width, kind, what):
        nonlocal pos
        rows, lines = [], []
        for _ in range(count):
            if pos >= len(records):
                raise MeshError(f"unexpected end of file inside the {what} section")
            lineno, toks = records[pos]
            if len(toks) != width:
                raise MeshError(f"{what} record needs {width} values, got {len(toks)}", lineno)
            try:
                rows.append([kind(t) for t in toks])
            except ValueError:
                raise MeshError(f"malformed {what} record {' '.join(toks)!r}", lineno) from None
            lines.append(lineno)
            pos += 1
        return rows, lines

    dim = header("dim")
    if dim not in (2, 3):
        raise MeshError(f"dimension must be 2 or 3, got {dim}", records[0][0])
    verts, _ = block(header("vertices"), dim, float, "vertex")
    cells, cell_lines = block(header("cells"), dim + 1, int, "cell")
    bnd, bnd_lines = block(header("boundary"), dim + 1, int, "boundary")
    if pos < len(records):
        raise MeshError("trailing content after the boundary section", records[pos][0])

    cells_arr = np.array(cells, dtype=np.int64).reshape(-1, dim + 1)
    bnd_arr = np.array(bnd, dtype=np.int64).reshape(-1, dim + 1)
    mesh = object.__new__(Mesh)
    for name, value in (
        ("vertices", np.array(verts, dtype=float).reshape(-1, dim)),
        ("cells", cells_arr),
        ("boundary", bnd_arr[:, :dim]),
        ("boundary_tags", bnd_arr[:, dim]),
    ):
        object.__setattr__(mesh, name, value)
    _validate(mesh, cell_lines, bnd_lines)
    return Mesh(mesh.vertices, mesh.cells, mesh.boundary, mesh.boundary_tags)


def _pad3(a, dim):
    out = np.zeros(a.shape[:-1] + (3,))
    out[..., :dim] = a
    return out


def _vtk_block(name, data, dim, ncomp):
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{x:.17g}" for x in data]
    elif data.shape[1] == dim:
        lines = [f"VECTORS {name} double"]
        lines += [" ".join(f"{x:.17g}" for x in row) for row in _pad3(data, dim)]
    elif data.shape[1] == ncomp:
        from .tensor import unpack

        full = np.zeros((len(data), 3, 3))
        full[:, :dim, :dim] = unpack(data)
        lines = [f"TENSORS {name} double"]
        for mat in full:
            lines += [" ".join(f"{x:.17g}" for x in row) for row in mat]
    else:
        raise ValueError(f"cannot classify VTK field {name!r} with shape {data.shape}")
    return lines


def write_vtk(path, mesh: Mesh, point_data=None, cell_data=None, title="melanprager") -> None:
    """Write a legacy ASCII VTK unstructured grid.

    Arrays of shape ``(n,)`` become scalars, ``(n, d)`` vectors and
    ``(n, d(d+1)/2)`` packed symmetric tensors.
    """
    dim = mesh.dim
    ncomp = dim * (dim + 1) // 2
    cell_type = 5 if dim == 2 else 10
    nper = dim + 1
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [" ".join(f"{x:.17g}" for x in row) for row in _pad3(mesh.vertices, dim)]
    lines.append(f"CELLS {mesh.n_cells} {mesh.n_cells * (nper + 1)}")
    lines += [f"{nper} " + " ".join(str(i) for i in row) for row in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines += [str(cell_type)] * mesh.n_cells
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, data in point_data.items():
            lines += _vtk_block(name, data, dim, ncomp)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, data in cell_data.items():
            lines += _vtk_block(name, data, dim, ncomp)
    Path(path).write_text("\n".join(lines) + "\n")
