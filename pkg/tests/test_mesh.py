import numpy as np
import pytest

from melanprager.mesh import DIRICHLET, TRACTION, Mesh, MeshError, load_mesh, save_mesh, unit_square_mesh, write_vtk


@pytest.mark.parametrize("pattern, per_square", [("crossed", 4), ("alternating", 2)])
def test_unit_square_counts_and_area(pattern, per_square):
    m = unit_square_mesh(5, 3, pattern=pattern)
    assert m.n_cells == per_square * 15
    assert m.volumes.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(m.volumes > 0)
    assert len(m.boundary) == 2 * (5 + 3)


def test_flagship_mesh_size():
    m = unit_square_mesh(32, 32)
    assert m.n_cells == 4096
    assert m.n_vertices == 33 * 33 + 32 * 32


def test_gamma1_sides():
    m = unit_square_mesh(4, 4, gamma1="left")
    x = m.vertices[m.dirichlet_vertices()]
    np.testing.assert_allclose(x[:, 0], 0.0)
    assert len(x) == 5
    tr = m.facets(TRACTION)
    assert len(tr) == 12
    m_all = unit_square_mesh(2, 2, gamma1="all")
    assert len(m_all.facets(TRACTION)) == 0
    m2 = unit_square_mesh(2, 2, gamma1="left,bottom")
    assert len(m2.facets(DIRICHLET)) == 4


@pytest.mark.parametrize("bad", ["middle", "", []])
def test_gamma1_rejects_unknown_or_empty(bad):
    with pytest.raises(MeshError):
        unit_square_mesh(2, 2, gamma1=bad)


def _two_triangles():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    c = np.array([[0, 1, 2], [0, 2, 3]])
    b = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    return v, c, b


def test_validation_errors():
    v, c, b = _two_triangles()
    Mesh(v, c, b, [1, 2, 2, 2])
    with pytest.raises(MeshError, match="missing vertex"):
        Mesh(v, [[0, 1, 7], [0, 2, 3]], b, [1, 2, 2, 2])
    with pytest.raises(MeshError, match="inverted"):
        Mesh(v, [[0, 2, 1], [0, 2, 3]], b, [1, 2, 2, 2])
    with pytest.raises(MeshError, match="untagged boundary facet"):
        Mesh(v, c, b[:3], [1, 2, 2])
    with pytest.raises(MeshError, match="Dirichlet"):
        Mesh(v, c, b, [2, 2, 2, 2])
    with pytest.raises(MeshError, match="tag 3"):
        Mesh(v, c, b, [1, 2, 3, 2])
    with pytest.raises(MeshError, match="not on the boundary"):
        Mesh(v, c, np.vstack([b, [[0, 2]]]), [1, 2, 2, 2, 2])
    flat = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError, match="zero measure"):
        Mesh(flat, [[0, 1, 2], [0, 1, 3]], b, [1, 2, 2, 2])
    with pytest.raises(MeshError, match="repeated vertex"):
        Mesh(v, [[0, 1, 1], [0, 2, 3]], b, [1, 2, 2, 2])


def test_save_load_roundtrip(tmp_path):
    m = unit_square_mesh(3, 2, gamma1="left,top")
    save_mesh(m, tmp_path / "m.txt")
    m2 = load_mesh(tmp_path / "m.txt")
    assert m.same_topology(m2)
    np.testing.assert_array_equal(m.vertices, m2.vertices)


def test_load_reports_line_numbers(tmp_path):
    text = """dim 2
vertices 4
0 0
1 0
1 1
0 1
cells 2
0 1 2
0 2 1
boundary 4
0 1 1
1 2 2
2 3 2
3 0 2
"""
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(MeshError) as info:
        load_mesh(p)
    assert info.value.line == 9
    assert "line 9" in str(info.value)
    p.write_text(text.replace("0 2 1", "0 2 3").replace("1 2 2\n", "1 2 x\n"))
    with pytest.raises(MeshError) as info:
        load_mesh(p)
    assert info.value.line == 12


def test_load_rejects_truncated_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("dim 2\nvertices 3\n0 0\n")
    with pytest.raises(MeshError, match="end of file"):
        load_mesh(p)


def test_vtk_writer(tmp_path):
    m = unit_square_mesh(2, 2)
    path = tmp_path / "s.vtk"
    write_vtk(path, m, point_data={"velocity": np.ones((m.n_vertices, 2))},
              cell_data={"sigma": np.zeros((m.n_cells, 3)), "utilization": np.zeros(m.n_cells)})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version")
    assert f"POINTS {m.n_vertices} double" in text or f"POINTS {m.n_vertices} float" in text
    assert f"CELL_TYPES {m.n_cells}" in text
    assert "VECTORS velocity" in text and "TENSORS sigma" in text and "SCALARS utilization" in text
