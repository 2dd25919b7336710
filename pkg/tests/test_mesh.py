import math

import numpy as np
import pytest

from pdstokes import meshing


def test_build_counts():
    m = meshing.build_structured(1)
    assert m.n_vertices == 4 and m.n_cells == 2
    m = meshing.build_structured(2)
    assert m.n_vertices == 9 and m.n_cells == 8
    with pytest.raises(ValueError):
        meshing.build_structured(0)


def test_orientation_and_area():
    for n in (1, 3, 8):
        m = meshing.build_structured(n)
        areas = m.areas()
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(areas, 1.0 / (2 * n * n))


def test_shape_metrics_structured():
    m4 = meshing.build_structured(4)
    m8 = meshing.build_structured(8)
    s4, s8 = meshing.shape_metrics(m4), meshing.shape_metrics(m8)
    assert s4.h == pytest.approx(math.sqrt(2.0) / 4)
    assert s4.max_ratio == pytest.approx(1.0 + math.sqrt(2.0), rel=1e-12)
    # ratio is scale invariant across refinement levels
    assert s4.max_ratio == pytest.approx(s8.max_ratio, rel=1e-12)
    assert s4.max_ratio <= meshing.SIGMA0


def test_shape_metrics_unit_right_triangle():
    # single positively oriented right triangle (0,0), (1,0), (0,1)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    cells = np.array([[0, 1, 2]])
    m = meshing.Mesh(verts, cells, np.array([0, 1, 2]),
                     (np.array([0]),))
    sm = meshing.shape_metrics(m)
    # inradius of a right triangle: r = (a + b - c)/2
    rho = 2.0 - math.sqrt(2.0)
    assert sm.h == pytest.approx(math.sqrt(2.0))
    assert sm.max_ratio == pytest.approx(math.sqrt(2.0) / rho, rel=1e-12)
    # uniform scaling leaves the ratio unchanged
    m2 = meshing.Mesh(3.7 * verts, cells, np.array([0, 1, 2]), (np.array([0]),))
    assert meshing.shape_metrics(m2).max_ratio == pytest.approx(sm.max_ratio)


def test_patches():
    m1 = meshing.build_structured(1)
    assert meshing.patch(m1, 0) == {0, 1}
    with pytest.raises(IndexError):
        meshing.patch(m1, 2)
    for n in (2, 4, 8, 16, 32):
        m = meshing.build_structured(n)
        sizes = [len(m.cell_neighbors[c]) for c in range(m.n_cells)]
        assert max(sizes) <= 13
        for c in (0, m.n_cells // 2, m.n_cells - 1):
            assert c in meshing.patch(m, c)


def test_patch_area_equivalence():
    m = meshing.build_structured(8)
    areas = m.areas()
    for c in range(m.n_cells):
        patch_area = areas[list(meshing.patch(m, c))].sum()
        assert areas[c] <= patch_area <= 13.0 * areas[c] + 1e-15


def test_euler_characteristic():
    for n in (1, 2, 5, 9):
        m = meshing.build_structured(n)
        edges = set()
        for tri in m.cells:
            for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edges.add(tuple(sorted(e)))
        assert m.n_vertices - len(edges) + m.n_cells == 1


def test_boundary_classification():
    m = meshing.build_structured(5)
    on_b = np.zeros(m.n_vertices, dtype=bool)
    on_b[m.boundary_vertices] = True
    for v, (x, y) in enumerate(m.vertices):
        expected = x in (0.0, 1.0) or y in (0.0, 1.0)
        assert on_b[v] == expected
        if not expected:
            assert 0.0 < x < 1.0 and 0.0 < y < 1.0


def test_conformity_no_hanging_nodes():
    m = meshing.build_structured(4)
    # each interior edge is shared by exactly two cells, boundary by one
    from collections import Counter
    count = Counter()
    for tri in m.cells:
        for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            count[tuple(sorted(e))] += 1
    assert set(count.values()) <= {1, 2}
    boundary = set(int(v) for v in m.boundary_vertices)
    for (a, b), k in count.items():
        if k == 1:
            assert a in boundary and b in boundary


def test_dump_roundtrip():
    m = meshing.build_structured(2)
    text = meshing.dump(m)
    lines = text.strip().splitlines()
    V, C = map(int, lines[0].split())
    assert V == m.n_vertices and C == m.n_cells
    verts = np.array([[float(t) for t in line.split()] for line in lines[1:1 + V]])
    cells = np.array([[int(t) for t in line.split()] for line in lines[1 + V:]])
    assert np.array_equal(verts, m.vertices)
    assert np.array_equal(cells, m.cells)


def test_mesh_immutable():
    m = meshing.build_structured(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
    with pytest.raises(ValueError):
        m.cells[0, 0] = 5
