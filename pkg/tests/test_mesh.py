import numpy as np
import pytest

from poroblock.errors import ConfigurationError, MeshError
from poroblock.mesh import (Mesh, build_structured_simplicial, check_connected,
                            element_geometry, make_mesh, mesh_geometry,
                            write_vtk)


def test_unit_square_single_cell():
    mesh = build_structured_simplicial(1, 2)
    assert mesh.num_elements == 2
    assert mesh.num_vertices == 4
    assert mesh.num_facets == 5
    assert len(mesh.boundary_tags) == 4


def test_unit_square_two_cells_edge_count():
    mesh = build_structured_simplicial(2, 2)
    assert mesh.num_elements == 8
    assert mesh.num_vertices == 9
    n = 2
    assert mesh.num_facets == 2 * n * (n + 1) + n * n == 16


def test_unit_cube_kuhn_subdivision():
    mesh = build_structured_simplicial(1, 3)
    assert mesh.num_elements == 6
    assert mesh.num_vertices == 8
    vols = mesh_geometry(mesh).volumes
    assert np.allclose(vols, 1 / 6)
    assert abs(vols.sum() - 1.0) < 1e-13


@pytest.mark.parametrize("dim,n,box,volume", [
    (2, 3, [(0, 2), (0, 1)], 2.0),
    (3, 2, [(0, 1), (0, 3), (0, 1)], 3.0),
])
def test_volumes_sum_to_box(dim, n, box, volume):
    mesh = build_structured_simplicial(n, dim, box=box)
    vols = mesh_geometry(mesh).volumes
    assert np.all(vols > 0)
    assert abs(vols.sum() - volume) < 1e-13 * volume


@pytest.mark.parametrize("dim,n", [(2, 3), (3, 2)])
def test_every_element_facet_in_global_table(dim, n):
    mesh = build_structured_simplicial(n, dim)
    seen = {}
    for k in range(mesh.num_elements):
        for i in range(dim + 1):
            key = tuple(sorted(np.delete(mesh.elements[k], i)))
            fid = mesh.elem_facets[k, i]
            assert tuple(mesh.facets[fid]) == key
            seen.setdefault(fid, []).append(k)
    for fid, elems in seen.items():
        incident = set(mesh.facet_elements[fid]) - {-1}
        assert incident == set(elems)
        if len(elems) == 1:
            assert fid in mesh.boundary_tags
        else:
            assert len(elems) == 2
            assert fid not in mesh.boundary_tags


def test_boundary_tags_partition():
    mesh = build_structured_simplicial(3, 2)
    boundary = {f for f in range(mesh.num_facets)
                if mesh.facet_elements[f, 1] == -1}
    assert set(mesh.boundary_tags) == boundary
    for f, tag in mesh.boundary_tags.items():
        mid = mesh.vertices[mesh.facets[f]].mean(axis=0)
        expected = {"left": mid[0] == 0, "right": mid[0] == 1,
                    "bottom": mid[1] == 0, "top": mid[1] == 1}
        assert expected[tag]


@pytest.mark.parametrize("dim,n", [(2, 4), (3, 2)])
def test_quasi_uniformity(dim, n):
    mesh = build_structured_simplicial(n, dim)
    verts = mesh.vertices[mesh.elements]
    diam = np.zeros(mesh.num_elements)
    for i in range(dim + 1):
        for j in range(i + 1, dim + 1):
            diam = np.maximum(diam, np.linalg.norm(
                verts[:, i] - verts[:, j], axis=1))
    assert diam.max() / diam.min() <= 4.0


def test_right_triangle_geometry():
    mesh = make_mesh(2, [[0., 0.], [1., 0.], [0., 1.]], [[0, 1, 2]])
    geom = element_geometry(mesh, 0)
    assert abs(geom.volume - 0.5) < 1e-15
    # facet opposite vertex 0 is the hypotenuse
    assert np.allclose(geom.normals[0], np.array([1, 1]) / np.sqrt(2))
    assert abs(geom.facet_areas[0] - np.sqrt(2)) < 1e-15
    assert np.allclose(geom.bary_grads.sum(axis=0), 0.0, atol=1e-15)


@pytest.mark.parametrize("dim,n", [(2, 3), (3, 2)])
def test_closed_surface_identity(dim, n):
    mesh = build_structured_simplicial(n, dim)
    geom = mesh_geometry(mesh)
    resultant = (geom.facet_areas[..., None] * geom.normals).sum(axis=1)
    assert np.abs(resultant).max() < 1e-14


def test_reference_tetrahedron():
    mesh = make_mesh(3, [[0., 0., 0.], [1., 0., 0.], [0., 1., 0.],
                         [0., 0., 1.]], [[0, 1, 2, 3]])
    geom = element_geometry(mesh, 0)
    assert abs(geom.volume - 1 / 6) < 1e-15
    areas = np.sort(geom.facet_areas)
    assert np.allclose(areas, [0.5, 0.5, 0.5, np.sqrt(3) / 2])


def test_single_vs_batched_geometry(mesh2):
    batched = mesh_geometry(mesh2)
    for k in (0, 5, 17):
        single = element_geometry(mesh2, k)
        assert np.allclose(single.bary_grads, batched.bary_grads[k])
        assert np.allclose(single.normals, batched.normals[k])
        assert np.allclose(single.facet_areas, batched.facet_areas[k])
        assert abs(single.volume - batched.volumes[k]) < 1e-15


def test_bubble_signs(mesh2):
    geom = mesh_geometry(mesh2)
    for f in range(mesh2.num_facets):
        k1, k2 = mesh2.facet_elements[f]
        i1 = int(np.where(mesh2.elem_facets[k1] == f)[0][0])
        if k2 == -1:
            assert geom.bubble_signs[k1, i1] == 1.0
        else:
            i2 = int(np.where(mesh2.elem_facets[k2] == f)[0][0])
            assert geom.bubble_signs[k1, i1] == -geom.bubble_signs[k2, i2]
            # the two outward normals are opposite on a flat shared facet
            assert np.allclose(geom.normals[k1, i1], -geom.normals[k2, i2])


def _two_disjoint_squares():
    m1 = build_structured_simplicial(1, 2)
    verts = np.vstack([m1.vertices, m1.vertices + [2.0, 0.0]])
    elements = np.vstack([m1.elements, m1.elements + m1.num_vertices])
    return make_mesh(2, verts, elements)


def test_check_connected():
    assert check_connected(build_structured_simplicial(3, 2))
    assert check_connected(build_structured_simplicial(2, 3))
    assert not check_connected(_two_disjoint_squares())
    single = make_mesh(2, [[0., 0.], [1., 0.], [0., 1.]], [[0, 1, 2]])
    assert check_connected(single)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        build_structured_simplicial(0, 2)
    with pytest.raises(ConfigurationError):
        build_structured_simplicial(2, 4)
    with pytest.raises(ConfigurationError):
        build_structured_simplicial(2, 2, box=[(0, 0), (0, 1)])
    mesh = build_structured_simplicial(1, 2)
    with pytest.raises(ConfigurationError):
        element_geometry(mesh, 99)


def test_degenerate_element_rejected():
    with pytest.raises(MeshError):
        make_mesh(2, [[0., 0.], [1., 0.], [2., 0.]], [[0, 1, 2]])


def test_vtk_export(tmp_path):
    mesh = build_structured_simplicial(2, 2)
    path = tmp_path / "mesh.vtk"
    write_vtk(mesh, str(path), cell_data={"region": np.arange(8.0)})
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert f"POINTS {mesh.num_vertices} double" in text
    assert f"CELLS {mesh.num_elements} {mesh.num_elements * 4}" in text
    assert f"CELL_DATA {mesh.num_elements}" in text
