import numpy as np
import pytest

from core.elements import reference_geometry, shape_quad4
from core.errors import MeshError
from core.mesh import Mesh, QuadrantDivisions, build_artery_quadrant, build_block, fiber_frame
from core.params import Layer

R_I, R_M, R_O = 1.55, 1.89, 2.21


def artery(divisions=QuadrantDivisions(), window=(2.0, 3.0)):
    return build_artery_quadrant(6.0, R_I, R_M, R_O, divisions, window)


def patch_normals(mesh, patch):
    X = mesh.nodes[patch.quads]
    _, dN = shape_quad4(0.0, 0.0)
    normal = np.cross(np.einsum("a,qai->qi", dN[:, 0], X), np.einsum("a,qai->qi", dN[:, 1], X))
    return normal / np.linalg.norm(normal, axis=1, keepdims=True)


def test_block_counts():
    mesh = build_block(1.0, 4)
    assert mesh.n_nodes == 125
    assert mesh.n_elements == 64
    assert len(mesh.patch("top")) == 16
    assert len(mesh.patch("flux")) == 16
    assert set(mesh.layers) == {Layer.HOMOGENEOUS}


def test_single_element_block_faces():
    mesh = build_block(1.0, 1)
    assert mesh.n_nodes == 8
    assert mesh.n_elements == 1
    faces = ("x0", "x1", "y0", "y1", "z0", "z1")
    assert all(len(mesh.node_set(name)) == 4 for name in faces)


@pytest.mark.parametrize("side, n", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
def test_block_rejects_bad_input(side, n):
    with pytest.raises(MeshError):
        build_block(side, n)


def test_block_volume_and_top_normals():
    mesh = build_block(2.0, 3)
    geo = reference_geometry(mesh.nodes, mesh.elements)
    assert geo.wdV.sum() == pytest.approx(8.0, rel=1e-12)
    np.testing.assert_allclose(patch_normals(mesh, mesh.patch("flux")), np.tile([0.0, 0.0, 1.0], (9, 1)), atol=1e-12)


def test_artery_element_count_and_layers():
    mesh = artery()
    assert mesh.n_elements == 2 * 3 * 20 * 36
    assert mesh.layer_mask(Layer.MEDIA).sum() == mesh.layer_mask(Layer.ADVENTITIA).sum() == 2160
    r = np.linalg.norm(mesh.element_centroids()[:, :2], axis=1)
    assert r[mesh.layer_mask(Layer.MEDIA)].max() < R_M < r[mesh.layer_mask(Layer.ADVENTITIA)].min()


def test_artery_flux_window():
    mesh = artery()
    z = mesh.nodes[mesh.patch("flux").quads][:, :, 2]
    assert z.min() == pytest.approx(2.0, abs=1e-12)
    assert z.max() == pytest.approx(5.0, abs=1e-12)
    # 20 circumferential x 18 longitudinal facets in [2, 5]
    assert len(mesh.patch("flux")) == 20 * 18
    assert len(mesh.patch("lumen")) == 20 * 36


def test_artery_flux_normals_point_into_lumen():
    mesh = artery()
    patch = mesh.patch("flux")
    centers = mesh.nodes[patch.quads].mean(axis=1)
    radial = centers[:, :2] / np.linalg.norm(centers[:, :2], axis=1, keepdims=True)
    inward = -np.einsum("qi,qi->q", patch_normals(mesh, patch)[:, :2], radial)
    assert np.all(inward > 0.99)


def test_artery_volume_close_to_analytic():
    mesh = artery()
    volume = reference_geometry(mesh.nodes, mesh.elements).wdV.sum()
    exact = 0.25 * np.pi * (R_O**2 - R_I**2) * 6.0
    assert abs(volume - exact) / exact < 5e-3


def test_artery_node_sets():
    mesh = artery(QuadrantDivisions(1, 1, 4, 6))
    assert np.allclose(mesh.nodes[mesh.node_set("theta0"), 1], 0.0)
    assert np.allclose(mesh.nodes[mesh.node_set("theta90"), 0], 0.0)
    assert np.allclose(np.linalg.norm(mesh.nodes[mesh.node_set("lumen"), :2], axis=1), R_I)
    assert np.allclose(np.linalg.norm(mesh.nodes[mesh.node_set("outer"), :2], axis=1), R_O)
    assert np.allclose(mesh.nodes[mesh.node_set("zl"), 2], 6.0)


@pytest.mark.parametrize(
    "radii, window",
    [((1.9, 1.8, 2.2), (2.0, 3.0)), ((1.55, 1.89, 2.21), (5.0, 3.0)), ((1.55, 1.89, 2.21), (2.0, 0.0))],
)
def test_artery_rejects_bad_geometry(radii, window):
    with pytest.raises(MeshError):
        build_artery_quadrant(6.0, *radii, QuadrantDivisions(1, 1, 4, 6), window)


def test_artery_rejects_window_without_facets():
    with pytest.raises(MeshError):
        build_artery_quadrant(6.0, R_I, R_M, R_O, QuadrantDivisions(1, 1, 4, 2), (2.0, 1.0))


def test_fiber_frame_block():
    mesh = build_block(1.0, 2)
    a01, a02 = fiber_frame(mesh, 0, 0.0)
    np.testing.assert_allclose(a01, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(a02, [1.0, 0.0, 0.0])
    a01, a02 = fiber_frame(mesh, 3, 90.0)
    assert np.dot(a01, a02) == pytest.approx(-1.0)
    a01, a02 = fiber_frame(mesh, 5, 41.0)
    assert np.linalg.norm(a01) == pytest.approx(1.0)
    assert a01[2] == a02[2] == 0.0


def test_fiber_frame_artery_tangent_plane():
    mesh = artery(QuadrantDivisions(1, 1, 4, 6))
    centroids = mesh.element_centroids()
    element = int(np.argmin(np.arctan2(centroids[:, 1], centroids[:, 0])))
    radial = np.append(centroids[element, :2] / np.linalg.norm(centroids[element, :2]), 0.0)
    for a in fiber_frame(mesh, element, 41.0):
        assert abs(np.dot(a, radial)) < 1e-12
        assert np.linalg.norm(a) == pytest.approx(1.0)


def test_fiber_frame_unknown_element():
    with pytest.raises(MeshError):
        fiber_frame(build_block(1.0, 1), 1, 0.0)


def test_mesh_generation_is_deterministic():
    first, second = artery(QuadrantDivisions(1, 2, 5, 6)), artery(QuadrantDivisions(1, 2, 5, 6))
    assert np.array_equal(first.nodes, second.nodes)
    assert np.array_equal(first.elements, second.elements)
    assert np.array_equal(first.patch("flux").quads, second.patch("flux").quads)


def test_mesh_rejects_repeated_node():
    mesh = build_block(1.0, 1)
    elements = mesh.elements.copy()
    elements[0, 1] = elements[0, 0]
    with pytest.raises(MeshError):
        Mesh(mesh.nodes, elements, mesh.layers)


def test_mesh_rejects_inverted_element():
    mesh = build_block(1.0, 1)
    with pytest.raises(MeshError):
        Mesh(mesh.nodes, mesh.elements[:, [4, 5, 6, 7, 0, 1, 2, 3]], mesh.layers)


def test_mesh_rejects_foreign_patch_quad():
    mesh = build_block(1.0, 2)
    top = mesh.patch("top")
    with pytest.raises(MeshError):
        mesh.with_patch("bad", type(top)(top.quads, np.zeros(len(top), dtype=int)))
