"""
Restenosis Core - Structured hexahedral meshes.

Block and quarter-cylinder (artery quadrant) grids of trilinear hexahedra,
named node sets for displacement constraints, and quadrilateral surface
patches (faces of bulk elements) for the growth-factor flux interface.

Local hexahedron node order (isoparametric corners, VTK_HEXAHEDRON compatible):
    0 (-1,-1,-1)  1 (+1,-1,-1)  2 (+1,+1,-1)  3 (-1,+1,-1)
    4 (-1,-1,+1)  5 (+1,-1,+1)  6 (+1,+1,+1)  7 (-1,+1,+1)
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum
from types import MappingProxyType

import numpy as np

from core.elements import HEX_CORNERS, shape_hex8
from core.errors import MeshError
from core.params import Layer
from utils.logger_config import get_logger

logger = get_logger()


class MeshKind(StrEnum):
    BLOCK = "block"
    ARTERY = "artery"


# faces of the local hexahedron, ordered so that the bilinear tangents give
# the outward normal: (t_s x t_t) points out of the element
HEX_FACES: dict[str, tuple[int, int, int, int]] = {
    "xi-": (0, 4, 7, 3),
    "xi+": (1, 2, 6, 5),
    "eta-": (0, 1, 5, 4),
    "eta+": (3, 7, 6, 2),
    "zeta-": (0, 3, 2, 1),
    "zeta+": (4, 5, 6, 7),
}


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    """Quad facets of bulk elements; `quads[i]` is a face of element `parents[i]`."""
    quads: np.ndarray
    parents: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "quads", _frozen(np.reshape(self.quads, (-1, 4)), np.int64))
        object.__setattr__(self, "parents", _frozen(np.reshape(self.parents, (-1,)), np.int64))
        if len(self.quads) != len(self.parents):
            raise MeshError("surface patch quads and parents differ in length")

    def __len__(self) -> int:
        return len(self.quads)

    @property
    def node_ids(self) -> np.ndarray:
        return np.unique(self.quads)

    def subset(self, mask: np.ndarray) -> SurfacePatch:
        return SurfacePatch(self.quads[mask], self.parents[mask])


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    layers: tuple[Layer, ...]
    node_sets: Mapping[str, np.ndarray] = field(default_factory=dict)
    surface_patches: Mapping[str, SurfacePatch] = field(default_factory=dict)
    kind: MeshKind = MeshKind.BLOCK

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", _frozen(self.nodes, np.float64))
        object.__setattr__(self, "elements", _frozen(self.elements, np.int64))
        object.__setattr__(self, "layers", tuple(Layer(tag) for tag in self.layers))
        object.__setattr__(
            self, "node_sets", MappingProxyType({k: _frozen(v, np.int64) for k, v in self.node_sets.items()})
        )
        object.__setattr__(self, "surface_patches", MappingProxyType(dict(self.surface_patches)))
        self._validate()

    # ── Validation ──
    def _validate(self) -> None:
        n_nodes = len(self.nodes)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise MeshError("nodes must be an (N, 3) array")
        if self.elements.ndim != 2 or self.elements.shape[1] != 8:
            raise MeshError("elements must be an (E, 8) connectivity array")
        if len(self.layers) != len(self.elements):
            raise MeshError("one layer tag per element is required")
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n_nodes):
            raise MeshError("element connectivity references nodes out of range")
        distinct = np.array([len(set(row)) == 8 for row in self.elements.tolist()], dtype=bool)
        if not distinct.all():
            raise MeshError(f"element {int(np.argmin(distinct))} repeats a node")

        det = corner_jacobians(self.nodes, self.elements)
        if (det <= 0).any():
            bad = int(np.argwhere(det <= 0)[0, 0])
            raise MeshError(f"element {bad} has a non-positive reference Jacobian at a corner")

        for name, nodes in self.node_sets.items():
            if nodes.size and (nodes.min() < 0 or nodes.max() >= n_nodes):
                raise MeshError(f"node set {name!r} references nodes out of range")
        for name, patch in self.surface_patches.items():
            for quad, parent in zip(patch.quads.tolist(), patch.parents.tolist()):
                if not set(quad) <= set(self.elements[parent].tolist()):
                    raise MeshError(f"patch {name!r}: quad {quad} is not a face of element {parent}")

    # ── Accessors ──
    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def node_set(self, name: str) -> np.ndarray:
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}; available: {sorted(self.node_sets)}") from None

    def patch(self, name: str) -> SurfacePatch:
        try:
            return self.surface_patches[name]
        except KeyError:
            raise MeshError(f"unknown surface patch {name!r}; available: {sorted(self.surface_patches)}") from None

    def with_node_set(self, name: str, nodes: np.ndarray) -> Mesh:
        return replace(self, node_sets={**self.node_sets, name: np.asarray(nodes)})

    def with_patch(self, name: str, patch: SurfacePatch) -> Mesh:
        return replace(self, surface_patches={**self.surface_patches, name: patch})

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def layer_mask(self, layer: Layer) -> np.ndarray:
        return np.array([tag is layer for tag in self.layers], dtype=bool)


def corner_jacobians(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """det(dX/dxi) at the 8 corners of every element, shape (E, 8)."""
    dN = np.stack([shape_hex8(*corner)[1] for corner in HEX_CORNERS])  # (corner, a, j)
    jac = np.einsum("eai,caj->ecij", nodes[elements], dN)
    return np.linalg.det(jac)


def face_patch(elements: np.ndarray, element_ids: np.ndarray, face: str) -> SurfacePatch:
    local = np.array(HEX_FACES[face])
    return SurfacePatch(elements[element_ids][:, local], element_ids)


# ── Block ──
def build_block(side_length: float, divisions_per_axis: int) -> Mesh:
    """Uniform cube [0, L]^3 with n^3 elements.

    Node sets: x0, x1, y0, y1, z0, z1 (faces). Surface patches: "top" and
    "flux" (the same z = L face, outward normal +Z).
    """
    if not side_length > 0:
        raise MeshError(f"side_length must be > 0, got {side_length}")
    n = int(divisions_per_axis)
    if n < 1 or n != divisions_per_axis:
        raise MeshError(f"divisions_per_axis must be an integer >= 1, got {divisions_per_axis}")

    coords = np.linspace(0.0, side_length, n + 1)
    k, j, i = np.meshgrid(np.arange(n + 1), np.arange(n + 1), np.arange(n + 1), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    nodes = np.column_stack([coords[i], coords[j], coords[k]])

    def nid(ii, jj, kk):
        return ii + (n + 1) * (jj + (n + 1) * kk)

    ek, ej, ei = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    ei, ej, ek = ei.ravel(), ej.ravel(), ek.ravel()
    elements = np.column_stack([
        nid(ei, ej, ek), nid(ei + 1, ej, ek), nid(ei + 1, ej + 1, ek), nid(ei, ej + 1, ek),
        nid(ei, ej, ek + 1), nid(ei + 1, ej, ek + 1), nid(ei + 1, ej + 1, ek + 1), nid(ei, ej + 1, ek + 1),
    ])

    node_sets = {
        "x0": np.flatnonzero(i == 0), "x1": np.flatnonzero(i == n),
        "y0": np.flatnonzero(j == 0), "y1": np.flatnonzero(j == n),
        "z0": np.flatnonzero(k == 0), "z1": np.flatnonzero(k == n),
    }
    top = face_patch(elements, np.flatnonzero(ek == n - 1), "zeta+")

    mesh = Mesh(
        nodes=nodes,
        elements=elements,
        layers=(Layer.HOMOGENEOUS,) * len(elements),
        node_sets=node_sets,
        surface_patches={"top": top, "flux": top},
        kind=MeshKind.BLOCK,
    )
    logger.debug("block mesh built", extra={"extra_fields": {"nodes": mesh.n_nodes, "elements": mesh.n_elements}})
    return mesh


# ── Artery quadrant ──
@dataclass(frozen=True)
class QuadrantDivisions:
    radial_media: int = 3
    radial_adventitia: int = 3
    circumferential: int = 20
    longitudinal: int = 36

    def __post_init__(self) -> None:
        for name in ("radial_media", "radial_adventitia", "circumferential", "longitudinal"):
            if int(getattr(self, name)) < 1:
                raise MeshError(f"{name} divisions must be >= 1")


def build_artery_quadrant(
    length: float,
    r_inner: float,
    r_media_outer: float,
    r_outer: float,
    divisions: QuadrantDivisions,
    damage_window: tuple[float, float],
) -> Mesh:
    """Quarter of a two-layer cylinder, theta in [0, 90 deg], Z in [0, length].

    Local xi runs radially outward, eta circumferentially, zeta along Z.
    Node sets: lumen, outer, theta0 (y = 0 plane), theta90 (x = 0 plane),
    z0, zl. Patches: "lumen" (whole inner surface) and "flux" (lumen quads
    inside the damage window, normals pointing into the lumen).
    """
    if not 0 < r_inner < r_media_outer < r_outer:
        raise MeshError(f"radii must satisfy 0 < r_i < r_m < r_o, got {r_inner}, {r_media_outer}, {r_outer}")
    if not length > 0:
        raise MeshError(f"length must be > 0, got {length}")
    start, window = damage_window
    if window <= 0 or start < 0 or start + window > length * (1 + 1e-12):
        raise MeshError(f"damage window {damage_window} must have positive length inside [0, {length}]")

    nrm, nra = divisions.radial_media, divisions.radial_adventitia
    nc, nz = divisions.circumferential, divisions.longitudinal
    nr = nrm + nra

    radii = np.concatenate([
        np.linspace(r_inner, r_media_outer, nrm + 1),
        np.linspace(r_media_outer, r_outer, nra + 1)[1:],
    ])
    angles = np.linspace(0.0, 0.5 * np.pi, nc + 1)
    cos_t, sin_t = np.cos(angles), np.sin(angles)
    cos_t[-1], sin_t[-1] = 0.0, 1.0
    zs = np.linspace(0.0, length, nz + 1)

    iz, ic, ir = np.meshgrid(np.arange(nz + 1), np.arange(nc + 1), np.arange(nr + 1), indexing="ij")
    ir, ic, iz = ir.ravel(), ic.ravel(), iz.ravel()
    nodes = np.column_stack([radii[ir] * cos_t[ic], radii[ir] * sin_t[ic], zs[iz]])

    def nid(rr, cc, zz):
        return rr + (nr + 1) * (cc + (nc + 1) * zz)

    ez, ec, er = np.meshgrid(np.arange(nz), np.arange(nc), np.arange(nr), indexing="ij")
    er, ec, ez = er.ravel(), ec.ravel(), ez.ravel()
    elements = np.column_stack([
        nid(er, ec, ez), nid(er + 1, ec, ez), nid(er + 1, ec + 1, ez), nid(er, ec + 1, ez),
        nid(er, ec, ez + 1), nid(er + 1, ec, ez + 1), nid(er + 1, ec + 1, ez + 1), nid(er, ec + 1, ez + 1),
    ])
    layers = tuple(Layer.MEDIA if r < nrm else Layer.ADVENTITIA for r in er.tolist())

    node_sets = {
        "lumen": np.flatnonzero(ir == 0),
        "outer": np.flatnonzero(ir == nr),
        "theta0": np.flatnonzero(ic == 0),
        "theta90": np.flatnonzero(ic == nc),
        "z0": np.flatnonzero(iz == 0),
        "zl": np.flatnonzero(iz == nz),
    }

    inner_ids = np.flatnonzero(er == 0)
    lumen = face_patch(elements, inner_ids, "xi-")
    tol = 1e-9 * length
    z_lo, z_hi = zs[ez[inner_ids]], zs[ez[inner_ids] + 1]
    in_window = (z_lo >= start - tol) & (z_hi <= start + window + tol)
    if not in_window.any():
        raise MeshError(f"damage window {damage_window} contains no lumen facet at {nz} longitudinal divisions")

    mesh = Mesh(
        nodes=nodes,
        elements=elements,
        layers=layers,
        node_sets=node_sets,
        surface_patches={"lumen": lumen, "flux": lumen.subset(in_window)},
        kind=MeshKind.ARTERY,
    )
    logger.debug("artery quadrant built", extra={"extra_fields": {"nodes": mesh.n_nodes, "elements": mesh.n_elements}})
    return mesh


# ── Fibers ──
def fiber_frame(mesh: Mesh, element_id: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Two unit fiber directions at +/-alpha (degrees), constant per element.

    Block: from the X axis within the X-Y plane. Artery: from the
    longitudinal axis within the circumferential-longitudinal tangent plane
    at the element centroid.
    """
    if not 0 <= element_id < mesh.n_elements:
        raise MeshError(f"element {element_id} does not exist")
    frames = fiber_frames(mesh, np.full(mesh.n_elements, float(alpha)), element_ids=np.array([element_id]))
    return frames[0, 0], frames[0, 1]


def fiber_frames(mesh: Mesh, alphas: np.ndarray, element_ids: np.ndarray | None = None) -> np.ndarray:
    """Vectorized fiber_frame: returns (E, 2, 3) for the requested elements."""
    ids = np.arange(mesh.n_elements) if element_ids is None else np.asarray(element_ids)
    a = np.deg2rad(np.asarray(alphas, dtype=float)[ids])
    ca, sa = np.cos(a)[:, None], np.sin(a)[:, None]

    if mesh.kind is MeshKind.BLOCK:
        axis = np.broadcast_to([1.0, 0.0, 0.0], (len(ids), 3))
        transverse = np.broadcast_to([0.0, 1.0, 0.0], (len(ids), 3))
    else:
        centroid = mesh.element_centroids()[ids]
        theta = np.arctan2(centroid[:, 1], centroid[:, 0])
        axis = np.broadcast_to([0.0, 0.0, 1.0], (len(ids), 3))
        transverse = np.column_stack([-np.sin(theta), np.cos(theta), np.zeros_like(theta)])

    a01 = ca * axis + sa * transverse
    a02 = ca * axis - sa * transverse
    return np.stack([a01, a02], axis=1)
