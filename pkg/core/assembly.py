"""
Restenosis Core - Global assembly.

Gathers nodal values per element, runs the vectorized jax kernels chunk by
chunk in a fixed element order and reduces into scipy sparse matrices
(COO -> CSR sums duplicates in a fixed order, so assembly is bit-reproducible).

The projected nodal J makes every species residual depend on displacements
of neighbouring elements. The monolithic tangent carries that dependence
exactly as K_direct + K_J @ G, with K_J = dR/dJ_nodal and G = dJ_nodal/du.
"""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp

from core.elements import (
    DOFS_PER_NODE,
    ElementGeometry,
    ElementMaterial,
    Field,
    FluxPatchParams,
    batched_flux,
    batched_mechanics,
    batched_monolithic,
    batched_species,
    batched_volume_J,
    check_patch,
    reference_geometry,
)
from core.errors import InvertedElementError
from core.mesh import Mesh, SurfacePatch
from utils.logger_config import get_logger

logger = get_logger()


@dataclass(frozen=True, eq=False)
class DofMap:
    """Interleaved dofs: node a owns 7a .. 7a+6."""
    n_nodes: int
    constrained: np.ndarray   # global dof ids, sorted
    values: np.ndarray        # prescribed values, aligned with `constrained`

    @property
    def n_dofs(self) -> int:
        return DOFS_PER_NODE * self.n_nodes

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained] = False
        return mask

    @staticmethod
    def dof(node, component) -> np.ndarray:
        return DOFS_PER_NODE * np.asarray(node) + np.asarray(component)

    def displacement_constraints(self) -> tuple[np.ndarray, np.ndarray]:
        """Constraints re-indexed into the displacement-only (3n) system."""
        node, comp = np.divmod(self.constrained, DOFS_PER_NODE)
        keep = comp >= Field.U
        return 3 * node[keep] + comp[keep] - Field.U, self.values[keep]


def _coo(data: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]) -> sp.csr_matrix:
    return sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


class Assembler:
    """Owns the per-mesh constants and the element loops."""

    def __init__(
        self,
        mesh: Mesh,
        materials: ElementMaterial,
        anisotropic: bool,
        flux_patch: SurfacePatch | None = None,
        flux_params: FluxPatchParams | None = None,
        chunk: int = 2048,
    ):
        self.mesh = mesh
        self.materials = ElementMaterial(*(jnp.asarray(leaf) for leaf in materials))
        self.anisotropic = bool(anisotropic)
        self.chunk = max(1, int(chunk))
        self.geometry = reference_geometry(mesh.nodes, mesh.elements)
        self._geo = ElementGeometry(
            jnp.asarray(self.geometry.N), jnp.asarray(self.geometry.dNdX), jnp.asarray(self.geometry.wdV)
        )
        self.conn = np.asarray(mesh.elements)
        self.edofs = (DOFS_PER_NODE * self.conn[:, :, None] + np.arange(DOFS_PER_NODE)).reshape(len(self.conn), -1)
        self.udofs = (DOFS_PER_NODE * self.conn[:, :, None] + Field.U + np.arange(3)).reshape(len(self.conn), -1)
        self.u3dofs = (3 * self.conn[:, :, None] + np.arange(3)).reshape(len(self.conn), -1)
        self.n_nodes = mesh.n_nodes
        self.n_dofs = DOFS_PER_NODE * mesh.n_nodes

        element_volume = self.geometry.wdV.sum(axis=1)
        self.nodal_volume = np.bincount(self.conn.ravel(), np.repeat(element_volume, 8), self.n_nodes)
        # integral of each shape function; conserved content is weights @ c0
        self.node_weights = np.bincount(
            self.conn.ravel(), np.einsum("eq,qa->ea", self.geometry.wdV, self.geometry.N).ravel(), self.n_nodes
        )

        self.flux_patch = flux_patch if flux_patch is not None and len(flux_patch) else None
        self.flux_params = flux_params or FluxPatchParams()
        if self.flux_patch is not None:
            check_patch(mesh.nodes, self.flux_patch.quads)
            self._patch_X = jnp.asarray(mesh.nodes[self.flux_patch.quads])

    # ── helpers ──
    def _chunks(self) -> Iterator[slice]:
        n = len(self.conn)
        for start in range(0, n, self.chunk):
            yield slice(start, min(start + self.chunk, n))

    def _geo_slice(self, s: slice) -> ElementGeometry:
        return ElementGeometry(self._geo.N, self._geo.dNdX[s], self._geo.wdV[s])

    def _mat_slice(self, s: slice) -> ElementMaterial:
        return ElementMaterial(*(leaf[s] for leaf in self.materials))

    def _scatter(self, index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
        return np.bincount(index.ravel(), np.asarray(values, dtype=float).ravel(), size)

    def check_orientation(self, u: np.ndarray) -> None:
        """Raise InvertedElementError on the first element with det F <= 0."""
        u_e = np.asarray(u)[self.conn]
        F = np.eye(3) + np.einsum("eai,eqaJ->eqiJ", u_e, self.geometry.dNdX)
        det = np.linalg.det(F)
        if not np.all(det > 0):
            bad = int(np.argwhere(~(det > 0))[0, 0])
            raise InvertedElementError(bad, f"min det F = {float(np.nanmin(det)):.6g}")

    # ── J projection ──
    def nodal_J(self, u: np.ndarray, with_derivative: bool = False) -> tuple[np.ndarray, sp.csr_matrix | None]:
        """Projected nodal J and optionally G = dJ_nodal/du over the full dof vector."""
        u_e = jnp.asarray(np.asarray(u)[self.conn])
        vol_J, dvol_J = [], []
        for s in self._chunks():
            v, dv = batched_volume_J(u_e[s], self._geo_slice(s))
            vol_J.append(np.asarray(v))
            dvol_J.append(np.asarray(dv))
        vol_J = np.concatenate(vol_J)
        J_nodal = self._scatter(self.conn, np.repeat(vol_J, 8), self.n_nodes) / self.nodal_volume
        if not with_derivative:
            return J_nodal, None

        dvol_J = np.concatenate(dvol_J).reshape(len(self.conn), 24)
        data = dvol_J[:, None, :] / self.nodal_volume[self.conn][:, :, None]
        rows = np.broadcast_to(self.conn[:, :, None], data.shape)
        cols = np.broadcast_to(self.udofs[:, None, :], data.shape)
        return J_nodal, _coo(data, rows, cols, (self.n_nodes, self.n_dofs))

    def quadrature_J(self, u: np.ndarray) -> np.ndarray:
        F = np.eye(3) + np.einsum("eai,eqaJ->eqiJ", np.asarray(u)[self.conn], self.geometry.dNdX)
        return np.linalg.det(F)

    # ── monolithic ──
    def monolithic(self, x: np.ndarray, x_old: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, sp.csr_matrix]:
        """Residual (7n,) and full tangent of the fully implicit system."""
        J_nodal, G = self.nodal_J(x[:, Field.U:], with_derivative=True)
        dofs = jnp.asarray(x[self.conn])
        dofs_old = jnp.asarray(x_old[self.conn])
        jn = jnp.asarray(J_nodal[self.conn])

        R_parts, K_parts, KJ_parts = [], [], []
        for s in self._chunks():
            R_e, K_e, KJ_e = batched_monolithic(
                dofs[s], dofs_old[s], jn[s], self._geo_slice(s), self._mat_slice(s), dt, self.anisotropic
            )
            R_parts.append(np.asarray(R_e))
            K_parts.append(np.asarray(K_e))
            KJ_parts.append(np.asarray(KJ_e))
        R_e = np.concatenate(R_parts).reshape(len(self.conn), -1)
        K_e = np.concatenate(K_parts).reshape(len(self.conn), 56, 56)
        KJ_e = np.concatenate(KJ_parts).reshape(len(self.conn), 56, 8)

        R = self._scatter(self.edofs, R_e, self.n_dofs)
        rows = [np.broadcast_to(self.edofs[:, :, None], K_e.shape)]
        cols = [np.broadcast_to(self.edofs[:, None, :], K_e.shape)]
        data = [K_e]

        if self.flux_patch is not None:
            R_f, data_f, rows_f, cols_f = self._flux_monolithic(x, t)
            R += R_f
            data += data_f
            rows += rows_f
            cols += cols_f

        K = sp.coo_matrix(
            (np.concatenate([d.ravel() for d in data]),
             (np.concatenate([r.ravel() for r in rows]), np.concatenate([c.ravel() for c in cols]))),
            shape=(self.n_dofs, self.n_dofs),
        ).tocsr()
        K_J = _coo(
            KJ_e,
            np.broadcast_to(self.edofs[:, :, None], KJ_e.shape),
            np.broadcast_to(self.conn[:, None, :], KJ_e.shape),
            (self.n_dofs, self.n_nodes),
        )
        return R, (K + K_J @ G).tocsr()

    def _flux_monolithic(self, x: np.ndarray, t: float):
        quads = self.flux_patch.quads
        q, c_amb = self.flux_params.at(t)
        R_q, K_c, K_u = batched_flux(
            self._patch_X, jnp.asarray(x[quads][:, :, Field.U:]), jnp.asarray(x[quads][:, :, :2]),
            jnp.asarray(q), jnp.asarray(c_amb), self.flux_params.p_en,
        )
        R_q, K_c, K_u = np.asarray(R_q), np.asarray(K_c), np.asarray(K_u)
        row_dofs = DOFS_PER_NODE * quads[:, :, None] + np.arange(2)            # (Q, 4, 2)
        u_dofs = DOFS_PER_NODE * quads[:, :, None] + Field.U + np.arange(3)    # (Q, 4, 3)
        R = self._scatter(row_dofs, R_q, self.n_dofs)
        data = [K_c, K_u]
        rows = [
            np.broadcast_to(row_dofs[:, :, :, None, None], K_c.shape),
            np.broadcast_to(row_dofs[:, :, :, None, None], K_u.shape),
        ]
        cols = [
            np.broadcast_to(row_dofs[:, None, None, :, :], K_c.shape),
            np.broadcast_to(u_dofs[:, None, None, :, :], K_u.shape),
        ]
        return R, data, rows, cols

    # ── staggered ──
    def species(self, field: Field, x_old: np.ndarray, t: float, dt: float) -> tuple[np.ndarray, sp.csr_matrix]:
        """Semi-implicit system of one species at its t_n values: (R (n,), K (n, n)).

        Linear in the unknown, so x_new = x_old - K^-1 R exactly.
        """
        f = int(field)
        J_nodal, _ = self.nodal_J(x_old[:, Field.U:])
        dofs_old = jnp.asarray(x_old[self.conn])
        jn = jnp.asarray(J_nodal[self.conn])
        own = jnp.asarray(x_old[self.conn][:, :, f])

        R_parts, K_parts = [], []
        for s in self._chunks():
            R_e, K_e = batched_species(own[s], dofs_old[s], jn[s], self._geo_slice(s), self._mat_slice(s), dt, f)
            R_parts.append(np.asarray(R_e))
            K_parts.append(np.asarray(K_e))
        R_e, K_e = np.concatenate(R_parts), np.concatenate(K_parts)

        R = self._scatter(self.conn, R_e, self.n_nodes)
        data = [K_e]
        rows = [np.broadcast_to(self.conn[:, :, None], K_e.shape)]
        cols = [np.broadcast_to(self.conn[:, None, :], K_e.shape)]

        if self.flux_patch is not None and f in (Field.P, Field.T):
            quads = self.flux_patch.quads
            q, c_amb = self.flux_params.at(t)
            R_q, K_c, _ = batched_flux(
                self._patch_X, jnp.asarray(x_old[quads][:, :, Field.U:]), jnp.asarray(x_old[quads][:, :, :2]),
                jnp.asarray(q), jnp.asarray(c_amb), self.flux_params.p_en,
            )
            R_q = np.asarray(R_q)[:, :, f]
            K_c = np.asarray(K_c)[:, :, f, :, f]
            R += self._scatter(quads, R_q, self.n_nodes)
            data.append(K_c)
            rows.append(np.broadcast_to(quads[:, :, None], K_c.shape))
            cols.append(np.broadcast_to(quads[:, None, :], K_c.shape))

        K = sp.coo_matrix(
            (np.concatenate([d.ravel() for d in data]),
             (np.concatenate([r.ravel() for r in rows]), np.concatenate([c.ravel() for c in cols]))),
            shape=(self.n_nodes, self.n_nodes),
        ).tocsr()
        return R, K

    def mechanics(self, u: np.ndarray, species: np.ndarray) -> tuple[np.ndarray, sp.csr_matrix]:
        """Displacement-only residual (3n,) and tangent with species held fixed."""
        u_e = jnp.asarray(np.asarray(u)[self.conn])
        s_e = jnp.asarray(np.asarray(species)[self.conn])
        R_parts, K_parts = [], []
        for s in self._chunks():
            R_e, K_e = batched_mechanics(u_e[s], s_e[s], self._geo_slice(s), self._mat_slice(s), self.anisotropic)
            R_parts.append(np.asarray(R_e))
            K_parts.append(np.asarray(K_e))
        R_e = np.concatenate(R_parts).reshape(len(self.conn), 24)
        K_e = np.concatenate(K_parts).reshape(len(self.conn), 24, 24)
        R = self._scatter(self.u3dofs, R_e, 3 * self.n_nodes)
        K = _coo(
            K_e,
            np.broadcast_to(self.u3dofs[:, :, None], K_e.shape),
            np.broadcast_to(self.u3dofs[:, None, :], K_e.shape),
            (3 * self.n_nodes, 3 * self.n_nodes),
        )
        return R, K
