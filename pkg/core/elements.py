"""
Restenosis Core - Finite elements.

Trilinear hexahedron carrying the five coupled fields (four species plus
displacement) and the bilinear flux-interface quadrilateral. Residuals are
pure jax functions of the element nodal values; consistent tangents are
their forward-mode Jacobians, vectorized over elements by the assembler.

Nodal dof layout per node: (c0_P, c0_T, c0_E, rho0_S, u_x, u_y, u_z).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from functools import partial
from typing import TYPE_CHECKING, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from core import kinetics
from core.constitutive import (
    ElasticConstants,
    _structural_tensor,
    first_piola,
    growth_direction,
    growth_projector,
)
from core.errors import InvertedElementError, MeshError
from core.params import LayerParams

if TYPE_CHECKING:
    from core.mesh import Mesh

DOFS_PER_NODE = 7
N_SPECIES = 4

HEX_CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
    dtype=float,
)
QUAD_CORNERS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


class Field(IntEnum):
    P = 0
    T = 1
    E = 2
    S = 3
    U = 4

    @property
    def label(self) -> str:
        return self.name if self is not Field.U else "u"


@dataclass(frozen=True)
class FullyImplicit:
    pass


@dataclass(frozen=True)
class SemiImplicit:
    field: Field


Scheme = FullyImplicit | SemiImplicit


# ── Shape functions and quadrature ──
class QuadRule(NamedTuple):
    points: np.ndarray
    weights: np.ndarray


def gauss_hex(order: int = 2) -> QuadRule:
    x, w = np.polynomial.legendre.leggauss(order)
    pts = np.array([[a, b, c] for c in x for b in x for a in x])
    wts = np.array([wa * wb * wc for wc in w for wb in w for wa in w])
    return QuadRule(pts, wts)


def gauss_quad(order: int = 2) -> QuadRule:
    x, w = np.polynomial.legendre.leggauss(order)
    pts = np.array([[a, b] for b in x for a in x])
    wts = np.array([wa * wb for wb in w for wa in w])
    return QuadRule(pts, wts)


def shape_hex8(xi: float, eta: float, zeta: float) -> tuple[np.ndarray, np.ndarray]:
    xa, ea, za = HEX_CORNERS.T
    fx, fe, fz = 1.0 + xi * xa, 1.0 + eta * ea, 1.0 + zeta * za
    N = 0.125 * fx * fe * fz
    dN = 0.125 * np.column_stack([xa * fe * fz, ea * fx * fz, za * fx * fe])
    return N, dN


def shape_quad4(s: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    sa, ta = QUAD_CORNERS.T
    N = 0.25 * (1.0 + s * sa) * (1.0 + t * ta)
    dN = 0.25 * np.column_stack([sa * (1.0 + t * ta), ta * (1.0 + s * sa)])
    return N, dN


_HEX_RULE = gauss_hex(2)
_HEX_N, _HEX_DN = (np.stack(v) for v in zip(*(shape_hex8(*p) for p in _HEX_RULE.points)))
_QUAD_RULE = gauss_quad(2)
_QUAD_N, _QUAD_DN = (np.stack(v) for v in zip(*(shape_quad4(*p) for p in _QUAD_RULE.points)))


# ── Reference geometry and materials ──
class ElementGeometry(NamedTuple):
    N: np.ndarray      # (Q, 8), shared
    dNdX: np.ndarray   # (E, Q, 8, 3) or (Q, 8, 3)
    wdV: np.ndarray    # (E, Q) or (Q,)


GEOMETRY_AXES = ElementGeometry(N=None, dNdX=0, wdV=0)


def reference_geometry(nodes: np.ndarray, elements: np.ndarray) -> ElementGeometry:
    X = np.asarray(nodes, dtype=float)[np.asarray(elements)]          # (E, 8, 3)
    jac = np.einsum("eai,qaj->eqij", X, _HEX_DN)                      # dX_i / dxi_j
    det = np.linalg.det(jac)
    if (det <= 0).any():
        raise InvertedElementError(int(np.argwhere(det <= 0)[0, 0]), "reference configuration")
    dNdX = np.einsum("qaj,eqji->eqai", _HEX_DN, np.linalg.inv(jac))
    return ElementGeometry(N=_HEX_N, dNdX=dNdX, wdV=det * _HEX_RULE.weights)


class ElementMaterial(NamedTuple):
    """Per-element constants; every leaf carries a leading element axis."""
    D_P: np.ndarray
    D_T: np.ndarray
    eta_P: np.ndarray
    eps_P: np.ndarray
    eps_T: np.ndarray
    eta_E: np.ndarray
    eps_E: np.ndarray
    eta_S: np.ndarray
    chi_C: np.ndarray
    chi_H: np.ndarray
    c_P_th: np.ndarray
    c_T_th: np.ndarray
    c_E_th: np.ndarray
    c_E_eq: np.ndarray
    l_P: np.ndarray
    l_T: np.ndarray
    rho_S_eq: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    k1_bar: np.ndarray
    k2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    M: np.ndarray


_SPECIES_KEYS = ("D_P", "D_T", "eta_P", "eps_P", "eps_T", "eta_E", "eps_E", "eta_S", "chi_C", "chi_H",
                 "c_P_th", "c_T_th", "c_E_th", "c_E_eq", "l_P", "l_T", "rho_S_eq")
_ELASTIC_KEYS = ("mu", "lam", "k1_bar", "k2")


def element_materials(params: list[LayerParams], frames: np.ndarray) -> ElementMaterial:
    """Stack per-element parameters; `frames` is (E, 2, 3) fiber pairs."""
    values: dict[str, np.ndarray] = {}
    for key in _SPECIES_KEYS:
        values[key] = np.array([getattr(p.species, key) for p in params], dtype=float)
    for key in _ELASTIC_KEYS:
        values[key] = np.array([getattr(p.structural, key) for p in params], dtype=float)
    H1, H2, M = [], [], []
    for p, (a01, a02) in zip(params, frames):
        H1.append(np.asarray(_structural_tensor(a01, p.structural.kappa)))
        H2.append(np.asarray(_structural_tensor(a02, p.structural.kappa)))
        gamma = growth_direction(a01, a02) if p.structural.anisotropic else None
        M.append(growth_projector(p.structural.anisotropic, gamma))
    return ElementMaterial(**values, H1=np.array(H1), H2=np.array(H2), M=np.array(M))


def _take(material: ElementMaterial, index) -> ElementMaterial:
    return ElementMaterial(*(np.asarray(leaf)[index] for leaf in material))


# ── Element residuals (single element, traced) ──
def _deformation_gradients(u_e, dNdX):
    return jnp.eye(3) + jnp.einsum("ai,qaJ->qiJ", u_e, dNdX)


def _species_residual(nodal_mix, nodal_coef, nodal_old, F, grad_J, geo, mat, dt):
    """Backward-Euler species residual (8, 4).

    `nodal_mix` supplies the unknowns (mass term, reactions, own diffusive
    gradient), `nodal_coef` the lagged flux coefficients. Both equal the
    t_{n+1} values in the fully implicit scheme.
    """
    vals_mix = geo.N @ nodal_mix
    vals_coef = geo.N @ nodal_coef
    vals_old = geo.N @ nodal_old
    grads_mix = jnp.einsum("qaJ,af->qfJ", geo.dNdX, nodal_mix)
    grads_coef = jnp.einsum("qaJ,af->qfJ", geo.dNdX, nodal_coef)
    J = jnp.linalg.det(F)
    Cinv = jnp.linalg.inv(jnp.einsum("qkI,qkJ->qIJ", F, F))

    def point(vm, gm, vc, gc, Jq, Ciq, gJq):
        s_mix = kinetics.SpeciesPointState(vm[0], vm[1], vm[2], vm[3], Jq, Ciq, gm[0], gm[1], gm[2], gJq)
        s_coef = kinetics.SpeciesPointState(vc[0], vc[1], vc[2], vc[3], Jq, Ciq, gc[0], gc[1], gc[2], gJq)
        return kinetics.reaction_rates(s_mix, mat), kinetics.species_fluxes(s_mix, s_coef, mat)

    rates, fluxes = jax.vmap(point)(vals_mix, grads_mix, vals_coef, grads_coef, J, Cinv, grad_J)
    source = (vals_mix - vals_old) / dt - rates
    return (
        jnp.einsum("q,qa,qf->af", geo.wdV, geo.N, source)
        + jnp.einsum("q,qaJ,qfJ->af", geo.wdV, geo.dNdX, fluxes)
    )


def _mechanics_residual(u_e, nodal_species, geo, mat, anisotropic):
    F = _deformation_gradients(u_e, geo.dNdX)
    vals = geo.N @ nodal_species
    elastic = ElasticConstants(mat.mu, mat.lam, mat.k1_bar, mat.k2, mat.c_E_eq, mat.rho_S_eq)
    P = jax.vmap(partial(first_piola, anisotropic=anisotropic), in_axes=(0, 0, 0, None, None, None, None))(
        F, vals[:, 3], vals[:, 2], mat.H1, mat.H2, mat.M, elastic
    )
    return jnp.einsum("q,qiJ,qaJ->ai", geo.wdV, P, geo.dNdX)


def monolithic_residual(dofs, dofs_old, j_nodal, geo, mat, dt, anisotropic):
    """Fully implicit residual (8, 7); `j_nodal` is the projected nodal J."""
    F = _deformation_gradients(dofs[:, 4:], geo.dNdX)
    grad_J = jnp.einsum("qaJ,a->qJ", geo.dNdX, j_nodal)
    species = _species_residual(dofs[:, :4], dofs[:, :4], dofs_old[:, :4], F, grad_J, geo, mat, dt)
    mechanics = _mechanics_residual(dofs[:, 4:], dofs[:, :4], geo, mat, anisotropic)
    return jnp.concatenate([species, mechanics], axis=1)


def species_block_residual(own, dofs_old, j_nodal_old, geo, mat, dt, field):
    """Semi-implicit residual (8,) of one species; everything else at t_n."""
    nodal_old = dofs_old[:, :4]
    nodal_mix = nodal_old.at[:, field].set(own)
    F = _deformation_gradients(dofs_old[:, 4:], geo.dNdX)
    grad_J = jnp.einsum("qaJ,a->qJ", geo.dNdX, j_nodal_old)
    return _species_residual(nodal_mix, nodal_old, nodal_old, F, grad_J, geo, mat, dt)[:, field]


def mechanics_block_residual(u_e, nodal_species, geo, mat, anisotropic):
    return _mechanics_residual(u_e, nodal_species, geo, mat, anisotropic)


def element_volume_J(u_e, geo):
    """Integral of J over the element (deformed volume)."""
    F = _deformation_gradients(u_e, geo.dNdX)
    return jnp.sum(geo.wdV * jnp.linalg.det(F))


# ── Element kernels: residual plus Jacobian ──
def monolithic_kernel(dofs, dofs_old, j_nodal, geo, mat, dt, anisotropic):
    def fun(d, j):
        R = monolithic_residual(d, dofs_old, j, geo, mat, dt, anisotropic)
        return R, R

    (K, K_J), R = jax.jacfwd(fun, argnums=(0, 1), has_aux=True)(dofs, j_nodal)
    return R, K, K_J


def species_kernel(own, dofs_old, j_nodal_old, geo, mat, dt, field):
    def fun(c):
        R = species_block_residual(c, dofs_old, j_nodal_old, geo, mat, dt, field)
        return R, R

    K, R = jax.jacfwd(fun, has_aux=True)(own)
    return R, K


def mechanics_kernel(u_e, nodal_species, geo, mat, anisotropic):
    def fun(u):
        R = mechanics_block_residual(u, nodal_species, geo, mat, anisotropic)
        return R, R

    K, R = jax.jacfwd(fun, has_aux=True)(u_e)
    return R, K


def volume_J_kernel(u_e, geo):
    return jax.value_and_grad(element_volume_J)(u_e, geo)


@partial(jax.jit, static_argnames="anisotropic")
def batched_monolithic(dofs, dofs_old, j_nodal, geo, mat, dt, anisotropic):
    kernel = partial(monolithic_kernel, dt=dt, anisotropic=anisotropic)
    return jax.vmap(kernel, in_axes=(0, 0, 0, GEOMETRY_AXES, 0))(dofs, dofs_old, j_nodal, geo, mat)


@partial(jax.jit, static_argnames="field")
def batched_species(own, dofs_old, j_nodal_old, geo, mat, dt, field):
    kernel = partial(species_kernel, dt=dt, field=field)
    return jax.vmap(kernel, in_axes=(0, 0, 0, GEOMETRY_AXES, 0))(own, dofs_old, j_nodal_old, geo, mat)


@partial(jax.jit, static_argnames="anisotropic")
def batched_mechanics(u_e, nodal_species, geo, mat, anisotropic):
    kernel = partial(mechanics_kernel, anisotropic=anisotropic)
    return jax.vmap(kernel, in_axes=(0, 0, GEOMETRY_AXES, 0))(u_e, nodal_species, geo, mat)


@jax.jit
def batched_volume_J(u_e, geo):
    return jax.vmap(volume_J_kernel, in_axes=(0, GEOMETRY_AXES))(u_e, geo)


# ── Flux interface ──
@dataclass(frozen=True)
class TimeProfile:
    """Piecewise-linear time series, held constant outside its breakpoints."""
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if len(times) == 0 or len(times) != len(self.values):
            raise ValueError("profile needs matching, non-empty times and values")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"profile times must be strictly increasing, got {list(times)}")

    @classmethod
    def constant(cls, value: float) -> TimeProfile:
        return cls((0.0,), (float(value),))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class FluxPatchParams:
    """Boundary influx q = q_prescribed(t) + p_en (c_ambient(t) - c0/J) per growth factor."""
    p_en: float = 0.0
    ambient_P: TimeProfile = dc_field(default_factory=lambda: TimeProfile.constant(0.0))
    ambient_T: TimeProfile = dc_field(default_factory=lambda: TimeProfile.constant(0.0))
    influx_P: TimeProfile = dc_field(default_factory=lambda: TimeProfile.constant(0.0))
    influx_T: TimeProfile = dc_field(default_factory=lambda: TimeProfile.constant(0.0))

    def __post_init__(self) -> None:
        if self.p_en < 0:
            raise ValueError(f"p_en must be >= 0, got {self.p_en}")

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(prescribed influx, ambient concentration) for (P, T) at time t."""
        return (
            np.array([self.influx_P(t), self.influx_T(t)]),
            np.array([self.ambient_P(t), self.ambient_T(t)]),
        )


def flux_residual(X, u, c, q_prescribed, c_ambient, p_en):
    """Reference-patch residual (4, n_gf) of the flux interface.

    The surface deformation gradient maps the reference frame (X_s, X_t, N)
    to the current one (x_s, x_t, n); the integrand is J q (n . F^-T N).
    """
    x = X + u
    R = jnp.zeros_like(c)
    for Nq, dNq, w in zip(_QUAD_N, _QUAD_DN, _QUAD_RULE.weights):
        X_s, X_t = dNq[:, 0] @ X, dNq[:, 1] @ X
        x_s, x_t = dNq[:, 0] @ x, dNq[:, 1] @ x
        area_ref = jnp.cross(X_s, X_t)
        dA = jnp.linalg.norm(area_ref)
        N_ref = area_ref / dA
        area_cur = jnp.cross(x_s, x_t)
        n_cur = area_cur / jnp.linalg.norm(area_cur)
        F = jnp.column_stack([x_s, x_t, n_cur]) @ jnp.linalg.inv(jnp.column_stack([X_s, X_t, N_ref]))
        J = jnp.linalg.det(F)
        projection = n_cur @ (jnp.linalg.inv(F).T @ N_ref)
        c_q = Nq @ c
        q = q_prescribed + p_en * (c_ambient - c_q / J)
        R = R - w * dA * jnp.outer(Nq, J * q * projection)
    return R


def flux_kernel(X, u, c, q_prescribed, c_ambient, p_en):
    def fun(cc, uu):
        R = flux_residual(X, uu, cc, q_prescribed, c_ambient, p_en)
        return R, R

    (K_c, K_u), R = jax.jacfwd(fun, argnums=(0, 1), has_aux=True)(c, u)
    return R, K_c, K_u


@jax.jit
def batched_flux(X, u, c, q_prescribed, c_ambient, p_en):
    return jax.vmap(flux_kernel, in_axes=(0, 0, 0, None, None, None))(X, u, c, q_prescribed, c_ambient, p_en)


def check_patch(nodes: np.ndarray, quads: np.ndarray) -> None:
    X = np.asarray(nodes)[np.asarray(quads)]
    for Nq, dNq in zip(_QUAD_N, _QUAD_DN):
        area = np.linalg.norm(np.cross(np.einsum("a,qai->qi", dNq[:, 0], X), np.einsum("a,qai->qi", dNq[:, 1], X)), axis=1)
        if (area <= 1e-14).any():
            raise MeshError(f"degenerate flux quad {int(np.argmin(area))} (zero area)")


# ── Public element API ──
@dataclass
class ElementContribution:
    residual: dict[str, np.ndarray]
    stiffness: dict[tuple[str, str], np.ndarray]

    def block(self, row: str, col: str) -> np.ndarray:
        return self.stiffness[(row, col)]


_LABELS = ("P", "T", "E", "S")


def _single_material(params: LayerParams, frame) -> ElementMaterial:
    return _take(element_materials([params], np.asarray(frame, dtype=float)[None]), 0)


def hex_residual_tangent(
    X_e,
    nodal_new,
    nodal_old,
    dt: float,
    params: LayerParams,
    frame,
    scheme: Scheme = FullyImplicit(),
    j_nodal=None,
) -> ElementContribution:
    """Residual and stiffness blocks of one hexahedron.

    `nodal_new` / `nodal_old` are (8, 7) arrays in the interleaved dof
    layout. `j_nodal` defaults to the element's own volume-averaged J
    (a single-element projection, hence Grad J = 0).
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    geo1 = reference_geometry(np.asarray(X_e, dtype=float), np.arange(8)[None])
    geo = ElementGeometry(geo1.N, geo1.dNdX[0], geo1.wdV[0])
    mat = _single_material(params, frame)
    new = jnp.asarray(nodal_new, dtype=float)
    old = jnp.asarray(nodal_old, dtype=float)
    anisotropic = params.structural.anisotropic

    F_check = np.asarray(_deformation_gradients(new[:, 4:], geo.dNdX))
    if (np.linalg.det(F_check) <= 0).any():
        raise InvertedElementError(0, "current configuration")

    def own_J(u):
        return jnp.full(8, element_volume_J(u, geo) / jnp.sum(geo.wdV))

    residual: dict[str, np.ndarray] = {}
    stiffness: dict[tuple[str, str], np.ndarray] = {}

    if isinstance(scheme, FullyImplicit):
        def fun(d):
            jn = own_J(d[:, 4:]) if j_nodal is None else jnp.asarray(j_nodal)
            R = monolithic_residual(d, old, jn, geo, mat, dt, anisotropic)
            return R, R

        K, R = jax.jacfwd(fun, has_aux=True)(new)
        R, K = np.asarray(R), np.asarray(K)
        cols = {**{lab: [i] for i, lab in enumerate(_LABELS)}, "u": [4, 5, 6]}
        for row, ri in cols.items():
            residual[row] = R[:, ri].reshape(-1)
            for col, ci in cols.items():
                stiffness[(row, col)] = K[:, ri][:, :, :, ci].reshape(8 * len(ri), 8 * len(ci))
        return ElementContribution(residual, stiffness)

    field = Field(scheme.field)
    if field is Field.U:
        R, K = mechanics_kernel(new[:, 4:], new[:, :4], geo, mat, anisotropic)
        residual["u"] = np.asarray(R).reshape(24)
        stiffness[("u", "u")] = np.asarray(K).reshape(24, 24)
    else:
        jn = own_J(old[:, 4:]) if j_nodal is None else jnp.asarray(j_nodal)
        R, K = species_kernel(new[:, int(field)], old, jn, geo, mat, dt, int(field))
        residual[field.label] = np.asarray(R)
        stiffness[(field.label, field.label)] = np.asarray(K)
    return ElementContribution(residual, stiffness)


def flux_surface_residual_tangent(
    X_patch,
    u_patch,
    c0,
    params: FluxPatchParams,
    t: float,
    growth_factor: Field = Field.P,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One interface quad: (R (4,), dR/dc0 (4, 4), dR/du (4, 12))."""
    X = np.asarray(X_patch, dtype=float)
    check_patch(X, np.arange(4)[None])
    q_all, c_all = params.at(t)
    gf = int(Field(growth_factor))
    if gf not in (Field.P, Field.T):
        raise ValueError("flux interfaces carry PDGF or TGF-beta only")
    R, K_c, K_u = flux_kernel(
        X, jnp.asarray(u_patch, dtype=float), jnp.asarray(c0, dtype=float)[:, None],
        jnp.asarray(q_all[gf:gf + 1]), jnp.asarray(c_all[gf:gf + 1]), params.p_en,
    )
    return np.asarray(R)[:, 0], np.asarray(K_c)[:, 0, :, 0], np.asarray(K_u)[:, 0].reshape(4, 12)


# ── J projection ──
def project_gradJ(mesh: Mesh, J_qp: np.ndarray, geometry: ElementGeometry | None = None) -> np.ndarray:
    """Volume-weighted nodal average of quadrature-point J, shape (n_nodes,)."""
    geo = geometry or reference_geometry(mesh.nodes, mesh.elements)
    J_qp = np.broadcast_to(np.asarray(J_qp, dtype=float), geo.wdV.shape)
    weighted = np.repeat(np.sum(geo.wdV * J_qp, axis=1), 8)
    volume = np.repeat(np.sum(geo.wdV, axis=1), 8)
    conn = mesh.elements.ravel()
    return np.bincount(conn, weighted, mesh.n_nodes) / np.bincount(conn, volume, mesh.n_nodes)


def gradient_at_quadrature(geometry: ElementGeometry, elements: np.ndarray, nodal: np.ndarray) -> np.ndarray:
    """Reference gradient of a nodal scalar at every quadrature point, (E, Q, 3)."""
    return np.einsum("eqaJ,ea->eqJ", geometry.dNdX, np.asarray(nodal)[elements])
