"""
Restenosis Core - Constitutive model.

Growth kinematics F = F_e F_g with F_g = U_g (no growth rotation), a
Neo-Hookean matrix evaluated on the elastic part and a dispersed two-family
exponential fiber term whose stiffness scales with the local ECM content.

The first Piola-Kirchhoff stress is the closed-form derivative of the free
energy at fixed U_g and k1. Tangents are forward-mode AD derivatives of that
closed form, so the element kernels and the point API share one source.

Growth projector M: the right growth stretch is U_g = I + (theta - 1) M with
M = gamma (x) gamma (stress-free anisotropic) or M = I (isotropic matrix).
Because M is idempotent in both cases, U_g^-1 = I + (1/theta - 1) M.
"""
from __future__ import annotations

from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from core.errors import ConstitutiveError, InvertedElementError
from core.params import StructuralParams
from utils.logger_config import get_logger

logger = get_logger()

THETA_FLOOR = 0.5
_UNIT_TOL = 1e-10
_PARALLEL_TOL = 1e-12


class ElasticConstants(NamedTuple):
    """Scalar structural constants as a jax pytree (traced in kernels)."""
    mu: float
    lam: float
    k1_bar: float
    k2: float
    c_E_eq: float
    rho_S_eq: float

    @classmethod
    def from_params(cls, params: StructuralParams) -> ElasticConstants:
        return cls(params.mu, params.lam, params.k1_bar, params.k2, params.c_E_eq, params.rho_S_eq)


class GrowthState(NamedTuple):
    theta: float
    Ug: np.ndarray
    Jg: float
    gamma: np.ndarray | None
    clamped: bool


class StressTangent(NamedTuple):
    P: np.ndarray        # (3, 3)
    A: np.ndarray        # (3, 3, 3, 3), A[i, J, k, L] = dP_iJ / dF_kL
    dP_drho: np.ndarray  # (3, 3)
    dP_dcE: np.ndarray   # (3, 3)


# ── Structural tensors and fiber strain ──
def _structural_tensor(a0, kappa):
    return kappa * jnp.eye(3) + (1.0 - 3.0 * kappa) * jnp.outer(a0, a0)


def structural_tensor(a0, kappa: float) -> np.ndarray:
    a0 = np.asarray(a0, dtype=float)
    if abs(np.linalg.norm(a0) - 1.0) > _UNIT_TOL:
        raise ConstitutiveError(f"fiber direction must be a unit vector, |a0| = {np.linalg.norm(a0):.12g}")
    return np.asarray(_structural_tensor(a0, kappa))


def fiber_strain(C, H):
    """E = H : C - 1 (the Macaulay bracket is applied in the energy)."""
    return jnp.sum(H * C) - 1.0


# ── Growth ──
def growth_direction(a01, a02) -> np.ndarray:
    normal = np.cross(np.asarray(a01, dtype=float), np.asarray(a02, dtype=float))
    norm = np.linalg.norm(normal)
    if norm < _PARALLEL_TOL:
        raise ConstitutiveError("fiber families are parallel; the growth direction is undefined")
    return normal / norm


def growth_projector(anisotropic: bool, gamma=None) -> np.ndarray:
    if not anisotropic:
        return np.eye(3)
    if gamma is None:
        raise ConstitutiveError("stress-free anisotropic growth needs a growth direction")
    gamma = np.asarray(gamma, dtype=float)
    return np.outer(gamma, gamma)


def _growth_stretch(rho0_S, rho_S_eq, anisotropic: bool):
    ratio = rho0_S / rho_S_eq
    raw = ratio if anisotropic else jnp.cbrt(ratio)
    theta = jnp.maximum(raw, THETA_FLOOR)
    Jg = theta if anisotropic else theta**3
    return theta, Jg


def raw_growth_stretch(rho0_S, rho_S_eq: float, anisotropic: bool) -> np.ndarray:
    """Growth stretch before the floor is applied."""
    ratio = np.asarray(rho0_S, dtype=float) / rho_S_eq
    return ratio if anisotropic else np.cbrt(ratio)


def growth_stretch(rho0_S, rho_S_eq: float, anisotropic: bool) -> tuple[np.ndarray, np.ndarray]:
    """(theta, Jg) for an array of reference SMC densities."""
    theta = np.maximum(raw_growth_stretch(rho0_S, rho_S_eq, anisotropic), THETA_FLOOR)
    return theta, (theta if anisotropic else theta**3)


def growth_from_density(rho0_S: float, params: StructuralParams, gamma=None) -> GrowthState:
    if not rho0_S > 0:
        raise ConstitutiveError(f"rho0_S must be > 0, got {rho0_S}")
    anisotropic = params.anisotropic
    M = growth_projector(anisotropic, gamma)
    theta, Jg = (float(v) for v in growth_stretch(rho0_S, params.rho_S_eq, anisotropic))
    raw = float(raw_growth_stretch(rho0_S, params.rho_S_eq, anisotropic))
    clamped = raw < THETA_FLOOR
    if clamped:
        logger.warning(
            "growth stretch clamped at floor",
            extra={"extra_fields": {"theta_raw": float(raw), "floor": THETA_FLOOR}},
        )
    Ug = np.eye(3) + (theta - 1.0) * M
    return GrowthState(theta=theta, Ug=Ug, Jg=Jg, gamma=None if gamma is None else np.asarray(gamma), clamped=clamped)


# ── Energy and stress ──
def _free_energy(F, Ug, Jg, c0_E, H1, H2, k):
    C = F.T @ F
    Ug_inv = jnp.linalg.inv(Ug)
    C_star = Ug_inv.T @ C @ Ug_inv
    J_star = jnp.linalg.det(F) / Jg
    log_Js = jnp.log(J_star)
    psi_iso = 0.5 * k.mu * (jnp.trace(C_star) - 3.0) - k.mu * log_Js + 0.25 * k.lam * (J_star**2 - 1.0 - 2.0 * log_Js)

    k1 = k.k1_bar * c0_E / k.c_E_eq
    psi_ani = 0.0
    for H in (H1, H2):
        E = jnp.maximum(fiber_strain(C, H), 0.0)
        psi_ani = psi_ani + k1 / (2.0 * k.k2) * (jnp.exp(k.k2 * E**2) - 1.0)
    return psi_iso + psi_ani


def free_energy(F, growth: GrowthState, c0_E: float, H1, H2, params: StructuralParams) -> float:
    F = np.asarray(F, dtype=float)
    if np.linalg.det(F) <= 0:
        raise InvertedElementError(detail=f"det F = {np.linalg.det(F):.6g}")
    if abs(np.linalg.det(growth.Ug)) < 1e-14:
        raise ConstitutiveError("growth stretch tensor is singular")
    psi = _free_energy(F, growth.Ug, growth.Jg, c0_E, jnp.asarray(H1), jnp.asarray(H2), ElasticConstants.from_params(params))
    return float(psi)


def first_piola(F, rho0_S, c0_E, H1, H2, M, k, anisotropic: bool):
    """Closed-form P = d psi / dF at fixed U_g(rho0_S) and k1(c0_E)."""
    theta, Jg = _growth_stretch(rho0_S, k.rho_S_eq, anisotropic)
    G = jnp.eye(3) + (1.0 / theta - 1.0) * M
    F_inv_T = jnp.linalg.inv(F).T
    J_star = jnp.linalg.det(F) / Jg
    P = k.mu * (F @ G @ G - F_inv_T) + 0.5 * k.lam * (J_star**2 - 1.0) * F_inv_T

    C = F.T @ F
    k1 = k.k1_bar * c0_E / k.c_E_eq
    for H in (H1, H2):
        E = fiber_strain(C, H)
        E_pos = jnp.where(E > 0.0, E, 0.0)
        P = P + 2.0 * k1 * E_pos * jnp.exp(k.k2 * E_pos**2) * (F @ H)
    return P


@partial(jax.jit, static_argnames="anisotropic")
def _stress_derivatives(F, rho0_S, c0_E, H1, H2, M, k, anisotropic):
    P = first_piola(F, rho0_S, c0_E, H1, H2, M, k, anisotropic)
    A, dP_drho, dP_dcE = jax.jacfwd(first_piola, argnums=(0, 1, 2))(F, rho0_S, c0_E, H1, H2, M, k, anisotropic)
    return P, A, dP_drho, dP_dcE


def stress_and_tangent(F, rho0_S: float, c0_E: float, frame, params: StructuralParams) -> StressTangent:
    """Stress, material tangent and species sensitivities at one point.

    `frame` is the element fiber pair (a01, a02).
    """
    F = np.asarray(F, dtype=float)
    if np.linalg.det(F) <= 0:
        raise InvertedElementError(detail=f"det F = {np.linalg.det(F):.6g}")
    a01, a02 = frame
    H1 = structural_tensor(a01, params.kappa)
    H2 = structural_tensor(a02, params.kappa)
    gamma = growth_direction(a01, a02) if params.anisotropic else None
    M = growth_projector(params.anisotropic, gamma)
    out = _stress_derivatives(
        F, float(rho0_S), float(c0_E), H1, H2, M, ElasticConstants.from_params(params), params.anisotropic
    )
    return StressTangent(*(np.asarray(v) for v in out))
