"""
Restenosis Core - Species kinetics.

Scaling functions, reaction rates and Lagrangian transport fluxes of the four
wall species, all in the reference configuration: c0 = J c for every species.
Written with jax.numpy so the same functions run on plain floats (point API,
tests) and inside the traced element kernels.

`params` is anything exposing the SpeciesParams attribute names; the element
kernels pass per-element material records with the same fields.
"""
from __future__ import annotations

from typing import NamedTuple

import jax.numpy as jnp

_EXP_CLAMP = 500.0


class SpeciesPointState(NamedTuple):
    c0_P: jnp.ndarray
    c0_T: jnp.ndarray
    c0_E: jnp.ndarray
    rho0_S: jnp.ndarray
    J: jnp.ndarray = 1.0
    Cinv: jnp.ndarray = jnp.eye(3)
    grad_c0_P: jnp.ndarray = jnp.zeros(3)
    grad_c0_T: jnp.ndarray = jnp.zeros(3)
    grad_c0_E: jnp.ndarray = jnp.zeros(3)
    grad_J: jnp.ndarray = jnp.zeros(3)


def _logistic(exponent):
    return 1.0 / (1.0 + jnp.exp(jnp.clip(exponent, -_EXP_CLAMP, _EXP_CLAMP)))


def f_P(c_P, params):
    """PDGF activation, increasing in the spatial concentration c_P."""
    return _logistic(-params.l_P * (c_P - params.c_P_th))


def f_T(c_T, params):
    """TGF-beta gate, decreasing in the spatial concentration c_T."""
    return _logistic(params.l_T * (c_T - params.c_T_th))


def _ecm_deficit(s: SpeciesPointState, params):
    return 1.0 - s.c0_E / (s.J * params.c_E_th)


def pdgf_reaction(s: SpeciesPointState, params):
    secretion = params.eta_P / s.J * s.rho0_S * s.c0_T
    internalization = params.eps_P / s.J * f_T(s.c0_T / s.J, params) * s.rho0_S * s.c0_P
    return secretion - internalization


def tgf_reaction(s: SpeciesPointState, params):
    return -params.eps_T / s.J * s.rho0_S * s.c0_T


def ecm_reaction(s: SpeciesPointState, params):
    secretion = params.eta_E * s.rho0_S * _ecm_deficit(s, params)
    degradation = params.eps_E / s.J * s.c0_P * s.c0_E
    return secretion - degradation


def smc_reaction(s: SpeciesPointState, params):
    return (
        params.eta_S / s.J**2 * s.c0_P * s.rho0_S * _ecm_deficit(s, params) * f_T(s.c0_T / s.J, params)
    )


def gf_diffusive_flux(c0, grad_c0, J, grad_J, Cinv, D):
    """Pulled-back Fickian flux D C^-1 (Grad c0 - c0/J Grad J)."""
    return D * (Cinv @ (grad_c0 - c0 / J * grad_J))


def smc_flux_coefficients(s: SpeciesPointState, params):
    """Chemotactic and haptotactic SMC fluxes in the reference configuration.

    Returns (chemotaxis, haptotaxis); the total SMC flux is their sum and
    enters the weak form as +Grad(w) . flux.
    """
    chemo = -params.chi_C / s.J * _ecm_deficit(s, params) * s.rho0_S * (
        s.Cinv @ (s.grad_c0_P - s.c0_P / s.J * s.grad_J)
    )
    hapto = params.chi_H / s.J * f_P(s.c0_P / s.J, params) * s.rho0_S * (
        s.Cinv @ (s.grad_c0_E - s.c0_E / s.J * s.grad_J)
    )
    return chemo, hapto


def reaction_rates(s: SpeciesPointState, params):
    """All four reference-configuration rates as a (4,) array (P, T, E, S)."""
    return jnp.stack([
        pdgf_reaction(s, params),
        tgf_reaction(s, params),
        ecm_reaction(s, params),
        smc_reaction(s, params),
    ])


def species_fluxes(s_grad: SpeciesPointState, s_coef: SpeciesPointState, params):
    """Reference fluxes of the four species, shape (4, 3).

    Own-field gradients come from `s_grad`; every coefficient (the field
    value in the Grad J correction, the cell density and the gates of the
    taxis terms) comes from `s_coef`. With both equal this is the fully
    implicit flux; the staggered scheme passes the t_n state as `s_coef`.
    ECM does not diffuse.
    """
    j_P = gf_diffusive_flux(s_coef.c0_P, s_grad.grad_c0_P, s_coef.J, s_coef.grad_J, s_coef.Cinv, params.D_P)
    j_T = gf_diffusive_flux(s_coef.c0_T, s_grad.grad_c0_T, s_coef.J, s_coef.grad_J, s_coef.Cinv, params.D_T)
    chemo, hapto = smc_flux_coefficients(s_coef, params)
    return jnp.stack([j_P, j_T, jnp.zeros(3), chemo + hapto])
