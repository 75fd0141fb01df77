import math

import jax
import numpy as np
import pytest

from core import constitutive
from core.constitutive import (
    THETA_FLOOR,
    ElasticConstants,
    fiber_strain,
    free_energy,
    growth_direction,
    growth_from_density,
    stress_and_tangent,
    structural_tensor,
)
from core.errors import ConstitutiveError, InvertedElementError
from core.params import GrowthModel, StructuralParams

ISOTROPIC = StructuralParams(kappa=0.1)
ANISOTROPIC = StructuralParams(kappa=0.0, growth_model=GrowthModel.STRESS_FREE_ANISOTROPIC)
C_E_EQ = ISOTROPIC.c_E_eq
RHO_EQ = ISOTROPIC.rho_S_eq

_psi = jax.jit(constitutive._free_energy)


def planar_frame(alpha_deg):
    a = math.radians(alpha_deg)
    return np.array([math.cos(a), math.sin(a), 0.0]), np.array([math.cos(a), -math.sin(a), 0.0])


def assert_scaled_close(actual, expected, rtol):
    actual, expected = np.asarray(actual), np.asarray(expected)
    scale = max(np.abs(expected).max(), np.abs(actual).max())
    if scale == 0.0:
        return
    assert np.abs(actual - expected).max() <= rtol * scale


def random_states(rng, count):
    states = []
    while len(states) < count:
        F = np.eye(3) + 0.1 * rng.standard_normal((3, 3))
        if np.linalg.det(F) < 0.2:
            continue
        rho = rng.uniform(0.7, 1.5) * RHO_EQ
        c_E = rng.uniform(0.5, 1.2) * C_E_EQ
        states.append((F, rho, c_E, planar_frame(rng.uniform(20.0, 70.0))))
    return states


# ── Structural tensor and fiber strain ──
def test_structural_tensor_examples():
    np.testing.assert_allclose(structural_tensor([1.0, 0.0, 0.0], 0.0), np.diag([1.0, 0.0, 0.0]))
    a0 = np.array([1.0, 2.0, 2.0]) / 3.0
    np.testing.assert_allclose(structural_tensor(a0, 1.0 / 3.0), np.eye(3) / 3.0, atol=1e-15)
    np.testing.assert_allclose(structural_tensor([0.0, 1.0, 0.0], 0.1), np.diag([0.1, 0.8, 0.1]), atol=1e-15)


@pytest.mark.parametrize("kappa", [0.0, 0.05, 0.17, 0.24, 1.0 / 3.0])
def test_structural_tensor_has_unit_trace(kappa):
    a0 = np.array([0.6, 0.0, 0.8])
    assert np.trace(structural_tensor(a0, kappa)) == pytest.approx(1.0, abs=1e-14)


def test_structural_tensor_rejects_non_unit_direction():
    with pytest.raises(ConstitutiveError):
        structural_tensor([1.0, 1e-6, 0.0], 0.1)


def test_fiber_strain_examples():
    H = structural_tensor([1.0, 0.0, 0.0], 0.0)
    assert float(fiber_strain(np.eye(3), structural_tensor([0.6, 0.8, 0.0], 0.2))) == pytest.approx(0.0, abs=1e-15)
    assert float(fiber_strain(np.diag([1.44, 1.0, 1.0]), H)) == pytest.approx(0.44)
    assert float(fiber_strain(np.diag([0.81, 1.0, 1.0]), H)) < 0.0


# ── Growth kinematics ──
@pytest.mark.parametrize("params", [ISOTROPIC, ANISOTROPIC], ids=["isotropic", "anisotropic"])
def test_growth_at_equilibrium_is_identity(params):
    growth = growth_from_density(RHO_EQ, params, gamma=np.array([0.0, 0.0, 1.0]))
    assert growth.theta == pytest.approx(1.0)
    assert growth.Jg == pytest.approx(1.0)
    np.testing.assert_allclose(growth.Ug, np.eye(3), atol=1e-15)
    assert not growth.clamped


def test_isotropic_growth_eightfold_density():
    growth = growth_from_density(8.0 * RHO_EQ, ISOTROPIC)
    assert growth.theta == pytest.approx(2.0)
    assert growth.Jg == pytest.approx(8.0)
    np.testing.assert_allclose(growth.Ug, 2.0 * np.eye(3))


def test_anisotropic_growth_is_rank_one():
    growth = growth_from_density(1.5 * RHO_EQ, ANISOTROPIC, gamma=np.array([0.0, 0.0, 1.0]))
    assert np.linalg.det(growth.Ug) == pytest.approx(1.5)
    np.testing.assert_allclose(growth.Ug, np.diag([1.0, 1.0, 1.5]))


@pytest.mark.parametrize("params", [ISOTROPIC, ANISOTROPIC], ids=["isotropic", "anisotropic"])
def test_growth_volume_ratio_is_det_of_stretch(params):
    gamma = growth_direction(*planar_frame(41.0))
    for ratio in (0.8, 1.0, 1.3, 2.5):
        growth = growth_from_density(ratio * RHO_EQ, params, gamma=gamma)
        assert growth.Jg == pytest.approx(np.linalg.det(growth.Ug), rel=1e-12)


def test_growth_stretch_is_clamped_and_flagged():
    iso = growth_from_density(0.05 * RHO_EQ, ISOTROPIC)
    assert iso.clamped
    assert iso.theta == THETA_FLOOR
    aniso = growth_from_density(0.3 * RHO_EQ, ANISOTROPIC, gamma=np.array([0.0, 0.0, 1.0]))
    assert aniso.clamped
    assert aniso.Jg == THETA_FLOOR


def test_growth_rejects_non_positive_density():
    with pytest.raises(ConstitutiveError):
        growth_from_density(0.0, ISOTROPIC)


def test_anisotropic_growth_needs_a_direction():
    with pytest.raises(ConstitutiveError):
        growth_from_density(RHO_EQ, ANISOTROPIC)


def test_growth_direction_examples():
    np.testing.assert_allclose(growth_direction([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0])
    a01, a02 = planar_frame(41.0)
    gamma = growth_direction(a01, a02)
    np.testing.assert_allclose(np.abs(gamma), [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(growth_direction(a02, a01), -gamma)
    np.testing.assert_allclose(np.outer(gamma, gamma), np.outer(-gamma, -gamma))


def test_growth_direction_rejects_parallel_fibers():
    with pytest.raises(ConstitutiveError):
        growth_direction([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0])


# ── Free energy ──
def test_free_energy_vanishes_in_reference_state():
    H = structural_tensor([1.0, 0.0, 0.0], 0.1)
    growth = growth_from_density(RHO_EQ, ISOTROPIC)
    assert free_energy(np.eye(3), growth, C_E_EQ, H, H, ISOTROPIC) == pytest.approx(0.0, abs=1e-15)


def test_free_energy_uniaxial_stretch_matches_scalar_formula():
    params = StructuralParams(kappa=0.0)
    H = structural_tensor([1.0, 0.0, 0.0], 0.0)
    growth = growth_from_density(RHO_EQ, params)
    psi = free_energy(np.diag([1.1, 1.0, 1.0]), growth, C_E_EQ, H, H, params)

    mu, lam, k1, k2 = params.mu, params.lam, params.k1_bar, params.k2
    log_j = math.log(1.1)
    iso = 0.5 * mu * (1.21 + 2.0 - 3.0) - mu * log_j + 0.25 * lam * (1.21 - 1.0 - 2.0 * log_j)
    fibers = 2.0 * k1 / (2.0 * k2) * (math.exp(k2 * 0.21**2) - 1.0)
    assert psi > 0.0
    assert psi == pytest.approx(iso + fibers, rel=1e-12)


def test_fiber_energy_vanishes_without_ecm():
    params = StructuralParams(kappa=0.0)
    H = structural_tensor([1.0, 0.0, 0.0], 0.0)
    growth = growth_from_density(RHO_EQ, params)
    F = np.diag([1.3, 1.0, 1.0])
    with_ecm = free_energy(F, growth, C_E_EQ, H, H, params)
    without = free_energy(F, growth, 0.0, H, H, params)
    assert with_ecm > without
    no_fibers = StructuralParams(kappa=0.0, k1_bar=0.0)
    assert without == pytest.approx(free_energy(F, growth, C_E_EQ, H, H, no_fibers), rel=1e-14)


def test_fiber_compression_adds_no_energy():
    params = StructuralParams(kappa=0.0)
    H = structural_tensor([1.0, 0.0, 0.0], 0.0)
    growth = growth_from_density(RHO_EQ, params)
    F = np.diag([0.9, 1.0, 1.0])
    assert free_energy(F, growth, C_E_EQ, H, H, params) == free_energy(F, growth, 0.0, H, H, params)


def test_free_energy_is_non_negative_without_growth(rng):
    growth = growth_from_density(RHO_EQ, ISOTROPIC)
    for F, _, c_E, (a01, a02) in random_states(rng, 50):
        H1, H2 = structural_tensor(a01, 0.1), structural_tensor(a02, 0.1)
        assert free_energy(F, growth, c_E, H1, H2, ISOTROPIC) >= 0.0


def test_free_energy_rejects_inverted_deformation():
    H = structural_tensor([1.0, 0.0, 0.0], 0.1)
    growth = growth_from_density(RHO_EQ, ISOTROPIC)
    with pytest.raises(InvertedElementError):
        free_energy(np.diag([-1.0, 1.0, 1.0]), growth, C_E_EQ, H, H, ISOTROPIC)


# ── Stress and tangents ──
@pytest.mark.parametrize("params", [ISOTROPIC, ANISOTROPIC], ids=["isotropic", "anisotropic"])
def test_stress_vanishes_in_reference_state(params):
    out = stress_and_tangent(np.eye(3), RHO_EQ, C_E_EQ, planar_frame(41.0), params)
    np.testing.assert_allclose(out.P, 0.0, atol=1e-14)
    assert np.all(np.isfinite(out.A))


@pytest.mark.parametrize("params", [ISOTROPIC, ANISOTROPIC], ids=["isotropic", "anisotropic"])
def test_stress_matches_energy_derivative(params, rng):
    k = ElasticConstants.from_params(params)
    h = 1e-6
    for F, rho, c_E, frame in random_states(rng, 100):
        H1, H2 = (structural_tensor(a, params.kappa) for a in frame)
        gamma = growth_direction(*frame) if params.anisotropic else None
        growth = growth_from_density(rho, params, gamma=gamma)
        P = stress_and_tangent(F, rho, c_E, frame, params).P

        fd = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                step = np.zeros((3, 3))
                step[i, j] = h
                plus = _psi(F + step, growth.Ug, growth.Jg, c_E, H1, H2, k)
                minus = _psi(F - step, growth.Ug, growth.Jg, c_E, H1, H2, k)
                fd[i, j] = (plus - minus) / (2.0 * h)
        assert_scaled_close(P, fd, 1e-5)


@pytest.mark.parametrize("params", [ISOTROPIC, ANISOTROPIC], ids=["isotropic", "anisotropic"])
def test_tangents_match_stress_finite_differences(params, rng):
    h = 1e-6
    for F, rho, c_E, frame in random_states(rng, 100):
        out = stress_and_tangent(F, rho, c_E, frame, params)

        fd_A = np.zeros((3, 3, 3, 3))
        for k in range(3):
            for L in range(3):
                step = np.zeros((3, 3))
                step[k, L] = h
                plus = stress_and_tangent(F + step, rho, c_E, frame, params).P
                minus = stress_and_tangent(F - step, rho, c_E, frame, params).P
                fd_A[:, :, k, L] = (plus - minus) / (2.0 * h)
        assert_scaled_close(out.A, fd_A, 1e-4)

        h_rho = h * RHO_EQ
        fd_rho = (
            stress_and_tangent(F, rho + h_rho, c_E, frame, params).P
            - stress_and_tangent(F, rho - h_rho, c_E, frame, params).P
        ) / (2.0 * h)
        assert_scaled_close(out.dP_drho * RHO_EQ, fd_rho, 1e-4)

        h_c = h * C_E_EQ
        fd_c = (
            stress_and_tangent(F, rho, c_E + h_c, frame, params).P
            - stress_and_tangent(F, rho, c_E - h_c, frame, params).P
        ) / (2.0 * h)
        assert_scaled_close(out.dP_dcE * C_E_EQ, fd_c, 1e-4)


def test_anisotropic_grown_state_is_stress_free():
    theta = 1.4
    out = stress_and_tangent(np.diag([1.0, 1.0, theta]), theta * RHO_EQ, C_E_EQ, planar_frame(41.0), ANISOTROPIC)
    np.testing.assert_allclose(out.P, 0.0, atol=1e-12)


def test_isotropic_grown_state_carries_residual_stress():
    ratio = 1.5
    F = np.cbrt(ratio) * np.eye(3)
    out = stress_and_tangent(F, ratio * RHO_EQ, C_E_EQ, planar_frame(41.0), ISOTROPIC)
    assert np.linalg.norm(out.P) > 0.0


def test_stress_rejects_inverted_deformation():
    with pytest.raises(InvertedElementError):
        stress_and_tangent(np.diag([1.0, -0.5, 1.0]), RHO_EQ, C_E_EQ, planar_frame(41.0), ISOTROPIC)
