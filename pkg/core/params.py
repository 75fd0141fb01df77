"""
Restenosis Core - Model parameters.

Species and structural coefficients with the unrestrained-block values as
defaults, plus the media/adventitia overrides used by the artery scenarios.
Units: mm, days, mol, cells, MPa.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields
from enum import StrEnum

from core.errors import ConfigError


class GrowthModel(StrEnum):
    STRESS_FREE_ANISOTROPIC = "stress_free_anisotropic"
    ISOTROPIC_MATRIX = "isotropic_matrix"


class Layer(StrEnum):
    HOMOGENEOUS = "homogeneous"
    MEDIA = "media"
    ADVENTITIA = "adventitia"


@dataclass(frozen=True)
class SpeciesParams:
    D_P: float = 0.1          # mm^2/day
    D_T: float = 0.1          # mm^2/day
    eta_P: float = 1e-6       # mm^3/cell/day
    eps_P: float = 1e-7       # mm^3/cell/day
    eps_T: float = 1e-7       # mm^3/cell/day
    eta_E: float = 1e-7       # mol/cell/day
    eps_E: float = 1e21       # mm^3/mol/day
    eta_S: float = 1e14       # mm^3/cell/day
    chi_C: float = 1e11       # mm^5/mol/day
    chi_H: float = 1e6        # mm^5/mol/day
    c_P_th: float = 1e-15     # mol/mm^3
    c_T_th: float = 1e-16     # mol/mm^3
    c_E_th: float = 7.0007e-9  # mol/mm^3
    c_E_eq: float = 7.0e-9    # mol/mm^3
    l_P: float = 1e16         # mm^3/mol
    l_T: float = 1e16         # mm^3/mol
    rho_S_eq: float = 3.7e5   # cells/mm^3

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"species parameter {f.name} must be >= 0, got {getattr(self, f.name)}")
        if self.c_E_eq <= 0 or self.rho_S_eq <= 0:
            raise ConfigError("c_E_eq and rho_S_eq must be > 0")
        if self.c_E_th < self.c_E_eq:
            raise ConfigError(f"c_E_th ({self.c_E_th}) must be >= c_E_eq ({self.c_E_eq})")


@dataclass(frozen=True)
class StructuralParams:
    mu: float = 0.02          # MPa
    lam: float = 10.0         # MPa
    k1_bar: float = 0.112     # MPa
    k2: float = 20.61
    kappa: float = 0.1
    alpha: float = 41.0       # degrees
    c_E_eq: float = 7.0e-9    # mol/mm^3
    rho_S_eq: float = 3.7e5   # cells/mm^3
    growth_model: GrowthModel = GrowthModel.ISOTROPIC_MATRIX

    def __post_init__(self) -> None:
        if self.mu <= 0 or self.lam <= 0:
            raise ConfigError("mu and lam must be > 0")
        if self.k1_bar < 0 or self.k2 <= 0:
            raise ConfigError("k1_bar must be >= 0 and k2 > 0")
        if not 0.0 <= self.kappa <= 1.0 / 3.0:
            raise ConfigError(f"kappa must lie in [0, 1/3], got {self.kappa}")
        if self.c_E_eq <= 0 or self.rho_S_eq <= 0:
            raise ConfigError("c_E_eq and rho_S_eq must be > 0")
        if self.growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC and self.kappa > 0:
            raise ConfigError(
                f"stress_free_anisotropic growth needs perfectly aligned fibers (kappa=0), got kappa={self.kappa}"
            )

    @property
    def anisotropic(self) -> bool:
        return self.growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC


@dataclass(frozen=True)
class LayerParams:
    species: SpeciesParams
    structural: StructuralParams


# Media / adventitia deviations from the block table.
ARTERY_LAYER_OVERRIDES: dict[Layer, dict[str, dict[str, float]]] = {
    Layer.MEDIA: {
        "species": {"D_P": 0.01, "eps_E": 3e23, "chi_C": 1e11, "chi_H": 1e6, "eta_S": 1e13},
        "structural": {"mu": 0.02, "lam": 10.0, "k1_bar": 0.112, "k2": 20.61, "kappa": 0.24, "alpha": 41.0},
    },
    Layer.ADVENTITIA: {
        "species": {"D_P": 0.005, "eps_E": 3e23, "chi_C": 0.0, "chi_H": 0.0, "eta_S": 0.0},
        "structural": {"mu": 0.008, "lam": 10.0, "k1_bar": 0.362, "k2": 7.089, "kappa": 0.17, "alpha": 50.1},
    },
}


def layer_params(
    layer: Layer,
    growth_model: GrowthModel = GrowthModel.ISOTROPIC_MATRIX,
    species_overrides: Mapping[str, float] | None = None,
    structural_overrides: Mapping[str, float] | None = None,
) -> LayerParams:
    """Layer defaults, then user overrides, validated once at the end.

    Construction is deferred so that e.g. an anisotropic run can zero the
    layer's default dispersion before the kappa=0 rule is checked.
    """
    defaults = ARTERY_LAYER_OVERRIDES.get(layer, {"species": {}, "structural": {}})
    species_kw = {**asdict(SpeciesParams()), **defaults["species"], **(species_overrides or {})}
    structural_kw = {
        **{f.name: getattr(StructuralParams, f.name) for f in fields(StructuralParams)},
        **defaults["structural"],
        **(structural_overrides or {}),
        "growth_model": GrowthModel(growth_model),
    }
    # shared constants stay consistent between the two tables
    structural_kw["c_E_eq"] = species_kw["c_E_eq"]
    structural_kw["rho_S_eq"] = species_kw["rho_S_eq"]
    return LayerParams(species=SpeciesParams(**species_kw), structural=StructuralParams(**structural_kw))


def species_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(SpeciesParams))


def structural_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(StructuralParams))
