"""
Restenosis Core - Scenario configuration.

Plain-text key = value files with [section] headers (grammar in
docs/config_grammar.md). Omitted keys take the parameter-table defaults;
quantities may carry a unit suffix, which must match the expected unit.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from enum import StrEnum
from typing import Any

import numpy as np

from core.config import load_runtime_config
from core.elements import FluxPatchParams, TimeProfile
from core.errors import ConfigError
from core.params import GrowthModel, Layer, LayerParams, layer_params
from core.solver import LinearSolver, SchemeKind, TimeSteppingConfig


class ScenarioKind(StrEnum):
    BLOCK = "block"
    ANGIOPLASTY = "angioplasty"
    STENT = "stent"

    @property
    def is_artery(self) -> bool:
        return self is not ScenarioKind.BLOCK


# ── Influx profile ──
@dataclass(frozen=True)
class InfluxProfile:
    """Piecewise-linear prescribed influx, (t days, q_P, q_T mol/mm^2/day) breakpoints."""
    times: tuple[float, ...]
    q_P: tuple[float, ...]
    q_T: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (len(self.times) == len(self.q_P) == len(self.q_T)) or not self.times:
            raise ConfigError("influx profile needs matching, non-empty breakpoint lists")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError(f"influx profile times must be strictly increasing, got {list(self.times)}")
        if min(self.q_P) < 0 or min(self.q_T) < 0:
            raise ConfigError("influx profile values must be >= 0")

    @classmethod
    def rise_plateau_decay(
        cls, peak_P: float, ratio: float, rise: float = 30.0, plateau_end: float = 100.0, end: float = 370.0
    ) -> InfluxProfile:
        if not 0 < rise < plateau_end < end:
            raise ConfigError(f"profile needs 0 < rise < plateau_end < end, got {rise}, {plateau_end}, {end}")
        times = (0.0, rise, plateau_end, end)
        shape = (0.0, 1.0, 1.0, 0.0)
        return cls(times, tuple(peak_P * s for s in shape), tuple(ratio * peak_P * s for s in shape))

    def __call__(self, t: float) -> tuple[float, float]:
        return float(np.interp(t, self.times, self.q_P)), float(np.interp(t, self.times, self.q_T))


@dataclass(frozen=True)
class FluxConfig:
    peak_P: float = 1e-19
    ratio: float = 10.0
    rise: float = 30.0
    plateau_end: float = 100.0
    end: float = 370.0
    profile: tuple[tuple[float, float, float], ...] | None = None
    p_en: float = 0.0
    ambient_P: float = 0.0
    ambient_T: float = 0.0

    def influx_profile(self) -> InfluxProfile:
        if self.profile:
            t, qP, qT = zip(*self.profile)
            return InfluxProfile(tuple(t), tuple(qP), tuple(qT))
        return InfluxProfile.rise_plateau_decay(self.peak_P, self.ratio, self.rise, self.plateau_end, self.end)

    def patch_params(self) -> FluxPatchParams:
        profile = self.influx_profile()
        return FluxPatchParams(
            p_en=self.p_en,
            ambient_P=TimeProfile.constant(self.ambient_P),
            ambient_T=TimeProfile.constant(self.ambient_T),
            influx_P=TimeProfile(profile.times, profile.q_P),
            influx_T=TimeProfile(profile.times, profile.q_T),
        )


@dataclass(frozen=True)
class GeometryConfig:
    # block
    side_length: float = 1.0
    divisions: int = 4
    # artery quadrant
    length: float = 6.0
    r_inner: float = 1.55
    media_thickness: float = 0.34
    adventitia_thickness: float = 0.32
    radial_media: int = 3
    radial_adventitia: int = 3
    circumferential: int = 20
    longitudinal: int = 36
    damage_start: float = 2.0
    damage_length: float = 3.0
    strut_width: float = 0.1


_STENT_GEOMETRY = {"length": 3.0, "radial_media": 5, "radial_adventitia": 5, "circumferential": 30, "longitudinal": 60}
_BLOCK_GEOMETRY_KEYS = {"side_length", "divisions"}
_STENT_ONLY_KEYS = {"strut_width"}
_ANGIOPLASTY_ONLY_KEYS = {"damage_start", "damage_length"}
_DEFAULT_GROWTH = {ScenarioKind.STENT: GrowthModel.STRESS_FREE_ANISOTROPIC}


@dataclass(frozen=True)
class OutputSettings:
    monitor: tuple[float, float, float] | None = None   # reference coordinates; nearest node is monitored
    field_interval: float = 0.0                          # days, 0 disables field dumps
    directory: str = "results"
    profile_z: float | None = None                       # lumen line for the neointimal profile


@dataclass(frozen=True)
class SimulationConfig:
    scenario: ScenarioKind
    label: str = ""
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    growth_model: GrowthModel = GrowthModel.ISOTROPIC_MATRIX
    # keyed by "all" or a layer name
    species_overrides: dict[str, dict[str, float]] = field(default_factory=dict)
    structural_overrides: dict[str, dict[str, float]] = field(default_factory=dict)
    flux: FluxConfig = field(default_factory=FluxConfig)
    time: TimeSteppingConfig = field(default_factory=TimeSteppingConfig)
    initial: dict[str, float] = field(default_factory=dict)
    output: OutputSettings = field(default_factory=OutputSettings)

    @property
    def layers(self) -> tuple[Layer, ...]:
        if self.scenario.is_artery:
            return (Layer.MEDIA, Layer.ADVENTITIA)
        return (Layer.HOMOGENEOUS,)

    def layer_params(self, layer: Layer) -> LayerParams:
        species = {**self.species_overrides.get("all", {}), **self.species_overrides.get(str(layer), {})}
        structural = {**self.structural_overrides.get("all", {}), **self.structural_overrides.get(str(layer), {})}
        return layer_params(layer, self.growth_model, species, structural)

    def with_override(self, name: str, value: Any) -> SimulationConfig:
        """Copy with one dotted parameter replaced, e.g. 'species.media.D_P' or 'time.dt'."""
        try:
            updated = self._replaced(name, value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{name}: invalid value {value!r} ({e})") from None
        updated.validate()
        return updated

    def _replaced(self, name: str, value: Any) -> SimulationConfig:
        parts = name.split(".")
        head = parts[0]
        if head in ("species", "structural") and len(parts) in (2, 3):
            scope = "all" if len(parts) == 2 else parts[1]
            key = parts[-1]
            _check_key(head, key, None)
            if scope != "all" and scope not in {str(layer) for layer in self.layers}:
                raise ConfigError(f"layer {scope!r} does not exist in the {self.scenario} scenario")
            attr = f"{head}_overrides"
            current = {k: dict(v) for k, v in getattr(self, attr).items()}
            current.setdefault(scope, {})[key] = float(value)
            updated = replace(self, **{attr: current})
        elif head in ("time", "flux", "geometry", "output") and len(parts) == 2:
            section = getattr(self, head)
            names = {f.name for f in fields(section)}
            if parts[1] not in names:
                raise ConfigError(f"unknown parameter {name!r}")
            current = getattr(section, parts[1])
            if isinstance(current, (int, float)) and not isinstance(current, (bool, StrEnum)):
                value = type(current)(value)
            elif current is None and isinstance(value, str):
                value = float(value)
            updated = replace(self, **{head: replace(section, **{parts[1]: value})})
        elif head == "initial" and len(parts) == 2:
            _check_key("initial", parts[1], None)
            updated = replace(self, initial={**self.initial, parts[1]: float(value)})
        elif name == "growth.model":
            updated = replace(self, growth_model=GrowthModel(value))
        else:
            raise ConfigError(f"unknown parameter {name!r}")
        return updated

    def validate(self) -> None:
        for layer in self.layers:
            self.layer_params(layer)
        self.flux.influx_profile()
        if self.output.field_interval < 0:
            raise ConfigError("output field_interval must be >= 0")


# ── Grammar ──
_SPECIES_UNITS = {
    "D_P": "mm^2/day", "D_T": "mm^2/day",
    "eta_P": "mm^3/cell/day", "eps_P": "mm^3/cell/day", "eps_T": "mm^3/cell/day",
    "eta_E": "mol/cell/day", "eps_E": "mm^3/mol/day", "eta_S": "mm^3/cell/day",
    "chi_C": "mm^5/mol/day", "chi_H": "mm^5/mol/day",
    "c_P_th": "mol/mm^3", "c_T_th": "mol/mm^3", "c_E_th": "mol/mm^3", "c_E_eq": "mol/mm^3",
    "l_P": "mm^3/mol", "l_T": "mm^3/mol", "rho_S_eq": "cells/mm^3",
}
_STRUCTURAL_UNITS = {"mu": "MPa", "lam": "MPa", "k1_bar": "MPa", "k2": "", "kappa": "", "alpha": "deg"}

_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "": {"scenario": ("str", ""), "label": ("str", "")},
    "geometry": {
        "side_length": ("float", "mm"), "divisions": ("int", ""),
        "length": ("float", "mm"), "r_inner": ("float", "mm"),
        "media_thickness": ("float", "mm"), "adventitia_thickness": ("float", "mm"),
        "radial_media": ("int", ""), "radial_adventitia": ("int", ""),
        "circumferential": ("int", ""), "longitudinal": ("int", ""),
        "damage_start": ("float", "mm"), "damage_length": ("float", "mm"), "strut_width": ("float", "mm"),
    },
    "growth": {"model": ("str", "")},
    "species": {k: ("float", u) for k, u in _SPECIES_UNITS.items()},
    "structural": {k: ("float", u) for k, u in _STRUCTURAL_UNITS.items()},
    "flux": {
        "peak_P": ("float", "mol/mm^2/day"), "ratio": ("float", ""),
        "rise": ("float", "day"), "plateau_end": ("float", "day"), "end": ("float", "day"),
        "profile": ("profile", ""), "p_en": ("float", "mm/day"),
        "ambient_P": ("float", "mol/mm^3"), "ambient_T": ("float", "mol/mm^3"),
    },
    "time": {
        "dt": ("float", "day"), "t_end": ("float", "day"), "scheme": ("str", ""),
        "tol_abs": ("float", ""), "tol_rel": ("float", ""), "tol_inc": ("float", ""),
        "max_newton_iters": ("int", ""), "linear_solver": ("str", ""), "max_dt_halvings": ("int", ""),
        "coupling_tol": ("float", ""),
    },
    "initial": {
        "c_P": ("float", "mol/mm^3"), "c_T": ("float", "mol/mm^3"),
        "c_E": ("float", "mol/mm^3"), "rho_S": ("float", "cells/mm^3"),
    },
    "output": {
        "monitor": ("vector", "mm"), "field_interval": ("float", "day"),
        "directory": ("str", ""), "profile_z": ("float", "mm"),
    },
}
_TIME_KEYS = {"tol_abs": "newton_tol_abs", "tol_rel": "newton_tol_rel", "tol_inc": "newton_tol_inc"}
_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_]+)(?:\.([A-Za-z_]+))?\s*\]$")


def _normalize_unit(unit: str) -> str:
    unit = unit.replace(" ", "")
    for long, short in (("days", "day"), ("cells", "cell"), ("degrees", "deg"), ("degree", "deg")):
        unit = unit.replace(long, short)
    return unit


def _check_key(section: str, key: str, line: int | None) -> tuple[str, str]:
    if key not in _SCHEMA[section]:
        where = f"section [{section}]" if section else "the top level"
        raise ConfigError(f"unknown key {key!r} in {where}", line)
    return _SCHEMA[section][key]


def _number(token: str, kind: str, key: str, line: int) -> float | int:
    try:
        return int(token) if kind == "int" else float(token)
    except ValueError:
        raise ConfigError(f"{key}: expected {'an integer' if kind == 'int' else 'a number'}, got {token!r}", line) from None


def _check_unit(key: str, given: str, expected: str, line: int) -> None:
    if given and _normalize_unit(given) != _normalize_unit(expected):
        raise ConfigError(
            f"{key}: unit {given!r} does not match the expected {expected or 'dimensionless'!r}", line
        )


def _parse_value(key: str, raw: str, kind: str, unit: str, line: int) -> Any:
    if kind == "str":
        return raw
    if kind in ("float", "int"):
        token, _, given = raw.partition(" ")
        _check_unit(key, given.strip(), unit, line)
        return _number(token, kind, key, line)
    if kind == "vector":
        parts = [p.strip() for p in raw.split(",")]
        last, _, given = parts[-1].partition(" ")
        _check_unit(key, given.strip(), unit, line)
        values = tuple(_number(p, "float", key, line) for p in [*parts[:-1], last])
        if len(values) != 3:
            raise ConfigError(f"{key}: expected 3 coordinates, got {len(values)}", line)
        return values
    # profile: t:qP:qT, ...
    points = []
    for item in raw.split(","):
        pieces = item.strip().split(":")
        if len(pieces) != 3:
            raise ConfigError(f"{key}: breakpoint {item.strip()!r} must read t:q_P:q_T", line)
        points.append(tuple(_number(p, "float", key, line) for p in pieces))
    return tuple(points)


def parse_config(text: str) -> SimulationConfig:
    """Parse scenario configuration text into a fully resolved SimulationConfig."""
    section, scope = "", None
    values: dict[tuple[str, str | None, str], tuple[Any, int]] = {}

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        header = _SECTION_RE.match(line)
        if header:
            section, scope = header.group(1), header.group(2)
            if section not in _SCHEMA or section == "":
                raise ConfigError(f"unknown section [{section}]", lineno)
            if scope is not None and section not in ("species", "structural"):
                raise ConfigError(f"section [{section}] does not take a layer qualifier", lineno)
            if scope is not None and scope not in (Layer.MEDIA, Layer.ADVENTITIA):
                raise ConfigError(f"unknown layer {scope!r}; expected media or adventitia", lineno)
            continue
        if line.startswith("["):
            raise ConfigError(f"malformed section header {line!r}", lineno)
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if not raw:
            raise ConfigError(f"{key}: missing value", lineno)
        kind, unit = _check_key(section, key, lineno)
        slot = (section, scope, key)
        if slot in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {values[slot][1]})", lineno)
        values[slot] = (_parse_value(key, raw, kind, unit, lineno), lineno)

    return _resolve(values)


def _resolve(values: dict[tuple[str, str | None, str], tuple[Any, int]]) -> SimulationConfig:
    def pick(section: str, scope: str | None = None) -> dict[str, tuple[Any, int]]:
        return {k: v for (s, sc, k), v in values.items() if s == section and sc == scope}

    top = pick("")
    if "scenario" not in top:
        raise ConfigError("missing required key 'scenario' (block, angioplasty or stent)")
    name, line = top["scenario"]
    try:
        kind = ScenarioKind(name)
    except ValueError:
        raise ConfigError(f"unknown scenario {name!r}; expected block, angioplasty or stent", line) from None

    # geometry
    geo_values = pick("geometry")
    for key, (_, gline) in geo_values.items():
        if kind is ScenarioKind.BLOCK and key not in _BLOCK_GEOMETRY_KEYS:
            raise ConfigError(f"geometry key {key!r} does not apply to the block scenario", gline)
        if kind.is_artery and key in _BLOCK_GEOMETRY_KEYS:
            raise ConfigError(f"geometry key {key!r} applies to the block scenario only", gline)
        if kind is ScenarioKind.ANGIOPLASTY and key in _STENT_ONLY_KEYS:
            raise ConfigError(f"geometry key {key!r} applies to the stent scenario only", gline)
        if kind is ScenarioKind.STENT and key in _ANGIOPLASTY_ONLY_KEYS:
            raise ConfigError(f"geometry key {key!r} applies to the angioplasty scenario only", gline)
    base_geometry = GeometryConfig(**_STENT_GEOMETRY) if kind is ScenarioKind.STENT else GeometryConfig()
    geometry = replace(base_geometry, **{k: v for k, (v, _) in geo_values.items()})

    # growth and per-layer overrides
    growth_entry = pick("growth").get("model")
    growth_model = _DEFAULT_GROWTH.get(kind, GrowthModel.ISOTROPIC_MATRIX)
    if growth_entry is not None:
        try:
            growth_model = GrowthModel(growth_entry[0])
        except ValueError:
            raise ConfigError(
                f"unknown growth model {growth_entry[0]!r}; expected "
                + " or ".join(m.value for m in GrowthModel), growth_entry[1]
            ) from None

    species_overrides: dict[str, dict[str, float]] = {}
    structural_overrides: dict[str, dict[str, float]] = {}
    last_line: dict[str, int] = {}
    for (section, scope, key), (value, vline) in values.items():
        if section not in ("species", "structural"):
            continue
        if scope is not None and not kind.is_artery:
            raise ConfigError(f"layer section [{section}.{scope}] needs an artery scenario", vline)
        target = species_overrides if section == "species" else structural_overrides
        target.setdefault(scope or "all", {})[key] = value
        last_line[section] = max(last_line.get(section, 0), vline)
    if kind is ScenarioKind.STENT and growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC:
        # aligned fibers in both layers unless the file says otherwise
        structural_overrides.setdefault("all", {}).setdefault("kappa", 0.0)

    # flux
    flux = FluxConfig(**{k: v for k, (v, _) in pick("flux").items()})

    # time stepping
    time_kw = {_TIME_KEYS.get(k, k): v for k, (v, _) in pick("time").items()}
    time_lines = {_TIME_KEYS.get(k, k): ln for k, (_, ln) in pick("time").items()}
    for key, enum in (("scheme", SchemeKind), ("linear_solver", LinearSolver)):
        if key in time_kw and time_kw[key] not in {m.value for m in enum}:
            raise ConfigError(
                f"{key}: expected one of {', '.join(m.value for m in enum)}, got {time_kw[key]!r}", time_lines[key]
            )
    time_kw.setdefault("linear_solver", load_runtime_config().default_linear_solver)
    try:
        time = TimeSteppingConfig(**time_kw)
    except ConfigError as e:
        raise ConfigError(str(e), max(time_lines.values(), default=None)) from None

    output = OutputSettings(**{k: v for k, (v, _) in pick("output").items()})
    initial = {k: v for k, (v, _) in pick("initial").items()}

    config = SimulationConfig(
        scenario=kind,
        label=top.get("label", ("", 0))[0],
        geometry=geometry,
        growth_model=growth_model,
        species_overrides=species_overrides,
        structural_overrides=structural_overrides,
        flux=flux,
        time=time,
        initial=initial,
        output=output,
    )
    try:
        config.validate()
    except ConfigError as e:
        if e.line is not None:
            raise
        blame = growth_entry[1] if growth_entry else last_line.get("structural") or last_line.get("species")
        raise ConfigError(str(e), blame) from None
    return config
