from pathlib import Path

import pytest

from core.errors import ConfigError
from core.params import GrowthModel, Layer, layer_params
from core.scenario_config import FluxConfig, InfluxProfile, ScenarioKind, parse_config
from core.solver import LinearSolver, SchemeKind
from tests.builders import block_text

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def parse_error(text: str) -> ConfigError:
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value


# ── Defaults ──
def test_block_defaults():
    config = parse_config("scenario = block\n")
    assert config.scenario is ScenarioKind.BLOCK
    assert config.geometry.divisions == 4
    assert config.geometry.side_length == 1.0
    assert config.growth_model is GrowthModel.ISOTROPIC_MATRIX
    assert config.time.dt == 1.0
    assert config.time.t_end == 370.0
    assert config.time.scheme is SchemeKind.MONOLITHIC
    assert config.time.linear_solver is LinearSolver.DIRECT
    assert config.flux == FluxConfig()
    assert config.layers == (Layer.HOMOGENEOUS,)
    params = config.layer_params(Layer.HOMOGENEOUS)
    assert params.species.D_P == 0.1
    assert params.structural.kappa == 0.1


def test_stent_geometry_defaults():
    config = parse_config("scenario = stent\n")
    assert config.geometry.length == 3.0
    assert config.geometry.circumferential == 30
    assert config.geometry.longitudinal == 60
    assert config.geometry.radial_media == 5
    assert config.layers == (Layer.MEDIA, Layer.ADVENTITIA)


def test_stent_defaults_to_aligned_anisotropic_growth():
    config = parse_config("scenario = stent\n")
    assert config.growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC
    for layer in (Layer.MEDIA, Layer.ADVENTITIA):
        structural = config.layer_params(layer).structural
        assert structural.kappa == 0.0
        assert structural.anisotropic
    # the other layer constants keep their table values
    assert config.layer_params(Layer.ADVENTITIA).structural.alpha == 50.1

    shipped = parse_config((CONFIG_DIR / "stent.cfg").read_text())
    assert shipped.growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC
    assert shipped.layer_params(Layer.MEDIA).structural.kappa == 0.0


def test_stent_growth_model_can_be_overridden():
    config = parse_config("scenario = stent\n[growth]\nmodel = isotropic_matrix\n")
    assert config.growth_model is GrowthModel.ISOTROPIC_MATRIX
    assert config.layer_params(Layer.MEDIA).structural.kappa == 0.24
    assert parse_config("scenario = angioplasty\n").growth_model is GrowthModel.ISOTROPIC_MATRIX
    error = parse_error("scenario = stent\n[structural.media]\nkappa = 0.2\n")
    assert "kappa" in str(error)
    assert error.line == 3


def test_artery_layer_tables():
    config = parse_config("scenario = angioplasty\n")
    media = config.layer_params(Layer.MEDIA)
    adventitia = config.layer_params(Layer.ADVENTITIA)
    assert media.species.D_P == 0.01
    assert media.species.eta_S == 1e13
    assert media.structural.kappa == 0.24
    assert adventitia.species.D_P == 0.005
    assert adventitia.species.eta_S == 0.0
    assert adventitia.species.chi_C == 0.0
    assert adventitia.structural.mu == 0.008
    assert adventitia.structural.alpha == 50.1


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_configurations_parse(path):
    config = parse_config(path.read_text())
    assert config.scenario.value == path.stem


# ── Values and units ──
def test_units_are_checked():
    config = parse_config(block_text(extra="[time]\ndt = 0.5 days\n"))
    assert config.time.dt == 0.5
    error = parse_error(block_text(extra="[time]\ndt = 0.5 s\n"))
    assert "unit" in str(error)
    assert error.line == 9


def test_rate_constants_accept_their_table_units():
    config = parse_config(block_text(extra="[species]\neta_S = 1e14 mm^3/cell/day\neta_E = 1e-7 mol/cells/days\n"))
    params = config.layer_params(Layer.HOMOGENEOUS).species
    assert params.eta_S == 1e14
    assert params.eta_E == 1e-7
    error = parse_error(block_text(extra="[species]\neta_S = 1e14 mm^3/mol/day\n"))
    assert "unit" in str(error)
    assert error.line == 9


def test_coupling_band_is_read_from_the_time_section():
    config = parse_config(block_text(extra="[time]\nscheme = staggered\ncoupling_tol = 0.01\n"))
    assert config.time.coupling_tol == 0.01
    assert parse_config(block_text()).time.coupling_tol == 0.0
    assert parse_error(block_text(extra="[time]\ncoupling_tol = -1\n")).line == 9


def test_comments_and_blank_lines_are_ignored():
    config = parse_config("# header\n\nscenario = block   # inline\n[geometry]\n\ndivisions = 3\n")
    assert config.geometry.divisions == 3


def test_tolerance_keys_map_to_newton_settings():
    config = parse_config(block_text(extra="[time]\ntol_abs = 1e-7\ntol_rel = 1e-6\ntol_inc = 1e-9\n"))
    assert config.time.newton_tol_abs == 1e-7
    assert config.time.newton_tol_rel == 1e-6
    assert config.time.newton_tol_inc == 1e-9


def test_monitor_point_vector():
    config = parse_config(block_text(extra="[output]\nmonitor = 1, 0.5, 1 mm\n"))
    assert config.output.monitor == (1.0, 0.5, 1.0)
    assert parse_error(block_text(extra="[output]\nmonitor = 1, 0.5\n")).line == 9


def test_structural_override_applies_to_every_layer():
    config = parse_config("scenario = angioplasty\n[structural]\nkappa = 0.3\n[structural.media]\nalpha = 30 deg\n")
    assert config.layer_params(Layer.MEDIA).structural.kappa == 0.3
    assert config.layer_params(Layer.ADVENTITIA).structural.kappa == 0.3
    assert config.layer_params(Layer.MEDIA).structural.alpha == 30.0
    assert config.layer_params(Layer.ADVENTITIA).structural.alpha == 50.1


def test_anisotropic_growth_needs_aligned_fibers():
    text = "scenario = block\n[growth]\nmodel = stress_free_anisotropic\n"
    error = parse_error(text)
    assert "kappa" in str(error)
    assert error.line == 3
    config = parse_config(text + "[structural]\nkappa = 0\n")
    assert config.growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC
    assert config.layer_params(Layer.HOMOGENEOUS).structural.anisotropic


def test_anisotropic_artery_zeroes_every_layer():
    text = "scenario = angioplasty\n[growth]\nmodel = stress_free_anisotropic\n"
    parse_error(text)
    config = parse_config(text + "[structural]\nkappa = 0\n")
    assert config.layer_params(Layer.MEDIA).structural.kappa == 0.0


# ── Rejections ──
@pytest.mark.parametrize(("text", "line"), [
    ("scenario = block\nbogus = 1\n", 2),
    ("scenario = block\n[nonsense]\n", 2),
    ("scenario = block\n[time]\ndt = 1\ndt = 2\n", 4),
    ("scenario = block\n[species.media]\nD_P = 0.2\n", 3),
    ("scenario = block\n[geometry]\nlength = 3\n", 3),
    ("scenario = angioplasty\n[geometry]\nstrut_width = 0.1\n", 3),
    ("scenario = stent\n[geometry]\ndamage_start = 1\n", 3),
    ("scenario = angioplasty\n[geometry]\ndivisions = 3\n", 3),
    ("scenario = block\n[geometry]\ndivisions = 2.5\n", 3),
    ("scenario = block\n[time]\nscheme = explicit\n", 3),
    ("scenario = block\n[time]\ndt = 0\n", 3),
    ("scenario = block\n[species]\nD_P = -1\n", 3),
    ("scenario = block\n[growth]\nmodel = plastic\n", 3),
    ("scenario = block\n[flux]\nprofile = 0:1\n", 3),
    ("scenario = block\n[output]\nfield_interval = -1\n", None),
    ("scenario = block\n[species.lumen]\n", 2),
    ("scenario = block\n[time.media]\n", 2),
    ("scenario = block\nno equals sign\n", 2),
    ("scenario = block\nlabel =\n", 2),
    ("scenario = tube\n", 1),
])
def test_invalid_configurations(text, line):
    error = parse_error(text)
    if line is not None:
        assert error.line == line
        assert str(error).startswith(f"line {line}:")


def test_missing_scenario():
    error = parse_error("[geometry]\ndivisions = 2\n")
    assert "scenario" in str(error)
    assert error.line is None


def test_repeated_section_header_with_new_keys_is_allowed():
    config = parse_config(block_text(extra="[time]\ndt = 0.5\n[flux]\nratio = 5\n"))
    assert config.time.t_end == 2.0
    assert config.time.dt == 0.5
    assert config.flux.ratio == 5.0


# ── Overrides ──
def test_with_override_returns_a_new_config():
    config = parse_config(block_text())
    changed = config.with_override("species.D_P", 0.2)
    assert changed.layer_params(Layer.HOMOGENEOUS).species.D_P == 0.2
    assert config.layer_params(Layer.HOMOGENEOUS).species.D_P == 0.1
    assert config.with_override("time.dt", "0.25").time.dt == 0.25
    assert config.with_override("geometry.divisions", 2.0).geometry.divisions == 2
    assert config.with_override("structural.kappa", 0.0).layer_params(Layer.HOMOGENEOUS).structural.kappa == 0.0
    assert config.with_override("initial.c_P", 1e-15).initial == {"c_P": 1e-15}


def test_with_override_on_a_layer():
    config = parse_config("scenario = angioplasty\n")
    changed = config.with_override("species.media.D_P", 0.02)
    assert changed.layer_params(Layer.MEDIA).species.D_P == 0.02
    assert changed.layer_params(Layer.ADVENTITIA).species.D_P == 0.005


@pytest.mark.parametrize(("name", "value"), [
    ("species.bogus", 1.0),
    ("species.media.D_P", 0.2),
    ("time.nonsense", 1.0),
    ("time.dt", "fast"),
    ("time.dt", 0.0),
    ("structural.kappa", 0.5),
    ("whatever", 1.0),
])
def test_with_override_rejects(name, value):
    config = parse_config(block_text())
    with pytest.raises(ConfigError):
        config.with_override(name, value)


# ── Influx profiles ──
def test_rise_plateau_decay_profile():
    profile = FluxConfig().influx_profile()
    assert profile(0.0) == (0.0, 0.0)
    assert profile(15.0) == pytest.approx((0.5e-19, 0.5e-18))
    assert profile(50.0) == pytest.approx((1e-19, 1e-18))
    assert profile(235.0) == pytest.approx((0.5e-19, 0.5e-18))
    assert profile(400.0) == (0.0, 0.0)


def test_explicit_profile_replaces_the_shape():
    config = parse_config(block_text(extra="[flux]\nprofile = 0:0:0, 10:1e-19:2e-18, 20:0:0\n"))
    profile = config.flux.influx_profile()
    assert profile(5.0) == pytest.approx((5e-20, 1e-18))
    assert profile(25.0) == (0.0, 0.0)
    params = config.flux.patch_params()
    assert float(params.influx_P(10.0)) == pytest.approx(1e-19)


@pytest.mark.parametrize("kwargs", [
    {"times": (0.0, 0.0), "q_P": (0.0, 0.0), "q_T": (0.0, 0.0)},
    {"times": (0.0, 1.0), "q_P": (0.0,), "q_T": (0.0, 0.0)},
    {"times": (), "q_P": (), "q_T": ()},
    {"times": (0.0, 1.0), "q_P": (0.0, -1.0), "q_T": (0.0, 0.0)},
])
def test_influx_profile_validation(kwargs):
    with pytest.raises(ConfigError):
        InfluxProfile(**kwargs)


def test_profile_shape_must_be_ordered():
    with pytest.raises(ConfigError):
        InfluxProfile.rise_plateau_decay(1e-19, 10.0, rise=50.0, plateau_end=40.0)
    error = parse_error(block_text(extra="[flux]\nrise = 200\n"))
    assert "rise" in str(error)


def test_layer_params_direct():
    params = layer_params(Layer.MEDIA, GrowthModel.ISOTROPIC_MATRIX, {"D_P": 0.03})
    assert params.species.D_P == 0.03
    assert params.structural.c_E_eq == params.species.c_E_eq
