"""
Restenosis Core - Scenario construction.

Turns a SimulationConfig into everything a run needs: the mesh, per-element
materials and fiber frames, the displacement fixations, the flux interface,
the initial state and the monitor/profile nodes.

  block        unit cube, symmetry fixations on x0/y0/z0, influx on the top face
  angioplasty  two-layer artery quadrant, influx on the lumen damage window
  stent        shorter quadrant; a strut band around Z = l/2 is held fixed and
               the influx enters through the rest of the lumen
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.assembly import Assembler, DofMap
from core.config import load_runtime_config
from core.elements import DOFS_PER_NODE, Field, element_materials
from core.errors import MeshError
from core.mesh import Mesh, QuadrantDivisions, build_artery_quadrant, build_block, fiber_frames
from core.params import GrowthModel, Layer, LayerParams
from core.scenario_config import OutputSettings, ScenarioKind, SimulationConfig
from core.solver import State, TimeSteppingConfig
from utils.logger_config import get_logger

logger = get_logger()

DEFAULT_PROFILE_Z = 3.5  # mm, angioplasty neointima line


@dataclass(frozen=True, eq=False)
class Scenario:
    config: SimulationConfig
    mesh: Mesh
    layer_params: dict[Layer, LayerParams]
    assembler: Assembler
    dof_map: DofMap
    initial_state: State
    monitor_node: int
    profile_nodes: np.ndarray
    field_scales: np.ndarray   # (7,) per-dof nondimensionalization
    rho_S_eq: float
    anisotropic: bool

    @property
    def time(self) -> TimeSteppingConfig:
        return self.config.time

    @property
    def output(self) -> OutputSettings:
        return self.config.output


# ── Geometry ──
def _artery_mesh(config: SimulationConfig) -> Mesh:
    g = config.geometry
    r_media = g.r_inner + g.media_thickness
    divisions = QuadrantDivisions(g.radial_media, g.radial_adventitia, g.circumferential, g.longitudinal)
    window = (g.damage_start, g.damage_length) if config.scenario is ScenarioKind.ANGIOPLASTY else (0.0, g.length)
    mesh = build_artery_quadrant(g.length, g.r_inner, r_media, r_media + g.adventitia_thickness, divisions, window)
    if config.scenario is ScenarioKind.STENT:
        mesh = _with_strut(mesh, g.length, g.strut_width)
    return mesh


def _with_strut(mesh: Mesh, length: float, width: float) -> Mesh:
    """Split the lumen into the fixed strut band and the influx patch.

    A lumen quad belongs to the band when its Z extent overlaps
    (l/2 - w/2, l/2 + w/2); the band is never empty.
    """
    if not 0 < width < length:
        raise MeshError(f"strut width must lie in (0, {length}), got {width}")
    lumen = mesh.patch("lumen")
    z = mesh.nodes[lumen.quads][:, :, 2]
    tol = 1e-9 * length
    lo, hi = 0.5 * (length - width), 0.5 * (length + width)
    in_band = (z.max(axis=1) > lo + tol) & (z.min(axis=1) < hi - tol)
    if not in_band.any():
        raise MeshError("strut band contains no lumen facet")
    band = lumen.subset(in_band)
    return (
        mesh.with_patch("strut", band)
        .with_patch("flux", lumen.subset(~in_band))
        .with_node_set("strut", band.node_ids)
    )


def _fixations(mesh: Mesh, kind: ScenarioKind) -> np.ndarray:
    """Constrained global dofs; every prescribed value is zero."""
    ux, uy, uz = Field.U, Field.U + 1, Field.U + 2
    if kind is ScenarioKind.BLOCK:
        pairs = [("x0", ux), ("y0", uy), ("z0", uz)]
    else:
        # theta0 is the y = 0 plane, theta90 the x = 0 plane
        pairs = [("theta0", uy), ("theta90", ux), ("z0", uz), ("zl", uz)]
        if kind is ScenarioKind.STENT:
            pairs += [("strut", ux), ("strut", uy), ("strut", uz)]
    dofs = [DOFS_PER_NODE * mesh.node_set(name) + comp for name, comp in pairs]
    return np.unique(np.concatenate(dofs))


def _nearest_node(mesh: Mesh, point, candidates: np.ndarray | None = None) -> int:
    ids = np.arange(mesh.n_nodes) if candidates is None else np.asarray(candidates)
    d = np.linalg.norm(mesh.nodes[ids] - np.asarray(point, dtype=float), axis=1)
    return int(ids[np.argmin(d)])


def _profile_z(config: SimulationConfig) -> float:
    if config.output.profile_z is not None:
        return float(config.output.profile_z)
    if config.scenario is ScenarioKind.STENT:
        return 0.75 * config.geometry.length
    return DEFAULT_PROFILE_Z


def _profile_nodes(mesh: Mesh, z_line: float) -> np.ndarray:
    """Lumen nodes on the Z level closest to z_line, ordered by angle."""
    lumen = mesh.node_set("lumen")
    z = mesh.nodes[lumen, 2]
    level = z[np.argmin(np.abs(z - z_line))]
    line = lumen[np.isclose(z, level)]
    angle = np.arctan2(mesh.nodes[line, 1], mesh.nodes[line, 0])
    return line[np.argsort(angle)]


def _monitor_node(mesh: Mesh, config: SimulationConfig) -> int:
    if config.output.monitor is not None:
        return _nearest_node(mesh, config.output.monitor)
    if config.scenario is ScenarioKind.BLOCK:
        L = config.geometry.side_length
        return _nearest_node(mesh, (L, L, L))
    r = config.geometry.r_inner
    c = np.sqrt(0.5)
    return _nearest_node(mesh, (r * c, r * c, _profile_z(config)), mesh.node_set("lumen"))


# ── Entry points ──
def build_mesh(config: SimulationConfig) -> Mesh:
    if config.scenario is ScenarioKind.BLOCK:
        return build_block(config.geometry.side_length, config.geometry.divisions)
    return _artery_mesh(config)


def build_scenario(config: SimulationConfig, chunk: int | None = None) -> Scenario:
    config.validate()
    mesh = build_mesh(config)

    params = {layer: config.layer_params(layer) for layer in config.layers}
    element_params = [params[layer] for layer in mesh.layers]
    alphas = np.array([p.structural.alpha for p in element_params])
    frames = fiber_frames(mesh, alphas)
    anisotropic = config.growth_model is GrowthModel.STRESS_FREE_ANISOTROPIC

    assembler = Assembler(
        mesh,
        element_materials(element_params, frames),
        anisotropic,
        flux_patch=mesh.patch("flux"),
        flux_params=config.flux.patch_params(),
        chunk=chunk or load_runtime_config().assembly_chunk,
    )
    constrained = _fixations(mesh, config.scenario)
    dof_map = DofMap(mesh.n_nodes, constrained, np.zeros(len(constrained)))

    species = params[config.layers[0]].species
    initial = State.initial(mesh.n_nodes, species, config.initial)
    scales = np.array([species.c_P_th, species.c_T_th, species.c_E_eq, species.rho_S_eq, 1.0, 1.0, 1.0])
    profile = _profile_nodes(mesh, _profile_z(config)) if config.scenario.is_artery else np.zeros(0, dtype=np.int64)

    scenario = Scenario(
        config=config,
        mesh=mesh,
        layer_params=params,
        assembler=assembler,
        dof_map=dof_map,
        initial_state=initial,
        monitor_node=_monitor_node(mesh, config),
        profile_nodes=profile,
        field_scales=scales,
        rho_S_eq=species.rho_S_eq,
        anisotropic=anisotropic,
    )
    logger.info(
        "scenario built",
        extra={"extra_fields": {
            "scenario": str(config.scenario), "nodes": mesh.n_nodes, "elements": mesh.n_elements,
            "constrained_dofs": len(constrained), "flux_quads": len(mesh.patch("flux")),
            "growth_model": str(config.growth_model),
        }},
    )
    return scenario
