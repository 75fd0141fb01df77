"""Small scenario configurations shared by the test modules."""
from core.scenario_config import parse_config

C_E_TH = 7.0007e-9
C_E_EQ = 7.0e-9
RHO_S_EQ = 3.7e5


def block_text(divisions: int = 1, t_end: float = 2.0, peak_P: float = 1e-19, extra: str = "") -> str:
    """Block configuration; `extra` is appended verbatim (more sections)."""
    return (
        "scenario = block\n"
        "[geometry]\n"
        f"divisions = {divisions}\n"
        "[flux]\n"
        f"peak_P = {peak_P}\n"
        "[time]\n"
        f"t_end = {t_end}\n"
        f"{extra}"
    )


def block_config(divisions: int = 1, t_end: float = 2.0, peak_P: float = 1e-19, extra: str = ""):
    return parse_config(block_text(divisions, t_end, peak_P, extra))


def coarse_artery_text(scenario: str = "angioplasty", extra: str = "") -> str:
    length = 6 if scenario == "angioplasty" else 3
    return (
        f"scenario = {scenario}\n"
        "[geometry]\n"
        f"length = {length}\n"
        "longitudinal = 6\n"
        "radial_media = 1\n"
        "radial_adventitia = 1\n"
        "circumferential = 4\n"
        "[time]\n"
        "t_end = 2\n"
        f"{extra}"
    )


def coarse_artery_config(scenario: str = "angioplasty", extra: str = ""):
    return parse_config(coarse_artery_text(scenario, extra))
