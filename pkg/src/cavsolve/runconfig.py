"""JSON run configurations.

A run file names the material, the boundary stretches, the cavity volume and
the eps schedule, and may override any solver default from ``cavsolve.config``:

    {
      "material": {"kappa": 0, "q": 2, "c1": 1, "e1": 2, "e2": 1, "c2_mode": "stress_free"},
      "boundary": {"lambda1": 1.1, "lambda2": 1.4},
      "V": 0.0706858,
      "eps_schedule": [0.1, 0.05],
      "mesh": {"n_r": 32, "n_theta": 256, "grading": 1.1},
      "flow": {"dt": 0.1, "tol_u": 1e-5, "max_steps": 5000},
      "auglag": {"gamma": 0.25, "beta": 2, "eta1": 5, "mu1": 0, "tol_mu": 1e-3, "max_outer": 30},
      "output": {"dir": "output/table1", "dump_fields": false, "trace_flow": false}
    }

Every validation failure raises ``ConfigError`` naming the dotted field path.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from cavsolve import config
from cavsolve.auglag import STARTS, AugLagConfig
from cavsolve.errors import ConfigError
from cavsolve.fem import BoundaryData
from cavsolve.flow import FlowConfig
from cavsolve.material import MaterialModel, stress_free_c2
from cavsolve.mesh import MeshParams

logger = logging.getLogger(__name__)

C2_MODES = ("stress_free", "explicit")
MATERIAL_FIELDS = ("kappa", "q", "c1", "c2", "e1", "e2", "c2_mode")
TOP_LEVEL_FIELDS = (
    "material", "boundary", "V", "eps_schedule", "mesh", "flow", "auglag", "output", "start",
    "r_shell",
)
INTEGER_FIELDS = {"n_r", "n_theta", "max_steps", "growth_after", "max_outer"}
STRING_FIELDS = {"linear_solver"}


@dataclass(frozen=True)
class OutputConfig:
    """Where and what a run writes."""

    dir: Path = config.OUTPUT_DIR
    dump_fields: bool = False
    trace_flow: bool = False


@dataclass(frozen=True)
class RunConfig:
    """Everything ``cavsolve run`` needs."""

    material: MaterialModel
    boundary: BoundaryData
    volume: float
    eps_schedule: tuple[float, ...]
    mesh: MeshParams = MeshParams()
    flow: FlowConfig = FlowConfig()
    auglag: AugLagConfig = AugLagConfig()
    output: OutputConfig = OutputConfig()
    start: str = "z_eps"
    r_shell: float = config.R_SHELL

    def with_output(self, **changes) -> RunConfig:
        """Copy with some output settings replaced (used by CLI overrides)."""
        return dataclasses.replace(self, output=dataclasses.replace(self.output, **changes))


def _number(path: str, value: Any, integer: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ConfigError(path, f"must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(path, f"must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _section(raw: dict, name: str) -> dict:
    section = raw.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(name, f"must be an object, got {type(section).__name__}")
    return section


def _reject_unknown(path: str, section: dict, allowed) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")


def _build(name: str, cls, defaults: dict, section: dict):
    """Merge ``section`` over ``defaults`` and construct ``cls``.

    Parameter errors from ``cls`` are re-raised with the path of the field
    their message starts with.
    """
    allowed = [f.name for f in dataclasses.fields(cls)]
    _reject_unknown(name, section, allowed)
    values = {key: value for key, value in defaults.items() if key in allowed}
    for key, value in section.items():
        if key in STRING_FIELDS:
            if not isinstance(value, str):
                raise ConfigError(f"{name}.{key}", f"must be a string, got {value!r}")
            values[key] = value
        else:
            values[key] = _number(f"{name}.{key}", value, integer=key in INTEGER_FIELDS)
    try:
        return cls(**values)
    except ValueError as e:
        first = str(e).split()[0]
        path = f"{name}.{first}" if first in allowed else name
        raise ConfigError(path, str(e)) from e


def _material(section: dict) -> MaterialModel:
    _reject_unknown("material", section, MATERIAL_FIELDS)
    mode = section.get("c2_mode", "stress_free")
    if mode not in C2_MODES:
        raise ConfigError("material.c2_mode", f"must be one of {C2_MODES}, got {mode!r}")
    values = {
        key: _number(f"material.{key}", section[key])
        for key in ("kappa", "q", "c1", "c2", "e1", "e2")
        if key in section
    }
    for key, default in config.FLUID_MATERIAL.items():
        values.setdefault(key, default)
    if mode == "explicit":
        if "c2" not in values:
            raise ConfigError("material.c2", "required when c2_mode is 'explicit'")
    else:
        if "c2" in values:
            logger.warning("material.c2 is ignored with c2_mode 'stress_free'")
        try:
            values["c2"] = stress_free_c2(
                values["kappa"], values["q"], values["c1"], values["e1"], values["e2"]
            )
        except ValueError as e:
            raise ConfigError("material.e2", str(e)) from e
    try:
        return MaterialModel(**values)
    except ValueError as e:
        first = str(e).split()[0]
        path = f"material.{first}" if first in MATERIAL_FIELDS else "material"
        raise ConfigError(path, str(e)) from e


def _eps_schedule(raw: dict) -> tuple[float, ...]:
    if "eps_schedule" not in raw:
        raise ConfigError("eps_schedule", "required")
    schedule = raw["eps_schedule"]
    if not isinstance(schedule, list) or not schedule:
        raise ConfigError("eps_schedule", "must be a non-empty list")
    values = [_number(f"eps_schedule[{i}]", eps) for i, eps in enumerate(schedule)]
    for i, eps in enumerate(values):
        if not 0.0 < eps < 1.0:
            raise ConfigError(f"eps_schedule[{i}]", f"must lie in (0, 1), got {eps}")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ConfigError("eps_schedule", f"must be strictly decreasing, got {values}")
    return tuple(values)


def _output(section: dict) -> OutputConfig:
    _reject_unknown("output", section, ("dir", "dump_fields", "trace_flow"))
    defaults = config.OUTPUT_CONFIG
    directory = section.get("dir", defaults["dir"])
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.dir", f"must be a non-empty string, got {directory!r}")
    flags = {}
    for key in ("dump_fields", "trace_flow"):
        value = section.get(key, defaults[key])
        if not isinstance(value, bool):
            raise ConfigError(f"output.{key}", f"must be true or false, got {value!r}")
        flags[key] = value
    return OutputConfig(dir=Path(directory), **flags)


def parse_run_config(raw: Any) -> RunConfig:
    """Validate a decoded JSON document and build the ``RunConfig``.

    Raises:
        ConfigError: naming the first invalid field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("", f"run configuration must be a JSON object, got {type(raw).__name__}")
    _reject_unknown("", raw, TOP_LEVEL_FIELDS)

    material = _material(_section(raw, "material"))
    boundary_section = _section(raw, "boundary")
    _reject_unknown("boundary", boundary_section, ("lambda1", "lambda2"))
    stretches = {
        key: _number(f"boundary.{key}", boundary_section.get(key, 1.0))
        for key in ("lambda1", "lambda2")
    }
    for key, value in stretches.items():
        if value <= 0:
            raise ConfigError(f"boundary.{key}", f"must be > 0, got {value}")
    boundary = BoundaryData(**stretches)

    if "V" not in raw:
        raise ConfigError("V", "required")
    volume = _number("V", raw["V"])
    if volume < 0:
        raise ConfigError("V", f"must be >= 0, got {volume}")
    if volume >= math.pi * boundary.det:
        raise ConfigError("V", f"must be below pi det A = {math.pi * boundary.det:.6g}, got {volume}")

    start = raw.get("start", "z_eps")
    if start not in STARTS:
        raise ConfigError("start", f"must be one of {STARTS}, got {start!r}")
    r_shell = _number("r_shell", raw.get("r_shell", config.R_SHELL))
    schedule = _eps_schedule(raw)
    if start == "z_eps" and volume == 0:
        raise ConfigError("V", "must be > 0 for the z_eps start (use start \"affine\")")
    if start == "z_eps" and not schedule[0] < r_shell < 1.0:
        raise ConfigError("r_shell", f"must lie in (eps_schedule[0], 1), got {r_shell}")
    if start == "z_eps" and volume >= math.pi * r_shell**2 * boundary.det:
        raise ConfigError("V", f"must be below pi r_shell^2 det A for the z_eps start, got {volume}")

    return RunConfig(
        material=material,
        boundary=boundary,
        volume=volume,
        eps_schedule=schedule,
        mesh=_build("mesh", MeshParams, config.MESH_CONFIG, _section(raw, "mesh")),
        flow=_build("flow", FlowConfig, config.FLOW_CONFIG, _section(raw, "flow")),
        auglag=_build("auglag", AugLagConfig, config.AUGLAG_CONFIG, _section(raw, "auglag")),
        output=_output(_section(raw, "output")),
        start=start,
        r_shell=r_shell,
    )


def load_run_config(path: Path) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises:
        ConfigError: if the file is missing, is not valid JSON or holds an
            invalid field.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError("", f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("", f"{path.name} is not valid JSON ({e})") from e
    run_config = parse_run_config(raw)
    logger.info(
        "loaded %s: A=diag%s V=%g eps_schedule=%s",
        path.name, run_config.boundary.stretches, run_config.volume, list(run_config.eps_schedule),
    )
    return run_config
