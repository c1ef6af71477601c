"""Scene-file parsing and emission.

Grammar (exact): the file is a sequence of sections ``[metric]``,
``[centre]`` (repeated, one per centre), ``[energy]``, ``[numerics]``; lines
inside a section are ``key = value`` with lowercase snake_case keys; numbers
are decimal with optional exponent; ``#`` starts a comment.  Unknown keys,
out-of-range exponents, duplicate centre positions, or an energy below the
estimated threshold (without override) are validation errors reported with
line numbers.

Keys and defaults (the single source of tolerance defaults):

    [metric]    kind = flat_plane | flat_torus | conformal_plane
                period_x = 1.0, period_y = 1.0        (flat_torus)
                phi_preset = zero | linear(a,b)       (conformal_plane)
                lambda_bound = 1.0, Lambda_bound = 1.0
    [centre]    position = x,y      (required)
                mass = 1.0
                alpha = 1.0          (in [1, 2))
                w_preset = zero | constant(c) | gaussian(a,sigma,cx,cy)
    [energy]    h = 1.0
                distance_mode = exact | mollified(eps)
                allow_low_energy = false
    [numerics]  loop_points = 512
                grad_tol = 1e-8      (relative gradient tolerance)
                max_iters = 50000
                flow_tol = 1e-10     (integrator rtol/atol)
                seed = 0

Round trip: parse(emit(config)) reproduces the canonical form exactly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ConformalPlane, FlatPlane, FlatTorus, MetricModel
from .potential import (
    CentreSpec,
    ConstantPart,
    GaussianPart,
    Mollified,
    PotentialField,
    ZeroPart,
    energy_threshold,
)


class SceneError(ValueError):
    """Parse or validation failure; ``errors`` lists (line, message)."""

    def __init__(self, errors: list[tuple[int, str]]):
        self.errors = errors
        text = "; ".join(f"line {ln}: {msg}" for ln, msg in errors)
        super().__init__(f"invalid scene: {text}")


@dataclass
class CentreConfig:
    position: tuple[float, float]
    mass: float = 1.0
    alpha: float = 1.0
    w_preset: str = "zero"


@dataclass
class SceneConfig:
    kind: str = "flat_plane"
    period_x: float = 1.0
    period_y: float = 1.0
    phi_preset: str = "zero"
    lambda_bound: float = 1.0
    Lambda_bound: float = 1.0
    centres: list[CentreConfig] = field(default_factory=list)
    h: float = 1.0
    distance_mode: str = "exact"
    allow_low_energy: bool = False
    loop_points: int = 512
    grad_tol: float = 1e-8
    max_iters: int = 50_000
    flow_tol: float = 1e-10
    seed: int = 0


_CENTRE_KEYS = {"position", "mass", "alpha", "w_preset"}
_ENERGY_KEYS = {"h", "distance_mode", "allow_low_energy"}
_NUMERICS_KEYS = {"loop_points", "grad_tol", "max_iters", "flow_tol", "seed"}

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _parse_number(text: str, line: int, errors: list) -> float:
    if not _NUMBER.match(text.strip()):
        errors.append((line, f"not a number: {text!r}"))
        return math.nan
    return float(text)


def parse_scene(text: str) -> SceneConfig:
    """Parse and validate a scene file; raises SceneError with line numbers."""
    errors: list[tuple[int, str]] = []
    cfg = SceneConfig()
    section: Optional[str] = None
    centre: Optional[CentreConfig] = None
    seen_position = False

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in ("metric", "centre", "energy", "numerics"):
                errors.append((ln, f"unknown section [{name}]"))
                section = None
                continue
            if section == "centre" and centre is not None and not seen_position:
                errors.append((ln - 1, "centre section missing position"))
            section = name
            if name == "centre":
                centre = CentreConfig(position=(math.nan, math.nan))
                cfg.centres.append(centre)
                seen_position = False
            continue
        if "=" not in line:
            errors.append((ln, "expected key = value"))
            continue
        key, _, value = (part.strip() for part in line.partition("="))
        if section is None:
            errors.append((ln, "key outside any section"))
            continue
        if section == "metric":
            if key not in ("kind", "period_x", "period_y", "phi_preset",
                           "lambda_bound", "Lambda_bound"):
                errors.append((ln, f"unknown key {key!r} in [metric]"))
            elif key == "kind":
                if value not in ("flat_plane", "flat_torus", "conformal_plane"):
                    errors.append((ln, f"unknown metric kind {value!r}"))
                else:
                    cfg.kind = value
            elif key == "phi_preset":
                cfg.phi_preset = value
            else:
                setattr(cfg, key if key != "Lambda_bound" else "Lambda_bound",
                        _parse_number(value, ln, errors))
        elif section == "centre":
            if key not in _CENTRE_KEYS:
                errors.append((ln, f"unknown key {key!r} in [centre]"))
            elif key == "position":
                parts = value.split(",")
                if len(parts) != 2:
                    errors.append((ln, "position needs two comma-separated numbers"))
                else:
                    centre.position = (_parse_number(parts[0], ln, errors),
                                       _parse_number(parts[1], ln, errors))
                    seen_position = True
            elif key == "w_preset":
                centre.w_preset = value
            else:
                setattr(centre, key, _parse_number(value, ln, errors))
        elif section == "energy":
            if key not in _ENERGY_KEYS:
                errors.append((ln, f"unknown key {key!r} in [energy]"))
            elif key == "h":
                cfg.h = _parse_number(value, ln, errors)
            elif key == "distance_mode":
                cfg.distance_mode = value
            elif key == "allow_low_energy":
                if value not in ("true", "false"):
                    errors.append((ln, "allow_low_energy must be true or false"))
                else:
                    cfg.allow_low_energy = value == "true"
        elif section == "numerics":
            if key not in _NUMERICS_KEYS:
                errors.append((ln, f"unknown key {key!r} in [numerics]"))
            elif key in ("loop_points", "max_iters", "seed"):
                val = _parse_number(value, ln, errors)
                if not math.isnan(val):
                    if val != int(val):
                        errors.append((ln, f"{key} must be an integer"))
                    else:
                        setattr(cfg, key, int(val))
            else:
                setattr(cfg, key, _parse_number(value, ln, errors))

    _validate(cfg, errors)
    if errors:
        raise SceneError(errors)
    return cfg


def _validate(cfg: SceneConfig, errors: list) -> None:
    if not cfg.centres:
        errors.append((0, "at least one [centre] section is required"))
        return
    for idx, c in enumerate(cfg.centres):
        if any(math.isnan(v) for v in c.position):
            errors.append((0, f"centre {idx + 1} has no valid position"))
        if not (1.0 <= c.alpha < 2.0):
            errors.append((0, f"centre {idx + 1}: alpha = {c.alpha} outside "
                              "the required range alpha in [1, 2)"))
        if c.mass <= 0:
            errors.append((0, f"centre {idx + 1}: mass must be positive"))
        if not _parse_w_preset_ok(c.w_preset):
            errors.append((0, f"centre {idx + 1}: bad w_preset {c.w_preset!r}"))
    positions = [c.position for c in cfg.centres]
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            if (abs(positions[i][0] - positions[j][0]) < 1e-12
                    and abs(positions[i][1] - positions[j][1]) < 1e-12):
                errors.append((0, f"centres {i + 1} and {j + 1} coincide"))
    if cfg.distance_mode != "exact":
        m = re.match(r"^mollified\(([^)]*)\)$", cfg.distance_mode)
        if not m or not _NUMBER.match(m.group(1).strip()):
            errors.append((0, f"bad distance_mode {cfg.distance_mode!r}"))
        elif cfg.kind != "flat_torus":
            errors.append((0, "mollified distances require kind = flat_torus"))
    if cfg.kind == "flat_torus" and (cfg.period_x <= 0 or cfg.period_y <= 0):
        errors.append((0, "torus periods must be positive"))
    if errors:
        return
    # threshold check needs a constructible field
    try:
        fld = build_field(cfg, check_energy=False)
        est = energy_threshold(fld, grid=48, zoom_levels=4)
        if not cfg.allow_low_energy and cfg.h <= est.value + est.margin:
            errors.append((0, f"h = {cfg.h} is not above the estimated "
                              f"sup V = {est.value:.6g} (margin {est.margin:.2g}); "
                              "set allow_low_energy = true to override"))
    except Exception as exc:
        errors.append((0, f"field construction failed: {exc}"))


def _parse_w_preset_ok(text: str) -> bool:
    if text == "zero":
        return True
    if re.match(r"^constant\([^)]+\)$", text):
        return True
    if re.match(r"^gaussian\([^)]+,[^)]+,[^)]+,[^)]+\)$", text):
        return True
    return False


def _w_part(text: str):
    if text == "zero":
        return ZeroPart()
    m = re.match(r"^constant\(([^)]+)\)$", text)
    if m:
        return ConstantPart(float(m.group(1)))
    m = re.match(r"^gaussian\(([^,]+),([^,]+),([^,]+),([^)]+)\)$", text)
    if m:
        a, sigma, cx, cy = (float(g) for g in m.groups())
        return GaussianPart(a=a, sigma=sigma, centre=(cx, cy))
    raise ValueError(f"bad w_preset {text!r}")


def _metric_model(cfg: SceneConfig) -> MetricModel:
    if cfg.kind == "flat_plane":
        return FlatPlane()
    if cfg.kind == "flat_torus":
        return FlatTorus(cfg.period_x, cfg.period_y)
    if cfg.phi_preset == "zero":
        return ConformalPlane(phi=lambda q: 0.0,
                              grad_phi=lambda q: np.zeros(2),
                              laplacian_phi=lambda q: 0.0,
                              comparability_bounds=(cfg.lambda_bound, cfg.Lambda_bound))
    m = re.match(r"^linear\(([^,]+),([^)]+)\)$", cfg.phi_preset)
    if m:
        a, b = float(m.group(1)), float(m.group(2))
        return ConformalPlane(phi=lambda q: a * q[0] + b * q[1],
                              grad_phi=lambda q: np.array([a, b]),
                              laplacian_phi=lambda q: 0.0,
                              comparability_bounds=(cfg.lambda_bound, cfg.Lambda_bound))
    raise ValueError(f"bad phi_preset {cfg.phi_preset!r}")


def build_field(cfg: SceneConfig, check_energy: bool = True) -> PotentialField:
    """Construct the PotentialField a scene describes."""
    model = _metric_model(cfg)
    centres = tuple(
        CentreSpec(position=c.position, mass=c.mass, exponent=c.alpha,
                   regular_part=_w_part(c.w_preset))
        for c in cfg.centres)
    mode = "exact"
    m = re.match(r"^mollified\(([^)]*)\)$", cfg.distance_mode)
    if m:
        mode = Mollified(float(m.group(1)))
    fld = PotentialField(metric=model, centres=centres, energy=cfg.h,
                         distance_mode=mode)
    if check_energy and not cfg.allow_low_energy:
        est = energy_threshold(fld, grid=48, zoom_levels=4)
        if cfg.h <= est.value + est.margin:
            raise ValueError("energy below the estimated threshold")
    return fld


def emit_scene(cfg: SceneConfig) -> str:
    """Canonical text form; parse(emit(cfg)) round-trips exactly."""
    out = ["[metric]", f"kind = {cfg.kind}"]
    if cfg.kind == "flat_torus":
        out += [f"period_x = {cfg.period_x!r}", f"period_y = {cfg.period_y!r}"]
    if cfg.kind == "conformal_plane":
        out += [f"phi_preset = {cfg.phi_preset}",
                f"lambda_bound = {cfg.lambda_bound!r}",
                f"Lambda_bound = {cfg.Lambda_bound!r}"]
    for c in cfg.centres:
        out += ["", "[centre]",
                f"position = {c.position[0]!r},{c.position[1]!r}",
                f"mass = {c.mass!r}",
                f"alpha = {c.alpha!r}"]
        if c.w_preset != "zero":
            out.append(f"w_preset = {c.w_preset}")
    out += ["", "[energy]", f"h = {cfg.h!r}"]
    if cfg.distance_mode != "exact":
        out.append(f"distance_mode = {cfg.distance_mode}")
    if cfg.allow_low_energy:
        out.append("allow_low_energy = true")
    out += ["", "[numerics]",
            f"loop_points = {cfg.loop_points}",
            f"grad_tol = {cfg.grad_tol!r}",
            f"max_iters = {cfg.max_iters}",
            f"flow_tol = {cfg.flow_tol!r}",
            f"seed = {cfg.seed}"]
    return "\n".join(out) + "\n"
