"""Planar leg inverse kinematics: joint angles to prismatic motor targets.

Each leg has two orthogonal prismatic motors driving a two-linkage leg; the
controller emits target angles (theta_x, theta_y) per leg which are mapped to
motor positions on the host. A forward-kinematics inversion of the angle
equations is provided as a round-trip oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError


@dataclass(frozen=True)
class LegGeometry:
    l_x: float
    l_y: float
    x_motor_ref: float = 0.0
    y_motor_ref: float = 0.0

    def __post_init__(self):
        if not (self.l_x > 0 and self.l_y > 0):
            raise DataError(f"linkage lengths must be > 0, got {self.l_x}, {self.l_y}")


@dataclass(frozen=True)
class EndEffector:
    x_end: float
    y_end: float


@dataclass(frozen=True)
class IkSolution:
    theta_x: float
    theta_y: float
    x_motor: float
    y_motor: float


def _checked_asin(arg: float, which: str) -> float:
    if abs(arg) > 1.0:
        raise DomainError(
            f"end effector outside workspace: {which} arcsine argument {arg:.6g} "
            "outside [-1, 1]")
    return math.asin(arg)


def ik(g: LegGeometry, e: EndEffector) -> IkSolution:
    """Solve the leg's angle and motor-position equations (principal arcsine branch)."""
    theta_y = _checked_asin((e.x_end - g.x_motor_ref) / g.l_y, "swing (theta_y)")
    theta_x = _checked_asin(
        (e.y_end + (0.5 * g.l_y * math.cos(theta_y) - g.y_motor_ref)) / g.l_x,
        "lift (theta_x)")
    x_motor = e.x_end - 0.5 * g.l_y * math.sin(theta_y) - g.l_x * math.cos(theta_x)
    y_motor = e.y_end + g.l_y * math.cos(theta_y)
    return IkSolution(theta_x, theta_y, x_motor, y_motor)


def fk_oracle(g: LegGeometry, theta_x: float, theta_y: float) -> EndEffector:
    """Algebraic inversion of the two angle equations; round-trip check for ik."""
    x_end = g.x_motor_ref + g.l_y * math.sin(theta_y)
    y_end = g.y_motor_ref + g.l_x * math.sin(theta_x) - 0.5 * g.l_y * math.cos(theta_y)
    return EndEffector(x_end, y_end)


def action_to_motor_targets(action: np.ndarray, geoms: list[LegGeometry]
                            ) -> list[tuple[float, float]]:
    """Map an 8-value action (theta_x, theta_y per leg) to (x_motor, y_motor) per leg."""
    a = np.asarray(action, dtype=np.float64).ravel()
    if len(geoms) * 2 != a.size:
        raise DataError(f"action has {a.size} values for {len(geoms)} legs")
    targets = []
    for i, g in enumerate(geoms):
        theta_x, theta_y = float(a[2 * i]), float(a[2 * i + 1])
        try:
            sol = ik(g, fk_oracle(g, theta_x, theta_y))
        except DomainError as exc:
            raise DomainError(f"leg {i}: {exc}") from None
        targets.append((sol.x_motor, sol.y_motor))
    return targets


GEOMETRY_KEYS = ("l_x", "l_y", "x_motor_ref", "y_motor_ref")


def load_geometry(path) -> LegGeometry:
    """Parse a key=value geometry file for one leg."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep or key not in GEOMETRY_KEYS:
                raise DataError(f"{path}:{lineno}: expected one of {GEOMETRY_KEYS}")
            try:
                values[key] = float(raw.strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad number {raw.strip()!r}") from None
    missing = [k for k in ("l_x", "l_y") if k not in values]
    if missing:
        raise DataError(f"{path}: missing required keys: {', '.join(missing)}")
    return LegGeometry(**values)
