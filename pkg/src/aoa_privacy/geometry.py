"""Planar room model and image-source path enumeration.

Angles follow one convention everywhere: an array with orientation ``o``
has its broadside along the world direction ``(sin o, cos o)``, and a local
angle is measured from broadside, positive towards ``+x`` when ``o = 0``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateGeometryError

logger = logging.getLogger(__name__)

_EPS = 1e-9


@dataclass(frozen=True)
class Reflector:
    """A specular line segment with amplitude reflection coefficient ``gamma``."""

    start: tuple[float, float]
    end: tuple[float, float]
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"reflection coefficient {self.gamma} outside [0, 1]")
        if math.dist(self.start, self.end) <= _EPS:
            raise DegenerateGeometryError("reflector has zero length")


@dataclass(frozen=True)
class ApPose:
    position: tuple[float, float]
    orientation: float = 0.0


@dataclass(frozen=True)
class PathComponent:
    """One propagation path between the user array and an AP array.

    ``aod`` is the departure angle at the user array and ``aoa`` the arrival
    angle at the AP array, both relative to the respective broadside.
    ``points`` lists the reflection points in propagation order.
    """

    length: float
    aod: float
    aoa: float
    gain: float
    order: int
    points: tuple[tuple[float, float], ...] = ()
    reflectors: tuple[int, ...] = ()


@dataclass(frozen=True)
class Environment:
    width: float
    height: float
    reflectors: tuple[Reflector, ...] = ()
    ap_poses: tuple[ApPose, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("room width and height must be positive")
        # accept plain lists from callers
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        object.__setattr__(self, "ap_poses", tuple(self.ap_poses))
        for r in self.reflectors:
            for p in (r.start, r.end):
                if not self.contains(p):
                    raise ConfigError(f"reflector endpoint {p} outside the room")
        for ap in self.ap_poses:
            if not self.contains(ap.position):
                raise ConfigError(f"AP position {ap.position} outside the room")

    def contains(self, point) -> bool:
        x, y = point
        return -_EPS <= x <= self.width + _EPS and -_EPS <= y <= self.height + _EPS

    def translated(self, dx: float, dy: float) -> "Environment":
        """Shift every object by non-negative ``(dx, dy)``, growing the room to fit."""
        if dx < 0 or dy < 0:
            raise ValueError("translation offsets must be non-negative")
        shift = lambda p: (p[0] + dx, p[1] + dy)  # noqa: E731
        return Environment(
            width=self.width + dx,
            height=self.height + dy,
            reflectors=tuple(
                Reflector(shift(r.start), shift(r.end), r.gamma) for r in self.reflectors
            ),
            ap_poses=tuple(ApPose(shift(a.position), a.orientation) for a in self.ap_poses),
            rng_seed=self.rng_seed,
        )


def room_walls(width: float, height: float, gamma: float = 1.0) -> list[Reflector]:
    """The four walls of a ``width`` x ``height`` room as reflectors."""
    corners = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)]
    return [Reflector(corners[i], corners[(i + 1) % 4], gamma) for i in range(4)]


def wall_center_aps(width: float, height: float) -> list[ApPose]:
    """One AP at the middle of each wall, broadside facing into the room."""
    return [
        ApPose((width / 2, 0.0), 0.0),
        ApPose((width, height / 2), -math.pi / 2),
        ApPose((width / 2, height), math.pi),
        ApPose((0.0, height / 2), math.pi / 2),
    ]


def wrap_angle(angle: float) -> float:
    """Wrap to ``(-pi, pi]``."""
    wrapped = math.remainder(angle, 2 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def fold_to_front(angle: float) -> float:
    """Map an angle behind a linear array onto its mirror in front.

    A uniform linear array cannot tell ``theta`` from ``pi - theta``, so
    this loses nothing for transmit steering.
    """
    angle = wrap_angle(angle)
    if angle > math.pi / 2:
        return math.pi - angle
    if angle < -math.pi / 2:
        return -math.pi - angle
    return angle


def bearing_to(pose: ApPose, point) -> float:
    """Angle of the ``pose -> point`` direction in the array's local frame."""
    dx = point[0] - pose.position[0]
    dy = point[1] - pose.position[1]
    if math.hypot(dx, dy) <= _EPS:
        raise DegenerateGeometryError("point coincides with the array position")
    return wrap_angle(math.atan2(dx, dy) - pose.orientation)


def direction(world_angle: float) -> np.ndarray:
    """Unit vector of a world bearing under the broadside convention."""
    return np.array([math.sin(world_angle), math.cos(world_angle)])


def mirror_point(point, reflector: Reflector) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    a = np.asarray(reflector.start, dtype=float)
    u = np.asarray(reflector.end, dtype=float) - a
    u /= np.linalg.norm(u)
    rel = p - a
    return a + 2 * (rel @ u) * u - rel


def _segment_hit(p, q, reflector: Reflector):
    """Intersection of segment ``p -> q`` with ``reflector``, or None.

    Grazing contact at either end of ``p -> q`` does not count.
    """
    a = np.asarray(reflector.start, dtype=float)
    u = np.asarray(reflector.end, dtype=float) - a
    r = q - p
    denom = r[0] * u[1] - r[1] * u[0]
    if abs(denom) <= _EPS:
        return None
    ap = a - p
    s = (ap[0] * u[1] - ap[1] * u[0]) / denom  # along p -> q
    t = (ap[0] * r[1] - ap[1] * r[0]) / denom  # along the reflector
    seg = np.linalg.norm(r)
    if not (_EPS / seg < s < 1 - _EPS / seg):
        return None
    if not (-_EPS <= t <= 1 + _EPS):
        return None
    return p + s * r


def _trace(user, ap, sequence: Sequence[int], reflectors: Sequence[Reflector]):
    """Reflection points for one reflector sequence, or None if invalid."""
    images = [np.asarray(user, dtype=float)]
    for idx in sequence:
        images.append(mirror_point(images[-1], reflectors[idx]))
    target = np.asarray(ap, dtype=float)
    points = []
    for k in range(len(sequence), 0, -1):
        hit = _segment_hit(images[k], target, reflectors[sequence[k - 1]])
        if hit is None:
            return None
        points.append(hit)
        target = hit
    points.reverse()
    return points, float(np.linalg.norm(images[-1] - np.asarray(ap, dtype=float)))


def enumerate_paths(
    env: Environment,
    user_pos,
    ap_index: int,
    max_order: int = 1,
    user_orientation: float = 0.0,
) -> list[PathComponent]:
    """All specular paths from the user to AP ``ap_index`` up to ``max_order`` bounces.

    Amplitude gain is ``prod(gamma) / length``. The result is sorted by
    ascending length, so the direct path comes first. Departure angles
    behind the user array are folded to the front; arrivals behind the AP
    array are dropped.
    """
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    if not env.contains(user_pos):
        raise ConfigError(f"user position {tuple(user_pos)} outside the room")
    ap = env.ap_poses[ap_index]
    user = np.asarray(user_pos, dtype=float)
    ap_xy = np.asarray(ap.position, dtype=float)
    direct = float(np.linalg.norm(ap_xy - user))
    if direct <= _EPS:
        raise DegenerateGeometryError("user coincides with the AP position")

    user_pose = ApPose((float(user[0]), float(user[1])), user_orientation)
    paths = []
    n_ref = len(env.reflectors)
    for order in range(max_order + 1):
        for seq in itertools.product(range(n_ref), repeat=order):
            if any(seq[i] == seq[i + 1] for i in range(order - 1)):
                continue
            if order == 0:
                points, length = [], direct
            else:
                traced = _trace(user, ap_xy, seq, env.reflectors)
                if traced is None:
                    continue
                points, length = traced
            first = points[0] if points else ap_xy
            last = points[-1] if points else user
            aoa = bearing_to(ap, last)
            if abs(aoa) > math.pi / 2 + _EPS:
                logger.warning(
                    "dropping order-%d path arriving at %.1f deg behind AP %d",
                    order, math.degrees(aoa), ap_index,
                )
                continue
            gain = math.prod(env.reflectors[i].gamma for i in seq) / length
            if gain <= 0:
                continue
            paths.append(
                PathComponent(
                    length=length,
                    aod=fold_to_front(bearing_to(user_pose, first)),
                    aoa=max(-math.pi / 2, min(math.pi / 2, aoa)),
                    gain=gain,
                    order=order,
                    points=tuple((float(p[0]), float(p[1])) for p in points),
                    reflectors=tuple(seq),
                )
            )
    paths.sort(key=lambda p: (p.length, p.order))
    return paths
