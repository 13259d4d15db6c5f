"""Similarity transform ``Y = s * R(theta) * X + T`` between fingerprint frames.

Coordinates are image coordinates (x = column, y = row downward).  ``theta``
is stored in degrees and only converted to radians for trig evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Legal parameter box, inclusive on both ends.
S_RANGE = (0.97, 1.2)
THETA_RANGE = (-30.0, 30.0)
TX_RANGE = (-114.0, 152.0)
TY_RANGE = (-128.0, 156.0)

PARAM_RANGES = {"s": S_RANGE, "theta": THETA_RANGE, "tx": TX_RANGE, "ty": TY_RANGE}


class SingularTransformError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    s: float = 1.0
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def matrix(self) -> np.ndarray:
        """The 2x2 linear part ``s * R``."""
        rad = math.radians(self.theta)
        c, sn = math.cos(rad), math.sin(rad)
        return self.s * np.array([[c, -sn], [sn, c]])

    def apply(self, x: float, y: float) -> tuple[float, float]:
        rad = math.radians(self.theta)
        c, sn = self.s * math.cos(rad), self.s * math.sin(rad)
        return (c * x - sn * y + self.tx, sn * x + c * y + self.ty)

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        """Map an ``(n, 2)`` array of ``(x, y)`` points."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return pts @ self.matrix().T + np.array([self.tx, self.ty])

    def apply_round(self, x: int, y: int) -> tuple[int, int]:
        fx, fy = self.apply(x, y)
        return round_half_away(fx), round_half_away(fy)

    def apply_round_array(self, pts: np.ndarray) -> np.ndarray:
        return round_half_away_array(self.apply_array(pts)).astype(np.int64)

    def map_angle(self, angle: float) -> float:
        """Transport a minutia direction (degrees, counter-clockwise positive).

        ``R`` turns image-space vectors clockwise on screen because y points
        down, so a counter-clockwise-positive angle decreases by ``theta``.
        """
        return wrap_angle(angle - self.theta)

    def inverse(self) -> "SimilarityTransform":
        return invert(self)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other``: apply ``other`` first."""
        s = self.s * other.s
        theta = self.theta + other.theta
        tx, ty = self.apply(other.tx, other.ty)
        return SimilarityTransform(s, theta, tx, ty)

    def to_text(self) -> str:
        return f"TRANSFORM v1 {self.s:.6f} {self.theta:.6f} {self.tx:.6f} {self.ty:.6f}"

    @classmethod
    def from_text(cls, text: str) -> "SimilarityTransform":
        parts = text.split()
        if len(parts) != 6 or parts[0] != "TRANSFORM" or parts[1] != "v1":
            raise ValueError(f"not a TRANSFORM v1 record: {text!r}")
        return cls(*(float(p) for p in parts[2:]))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.s, self.theta, self.tx, self.ty)


IDENTITY = SimilarityTransform()


def round_half_away(v: float) -> int:
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def round_half_away_array(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def wrap_angle(a: float) -> float:
    """Wrap degrees into (-180, 180]."""
    a = math.fmod(a, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def angle_diff(a, b):
    """Absolute angular difference folded to [0, 180]; works on arrays."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b), 360.0))
    return np.minimum(d, 360.0 - d)


def invert(t: SimilarityTransform) -> SimilarityTransform:
    if t.s == 0:
        raise SingularTransformError("scale factor is zero")
    s = 1.0 / t.s
    inv = SimilarityTransform(s, -t.theta, 0.0, 0.0)
    tx, ty = inv.apply(-t.tx, -t.ty)
    return SimilarityTransform(s, -t.theta, tx, ty)


def validate_range(t: SimilarityTransform) -> str | None:
    """Return the first parameter outside the legal box, or ``None`` if all fit."""
    for name, (lo, hi) in PARAM_RANGES.items():
        v = getattr(t, name)
        if not lo <= v <= hi:
            return name
    return None


def clamp(t: SimilarityTransform) -> SimilarityTransform:
    vals = {}
    for name, (lo, hi) in PARAM_RANGES.items():
        vals[name] = min(max(getattr(t, name), lo), hi)
    return SimilarityTransform(**vals)


def exact_two_point(
    a: Sequence[float], b: Sequence[float], c: Sequence[float], d: Sequence[float]
) -> SimilarityTransform:
    """The unique similarity transform taking ``a -> c`` and ``b -> d``."""
    abx, aby = b[0] - a[0], b[1] - a[1]
    cdx, cdy = d[0] - c[0], d[1] - c[1]
    ab = math.hypot(abx, aby)
    if ab == 0:
        raise SingularTransformError("coincident source points")
    s = math.hypot(cdx, cdy) / ab
    theta = wrap_angle(math.degrees(math.atan2(cdy, cdx) - math.atan2(aby, abx)))
    rot = SimilarityTransform(s, theta, 0.0, 0.0)
    rx, ry = rot.apply(a[0], a[1])
    return SimilarityTransform(s, theta, c[0] - rx, c[1] - ry)
