"""Domain presets, corner-local polar frames, and radial cutoff profiles.

A Domain bundles everything the quadrature builder needs: a decomposition of
the interior into convex patches (rectangles, possibly masked, or polar boxes)
and a list of boundary pieces (straight segments or circular arcs), plus the
list of corners eligible for singular enrichment.  Corners carry the interior
angle and the rotation of their local frame, chosen so theta = 0 lies along an
incident boundary edge and interior points see theta in (0, alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Corner:
    """A corner of the domain with its local polar frame.

    alpha is the interior angle; frame_rotation is the global polar angle of
    the local theta = 0 ray (along one incident edge, interior on the
    counterclockwise side).
    """

    vertex: tuple[float, float]
    alpha: float
    frame_rotation: float
    tag: str


@dataclass(frozen=True)
class Cutoff:
    """C^2 radial cutoff: 1 on [0, r0], 0 on [r1, inf), quintic blend between."""

    r0: float
    r1: float

    def __post_init__(self):
        if not 0.0 < self.r0 < self.r1:
            raise ValueError(f"need 0 < r0 < r1, got r0={self.r0}, r1={self.r1}")


@dataclass(frozen=True)
class RectPatch:
    """Axis-aligned rectangle; mask=True drops nodes outside the domain."""

    x0: float
    x1: float
    y0: float
    y1: float
    mask: bool = False


@dataclass(frozen=True)
class PolarPatch:
    """Polar box r in (r0, r1), theta in (th0, th1) about a center point."""

    center: tuple[float, float]
    r0: float
    r1: float
    th0: float
    th1: float


@dataclass(frozen=True)
class Segment:
    """Straight boundary edge from p0 to p1, interior on the left."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    tag: str


@dataclass(frozen=True)
class Arc:
    """Counterclockwise circular arc, interior on the left (inside)."""

    center: tuple[float, float]
    radius: float
    th0: float
    th1: float
    tag: str


@dataclass(frozen=True)
class Domain:
    name: str
    patches: tuple
    edges: tuple
    corners: tuple
    area: float

    def contains(self, pts):
        """Strict-interior predicate for an (n, 2) array of points."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.name == "unit_circle":
            return x * x + y * y < 1.0
        if self.name == "lshape":
            in_square = (np.abs(x) < 1.0) & (np.abs(y) < 1.0)
            removed = (x >= 0.0) & (y <= 0.0)
            return in_square & ~removed
        if self.name == "channel_cavity":
            in_channel = (np.abs(x) < 2.0) & (y > 0.0) & (y < 2.0)
            in_cavity = (y <= 0.0) & (y > -3.0 * (x + 1.0)) & (y > 3.0 * (x - 1.0))
            mouth = (y == 0.0) & (np.abs(x) < 1.0)
            return in_channel | (in_cavity & (y < 0.0)) | mouth
        if self.name == "sector":
            r = np.hypot(x, y)
            th = np.mod(np.arctan2(y, x), TWO_PI)
            return (r > 0.0) & (r < 1.0) & (th > 0.0) & (th < SECTOR_ANGLE)
        if self.name == "wedge":
            return (y < 0.0) & (y > -3.0 * (x + 1.0)) & (y > 3.0 * (x - 1.0))
        raise ValueError(f"unknown domain {self.name!r}")


SECTOR_ANGLE = math.pi + math.atan(3.0)  # = pi + arccos(1/sqrt(10))
NOTCH_ANGLE = math.pi + math.atan(3.0)
TIP_ANGLE = 2.0 * math.atan(1.0 / 3.0)


def make_preset_domain(name):
    """Build one of the preset domains by name.

    Presets: unit_circle, lshape (square minus a quadrant, reentrant corner
    at the origin), channel_cavity ((-2,2)x(0,2) channel over a triangular
    cavity with vertices (-1,0), (1,0), (0,-3)), sector (unit radius, angle
    pi + arctan 3), wedge (the cavity triangle alone).
    """
    if name == "unit_circle":
        return Domain(
            name=name,
            patches=(PolarPatch((0.0, 0.0), 0.0, 1.0, 0.0, TWO_PI),),
            edges=(Arc((0.0, 0.0), 1.0, 0.0, TWO_PI, "circle"),),
            corners=(),
            area=math.pi,
        )
    if name == "lshape":
        # (-1,1)^2 minus the closed quadrant [0,1]x[-1,0]; reentrant corner
        # at the origin with the theta = 0 ray along +x.
        return Domain(
            name=name,
            patches=(
                RectPatch(-1.0, 0.0, -1.0, 0.0),
                RectPatch(-1.0, 0.0, 0.0, 1.0),
                RectPatch(0.0, 1.0, 0.0, 1.0),
            ),
            edges=(
                Segment((0.0, 0.0), (1.0, 0.0), "notch_top"),
                Segment((1.0, 0.0), (1.0, 1.0), "right"),
                Segment((1.0, 1.0), (-1.0, 1.0), "top"),
                Segment((-1.0, 1.0), (-1.0, -1.0), "left"),
                Segment((-1.0, -1.0), (0.0, -1.0), "bottom"),
                Segment((0.0, -1.0), (0.0, 0.0), "notch_side"),
            ),
            corners=(Corner((0.0, 0.0), 1.5 * math.pi, 0.0, "reentrant"),),
            area=3.0,
        )
    if name == "channel_cavity":
        at3 = math.atan(3.0)
        return Domain(
            name=name,
            patches=(
                RectPatch(-2.0, 0.0, 0.0, 2.0),
                RectPatch(0.0, 2.0, 0.0, 2.0),
                RectPatch(-1.0, 1.0, -3.0, 0.0, mask=True),
            ),
            edges=(
                Segment((-2.0, 0.0), (-1.0, 0.0), "wall"),
                Segment((-1.0, 0.0), (0.0, -3.0), "wall"),
                Segment((0.0, -3.0), (1.0, 0.0), "wall"),
                Segment((1.0, 0.0), (2.0, 0.0), "wall"),
                Segment((2.0, 0.0), (2.0, 2.0), "outlet"),
                Segment((2.0, 2.0), (-2.0, 2.0), "wall"),
                Segment((-2.0, 2.0), (-2.0, 0.0), "inlet"),
            ),
            corners=(
                Corner((1.0, 0.0), NOTCH_ANGLE, 0.0, "notch_right"),
                Corner((-1.0, 0.0), NOTCH_ANGLE, -at3, "notch_left"),
                Corner((0.0, -3.0), TIP_ANGLE, at3, "tip"),
            ),
            area=11.0,
        )
    if name == "sector":
        end = (math.cos(SECTOR_ANGLE), math.sin(SECTOR_ANGLE))
        return Domain(
            name=name,
            patches=(PolarPatch((0.0, 0.0), 0.0, 1.0, 0.0, SECTOR_ANGLE),),
            edges=(
                Segment((0.0, 0.0), (1.0, 0.0), "radius0"),
                Arc((0.0, 0.0), 1.0, 0.0, SECTOR_ANGLE, "arc"),
                Segment(end, (0.0, 0.0), "radius1"),
            ),
            corners=(Corner((0.0, 0.0), SECTOR_ANGLE, 0.0, "origin"),),
            area=0.5 * SECTOR_ANGLE,
        )
    if name == "wedge":
        at3 = math.atan(3.0)
        return Domain(
            name=name,
            patches=(RectPatch(-1.0, 1.0, -3.0, 0.0, mask=True),),
            edges=(
                Segment((1.0, 0.0), (-1.0, 0.0), "top"),
                Segment((-1.0, 0.0), (0.0, -3.0), "left"),
                Segment((0.0, -3.0), (1.0, 0.0), "right"),
            ),
            corners=(Corner((0.0, -3.0), TIP_ANGLE, at3, "tip"),),
            area=3.0,
        )
    raise ValueError(f"unknown domain preset {name!r}")


def local_polar(pts, corner):
    """Corner-local polar coordinates (r, theta) of points.

    theta is the global polar angle minus the corner's frame rotation,
    wrapped into [0, 2pi); at the vertex itself theta = 0 by convention.
    Points a hair clockwise of the theta = 0 edge (roundoff) come out as
    tiny negative values rather than near-2pi, which keeps angular factors
    continuous across the edge.
    """
    pts = np.asarray(pts, dtype=float)
    dx = pts[..., 0] - corner.vertex[0]
    dy = pts[..., 1] - corner.vertex[1]
    r = np.hypot(dx, dy)
    th = np.mod(np.arctan2(dy, dx) - corner.frame_rotation, TWO_PI)
    # Fold the exterior gap: angles beyond the midpoint of the excluded
    # sector belong to the theta <= 0 side of the frame.
    cut = corner.alpha + 0.5 * (TWO_PI - corner.alpha)
    th = np.where(th > cut, th - TWO_PI, th)
    th = np.where(r == 0.0, 0.0, th)
    return r, th


def cutoff_eval(r, cut):
    """Evaluate the quintic-smoothstep cutoff: returns (chi, dchi, d2chi).

    chi = 1 for r <= r0, chi = 0 for r >= r1, and in between
    chi = 1 - (6 t^5 - 15 t^4 + 10 t^3) with t = (r - r0)/(r1 - r0),
    which matches value and two derivatives at both ends.
    """
    r = np.asarray(r, dtype=float)
    h = cut.r1 - cut.r0
    t = np.clip((r - cut.r0) / h, 0.0, 1.0)
    s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    ds = 30.0 * t * t * (1.0 - t) ** 2
    d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    chi = 1.0 - s
    dchi = -ds / h
    d2chi = -d2s / (h * h)
    return chi, dchi, d2chi
