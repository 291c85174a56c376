"""Interior and boundary quadrature rules over the preset domains.

Interior rules are tensor Gauss-Legendre per patch: plain tensor products on
rectangles (with nodes outside the domain dropped, equivalent to the
zero-weight masking of the reference sampling scheme) and polar tensor rules
with the Jacobian r folded into the weights for disk/sector patches.
Boundary rules place Gauss-Legendre nodes on straight edges; circular arcs
use either Gauss-Legendre in angle, a uniform left-Riemann rule (full circle
only), or a chord polyline with midpoint nodes (sector arc).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Arc, PolarPatch, RectPatch, Segment


@dataclass(frozen=True)
class QuadRule:
    nodes: np.ndarray    # (P, 2)
    weights: np.ndarray  # (P,)
    region: str


@dataclass(frozen=True)
class BoundaryRule:
    nodes: np.ndarray     # (P, 2)
    weights: np.ndarray   # (P,) arc-length weights
    tangents: np.ndarray  # (P, 2) unit tangents
    normals: np.ndarray   # (P, 2) unit outward normals
    tags: np.ndarray      # (P,) per-node edge tag
    region: str


def gauss_legendre_1d(n, a=-1.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b] (exact to degree 2n-1)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _rect_rule(patch, nx, ny):
    gx, wx = gauss_legendre_1d(nx, patch.x0, patch.x1)
    gy, wy = gauss_legendre_1d(ny, patch.y0, patch.y1)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    W = np.outer(wx, wy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts, W.ravel()


def _polar_rule(patch, nr, nth):
    gr, wr = gauss_legendre_1d(nr, patch.r0, patch.r1)
    gt, wt = gauss_legendre_1d(nth, patch.th0, patch.th1)
    R, T = np.meshgrid(gr, gt, indexing="ij")
    W = np.outer(wr * gr, wt)  # Jacobian r
    cx, cy = patch.center
    pts = np.column_stack([cx + (R * np.cos(T)).ravel(), cy + (R * np.sin(T)).ravel()])
    return pts, W.ravel()


def interior_rule(domain, nx, ny=None):
    """Union tensor rule over the domain's patches (nx by ny per patch).

    Rectangle patches flagged for masking keep only nodes strictly inside
    the domain; their weights are unchanged, so the total weight converges
    to the patch's in-domain area as the rule is refined.
    """
    if ny is None:
        ny = nx
    all_pts, all_w = [], []
    for patch in domain.patches:
        if isinstance(patch, RectPatch):
            pts, w = _rect_rule(patch, nx, ny)
            if patch.mask:
                keep = domain.contains(pts)
                pts, w = pts[keep], w[keep]
        elif isinstance(patch, PolarPatch):
            pts, w = _polar_rule(patch, nx, ny)
        else:
            raise TypeError(f"unknown patch type {type(patch).__name__}")
        all_pts.append(pts)
        all_w.append(w)
    return QuadRule(
        nodes=np.concatenate(all_pts),
        weights=np.concatenate(all_w),
        region=f"interior:{domain.name}",
    )


def _segment_rule(seg, n):
    p0 = np.asarray(seg.p0, dtype=float)
    p1 = np.asarray(seg.p1, dtype=float)
    length = float(np.hypot(*(p1 - p0)))
    t, w = gauss_legendre_1d(n, 0.0, 1.0)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    tan = (p1 - p0) / length
    tangents = np.tile(tan, (n, 1))
    normals = np.tile([tan[1], -tan[0]], (n, 1))
    return pts, w * length, tangents, normals


def _arc_nodes(arc, phis, weights):
    cx, cy = arc.center
    pts = np.column_stack(
        [cx + arc.radius * np.cos(phis), cy + arc.radius * np.sin(phis)]
    )
    tangents = np.column_stack([-np.sin(phis), np.cos(phis)])
    normals = np.column_stack([np.cos(phis), np.sin(phis)])
    return pts, weights, tangents, normals


def boundary_rule(domain, n_per_edge, circle_rule="gauss", arc_segments=256):
    """Boundary rule with per-node tangents, outward normals and edge tags.

    Straight edges get n_per_edge Gauss-Legendre nodes.  A full circle gets
    either Gauss-Legendre in angle ("gauss", n_per_edge nodes) or the uniform
    left-Riemann rule ("riemann").  A partial arc is replaced by a chord
    polyline of arc_segments pieces with one midpoint node each; tangents and
    normals come from the chords.
    """
    if n_per_edge < 1:
        raise ValueError(f"need n_per_edge >= 1, got {n_per_edge}")
    pts_l, w_l, tan_l, nor_l, tag_l = [], [], [], [], []
    for edge in domain.edges:
        if isinstance(edge, Segment):
            pts, w, tangents, normals = _segment_rule(edge, n_per_edge)
        elif isinstance(edge, Arc):
            full = abs((edge.th1 - edge.th0) - 2.0 * math.pi) < 1e-14
            if full:
                if circle_rule == "riemann":
                    phis = edge.th0 + 2.0 * math.pi * np.arange(n_per_edge) / n_per_edge
                    w = np.full(n_per_edge, 2.0 * math.pi * edge.radius / n_per_edge)
                elif circle_rule == "gauss":
                    phis, wphi = gauss_legendre_1d(n_per_edge, edge.th0, edge.th1)
                    w = wphi * edge.radius
                else:
                    raise ValueError(f"unknown circle_rule {circle_rule!r}")
                pts, w, tangents, normals = _arc_nodes(edge, phis, w)
            else:
                breaks = np.linspace(edge.th0, edge.th1, arc_segments + 1)
                cx, cy = edge.center
                corners = np.column_stack(
                    [cx + edge.radius * np.cos(breaks), cy + edge.radius * np.sin(breaks)]
                )
                chords = corners[1:] - corners[:-1]
                lengths = np.hypot(chords[:, 0], chords[:, 1])
                pts = 0.5 * (corners[1:] + corners[:-1])
                tangents = chords / lengths[:, None]
                normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
                w = lengths
        else:
            raise TypeError(f"unknown edge type {type(edge).__name__}")
        pts_l.append(pts)
        w_l.append(w)
        tan_l.append(tangents)
        nor_l.append(normals)
        tag_l.append(np.full(len(w), edge.tag, dtype=object))
    return BoundaryRule(
        nodes=np.concatenate(pts_l),
        weights=np.concatenate(w_l),
        tangents=np.concatenate(tan_l),
        normals=np.concatenate(nor_l),
        tags=np.concatenate(tag_l),
        region=f"boundary:{domain.name}",
    )


def integrate(values, rule):
    """Discrete integral sum(w_i * values_i) over the rule's nodes."""
    values = np.asarray(values)
    if values.shape[-1] != rule.weights.shape[0]:
        raise ValueError(
            f"value count {values.shape[-1]} != node count {rule.weights.shape[0]}"
        )
    return values @ rule.weights
