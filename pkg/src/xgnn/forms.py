"""Weighted least-squares variational forms for Poisson and Stokes.

The bilinear form a_LS and load functional F_LS are assembled from
"channels": each channel is one L2-type term of the least-squares
functional, carrying its quadrature weights (including the squared corner
weight r^(2 beta) on top-order derivative terms and the boundary penalty
delta) and the linear map from component derivative bundles to the scalar
trace it measures.  Poisson uses the interior Laplacian channel plus
boundary value (and, for the H^(3/2) surrogate, tangential derivative)
channels; Stokes uses two momentum channels, the divergence value and
divergence gradient channels (the H^1_beta residual norm of div u), and
per-component boundary channels.  Pressure enters only through its
gradient, realizing the L2/R quotient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import local_polar

POISSON_COMPONENTS = ("u",)
STOKES_COMPONENTS = ("u1", "u2", "p")


def corner_weight(corners, beta, pts):
    """Product of r_i^beta_i over the weighted corners at the given points.

    beta maps corner tag to exponent; tags absent from beta contribute
    weight 1 (exponent 0).  A scalar beta applies to every corner.
    """
    pts = np.asarray(pts, dtype=float)
    w = np.ones(pts.shape[0])
    for corner in corners:
        b = beta if np.isscalar(beta) else beta.get(corner.tag, 0.0)
        if b == 0.0:
            continue
        r, _ = local_polar(pts, corner)
        w = w * r**b
    return w


@dataclass(frozen=True)
class Channel:
    """One least-squares term: trace coefficients, weights, and location."""

    name: str
    kind: str       # "interior" | "boundary"
    weight: np.ndarray
    coeffs: dict    # component -> {deriv key -> scalar or per-node array}


@dataclass(frozen=True)
class FormSpec:
    """Problem tag, weights and rules defining a_LS and F_LS.

    beta maps corner tags to weight exponents (scalar = all corners);
    delta is the boundary penalty; s_b in {0, 1} selects the boundary norm
    surrogate (1 adds the weighted tangential-derivative term).
    """

    problem: str
    domain: object
    interior: object   # QuadRule
    boundary: object   # BoundaryRule
    beta: object = 0.0
    delta: float = 1.0
    s_b: int = 1
    corners: tuple = None  # defaults to the domain's corners

    def __post_init__(self):
        if self.problem not in ("poisson", "stokes"):
            raise ValueError(f"unknown problem tag {self.problem!r}")
        if self.s_b not in (0, 1):
            raise ValueError(f"s_b must be 0 or 1, got {self.s_b}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.corners is None:
            object.__setattr__(self, "corners", tuple(self.domain.corners))

    @property
    def components(self):
        return POISSON_COMPONENTS if self.problem == "poisson" else STOKES_COMPONENTS

    def interior_corner_weight(self):
        return corner_weight(self.corners, self.beta, self.interior.nodes)

    def boundary_corner_weight(self):
        return corner_weight(self.corners, self.beta, self.boundary.nodes)


def build_channels(spec):
    """The channel list realizing a_LS for the spec's problem."""
    wb_int = spec.interior_corner_weight() ** 2
    w_int = spec.interior.weights
    w_bnd = spec.boundary.weights
    t1 = spec.boundary.tangents[:, 0]
    t2 = spec.boundary.tangents[:, 1]
    chans = []
    if spec.problem == "poisson":
        chans.append(
            Channel("laplacian", "interior", w_int * wb_int, {"u": {"dxx": -1.0, "dyy": -1.0}})
        )
        chans.append(
            Channel("bnd_value", "boundary", spec.delta * w_bnd, {"u": {"val": 1.0}})
        )
        if spec.s_b == 1:
            wb_bnd = spec.boundary_corner_weight() ** 2
            chans.append(
                Channel(
                    "bnd_tangent",
                    "boundary",
                    spec.delta * w_bnd * wb_bnd,
                    {"u": {"dx": t1, "dy": t2}},
                )
            )
        return chans
    # stokes
    chans.append(
        Channel(
            "momentum_x",
            "interior",
            w_int * wb_int,
            {"u1": {"dxx": -1.0, "dyy": -1.0}, "p": {"dx": 1.0}},
        )
    )
    chans.append(
        Channel(
            "momentum_y",
            "interior",
            w_int * wb_int,
            {"u2": {"dxx": -1.0, "dyy": -1.0}, "p": {"dy": 1.0}},
        )
    )
    chans.append(
        Channel("divergence", "interior", w_int, {"u1": {"dx": 1.0}, "u2": {"dy": 1.0}})
    )
    chans.append(
        Channel(
            "div_grad_x",
            "interior",
            w_int * wb_int,
            {"u1": {"dxx": 1.0}, "u2": {"dxy": 1.0}},
        )
    )
    chans.append(
        Channel(
            "div_grad_y",
            "interior",
            w_int * wb_int,
            {"u1": {"dxy": 1.0}, "u2": {"dyy": 1.0}},
        )
    )
    for comp in ("u1", "u2"):
        chans.append(
            Channel(f"bnd_{comp}", "boundary", spec.delta * w_bnd, {comp: {"val": 1.0}})
        )
    if spec.s_b == 1:
        wb_bnd = spec.boundary_corner_weight() ** 2
        for comp in ("u1", "u2"):
            chans.append(
                Channel(
                    f"bnd_{comp}_tangent",
                    "boundary",
                    spec.delta * w_bnd * wb_bnd,
                    {comp: {"dx": t1, "dy": t2}},
                )
            )
    return chans


def channel_trace(channel, bundles):
    """Apply a channel's coefficient map to component bundles.

    bundles maps component name to a DerivativeBundle evaluated at the
    channel's nodes (interior or boundary); missing components contribute
    nothing, so candidate columns that touch a single component can pass
    just that one.
    """
    out = 0.0
    for comp, kmap in channel.coeffs.items():
        b = bundles.get(comp)
        if b is None:
            continue
        for key, coef in kmap.items():
            out = out + coef * getattr(b, key)
    if np.isscalar(out):
        out = np.zeros_like(channel.weight)
    return out


def field_trace(spec, channels, interior_bundles, boundary_bundles):
    """Channel traces of a field given its bundles at both node sets."""
    traces = {}
    for ch in channels:
        src = interior_bundles if ch.kind == "interior" else boundary_bundles
        traces[ch.name] = channel_trace(ch, src)
    return traces


def poisson_trace(interior_bundles, boundary_bundles, spec, channels=None):
    """ResidualTrace (channel name -> trace array) for a scalar field."""
    if spec.problem != "poisson":
        raise ValueError("poisson_trace needs a poisson FormSpec")
    channels = build_channels(spec) if channels is None else channels
    return field_trace(spec, channels, interior_bundles, boundary_bundles)


def stokes_trace(interior_bundles, boundary_bundles, spec, channels=None):
    """ResidualTrace for a velocity/pressure field triple."""
    if spec.problem != "stokes":
        raise ValueError("stokes_trace needs a stokes FormSpec")
    channels = build_channels(spec) if channels is None else channels
    return field_trace(spec, channels, interior_bundles, boundary_bundles)


def als_eval(spec, tr_u, tr_v, channels=None):
    """Bilinear form a_LS between two channel-trace dicts."""
    channels = build_channels(spec) if channels is None else channels
    total = 0.0
    for ch in channels:
        total += float(np.sum(ch.weight * tr_u[ch.name] * tr_v[ch.name]))
    return total


def fls_eval(spec, data_targets, tr_v, channels=None):
    """Load functional F_LS: data targets against a field's traces."""
    channels = build_channels(spec) if channels is None else channels
    total = 0.0
    for ch in channels:
        target = data_targets.get(ch.name)
        if target is None:
            continue
        total += float(np.sum(ch.weight * target * tr_v[ch.name]))
    return total


def weighted_inner(bu, bv, s, wbeta, rule):
    """Weighted Sobolev inner product of two bundles on one rule.

    s = 0: integral of wbeta^2 u v.  s = 1: unweighted L2 of values plus
    the weighted L2 of gradients, following the norm pattern where only
    top-order derivatives carry the corner weight.
    """
    if s not in (0, 1):
        raise ValueError(f"order s must be 0 or 1, got {s}")
    w = rule.weights
    if bu.val.shape != bv.val.shape or bu.val.shape[-1] != w.shape[0]:
        raise ValueError("trace length does not match the rule")
    wb2 = wbeta * wbeta
    if s == 0:
        return float(np.sum(w * wb2 * bu.val * bv.val))
    grad = bu.dx * bv.dx + bu.dy * bv.dy
    return float(np.sum(w * bu.val * bv.val) + np.sum(w * wb2 * grad))


@dataclass
class ProblemData:
    """Data fields of one boundary value problem.

    source(pts) returns interior target arrays keyed like the interior
    channels' data: poisson {"laplacian": f}; stokes {"momentum_x": f1,
    "momentum_y": f2, "divergence": g, "div_grad_x": gx, "div_grad_y": gy}.
    boundary(rule) returns {"value": g, "tangent": gt} for poisson or
    {"u1": ..., "u2": ..., "u1_tangent": ..., "u2_tangent": ...} for
    stokes, evaluated at the rule's nodes.  exact (optional) returns
    component bundles for error reporting.
    """

    problem: str
    source: object
    boundary: object
    exact: object = None


_BOUNDARY_KEY = {
    "bnd_value": "value",
    "bnd_tangent": "tangent",
    "bnd_u1": "u1",
    "bnd_u2": "u2",
    "bnd_u1_tangent": "u1_tangent",
    "bnd_u2_tangent": "u2_tangent",
}


def data_targets(spec, data, channels=None):
    """Per-channel target arrays for F_LS from a ProblemData."""
    channels = build_channels(spec) if channels is None else channels
    interior = data.source(spec.interior.nodes)
    bnd = data.boundary(spec.boundary)
    targets = {}
    for ch in channels:
        if ch.kind == "interior":
            if ch.name in interior:
                targets[ch.name] = np.asarray(interior[ch.name], dtype=float)
        else:
            key = _BOUNDARY_KEY[ch.name]
            if key in bnd:
                targets[ch.name] = np.asarray(bnd[key], dtype=float)
    return targets


def manufactured_poisson(exact_fn):
    """ProblemData whose targets are the exact field's own traces.

    exact_fn(pts) -> DerivativeBundle of the exact solution.  With data
    built this way F_LS(v) = a_LS(u_exact, v) holds discretely, so the
    energy identity and the error-bound property of eta are exact up to
    roundoff on any quadrature rule.
    """

    def source(pts):
        b = exact_fn(pts)
        return {"laplacian": -(b.dxx + b.dyy)}

    def boundary(rule):
        b = exact_fn(rule.nodes)
        gt = rule.tangents[:, 0] * b.dx + rule.tangents[:, 1] * b.dy
        return {"value": b.val, "tangent": gt}

    return ProblemData("poisson", source, boundary, exact={"u": exact_fn})


def manufactured_stokes(u1_fn, u2_fn, p_fn):
    """Stokes ProblemData from exact component bundle callables."""

    def source(pts):
        b1, b2, bp = u1_fn(pts), u2_fn(pts), p_fn(pts)
        return {
            "momentum_x": -(b1.dxx + b1.dyy) + bp.dx,
            "momentum_y": -(b2.dxx + b2.dyy) + bp.dy,
            "divergence": b1.dx + b2.dy,
            "div_grad_x": b1.dxx + b2.dxy,
            "div_grad_y": b1.dxy + b2.dyy,
        }

    def boundary(rule):
        b1, b2 = u1_fn(rule.nodes), u2_fn(rule.nodes)
        t1, t2 = rule.tangents[:, 0], rule.tangents[:, 1]
        return {
            "u1": b1.val,
            "u2": b2.val,
            "u1_tangent": t1 * b1.dx + t2 * b1.dy,
            "u2_tangent": t1 * b2.dx + t2 * b2.dy,
        }

    return ProblemData(
        "stokes", source, boundary, exact={"u1": u1_fn, "u2": u2_fn, "p": p_fn}
    )


def compatibility_defect(data, interior_rule_, boundary_rule_):
    """Signed mass defect: integral of g over the domain plus the outward
    boundary flux of the prescribed velocity."""
    source = data.source(interior_rule_.nodes)
    g = np.asarray(source.get("divergence", 0.0))
    if g.ndim == 0:
        g = np.full(len(interior_rule_.weights), float(g))
    bnd = data.boundary(boundary_rule_)
    un = (
        np.asarray(bnd["u1"]) * boundary_rule_.normals[:, 0]
        + np.asarray(bnd["u2"]) * boundary_rule_.normals[:, 1]
    )
    return float(interior_rule_.weights @ g + boundary_rule_.weights @ un)
