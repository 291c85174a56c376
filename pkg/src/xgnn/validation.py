"""Independent oracles: quadrature error tables, finite-difference PDE
residual probes, and brute-force gradient checks.

Everything here deliberately avoids the assembly pipeline it is used to
check: norms are recomputed from component bundles, PDE residuals come
from fourth-order finite differences of plain value callables, and
gradient deviations are central differences of a user-supplied closure.
"""

import math

import numpy as np

from .forms import als_eval, build_channels, channel_trace
from .geometry import PolarPatch, RectPatch
from .solver import component_errors

_FLOOR = 1e-14


def domain_bbox(domain):
    """Axis-aligned bounding box (x0, x1, y0, y1) over all patches."""
    xs, ys = [], []
    for patch in domain.patches:
        if isinstance(patch, RectPatch):
            xs += [patch.x0, patch.x1]
            ys += [patch.y0, patch.y1]
        elif isinstance(patch, PolarPatch):
            cx, cy = patch.center
            xs += [cx - patch.r1, cx + patch.r1]
            ys += [cy - patch.r1, cy + patch.r1]
    return min(xs), max(xs), min(ys), max(ys)


def domain_diameter(domain):
    x0, x1, y0, y1 = domain_bbox(domain)
    return math.hypot(x1 - x0, y1 - y0)


def probe_points(domain, count, margin=0.0, rng=None):
    """Uniform interior sample, rejecting points within margin of a corner."""
    rng = np.random.default_rng(rng)
    x0, x1, y0, y1 = domain_bbox(domain)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise RuntimeError(
                f"probe sampling stalled on {domain.name!r} with margin {margin}"
            )
        n = max(count, 64)
        pts = np.column_stack(
            [rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)]
        )
        keep = domain.contains(pts)
        for corner in domain.corners:
            d = np.hypot(pts[:, 0] - corner.vertex[0], pts[:, 1] - corner.vertex[1])
            keep &= d >= margin
        out.extend(pts[keep])
    return np.asarray(out[:count])


# ---------------------------------------------------------------------------
# error tables


def error_table(u_eval, exact, spec, fine_spec=None):
    """L2/H1/H2/energy errors of u against an exact solution.

    u_eval(pts) returns component bundles; exact maps component names to
    bundle callables.  Norms are taken on the spec's own rules; passing a
    second, finer spec adds a "fine" sub-table for quadrature
    cross-checking.
    """

    def table(sp):
        channels = build_channels(sp)
        pressure = "p" if sp.problem == "stokes" else None
        ui = u_eval(sp.interior.nodes)
        ei = {name: fn(sp.interior.nodes) for name, fn in exact.items()}
        l2, h1, h2 = component_errors(ui, ei, sp.interior, pressure=pressure)
        ub = u_eval(sp.boundary.nodes)
        eb = {name: fn(sp.boundary.nodes) for name, fn in exact.items()}
        diff = {}
        for ch in channels:
            if ch.kind == "interior":
                diff[ch.name] = channel_trace(ch, ui) - channel_trace(ch, ei)
            else:
                diff[ch.name] = channel_trace(ch, ub) - channel_trace(ch, eb)
        energy = math.sqrt(max(als_eval(sp, diff, diff, channels), 0.0))
        return {"l2": l2, "h1": h1, "h2": h2, "energy": energy}

    out = table(spec)
    if fine_spec is not None:
        out["fine"] = table(fine_spec)
    return out


def agrees_to_digits(a, b, digits):
    """True when two positive numbers agree to the given significant digits."""
    if a == b:
        return True
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return True
    return abs(a - b) / scale < 0.5 * 10.0 ** (-digits + 1)


# ---------------------------------------------------------------------------
# finite-difference PDE residual probes

# fourth-order central stencils
_D1 = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))  # / 12h
_D2 = ((-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0))  # / 12h^2


def _values(fn, pts):
    v = fn(pts)
    return np.asarray(getattr(v, "val", v), dtype=float)


def _fd_derivs(fn, pts, h):
    """dx, dy, dxx, dyy of a value callable by fourth-order differences."""
    pts = np.asarray(pts, dtype=float)
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    dx = np.zeros(len(pts))
    dy = np.zeros(len(pts))
    for off, c in _D1:
        dx += c * _values(fn, pts + off * ex)
        dy += c * _values(fn, pts + off * ey)
    dx /= 12.0 * h
    dy /= 12.0 * h
    dxx = np.zeros(len(pts))
    dyy = np.zeros(len(pts))
    for off, c in _D2:
        dxx += c * _values(fn, pts + off * ex)
        dyy += c * _values(fn, pts + off * ey)
    dxx /= 12.0 * h * h
    dyy /= 12.0 * h * h
    return dx, dy, dxx, dyy


def pde_residual_probe(fields, problem, pts, h, source=None):
    """Max relative strong-form residual at probe points, one entry per
    equation, using fourth-order finite differences of the value callables.

    fields maps component names to callables returning values (or bundles,
    in which case only .val is used).  source optionally supplies the
    right-hand side callables; omitted entries are zero.  The residual at
    each point is scaled by the local field magnitude max(|u|, |p|).
    """
    pts = np.asarray(pts, dtype=float)
    src = source or {}

    def rhs(name):
        fn = src.get(name)
        return _values(fn, pts) if fn is not None else 0.0

    if problem == "poisson":
        _, _, uxx, uyy = _fd_derivs(fields["u"], pts, h)
        resid = np.abs(-(uxx + uyy) - rhs("laplacian"))
        scale = np.maximum(np.abs(_values(fields["u"], pts)), _FLOOR)
        return {"laplacian": float(np.max(resid / scale))}
    if problem != "stokes":
        raise ValueError(f"unknown problem {problem!r}")
    u1x, u1y, u1xx, u1yy = _fd_derivs(fields["u1"], pts, h)
    u2x, u2y, u2xx, u2yy = _fd_derivs(fields["u2"], pts, h)
    px, py, _, _ = _fd_derivs(fields["p"], pts, h)
    scale = np.maximum.reduce(
        [
            np.abs(_values(fields["u1"], pts)),
            np.abs(_values(fields["u2"], pts)),
            np.abs(_values(fields["p"], pts)),
            np.full(len(pts), _FLOOR),
        ]
    )
    mx = np.abs(-(u1xx + u1yy) + px - rhs("momentum_x"))
    my = np.abs(-(u2xx + u2yy) + py - rhs("momentum_y"))
    dv = np.abs(u1x + u2y - rhs("divergence"))
    return {
        "momentum_x": float(np.max(mx / scale)),
        "momentum_y": float(np.max(my / scale)),
        "divergence": float(np.max(dv / scale)),
    }


# ---------------------------------------------------------------------------
# gradient checks


def fd_check(objective, x0, grad, h=1e-5):
    """Max relative deviation of an analytic gradient from central
    differences of the objective, componentwise."""
    x0 = np.asarray(x0, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != x0.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match {x0.shape}")
    worst = 0.0
    for k in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp[k] += h
        xm[k] -= h
        fd = (objective(xp) - objective(xm)) / (2.0 * h)
        scale = max(abs(fd), abs(grad[k]), 1e-6)
        worst = max(worst, abs(fd - grad[k]) / scale)
    return worst


def gradient_deviation(problem, seed, h=1e-5, width=4):
    """Worst relative deviation between the analytic gradient of the
    normalized weak-residual objective and central finite differences.

    One random configuration per call: random network parameters, random
    linear coefficients, random residual data, and a trainable corner
    exponent (complex for the Stokes case). Packs W, b, c and the
    exponent into one vector so every gradient path is exercised.
    """
    import dataclasses

    from .fields import init_network
    from .forms import FormSpec
    from .geometry import Cutoff, make_preset_domain
    from .knowledge import KnowledgeTerm
    from .quadrature import boundary_rule, interior_rule
    from .solver import assemble_block_system, objective_and_grads

    rng = np.random.default_rng(seed)
    if problem == "poisson":
        dom = make_preset_domain("lshape")
        spec = FormSpec(
            "poisson", dom, interior_rule(dom, 8), boundary_rule(dom, 5),
            beta=1.0, delta=50.0,
        )
        corner = dom.corners[0]
        term = KnowledgeTerm(
            "poisson_corner",
            complex(rng.uniform(0.4, 0.9)),
            corner,
            trainable=True,
        )
        mu_dofs = 1
    elif problem == "stokes":
        dom = make_preset_domain("wedge")
        spec = FormSpec(
            "stokes", dom, interior_rule(dom, 8), boundary_rule(dom, 5),
            delta=20.0,
        )
        corner = dom.corners[0]
        term = KnowledgeTerm(
            "stokes_moffatt",
            complex(rng.uniform(7.0, 8.0), rng.uniform(3.0, 3.8)),
            corner,
            cutoff=Cutoff(2.0, 2.75),
            trainable=True,
        )
        mu_dofs = 2
    else:
        raise ValueError(f"unknown problem tag {problem!r}")

    channels = build_channels(spec)
    rho = {ch.name: rng.normal(size=len(ch.weight)) for ch in channels}
    field = init_network(width, 1, 1.0, seed=int(rng.integers(1 << 30)))
    ncomp = len(spec.components)
    c = rng.normal(size=(ncomp, width))
    d = rng.normal(size=1)
    terms = [term]

    def unpack(x):
        W = x[: 2 * width].reshape(2, width)
        b = x[2 * width : 3 * width]
        c2 = x[3 * width : (3 + ncomp) * width].reshape(ncomp, width)
        re = x[(3 + ncomp) * width]
        im = x[(3 + ncomp) * width + 1] if mu_dofs == 2 else term.mu.imag
        f2 = dataclasses.replace(field, weights=[W.copy()], biases=[b.copy()])
        t2 = [dataclasses.replace(term, mu=complex(re, im))]
        return f2, c2, t2

    def objective(x):
        f2, c2, t2 = unpack(x)
        A, F, cache = assemble_block_system(spec, channels, rho, f2, t2)
        return objective_and_grads(channels, A, F, cache, c2, d)[0]

    x0 = np.concatenate(
        [
            field.weights[0].ravel(),
            field.biases[0],
            c.ravel(),
            [term.mu.real],
            [term.mu.imag] if mu_dofs == 2 else [],
        ]
    )
    A, F, cache = assemble_block_system(
        spec, channels, rho, field, terms, with_dmu=True
    )
    _, grads = objective_and_grads(
        channels, A, F, cache, c, d, grads=("W", "b", "c", "mu")
    )
    g_mu = [grads["mu"][0]["re"]]
    if mu_dofs == 2:
        g_mu.append(grads["mu"][0]["im"])
    g = np.concatenate(
        [grads["W"][0].ravel(), grads["b"][0], grads["c"].ravel(), g_mu]
    )
    return fd_check(objective, x0, g, h=h)
