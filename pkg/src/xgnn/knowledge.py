"""Singular enrichment fields and operator-pencil exponent solvers.

Corner exponents come from the Laplace pencil (lambda_j = j pi / alpha,
closed form) or the biharmonic pencil sin^2((lambda-1) alpha) =
(lambda-1)^2 sin^2(alpha), whose two factored branches are solved by a real
scan plus damped complex Newton iteration.

Field families are evaluated in the corner-local wall frame (theta in
(0, alpha), theta = 0 along an incident edge).  The scalar family is the
harmonic r^mu sin(mu theta), hand-rolled through complex arithmetic.  The
Stokes families (no-slip ansatz, its complex-exponent form, and the
four-term Dirichlet basis) are generated symbolically once per family and
cached: each component's value, six spatial derivatives, and their
exponent derivatives are lambdified from the streamfunction, which keeps
the velocity exactly divergence-free and the pressure consistent with the
momentum balance.  The angular factors are built in the frame symmetric
about the bisector (the wall frame shifted by alpha/2), where the even
no-slip combination closes at both walls.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .fields import DERIV_KEYS, DerivativeBundle
from .geometry import cutoff_eval, local_polar

__all__ = [
    "PencilRoot",
    "KnowledgeTerm",
    "laplace_exponents",
    "biharmonic_exponents",
    "pencil_residual",
    "poisson_singular",
    "streamfunction_noslip",
    "stokes_noslip_eval",
    "stokes_moffatt_eval",
    "stokes_dirichlet_terms",
    "corner_columns",
    "apply_cutoff",
    "rotate_scalar_bundle",
]


@dataclass(frozen=True)
class PencilRoot:
    xi: float
    zeta: float
    alpha: float
    operator: str  # "laplace" | "biharmonic"
    branch: str = ""  # biharmonic only: "minus" | "plus"

    @property
    def value(self):
        return complex(self.xi, self.zeta)


@dataclass
class KnowledgeTerm:
    """One enrichment term attached to a corner.

    family selects the field construction; mu is the exponent (complex for
    the oscillatory family, otherwise effectively real); columns is 1 for
    the scalar and single-streamfunction families and 4 for the Dirichlet
    basis, whose coefficients are left to the linear solve.
    """

    family: str
    mu: complex
    corner: object
    cutoff: object = None
    trainable: bool = False

    FAMILIES = ("poisson_corner", "stokes_noslip", "stokes_moffatt", "stokes_dirichlet4")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "poisson_corner" and not self.mu.real > 0.0:
            raise ValueError(f"need Re(mu) > 0, got {self.mu}")

    @property
    def columns(self):
        return 4 if self.family == "stokes_dirichlet4" else 1

    @property
    def components(self):
        return ("u",) if self.family == "poisson_corner" else ("u1", "u2", "p")


# ---------------------------------------------------------------------------
# pencil roots


def pencil_residual(lam, alpha):
    """Defining biharmonic pencil residual at lam (complex allowed)."""
    lam = complex(lam)
    return abs(cmath.sin((lam - 1) * alpha) ** 2 - (lam - 1) ** 2 * math.sin(alpha) ** 2)


def laplace_exponents(alpha, count):
    """Laplace pencil exponents lambda_j = j pi / alpha, j = 1..count."""
    if not 0.0 < alpha < 2.0 * math.pi:
        raise ValueError(f"need 0 < alpha < 2 pi, got {alpha}")
    if count < 1:
        raise ValueError(f"need count >= 1, got {count}")
    return [
        PencilRoot(j * math.pi / alpha, 0.0, alpha, "laplace") for j in range(1, count + 1)
    ]


_TRIVIAL_ROOTS = (0.0, 1.0, 2.0)
_SEARCH_BOX = (1.0, 20.0, 0.0, 10.0)  # Re range, Im range


def _branch_fn(sign, alpha):
    sa = math.sin(alpha)

    def g(lam):
        return cmath.sin((lam - 1.0) * alpha) + sign * (lam - 1.0) * sa

    def dg(lam):
        return alpha * cmath.cos((lam - 1.0) * alpha) + sign * sa

    return g, dg


def _newton(g, dg, lam0, tol=1e-13, max_iter=80):
    lam = complex(lam0)
    try:
        f0 = g(lam)
        for _ in range(max_iter):
            if abs(f0) <= tol:
                return lam
            d = dg(lam)
            if d == 0:
                return None
            step = -f0 / d
            # damp: halve the step until the residual decreases, and give up
            # on iterates that run far outside the search box (sin overflows
            # for large imaginary arguments)
            for _ in range(25):
                trial = lam + step
                if abs(trial) > 1e3:
                    return None
                f1 = g(trial)
                if abs(f1) < abs(f0):
                    lam, f0 = trial, f1
                    break
                step *= 0.5
            else:
                return None
    except OverflowError:
        return None
    return lam if abs(f0) <= tol else None


def biharmonic_exponents(alpha, count, want_complex=False, grid=40):
    """Roots of the biharmonic corner pencil, sorted by real part.

    Solves both factored branches sin((lambda-1) alpha) = -/+ (lambda-1)
    sin(alpha): a fine real scan with bracketing plus damped Newton from a
    grid of complex starts over Re in (1, 20), Im in (0, 10).  The trivial
    solutions lambda in {0, 1, 2} are excluded; duplicates are merged.
    Returns the first `count` roots (real ones only unless want_complex).
    """
    if not 0.0 < alpha < 2.0 * math.pi:
        raise ValueError(f"need 0 < alpha < 2 pi, got {alpha}")
    re_lo, re_hi, im_lo, im_hi = _SEARCH_BOX
    found = []

    def push(lam, branch):
        if lam is None:
            return
        if not (re_lo - 1e-9 <= lam.real <= re_hi + 1e-9):
            return
        if lam.imag < -1e-9 or lam.imag > im_hi + 1e-9:
            return
        lam = complex(lam.real, abs(lam.imag))
        if any(abs(lam.real - t) < 1e-6 and abs(lam.imag) < 1e-6 for t in _TRIVIAL_ROOTS):
            return
        if pencil_residual(lam, alpha) > 1e-10:
            return
        for other, _ in found:
            if abs(lam - other) < 1e-7:
                return
        found.append((lam, branch))

    for sign, branch in ((1.0, "minus"), (-1.0, "plus")):
        # branch g(lam) = sin((lam-1) alpha) + sign (lam-1) sin(alpha); the
        # "minus" label refers to sin((lam-1)a) = -(lam-1) sin a, i.e. sign=+1
        g, dg = _branch_fn(sign, alpha)
        xs = np.linspace(re_lo + 1e-6, re_hi, 2400)
        vals = np.array([g(x).real for x in xs])
        sign_change = np.nonzero(np.diff(np.signbit(vals)))[0]
        for idx in sign_change:
            push(_newton(g, dg, 0.5 * (xs[idx] + xs[idx + 1])), branch)
        if want_complex:
            for re0 in np.linspace(re_lo + 0.25, re_hi, grid):
                for im0 in np.linspace(im_lo + 0.12, im_hi, grid):
                    push(_newton(g, dg, complex(re0, im0)), branch)

    if not want_complex:
        found = [(lam, br) for lam, br in found if abs(lam.imag) < 1e-12]
    found.sort(key=lambda t: (t[0].real, t[0].imag))
    if len(found) < count:
        raise RuntimeError(
            f"found {len(found)} biharmonic pencil roots for alpha={alpha:.6f} "
            f"in box Re({re_lo},{re_hi}) x Im({im_lo},{im_hi}), need {count}"
        )
    return [
        PencilRoot(lam.real, lam.imag, alpha, "biharmonic", branch)
        for lam, branch in found[:count]
    ]


# ---------------------------------------------------------------------------
# scalar corner family


def _holomorphic_bundle(F, F1, F2):
    """Cartesian bundle of Re[F] for holomorphic F.

    F, F1, F2 are arrays of F(z), F'(z), F''(z).  For holomorphic F:
    d/dx Re F = Re F', d/dy Re F = -Im F'.
    """
    return DerivativeBundle(
        val=np.real(F),
        dx=np.real(F1),
        dy=-np.imag(F1),
        dxx=np.real(F2),
        dxy=-np.imag(F2),
        dyy=-np.real(F2),
    )


def poisson_singular(r, th, mu, with_dmu=False):
    """Bundle of the harmonic corner function r^mu sin(mu theta).

    Coordinates are corner-local (theta = 0 on an incident edge).  The
    function is Re[-i z^mu] with z = r e^{i theta}; derivatives follow from
    holomorphy, so the returned Laplacian dxx + dyy vanishes identically by
    construction of the chain, not by hard-coding.  At r = 0 the value is 0
    and the (possibly unbounded) derivatives are reported as 0; quadrature
    never places nodes there.

    With with_dmu=True also returns the bundle of the exponent derivative,
    from d/dmu z^mu = z^mu log z.
    """
    r = np.asarray(r, dtype=float)
    th = np.asarray(th, dtype=float)
    pos = r > 0.0
    rs = np.where(pos, r, 1.0)
    z = rs * np.exp(1j * th)
    logz = np.log(rs) + 1j * th
    zmu = np.exp(mu * logz)
    F = -1j * zmu
    F1 = -1j * mu * zmu / z
    F2 = -1j * mu * (mu - 1.0) * zmu / (z * z)
    bundle = _holomorphic_bundle(F, F1, F2)
    for k in DERIV_KEYS:
        arr = getattr(bundle, k)
        setattr(bundle, k, np.where(pos, arr, 0.0))
    if not with_dmu:
        return bundle
    dF = F * logz
    dF1 = F1 * logz + F / z
    dF2 = F2 * logz + (2.0 * mu - 1.0) / mu * F1 / z if mu != 0 else F2 * logz
    dmu = _holomorphic_bundle(dF, dF1, dF2)
    for k in DERIV_KEYS:
        arr = getattr(dmu, k)
        setattr(dmu, k, np.where(pos, arr, 0.0))
    return bundle, dmu


def streamfunction_noslip(th, lam, alpha):
    """Angular streamfunction factor and its theta derivative (complex).

    Psi(theta) = cos(lam alpha) cos((lam-2) theta) - cos((lam-2) alpha)
    cos(lam theta).  Frame-agnostic: Psi(alpha) = 0 cancels algebraically
    for any lam, and Psi'(+/- alpha) = 0 holds when lam is a pencil root of
    the doubled angle (the walls of a corner of opening 2 alpha).
    """
    th = np.asarray(th)
    lam = complex(lam)
    c1 = cmath.cos(lam * alpha)
    c2 = cmath.cos((lam - 2.0) * alpha)
    psi = c1 * np.cos((lam - 2.0) * th) - c2 * np.cos(lam * th)
    dpsi = -(lam - 2.0) * c1 * np.sin((lam - 2.0) * th) + lam * c2 * np.sin(lam * th)
    return psi, dpsi


@lru_cache(maxsize=None)
def _stokes_kernels(family):
    """Lambdified (value, d/dlam) kernels for one Stokes corner family.

    Returns {(component, deriv_key, tag): callable(r, theta, lam, a_half)}
    with tag in {"f", "dlam"}; components are u1, u2, p.  theta is the
    wall-frame angle; a_half is half the corner opening.  Velocities come
    from the streamfunction (u1, u2) = (psi_y, -psi_x), so the divergence
    vanishes identically; pressures are the harmonic conjugates matching
    the momentum balance.
    """
    r, th = sp.symbols("r theta", positive=True)
    lam, ah = sp.symbols("lam a_half")
    ths = th - ah  # symmetric frame about the bisector

    def ddx(f):
        return sp.cos(th) * sp.diff(f, r) - sp.sin(th) / r * sp.diff(f, th)

    def ddy(f):
        return sp.sin(th) * sp.diff(f, r) + sp.cos(th) / r * sp.diff(f, th)

    if family == "noslip":
        psi = r**lam * (
            sp.cos(lam * ah) * sp.cos((lam - 2) * ths)
            - sp.cos((lam - 2) * ah) * sp.cos(lam * ths)
        )
        p = -4 * (lam - 1) * sp.cos(lam * ah) * r ** (lam - 2) * sp.sin((lam - 2) * ths)
    elif family in ("dir1", "dir2", "dir3", "dir4"):
        idx = int(family[3])
        angulars = [
            sp.cos((lam - 2) * ths),
            sp.cos(lam * ths),
            sp.sin((lam - 2) * ths),
            sp.sin(lam * ths),
        ]
        psi = r**lam * angulars[idx - 1]
        if idx == 1:
            p = -4 * (lam - 1) * r ** (lam - 2) * sp.sin((lam - 2) * ths)
        elif idx == 3:
            p = 4 * (lam - 1) * r ** (lam - 2) * sp.cos((lam - 2) * ths)
        else:
            p = sp.Integer(0)
    else:
        raise ValueError(f"unknown stokes kernel family {family!r}")

    u1, u2 = ddy(psi), -ddx(psi)
    kernels = {}
    for comp, f in (("u1", u1), ("u2", u2), ("p", p)):
        derivs = {
            "val": f,
            "dx": ddx(f),
            "dy": ddy(f),
            "dxx": ddx(ddx(f)),
            "dxy": ddx(ddy(f)),
            "dyy": ddy(ddy(f)),
        }
        for key, expr in derivs.items():
            kernels[comp, key, "f"] = sp.lambdify((r, th, lam, ah), expr, modules="numpy", cse=True)
            kernels[comp, key, "dlam"] = sp.lambdify(
                (r, th, lam, ah), sp.diff(expr, lam), modules="numpy", cse=True
            )
    return kernels


def _eval_kernels(family, r, th, lam, alpha, with_dlam=False, complex_dlam=False):
    """Evaluate a cached kernel set, taking real parts; zero at r = 0.

    with_dlam adds the derivative with respect to Re(lam).  complex_dlam
    instead returns (f, d/dRe, d/dIm) of the stored real-part field, for
    training both components of a complex exponent.
    """
    r = np.asarray(r, dtype=float)
    th = np.asarray(th, dtype=float)
    pos = r > 0.0
    rs = np.where(pos, r, 1.0)
    lam = complex(lam)
    a_half = 0.5 * alpha
    kernels = _stokes_kernels(family)
    raw = {}
    tags = ("f", "dlam") if (with_dlam or complex_dlam) else ("f",)
    for tag in tags:
        for comp in ("u1", "u2", "p"):
            arrays = {}
            for key in DERIV_KEYS:
                v = np.asarray(kernels[comp, key, tag](rs, th, lam, a_half))
                v = np.broadcast_to(v, rs.shape)
                arrays[key] = np.where(pos, v, 0.0)
            raw[comp, tag] = arrays

    def part(tag, fn):
        return {
            c: DerivativeBundle(**{k: fn(raw[c, tag][k]) for k in DERIV_KEYS})
            for c in ("u1", "u2", "p")
        }

    f = part("f", np.real)
    if complex_dlam:
        # stored field is Re f(lam): d/dIm = Re(i f') = -Im(f')
        return f, part("dlam", np.real), part("dlam", lambda v: -np.imag(v))
    if with_dlam:
        return f, part("dlam", np.real)
    return f


def stokes_noslip_eval(r, th, lam, alpha):
    """No-slip Stokes corner field (u1, u2, p) bundles in the wall frame.

    The walls are theta = 0 and theta = alpha; velocity components vanish
    there when lam is a biharmonic pencil root for the opening alpha.
    """
    return _eval_kernels("noslip", r, th, lam, alpha)


def stokes_moffatt_eval(r, th, xi, zeta, alpha):
    """Oscillatory (complex-exponent) Stokes corner field, real part.

    Reduces exactly to stokes_noslip_eval at zeta = 0.  Along a fixed ray
    the streamfunction behaves like r^xi cos(zeta log r + phase): zeros are
    spaced by Delta log r = pi / zeta and successive extrema decay by
    exp(pi xi / zeta).
    """
    return _eval_kernels("noslip", r, th, complex(xi, zeta), alpha)


def stokes_dirichlet_terms(r, th, mu, alpha):
    """The four-term Dirichlet velocity/pressure basis at exponent mu.

    Returns a list of four {u1, u2, p} bundle dicts (real parts).  The
    second and fourth pressures are identically zero; the boundary-fitting
    coefficients are left to the caller's least-squares solve.
    """
    return [_eval_kernels(f"dir{i}", r, th, mu, alpha) for i in (1, 2, 3, 4)]


# ---------------------------------------------------------------------------
# frame transforms and cutoff application


def rotate_scalar_bundle(bundle, rot):
    """Rotate a local-frame scalar bundle's derivatives to global axes."""
    c, s = math.cos(rot), math.sin(rot)
    dx = c * bundle.dx - s * bundle.dy
    dy = s * bundle.dx + c * bundle.dy
    dxx = c * c * bundle.dxx - 2 * c * s * bundle.dxy + s * s * bundle.dyy
    dxy = c * s * (bundle.dxx - bundle.dyy) + (c * c - s * s) * bundle.dxy
    dyy = s * s * bundle.dxx + 2 * c * s * bundle.dxy + c * c * bundle.dyy
    return DerivativeBundle(val=bundle.val, dx=dx, dy=dy, dxx=dxx, dxy=dxy, dyy=dyy)


def _bundle_lincomb(coeffs_bundles):
    out = {k: 0.0 for k in DERIV_KEYS}
    for coef, b in coeffs_bundles:
        for k in DERIV_KEYS:
            out[k] = out[k] + coef * getattr(b, k)
    return DerivativeBundle(**out)


def rotate_components(bundles, rot):
    """Rotate a field dict {u1, u2, p} (or {u}) from local to global frame.

    Scalar entries only change their derivative frame; the velocity pair
    additionally mixes as a vector.
    """
    rotated = {k: rotate_scalar_bundle(b, rot) for k, b in bundles.items()}
    if "u1" in rotated and "u2" in rotated:
        c, s = math.cos(rot), math.sin(rot)
        u1 = _bundle_lincomb([(c, rotated["u1"]), (-s, rotated["u2"])])
        u2 = _bundle_lincomb([(s, rotated["u1"]), (c, rotated["u2"])])
        rotated["u1"], rotated["u2"] = u1, u2
    return rotated


def apply_cutoff(bundle, r, th, cut):
    """Multiply a local-frame bundle by the radial cutoff chi(r).

    Builds the Cartesian derivatives of chi from the radial profile and
    applies the product rule through second order.  Inside the plateau the
    factors reduce to chi = 1 with zero derivatives, so the bundle passes
    through unchanged there (no 1/r issues at the vertex).
    """
    chi, d1, d2 = cutoff_eval(r, cut)
    blend = (r > cut.r0) & (r < cut.r1)
    safe_r = np.where(r > 0, r, 1.0)
    ct, st = np.cos(th), np.sin(th)
    d1r = np.where(blend, d1 / safe_r, 0.0)
    d1 = np.where(blend, d1, 0.0)
    d2 = np.where(blend, d2, 0.0)
    chi_x = d1 * ct
    chi_y = d1 * st
    chi_xx = d2 * ct * ct + d1r * st * st
    chi_xy = (d2 - d1r) * ct * st
    chi_yy = d2 * st * st + d1r * ct * ct
    return DerivativeBundle(
        val=chi * bundle.val,
        dx=chi * bundle.dx + chi_x * bundle.val,
        dy=chi * bundle.dy + chi_y * bundle.val,
        dxx=chi * bundle.dxx + 2.0 * chi_x * bundle.dx + chi_xx * bundle.val,
        dxy=chi * bundle.dxy + chi_x * bundle.dy + chi_y * bundle.dx + chi_xy * bundle.val,
        dyy=chi * bundle.dyy + 2.0 * chi_y * bundle.dy + chi_yy * bundle.val,
    )


def corner_columns(term, pts, with_dmu=False):
    """Evaluate a KnowledgeTerm's candidate columns at global points.

    Returns a list of column dicts mapping component name to global-frame
    DerivativeBundle (one dict for scalar/noslip/moffatt terms, four for
    the Dirichlet basis).  With with_dmu=True each column is a pair
    (bundles, dmu_bundles) where dmu is the derivative with respect to the
    real part of the exponent (at fixed imaginary part); with_dmu="complex"
    yields triples (bundles, dmu_re, dmu_im) for the Stokes families.
    """
    pts = np.asarray(pts, dtype=float)
    r, th = local_polar(pts, term.corner)
    alpha = term.corner.alpha
    rot = term.corner.frame_rotation
    want_c = with_dmu == "complex"

    if term.family == "poisson_corner":
        if want_c:
            raise ValueError("poisson_corner exponents are real")
        mu = complex(term.mu).real
        if with_dmu:
            b, d = poisson_singular(r, th, mu, with_dmu=True)
            groups = [({"u": b}, {"u": d})]
        else:
            groups = [({"u": poisson_singular(r, th, mu)},)]
    elif term.family in ("stokes_noslip", "stokes_moffatt"):
        res = _eval_kernels(
            "noslip", r, th, term.mu, alpha,
            with_dlam=with_dmu is True, complex_dlam=want_c,
        )
        groups = [res if with_dmu else (res,)]
    else:  # stokes_dirichlet4
        groups = []
        for i in (1, 2, 3, 4):
            res = _eval_kernels(
                f"dir{i}", r, th, term.mu, alpha,
                with_dlam=with_dmu is True, complex_dlam=want_c,
            )
            groups.append(res if with_dmu else (res,))

    columns = []
    for group in groups:
        out = []
        for bundles in group:
            if term.cutoff is not None:
                bundles = {
                    k: apply_cutoff(b, r, th, term.cutoff) for k, b in bundles.items()
                }
            out.append(rotate_components(bundles, rot))
        columns.append(tuple(out) if with_dmu else out[0])
    return columns
