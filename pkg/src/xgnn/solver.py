"""Adaptive basis training and Galerkin projection.

Each iteration trains one candidate v = sum_jk c_jk sigma_k e_j +
sum_m d_m Psi_m to maximize the normalized weak residual
J = (F_LS(v) - a_LS(u_prev, v)) / |||v|||, alternating a truncated-SVD
least-squares solve for the linear coefficients (c, d) with gradient
ascent on the hidden parameters (W, b) and any trainable exponents mu.
The best objective value is the a posteriori estimator eta_i; the frozen,
energy-normalized candidate joins the subspace and the Galerkin system is
re-solved.  Iteration stops when eta_i < tol or the basis budget runs out.

All traces live on the FormSpec's quadrature rules, so the estimator,
normalization, and Galerkin orthogonality are exact in the discrete norm.
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass, field as dfield

import numpy as np

from .fields import (
    DERIV_KEYS,
    DerivativeBundle,
    _activation_tangent,
    _forward,
    _propagate_tangent,
    eval_bundle,
    init_network,
    tanh_chain,
)
from .forms import als_eval, build_channels, channel_trace, data_targets, fls_eval
from .knowledge import KnowledgeTerm, corner_columns

# admissible interval for Re(mu), used only when the objective goes
# non-finite: below the lower bound the term leaves the trial space
_MU_BOUNDS = {
    "poisson_corner": (0.05, 25.0),
    "stokes_noslip": (1.05, 25.0),
    "stokes_moffatt": (1.05, 25.0),
    "stokes_dirichlet4": (1.05, 25.0),
}

# deterministic per-iteration seed offsets (documented, arbitrary primes)
_NET_SEED_STRIDE = 1009
_MU_SEED_STRIDE = 9173


@dataclass
class SolveInfo:
    rank: int
    warned: bool


def truncated_lsq(A, F, rtol=1e-10):
    """Minimum-norm least-squares solve with relative SVD truncation.

    Singular values below rtol * sigma_max are discarded.  If nothing
    survives (A identically zero) the zero vector is returned and the
    info flag is set.
    """
    A = np.asarray(A, dtype=float)
    F = np.asarray(F, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if F.shape != (A.shape[0],):
        raise ValueError(f"F shape {F.shape} does not match A {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0), SolveInfo(rank=0, warned=False)
    U, s, Vt = np.linalg.svd(A, hermitian=True)
    smax = s[0]
    keep = s >= rtol * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    if not keep.any():
        warnings.warn("all singular values truncated; returning zero solution")
        return np.zeros(A.shape[0]), SolveInfo(rank=0, warned=True)
    coef = Vt[keep].T @ ((U[:, keep].T @ F) / s[keep])
    return coef, SolveInfo(rank=int(keep.sum()), warned=False)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class KnowledgeSeed:
    """Recipe for the knowledge columns re-entered at every iteration.

    Fixed exponents come from mus; trainable seeds draw count exponents
    from the uniform box [init_low, init_high] (real and imaginary parts
    independently) at the start of each iteration.
    """

    family: str
    corner_tag: str
    mus: tuple = ()
    trainable: bool = False
    count: int = 1
    init_low: complex = 0.0
    init_high: complex = 1.0
    cutoff: object = None


@dataclass(frozen=True)
class TrainConfig:
    """Schedules and budgets for the adaptive loop.

    Width, learning rate, and activation scale follow the usual geometric/
    affine schedules: width_base * width_growth^(i-1), lr_base /
    lr_decay^(i-1), scale_base + scale_rate * i.
    """

    width_base: int = 20
    width_growth: float = 2.0
    depth: int = 1
    scale_base: float = 1.0
    scale_rate: float = 0.25
    lr_base: float = 4e-3
    lr_decay: float = 1.1
    gradient_steps: int = 500
    momentum: float = 0.0
    seed: int = 0
    svd_rtol: float = 1e-10
    tol: float = 0.0
    max_basis: int = 4
    knowledge: tuple = ()

    def __post_init__(self):
        if self.width_base < 1 or self.depth < 1:
            raise ValueError("width_base and depth must both be >= 1")
        if self.max_basis < 0:
            raise ValueError("max_basis must be >= 0")
        if self.gradient_steps < 1:
            raise ValueError("gradient_steps must be >= 1")
        if self.lr_base <= 0 or self.lr_decay <= 0:
            raise ValueError("learning rate and decay must be positive")

    def width(self, i):
        return max(1, int(round(self.width_base * self.width_growth ** (i - 1))))

    def lr(self, i):
        return self.lr_base / self.lr_decay ** (i - 1)

    def scale(self, i):
        return self.scale_base + self.scale_rate * i


def _find_corner(domain, tag):
    for corner in domain.corners:
        if corner.tag == tag:
            return corner
    raise KeyError(f"domain {domain.name!r} has no corner tagged {tag!r}")


def materialize_terms(cfg, domain, iteration, rng):
    """KnowledgeTerm list for one iteration (trainable mus freshly drawn)."""
    terms = []
    for seed in cfg.knowledge:
        corner = _find_corner(domain, seed.corner_tag)
        if seed.trainable:
            lo, hi = complex(seed.init_low), complex(seed.init_high)
            for _ in range(seed.count):
                re = rng.uniform(lo.real, hi.real)
                im = rng.uniform(lo.imag, hi.imag) if hi.imag > lo.imag else lo.imag
                mu = complex(re, im)
                terms.append(
                    KnowledgeTerm(seed.family, mu, corner, seed.cutoff, trainable=True)
                )
        else:
            for mu in seed.mus:
                terms.append(KnowledgeTerm(seed.family, complex(mu), corner, seed.cutoff))
    return terms


# ---------------------------------------------------------------------------
# candidate evaluation


@dataclass
class PassCache:
    """Node-level quantities reused between the linear solve, the objective,
    and the parameter gradients within one training step."""

    field: object
    components: tuple
    width: int
    rho: dict            # channel -> residual target (P,)
    wts: dict            # channel -> quadrature weight (P,)
    unit_rows: dict      # channel -> {component: (width, P)}
    know_rows: dict      # channel -> (n_kcols, P)
    n_kcols: int
    term_slices: list    # per term: slice into the d vector
    dmu_rows: list       # per term: None or {"re": {ch: (cols,P)}, "im": ... or None}
    pts: dict            # "interior"/"boundary" nodes


def residual_targets(channels, targets, u_prev_trace):
    """Per-channel weak-residual data: target minus previous iterate."""
    rho = {}
    for ch in channels:
        t = targets.get(ch.name)
        u = u_prev_trace.get(ch.name) if u_prev_trace else None
        if t is None and u is None:
            rho[ch.name] = np.zeros_like(ch.weight)
        elif t is None:
            rho[ch.name] = -u
        elif u is None:
            rho[ch.name] = np.asarray(t, dtype=float)
        else:
            rho[ch.name] = np.asarray(t, dtype=float) - u
    return rho


def _term_block(spec, channels, terms, with_dmu):
    """Knowledge candidate rows per channel, with optional exponent rows."""
    pts_i, pts_b = spec.interior.nodes, spec.boundary.nodes
    rows = {ch.name: [] for ch in channels}
    dmu_rows = []
    slices = []
    start = 0
    for term in terms:
        want = False
        if with_dmu and term.trainable:
            want = "complex" if term.family == "stokes_moffatt" else True
        cols_i = corner_columns(term, pts_i, with_dmu=want)
        cols_b = corner_columns(term, pts_b, with_dmu=want)
        ncols = len(cols_i)
        slices.append(slice(start, start + ncols))
        start += ncols
        dre = {ch.name: [] for ch in channels} if want else None
        dim = {ch.name: [] for ch in channels} if want == "complex" else None
        for col_i, col_b in zip(cols_i, cols_b):
            bi = col_i[0] if want else col_i
            bb = col_b[0] if want else col_b
            for ch in channels:
                src = bi if ch.kind == "interior" else bb
                rows[ch.name].append(channel_trace(ch, src))
                if want:
                    gsrc = col_i if ch.kind == "interior" else col_b
                    dre[ch.name].append(channel_trace(ch, gsrc[1]))
                    if want == "complex":
                        dim[ch.name].append(channel_trace(ch, gsrc[2]))
        entry = None
        if want:
            entry = {"re": {k: np.asarray(v) for k, v in dre.items()}}
            entry["im"] = (
                {k: np.asarray(v) for k, v in dim.items()} if want == "complex" else None
            )
        dmu_rows.append(entry)
    know = {
        ch.name: (
            np.asarray(rows[ch.name])
            if rows[ch.name]
            else np.zeros((0, len(ch.weight)))
        )
        for ch in channels
    }
    return know, start, slices, dmu_rows


def assemble_block_system(spec, channels, rho, candidate_field, terms, with_dmu=False):
    """Gram matrix and residual load of the candidate columns.

    Columns are ordered component-major for the network units (all units of
    component 0, then component 1, ...) followed by the knowledge columns.
    Returns (A, F, cache) with A symmetric positive semi-definite.
    """
    comps = spec.components
    width = candidate_field.width
    units_i, _ = eval_bundle(candidate_field, spec.interior.nodes)
    units_b, _ = eval_bundle(candidate_field, spec.boundary.nodes)
    unit_rows = {}
    for ch in channels:
        units = units_i if ch.kind == "interior" else units_b
        unit_rows[ch.name] = {
            comp: channel_trace(ch, {comp: units}) for comp in ch.coeffs
        }
    know_rows, n_kcols, term_slices, dmu_rows = _term_block(
        spec, channels, terms, with_dmu
    )
    ntot = len(comps) * width + n_kcols
    A = np.zeros((ntot, ntot))
    F = np.zeros(ntot)
    wts = {}
    comp_index = {comp: j for j, comp in enumerate(comps)}
    for ch in channels:
        w = ch.weight
        wts[ch.name] = w
        blocks, idx = [], []
        for comp, rows_c in unit_rows[ch.name].items():
            j = comp_index[comp]
            blocks.append(rows_c)
            idx.append(np.arange(j * width, (j + 1) * width))
        if n_kcols:
            blocks.append(know_rows[ch.name])
            idx.append(np.arange(len(comps) * width, ntot))
        if not blocks:
            continue
        R = np.vstack(blocks)
        sel = np.concatenate(idx)
        A[np.ix_(sel, sel)] += (R * w) @ R.T
        F[sel] += R @ (w * rho[ch.name])
    cache = PassCache(
        field=candidate_field,
        components=comps,
        width=width,
        rho=rho,
        wts=wts,
        unit_rows=unit_rows,
        know_rows=know_rows,
        n_kcols=n_kcols,
        term_slices=term_slices,
        dmu_rows=dmu_rows,
        pts={"interior": spec.interior.nodes, "boundary": spec.boundary.nodes},
    )
    return A, F, cache


def _candidate_trace(cache, channels, c, d):
    T = {}
    for ch in channels:
        t = np.zeros_like(cache.rho[ch.name])
        comp_index = {comp: j for j, comp in enumerate(cache.components)}
        for comp, rows_c in cache.unit_rows[ch.name].items():
            t += c[comp_index[comp]] @ rows_c
        if cache.n_kcols:
            t += d @ cache.know_rows[ch.name]
        T[ch.name] = t
    return T


def _shallow_unit_tangents(field, pts):
    """Closed-form tangents of depth-1 unit bundles w.r.t. (W1, W2, b).

    Returns {param: dict key -> (width, P)} for param in "W1", "W2", "b".
    """
    W, b, s = field.weights[0], field.biases[0], field.scale
    pre = pts @ W + b
    _, sp, spp, sppp = tanh_chain(pre, s)
    w1, w2 = W[0], W[1]
    x1 = pts[:, 0][:, None]
    x2 = pts[:, 1][:, None]
    one = np.ones_like(pre)
    out = {}
    for name, xx in (("W1", x1), ("W2", x2), ("b", one)):
        d = {
            "val": sp * xx,
            "dx": spp * xx * w1,
            "dy": spp * xx * w2,
            "dxx": sppp * xx * w1 * w1,
            "dxy": sppp * xx * w1 * w2,
            "dyy": sppp * xx * w2 * w2,
        }
        if name == "W1":
            d["dx"] = d["dx"] + sp
            d["dxx"] = d["dxx"] + 2 * spp * w1
            d["dxy"] = d["dxy"] + spp * w2
        elif name == "W2":
            d["dy"] = d["dy"] + sp
            d["dyy"] = d["dyy"] + 2 * spp * w2
            d["dxy"] = d["dxy"] + spp * w1
        out[name] = {k: v.T for k, v in d.items()}
    return out


def _grad_from_rows(channels, cache, y, z, rows_by_channel):
    """N- and D^2-gradient contractions for a family of tangent rows."""
    dN = None
    dD2 = None
    for ch in channels:
        rows = rows_by_channel.get(ch.name)
        if rows is None:
            continue
        a = rows @ y[ch.name]
        bb = rows @ z[ch.name]
        dN = a if dN is None else dN + a
        dD2 = bb if dD2 is None else dD2 + bb
    return dN, 2.0 * dD2


class _TangentBundleView:
    """Adapter letting channel_trace read a dict of (width, P) arrays."""

    __slots__ = tuple(DERIV_KEYS)

    def __init__(self, arrays):
        for k in DERIV_KEYS:
            setattr(self, k, arrays[k])


def objective_and_grads(channels, A, F, cache, c, d, grads=()):
    """Normalized weak-residual objective and requested parameter gradients.

    grads is a subset of {"W", "b", "c", "mu"}: "W"/"b" produce lists
    matching field.weights / field.biases shapes; "c" yields the gradient
    with respect to the linear coefficients (c and d jointly); "mu" yields
    one entry per knowledge term (None if not trainable, else a dict with
    "re" and optionally "im").
    """
    coef = np.concatenate([np.ravel(c), np.ravel(d)])
    N = float(coef @ F)
    D2 = float(coef @ (A @ coef))
    D = math.sqrt(max(D2, 0.0))
    out = {}
    if D == 0.0:
        J = 0.0
    else:
        J = N / D
    if not grads:
        return J, out

    T_v = _candidate_trace(cache, channels, c, d)
    y = {ch.name: cache.wts[ch.name] * cache.rho[ch.name] for ch in channels}
    z = {ch.name: cache.wts[ch.name] * T_v[ch.name] for ch in channels}

    def ratio_grad(dN, dD2):
        if D == 0.0:
            return np.zeros_like(dN)
        return dN / D - N * dD2 / (2.0 * D**3)

    comp_index = {comp: j for j, comp in enumerate(cache.components)}

    if "W" in grads or "b" in grads:
        field = cache.field
        if field.depth == 1:
            tang = {
                kind: _shallow_unit_tangents(field, cache.pts[kind])
                for kind in ("interior", "boundary")
            }
            gW = np.zeros_like(field.weights[0])
            gb = np.zeros_like(field.biases[0])
            for pi, pname in enumerate(("W1", "W2", "b")):
                rows_by_ch = {}
                for ch in channels:
                    dB = _TangentBundleView(tang[ch.kind][pname])
                    rows = None
                    for comp in cache.unit_rows[ch.name]:
                        contrib = c[comp_index[comp]][:, None] * channel_trace(
                            ch, {comp: dB}
                        )
                        rows = contrib if rows is None else rows + contrib
                    if rows is not None:
                        rows_by_ch[ch.name] = rows
                dN, dD2 = _grad_from_rows(channels, cache, y, z, rows_by_ch)
                g = ratio_grad(dN, dD2)
                if pname == "b":
                    gb[:] = g
                else:
                    gW[pi] = g
            out["W"] = [gW]
            out["b"] = [gb]
        else:
            out["W"], out["b"] = _deep_param_grads(
                channels, cache, c, y, z, N, D, comp_index
            )

    if "c" in grads:
        g = np.zeros_like(coef) if D == 0.0 else F / D - N * (A @ coef) / D**3
        nlin = len(cache.components) * cache.width
        out["c"] = g[:nlin].reshape(len(cache.components), cache.width)
        out["d"] = g[nlin:]

    if "mu" in grads:
        mu_grads = []
        for sl, entry in zip(cache.term_slices, cache.dmu_rows):
            if entry is None:
                mu_grads.append(None)
                continue
            dsub = d[sl]
            res = {}
            for part in ("re", "im"):
                if entry.get(part) is None:
                    continue
                rows_by_ch = {
                    name: dsub @ rows for name, rows in entry[part].items()
                }
                dN = sum(
                    float(rows_by_ch[ch.name] @ y[ch.name])
                    for ch in channels
                    if ch.name in rows_by_ch
                )
                dD2 = 2.0 * sum(
                    float(rows_by_ch[ch.name] @ z[ch.name])
                    for ch in channels
                    if ch.name in rows_by_ch
                )
                res[part] = float(ratio_grad(np.array(dN), np.array(dD2)))
            mu_grads.append(res)
        out["mu"] = mu_grads
    return J, out


def _deep_param_grads(channels, cache, c, y, z, N, D, comp_index):
    """Per-parameter forward-mode gradients for multi-layer networks."""
    field = cache.field
    layers = {k: _forward(field, cache.pts[k]) for k in ("interior", "boundary")}
    gW = [np.zeros_like(W) for W in field.weights]
    gb = [np.zeros_like(b) for b in field.biases]
    for ell, (W, b) in enumerate(zip(field.weights, field.biases)):
        n_in, n_out = W.shape
        for j in range(n_out):
            for i in range(n_in + 1):
                dN = 0.0
                dD2 = 0.0
                for kind in ("interior", "boundary"):
                    lay = layers[kind]
                    n_pts = len(cache.pts[kind])
                    dpre = {k: np.zeros((n_pts, n_out)) for k in DERIV_KEYS}
                    if i < n_in:
                        for k in DERIV_KEYS:
                            dpre[k][:, j] = lay[ell]["input"][k][:, i]
                    else:
                        dpre["val"][:, j] = 1.0
                    dstate = _activation_tangent(lay[ell], dpre)
                    dstate = _propagate_tangent(field, lay, ell + 1, dstate)
                    dB = _TangentBundleView({k: dstate[k].T for k in DERIV_KEYS})
                    for ch in channels:
                        if ch.kind != kind:
                            continue
                        rows = None
                        for comp in cache.unit_rows[ch.name]:
                            contrib = c[comp_index[comp]] @ channel_trace(
                                ch, {comp: dB}
                            )
                            rows = contrib if rows is None else rows + contrib
                        if rows is None:
                            continue
                        dN += float(rows @ y[ch.name])
                        dD2 += 2.0 * float(rows @ z[ch.name])
                g = 0.0 if D == 0.0 else dN / D - N * dD2 / (2.0 * D**3)
                if i < n_in:
                    gW[ell][i, j] = g
                else:
                    gb[ell][j] = g
    return gW, gb


# ---------------------------------------------------------------------------
# basis functions and subspace


@dataclass
class BasisFunction:
    """Frozen, energy-normalized candidate: network part plus knowledge part.

    c has shape (n_components, width); d holds the knowledge column
    coefficients in the order produced by corner_columns.  norm records the
    pre-normalization energy of the raw combination.
    """

    field: object
    c: np.ndarray
    terms: tuple
    term_slices: tuple
    d: np.ndarray
    components: tuple
    norm: float

    def evaluate(self, pts):
        """Component bundles of the (normalized) basis function."""
        pts = np.asarray(pts, dtype=float)
        n = len(pts)
        comps = {name: DerivativeBundle.zeros(n) for name in self.components}
        if self.field is not None and self.c.size:
            units, _ = eval_bundle(self.field, pts)
            for j, name in enumerate(self.components):
                for k in DERIV_KEYS:
                    arr = getattr(comps[name], k) + self.c[j] @ getattr(units, k)
                    setattr(comps[name], k, arr)
        for term, sl in zip(self.terms, self.term_slices):
            cols = corner_columns(term, pts)
            for col, coef in zip(cols, self.d[sl]):
                for name, bundle in col.items():
                    for k in DERIV_KEYS:
                        arr = getattr(comps[name], k) + coef * getattr(bundle, k)
                        setattr(comps[name], k, arr)
        return comps

    def channel_traces(self, spec, channels):
        bi = self.evaluate(spec.interior.nodes)
        bb = self.evaluate(spec.boundary.nodes)
        traces = {}
        for ch in channels:
            src = bi if ch.kind == "interior" else bb
            traces[ch.name] = channel_trace(ch, src)
        return traces


def split_parts(basis_fn):
    """Network and knowledge parts of a candidate as separate entries.

    The Galerkin space keeps the two parts of a mixed candidate as
    independent members, so the projection re-weights the singular
    combination on its own instead of tying it to the network amplitude.
    Candidates with only one kind of content pass through unchanged.
    """
    has_net = (
        basis_fn.field is not None and basis_fn.c.size and np.any(basis_fn.c != 0.0)
    )
    has_know = len(basis_fn.terms) > 0 and np.any(basis_fn.d != 0.0)
    if not (has_net and has_know):
        return [basis_fn]
    ncomp = len(basis_fn.components)
    net = dataclasses.replace(basis_fn, terms=(), term_slices=(), d=np.zeros(0))
    know = dataclasses.replace(basis_fn, field=None, c=np.zeros((ncomp, 0)))
    return [net, know]


@dataclass
class Subspace:
    """Growing Galerkin space with cached channel traces and Gram matrix."""

    spec: object
    channels: list
    basis: list = dfield(default_factory=list)
    traces: list = dfield(default_factory=list)
    gram: np.ndarray = dfield(default_factory=lambda: np.zeros((0, 0)))
    coeffs: np.ndarray = dfield(default_factory=lambda: np.zeros(0))

    def add(self, basis_fn):
        tr = basis_fn.channel_traces(self.spec, self.channels)
        m = len(self.basis)
        G = np.zeros((m + 1, m + 1))
        G[:m, :m] = self.gram
        for j, old in enumerate(self.traces):
            G[j, m] = G[m, j] = als_eval(self.spec, old, tr, self.channels)
        G[m, m] = als_eval(self.spec, tr, tr, self.channels)
        self.basis.append(basis_fn)
        self.traces.append(tr)
        self.gram = G

    def u_trace(self):
        """Channel traces of the current Galerkin solution."""
        out = {ch.name: np.zeros_like(ch.weight) for ch in self.channels}
        for coef, tr in zip(self.coeffs, self.traces):
            for name in out:
                out[name] = out[name] + coef * tr[name]
        return out

    def evaluate(self, pts):
        """Component bundles of the Galerkin solution at arbitrary points."""
        comps = None
        for coef, basis_fn in zip(self.coeffs, self.basis):
            b = basis_fn.evaluate(pts)
            if comps is None:
                comps = {
                    name: DerivativeBundle.zeros(len(np.asarray(pts)))
                    for name in b
                }
            for name, bundle in b.items():
                for k in DERIV_KEYS:
                    arr = getattr(comps[name], k) + coef * getattr(bundle, k)
                    setattr(comps[name], k, arr)
        if comps is None:
            names = self.spec.components
            comps = {name: DerivativeBundle.zeros(len(np.asarray(pts))) for name in names}
        return comps


def galerkin_update(subspace, targets, rtol=1e-10):
    """Solve the Galerkin system on the current span.

    Returns (coefficients, orthogonality residual): the residual is
    max_j |F_LS(phi_j) - a_LS(u_i, phi_j)| / max(1, |F|_inf).
    """
    m = len(subspace.basis)
    b = np.array(
        [fls_eval(subspace.spec, targets, tr, subspace.channels) for tr in subspace.traces]
    )
    coef, info = truncated_lsq(subspace.gram, b, rtol)
    subspace.coeffs = coef
    if m == 0:
        return coef, 0.0
    resid = b - subspace.gram @ coef
    scale = max(1.0, float(np.max(np.abs(b))))
    return coef, float(np.max(np.abs(resid))) / scale


# ---------------------------------------------------------------------------
# training loop


def _project_mu(family, mu):
    lo, hi = _MU_BOUNDS[family]
    re = min(max(mu.real, lo), hi)
    return complex(re, mu.imag)


def _mu_admissible(family, mu):
    lo, hi = _MU_BOUNDS[family]
    return lo <= mu.real <= hi


def train_basis(spec, channels, targets, u_prev_trace, cfg, iteration, rng=None,
                frozen_terms=()):
    """Train one candidate basis function by residual maximization.

    Returns (BasisFunction, eta, mu_log): eta is the best objective value
    (the a posteriori estimator), mu_log a list of (step, term_index, mu)
    for every trainable exponent at every step.  frozen_terms are exponent
    families learned at earlier iterations, re-entered as fixed candidate
    columns.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed + _MU_SEED_STRIDE * iteration)
    width = cfg.width(iteration)
    lr = cfg.lr(iteration)
    field = init_network(
        width, cfg.depth, cfg.scale(iteration), cfg.seed + _NET_SEED_STRIDE * iteration
    )
    terms = materialize_terms(cfg, spec.domain, iteration, rng) + list(frozen_terms)
    trainable = [t.trainable for t in terms]
    any_train = any(trainable)
    rho = residual_targets(channels, targets, u_prev_trace)
    ncomp = len(spec.components)

    best = None
    mu_log = []
    vel = None  # momentum buffers
    retried = False
    step = 0
    while step < cfg.gradient_steps:
        step += 1
        A, F, cache = assemble_block_system(
            spec, channels, rho, field, terms, with_dmu=any_train
        )
        coef, info = truncated_lsq(A, F, cfg.svd_rtol)
        nlin = ncomp * width
        c = coef[:nlin].reshape(ncomp, width)
        d = coef[nlin:]
        want = ("W", "b", "mu") if any_train else ("W", "b")
        J, grads = objective_and_grads(channels, A, F, cache, c, d, grads=want)
        if not math.isfinite(J):
            if retried:
                raise RuntimeError(
                    f"objective non-finite at iteration {iteration}, step {step}; "
                    f"exponents {[t.mu for t in terms]}"
                )
            terms = [
                dataclasses.replace(t, mu=_project_mu(t.family, t.mu))
                if t.trainable
                else t
                for t in terms
            ]
            retried = True
            step -= 1
            continue
        retried = False
        for ti, term in enumerate(terms):
            if term.trainable:
                mu_log.append((step, ti, term.mu))
        if best is None or J > best["J"]:
            best = {
                "J": J,
                "weights": [W.copy() for W in field.weights],
                "biases": [b.copy() for b in field.biases],
                "c": c.copy(),
                "d": d.copy(),
                "terms": list(terms),
                "slices": list(cache.term_slices),
                "D": math.sqrt(max(float(coef @ (A @ coef)), 0.0)),
            }
        if step == cfg.gradient_steps:
            break
        gW, gb = grads["W"], grads["b"]
        if cfg.momentum > 0.0:
            if vel is None:
                vel = [np.zeros_like(g) for g in gW + gb]
            for v, g in zip(vel, gW + gb):
                v *= cfg.momentum
                v += g
            upd = vel
        else:
            upd = gW + gb
        for W, g in zip(field.weights, upd[: len(gW)]):
            W += lr * g
        for b, g in zip(field.biases, upd[len(gW):]):
            b += lr * g
        if any_train:
            new_terms = []
            for term, g in zip(terms, grads["mu"]):
                if g is None:
                    new_terms.append(term)
                    continue
                mu = term.mu + lr * g["re"]
                if g.get("im") is not None:
                    mu = complex(mu.real, mu.imag + lr * g["im"])
                if not _mu_admissible(term.family, mu):
                    mu = _project_mu(term.family, mu)
                new_terms.append(dataclasses.replace(term, mu=mu))
            terms = new_terms

    norm = best["D"]
    if norm <= 0.0:
        scale_c, scale_d = 0.0, 0.0
    else:
        scale_c, scale_d = 1.0 / norm, 1.0 / norm
    frozen_field = dataclasses.replace(
        field, weights=best["weights"], biases=best["biases"]
    )
    basis_fn = BasisFunction(
        field=frozen_field,
        c=best["c"] * scale_c,
        terms=tuple(best["terms"]),
        term_slices=tuple(best["slices"]),
        d=best["d"] * scale_d,
        components=spec.components,
        norm=norm,
    )
    return basis_fn, best["J"], mu_log


@dataclass
class RunHistory:
    """Per-iteration record of the adaptive loop."""

    rows: list = dfield(default_factory=list)

    COLUMNS = (
        "iter",
        "eta",
        "energy_error",
        "l2_error",
        "h1_error",
        "h2_error",
        "width",
        "lr",
        "seconds",
    )

    def append(self, **kw):
        self.rows.append({k: kw.get(k) for k in self.COLUMNS})

    def column(self, name):
        return [row[name] for row in self.rows]


def _quotient_mean(vals, weights):
    return float(weights @ vals) / float(np.sum(weights))


def component_errors(u_bundles, exact_bundles, rule, pressure=None):
    """Aggregate L2/H1/H2 errors over components on one rule.

    The H2 norm counts the mixed derivative twice (Frobenius convention).
    The pressure component, if named, is compared in the zero-mean quotient:
    the weighted mean of the error is removed from its value trace.
    """
    w = rule.weights
    l2 = h1 = h2 = 0.0
    for name, ub in u_bundles.items():
        eb = exact_bundles[name]
        e = {k: getattr(ub, k) - getattr(eb, k) for k in DERIV_KEYS}
        if name == pressure:
            e["val"] = e["val"] - _quotient_mean(e["val"], w)
        v2 = float(w @ (e["val"] ** 2))
        g2 = float(w @ (e["dx"] ** 2 + e["dy"] ** 2))
        s2 = float(w @ (e["dxx"] ** 2 + 2 * e["dxy"] ** 2 + e["dyy"] ** 2))
        l2 += v2
        h1 += v2 + g2
        h2 += v2 + g2 + s2
    return math.sqrt(l2), math.sqrt(h1), math.sqrt(h2)


def run_adaptive(
    spec,
    data,
    cfg,
    exact=None,
    on_row=None,
    on_mu=None,
    timings=False,
):
    """Adaptive loop: train, project, estimate, stop at tol.

    Accepted candidates enter the subspace as separate network and
    knowledge parts (split_parts), and exponents learned at earlier
    iterations re-enter later candidates as fixed columns.

    exact maps component names to bundle callables (pts -> DerivativeBundle)
    when the true solution is known; error columns are empty otherwise.
    on_row / on_mu receive history rows and (iteration, step, term, mu)
    tuples as they are produced, so output is flushed incrementally.
    """
    channels = build_channels(spec)
    targets = data_targets(spec, data, channels)
    subspace = Subspace(spec, channels)
    history = RunHistory()
    exact_trace = None
    exact_int = None
    if exact is not None:
        exact_int = {name: fn(spec.interior.nodes) for name, fn in exact.items()}
        exact_bnd = {name: fn(spec.boundary.nodes) for name, fn in exact.items()}
        exact_trace = {
            ch.name: channel_trace(ch, exact_int if ch.kind == "interior" else exact_bnd)
            for ch in channels
        }
    pressure = "p" if spec.problem == "stokes" else None
    rng = np.random.default_rng(cfg.seed + _MU_SEED_STRIDE)

    u_prev = {}
    frozen = []
    for i in range(1, cfg.max_basis + 1):
        t0 = time.perf_counter()
        basis_fn, eta, mu_log = train_basis(
            spec, channels, targets, u_prev, cfg, i, rng=rng,
            frozen_terms=tuple(frozen),
        )
        frozen.extend(
            dataclasses.replace(t, trainable=False)
            for t in basis_fn.terms
            if t.trainable
        )
        for part in split_parts(basis_fn):
            subspace.add(part)
        coef, ortho = galerkin_update(subspace, targets, cfg.svd_rtol)
        u_prev = subspace.u_trace()
        energy = l2 = h1 = h2 = None
        if exact_trace is not None:
            diff = {k: exact_trace[k] - u_prev[k] for k in u_prev}
            energy = math.sqrt(max(als_eval(spec, diff, diff, channels), 0.0))
            u_int = subspace.evaluate(spec.interior.nodes)
            l2, h1, h2 = component_errors(
                u_int, exact_int, spec.interior, pressure=pressure
            )
        seconds = time.perf_counter() - t0 if timings else 0.0
        row = dict(
            iter=i,
            eta=eta,
            energy_error=energy,
            l2_error=l2,
            h1_error=h1,
            h2_error=h2,
            width=cfg.width(i),
            lr=cfg.lr(i),
            seconds=seconds,
        )
        history.append(**row)
        if on_row is not None:
            on_row(row)
        if on_mu is not None:
            for step, ti, mu in mu_log:
                on_mu(i, step, ti, mu)
        if eta < cfg.tol:
            break
    return history, subspace
