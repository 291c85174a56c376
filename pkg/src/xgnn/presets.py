"""Named problem presets: domain, data, form defaults, training schedules.

Each preset bundles one benchmark configuration (the harmonic-mode penalty
study on the circle, the two L-shape Poisson problems, the channel with a
triangular cavity, and the three exponent-learning runs) with the
hyperparameter table it was run with: width/learning-rate schedules,
quadrature resolutions, penalty delta, corner weight beta, and any
singular-enrichment seeds.  Everything is overridable downstream; the
preset only fixes the defaults.
"""

import inspect
import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .fields import DerivativeBundle
from .forms import FormSpec, ProblemData, manufactured_poisson
from .geometry import Cutoff, make_preset_domain
from .quadrature import boundary_rule, interior_rule
from .solver import KnowledgeSeed, TrainConfig

# Biharmonic pencil roots for the two angles used by the Stokes presets
# (reentrant notch pi + arctan 3; cavity tip 2 arctan(1/3)), frozen here and
# cross-checked against the root finder in the preset tests.
LAMBDA_REENTRANT = 1.5822387401876314
LAMBDA_EDDY = 7.568141702008251 + 3.379430930755185j

SECTOR_HALF_DATA_ANGLE = math.atan(3.0)  # the alpha^0 in the sector data


@dataclass(frozen=True)
class Preset:
    """One named problem with its hyperparameter defaults."""

    name: str
    problem: str
    domain: object
    data: ProblemData
    beta: object
    delta: float
    sb: int
    interior_n: int
    boundary_n: int
    train: TrainConfig
    circle_rule: str = "gauss"
    params: dict = dfield(default_factory=dict)

    @property
    def has_exact(self):
        return self.data.exact is not None

    def form_spec(self, interior_n=None, boundary_n=None, beta=None, delta=None, sb=None):
        """Build quadrature rules and the FormSpec, with optional overrides."""
        ni = self.interior_n if interior_n is None else interior_n
        nb = self.boundary_n if boundary_n is None else boundary_n
        rule_i = interior_rule(self.domain, ni)
        rule_b = boundary_rule(self.domain, nb, circle_rule=self.circle_rule)
        return FormSpec(
            self.problem,
            self.domain,
            rule_i,
            rule_b,
            beta=self.beta if beta is None else beta,
            delta=self.delta if delta is None else delta,
            s_b=self.sb if sb is None else sb,
        )


# ---------------------------------------------------------------------------
# exact solutions and boundary data


def harmonic_mode(m):
    """Bundle callable for u = Im[(x + iy)^m] = r^m sin(m theta)."""

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        z = pts[:, 0] + 1j * pts[:, 1]
        zm = z**m
        z1 = m * z ** (m - 1)
        z2 = m * (m - 1) * z ** (m - 2) if m >= 2 else np.zeros_like(z)
        return DerivativeBundle(zm.imag, z1.imag, z1.real, z2.imag, z2.real, -z2.imag)

    return fn


def radial_sine(lam):
    """Bundle callable for u = r^lam sin(theta) = y * r^(lam-1).

    Not harmonic: -Delta u = (1 - lam^2) r^(lam-2) sin(theta), which for
    lam < 1 is unbounded at the origin but weighted-square-integrable for
    beta > 1 - lam.
    """
    a = lam - 1.0

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        r2 = x * x + y * y
        ra2 = r2 ** ((a - 2) / 2)
        ra4 = r2 ** ((a - 4) / 2)
        val = y * r2 ** (a / 2)
        dx = a * x * y * ra2
        dy = r2 ** (a / 2) + a * y * y * ra2
        dxx = a * y * ra2 + a * (a - 2) * x * x * y * ra4
        dxy = a * x * ra2 + a * (a - 2) * x * y * y * ra4
        dyy = 3 * a * y * ra2 + a * (a - 2) * y**3 * ra4
        return DerivativeBundle(val, dx, dy, dxx, dxy, dyy)

    return fn


def _poisson_unit_source():
    """f = 1 with homogeneous Dirichlet boundary."""

    def source(pts):
        return {"laplacian": np.ones(len(pts))}

    def boundary(rule):
        n = len(rule.nodes)
        return {"value": np.zeros(n), "tangent": np.zeros(n)}

    return ProblemData("poisson", source, boundary)


def _stokes_zero_source(pts):
    # f = 0, g = 0: omitted targets are treated as zero downstream
    return {}


def _channel_boundary(rule):
    """No-slip walls; parabolic profile u1 = y(2-y) at both channel ends."""
    y = rule.nodes[:, 1]
    driven = (rule.tags == "inlet") | (rule.tags == "outlet")
    u1 = np.where(driven, y * (2.0 - y), 0.0)
    u1t = np.where(driven, rule.tangents[:, 1] * (2.0 - 2.0 * y), 0.0)
    zeros = np.zeros(len(y))
    return {"u1": u1, "u2": zeros, "u1_tangent": u1t, "u2_tangent": zeros}


def sector_velocity(theta):
    """Driven-sector velocity profile as a function of the polar angle.

    Both components vanish at theta = 0; the profile also has an exact
    root at theta = 2 arctan 3, a property the tests use as an oracle.
    """
    a0 = SECTOR_HALF_DATA_ANGLE
    u1 = -(theta**2) / (2 * a0) + theta
    u2 = ((-2 * a0 - 1) / (4 * a0**2)) * theta**3 + theta**2 + theta
    du1 = -theta / a0 + 1.0
    du2 = 3 * ((-2 * a0 - 1) / (4 * a0**2)) * theta**2 + 2 * theta + 1.0
    return u1, u2, du1, du2


def _sector_boundary(rule):
    x, y = rule.nodes[:, 0], rule.nodes[:, 1]
    th = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    r = np.hypot(x, y)
    u1, u2, du1, du2 = sector_velocity(th)
    # the data depends on theta only: tangential derivative = u'(theta) t.grad(theta)
    tdg = (-rule.tangents[:, 0] * np.sin(th) + rule.tangents[:, 1] * np.cos(th)) / r
    return {"u1": u1, "u2": u2, "u1_tangent": du1 * tdg, "u2_tangent": du2 * tdg}


def _wedge_boundary(rule):
    """Lid profile u1 = (1-x)(1+x) on the top edge, no-slip diagonals."""
    x = rule.nodes[:, 0]
    top = rule.tags == "top"
    u1 = np.where(top, (1.0 - x) * (1.0 + x), 0.0)
    u1t = np.where(top, rule.tangents[:, 0] * (-2.0 * x), 0.0)
    zeros = np.zeros(len(x))
    return {"u1": u1, "u2": zeros, "u1_tangent": u1t, "u2_tangent": zeros}


# ---------------------------------------------------------------------------
# preset builders (one per worked example)


def _example_2_2(m=16, s=1.5):
    m = int(m)
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    s = float(s)
    if s < 0:
        raise ValueError(f"need s >= 0, got {s}")
    return Preset(
        name="example_2_2",
        problem="poisson",
        domain=make_preset_domain("unit_circle"),
        data=manufactured_poisson(harmonic_mode(m)),
        beta=0.0,
        # H^s boundary penalty realized as a weighted L^2 norm: the exact
        # solution satisfies ||u_m||_{H^s} = m^s ||u_m||_{L^2} on the circle
        delta=float(m) ** (2.0 * s),
        sb=0,
        interior_n=128,
        boundary_n=256,
        circle_rule="riemann",
        train=TrainConfig(width_base=20, lr_base=1e-3),
        params={"m": m, "s": s},
    )


def _example_3_1():
    return Preset(
        name="example_3_1",
        problem="poisson",
        domain=make_preset_domain("lshape"),
        data=manufactured_poisson(radial_sine(0.25)),
        beta=1.0,
        delta=1e3,
        sb=1,
        interior_n=128,
        boundary_n=128,
        train=TrainConfig(width_base=20, lr_base=4e-3),
    )


def _example_3_2(M=20):
    M = int(M)
    if M < 0:
        raise ValueError(f"need M >= 0, got {M}")
    seeds = ()
    if M:
        seeds = (
            KnowledgeSeed(
                family="poisson_corner",
                corner_tag="reentrant",
                mus=tuple(2.0 * j / 3.0 for j in range(1, M + 1)),
            ),
        )
    return Preset(
        name="example_3_2",
        problem="poisson",
        domain=make_preset_domain("lshape"),
        data=_poisson_unit_source(),
        beta=4.0 / 3.0,
        delta=1e3,
        sb=1,
        interior_n=128,
        boundary_n=128,
        train=TrainConfig(width_base=20, lr_base=4e-3, knowledge=seeds),
        params={"M": M},
    )


def _example_3_4():
    cut = Cutoff(0.75, 1.5)
    seeds = (
        KnowledgeSeed(
            family="stokes_dirichlet4",
            corner_tag="notch_right",
            mus=(LAMBDA_REENTRANT,),
            cutoff=cut,
        ),
        KnowledgeSeed(
            family="stokes_dirichlet4",
            corner_tag="notch_left",
            mus=(LAMBDA_REENTRANT,),
            cutoff=cut,
        ),
        KnowledgeSeed(
            family="stokes_moffatt",
            corner_tag="tip",
            mus=(LAMBDA_EDDY,),
            cutoff=cut,
        ),
    )
    return Preset(
        name="example_3_4",
        problem="stokes",
        domain=make_preset_domain("channel_cavity"),
        data=ProblemData("stokes", _stokes_zero_source, _channel_boundary),
        beta=5.0 / 3.0,
        delta=1e3,
        sb=1,
        interior_n=128,
        boundary_n=128,
        train=TrainConfig(width_base=20, lr_base=3e-3, knowledge=seeds),
    )


def _example_4_1():
    seeds = (
        KnowledgeSeed(
            family="poisson_corner",
            corner_tag="reentrant",
            trainable=True,
            count=1,
            init_low=0.0,
            init_high=1.0,
        ),
    )
    return Preset(
        name="example_4_1",
        problem="poisson",
        domain=make_preset_domain("lshape"),
        data=_poisson_unit_source(),
        beta=4.0 / 3.0,
        delta=1e3,
        sb=1,
        interior_n=128,
        boundary_n=128,
        train=TrainConfig(width_base=40, lr_base=4e-3, knowledge=seeds),
    )


def _example_4_2():
    seeds = (
        KnowledgeSeed(
            family="stokes_noslip",
            corner_tag="origin",
            trainable=True,
            count=1,
            init_low=LAMBDA_REENTRANT - 1.0 / 3.0,
            init_high=LAMBDA_REENTRANT + 1.0 / 3.0,
            cutoff=Cutoff(0.5, 0.9),
        ),
    )
    return Preset(
        name="example_4_2",
        problem="stokes",
        domain=make_preset_domain("sector"),
        data=ProblemData("stokes", _stokes_zero_source, _sector_boundary),
        beta=0.0,
        delta=1e3,
        sb=1,
        interior_n=128,
        # 128 per straight edge; the arc contributes its 256 chord nodes,
        # 512 boundary nodes in total
        boundary_n=128,
        train=TrainConfig(width_base=40, width_growth=1.9, lr_base=3e-3, knowledge=seeds),
    )


def _example_4_3():
    xi, zeta = LAMBDA_EDDY.real, LAMBDA_EDDY.imag
    seeds = (
        KnowledgeSeed(
            family="stokes_moffatt",
            corner_tag="tip",
            trainable=True,
            count=1,
            init_low=complex(xi - 0.5, zeta - 0.5),
            init_high=complex(xi + 0.5, zeta + 0.5),
            cutoff=Cutoff(2.0, 2.75),
        ),
    )
    return Preset(
        name="example_4_3",
        problem="stokes",
        domain=make_preset_domain("wedge"),
        data=ProblemData("stokes", _stokes_zero_source, _wedge_boundary),
        beta=0.0,
        delta=1e3,
        sb=1,
        interior_n=128,
        boundary_n=256,
        train=TrainConfig(width_base=40, width_growth=1.9, lr_base=3e-3, knowledge=seeds),
    )


_BUILDERS = {
    "example_2_2": _example_2_2,
    "example_3_1": _example_3_1,
    "example_3_2": _example_3_2,
    "example_3_4": _example_3_4,
    "example_4_1": _example_4_1,
    "example_4_2": _example_4_2,
    "example_4_3": _example_4_3,
}

PRESET_NAMES = tuple(sorted(_BUILDERS))


def _builder(name):
    try:
        return _BUILDERS[name]
    except KeyError:
        known = ", ".join(PRESET_NAMES)
        raise ValueError(f"unknown preset {name!r}; known presets: {known}") from None


def preset_parameters(name):
    """Tunable keyword parameters of a preset with their default values."""
    sig = inspect.signature(_builder(name))
    return {k: p.default for k, p in sig.parameters.items()}


def load_preset(name, **params):
    """Build a named preset; extra keyword parameters are preset-specific
    (example_2_2 takes m and s, example_3_2 takes M)."""
    return _builder(name)(**params)
