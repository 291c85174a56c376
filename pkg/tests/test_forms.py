"""Tests for the least-squares forms: channels, traces, a_LS/F_LS."""

import numpy as np
import pytest

from xgnn.fields import DerivativeBundle
from xgnn.forms import (
    FormSpec,
    ProblemData,
    als_eval,
    build_channels,
    compatibility_defect,
    corner_weight,
    data_targets,
    fls_eval,
    manufactured_poisson,
    manufactured_stokes,
    poisson_trace,
    stokes_trace,
    weighted_inner,
)
from xgnn.geometry import Arc, Corner, Domain, RectPatch, Segment, make_preset_domain
from xgnn.knowledge import stokes_noslip_eval
from xgnn.quadrature import boundary_rule, interior_rule


def bundle_const(pts, c=1.0):
    n = len(pts)
    b = DerivativeBundle.zeros(n)
    b.val = np.full(n, float(c))
    return b


def bundle_x2(pts):
    x = pts[:, 0]
    z = np.zeros_like(x)
    return DerivativeBundle(x**2, 2 * x, z, np.full_like(x, 2.0), z, z)


def bundle_harmonic(pts):
    # x^2 - y^2
    x, y = pts[:, 0], pts[:, 1]
    z = np.zeros_like(x)
    two = np.full_like(x, 2.0)
    return DerivativeBundle(x**2 - y**2, 2 * x, -2 * y, two, z, -two)


def bundle_sinsin(pts):
    x, y = pts[:, 0], pts[:, 1]
    sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
    sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
    p2 = np.pi**2
    return DerivativeBundle(
        sx * sy,
        np.pi * cx * sy,
        np.pi * sx * cy,
        -p2 * sx * sy,
        p2 * cx * cy,
        -p2 * sx * sy,
    )


def bundle_poiseuille_u1(pts):
    y = pts[:, 1]
    z = np.zeros_like(y)
    return DerivativeBundle(y * (2 - y), z, 2 - 2 * y, z, z, np.full_like(y, -2.0))


def bundle_zero(pts):
    return DerivativeBundle.zeros(len(pts))


def bundle_pressure(pts):
    # p = -2x
    x = pts[:, 0]
    z = np.zeros_like(x)
    return DerivativeBundle(-2 * x, np.full_like(x, -2.0), z, z, z, z)


def rect_domain(x0=0.0, x1=1.0, y0=0.0, y1=2.0):
    corners = ()
    edges = (
        Segment((x0, y0), (x1, y0), "bottom"),
        Segment((x1, y0), (x1, y1), "right"),
        Segment((x1, y1), (x0, y1), "top"),
        Segment((x0, y1), (x0, y0), "left"),
    )
    return Domain(
        name="rect",
        patches=(RectPatch(x0, x1, y0, y1),),
        edges=edges,
        corners=corners,
        area=(x1 - x0) * (y1 - y0),
    )


@pytest.fixture(scope="module")
def circle():
    dom = make_preset_domain("unit_circle")
    return dom, interior_rule(dom, 48), boundary_rule(dom, 128)


@pytest.fixture(scope="module")
def rect():
    dom = rect_domain()
    return dom, interior_rule(dom, 24), boundary_rule(dom, 24)


class TestCornerWeight:
    def test_no_corners_is_one(self, circle):
        dom, rule, _ = circle
        w = corner_weight((), 1.0, rule.nodes)
        assert np.all(w == 1.0)

    @pytest.mark.parametrize("beta", [0.0, 1.0, 2.0])
    def test_circle_moment(self, circle, beta):
        dom, rule, _ = circle
        origin = Corner(vertex=(0.0, 0.0), alpha=2 * np.pi, frame_rotation=0.0, tag="o")
        w = corner_weight((origin,), beta, rule.nodes)
        val = np.sum(rule.weights * w**2)
        assert val == pytest.approx(2 * np.pi / (2 * beta + 2), rel=1e-10)

    def test_dict_beta_by_tag(self, circle):
        dom, rule, _ = circle
        origin = Corner(vertex=(0.0, 0.0), alpha=2 * np.pi, frame_rotation=0.0, tag="o")
        w0 = corner_weight((origin,), {"other": 3.0}, rule.nodes)
        assert np.all(w0 == 1.0)
        w1 = corner_weight((origin,), {"o": 1.0}, rule.nodes)
        r = np.hypot(rule.nodes[:, 0], rule.nodes[:, 1])
        assert np.allclose(w1, r)


class TestWeightedInner:
    def test_order_zero_matches_moment(self, circle):
        dom, rule, _ = circle
        origin = Corner(vertex=(0.0, 0.0), alpha=2 * np.pi, frame_rotation=0.0, tag="o")
        wb = corner_weight((origin,), 1.5, rule.nodes)
        one = bundle_const(rule.nodes)
        assert weighted_inner(one, one, 0, wb, rule) == pytest.approx(
            2 * np.pi / 5.0, rel=1e-8
        )

    def test_order_one_splits_weight(self, circle):
        dom, rule, _ = circle
        origin = Corner(vertex=(0.0, 0.0), alpha=2 * np.pi, frame_rotation=0.0, tag="o")
        wb = corner_weight((origin,), 1.0, rule.nodes)
        bx = bundle_x2(rule.nodes)
        # values unweighted, gradient carries r^2
        x, y = rule.nodes[:, 0], rule.nodes[:, 1]
        expect = np.sum(rule.weights * x**4) + np.sum(
            rule.weights * (x**2 + y**2) * 4 * x**2
        )
        assert weighted_inner(bx, bx, 1, wb, rule) == pytest.approx(expect, rel=1e-12)

    def test_rejects_bad_order(self, circle):
        dom, rule, _ = circle
        one = bundle_const(rule.nodes)
        with pytest.raises(ValueError):
            weighted_inner(one, one, 2, np.ones(len(rule.weights)), rule)

    def test_rejects_length_mismatch(self, circle):
        dom, rule, _ = circle
        one = bundle_const(rule.nodes[:5])
        with pytest.raises(ValueError):
            weighted_inner(one, one, 0, np.ones(5), rule)


class TestFormSpecValidation:
    def test_bad_problem(self, rect):
        dom, ir, br = rect
        with pytest.raises(ValueError):
            FormSpec("heat", dom, ir, br)

    def test_bad_sb(self, rect):
        dom, ir, br = rect
        with pytest.raises(ValueError):
            FormSpec("poisson", dom, ir, br, s_b=2)

    def test_bad_delta(self, rect):
        dom, ir, br = rect
        with pytest.raises(ValueError):
            FormSpec("poisson", dom, ir, br, delta=0.0)


class TestPoissonChannels:
    def test_channel_names(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br, delta=10.0, s_b=1)
        names = [c.name for c in build_channels(spec)]
        assert names == ["laplacian", "bnd_value", "bnd_tangent"]

    def test_sb_zero_drops_tangent(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br, s_b=0)
        names = [c.name for c in build_channels(spec)]
        assert names == ["laplacian", "bnd_value"]

    def test_harmonic_interior_trace_vanishes(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br)
        tr = poisson_trace(
            {"u": bundle_harmonic(ir.nodes)}, {"u": bundle_harmonic(br.nodes)}, spec
        )
        assert np.max(np.abs(tr["laplacian"])) < 1e-13

    def test_x_squared_laplacian_trace(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br)
        tr = poisson_trace({"u": bundle_x2(ir.nodes)}, {"u": bundle_x2(br.nodes)}, spec)
        assert np.allclose(tr["laplacian"], -2.0)

    def test_boundary_trace_is_value(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br)
        tr = poisson_trace({"u": bundle_x2(ir.nodes)}, {"u": bundle_x2(br.nodes)}, spec)
        assert np.allclose(tr["bnd_value"], br.nodes[:, 0] ** 2)

    def test_tangent_trace_on_rect(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br)
        tr = poisson_trace({"u": bundle_x2(ir.nodes)}, {"u": bundle_x2(br.nodes)}, spec)
        expect = br.tangents[:, 0] * 2 * br.nodes[:, 0]
        assert np.allclose(tr["bnd_tangent"], expect)

    def test_wrong_problem_rejected(self, rect):
        dom, ir, br = rect
        spec = FormSpec("stokes", dom, ir, br)
        with pytest.raises(ValueError):
            poisson_trace({}, {}, spec)


class TestAlsProperties:
    def _traces(self, rect, fns):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br, delta=1e3)
        return spec, [
            poisson_trace({"u": f(ir.nodes)}, {"u": f(br.nodes)}, spec) for f in fns
        ]

    def test_symmetry_and_psd(self, rect):
        fns = [bundle_x2, bundle_harmonic, bundle_sinsin]
        spec, trs = self._traces(rect, fns)
        G = np.array([[als_eval(spec, a, b) for b in trs] for a in trs])
        assert np.allclose(G, G.T, atol=1e-12 * np.max(np.abs(G)))
        eig = np.linalg.eigvalsh(G)
        assert eig.min() > -1e-10 * eig.max()

    def test_zero_field_is_null(self, rect):
        spec, trs = self._traces(rect, [bundle_zero])
        assert als_eval(spec, trs[0], trs[0]) == 0.0

    def test_nonzero_field_positive(self, rect):
        spec, trs = self._traces(rect, [bundle_sinsin])
        assert als_eval(spec, trs[0], trs[0]) > 1.0


class TestManufacturedPoisson:
    def test_load_matches_bilinear(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br, delta=1e3)
        data = manufactured_poisson(bundle_sinsin)
        targets = data_targets(spec, data)
        tr_u = poisson_trace(
            {"u": bundle_sinsin(ir.nodes)}, {"u": bundle_sinsin(br.nodes)}, spec
        )
        for f in (bundle_x2, bundle_harmonic, bundle_sinsin):
            tr_v = poisson_trace({"u": f(ir.nodes)}, {"u": f(br.nodes)}, spec)
            lhs = fls_eval(spec, targets, tr_v)
            rhs = als_eval(spec, tr_u, tr_v)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_energy_identity(self, rect):
        dom, ir, br = rect
        spec = FormSpec("poisson", dom, ir, br, delta=1e3)
        data = manufactured_poisson(bundle_sinsin)
        targets = data_targets(spec, data)
        tr_u = poisson_trace(
            {"u": bundle_sinsin(ir.nodes)}, {"u": bundle_sinsin(br.nodes)}, spec
        )
        tr_v = poisson_trace({"u": bundle_x2(ir.nodes)}, {"u": bundle_x2(br.nodes)}, spec)
        diff = {k: tr_u[k] - tr_v[k] for k in tr_u}
        lhs = als_eval(spec, diff, diff)
        rhs = (
            als_eval(spec, tr_u, tr_u)
            - 2 * fls_eval(spec, targets, tr_v)
            + als_eval(spec, tr_v, tr_v)
        )
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestStokesChannels:
    def test_channel_names(self, rect):
        dom, ir, br = rect
        spec = FormSpec("stokes", dom, ir, br)
        names = [c.name for c in build_channels(spec)]
        assert names == [
            "momentum_x",
            "momentum_y",
            "divergence",
            "div_grad_x",
            "div_grad_y",
            "bnd_u1",
            "bnd_u2",
            "bnd_u1_tangent",
            "bnd_u2_tangent",
        ]

    def test_constant_pressure_invisible(self, rect):
        dom, ir, br = rect
        spec = FormSpec("stokes", dom, ir, br)
        tr = stokes_trace(
            {"p": bundle_const(ir.nodes, 7.0)}, {"p": bundle_const(br.nodes, 7.0)}, spec
        )
        assert all(np.max(np.abs(v)) == 0.0 for v in tr.values())

    def test_poiseuille_residual_vanishes(self, rect):
        dom, ir, br = rect
        spec = FormSpec("stokes", dom, ir, br)
        ib = {
            "u1": bundle_poiseuille_u1(ir.nodes),
            "u2": bundle_zero(ir.nodes),
            "p": bundle_pressure(ir.nodes),
        }
        bb = {
            "u1": bundle_poiseuille_u1(br.nodes),
            "u2": bundle_zero(br.nodes),
            "p": bundle_pressure(br.nodes),
        }
        tr = stokes_trace(ib, bb, spec)
        for name in ("momentum_x", "momentum_y", "divergence", "div_grad_x", "div_grad_y"):
            assert np.max(np.abs(tr[name])) < 1e-12, name

    def test_poiseuille_manufactured_identity(self, rect):
        dom, ir, br = rect
        spec = FormSpec("stokes", dom, ir, br, delta=1e3)
        data = manufactured_stokes(bundle_poiseuille_u1, bundle_zero, bundle_pressure)
        targets = data_targets(spec, data)
        ib = {
            "u1": bundle_poiseuille_u1(ir.nodes),
            "u2": bundle_zero(ir.nodes),
            "p": bundle_pressure(ir.nodes),
        }
        bb = {
            "u1": bundle_poiseuille_u1(br.nodes),
            "u2": bundle_zero(br.nodes),
            "p": bundle_pressure(br.nodes),
        }
        tr_u = stokes_trace(ib, bb, spec)
        ib_v = {"u1": bundle_sinsin(ir.nodes), "u2": bundle_x2(ir.nodes), "p": bundle_harmonic(ir.nodes)}
        bb_v = {"u1": bundle_sinsin(br.nodes), "u2": bundle_x2(br.nodes), "p": bundle_harmonic(br.nodes)}
        tr_v = stokes_trace(ib_v, bb_v, spec)
        assert fls_eval(spec, targets, tr_v) == pytest.approx(
            als_eval(spec, tr_u, tr_v), rel=1e-10
        )


class TestNoSlipMode:
    def test_corner_mode_has_small_residual(self):
        # exact singular Stokes mode on the L-shaped domain: the momentum,
        # divergence and wall traces all vanish; only the outer boundary
        # carries data.
        dom = make_preset_domain("lshape")
        ir = interior_rule(dom, 32)
        corner = dom.corners[0]
        lam = 1.544483736782464
        from xgnn.geometry import local_polar

        r, th = local_polar(ir.nodes, corner)
        ib = stokes_noslip_eval(r, th, lam, corner.alpha)
        br = boundary_rule(dom, 16)
        rb, tb = local_polar(br.nodes, corner)
        bb = stokes_noslip_eval(rb, tb, lam, corner.alpha)
        spec = FormSpec("stokes", dom, ir, br, s_b=0)
        tr = stokes_trace(ib, bb, spec)
        scale = np.max(np.abs(ib["u1"].dxx))
        for name in ("momentum_x", "momentum_y", "divergence"):
            assert np.max(np.abs(tr[name])) < 1e-9 * scale, name
        # wall segments adjacent to the reentrant corner see zero velocity
        wall = (np.abs(rb * np.sin(tb)) < 1e-12) | (np.abs(rb * np.cos(tb)) < 1e-12)
        on_wall = wall & (rb < 1.0 - 1e-9)
        assert np.max(np.abs(tr["bnd_u1"][on_wall])) < 1e-10
        assert np.max(np.abs(tr["bnd_u2"][on_wall])) < 1e-10


class TestCompatibility:
    def test_unit_source_on_circle(self, circle):
        dom, ir, br = circle

        def source(pts):
            return {"divergence": np.ones(len(pts))}

        def boundary(rule):
            n = len(rule.weights)
            return {"u1": np.zeros(n), "u2": np.zeros(n)}

        data = ProblemData("stokes", source, boundary)
        assert compatibility_defect(data, ir, br) == pytest.approx(np.pi, rel=1e-9)

    def test_balanced_data_has_zero_defect(self, circle):
        dom, ir, br = circle

        def source(pts):
            return {"divergence": np.zeros(len(pts))}

        def boundary(rule):
            # uD = (x, -y) is divergence free: net flux zero
            return {"u1": rule.nodes[:, 0], "u2": -rule.nodes[:, 1]}

        data = ProblemData("stokes", source, boundary)
        assert abs(compatibility_defect(data, ir, br)) < 1e-10
