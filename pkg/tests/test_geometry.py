import math

import numpy as np
import pytest

from xgnn.geometry import Cutoff, cutoff_eval, local_polar, make_preset_domain

ALL_PRESETS = ["unit_circle", "lshape", "channel_cavity", "sector", "wedge"]


def corner_by_tag(domain, tag):
    return next(c for c in domain.corners if c.tag == tag)


class TestPresets:
    def test_unknown_preset_rejected(self):
        with pytest.raises(ValueError):
            make_preset_domain("pentagon")

    @pytest.mark.parametrize("name", ALL_PRESETS)
    def test_builds(self, name):
        d = make_preset_domain(name)
        assert d.name == name

    def test_lshape_corner(self):
        d = make_preset_domain("lshape")
        (c,) = d.corners
        assert c.vertex == (0.0, 0.0)
        assert c.alpha == pytest.approx(1.5 * math.pi, abs=0)

    def test_channel_corners(self):
        d = make_preset_domain("channel_cavity")
        notch = math.pi + math.atan(3.0)
        assert corner_by_tag(d, "notch_right").alpha == pytest.approx(notch)
        assert corner_by_tag(d, "notch_left").alpha == pytest.approx(notch)
        tip = corner_by_tag(d, "tip")
        assert tip.vertex == (0.0, -3.0)
        assert tip.alpha == pytest.approx(2.0 * math.atan(1.0 / 3.0))
        assert tip.alpha == pytest.approx(0.6435, abs=1e-4)

    def test_sector_corner(self):
        d = make_preset_domain("sector")
        (c,) = d.corners
        assert c.vertex == (0.0, 0.0)
        # arccos(1/sqrt(10)) is the same angle as arctan(3)
        assert c.alpha == pytest.approx(math.pi + math.acos(1.0 / math.sqrt(10.0)))

    def test_wedge_corner(self):
        d = make_preset_domain("wedge")
        (c,) = d.corners
        assert c.vertex == (0.0, -3.0)
        assert c.alpha == pytest.approx(2.0 * math.atan(1.0 / 3.0))


class TestContains:
    def test_channel_band_accepted(self):
        d = make_preset_domain("channel_cavity")
        rng = np.random.default_rng(7)
        pts = np.column_stack(
            [rng.uniform(-1.99, 1.99, 200), rng.uniform(0.01, 1.99, 200)]
        )
        assert d.contains(pts).all()

    def test_below_cavity_edges_rejected(self):
        d = make_preset_domain("channel_cavity")
        pts = np.array([[-0.9, -1.0], [0.9, -1.0], [0.0, -3.1], [-1.5, -0.1]])
        assert not d.contains(pts).any()

    def test_cavity_interior_accepted(self):
        d = make_preset_domain("channel_cavity")
        pts = np.array([[0.0, -1.0], [0.0, -2.9], [0.3, -0.5], [-0.3, -0.5]])
        assert d.contains(pts).all()

    def test_lshape_quadrant_removed(self):
        d = make_preset_domain("lshape")
        inside = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, 0.5], [-0.99, 0.0]])
        outside = np.array([[0.5, -0.5], [0.5, 0.0], [0.0, -0.5], [1.5, 0.5]])
        assert d.contains(inside).all()
        assert not d.contains(outside).any()


class TestLocalPolar:
    def test_vertex_convention(self):
        d = make_preset_domain("lshape")
        r, th = local_polar(np.array([[0.0, 0.0]]), d.corners[0])
        assert r[0] == 0.0
        assert th[0] == 0.0

    def test_lshape_frame_axis_point(self):
        d = make_preset_domain("lshape")
        r, th = local_polar(np.array([[1.0, 0.0]]), d.corners[0])
        assert r[0] == pytest.approx(1.0, abs=0)
        assert th[0] == pytest.approx(0.0, abs=1e-15)

    def test_lshape_far_edge_point(self):
        d = make_preset_domain("lshape")
        r, th = local_polar(np.array([[0.0, -1.0]]), d.corners[0])
        assert r[0] == pytest.approx(1.0, abs=0)
        assert th[0] == pytest.approx(1.5 * math.pi, abs=1e-12)

    @pytest.mark.parametrize(
        "name,tag",
        [
            ("lshape", "reentrant"),
            ("channel_cavity", "notch_right"),
            ("channel_cavity", "notch_left"),
            ("channel_cavity", "tip"),
            ("sector", "origin"),
            ("wedge", "tip"),
        ],
    )
    def test_interior_angle_range(self, name, tag):
        d = make_preset_domain(name)
        c = corner_by_tag(d, tag)
        rng = np.random.default_rng(11)
        # sample interior points near the vertex by rejection
        box = np.column_stack(
            [
                c.vertex[0] + rng.uniform(-0.4, 0.4, 4000),
                c.vertex[1] + rng.uniform(-0.4, 0.4, 4000),
            ]
        )
        pts = box[d.contains(box)]
        assert len(pts) > 100
        r, th = local_polar(pts, c)
        assert (th > 0.0).all()
        assert (th < c.alpha).all()

    @pytest.mark.parametrize(
        "name,tag",
        [
            ("lshape", "reentrant"),
            ("channel_cavity", "notch_right"),
            ("channel_cavity", "notch_left"),
            ("channel_cavity", "tip"),
            ("wedge", "tip"),
        ],
    )
    def test_incident_edge_angles(self, name, tag):
        d = make_preset_domain(name)
        c = corner_by_tag(d, tag)
        v = np.array(c.vertex)
        hits = []
        for e in d.edges:
            if not hasattr(e, "p0"):
                continue
            for end, other in ((e.p0, e.p1), (e.p1, e.p0)):
                if np.allclose(end, v):
                    t = np.linspace(0.05, 0.95, 9)[:, None]
                    pts = v[None, :] + t * (np.array(other) - v)[None, :]
                    _, th = local_polar(pts, c)
                    hits.append(th)
        assert len(hits) == 2
        for th in hits:
            d0 = np.abs(th - 0.0)
            d1 = np.abs(th - c.alpha)
            assert (np.minimum(d0, d1) <= 1e-12).all()


class TestCutoff:
    def test_radii_validated(self):
        with pytest.raises(ValueError):
            Cutoff(1.5, 0.75)

    def test_plateau_and_tail(self):
        cut = Cutoff(0.75, 1.5)
        chi, d1, d2 = cutoff_eval(np.array([0.375, 3.0]), cut)
        assert chi[0] == 1.0 and d1[0] == 0.0 and d2[0] == 0.0
        assert chi[1] == 0.0 and d1[1] == 0.0 and d2[1] == 0.0

    def test_midpoint_values(self):
        cut = Cutoff(0.75, 1.5)
        chi, d1, _ = cutoff_eval(np.array([1.125]), cut)
        assert chi[0] == pytest.approx(0.5, abs=1e-15)
        assert d1[0] == pytest.approx(-1.875 / 0.75, rel=1e-14)

    def test_continuity_at_joins(self):
        cut = Cutoff(0.6, 1.1)
        eps = 1e-9
        for r_join in (0.6, 1.1):
            below = np.array([r_join - eps])
            above = np.array([r_join + eps])
            for lo, hi in zip(cutoff_eval(below, cut), cutoff_eval(above, cut)):
                assert abs(lo[0] - hi[0]) < 1e-6

    def test_fd_consistency_where_smooth(self):
        # The profile is piecewise polynomial, so probe finite differences
        # away from the two joins where the third derivative jumps.
        cut = Cutoff(0.6, 1.1)
        h = 1e-4
        r = np.concatenate(
            [
                np.linspace(0.2, 0.6 - 10 * h, 7),
                np.linspace(0.6 + 10 * h, 1.1 - 10 * h, 23),
                np.linspace(1.1 + 10 * h, 1.6, 7),
            ]
        )
        chi, d1, d2 = cutoff_eval(r, cut)
        chi_p, _, _ = cutoff_eval(r + h, cut)
        chi_m, _, _ = cutoff_eval(r - h, cut)
        fd1 = (chi_p - chi_m) / (2 * h)
        fd2 = (chi_p - 2 * chi + chi_m) / (h * h)
        assert np.max(np.abs(fd1 - d1)) <= 1e-6 * max(1.0, np.max(np.abs(d1)))
        assert np.max(np.abs(fd2 - d2)) <= 1e-5 * max(1.0, np.max(np.abs(d2)))
