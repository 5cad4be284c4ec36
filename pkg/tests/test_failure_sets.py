"""Geometry tests: membership, certificates, ray sections (against a dense
membership grid), and the overlap functional with its Monte Carlo oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catlab import (FailureSet, NoiseModel, SpectralMeasure, ZeroDenominator,
                    mu_overlap)
from catlab.failure_sets import degenerate_atom_rays, intersect_sections
from catlab.rng import substream


class TestContains:
    def test_half_space_inside(self):
        s = FailureSet.half_space([1.0, 0.0], 1.0)
        assert s.contains([2.0, 0.0]) is True

    def test_half_space_outside(self):
        s = FailureSet.half_space([1.0, 0.0], 1.0)
        assert s.contains([0.999, 0.0]) is False

    def test_half_space_boundary_closed(self):
        s = FailureSet.half_space([1.0, 0.0], 1.0)
        assert s.contains([1.0, 5.0]) is True

    def test_ball_complement_boundary_closed(self):
        s = FailureSet.ball_complement([0.0, 0.0], 1.0)
        assert s.contains([1.0, 0.0]) is True
        assert s.contains([0.5, 0.0]) is False

    def test_batched_membership(self):
        s = FailureSet.half_space([1.0], 1.2)
        got = s.contains(np.array([[1.3], [1.1], [1.2]]))
        assert got.tolist() == [True, False, True]

    def test_normal_is_normalized(self):
        s = FailureSet.half_space([2.0, 0.0], 3.0)
        assert np.allclose(s.normals[0], [1.0, 0.0])
        assert s.offsets[0] == pytest.approx(1.5)
        assert s.delta0 == pytest.approx(1.5)


class TestCertificates:
    def test_intersection_delta0_is_max_threshold(self):
        s = FailureSet.intersection([([1.0, 0.0], 1.0), ([0.0, 1.0], 2.5)])
        assert s.delta0 == pytest.approx(2.5)

    def test_empty_intersection_rejected(self):
        with pytest.raises(ValueError):
            FailureSet.intersection([([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)])

    def test_oblique_intersection_accepted(self):
        # normals at an obtuse angle but jointly feasible (corner region)
        s = FailureSet.intersection([([1.0, 0.0], 1.0),
                                     ([-1.0, 1.0], 1.0)])
        assert s.contains([1.0, 3.0])

    def test_ball_complement_certificate(self):
        s = FailureSet.ball_complement([0.3, 0.0], 1.0)
        assert s.delta0 == pytest.approx(0.7)

    @pytest.mark.parametrize("make", [
        lambda: FailureSet.half_space([0.8, 0.6], 1.2),
        lambda: FailureSet.intersection([([1.0, 0.0], 1.0), ([0.6, 0.8], 0.5)]),
        lambda: FailureSet.ball_complement([0.2, -0.1], 0.9),
    ])
    def test_members_respect_delta0(self, make):
        # rejection-sample members from a heavy-tailed cloud and check the
        # origin-distance certificate on all of them
        s = make()
        rng = substream(21, 0)
        pts = rng.standard_t(df=2, size=(1_000_000, 2)) * 2.0
        members = pts[np.asarray(s.contains(pts))]
        assert members.shape[0] > 1000
        assert np.linalg.norm(members, axis=1).min() >= s.delta0 - 1e-12


class TestRaySections:
    @given(kind=st.sampled_from(["half_space", "intersection", "ball"]),
           vx=st.floats(-2, 2), vy=st.floats(-2, 2),
           bx=st.floats(-1, 1), by=st.floats(-1, 1), data=st.data())
    @settings(max_examples=120, deadline=None)
    def test_sections_agree_with_grid_membership(self, kind, vx, vy, bx, by, data):
        if abs(vx) + abs(vy) < 1e-3:
            return
        if kind == "half_space":
            c = data.draw(st.floats(0.2, 2.0))
            s = FailureSet.half_space([0.6, 0.8], c)
        elif kind == "intersection":
            s = FailureSet.intersection([([1.0, 0.0], data.draw(st.floats(0.2, 1.5))),
                                         ([0.0, 1.0], data.draw(st.floats(0.2, 1.5)))])
        else:
            s = FailureSet.ball_complement([0.2, 0.1], data.draw(st.floats(0.5, 2.0)))
        v = np.array([vx, vy])
        b = np.array([bx, by])
        secs = s.ray_sections(v, base=b)
        grid = np.linspace(1e-3, 30.0, 1500)
        member = np.asarray(s.contains(b[None, :] + grid[:, None] * v[None, :]))
        in_secs = np.zeros_like(member)
        for lo, hi in secs:
            in_secs |= (grid >= lo - 1e-9) & (grid <= hi + 1e-9)
        # tolerate endpoint-straddling grid points
        mismatch = member != in_secs
        if mismatch.any():
            bad = grid[mismatch]
            ends = [e for lo, hi in secs for e in (lo, hi) if e != math.inf]
            assert all(min((abs(g - e) for e in ends), default=1e9) < 0.05
                       for g in bad)

    def test_sections_disjoint_and_sorted(self):
        s = FailureSet.ball_complement([0.1, 0.0], 1.0)
        secs = s.ray_sections(np.array([1.0, 0.0]), base=np.array([-3.0, 0.0]))
        assert secs == sorted(secs)
        for (lo1, hi1), (lo2, hi2) in zip(secs, secs[1:]):
            assert hi1 < lo2

    def test_intersect_sections(self):
        a = [(1.0, 3.0), (5.0, math.inf)]
        b = [(2.0, 6.0)]
        assert intersect_sections(a, b) == [(2.0, 3.0), (5.0, 6.0)]


class TestOverlap:
    @pytest.fixture
    def noise_1d(self):
        return NoiseModel(alpha=1.5, spectral=SpectralMeasure.tail_balance(1.0))

    def test_same_set_gives_one(self, noise_1d):
        g = FailureSet.half_space([1.0], 1.0)
        mu, se = mu_overlap(noise_1d, np.array([[3.0]]), g, g)
        assert mu == 1.0 and se == 0.0

    def test_nested_halfline_closed_form(self, noise_1d):
        # doubling the threshold scales the overlap by 2^{-alpha}
        g = FailureSet.half_space([1.0], 1.0)
        p = FailureSet.half_space([1.0], 2.0)
        mu, _ = mu_overlap(noise_1d, np.array([[3.0]]), g, p)
        assert mu == pytest.approx(2.0 ** -1.5, rel=1e-12)

    def test_nested_halfline_mc_oracle(self, noise_1d):
        g = FailureSet.half_space([1.0], 1.0)
        p = FailureSet.half_space([1.0], 2.0)
        mu, se = mu_overlap(noise_1d, np.array([[3.0]]), g, p,
                            mc_samples=400_000, rng=substream(22, 0), method="mc")
        assert abs(mu - 2.0 ** -1.5) < 3 * se

    def test_disjoint_sets_give_zero(self):
        spectral = SpectralMeasure.from_atoms([([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)])
        noise = NoiseModel(alpha=2.0, spectral=spectral)
        g = FailureSet.half_space([1.0, 0.0], 1.0)
        p = FailureSet.half_space([-1.0, 0.0], 1.0)
        mu, _ = mu_overlap(noise, np.eye(2), g, p)
        assert mu == 0.0

    def test_monotone_in_reference_set(self, noise_1d):
        g = FailureSet.half_space([1.0], 1.0)
        agg = np.array([[3.0]])
        mus = [mu_overlap(noise_1d, agg, g, FailureSet.half_space([1.0], c))[0]
               for c in (2.4, 2.0, 1.5)]
        assert mus == sorted(mus)

    def test_scale_covariance(self, noise_1d):
        g = FailureSet.half_space([1.0], 1.0)
        p = FailureSet.half_space([1.0], 1.7)
        agg = np.array([[3.0]])
        base, _ = mu_overlap(noise_1d, agg, g, p)
        for c in (0.5, 2.0, 10.0):
            got, _ = mu_overlap(noise_1d, agg, g.scaled(c), p.scaled(c))
            assert got == pytest.approx(base, rel=1e-12)

    def test_zero_denominator(self):
        # the only atom points away from the half-space
        spectral = SpectralMeasure.from_atoms([([0.0, 1.0], 1.0)])
        noise = NoiseModel(alpha=2.0, spectral=spectral)
        g = FailureSet.half_space([1.0, 0.0], 1.0)
        with pytest.raises(ZeroDenominator):
            mu_overlap(noise, np.eye(2), g, g)


class TestDegeneracy:
    def test_near_parallel_ray_flagged(self):
        atoms = (((np.array([1.0, 1e-12]) / math.hypot(1.0, 1e-12)), 1.0),)
        g = FailureSet.half_space([0.0, 1.0], 1.0)
        assert degenerate_atom_rays(np.eye(2), atoms, g) == [0]

    def test_orthogonal_ray_not_flagged(self):
        atoms = ((np.array([1.0, 0.0]), 1.0),)
        g = FailureSet.half_space([0.0, 1.0], 1.0)
        assert degenerate_atom_rays(np.eye(2), atoms, g) == []


def test_config_round_trip():
    for s in (FailureSet.half_space([0.6, 0.8], 1.2),
              FailureSet.intersection([([1.0, 0.0], 1.0), ([0.0, 1.0], 0.7)]),
              FailureSet.ball_complement([0.1, 0.2], 1.5)):
        back = FailureSet.from_config_dict(s.to_config_dict())
        assert back.kind == s.kind
        assert back.delta0 == pytest.approx(s.delta0)
        pts = np.array([[2.0, 2.0], [0.1, 0.1], [-3.0, 0.5]])
        assert np.array_equal(back.contains(pts), s.contains(pts))
