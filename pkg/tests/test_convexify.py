import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ricci_timechange.convexify import (
    ConvexifyParams,
    Cutoff,
    DomainMask,
    build_weight,
    convexity_certificate,
    cot_kn,
    cutoff_phi,
    disc_mask,
    laplacian_bound_check,
    minkowski_content,
    periodic_offset,
    sample_pairs,
    signed_distance,
    zero_set_segments,
)
from ricci_timechange.dirichlet import assemble_generator
from ricci_timechange.mesh import build_torus_mesh, flat_metric
from ricci_timechange.metricgeom import build_path_graph

L = 2 * math.pi
R = 1.0


def coth_series(x, terms=60):
    """coth via the continued-fraction-free series cosh/sinh in exact rationals."""
    xf = Fraction(x)
    ch = sh = Fraction(0)
    term = Fraction(1)
    for k in range(terms):
        if k % 2 == 0:
            ch += term
        else:
            sh += term
        term = term * xf / (k + 1)
    return float(ch / sh)


def disc_setup(n, complement=True, radius=R, method="auto"):
    mesh = build_torus_mesh(n, n, L, L)
    mask = disc_mask(mesh, (L / 2, L / 2), radius, complement=complement)
    V = signed_distance(None, mask, method)
    return mesh, mask, V


class TestCotKN:
    def test_flat_branch(self):
        assert cot_kn(0, 3, 2) == 1.0

    def test_positive_branch(self):
        assert cot_kn(1, 2, math.pi / 4) == pytest.approx(1.0, rel=1e-15)

    def test_negative_branch_is_coth(self):
        assert coth_series(1) == pytest.approx(1.3130352854993312, rel=1e-15)
        assert cot_kn(-1, 2, 1.0) == pytest.approx(1.3130352854993312, rel=1e-15)

    @pytest.mark.parametrize("N, x", [(2, 0.5), (3, 1.0), (5.5, 2.0)])
    def test_continuity_at_zero_curvature(self, N, x):
        flat = cot_kn(0, N, x)
        for K in (1e-6, -1e-6):
            assert abs(cot_kn(K, N, x) - flat) <= 1e-4 * flat

    @pytest.mark.parametrize("args", [(0, 1, 1.0), (0, 2, 0.0), (0, 2, -1.0), (1, 2, math.pi), (4, 2, 2.0)])
    def test_errors(self, args):
        with pytest.raises(ValueError):
            cot_kn(*args)


class TestCutoff:
    def test_identity_at_zero(self):
        phi, d1, d2 = cutoff_phi(-1.1, 0.5, 0.0)
        assert (phi, d1, d2) == (0.0, 1.0, 0.0)

    def test_plateau(self):
        lp, r0 = -1.1, 0.5
        t = np.array([-0.75 * lp * r0, 1.0, 10.0])
        phi, d1, _ = cutoff_phi(lp, r0, t)
        np.testing.assert_array_equal(phi, -0.5 * lp * r0)
        np.testing.assert_array_equal(d1, 0.0)
        phi, d1, _ = cutoff_phi(lp, r0, -t)
        np.testing.assert_array_equal(phi, 0.5 * lp * r0)

    def test_identity_band_exact(self):
        lp, r0 = -2.0, 0.3
        t = np.linspace(0.25 * lp * r0, -0.25 * lp * r0, 101)
        np.testing.assert_array_equal(cutoff_phi(lp, r0, t)[0], t)

    @given(st.floats(-5, -0.01), st.floats(0.01, 5))
    def test_constraints_on_grid(self, lp, r0):
        c = Cutoff(lp, r0)
        assert c.audit["passed"]
        t = np.linspace(-2 * lp * r0, 2 * lp * r0, 2001)
        phi, d1, d2 = c.evaluate(t)
        assert d1.min() >= 0 and d1.max() <= 1
        assert np.abs(d2).max() <= -2 / (lp * r0) * (1 + 1e-12)
        assert np.abs(phi).max() == pytest.approx(-0.5 * lp * r0, rel=1e-15)

    def test_derivatives_match_differences(self):
        c = Cutoff(-1.0, 1.0)
        t = np.linspace(-1, 1, 4001)
        phi, d1, _ = c.evaluate(t)
        mid = 0.5 * (d1[1:] + d1[:-1])
        np.testing.assert_allclose(np.diff(phi) / np.diff(t), mid, atol=1e-12)

    def test_first_derivative_continuous(self):
        c = Cutoff(-1.0, 1.0)
        for knot in (c.a, 3 * c.a):
            lo, hi = c.evaluate([knot - 1e-9, knot + 1e-9])[1]
            assert abs(hi - lo) < 1e-8

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            Cutoff(0.5, 1.0)
        with pytest.raises(ValueError):
            Cutoff(-0.5, 0.0)


class TestParams:
    def test_bound(self):
        p = ConvexifyParams(-1.1, 0.5)
        assert p.laplacian_bound == pytest.approx(1.1 * (1 / 0.125 + 4))

    @pytest.mark.parametrize("kw", [dict(ell_prime=0.1, r0=1), dict(ell_prime=-1, r0=0),
                                    dict(ell_prime=-1, r0=1, N=1), dict(ell_prime=-1, r0=1, N=math.inf)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ConvexifyParams(**kw)


class TestSignedDistance:
    def test_sign_convention_deep_inside(self):
        mesh, mask, _ = disc_setup(64, complement=False, radius=2.0)
        V = signed_distance(build_path_graph(mesh), mask)
        c = mesh.index(32, 32)
        assert V.values[c] < 0
        assert np.all(V.values[mask.inside] < 0) and np.all(V.values[~mask.inside] > 0)
        # graph routes are never shorter than chart segments, and the axis route bounds it above
        h = mesh.spacing[0]
        assert -h * math.ceil(2.0 / h - 1e-12) <= V.values[c] <= -2.0

    def test_boundary_adjacent_within_one_edge(self):
        mesh, mask, _ = disc_setup(64, complement=False)
        g = build_path_graph(mesh)
        V = signed_distance(g, mask)
        ins = mask.inside
        cross = ins[g.i] != ins[g.j]
        adjacent = np.unique(np.concatenate([g.i[cross], g.j[cross]]))
        assert np.all(np.abs(V.values[adjacent]) <= g.length.max() + 1e-15)

    def test_ball_graph_distance_close_to_euclidean(self):
        for n in (64, 128):
            mesh, mask, _ = disc_setup(n, complement=False, radius=1.5)
            h = mesh.spacing[0]
            V = signed_distance(build_path_graph(mesh), mask).values
            exact = np.linalg.norm(periodic_offset(mesh, (L / 2, L / 2)), axis=1) - 1.5
            near = np.abs(exact) < 10 * h
            # 8-neighbour graph distances overshoot Euclidean ones by at most 1/cos(pi/8)
            assert np.all(np.abs(V[near] - exact[near]) <= 0.083 * np.abs(exact[near]) + 2 * h)

    def test_ball_polyline_is_order_h(self):
        errs = []
        for n in (64, 128, 256):
            mesh, mask, V = disc_setup(n, complement=False, radius=1.5, method="polyline")
            exact = np.linalg.norm(periodic_offset(mesh, (L / 2, L / 2)), axis=1) - 1.5
            near = np.abs(exact) < 1.0
            errs.append(np.abs(V.values - exact)[near].max())
            assert errs[-1] <= mesh.spacing[0]
        assert errs[0] / errs[-1] > 3.5

    @pytest.mark.parametrize("method", ["level_set", "polyline"])
    def test_one_lipschitz_on_edges(self, method):
        mesh, mask, V = disc_setup(128, method=method)
        g = build_path_graph(mesh)
        ratio = np.abs(V.values[g.i] - V.values[g.j]) / g.base_length
        assert ratio.max() <= 1 + 1e-12

    def test_graph_version_lipschitz(self):
        # each side is a graph distance to a node set, hence 1-Lipschitz; an edge
        # crossing the boundary joins -d(i, outside) to +d(j, inside), up to 2 edges apart
        mesh, mask, _ = disc_setup(128)
        g = build_path_graph(mesh)
        V = signed_distance(g, mask).values
        ratio = np.abs(V[g.i] - V[g.j]) / g.length
        cross = mask.inside[g.i] != mask.inside[g.j]
        assert ratio[~cross].max() <= 1 + 1e-12
        assert ratio[cross].max() <= 2 + 1e-12

    def test_zero_set_segments_lie_on_circle(self):
        mesh, mask, _ = disc_setup(64)
        A, B = zero_set_segments(mesh, mask.level_set)
        assert len(A) > 0
        rA = np.linalg.norm(A - L / 2, axis=1)
        np.testing.assert_allclose(rA, R, atol=mesh.spacing[0] ** 2)
        total = np.linalg.norm(B - A, axis=1).sum()
        assert total == pytest.approx(2 * math.pi * R, rel=0.01)

    def test_level_set_method_matches_radius(self):
        mesh, mask, V = disc_setup(64)
        r = np.linalg.norm(periodic_offset(mesh, (L / 2, L / 2)), axis=1)
        np.testing.assert_allclose(V.values, R - r, atol=1e-15)
        assert mask.best_method == "level_set"

    def test_errors(self):
        mesh = build_torus_mesh(16, 16, 1.0, 1.0)
        with pytest.raises(ValueError, match="min period"):
            disc_mask(mesh, (0.5, 0.5), 0.6)
        with pytest.raises(ValueError, match="both"):
            DomainMask(mesh, np.zeros(mesh.n_nodes, bool))
        mask = DomainMask(mesh, np.arange(mesh.n_nodes) < 40)
        with pytest.raises(ValueError, match="level_set"):
            signed_distance(None, mask, "polyline")
        with pytest.raises(ValueError, match="not declared"):
            signed_distance(None, mask, "level_set")
        with pytest.raises(ValueError, match="unknown method"):
            signed_distance(None, mask, "fast-marching")
        with pytest.raises(ValueError, match="negative exactly"):
            DomainMask(mesh, np.arange(mesh.n_nodes) < 40, level_set=np.ones(mesh.n_nodes))


class TestBuildWeight:
    def test_plateaus_and_sup_norm(self):
        _, _, V = disc_setup(128)
        p = ConvexifyParams(-1.1 / R, R / 2)
        w = build_weight(V, p).values
        deep = V.values <= -0.75 * p.r0
        far = V.values >= 0.75 * p.r0
        np.testing.assert_array_equal(w[deep], 0.5 * p.ell_prime * p.r0)
        np.testing.assert_array_equal(w[far], -0.5 * p.ell_prime * p.r0)
        assert np.abs(w).max() == -0.5 * p.ell_prime * p.r0

    def test_zero_on_zero_level(self):
        mesh = build_torus_mesh(16, 16, 1.0, 1.0)
        from ricci_timechange.mesh import ScalarField
        V = ScalarField(mesh, np.where(np.arange(mesh.n_nodes) % 3 == 0, 0.0, 0.1))
        w = build_weight(V, ConvexifyParams(-2.0, 0.4)).values
        assert np.all(w[V.values == 0.0] == 0.0)

    def test_lipschitz_bound(self):
        for n in (64, 128):
            mesh, _, V = disc_setup(n)
            p = ConvexifyParams(-1.1 / R, R / 2)
            w = build_weight(V, p).values
            g = build_path_graph(mesh)
            lip = (np.abs(w[g.i] - w[g.j]) / g.base_length).max()
            assert lip <= abs(p.ell_prime) * (1 + 2 * mesh.spacing[0])


class TestLaplacianBound:
    def test_constant_weight_gives_full_bound(self):
        mesh, mask, V = disc_setup(64)
        gen = assemble_generator(mesh, flat_metric(mesh))
        p = ConvexifyParams(-1.1, 0.5)
        rep = laplacian_bound_check(gen, V.with_values(np.full(mesh.n_nodes, 0.3)), p, mask, V)
        assert rep.bound > 0
        finite = rep.defect[np.isfinite(rep.defect)]
        np.testing.assert_array_equal(finite, p.laplacian_bound)
        assert np.isnan(rep.defect[np.abs(V.values) <= mask.band_radius]).all()

    def test_disc_complement_matches_radial_closed_form(self):
        # inside r > R: V = R - r and w = phi(l'(r - R)), so
        # Lw = l'^2 phi''(s) + l' phi'(s) / r at s = l'(r - R)
        errs = []
        for n in (128, 256):
            mesh, mask, V = disc_setup(n)
            # wide transition bands so both smooth pieces survive the exclusions
            p = ConvexifyParams(-1.1 / R, 1.6 * R)
            w = build_weight(V, p)
            gen = assemble_generator(mesh, flat_metric(mesh))
            r = np.linalg.norm(periodic_offset(mesh, (L / 2, L / 2)), axis=1)
            s = p.ell_prime * (r - R)
            _, d1, d2 = Cutoff(p.ell_prime, p.r0).evaluate(s)
            exact = p.ell_prime**2 * d2 + p.ell_prime * d1 / np.maximum(r, mesh.spacing[0])
            a = -p.ell_prime * p.r0 / 4
            h = mesh.spacing[0]
            smooth = (r > R + 4 * h) & (r < 2.9) & np.all(
                [np.abs(np.abs(s) - k) > 3 * h * abs(p.ell_prime) for k in (a, 3 * a)], axis=0)
            errs.append(np.abs(gen.apply(w.values) - exact)[smooth].max())
        # near second order; the exclusion zones shrink with h towards the phi'' jumps
        assert errs[1] < 1e-3
        assert errs[0] / errs[1] > 3.0

    def test_disc_complement_defect_nonnegative_and_settling(self):
        mins = []
        for n in (64, 128, 256):
            mesh, mask, V = disc_setup(n)
            p = ConvexifyParams(-1.1 / R, R / 2)
            w = build_weight(V, p)
            gen = assemble_generator(mesh, flat_metric(mesh))
            rep = laplacian_bound_check(gen, w, p, mask, V)
            assert rep.passed
            mins.append(rep.min_defect)
        assert abs(mins[2] - mins[1]) < abs(mins[1] - mins[0])


class TestCertificate:
    def test_convex_ball_no_violations(self):
        mesh, mask, V = disc_setup(128, complement=False, radius=2.0)
        cert = convexity_certificate(build_path_graph(mesh), mask, 300, 3, V, max_pair_distance=2.0)
        assert cert.pairs == 300
        assert cert.passed and cert.violations == 0

    def test_control_fails_and_treatment_passes(self):
        mesh, mask, V = disc_setup(128)
        p = ConvexifyParams(-1.1 / R, R / 2)
        g0 = build_path_graph(mesh)
        control = convexity_certificate(g0, mask, 1000, 11, V, 2 * R)
        treated = convexity_certificate(g0.with_weight(build_weight(V, p)), mask, 1000, 11, V, 2 * R)
        assert control.violations > 0 and not control.passed
        assert control.max_depth > mask.band_radius
        assert treated.violations == 0 and treated.passed
        assert treated.summary()["verdict"] == "pass"

    def test_sampling_is_seeded(self):
        _, mask, V = disc_setup(64)
        a = sample_pairs(mask, V, 100, 5, 1.0)
        assert a == sample_pairs(mask, V, 100, 5, 1.0)
        assert a != sample_pairs(mask, V, 100, 6, 1.0)
        assert all(mask.inside[s] and mask.inside[t] for s, t in a)


class TestMinkowski:
    def test_full_and_empty_sets(self):
        mesh = build_torus_mesh(32, 32, 1.0, 1.0)
        g = build_path_graph(mesh)
        assert minkowski_content(np.ones(mesh.n_nodes, bool), g).extrapolated == 0.0
        assert minkowski_content(np.zeros(mesh.n_nodes, bool), g).extrapolated == 0.0

    def test_single_node_shrinks(self):
        vals = []
        for n in (32, 64, 128):
            mesh = build_torus_mesh(n, n, 1.0, 1.0)
            z = np.zeros(mesh.n_nodes, bool)
            z[mesh.index(n // 2, n // 2)] = True
            est = minkowski_content(z, build_path_graph(mesh))
            assert max(est.ratios) <= 30 * mesh.spacing[0]
            vals.append(max(est.ratios))
        assert vals[2] < vals[1] < vals[0]

    @pytest.mark.parametrize("n", [64, 256])
    def test_disc_perimeter(self, n):
        _, mask, _ = disc_setup(n)
        est = minkowski_content(mask)
        assert est.extrapolated == pytest.approx(2 * math.pi * R, rel=0.05)

    def test_eps_floor(self):
        _, mask, _ = disc_setup(64)
        with pytest.raises(ValueError, match="2h"):
            minkowski_content(mask, eps_list=[0.01])
