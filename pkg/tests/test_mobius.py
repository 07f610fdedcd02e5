import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pspectra import (MobiusMap, balance, balanced_energy_bound,
                      cap_density, integrate, measure_density, moment_vector,
                      normalize_unit_volume, p_shift, solve_closed,
                      stereographic, stereographic_inverse, sup_image_volume,
                      SolveOptions)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


IDENTITY = MobiusMap(np.array([0.0, 0.0, 1.0]), 1.0)


class TestStereographic:
    def test_antipode_to_origin(self):
        a = unit([0.3, -0.2, 0.93])
        y = stereographic(a, -a)
        assert np.allclose(y, 0.0, atol=1e-14)

    def test_equator_to_unit_sphere(self):
        a = unit([0.0, 0.0, 1.0])
        x = unit([1.0, 0.0, 0.0])
        assert np.linalg.norm(stereographic(a, x)) == pytest.approx(1.0)

    def test_roundtrip_thousand_points(self):
        rng = np.random.default_rng(3)
        a = unit(rng.standard_normal(3))
        x = rng.standard_normal((1000, 3))
        x /= np.linalg.norm(x, axis=1)[:, None]
        x = x[(x @ a) < 1.0 - 1e-6]
        back = stereographic_inverse(a, stereographic(a, x))
        assert np.max(np.linalg.norm(back - x, axis=1)) < 1e-10

    def test_pole_rejected(self):
        a = unit([0.0, 1.0, 0.0])
        with pytest.raises(ValueError):
            stereographic(a, a)


class TestMobiusMap:
    def test_t1_identity(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((200, 3))
        x /= np.linalg.norm(x, axis=1)[:, None]
        g = MobiusMap(unit([1.0, 2.0, -0.5]), 1.0)
        assert np.array_equal(g.apply(x), x)

    def test_fixed_points(self):
        a = unit([0.4, 0.1, 0.9])
        g = MobiusMap(a, 0.35)
        assert np.linalg.norm(g.apply(a) - a) < 1e-12
        assert np.linalg.norm(g.apply(-a) + a) < 1e-12

    def test_image_on_sphere(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((500, 3))
        x /= np.linalg.norm(x, axis=1)[:, None]
        for t in [0.9, 0.5, 0.05, 1e-3, 1e-6]:
            g = MobiusMap(unit([0.1, -0.7, 0.7]), t)
            y = g.apply(x)
            assert np.max(np.abs(np.linalg.norm(y, axis=1) - 1.0)) <= 1e-12

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((300, 3))
        x /= np.linalg.norm(x, axis=1)[:, None]
        g = MobiusMap(unit([0.2, 0.5, -0.8]), 0.4)
        err = np.linalg.norm(g.inverse().apply(g.apply(x)) - x, axis=1)
        assert np.max(err) < 1e-9

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            MobiusMap(np.array([1.0, 1.0, 0.0]), 0.5)
        with pytest.raises(ValueError):
            MobiusMap(np.array([1.0, 0.0, 0.0]), 0.0)
        with pytest.raises(ValueError):
            MobiusMap(np.array([1.0, 0.0, 0.0]), 1.5)


class TestMomentVector:
    def test_symmetric_identity_zero(self, sphere3):
        dens = np.ones(sphere3.n_vertices)
        F = moment_vector(sphere3, sphere3.vertices, dens, 2.5, IDENTITY)
        assert np.linalg.norm(F) < 1e-10

    def test_concentration_pattern(self, sphere3):
        a = unit([0.3, -0.5, 0.81])
        p = 2.5
        dens = np.ones(sphere3.n_vertices)
        F = moment_vector(sphere3, sphere3.vertices, dens, p,
                          MobiusMap(a, 1e-3))
        pattern = np.sign(a) * np.abs(a) ** (p - 1.0)
        assert np.max(np.abs(F - pattern)) < 1e-2

    def test_p2_weighted_mean(self, sphere3):
        dens = cap_density(sphere3, [1.0, 0.2, 0.1], 4.0)
        F = moment_vector(sphere3, sphere3.vertices, dens, 2.0, IDENTITY)
        total = integrate(sphere3, dens)
        means = [integrate(sphere3, sphere3.vertices[:, i] * dens) / total
                 for i in range(3)]
        assert np.allclose(F, means, rtol=1e-12)


class TestBalance:
    def test_uniform_already_balanced(self, sphere3):
        dens = np.ones(sphere3.n_vertices)
        res = balance(sphere3, sphere3.vertices, dens, 2.0)
        assert res.converged
        assert res.map.t == pytest.approx(1.0)
        assert res.moment_norm <= 1e-6

    @pytest.mark.parametrize("p", [2.0, 1.7])
    def test_cap_density(self, sphere3, p):
        dens = cap_density(sphere3, [0.3, -0.5, 0.8], 8.0)
        res = balance(sphere3, sphere3.vertices, dens, p)
        assert res.converged
        assert res.moment_norm <= 1e-6
        assert res.map.t < 1.0

    def test_p2_matches_center_of_mass_oracle(self, sphere3):
        # independent p = 2 solver: root-find the mapped coordinate means
        from scipy.optimize import root
        from pspectra.mobius import _params_to_map

        dens = cap_density(sphere3, [0.1, 0.6, -0.7], 6.0)
        total = integrate(sphere3, dens)

        def mean_map(v):
            psi = _params_to_map(v).apply(sphere3.vertices)
            return [integrate(sphere3, psi[:, i] * dens) / total
                    for i in range(3)]

        sol = root(mean_map, np.array([0.05, 0.3, -0.35]), tol=1e-12)
        assert sol.success
        res = balance(sphere3, sphere3.vertices, dens, 2.0)
        psi = res.map.apply(sphere3.vertices)
        means = [integrate(sphere3, psi[:, i] * dens) / total
                 for i in range(3)]
        assert np.max(np.abs(means)) <= 1e-6
        oracle = _params_to_map(sol.x)
        assert np.linalg.norm(oracle.pole * (1 - oracle.t) / oracle.t
                              - res.map.pole * (1 - res.map.t) / res.map.t) \
            < 1e-4


class TestBalancedEnergyBound:
    def test_round_identity_prefactor_one(self, sphere3):
        # p = 2 on the unit-volume round sphere: bound is the conformally
        # invariant energy 2 * area, eigenvalue reaches it (sharp case)
        f = normalize_unit_volume(sphere3, np.ones(sphere3.n_vertices))
        bound = balanced_energy_bound(sphere3, f, sphere3.vertices, 2.0)
        assert bound == pytest.approx(2.0 * sphere3.total_measure, rel=1e-9)
        res = solve_closed(sphere3, f, SolveOptions(p=2.0, multistart=1))
        assert res.lam <= bound * 1.02
        assert res.lam >= bound * 0.95

    def test_prefactor_values(self, sphere2):
        from pspectra import energy_density_weight, pl_gradient_sq
        f = normalize_unit_volume(sphere2, np.ones(sphere2.n_vertices))
        p = 1.5
        hs = np.zeros(sphere2.n_elements)
        for i in range(3):
            hs += pl_gradient_sq(sphere2, sphere2.vertices[:, i].copy())
        ew = energy_density_weight(sphere2, f, p)[sphere2.elements].mean(axis=1)
        raw = float(np.sum(sphere2.element_measure * ew * hs ** (p / 2.0)))
        # prefactor (n+1)^|p/2-1| = 3^(1/4) at p = 1.5
        bound = balanced_energy_bound(sphere2, f, sphere2.vertices, p)
        assert bound == pytest.approx(3.0 ** 0.25 * raw, rel=1e-12)

    def test_rejects_unbalanced(self, sphere3):
        f = normalize_unit_volume(sphere3, np.ones(sphere3.n_vertices))
        skew = sphere3.vertices + np.array([0.5, 0.0, 0.0])
        skew /= np.linalg.norm(skew, axis=1)[:, None]
        with pytest.raises(ValueError):
            balanced_energy_bound(sphere3, f, skew, 2.0)

    @pytest.mark.parametrize("p", [1.7, 2.0])
    def test_pipeline_bound_holds(self, sphere3, p):
        f = normalize_unit_volume(
            sphere3, cap_density(sphere3, [0.2, 0.7, 0.4], 5.0))
        dens = measure_density(sphere3, f)
        res = balance(sphere3, sphere3.vertices, dens, p)
        assert res.converged
        psi = res.map.apply(sphere3.vertices)
        bound = balanced_energy_bound(sphere3, f, psi, p)
        rho = dens * sphere3.vertex_measure
        starts = [psi[:, i] - p_shift(psi[:, i], rho, p) for i in range(3)]
        solved = solve_closed(sphere3, f, SolveOptions(p=p, multistart=1),
                              extra_starts=starts)
        assert solved.lam <= bound * 1.02


class TestSupImageVolume:
    def test_identity_sphere(self, sphere3):
        sup = sup_image_volume(sphere3, sphere3.vertices)
        assert sup >= 4.0 * np.pi * 0.995
        assert sup == pytest.approx(sphere3.total_measure, rel=1e-6)

    def test_orbit_invariance(self, sphere3):
        g0 = MobiusMap(unit([0.2, -0.4, 0.89]), 1.0 / 1.5)
        sup1 = sup_image_volume(sphere3, sphere3.vertices)
        sup2 = sup_image_volume(sphere3, g0.apply(sphere3.vertices))
        assert sup2 == pytest.approx(sup1, rel=0.01)

    def test_degenerate_map(self, sphere2):
        phi = np.tile([0.0, 0.0, 1.0], (sphere2.n_vertices, 1))
        assert sup_image_volume(sphere2, phi) == 0.0


class TestElementaryInequalities:
    """Coordinate bounds used by the balanced-map energy argument."""

    rng = np.random.default_rng(99)

    def _unit_vectors(self, n):
        v = self.rng.standard_normal((n, 3))
        return v / np.linalg.norm(v, axis=1)[:, None]

    @pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
    def test_power_sums_p_ge_2(self, p):
        psi = self._unit_vectors(10_000)
        sums = np.sum(np.abs(psi) ** p, axis=1)
        assert np.all(sums <= 1.0 + 1e-12)
        assert np.all(sums >= 3.0 ** (1.0 - p / 2.0) - 1e-12)

    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0])
    def test_power_sums_p_le_2(self, p):
        psi = self._unit_vectors(10_000)
        sums = np.sum(np.abs(psi) ** p, axis=1)
        assert np.all(sums >= 1.0 - 1e-12)
        s = self.rng.random((10_000, 3))
        lhs = np.sum(s ** (p / 2.0), axis=1)
        rhs = 3.0 ** (1.0 - p / 2.0) * np.sum(s, axis=1) ** (p / 2.0)
        assert np.all(lhs <= rhs + 1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1.05, 8.0), st.integers(0, 2 ** 31 - 1))
    def test_gradient_sum_bound(self, p, seed):
        # sum |g_i|^(p/2) vs Hilbert-Schmidt combination, both directions
        rng = np.random.default_rng(seed)
        g = rng.random(3) * 5.0
        lhs = np.sum(g ** (p / 2.0))
        hs = np.sum(g) ** (p / 2.0)
        if p >= 2.0:
            assert lhs <= hs + 1e-12
        else:
            assert lhs <= 3.0 ** (1.0 - p / 2.0) * hs + 1e-12
