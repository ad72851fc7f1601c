import cmath
import math

import numpy as np
import pytest

from focklattice import (GridSpec, NumericalError, SchemaError,
                         builtin_sigma_multiplier, multiplier_bounds_check,
                         sigma_log, sigma_prime, sigma_tail_bound,
                         sigma_weighted_mag, user_multiplier)
from focklattice.classifier import TraceData, condition_a, condition_b


def literal_product(lat, z, tail_R):
    """Brute-force oracle: the truncated product by direct multiplication."""
    pts = lat.points[(np.abs(lat.points) > 0) & (np.abs(lat.points) <= tail_R)]
    pts = pts[np.argsort(np.abs(pts), kind="stable")]
    out = complex(z)
    for lam in pts:
        u = complex(z) / lam
        out *= (1.0 - u) * cmath.exp(u + 0.5 * u * u)
    return out


class TestSigmaLog:
    def test_matches_literal_product(self, lat12, rng):
        done = 0
        while done < 12:
            z = rng.uniform(-3, 3) + 1j * rng.uniform(-3, 3)
            if abs(z) > 3.0 or min(abs(z - p) for p in lat12.points) < 1e-3:
                continue
            got = cmath.exp(sigma_log(lat12, z, tail_R=12.0, infinite_tail=False))
            want = literal_product(lat12, z, 12.0)
            assert abs(got - want) <= 1e-10 * abs(want)
            done += 1

    def test_oddness(self, lat16, rng):
        for _ in range(10):
            z = rng.uniform(-2, 2) + 1j * rng.uniform(-2, 2)
            if min(abs(z - p) for p in lat16.points) < 1e-2:
                continue
            a = cmath.exp(sigma_log(lat16, z, tail_R=16.0))
            b = cmath.exp(sigma_log(lat16, -z, tail_R=16.0))
            assert abs(a + b) <= 1e-8 * abs(a)

    def test_normalised_at_origin(self, lat16):
        z = 1e-3
        val = cmath.exp(sigma_log(lat16, z, tail_R=16.0)) / z
        assert abs(val - 1.0) <= 1e-5

    def test_scalar_vector_agree(self, lat12):
        z = 0.37 + 0.21j
        a = sigma_log(lat12, z, tail_R=12.0)
        b = sigma_log(lat12, np.asarray([z]), tail_R=12.0)[0]
        assert abs(a - b) <= 1e-12

    def test_tail_radius_precondition(self, lat12):
        with pytest.raises(ValueError):
            sigma_log(lat12, 4.0 + 0j, tail_R=12.0)

    def test_on_lattice_rejected(self, lat12, scale):
        with pytest.raises(ValueError):
            sigma_log(lat12, scale + 0j, tail_R=12.0)

    def test_tail_bound_dominates_actual_tail(self, lat16, rng):
        # uncompensated sums at two truncations differ by less than the
        # reported analytic bound
        done = 0
        while done < 10:
            z = rng.uniform(-1.4, 1.4) + 1j * rng.uniform(-1.4, 1.4)
            if abs(z) > 1.9 or min(abs(z - p) for p in lat16.points) < 1e-2:
                continue
            a = sigma_log(lat16, z, tail_R=8.0, infinite_tail=False)
            b = sigma_log(lat16, z, tail_R=16.0, infinite_tail=False)
            bound = sigma_tail_bound(lat16, z, tail_R=8.0)
            assert abs(a - b) <= bound
            done += 1


class TestWeightedMag:
    def test_zero_on_lattice_points(self, lat12, scale):
        assert sigma_weighted_mag(lat12, scale * (1 + 1j)) == 0.0
        assert sigma_weighted_mag(lat12, 0.0) == 0.0

    def test_periodicity(self, lat16, rng, scale):
        zs, shifted = [], []
        while len(zs) < 100:
            z = rng.uniform(-0.45, 0.45) + 1j * rng.uniform(-0.45, 0.45)
            z *= scale
            if min(abs(z - p) for p in lat16.points) > 1e-3 and \
               min(abs(z + scale - p) for p in lat16.points) > 1e-3:
                zs.append(z)
        zs = np.asarray(zs)
        a = sigma_weighted_mag(lat16, zs, tail_R=16.0)
        b = sigma_weighted_mag(lat16, zs + scale, tail_R=16.0)
        assert np.max(np.abs(a - b) / np.maximum(a, b)) <= 1e-6

    def test_deep_hole_ratio(self, lat12, scale):
        deep = 0.5 * scale * (1 + 1j)
        val = sigma_weighted_mag(lat12, deep, tail_R=12.0)
        d = scale / math.sqrt(2)
        assert val > 0
        assert 0.1 < val / d < 10.0

    def test_two_sided_envelope(self, lat16, scale):
        n = 40
        xs = (np.arange(n) + 0.5) / n * scale - scale / 2
        X, Y = np.meshgrid(xs, xs)
        Z = (X + 1j * Y).ravel()
        Z = Z[np.abs(Z) > 5e-2]
        W = sigma_weighted_mag(lat16, Z, tail_R=16.0)
        neigh = np.asarray([scale * (a + 1j * b)
                            for a in (-1, 0, 1) for b in (-1, 0, 1)])
        dist = np.min(np.abs(Z[:, None] - neigh[None, :]), axis=1)
        ratio = W / np.minimum(1.0, dist)
        assert ratio.max() / ratio.min() < 50.0


class TestSigmaPrime:
    def test_origin_normalisation(self, lat12):
        assert sigma_prime(lat12, 0) == 1.0

    def test_weighted_magnitude_constant(self, lat16):
        # |sigma'(lambda)| e^{-|lambda|^2} = 1, cross-checked against the
        # finite-difference path built into sigma_prime
        idx = [i for i, p in enumerate(lat16.points) if 0 < abs(p) <= 4.0]
        for i in idx:
            sp = sigma_prime(lat16, i, cross_check=True)
            lam = lat16.points[i]
            assert abs(sp) * math.exp(-abs(lam) ** 2) == pytest.approx(1.0,
                                                                       abs=1e-5)

    def test_even_under_negation(self, lat16):
        for i, p in enumerate(lat16.points):
            if not 0 < abs(p) <= 3.0:
                continue
            j = int(np.argmin(np.abs(lat16.points + p)))
            a = sigma_prime(lat16, i, cross_check=False)
            b = sigma_prime(lat16, j, cross_check=False)
            assert abs(a - b) <= 1e-8 * abs(a)

    def test_guard_band_enforced(self, lat12):
        far = int(np.argmax(np.abs(lat12.points)))
        with pytest.raises(ValueError):
            sigma_prime(lat12, far)


class TestBuiltinMultiplier:
    def test_derivative_envelope_tight(self, mult16):
        c, C = mult16.derivative_envelope()
        # classical lattice: |g'| e^{-phi} rho is exactly rho |sigma'| e^{-..}
        assert c == pytest.approx((4 * math.pi) ** -0.5, rel=1e-4)
        assert C == pytest.approx((4 * math.pi) ** -0.5, rel=1e-4)

    def test_weighted_mag_zero_on_lattice(self, mult16, scale):
        assert mult16.weighted_mag(scale * (2 + 1j)) == 0.0

    def test_requires_square_lattice(self, cw):
        from focklattice import explicit_lattice
        lat = explicit_lattice([0.0, 1.5, 3.0, 1.5j, 3j, -1.5, -3.0], cw)
        with pytest.raises(SchemaError):
            builtin_sigma_multiplier(lat)

    def test_bounds_check_stable_under_refinement(self, mult16):
        g1 = GridSpec(-2.0, 2.0, -2.0, 2.0, 60, 60)
        g2 = GridSpec(-2.0, 2.0, -2.0, 2.0, 120, 120)
        r1 = multiplier_bounds_check(mult16, g1)
        r2 = multiplier_bounds_check(mult16, g2)
        assert r1.spread == pytest.approx(r2.spread, rel=0.05)


class TestUserMultiplier:
    def _sigma_table(self, lat, mult):
        gw = mult.g_prime_weighted()
        return gw, dict(enumerate(gw))

    def test_reproduces_builtin_trace_ops(self, lat12, mult12, cw):
        gw, table = self._sigma_table(lat12, mult12)
        um = user_multiplier(lat12, cw, table, weighted=True)
        d1 = TraceData.gaussian(lat12, mult12, cw, 2.0, 0.3)
        d2 = TraceData.gaussian(lat12, um, cw, 2.0, 0.3)
        r1, r2 = condition_b(d1), condition_b(d2)
        t1 = np.asarray(r1.partial_trajectory)
        t2 = np.asarray(r2.partial_trajectory)
        assert np.allclose(t1, t2, rtol=1e-12)

    def test_scaled_table_scales_d_not_verdicts(self, lat12, mult12, cw):
        gw, _ = self._sigma_table(lat12, mult12)
        kappa = 2.5 - 1.0j
        um = user_multiplier(lat12, cw, dict(enumerate(kappa * gw)),
                             weighted=True)
        base = TraceData.gaussian(lat12, mult12, cw, 2.0, 0.3)
        scaled = TraceData.gaussian(lat12, um, cw, 2.0, 0.3)
        assert np.allclose(scaled.d.values, base.d.values / kappa, rtol=1e-12)
        assert condition_a(base).verdict == condition_a(scaled).verdict
        assert condition_b(base).verdict == condition_b(scaled).verdict

    def test_zero_entry_rejected(self, lat12, cw):
        table = {i: 1.0 + 0j for i in range(len(lat12))}
        table[3] = 0.0
        with pytest.raises(SchemaError):
            user_multiplier(lat12, cw, table)

    def test_missing_index_rejected(self, lat12, cw):
        table = {i: 1.0 + 0j for i in range(len(lat12) - 1)}
        with pytest.raises(SchemaError):
            user_multiplier(lat12, cw, table)

    def test_no_log_g(self, lat12, mult12, cw):
        gw, table = self._sigma_table(lat12, mult12)
        um = user_multiplier(lat12, cw, table, weighted=True)
        with pytest.raises(NumericalError):
            um.log_g(0.3 + 0.2j)

    def test_ops_depend_on_g_only_through_gprime(self, lat12, mult12, cw):
        gw, table = self._sigma_table(lat12, mult12)
        um1 = user_multiplier(lat12, cw, table, weighted=True)
        um2 = user_multiplier(lat12, cw, table, weighted=True,
                              weighted_mag_table=lambda z: np.zeros_like(z))
        da = TraceData.gaussian(lat12, um1, cw, 2.0, 0.2 + 0.1j)
        db = TraceData.gaussian(lat12, um2, cw, 2.0, 0.2 + 0.1j)
        ra, rb = condition_b(da), condition_b(db)
        assert np.allclose(np.asarray(ra.partial_trajectory),
                           np.asarray(rb.partial_trajectory), rtol=0)
