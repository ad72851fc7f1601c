import math

import numpy as np
import pytest

from focklattice import (classify, condition_a, condition_b,
                         condition_bprime, condition_c, condition_inf_b,
                         power_weight, select_branch, square_lattice,
                         trajectory_verdict, user_multiplier)
from focklattice.classifier import TraceData


class TestTrajectoryVerdict:
    def test_flat_is_bounded(self):
        r = np.geomspace(0.5, 50, 40)
        v = 1.0 - np.exp(-r)
        verdict, _ = trajectory_verdict(r, v)
        assert verdict == "bounded"

    def test_power_law_is_diverging(self):
        r = np.geomspace(0.5, 50, 40)
        verdict, expo = trajectory_verdict(r, 0.3 * r ** 2)
        assert verdict == "diverging"
        assert expo == pytest.approx(2.0, abs=0.01)

    def test_zero_is_bounded(self):
        r = np.geomspace(1, 10, 10)
        assert trajectory_verdict(r, np.zeros(10)) == ("bounded", None)

    def test_log_growth_not_bounded(self):
        r = np.geomspace(0.5, 200, 60)
        verdict, _ = trajectory_verdict(r, np.log(1 + r))
        assert verdict != "bounded"


class TestConditionA:
    def test_gaussian_trace_total_matches_oracle(self, lat16, mult16, cw):
        # weighted terms are e^{-2|lambda-w|^2}: closed-form oracle; the
        # bounded verdict at desk scale needs the larger acceptance lattice
        # (the last decade must start beyond the Gaussian bulk)
        data = TraceData.gaussian(lat16, mult16, cw, 2.0, 1.0 + 1.0j)
        rep = condition_a(data)
        assert rep.verdict != "diverging"
        lam = lat16.points
        oracle = float(np.sum(np.exp(-2 * np.abs(lam - (1 + 1j)) ** 2)))
        assert rep.final_value == pytest.approx(oracle, rel=1e-10)

    def test_origin_gaussian_trace_bounded(self, lat16, mult16, cw):
        data = TraceData.gaussian(lat16, mult16, cw, math.inf, 0.0)
        rep = condition_a(data)
        assert rep.verdict == "bounded"

    def test_phi_sized_data_p2_diverges_like_count(self, lat16, mult16, cw):
        data = TraceData.from_weighted(lat16, mult16, cw, 2.0,
                                       np.ones(len(lat16), complex))
        rep = condition_a(data)
        assert rep.verdict == "diverging"
        assert rep.growth_exponent == pytest.approx(2.0, abs=0.2)

    def test_phi_sized_data_sup_bounded(self, lat16, mult16, cw):
        data = TraceData.from_weighted(lat16, mult16, cw, math.inf,
                                       np.ones(len(lat16), complex))
        rep = condition_a(data)
        assert rep.condition_id == "inf_a"
        assert rep.verdict == "bounded"
        assert rep.final_value == 1.0

    def test_zero_data(self, lat16, mult16, cw):
        data = TraceData.zero(lat16, mult16, cw, 1.0)
        rep = condition_a(data)
        assert rep.verdict == "bounded"
        assert rep.final_value == 0.0

    def test_monotone_trajectory(self, lat16, mult16, cw):
        data = TraceData.gaussian(lat16, mult16, cw, 2.0, 0.4)
        vals = [v for _, v in condition_a(data).partial_trajectory]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestConditionsBC:
    def test_zero_data_all_zero(self, lat12, mult12, cw):
        data = TraceData.zero(lat12, mult12, cw, 2.0)
        assert condition_b(data).final_value == 0.0
        assert condition_c(data).final_value == 0.0

    def test_bprime_first_order_equals_b(self, lat12, mult12, cw):
        data = TraceData.gaussian(lat12, mult12, cw, 3.0, 0.2)
        reps = condition_bprime(data, 2)
        rb = condition_b(data)
        t1 = np.asarray(reps[0].partial_trajectory)
        tb = np.asarray(rb.partial_trajectory)
        assert np.allclose(t1, tb, rtol=1e-12)

    def test_scaling_invariance_of_verdicts(self, lat16, mult16, cw):
        base = TraceData.gaussian(lat16, mult16, cw, 2.0, 0.3 + 0.2j)
        kappa = 37.0 - 11.0j
        scaled = TraceData.from_weighted(lat16, mult16, cw, 2.0,
                                         kappa * base.c_weighted)
        for cond in (condition_a, condition_b):
            ra, rs = cond(base), cond(scaled)
            assert ra.verdict == rs.verdict
            va = np.asarray([v for _, v in ra.partial_trajectory])
            vs = np.asarray([v for _, v in rs.partial_trajectory])
            assert np.allclose(vs, abs(kappa) ** 2 * va, rtol=1e-9)

    def test_inf_b_requires_inf(self, lat12, mult12, cw):
        data = TraceData.gaussian(lat12, mult12, cw, 2.0, 0.1)
        with pytest.raises(ValueError):
            condition_inf_b(data)


class TestBranchSelection:
    def test_purity(self, cw):
        b1 = select_branch(3.0, cw)
        b2 = select_branch(3.0, cw)
        assert b1 == b2

    def test_p1_branch(self, cw):
        assert select_branch(1.0, cw).condition_ids == ("a", "b", "c")

    def test_p2_branch(self, cw):
        assert select_branch(2.0, cw).condition_ids == ("a", "b")

    def test_classical_p5(self, cw):
        br = select_branch(5.0, cw)
        assert br.condition_ids == ("a", "b")
        assert br.t_effective > 0.5
        assert br.is_ap

    def test_power_small_gamma_p3(self):
        pw = power_weight(0.5, rho_origin=2.0)
        br = select_branch(3.0, pw)
        assert br.n_max == 5
        assert br.condition_ids == ("a", "bprime(1)", "bprime(2)", "bprime(3)",
                                    "bprime(4)", "bprime(5)")

    def test_inf_branch_classical(self, cw):
        br = select_branch(math.inf, cw)
        assert br.condition_ids == ("inf_a", "inf_b", "inf_c(2)")
        assert br.n_max == 2


class TestClassify:
    def test_gaussian_sup_norm_bounded_small_lattice(self, lat16, mult16, cw):
        data = TraceData.gaussian(lat16, mult16, cw, math.inf, 0.3 + 0.1j)
        verdict = classify(data)
        assert verdict.branch.case == "p=inf"
        assert verdict.overall == "bounded"

    def test_zero_trace_bounded_everywhere(self, lat12, mult12, cw):
        for p in (1.0, 1.5, 2.0, 3.0, math.inf):
            verdict = classify(TraceData.zero(lat12, mult12, cw, p))
            assert verdict.overall == "bounded"

    def test_multiplier_trace_is_zero_member(self, lat12, mult12, cw):
        # the trace of g itself is identically zero: the trivial member of
        # the necessity family
        gw = mult12.g_prime_weighted()
        data = TraceData.from_weighted(lat12, mult12, cw, 2.0,
                                       np.zeros_like(gw))
        assert classify(data).overall == "bounded"

    def test_phi_sized_data_p2_diverging_overall(self, lat16, mult16, cw):
        data = TraceData.from_weighted(lat16, mult16, cw, 2.0,
                                       np.ones(len(lat16), complex))
        assert classify(data).overall == "diverging"

    def test_undetermined_propagates(self, lat12, mult12, cw):
        # tiny truncation: the Gaussian p=2 Cauchy condition cannot flatten
        # within the last decade, and must not be called bounded
        data = TraceData.gaussian(lat12, mult12, cw, 2.0, 0.3 + 0.1j)
        verdict = classify(data)
        assert verdict.overall in ("undetermined", "bounded")
        if verdict.overall == "undetermined":
            assert any(r.verdict == "undetermined" for r in verdict.reports)

    def test_adversarial_pattern_search(self, lat16, mult16, cw):
        # search a small family of unimodular patterns for data that passes
        # the sup-norm size condition but breaks the modified Cauchy sum
        # (the resonant pattern makes it grow like log R)
        lam = lat16.points
        gw = mult16.g_prime_weighted()
        rho = lat16.rho_values
        patterns = {
            "ones": np.ones(len(lam), complex),
            "resonant": np.where(np.abs(lam) > 0, lam ** 2 /
                                 np.maximum(np.abs(lam) ** 2, 1e-300), 1.0),
            "alternating": np.where(
                np.round((lam.real + lam.imag) / lat16.scale) % 2 == 0, 1.0, -1.0),
        }
        witnesses = []
        for name, u in patterns.items():
            data = TraceData.from_weighted(lat16, mult16, cw, math.inf,
                                           gw * rho * u)
            verdict = classify(data)
            size_ok = verdict.report("inf_a").verdict == "bounded"
            cauchy_bad = verdict.report("inf_b").verdict != "bounded"
            if size_ok and cauchy_bad:
                witnesses.append(name)
        # the resonant pattern makes the modified sum grow; the constant
        # pattern also fails (its sum drifts linearly, the quasi-period)
        assert "resonant" in witnesses


class TestPowerWeightClassify:
    def test_branch_on_power_weight_with_user_table(self):
        pw = power_weight(0.5, rho_origin=2.0)
        lat = square_lattice(10.0, pw)
        # synthetic multiplier data of the right magnitude profile
        table = {i: 1.0 / lat.rho_values[i] for i in range(len(lat))}
        um = user_multiplier(lat, pw, table, weighted=True)
        data = TraceData.zero(lat, um, pw, 3.0)
        verdict = classify(data)
        assert verdict.branch.n_max == 5
        assert verdict.overall == "bounded"
        assert len(verdict.reports) == 6
