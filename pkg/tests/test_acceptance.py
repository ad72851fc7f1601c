"""Acceptance suite: one test per criterion, each printing its PASS/FAIL
line with the measured quantities.

Criterion 6 currently fails on one sub-item (the p=2 growth ratio of the
positive-kernel potential across 200 -> 5000 points); see
/root/pkg/README.md and the test message for the analysis.  The check is
asserted as stated rather than loosened.
"""

from focklattice.acceptance import CRITERIA


def _run(number):
    res = CRITERIA[number]()
    print()
    print(res.line())
    return res


class TestAcceptance:
    def test_criterion_1_sigma_envelope_and_periodicity(self):
        res = _run(1)
        assert res.passed, res.details

    def test_criterion_2_representation_formula(self):
        res = _run(2)
        assert res.passed, res.details

    def test_criterion_3_uniqueness_modulo_g(self):
        res = _run(3)
        assert res.passed, res.details

    def test_criterion_4_necessity_trajectories(self):
        res = _run(4)
        assert res.passed, res.details

    def test_criterion_5_pv_engine_exactness(self):
        res = _run(5)
        assert res.passed, res.details

    def test_criterion_6_operator_norm_growth(self):
        res = _run(6)
        assert res.passed, (
            "one sub-item is expected to fail: the finite sections of the "
            "positive third-power kernel converge to their operator norm "
            "like 1 - c/R, so the 200->5000 point growth of its p=2 norm "
            "sits near 1.15 and cannot meet the 1.1 budget (the norms do "
            "satisfy the <= 1.1 growth over any single decade of sizes); "
            f"measured: {res.details}")

    def test_criterion_7_ap_probe(self):
        res = _run(7)
        assert res.passed, res.details

    def test_criterion_8_branch_logic(self):
        res = _run(8)
        assert res.passed, res.details

    def test_criterion_9_round_trip_residuals(self):
        res = _run(9)
        assert res.passed, res.details
