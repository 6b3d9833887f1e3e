import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from mdmart.coupling import (CouplingReport, EmpiricalQuantile,
                             ExactBinomialQuantile, NormalQuantile, couple,
                             coupling_tail_report)


class TestExactQuantile:
    def test_two_atom_law(self):
        q = ExactBinomialQuantile(1)
        assert q.evaluate(0.25) == -1.0  # F(-1) = .5 >= .25
        assert q.evaluate(0.75) == 1.0

    def test_n4_median(self):
        q = ExactBinomialQuantile(4)
        # F(0) = 11/16 >= .5 while F(-1) = 5/16 < .5
        assert q.evaluate(0.5) == 0.0

    def test_rejects_bad_s(self):
        q = ExactBinomialQuantile(4)
        for s in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                q.evaluate(s)

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_nondecreasing(self, s1, s2):
        q = ExactBinomialQuantile(9)
        lo, hi = sorted((s1, s2))
        assert q.evaluate(lo) <= q.evaluate(hi)


class TestEmpiricalQuantile:
    def test_small_samples(self):
        assert EmpiricalQuantile([1, 2, 3]).evaluate(0.5) == 2.0
        assert EmpiricalQuantile([5]).evaluate(0.3) == 5.0

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            EmpiricalQuantile([])

    def test_median_of_normal_sample(self):
        rng = np.random.default_rng(0)
        q = EmpiricalQuantile(rng.standard_normal(10 ** 6))
        assert abs(q.evaluate(0.5)) < 0.005


class TestCouple:
    def test_identity_quantile(self):
        for z in (-2.0, 0.0, 1.3):
            assert couple(NormalQuantile(), z).w == pytest.approx(z, abs=1e-9)

    def test_sign_coupling_n1(self):
        q = ExactBinomialQuantile(1)
        assert couple(q, -0.5).w == -1.0
        assert couple(q, 0.5).w == 1.0
        assert couple(q, 0.0).w == -1.0  # Phi(0) = .5 and F(-1) = .5: inf rule

    @given(st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
    def test_monotone_in_z(self, z1, z2):
        q = ExactBinomialQuantile(16)
        lo, hi = sorted((z1, z2))
        assert couple(q, lo).w <= couple(q, hi).w

    def test_atom_reproduction_n6(self):
        probs = ExactBinomialQuantile(6).atom_probabilities()
        exact = binom.pmf(np.arange(7), 6, 0.5)
        assert np.max(np.abs(probs - exact)) < 1e-12

    def test_deviation_scaling(self):
        q = ExactBinomialQuantile(100)
        s = couple(q, 1.0)
        assert s.deviation == pytest.approx(10.0 * abs(s.w - 1.0) / math.log(100))


class TestTailReport:
    def test_reports(self):
        reports = [coupling_tail_report(n, 100000, 42) for n in (100, 400, 1600)]
        for r in reports:
            assert r.tail_slope < 0.0
            assert 0.0 < r.D_hat
            assert 0.0 < r.frac_event <= 1.0
        ds = [r.D_hat for r in reports]
        assert max(ds) / min(ds) < 2.0

    def test_determinism(self):
        a = coupling_tail_report(100, 20000, 9)
        b = coupling_tail_report(100, 20000, 9)
        assert a.D_hat == b.D_hat and a.tail_slope == b.tail_slope

    def test_small_budget_rejected(self):
        with pytest.raises(ValueError):
            coupling_tail_report(100, 10, 0)
