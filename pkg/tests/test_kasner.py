import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kasnerlab.errors import DomainError
from kasnerlab.fields import GridSpec
from kasnerlab.kasner import (KasnerExponents, borderline_pattern_36,
                              construct_exponents, flat_pattern, kasner_state,
                              kretschmann_constant, validate_exponents)


def small_grid(dim, points=8):
    return GridSpec(dim=dim, active=(1,), points=(points,))


class TestConstructExponents:
    def test_dim38_eps_tenth_percent(self):
        # oracle: substitute into the defining relations and sum directly
        eps = 0.001
        q = construct_exponents(38, eps)
        root = math.sqrt(6 * eps - 27 * eps * eps)
        assert q.q[36] == pytest.approx(3 * eps + root, abs=0)
        assert q.q[37] == pytest.approx(6 * eps - (3 * eps + root), abs=0)
        assert q.q[:15] == (-1 / 6 + eps,) * 15
        assert q.q[15:36] == (1 / 6 - eps,) * 21
        assert abs(math.fsum(q.q) - 1.0) <= 1e-12
        assert abs(math.fsum(v * v for v in q.q) - 1.0) <= 1e-12
        assert q.max_abs == pytest.approx(1 / 6 - eps)
        assert q.max_abs < 1 / 6

    def test_padding_above_38(self):
        q38 = construct_exponents(38, 0.001)
        q40 = construct_exponents(40, 0.001)
        assert q40.q[:38] == q38.q
        assert q40.q[38:] == (0.0, 0.0)

    @pytest.mark.parametrize("dim", [3, 36, 37])
    def test_low_dimension_rejected(self, dim):
        with pytest.raises(DomainError, match="no moderately anisotropic"):
            construct_exponents(dim, 0.001)

    def test_large_eps_rejected(self):
        # eps far too large: q37 = 3 eps + sqrt(...) exceeds 1/6
        with pytest.raises(DomainError, match="1/6"):
            construct_exponents(38, 0.02)

    def test_discriminant_guard(self):
        with pytest.raises(DomainError, match="discriminant"):
            construct_exponents(38, 0.5)

    def test_minus_root(self):
        eps = 0.001
        plus = construct_exponents(38, eps)
        minus = construct_exponents(38, eps, minus_root=True)
        assert minus.q[36] == pytest.approx(6 * eps - plus.q[36], abs=0)
        assert abs(math.fsum(minus.q) - 1.0) <= 1e-12
        assert abs(math.fsum(v * v for v in minus.q) - 1.0) <= 1e-12

    @given(eps=st.floats(1e-6, 5e-3))
    @settings(max_examples=25, deadline=None)
    def test_construction_always_validates_moderate(self, eps):
        q = construct_exponents(38, eps)
        report = validate_exponents(q)
        assert report.moderate
        assert report.dhs_ok
        assert report.dhs_margin > 0.5


class TestValidateExponents:
    def test_flat_family(self):
        report = validate_exponents(flat_pattern(38))
        assert report.sum == pytest.approx(1.0, abs=1e-15)
        assert report.sum_sq == pytest.approx(1.0, abs=1e-15)
        assert report.max_abs == 1.0
        assert not report.moderate

    def test_borderline_36_pattern(self):
        report = validate_exponents(borderline_pattern_36())
        assert report.sum == pytest.approx(1.0, abs=1e-12)
        assert report.sum_sq == pytest.approx(1.0, abs=1e-12)
        assert report.max_abs == pytest.approx(1 / 6, abs=0)
        assert not report.moderate  # strict inequality fails exactly at 1/6

    def test_dhs_margin_matches_triple_enumeration(self):
        q = construct_exponents(38, 0.001)
        arr = np.array(q.q)
        # independent oracle: brute-force enumeration of 1 + q_i - q_j - q_k
        best = min(
            1.0 + arr[i] - arr[j] - arr[k]
            for i in range(38)
            for j, k in itertools.combinations([l for l in range(38) if l != i], 2)
        )
        report = validate_exponents(q)
        assert report.dhs_margin == pytest.approx(best, abs=1e-13)
        assert report.dhs_margin >= 0.5 - 1e-12

    def test_moderate_implies_dhs_margin_above_half(self):
        for eps in (1e-4, 1e-3, 5e-3):
            report = validate_exponents(construct_exponents(38, eps))
            assert report.dhs_margin > 0.5

    def test_too_few_exponents(self):
        with pytest.raises(DomainError):
            validate_exponents(KasnerExponents(2, (1.0, 0.0)))

    def test_invalid_sums_rejected_on_construction(self):
        with pytest.raises(DomainError, match="sum"):
            KasnerExponents(3, (0.5, 0.5, 0.5))


class TestKasnerState:
    def test_t_equal_one_is_identity(self):
        q = construct_exponents(38, 0.001)
        state = kasner_state(q, 1.0, small_grid(38))
        eye = np.eye(38)
        assert np.array_equal(state.g.data[0], eye)
        assert np.array_equal(state.ginv.data[0], eye)
        assert np.allclose(state.K.data[0], -np.diag(q.q), atol=0)
        assert np.all(state.n.data == 1.0)

    def test_trace_is_minus_one_over_t(self):
        q = construct_exponents(38, 0.001)
        for t in (0.1, 0.25, 1.0):
            state = kasner_state(q, t, small_grid(38))
            tr = np.einsum("...aa->...", state.K.data)
            assert tr == pytest.approx(-1.0 / t, rel=1e-14)

    def test_metric_power_against_exp_log(self):
        q = construct_exponents(38, 0.001)
        t = 0.25
        state = kasner_state(q, t, small_grid(38))
        # independent oracle: exp(2 q log t)
        expected = np.exp(2.0 * np.array(q.q) * math.log(t))
        assert np.allclose(np.diagonal(state.g.data[0]), expected, rtol=1e-14)
        assert state.g.data[0, 0, 0] == pytest.approx(t ** (2 * (1 / 6 - 0.001)), rel=1e-15)

    def test_scaling_between_two_times(self):
        q = construct_exponents(38, 0.002)
        g1 = kasner_state(q, 0.8, small_grid(38)).g.data[0]
        g2 = kasner_state(q, 0.2, small_grid(38)).g.data[0]
        ratio = np.diagonal(g2) / np.diagonal(g1)
        expected = (0.2 / 0.8) ** (2.0 * np.array(q.q))
        assert np.allclose(ratio, expected, rtol=1e-12)

    def test_validates(self):
        q = construct_exponents(38, 0.001)
        kasner_state(q, 0.05, small_grid(38)).validate()

    def test_nonpositive_time_rejected(self):
        q = construct_exponents(38, 0.001)
        with pytest.raises(DomainError):
            kasner_state(q, 0.0, small_grid(38))

    def test_grid_dim_mismatch(self):
        q = construct_exponents(38, 0.001)
        with pytest.raises(DomainError):
            kasner_state(q, 1.0, small_grid(40))


class TestKretschmannConstant:
    def test_flat_family_is_zero(self):
        assert kretschmann_constant(flat_pattern(38)) == 0.0

    def test_borderline_36_rational_oracle(self):
        # oracle: exact rational arithmetic on the defining formula
        q = [Fraction(-1, 6)] * 15 + [Fraction(1, 6)] * 21
        single = sum((v * v - v) ** 2 for v in q)
        pair = sum(q[i] ** 2 * q[j] ** 2
                   for i in range(36) for j in range(i + 1, 36))
        exact = 4 * (single + pair)
        assert exact == Fraction(35, 6)
        got = kretschmann_constant(borderline_pattern_36())
        assert abs(got - float(exact)) <= 1e-14 * float(exact)

    def test_nonnegative_and_permutation_invariant(self):
        q = construct_exponents(38, 0.001)
        base = kretschmann_constant(q)
        assert base >= 0.0
        rng = np.random.default_rng(7)
        for _ in range(5):
            perm = tuple(np.array(q.q)[rng.permutation(38)])
            assert kretschmann_constant(KasnerExponents(38, perm)) == pytest.approx(
                base, rel=1e-13)

    @given(eps=st.floats(1e-5, 4e-3))
    @settings(max_examples=20, deadline=None)
    def test_defining_sum_against_pairwise_loop(self, eps):
        q = construct_exponents(38, eps)
        arr = np.array(q.q)
        single = np.sum((arr * arr - arr) ** 2)
        pair = sum(arr[i] ** 2 * arr[j] ** 2
                   for i in range(38) for j in range(i + 1, 38))
        assert kretschmann_constant(q) == pytest.approx(
            4.0 * (single + pair), rel=1e-12)
