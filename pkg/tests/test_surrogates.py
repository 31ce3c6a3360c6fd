import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdabnn import autograd as ag
from fdabnn.analysis import derivative_sign_changes, finite_diff_check, fs_mse
from fdabnn.surrogates import (
    FourierCoefficients, SurrogateSpec, baseline_backward, binary_sign, fda_backward, fda_derivative,
    fda_partial_sum, relaxed_forward, sign_forward, signswish_forward, ste_backward, surrogate_backward,
    tanh_forward,
)

finite = st.floats(-50, 50, allow_nan=False)
terms = st.integers(0, 40)
omegas = st.floats(0.5, 6.0)


def scalar_fd(fn, t, eps=1e-6):
    return (fn(t + eps) - fn(t - eps)) / (2 * eps)


class TestSign:
    def test_zero_maps_to_minus_one(self):
        np.testing.assert_array_equal(sign_forward([0.3, -0.2, 0.0]), [1, -1, -1])

    def test_positive(self, rng):
        assert (sign_forward(rng.uniform(0.01, 5, 20)) == 1).all()

    @given(st.lists(finite, min_size=1, max_size=30))
    def test_idempotent_and_binary(self, values):
        s = sign_forward(np.array(values))
        np.testing.assert_array_equal(sign_forward(s), s)
        assert set(np.unique(s)) <= {-1.0, 1.0}

    def test_non_finite(self):
        with pytest.raises(ag.NonFiniteError):
            sign_forward([np.nan])


class TestSte:
    def test_literal_clip(self):
        np.testing.assert_allclose(ste_backward([2.5, -0.4, 0.0, -3.0], np.zeros(4)), [1.0, -0.4, 0.0, -1.0])

    def test_gated_variant(self):
        out = ste_backward([2.5, 2.5, 2.5], [0.5, 1.0, 1.5], variant="gated")
        np.testing.assert_allclose(out, [2.5, 2.5, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ag.ShapeError):
            ste_backward(np.ones(3), np.ones(4))


class TestFourier:
    def test_first_term_at_quarter_period(self):
        assert fda_partial_sum(0.5, 0) == pytest.approx(4 / math.pi, abs=1e-15)
        assert fda_partial_sum(0.5, 0) == pytest.approx(1.27324, abs=1e-5)

    @given(terms)
    def test_zero_at_origin(self, n):
        assert fda_partial_sum(0.0, n) == 0.0

    @given(terms, st.floats(-3, 3))
    def test_backward_at_origin(self, n, up):
        assert fda_backward(np.array([up]), np.array([0.0]), n)[0] == pytest.approx(up * 4 * (n + 1), rel=1e-12)

    def test_backward_first_term_vanishes(self):
        assert abs(fda_backward(np.array([1.7]), np.array([0.5]), 0)[0]) < 1e-15

    @settings(max_examples=50)
    @given(terms, st.floats(-0.99, 0.99))
    def test_derivative_matches_finite_difference(self, n, t):
        g = fda_derivative(np.array([t]), n)
        assert finite_diff_check(lambda x: fda_partial_sum(x, n).sum(), g, np.array([t]), eps=1e-6) <= 1e-6 or \
            abs(g[0]) < 1e-6

    def test_finite_difference_dense(self, rng):
        for n in (0, 1, 5, 10, 20):
            t = rng.uniform(-1, 1, 100)
            err = finite_diff_check(lambda x: fda_partial_sum(x, n).sum(), fda_derivative(t, n), t, eps=1e-6)
            assert err <= 1e-6, (n, err)

    def test_parseval_at_64_terms(self):
        k = 2 * np.arange(65) + 1
        assert fs_mse(64) == pytest.approx(1 - 8 / math.pi ** 2 * np.sum(1.0 / k ** 2), abs=1e-4)

    def test_square_wave_coefficients(self):
        c = FourierCoefficients.square_wave(6)
        assert c.a0 == 0 and not c.a.any()
        np.testing.assert_allclose(c.b, [4 / math.pi, 0, 4 / (3 * math.pi), 0, 4 / (5 * math.pi), 0])


class TestProperties:
    @given(terms, finite, omegas)
    def test_odd_and_even(self, n, t, omega):
        assert fda_partial_sum(-t, n, omega) == pytest.approx(-fda_partial_sum(t, n, omega), abs=1e-12)
        assert fda_derivative(-t, n, omega) == pytest.approx(fda_derivative(t, n, omega), abs=1e-9)

    @given(terms, st.floats(-2, 2), omegas)
    def test_periodic(self, n, t, omega):
        period = 2 * math.pi / omega
        assert fda_partial_sum(t + period, n, omega) == pytest.approx(fda_partial_sum(t, n, omega), abs=1e-12)

    @given(terms, omegas)
    def test_gradient_at_origin(self, n, omega):
        assert fda_derivative(0.0, n, omega) == pytest.approx(4 * omega * (n + 1) / math.pi, rel=1e-14)

    def test_mse_strictly_decreasing(self):
        values = [fs_mse(n) for n in (0, 1, 2, 4, 8, 16, 32, 64)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_sign_changes_non_decreasing(self):
        counts = [derivative_sign_changes(n) for n in range(0, 40)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        # cos((2i+1) pi t) summed to n changes sign 2n+1 times on (0, 1)
        assert counts == [2 * n + 1 for n in range(40)]


class TestBaselines:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
    def test_tanh_at_origin(self, beta):
        assert baseline_backward("tanh", np.array([2.0]), np.array([0.0]), beta)[0] == pytest.approx(2 * beta)

    @pytest.mark.parametrize("kind", ["tanh", "signswish"])
    def test_saturation(self, kind):
        out = baseline_backward(kind, np.ones(2), np.array([-50.0, 50.0]))
        assert np.all(np.abs(out) < 1e-8)

    @pytest.mark.parametrize("kind,forward", [("tanh", tanh_forward), ("signswish", signswish_forward)])
    @pytest.mark.parametrize("beta", [0.7, 1.0, 2.5])
    def test_finite_difference(self, rng, kind, forward, beta):
        # operating domain of the surrogate; probed one point at a time so a
        # large sum does not swamp the smallest derivatives in roundoff
        t = rng.uniform(-1, 1, 100)
        g = baseline_backward(kind, np.ones_like(t), t, beta)
        errs = [finite_diff_check(lambda x: forward(x, beta).sum(), g[i:i + 1], t[i:i + 1], eps=1e-6)
                for i in range(t.size)]
        assert max(errs) <= 1e-6

    def test_signswish_limits(self):
        np.testing.assert_allclose(signswish_forward(np.array([-60.0, 0.0, 60.0])), [-1, 0, 1], atol=1e-12)

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            baseline_backward("tanh", np.ones(1), np.ones(1), 0.0)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            SurrogateSpec("fda", n=-1)
        with pytest.raises(ValueError):
            SurrogateSpec("fda", omega=0)
        with pytest.raises(ValueError):
            SurrogateSpec("tanh", beta=-1)
        with pytest.raises(ValueError):
            SurrogateSpec("mystery")

    def test_kind_immutable_n_mutable(self):
        spec = SurrogateSpec("fda", n=3)
        spec.n = 7
        assert spec.n == 7
        with pytest.raises(AttributeError):
            spec.kind = "ste"

    def test_aliases(self):
        assert SurrogateSpec("TanhAlike").kind == "tanh"

    @pytest.mark.parametrize("kind", ["fda", "tanh", "signswish"])
    def test_relaxed_forward_is_antiderivative(self, rng, kind):
        spec = SurrogateSpec(kind, n=4)
        t = rng.uniform(-0.95, 0.95, 60)
        g = surrogate_backward(spec, np.ones_like(t), t)
        assert finite_diff_check(lambda x: relaxed_forward(spec, x).sum(), g, t, eps=1e-6) <= 1e-6

    def test_binary_sign_node(self, rng):
        spec = SurrogateSpec("fda", n=2)
        t = rng.uniform(-1, 1, (3, 5))
        x = ag.Tensor(t, requires_grad=True)
        out = binary_sign(x, spec)
        np.testing.assert_array_equal(out.data, sign_forward(t))
        up = rng.normal(size=t.shape)
        ag.backward(ag.reduce_sum(ag.mul(out, ag.Tensor(up))))
        np.testing.assert_allclose(x.grad, up * fda_derivative(t, 2))
