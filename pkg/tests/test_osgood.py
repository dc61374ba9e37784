import numpy as np
import pytest
from scipy.integrate import quad

from roughflow.osgood import bihari_bound, builtin_modulus, osgood_ode_envelope
from roughflow.rough_core import ParameterError


class TestBuiltinModuli:
    def test_linear(self):
        h = builtin_modulus("linear", 2.0)
        assert h(3.0) == 6.0
        assert h(0.0) == 0.0

    def test_linear_rejects_bad_slope(self):
        with pytest.raises(ParameterError):
            builtin_modulus("linear", -1.0)

    def test_log_lipschitz_values(self):
        h = builtin_modulus("log-lipschitz")
        assert h(1.0) == 1.0
        assert h(2.5) == 2.5
        assert h(np.exp(-1)) == pytest.approx(2.0 / np.e, abs=1e-15)
        assert h(0.0) == 0.0

    def test_custom_requires_monotonicity(self):
        with pytest.raises(ParameterError):
            builtin_modulus("custom", evaluator=lambda r: r * (2.0 - r))

    def test_custom_accepts_valid(self):
        h = builtin_modulus("custom", evaluator=lambda r: np.sqrt(r))
        assert h(4.0) == 2.0

    def test_osgood_divergence_diagnostic(self):
        # int_eps^1 dr/h diverges as eps -> 0 for the log-Lipschitz modulus.
        h = builtin_modulus("log-lipschitz")
        vals = []
        for eps in (1e-4, 1e-8):
            v, _ = quad(lambda r: 1.0 / h(r), eps, 1.0, limit=200)
            vals.append(v)
        assert vals[1] > vals[0] + 0.5


class TestBihariBound:
    def test_linear_closed_form(self):
        h = builtin_modulus("linear", 1.0)
        assert bihari_bound(h, 2.0, np.log(3.0)) == pytest.approx(6.0, abs=1e-8)

    def test_linear_closed_form_general(self):
        h = builtin_modulus("linear", 2.0)
        for alpha, beta in [(0.3, 0.7), (1.5, 2.0)]:
            assert bihari_bound(h, alpha, beta) == pytest.approx(
                alpha * np.exp(2.0 * beta), rel=1e-8
            )

    def test_zero_alpha_is_zero(self):
        for kind in ("linear", "log-lipschitz"):
            h = builtin_modulus(kind, 1.0) if kind == "linear" else builtin_modulus(kind)
            assert bihari_bound(h, 0.0, 5.0) == 0.0

    def test_log_lipschitz_closed_form(self):
        # On (0,1): G(r) = -ln(1 - ln r) + const, M = exp(1 - (1-ln a)e^{-b}).
        h = builtin_modulus("log-lipschitz")
        for alpha, beta in [(0.1, 0.5), (1e-3, 1.0), (0.4, 0.2)]:
            closed = np.exp(1.0 - (1.0 - np.log(alpha)) * np.exp(-beta))
            assert bihari_bound(h, alpha, beta) == pytest.approx(closed, abs=1e-6)

    def test_beta_zero_returns_alpha(self):
        h = builtin_modulus("log-lipschitz")
        assert bihari_bound(h, 0.37, 0.0) == pytest.approx(0.37, abs=1e-10)

    def test_monotone_in_both_arguments(self):
        h = builtin_modulus("log-lipschitz")
        alphas = [0.01, 0.1, 0.5, 1.0, 2.0]
        betas = [0.0, 0.3, 1.0, 2.0]
        table = np.array([[bihari_bound(h, a, b) for b in betas] for a in alphas])
        assert np.all(np.diff(table, axis=0) >= -1e-10)
        assert np.all(np.diff(table, axis=1) >= -1e-10)

    def test_independent_of_reference_point(self):
        h = builtin_modulus("log-lipschitz")
        a = bihari_bound(h, 0.1, 0.5, r0=1.0)
        b = bihari_bound(h, 0.1, 0.5, r0=0.5)
        assert abs(a - b) < 1e-8

    def test_rejects_bad_arguments(self):
        h = builtin_modulus("linear", 1.0)
        with pytest.raises(ParameterError):
            bihari_bound(h, -1.0, 0.0)
        with pytest.raises(ParameterError):
            bihari_bound(h, 1.0, np.inf)


class TestEnvelope:
    def test_zero_initial_gap_stays_zero(self):
        h = builtin_modulus("log-lipschitz")
        sched = np.linspace(0, 3, 7)
        env = osgood_ode_envelope(h, 0.0, sched)
        assert np.all(env == 0.0)

    def test_gronwall_case(self):
        h = builtin_modulus("linear", 1.0)
        t = np.linspace(0, 2, 9)
        env = osgood_ode_envelope(h, 1.0, t)
        assert np.allclose(env, np.exp(t), rtol=1e-7)

    def test_log_lipschitz_point(self):
        h = builtin_modulus("log-lipschitz")
        env = osgood_ode_envelope(h, 1e-3, np.array([0.0, 1.0]))
        closed = np.exp(1.0 - (1.0 - np.log(1e-3)) * np.exp(-1.0))
        assert env[-1] == pytest.approx(closed, abs=1e-6)

    def test_nondecreasing_output(self):
        h = builtin_modulus("log-lipschitz")
        env = osgood_ode_envelope(h, 0.2, np.array([0.0, 0.5, 1.0, 2.5]))
        assert np.all(np.diff(env) >= -1e-12)

    def test_rejects_decreasing_schedule(self):
        h = builtin_modulus("linear", 1.0)
        with pytest.raises(ParameterError):
            osgood_ode_envelope(h, 1.0, np.array([0.0, 1.0, 0.5]))
        with pytest.raises(ParameterError):
            osgood_ode_envelope(h, 1.0, np.array([0.5, 1.0]))
