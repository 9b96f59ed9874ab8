import numpy as np
import pytest

from ouspread.errors import UnknownKind
from ouspread.hjb import hamilton_max, solve
from ouspread.model import validate
from ouspread.strategy import baseline, optimal_strategy, optimal_wealth_coeffs, parse_strategy

from conftest import random_params
from scalar_refs import a_star_scalar, alpha_star_scalar, b_star_scalar


@pytest.fixture(scope="module")
def scalar_setup(base_params):
    sol = solve(base_params, 500)
    return base_params, sol


class TestOptimalStrategy:
    def test_zero_spread(self, scalar_setup):
        p, sol = scalar_setup
        strat = optimal_strategy(p, sol)
        alpha, c = strat.rule(0.3, np.array([50.0]), np.array([[0.0]]))
        assert np.array_equal(alpha, np.zeros((1, 1)))
        assert c[0] == pytest.approx(50.0 / p.rho(0.3), rel=1e-15)

    def test_scalar_formula(self, scalar_setup):
        p, sol = scalar_setup
        strat = optimal_strategy(p, sol)
        t, x, s = 0.4, 80.0, 3.0
        alpha, c = strat.rule(t, np.array([x]), np.array([[s]]))
        assert alpha[0, 0] == pytest.approx(alpha_star_scalar(t, x, s, 0.1, 0.5, 0.01), rel=1e-14)
        assert c[0] == pytest.approx(x / p.rho(t), rel=1e-15)

    def test_terminal_consumption_equals_wealth(self, scalar_setup):
        p, sol = scalar_setup  # varpi = 1, so rho(T) = 1
        strat = optimal_strategy(p, sol)
        _, c = strat.rule(1.0, np.array([42.0]), np.array([[1.0]]))
        assert c[0] == pytest.approx(42.0, rel=1e-15)

    def test_matches_hamilton_maximizer(self):
        # alpha*, c* must be the Hamiltonian argmax at the candidate value
        # function's own derivatives.
        rng = np.random.default_rng(80)
        for d in (1, 2, 3):
            p = random_params(rng, d)
            derived = validate(p)
            sol = solve(p, 500, derived=derived)
            strat = optimal_strategy(p, sol, derived=derived)
            for _ in range(10):
                t = float(rng.uniform(0, p.T))
                x = float(rng.uniform(1.0, 200.0))
                s = rng.uniform(-5, 5, d)
                rho = p.rho(t)
                g_t = sol.g_at(t)
                q = np.concatenate([[rho / x], 2.0 * g_t @ s])
                m = np.zeros((d + 1, d + 1))
                m[0, 0] = -rho / x**2
                m[1:, 1:] = 2.0 * g_t
                a0, c0, _ = hamilton_max(p, x, s, q, m, derived=derived)
                alpha, c = strat.rule(t, np.array([x]), s.reshape(1, d))
                assert np.max(np.abs(alpha[0] - a0)) < 1e-10 * (1.0 + np.max(np.abs(a0)))
                assert abs(c[0] - c0) < 1e-10 * (1.0 + c0)


class TestBaselines:
    def test_no_trade(self, scalar_setup):
        p, sol = scalar_setup
        strat = baseline("no-trade", p, sol)
        alpha, c = strat.rule(0.2, np.array([10.0]), np.array([[4.0]]))
        assert np.array_equal(alpha, np.zeros((1, 1)))
        assert c[0] == pytest.approx(10.0 / p.rho(0.2), rel=1e-15)

    def test_scaled_one_equals_optimal(self, scalar_setup):
        p, sol = scalar_setup
        opt = optimal_strategy(p, sol)
        sc1 = baseline("scaled", p, sol, lam=1.0)
        x = np.array([25.0, 60.0])
        s = np.array([[2.0], [-7.0]])
        a1, c1 = opt.rule(0.7, x, s)
        a2, c2 = sc1.rule(0.7, x, s)
        assert np.array_equal(a1, a2)
        assert np.array_equal(c1, c2)

    def test_scaled_zero_equals_no_trade(self, scalar_setup):
        p, sol = scalar_setup
        nt = baseline("no-trade", p, sol)
        sc0 = baseline("scaled", p, sol, lam=0.0)
        x = np.array([25.0])
        s = np.array([[2.0]])
        a1, c1 = nt.rule(0.7, x, s)
        a2, c2 = sc0.rule(0.7, x, s)
        assert np.array_equal(a1, a2)
        assert np.array_equal(c1, c2)

    def test_const_c(self, scalar_setup):
        p, sol = scalar_setup
        strat = baseline("const-c", p, sol)
        _, c = strat.rule(0.9, np.array([30.0]), np.array([[1.0]]))
        assert c[0] == pytest.approx(30.0 / (p.T + p.varpi), rel=1e-15)

    def test_unknown_kind(self, scalar_setup):
        p, sol = scalar_setup
        with pytest.raises(UnknownKind):
            baseline("martingale", p, sol)
        with pytest.raises(UnknownKind):
            baseline("scaled", p, sol, lam=1.5)

    def test_parse_strategy(self, scalar_setup):
        p, sol = scalar_setup
        assert parse_strategy("optimal", p, sol).kind == "optimal"
        assert parse_strategy("scaled:0.5", p, sol).lam == 0.5
        assert parse_strategy("const-c", p, sol).kind == "const-c"
        with pytest.raises(UnknownKind):
            parse_strategy("scaled:x", p, sol)
        with pytest.raises(UnknownKind):
            parse_strategy("sharpe", p, sol)


class TestOptimalWealthCoeffs:
    def test_zero_spread(self, base_params):
        a, b = optimal_wealth_coeffs(base_params, [0.0], 0.3)
        assert a == pytest.approx(0.01 - 1.0 / base_params.rho(0.3), rel=1e-14)
        assert np.array_equal(b, np.zeros(1))

    def test_scalar_formulas(self, base_params):
        t, s = 0.6, 4.0
        a, b = optimal_wealth_coeffs(base_params, [s], t)
        assert a == pytest.approx(a_star_scalar(t, s, 0.1, 0.5, 0.01, 1.0, 1.0), rel=1e-13)
        assert b[0] == pytest.approx(b_star_scalar(t, s, 0.1, 0.5, 0.01), rel=1e-13)

    def test_substitution_identity(self):
        # Plugging (alpha*, c*) into the wealth dynamics must reproduce
        # (a*, b*): r x - alpha' s_hat - c = x a* and alpha' sigma = x b*'.
        rng = np.random.default_rng(81)
        for _ in range(100):
            d = int(rng.integers(1, 4))
            p = random_params(rng, d)
            derived = validate(p)
            sol = solve(p, 200, derived=derived)
            strat = optimal_strategy(p, sol, derived=derived)
            t = float(rng.uniform(0, p.T))
            x = float(rng.uniform(0.5, 300.0))
            s = rng.uniform(-5, 5, d)
            alpha, c = strat.rule(t, np.array([x]), s.reshape(1, d))
            alpha, c = alpha[0], c[0]
            a_star, b_star = optimal_wealth_coeffs(p, s, t, derived=derived)
            s_hat = derived.a1 @ s
            lhs_drift = p.r * x - alpha @ s_hat - c
            scale = max(1.0, abs(x * a_star))
            assert abs(lhs_drift - x * a_star) < 1e-12 * scale
            lhs_diff = alpha @ p.sigma
            assert np.max(np.abs(lhs_diff - x * b_star)) < 1e-12 * max(1.0, x * np.max(np.abs(b_star)))
