import math

import numpy as np
import pytest

from ouspread.errors import SchemeMismatch
from ouspread.hjb import solve, value_z
from ouspread.linalg import mat_exp
from ouspread.model import ModelParams, ou_transition
from ouspread.sim import (
    dominance_test,
    estimate_objective,
    objective_from_bundle,
    simulate_spread,
    simulate_wealth,
    wiener_increments,
)
from ouspread.sim import _per_path_objective  # noqa: F401  (order-invariance check)
from ouspread.strategy import Strategy, baseline, optimal_strategy

from conftest import random_params
from scalar_refs import j_const_c, j_no_trade


class TestSimulateSpread:
    def test_initial_condition(self, base_params):
        sp = simulate_spread(base_params, 8, 50, seed=1)
        assert np.all(sp.s[:, 0, 0] == 5.0)

    def test_noiseless_is_matrix_exponential(self):
        rng = np.random.default_rng(90)
        a = np.array([[-0.4, 0.2], [0.0, -0.9]])
        p = ModelParams(d=2, m=2, A=a, sigma=np.zeros((2, 2)), r=0.0,
                        T=1.0, varpi=1.0, x0=1.0, s0=[1.0, -2.0])
        sp = simulate_spread(p, 16, 3, seed=2)
        for k in (4, 16):
            t = sp.times[k]
            ref = mat_exp(a * t) @ np.array([1.0, -2.0])
            assert np.max(np.abs(sp.s[:, k, :] - ref)) < 1e-12

    def test_deterministic_given_seed(self, base_params):
        s1 = simulate_spread(base_params, 8, 40, seed=7)
        s2 = simulate_spread(base_params, 8, 40, seed=7)
        assert s1.s.tobytes() == s2.s.tobytes()

    def test_euler_stores_reconstructible_increments(self, base_params):
        # Common-random-numbers contract: the stored increments regenerate
        # from (seed, stream) and rebuild the spread exactly.
        n, paths = 12, 9
        sp = simulate_spread(base_params, n, paths, seed=3, method="euler")
        dt = base_params.T / n
        for pid in range(paths):
            dw = wiener_increments(3, pid, n, base_params.m, dt)
            assert np.array_equal(dw, sp.dw[pid])
            s = np.array([5.0])
            for k in range(n):
                s = s + (base_params.A @ s) * dt + base_params.sigma @ dw[k]
                assert np.array_equal(s, sp.s[pid, k + 1])

    @pytest.mark.parametrize("d", [1, 3])
    def test_exact_moments(self, d):
        # Exact-recursion sampler: S_T mean within 4 SE of e^{AT} s0 and
        # covariance within 5 SE componentwise of the block-exponential value.
        rng = np.random.default_rng(91 + d)
        p = random_params(rng, d, nonsymmetric=True)
        paths = 20_000
        sp = simulate_spread(p, 8, paths, seed=13)
        s_term = sp.s[:, -1, :]
        mean_map, cov = ou_transition(p, 0.0, p.T)
        mean_ref = mean_map @ p.s0
        se_mean = np.sqrt(np.diag(cov) / paths)
        assert np.all(np.abs(s_term.mean(axis=0) - mean_ref) <= 4.0 * se_mean)
        cov_hat = np.cov(s_term.T, ddof=1).reshape(d, d)
        se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / paths)
        assert np.all(np.abs(cov_hat - cov) <= 5.0 * se_cov)


class TestSimulateWealth:
    def test_requires_increments(self, base_params):
        sol = solve(base_params, 200)
        strat = optimal_strategy(base_params, sol)
        sp = simulate_spread(base_params, 8, 4, seed=5, method="exact")
        with pytest.raises(SchemeMismatch):
            simulate_wealth(base_params, strat, sp)

    def test_log_exact_needs_proportional(self, base_params):
        sp = simulate_spread(base_params, 8, 4, seed=5, method="euler")
        bank = Strategy(kind="custom", rule=lambda t, x, s: (np.zeros_like(s), np.zeros_like(x)))
        with pytest.raises(SchemeMismatch):
            simulate_wealth(base_params, bank, sp, scheme="log-exact")

    def test_bank_account_compounding(self, base_params):
        # alpha = 0, c = 0 under direct Euler: X_T = x0 (1 + r dt)^n exactly.
        n = 32
        sp = simulate_spread(base_params, n, 5, seed=6, method="euler")
        bank = Strategy(kind="custom", rule=lambda t, x, s: (np.zeros_like(s), np.zeros_like(x)))
        bundle = simulate_wealth(base_params, bank, sp, scheme="euler-direct")
        dt = base_params.T / n
        ref = 100.0 * (1.0 + base_params.r * dt) ** n
        assert np.max(np.abs(bundle.x_paths[:, -1] - ref)) < 1e-12 * ref
        assert bundle.rejected == 0

    def test_initial_values_and_positivity(self, base_params):
        sol = solve(base_params, 200)
        for kind, lam in (("optimal", None), ("no-trade", None), ("scaled", 0.5), ("const-c", None)):
            strat = baseline(kind, base_params, sol, lam=lam)
            sp = simulate_spread(base_params, 64, 30, seed=8, method="euler")
            for scheme in ("log-exact", "euler-direct"):
                bundle = simulate_wealth(base_params, strat, sp, scheme=scheme)
                assert np.all(bundle.x_paths[:, 0] == 100.0)
                assert bundle.rejected == 0
                assert np.all(bundle.x_paths > 0)
                assert np.all(bundle.cs > 0)

    def test_cross_scheme_terminal_agreement(self, base_params):
        # Same increments, optimal strategy: direct Euler and exact-log wealth
        # agree pathwise to O(dt); the mean log difference is within noise
        # plus an O(dt) allowance.
        n, paths = 2000, 2000
        sol = solve(base_params, 500)
        strat = optimal_strategy(base_params, sol)
        sp = simulate_spread(base_params, n, paths, seed=9, method="euler")
        b_euler = simulate_wealth(base_params, strat, sp, scheme="euler-direct")
        b_log = simulate_wealth(base_params, strat, sp, scheme="log-exact")
        diff = np.log(b_euler.x_paths[:, -1]) - np.log(b_log.x_paths[:, -1])
        se = diff.std(ddof=1) / math.sqrt(paths)
        dt = base_params.T / n
        assert abs(diff.mean()) <= 3.0 * se + 20.0 * dt

    def test_strong_order_one(self, base_params):
        # Halving dt roughly halves the Euler-vs-exact-log terminal gap.
        sol = solve(base_params, 500)
        strat = optimal_strategy(base_params, sol)
        errs = {}
        for n in (250, 500):
            sp = simulate_spread(base_params, n, 1000, seed=10, method="euler")
            be = simulate_wealth(base_params, strat, sp, scheme="euler-direct")
            bl = simulate_wealth(base_params, strat, sp, scheme="log-exact")
            errs[n] = np.mean(np.abs(be.x_paths[:, -1] - bl.x_paths[:, -1]))
        ratio = errs[250] / errs[500]
        assert 1.4 < ratio < 2.8


class TestEstimateObjective:
    def test_deterministic(self, base_params):
        sol = solve(base_params, 500)
        strat = optimal_strategy(base_params, sol)
        e1 = estimate_objective(base_params, strat, 100, 500, seed=11)
        e2 = estimate_objective(base_params, strat, 100, 500, seed=11)
        assert e1 == e2

    def test_no_trade_closed_form(self, base_params):
        # Deterministic wealth: the estimate has (numerically) zero variance,
        # so the check allows the O(dt) left-endpoint drift bias on top of
        # the 3 SE band.
        sol = solve(base_params, 500)
        strat = baseline("no-trade", base_params, sol)
        est = estimate_objective(base_params, strat, 1000, 50, seed=12)
        ref = j_no_trade(100.0, 0.01, 1.0, 1.0)
        assert est.std_err < 1e-12
        assert abs(est.j_hat - ref) <= 3.0 * est.std_err + 1e-3

    def test_const_c_closed_form(self, base_params):
        sol = solve(base_params, 500)
        strat = baseline("const-c", base_params, sol)
        est = estimate_objective(base_params, strat, 1000, 50, seed=12)
        ref = j_const_c(100.0, 0.01, 1.0, 1.0)
        assert abs(est.j_hat - ref) <= 3.0 * est.std_err + 1e-3

    def test_matches_bundle_objective(self, base_params):
        # The streaming estimator and the stored-path objective evaluate the
        # same functional on the same draws.
        n, paths, seed = 200, 300, 14
        sol = solve(base_params, 500)
        strat = optimal_strategy(base_params, sol)
        est = estimate_objective(base_params, strat, n, paths, seed)
        sp = simulate_spread(base_params, n, paths, seed, method="euler")
        bundle = simulate_wealth(base_params, strat, sp, scheme="log-exact")
        per_path = objective_from_bundle(base_params, bundle)
        assert est.j_hat == pytest.approx(per_path.mean(), rel=1e-12)
        assert est.std_err == pytest.approx(per_path.std(ddof=1) / math.sqrt(paths), rel=1e-12)

    def test_order_invariance(self, base_params):
        sol = solve(base_params, 500)
        strat = optimal_strategy(base_params, sol)
        obj = _per_path_objective(base_params, strat, 100, 400, 15, "log-exact")
        perm = np.random.default_rng(0).permutation(400)
        assert np.mean(obj[perm]) == pytest.approx(np.mean(obj), rel=1e-13)
        assert np.std(obj[perm], ddof=1) == pytest.approx(np.std(obj, ddof=1), rel=1e-13)

    def test_optimal_matches_value_function_small_budget(self, base_params):
        sol = solve(base_params, 2000)
        strat = optimal_strategy(base_params, sol)
        est = estimate_objective(base_params, strat, 500, 20_000, seed=16)
        z0 = value_z(base_params, sol, 100.0, [5.0], 0.0)
        assert abs(est.j_hat - z0) <= 3.0 * est.std_err

    def test_multidimensional_optimality(self):
        # Full chain at d=2 with non-symmetric A and correlated sigma: the
        # Monte Carlo objective under the optimal rule reproduces z.
        rng = np.random.default_rng(200)
        p = random_params(rng, 2, nonsymmetric=True)
        sol = solve(p, 2000)
        strat = optimal_strategy(p, sol)
        est = estimate_objective(p, strat, 800, 30_000, seed=7)
        z0 = value_z(p, sol, p.x0, p.s0, 0.0)
        assert abs(est.j_hat - z0) <= 3.0 * est.std_err

    def test_near_bank_account_regime(self, base_params):
        # s0 = 0: the optimal rule's edge over no-trade is the small
        # quadratic-variation harvest; growth is close to bank + consumption.
        p = ModelParams(d=1, m=1, A=[[-0.1]], sigma=[[0.5]], r=0.01,
                        T=1.0, varpi=1.0, x0=100.0, s0=[0.0])
        sol = solve(p, 1000)
        strat = optimal_strategy(p, sol)
        est = estimate_objective(p, strat, 500, 10_000, seed=17)
        ref = j_no_trade(100.0, 0.01, 1.0, 1.0)
        assert est.j_hat >= ref - 3.0 * est.std_err
        assert abs(est.j_hat - ref) < 0.05

    def test_no_trade_closed_form_cross_check(self):
        # Independent check of the reference formula itself by quadrature of
        # the deterministic consumption path.
        import scipy.integrate

        x0, r, T, varpi = 100.0, 0.01, 1.0, 1.0
        rho0 = T + varpi

        def lnc(t):
            return math.log(x0 * math.exp(r * t) / rho0)

        integral, _ = scipy.integrate.quad(lnc, 0.0, T, epsabs=1e-13)
        x_term = x0 * math.exp(r * T) * varpi / rho0
        ref = integral + varpi * math.log(x_term)
        assert j_no_trade(x0, r, T, varpi) == pytest.approx(ref, abs=1e-12)


class TestDominance:
    def test_scaled_one_paired_difference_exactly_zero(self, base_params):
        sol = solve(base_params, 500)
        strategies = [
            baseline("optimal", base_params, sol),
            baseline("scaled", base_params, sol, lam=1.0),
        ]
        report = dominance_test(base_params, strategies, 200, 500, seed=18)
        entry = report.entries[0]
        assert entry.diff_mean == 0.0
        assert entry.diff_se == 0.0
        assert entry.within_margin

    def test_no_trade_strictly_dominated(self, base_params):
        sol = solve(base_params, 500)
        strategies = [
            baseline("optimal", base_params, sol),
            baseline("no-trade", base_params, sol),
        ]
        report = dominance_test(base_params, strategies, 500, 20_000, seed=19)
        entry = report.entries[0]
        assert entry.diff_mean > 3.0 * entry.diff_se
        assert entry.within_margin

    def test_scaled_half_never_significantly_dominates(self, base_params):
        sol = solve(base_params, 500)
        strategies = [
            baseline("optimal", base_params, sol),
            baseline("scaled", base_params, sol, lam=0.5),
        ]
        report = dominance_test(base_params, strategies, 500, 20_000, seed=20)
        assert report.entries[0].within_margin

    def test_requires_optimal(self, base_params):
        sol = solve(base_params, 500)
        with pytest.raises(ValueError):
            dominance_test(base_params, [baseline("no-trade", base_params, sol)], 100, 100, seed=1)
