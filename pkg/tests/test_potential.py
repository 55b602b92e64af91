import numpy as np
import pytest

from sparseglm import prior as prior_mod
from sparseglm.channel import dq_i_pout, gamma_c, i_pout, make_channel
from sparseglm.errors import ParameterError
from sparseglm.potential import (ALGORITHMIC_START, RegimeParams, fixed_point,
                                 gen_error_linear_regime, i_rs, inf_over_r, inf_sup,
                                 mmse_linear_regime, solve_linear_regime,
                                 solve_overlap_map, sup_over_r)
from sparseglm.prior import (bernoulli, bracket_points, g_rho, linear_prior, psi,
                             psi_prime, sample_complexity)

RHO = 0.05
LINEAR = make_channel("linear", 0.1)
GC = gamma_c(LINEAR)


def _bern():
    return bernoulli().sparse(RHO)


def _psi_bernoulli_trapezoid(rho, s):
    """Bernoulli free entropy by a dense trapezoid rule over the noise."""
    z = np.linspace(-14, 14, 400001)
    dens = np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)

    def inner(x):
        return np.logaddexp(np.log(1 - rho), np.log(rho) - s / 2 + s * x + np.sqrt(s) * z)

    return ((1 - rho) * np.trapezoid(dens * inner(0.0), z)
            + rho * np.trapezoid(dens * inner(1.0), z))


class TestRegimeParams:
    @pytest.mark.parametrize("rho, gamma", [(0.05, 2.0), (1e-4, 0.3), (0.5, 7.0)])
    def test_alpha(self, rho, gamma):
        assert abs(RegimeParams(rho, gamma).alpha - gamma * rho * abs(np.log(rho))) < 1e-12

    @pytest.mark.parametrize("rho, gamma", [(0.0, 1.0), (1.0, 1.0), (0.1, 0.0),
                                            (0.1, -1.0), (0.1, np.inf)])
    def test_invalid(self, rho, gamma):
        with pytest.raises(ParameterError):
            RegimeParams(rho, gamma)

    def test_frozen(self):
        with pytest.raises(AttributeError):
            RegimeParams(0.1, 1.0).rho = 0.2


class TestIRs:
    def test_origin(self):
        reg = RegimeParams(RHO, 2.0)
        assert i_rs(_bern(), LINEAR, reg, 0.0, 0.0) == pytest.approx(
            i_pout(LINEAR, 0.0, 1.0), abs=1e-14)

    def test_forms_agree(self, rng):
        p = linear_prior(3).sparse(0.02)
        reg = RegimeParams(0.02, 1.3)
        ch = make_channel("relu", 0.3)
        for q, r in zip(rng.uniform(0, 1, 20), rng.uniform(0, 8, 20)):
            a = i_rs(p, ch, reg, q, r, form="mutual")
            b = i_rs(p, ch, reg, q, r, form="free_entropy")
            assert abs(a - b) < 1e-10

    def test_independent_assembly(self):
        reg = RegimeParams(RHO, 2.0)
        alpha = RHO * 2.0 * abs(np.log(RHO))
        q, r = 0.5, 1.0
        s = alpha * r / RHO
        expected = (0.5 * np.log1p((1 - q) / 0.1) + r * q / 2
                    - _psi_bernoulli_trapezoid(RHO, s) / alpha)
        assert abs(i_rs(_bern(), LINEAR, reg, q, r) - expected) < 1e-9

    def test_rejects(self):
        reg = RegimeParams(RHO, 2.0)
        with pytest.raises(ParameterError):
            i_rs(_bern(), LINEAR, reg, 1.5, 1.0)
        with pytest.raises(ParameterError):
            i_rs(_bern(), LINEAR, reg, 0.5, -1.0)
        with pytest.raises(ParameterError):
            i_rs(_bern(), LINEAR, RegimeParams(0.1, 2.0), 0.5, 1.0)
        with pytest.raises(ParameterError):
            i_rs(_bern(), LINEAR, reg, 0.5, 1.0, form="other")


class TestSupOverR:
    def test_zero_below_mean(self):
        p = linear_prior(3).sparse(0.1)
        m1 = p.p0.mean
        res = sup_over_r(p, LINEAR, RegimeParams(0.1, 1.0), 0.1 * m1 ** 2 / 2)
        assert res.r_star == 0.0
        assert not res.saturated

    @pytest.mark.parametrize("q", [0.1, 0.4, 0.8, 0.95])
    def test_dense_grid(self, q):
        reg = RegimeParams(RHO, 1.5)
        res = sup_over_r(_bern(), LINEAR, reg, q)
        # Refine a 2000-point grid around the coarse maximizer.
        grid = np.linspace(0, 4 * res.r_star + 1, 2000)
        vals = [i_rs(_bern(), LINEAR, reg, q, r) for r in grid]
        j = int(np.argmax(vals))
        fine = np.linspace(grid[max(j - 1, 0)], grid[min(j + 1, 1999)], 2000)
        best = max(i_rs(_bern(), LINEAR, reg, q, r) for r in fine)
        assert abs(res.value - best) < 1e-7
        assert res.value >= best - 1e-12

    def test_root_of_overlap_map(self):
        reg = RegimeParams(RHO, 1.5)
        r, _ = sup_over_r(_bern(), LINEAR, reg, 0.6)
        assert abs(g_rho(_bern(), 1.5, r) - 0.6) < 1e-12

    def test_saturated_at_full_overlap(self):
        reg = RegimeParams(RHO, 1.5)
        res = sup_over_r(_bern(), LINEAR, reg, 1.0)
        assert res.saturated and res.r_star == np.inf
        assert res.value == pytest.approx(_bern().entropy() / reg.alpha)
        # The saturated value is the r -> inf limit of i_RS.
        assert abs(i_rs(_bern(), LINEAR, reg, 1.0, 1e3) - res.value) < 1e-6

    def test_unpacks(self):
        r, v = sup_over_r(_bern(), LINEAR, RegimeParams(RHO, 1.5), 0.5)
        assert np.isfinite(r) and np.isfinite(v)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_bracket_bounds(self, k):
        rho, gamma = 1e-6, 1.0
        p0 = linear_prior(3)
        p = p0.sparse(rho)
        reg = RegimeParams(rho, gamma)
        a, b = bracket_points(p, gamma, k)
        eps = abs(np.log(rho)) ** -0.25
        vk = p0.support[k - 1]
        lo, hi = 2 * (1 - eps) / (gamma * vk ** 2), 2 * (1 + eps) / (gamma * vk ** 2)
        for q in np.linspace(a, b, 7):
            r = sup_over_r(p, LINEAR, reg, q).r_star
            assert lo * (1 - 1e-9) <= r <= hi * (1 + 1e-9)

    def test_overlap_map_zero_below_mean(self):
        assert solve_overlap_map(_bern(), 1.5, RHO / 2) == 0.0


def _grid_saddle(p, ch, reg, nq=2001, nr=2001, r_hi=30.0):
    """Brute-force inf_q sup_r on a dense separable grid."""
    qs = np.linspace(0, 1, nq)
    rs = np.linspace(0, r_hi, nr)
    a = np.array([i_pout(ch, q, 1.0) for q in qs])
    b = np.array([-psi(p, reg.alpha * r / reg.rho) / reg.alpha for r in rs])
    table = a[:, None] + b[None, :] + 0.5 * qs[:, None] * rs[None, :]
    sup_r = table.max(axis=1)
    return qs[np.argmin(sup_r)], sup_r.min()


class TestInfSup:
    def test_dense_grid_oracle(self):
        reg = RegimeParams(RHO, 1.0 * GC)
        res = inf_sup(_bern(), LINEAR, reg)
        q_grid, v_grid = _grid_saddle(_bern(), LINEAR, reg)
        assert abs(res.value - v_grid) < 1e-4
        assert abs(res.q_star - q_grid) < 1e-2

    @pytest.mark.parametrize("factor", [0.5, 1.5, 2.0])
    def test_dominates_endpoints(self, factor):
        reg = RegimeParams(RHO, factor * GC)
        res = inf_sup(_bern(), LINEAR, reg)
        assert res.value <= sup_over_r(_bern(), LINEAR, reg, 0.0).value + 1e-14
        assert res.value <= sup_over_r(_bern(), LINEAR, reg, 1.0).value + 1e-14

    def test_sublinear_limit_example(self):
        # At rho = 1e-4 the finite-size entropy correction exceeds 0.02 when
        # gamma_c is small, so the check uses a noisier channel (gamma_c = 2.89).
        rho = 1e-4
        ch = make_channel("linear", 1.0)
        reg = RegimeParams(rho, 2 * gamma_c(ch))
        res = inf_sup(bernoulli().sparse(rho), ch, reg)
        assert abs(res.value - min(i_pout(ch, 0.0, 1.0), 1 / reg.gamma)) < 0.02

    @pytest.mark.parametrize("name, delta, factor", [("linear", 0.1, 0.8), ("linear", 0.1, 1.5),
                                                     ("sign", 0.0, 1.2), ("sign", 0.0, 3.0)])
    def test_swap_identity(self, name, delta, factor):
        ch = make_channel(name, delta)
        reg = RegimeParams(RHO, factor * gamma_c(ch))
        res = inf_sup(_bern(), ch, reg, check_swap=True)
        assert res.swap_gap < 5e-4
        assert inf_over_r(_bern(), ch, reg) == pytest.approx(res.swap_value)

    def test_order_and_grid_doubling(self, monkeypatch):
        ch = make_channel("relu", 0.5)
        reg = RegimeParams(RHO, 1.3 * gamma_c(ch))
        base = inf_sup(_bern(), ch, reg).value
        finer = inf_sup(_bern(), ch, reg, grid_points=401).value
        monkeypatch.setattr(prior_mod, "PRIOR_ORDER", 512)
        ch2 = make_channel("relu", 0.5, order=256)
        doubled = inf_sup(_bern(), ch2, reg).value
        assert abs(finer - base) < 1e-6
        assert abs(doubled - base) < 1e-6

    def test_local_minima_sorted(self):
        reg = RegimeParams(RHO, 1.5 * GC)
        res = inf_sup(_bern(), LINEAR, reg)
        qs = [q for q, _ in res.local_minima]
        assert qs == sorted(qs)
        assert min(v for _, v in res.local_minima) == res.value


class TestFixedPoint:
    @pytest.mark.parametrize("factor", [0.5, 1.0, 1.5, 3.0])
    def test_stationarity(self, factor):
        reg = RegimeParams(RHO, factor * GC)
        tol = 1e-9
        for q0 in (ALGORITHMIC_START, 1.0):
            res = fixed_point(_bern(), LINEAR, reg, q0, tol=tol)
            assert res.converged
            q, r = res.q_star, res.r_star
            assert abs(r + 2 * dq_i_pout(LINEAR, q, 1.0)) <= 10 * tol
            assert abs(q - 2 / RHO * psi_prime(_bern(), reg.alpha * r / RHO)) <= 10 * tol
            assert abs(res.trajectory[-1][0] - res.trajectory[-2][0]) <= tol

    @pytest.mark.parametrize("factor", [0.5, 1.5, 3.0])
    def test_critical_point(self, factor):
        reg = RegimeParams(RHO, factor * GC)
        res = fixed_point(_bern(), LINEAR, reg, 1.0)
        q, r, h = res.q_star, res.r_star, 1e-5
        dq = (i_rs(_bern(), LINEAR, reg, q + h, r) - i_rs(_bern(), LINEAR, reg, q - h, r)) / (2 * h)
        dr = (i_rs(_bern(), LINEAR, reg, q, r + h) - i_rs(_bern(), LINEAR, reg, q, r - h)) / (2 * h)
        assert abs(dq) < 1e-4 and abs(dr) < 1e-4

    def test_restart_stays(self):
        reg = RegimeParams(RHO, 1.2 * GC)
        res = fixed_point(_bern(), LINEAR, reg, 1.0)
        again = fixed_point(_bern(), LINEAR, reg, res.q_star, max_iter=1)
        assert abs(again.q_star - res.q_star) <= 1e-9

    def test_algorithmic_gap(self):
        reg = RegimeParams(RHO, 1.5 * GC)
        algo = fixed_point(_bern(), LINEAR, reg, ALGORITHMIC_START)
        informed = fixed_point(_bern(), LINEAR, reg, 1.0)
        assert informed.q_star - algo.q_star > 0.3
        assert algo.potential_value >= informed.potential_value

    def test_nonconvergence_reported(self):
        reg = RegimeParams(RHO, 1.5 * GC)
        res = fixed_point(_bern(), LINEAR, reg, ALGORITHMIC_START, max_iter=3)
        assert not res.converged
        assert len(res.trajectory) == 4

    def test_trajectory_map(self):
        reg = RegimeParams(RHO, 1.5 * GC)
        res = fixed_point(_bern(), LINEAR, reg, 0.2, damping=1.0, max_iter=5)
        for (q, r), (q_next, _) in zip(res.trajectory, res.trajectory[1:]):
            assert r == pytest.approx(1 / (0.1 + 1 - q))
            assert q_next == pytest.approx(g_rho(_bern(), reg.gamma, r))

    @pytest.mark.parametrize("kw", [{"damping": 0.0}, {"damping": 1.5}, {"tol": 0.0}])
    def test_rejects(self, kw):
        with pytest.raises(ParameterError):
            fixed_point(_bern(), LINEAR, RegimeParams(RHO, 1.0), 0.5, **kw)

    def test_lowest_potential_matches_inf_sup(self):
        for gamma in np.linspace(0.2, 3.0, 20) * GC:
            reg = RegimeParams(RHO, gamma)
            best = min(fixed_point(_bern(), LINEAR, reg, q0).potential_value
                       for q0 in (ALGORITHMIC_START, 1.0))
            assert abs(best - inf_sup(_bern(), LINEAR, reg).value) < 1e-5


class TestLinearRegime:
    def test_large_gamma(self):
        rho = 1e-4
        reg = RegimeParams(rho, 100 * GC)
        assert mmse_linear_regime(bernoulli().sparse(rho), LINEAR, reg) < 0.01

    def test_small_gamma(self):
        rho = 1e-4
        reg = RegimeParams(rho, 0.01 * GC)
        assert mmse_linear_regime(bernoulli().sparse(rho), LINEAR, reg) > 0.99

    def test_monotone_sweep(self):
        vals = [mmse_linear_regime(_bern(), LINEAR, RegimeParams(RHO, g * GC))
                for g in np.linspace(0.1, 3.0, 50)]
        assert np.all(np.diff(vals) <= 1e-6)

    @pytest.mark.parametrize("factor", [0.5, 1.2, 1.5, 3.0])
    def test_algorithmic_not_better(self, factor):
        sol = solve_linear_regime(_bern(), LINEAR, RegimeParams(RHO, factor * GC))
        assert sol.mmse_algorithmic >= sol.mmse - 1e-9
        assert 0.0 <= sol.mmse <= 1.0

    def test_branch_and_ties(self):
        sol = solve_linear_regime(_bern(), LINEAR, RegimeParams(RHO, 3.0 * GC))
        assert sol.branch in ("inf_sup", "informed", "algorithmic")
        assert not sol.ambiguous

    def test_gen_error(self):
        reg = RegimeParams(RHO, 1.5 * GC)
        sol = solve_linear_regime(_bern(), LINEAR, reg)
        assert gen_error_linear_regime(_bern(), LINEAR, reg) == pytest.approx(0.1 + sol.mmse)

    def test_gen_error_sign_limits(self):
        ch = make_channel("sign", 0.0)
        gc = gamma_c(ch)
        low = gen_error_linear_regime(_bern(), ch, RegimeParams(RHO, 0.05 * gc))
        high = gen_error_linear_regime(_bern(), ch, RegimeParams(RHO, 20 * gc))
        assert low > 0.9 and high < 0.05
