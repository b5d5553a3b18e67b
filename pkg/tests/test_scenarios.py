import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from acfs import DgpSpec, DomainError, OracleLedger
from acfs.scenarios import (ScenarioCache, capacity_dgp2, correlation_repair, feasible_project, is_feasible,
                            student_t_ppf, t_from_normal)

from conftest import random_feasible


class TestFeasibility:
    def test_interior_unchanged(self, x_mid):
        np.testing.assert_array_equal(feasible_project(x_mid), x_mid)

    def test_box_clamp(self):
        x = feasible_project([-0.2, 0.9, 0.0, 0.0, 0.0, 1.4])
        np.testing.assert_allclose(x, [0.0, 0.7, 0.0, 0.0, 0.0, 1.0])

    def test_budget_rescale(self):
        x = feasible_project([0.5, 0.5, 0.0, 0.0, 0.0, 0.3])
        np.testing.assert_allclose(x, [0.425, 0.425, 0.0, 0.0, 0.0, 0.3])

    def test_batch(self):
        X = feasible_project(np.full((4, 6), 0.6))
        assert X.shape == (4, 6)
        np.testing.assert_allclose(X[:, :5].sum(axis=1), 0.85)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
    def test_always_feasible_and_idempotent(self, raw):
        x = feasible_project(raw)
        assert is_feasible(x)
        np.testing.assert_allclose(feasible_project(x), x, atol=1e-15)

    @pytest.mark.parametrize("bad", [np.ones(5), [np.nan] * 6])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            feasible_project(bad)


class TestQuantiles:
    @pytest.mark.parametrize("nu", [3.0, 4.25, 5.5, 30.0])
    def test_t_ppf_matches_scipy(self, nu):
        p = np.array([1e-6, 0.001, 0.05, 0.3, 0.5, 0.7, 0.95, 0.999])
        np.testing.assert_allclose(student_t_ppf(p, nu), stats.t.ppf(p, nu), rtol=1e-9, atol=1e-12)

    def test_t_from_normal_tails(self):
        z = np.array([-8.0, -2.0, 0.0, 1.5, 8.0])
        expected = stats.t.ppf(stats.norm.cdf(z), 4.0)
        expected[-1] = -stats.t.ppf(stats.norm.cdf(-8.0), 4.0)
        np.testing.assert_allclose(t_from_normal(z, 4.0), expected, rtol=1e-9, atol=1e-15)

    def test_t_from_normal_odd(self):
        z = np.linspace(-6, 6, 41)
        np.testing.assert_array_equal(t_from_normal(z, 3.5), -t_from_normal(-z, 3.5))

    def test_domain(self):
        with pytest.raises(DomainError):
            student_t_ppf(1.2, 3.0)
        with pytest.raises(DomainError):
            student_t_ppf(0.5, 0.0)


class TestCorrelationRepair:
    def test_pd_unchanged(self):
        R = np.array([[1.0, 0.3], [0.3, 1.0]])
        np.testing.assert_array_equal(correlation_repair(R), R)

    def test_indefinite_repaired(self):
        R = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
        out = correlation_repair(R)
        np.testing.assert_allclose(np.diag(out), 1.0)
        np.testing.assert_allclose(out, out.T)
        assert np.linalg.eigvalsh(out).min() > 0
        np.linalg.cholesky(out)

    def test_offdiag_clamped(self):
        out = correlation_repair(np.array([[1.0, 1.5], [1.5, 1.0]]))
        assert abs(out[0, 1]) <= 0.99

    def test_asymmetric_rejected(self):
        with pytest.raises(DomainError):
            correlation_repair(np.array([[1.0, 0.2], [0.1, 1.0]]))

    def test_every_feasible_decision_factorises(self, dgp1, dgp2):
        X = random_feasible(np.random.default_rng(0), 200)
        for dgp in (dgp1, dgp2):
            _, _, _, R = dgp.raw_params(X)
            np.linalg.cholesky(R)


class TestParameterMaps:
    def test_dgp1_frozen_at_x_mid(self, dgp1, x_mid):
        p = dgp1.params(x_mid)
        # hand-evaluated from the coefficient formulas with residual x0 = 0.40
        np.testing.assert_allclose(p.mu, [1.72875, 2.1505, 1.35975, 1.367, 1.247875], rtol=1e-12)
        assert p.sigma[0] == pytest.approx(0.6575, rel=1e-12)
        assert p.nu[0] == pytest.approx(4.25)
        assert p.corr[0, 1] == pytest.approx(0.69)

    def test_mitigation_lowers_dgp1_means(self, dgp1):
        lo = dgp1.params([0.1, 0.1, 0.1, 0.1, 0.1, 0.1]).mu
        hi = dgp1.params([0.1, 0.1, 0.1, 0.1, 0.1, 0.9]).mu
        assert np.all(hi < lo)

    def test_sigma_scale(self, x_mid):
        a = DgpSpec("DGP2").params(x_mid)
        b = DgpSpec("DGP2", sigma_scale=0.5).params(x_mid)
        np.testing.assert_allclose(b.sigma, 0.5 * a.sigma)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            DgpSpec("DGP3")

    def test_capacity_increases_with_allocation(self, x_mid):
        x2 = x_mid.copy()
        x2[0] += 0.1
        assert capacity_dgp2(x2)[0] > capacity_dgp2(x_mid)[0]


class TestSampling:
    def test_shape_and_purity(self, dgp1, x_mid):
        a = dgp1.sample(x_mid, 64, seed=5)
        b = dgp1.sample(x_mid, 64, seed=5)
        assert a.w.shape == (64, 5)
        np.testing.assert_array_equal(a.w, b.w)

    def test_antithetic_pairing(self, dgp2, x_mid):
        s = dgp2.sample(x_mid, 10, seed=2, antithetic=True)
        np.testing.assert_array_equal(s.z[5:], -s.z[:5])
        mu, sigma = dgp2.params(x_mid).mu, dgp2.params(x_mid).sigma
        # log-normal pairs multiply to exp(2 mu)
        np.testing.assert_allclose(s.w[:5] * s.w[5:], np.exp(2 * mu) * np.ones((5, 1)), rtol=1e-12)
        assert sigma.shape == (5,)

    def test_dgp1_marginal_median(self, dgp1, x_mid):
        w = dgp1.sample(x_mid, 20000, seed=1).w
        mu = dgp1.params(x_mid).mu
        np.testing.assert_allclose(np.median(w, axis=0), mu, atol=0.03)

    def test_dgp2_log_moments(self, dgp2, x_mid):
        w = dgp2.sample(x_mid, 20000, seed=1).w
        p = dgp2.params(x_mid)
        np.testing.assert_allclose(np.log(w).mean(axis=0), p.mu, atol=0.02)
        np.testing.assert_allclose(np.log(w).std(axis=0), p.sigma, rtol=0.03)

    def test_correlation_reproduced(self, dgp2, x_mid):
        s = dgp2.sample(x_mid, 20000, seed=3)
        np.testing.assert_allclose(np.corrcoef(s.z.T), dgp2.params(x_mid).corr, atol=0.03)

    def test_crn_remap_is_bit_identical(self, dgp1, x_mid):
        s = dgp1.sample(x_mid, 50, seed=9, antithetic=True)
        again = s.at(x_mid)
        np.testing.assert_array_equal(again.w, s.w)
        y = x_mid.copy()
        y[5] += 1e-4
        moved = s.at(y)
        assert np.max(np.abs(moved.w - s.w)) < 1e-2

    def test_sample_each(self, dgp1):
        X = random_feasible(np.random.default_rng(0), 7)
        assert dgp1.sample_each(X, seed=0).shape == (7, 5)
        with pytest.raises(DomainError):
            dgp1.sample_each(np.full((2, 6), 0.5))

    def test_infeasible_rejected(self, dgp1):
        with pytest.raises(DomainError):
            dgp1.sample(np.full(6, 0.5), 10)


class TestCosts:
    @pytest.mark.parametrize("kind,names", [("DGP1", ["dmg", "hp", "ep", "del", "ac"]),
                                            ("DGP2", ["hold", "short", "proc", "coord", "setup"])])
    def test_components_sum_to_cost(self, kind, names, x_mid):
        dgp = DgpSpec(kind)
        s = dgp.sample(x_mid, 100, seed=0)
        comps = dgp.cost_components(s, x_mid)
        assert list(comps) == names
        np.testing.assert_allclose(sum(comps.values()), dgp.cost(s, x_mid), rtol=1e-12)
        assert all(np.all(v >= 0) for v in comps.values())

    def test_dgp1_allocation_term(self, dgp1, x_mid):
        comps = dgp1.cost_components(np.zeros((1, 5)), x_mid)
        assert comps["ac"][0] == pytest.approx(30.0 * float(x_mid @ x_mid))
        assert comps["dmg"][0] == 0.0 and comps["del"][0] == 0.0

    def test_decision_mismatch(self, dgp1, x_mid):
        s = dgp1.sample(x_mid, 4, seed=0)
        with pytest.raises(DomainError):
            dgp1.cost(s, feasible_project(x_mid + 0.01))

    def test_exp_term_capped(self, dgp1, x_mid):
        big = dgp1.cost_components(np.full((1, 5), 1e6), x_mid)["ep"]
        assert np.isfinite(big).all()


class TestScenarioCache:
    def test_charges_once_per_generation(self, dgp1, x_mid):
        ledger = OracleLedger()
        cache = ScenarioCache(dgp1, 40, seed=3, ledger=ledger)
        a = cache.get(x_mid, 0)
        b = cache.get(x_mid, 0)
        assert a is b and ledger.total == 40 and cache.generations == 1
        cache.get(x_mid, 1)
        assert ledger.total == 80 and cache.generations == 2

    def test_invalidate(self, dgp1, x_mid):
        cache = ScenarioCache(dgp1, 10, seed=1)
        a = cache.get(x_mid, 0)
        cache.invalidate()
        assert cache.current is None
        b = cache.get(x_mid, 0)
        np.testing.assert_array_equal(a.w, b.w)
        assert cache.generations == 2

    def test_odd_antithetic(self, dgp1, x_mid):
        with pytest.raises(DomainError):
            ScenarioCache(dgp1, 11, antithetic=True).get(x_mid, 0)
