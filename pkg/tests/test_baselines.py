import numpy as np
import pytest

from acfs import BaselineConfig, DgpSpec, DomainError, OracleLedger, QuadraticOracle, RiskParams
from acfs.baselines import METHODS, RUNNERS, PlainEvaluator, run_cem_so, run_gp_bo, run_kde_so, run_sgd_cvar
from acfs.scenarios import is_feasible

TINY = BaselineConfig(gp_n_init=6, gp_steps=10, gp_mc=20, gp_refit_every=5, gp_candidates=200,
                      gp_ei_polish_iter=3, gp_polish_mc=40, cem_iters=3, cem_pop=12, cem_mc=20,
                      sgd_warm_iters=5, sgd_fine_iters=8, sgd_batch=10, sgd_final_mc=30, sgd_polish_mc=30,
                      kde_train=150, kde_mc=20, kde_de_iters=3, kde_de_pop=10, kde_starts=2, kde_final_mc=40,
                      polish_maxit=3)


class TestConfig:
    def test_defaults(self):
        cfg = BaselineConfig()
        assert (cfg.gp_n_init, cfg.gp_steps, cfg.gp_mc, cfg.gp_refit_every) == (18, 25, 130, 5)
        assert (cfg.cem_iters, cfg.cem_pop, cfg.cem_mc, cfg.cem_polish_mc) == (12, 55, 130, 520)
        assert (cfg.sgd_warm_chains, cfg.sgd_warm_iters, cfg.sgd_fine_iters, cfg.sgd_batch) == (2, 80, 160, 60)
        assert (cfg.kde_train, cfg.kde_mc, cfg.kde_bandwidth) == (2600, 100, 0.15)

    def test_scaled(self):
        cfg = BaselineConfig().scaled(4)
        assert (cfg.gp_mc, cfg.cem_mc, cfg.sgd_batch, cfg.kde_train, cfg.kde_final_mc) == (32, 32, 15, 650, 125)
        assert cfg.gp_steps == 25 and cfg.cem_iters == 12

    def test_validation(self):
        with pytest.raises(DomainError):
            BaselineConfig(gp_mc=0)

    def test_registry(self):
        assert METHODS == ("ACFS", "GP-BO", "CEM-SO", "SGD-CVaR", "KDE-SO")
        assert set(RUNNERS) == set(METHODS[1:])


class TestPlainEvaluator:
    def test_fresh_draws_each_call(self, dgp1, x_mid):
        ledger = OracleLedger()
        ev = PlainEvaluator(dgp1, 50, RiskParams(), seed=0, ledger=ledger, line="probe")
        a, b = ev(x_mid), ev(x_mid)
        assert a != b
        assert ledger.lines == {"probe": 100} and ev.calls == 2


class TestRunners:
    def test_gp_bo_budget_and_refits(self, dgp1):
        ledger = OracleLedger()
        sol = run_gp_bo(dgp1, RiskParams(), TINY, seed=1, ledger=ledger)
        assert sol.info["refits"] == [5, 10]
        assert sol.info["n_acquisitions"] == 16
        assert ledger.lines == {"gp.search": 16 * 20, "gp.polish": sol.info["polish_calls"] * 40}
        assert is_feasible(sol.x_star)

    def test_gp_bo_default_refit_schedule(self):
        cfg = BaselineConfig()
        assert [a for a in range(1, cfg.gp_steps + 1) if a % cfg.gp_refit_every == 0] == [5, 10, 15, 20, 25]

    def test_cem_so_budget_and_elites(self, dgp1):
        ledger = OracleLedger()
        sol = run_cem_so(dgp1, RiskParams(), TINY, seed=1, ledger=ledger)
        assert ledger.lines == {"cem.search": 3 * 12 * 20, "cem.polish": sol.info["polish_calls"] * 80}
        assert run_cem_so(QuadraticOracle(), cfg=BaselineConfig(cem_iters=1, polish_maxit=1)).info["n_elite"] == 9

    def test_sgd_budget(self, dgp1):
        ledger = OracleLedger()
        sol = run_sgd_cvar(dgp1, RiskParams(), TINY, seed=1, ledger=ledger)
        assert sol.info["gradient_batches"] == 2 * 5 + 8
        assert ledger.lines == {"sgd.chains": 18 * 10, "sgd.rescore": 2 * 30,
                                "sgd.polish": sol.info["polish_calls"] * 30}

    def test_kde_budget(self, dgp1):
        ledger = OracleLedger()
        sol = run_kde_so(dgp1, RiskParams(), TINY, seed=1, ledger=ledger)
        assert ledger.lines == {"kde.train": 150, "kde.final": 40}
        assert sol.estimate.n_draws == 40 and sol.info["n_starts"] == 2

    @pytest.mark.parametrize("method", list(RUNNERS))
    def test_deterministic(self, method, dgp2):
        a = RUNNERS[method](dgp2, RiskParams(), TINY, seed=4)
        b = RUNNERS[method](dgp2, RiskParams(), TINY, seed=4)
        np.testing.assert_array_equal(a.x_star, b.x_star)
        assert a.estimate == b.estimate and a.oracle_calls == b.oracle_calls

    @pytest.mark.parametrize("method", list(RUNNERS))
    def test_quadratic_oracle(self, method):
        oracle = QuadraticOracle()
        sol = RUNNERS[method](oracle, RiskParams(), BaselineConfig().scaled(4), seed=0)
        assert np.linalg.norm(sol.x_star - oracle.optimum) < 5e-2
