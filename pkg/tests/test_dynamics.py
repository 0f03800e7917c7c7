import numpy as np
import pytest

from effective_trade.core import (
    Agent,
    Economy,
    OfferTensor,
    UtilitySpec,
    budget_residuals,
    effective_flows,
    feasibility_check,
    final_allocation,
    saturated_offers,
    uniform_prices,
)
from effective_trade.dynamics import (
    find_improving_deviation,
    gradient_ascent,
    nontatonnement_nash_step,
    nontatonnement_step,
    project_feasible,
    rest_point_certificate,
    run_nontatonnement,
    welfare,
    welfare_supergradient,
)
from conftest import (
    TABLE_1_GOOD1,
    TABLE_1_GOOD2,
    TABLE_1_PRICES,
    benchmark_economy,
    flows_from_vectors,
)


def table1_state():
    q = flows_from_vectors(TABLE_1_GOOD1, TABLE_1_GOOD2)
    t = np.array(TABLE_1_PRICES)
    return np.stack([t, 1 - t], axis=1), q


class TestSupergradient:
    def test_matches_finite_differences_at_interior_state(self, continuous_economy):
        rng = np.random.default_rng(9)
        eco = continuous_economy
        for _ in range(10):
            q = rng.uniform(0.1, 0.5, size=(3, 3, 2))
            q[np.arange(3), np.arange(3), :] = 0
            offers = saturated_offers(q)
            grad = welfare_supergradient(eco, uniform_prices(3, 2), offers)
            h = 1e-6
            for i in range(3):
                for j in range(3):
                    if i == j:
                        continue
                    for k in range(2):
                        bump = offers.buy.copy()
                        bump[i, j, k] += h
                        up = welfare(eco, uniform_prices(3, 2),
                                     OfferTensor(offers.sell, bump))
                        bump[i, j, k] -= 2 * h
                        dn = welfare(eco, uniform_prices(3, 2),
                                     OfferTensor(offers.sell, np.maximum(bump, 0)))
                        fd = (up - dn) / (2 * h)
                        assert grad.dbuy[i, j, k] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_autarky_direction_buys_upward(self, continuous_economy):
        offers = saturated_offers(np.zeros((3, 3, 2)))
        grad = welfare_supergradient(continuous_economy, uniform_prices(3, 2), offers)
        for i in range(3):
            for j in range(3):
                if i != j:
                    assert np.all(grad.dbuy[i, j] > 0)
        assert np.all(grad.dprices == 0)

    def test_single_agent_zero_direction(self):
        eco = Economy(agents=(Agent(endowment=[2.0, 1.0],
                                    utility=UtilitySpec.ces([0.5, 0.5], 0.5)),))
        grad = welfare_supergradient(eco, uniform_prices(1, 2),
                                     saturated_offers(np.zeros((1, 1, 2))))
        assert np.all(grad.dbuy == 0) and np.all(grad.dsell == 0)

    def test_boundary_reported(self, continuous_economy):
        q = flows_from_vectors((0, 3, 0, 0, 0, 0), (0, 0, 0, 0, 3, 0))
        grad = welfare_supergradient(continuous_economy, uniform_prices(3, 2),
                                     saturated_offers(q.astype(float)))
        assert grad.boundary.any()


class TestProjectFeasible:
    def test_feasible_point_unchanged(self, continuous_economy):
        offers = saturated_offers(np.zeros((3, 3, 2)))
        p = uniform_prices(3, 2)
        out = project_feasible(continuous_economy, p, offers)
        assert np.allclose(out.prices, p, atol=1e-9)
        assert np.allclose(out.offers.sell, 0, atol=1e-9)

    def test_simplex_violation_fixed_by_row_projection(self, continuous_economy):
        offers = saturated_offers(np.zeros((3, 3, 2)))
        bad = np.array([[0.8, 0.8], [0.2, 0.2], [0.5, 0.5]])
        out = project_feasible(continuous_economy, bad, offers)
        assert np.allclose(out.prices.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(out.offers.sell, 0, atol=1e-9)
        # rows that only violated normalization move along the diagonal
        assert out.prices[0, 0] == pytest.approx(0.5, abs=1e-9)

    def test_random_point_lands_feasible(self, continuous_economy):
        rng = np.random.default_rng(31)
        for _ in range(5):
            sell = rng.uniform(0, 0.8, size=(3, 3, 2))
            buy = rng.uniform(0, 0.8, size=(3, 3, 2))
            sell[np.arange(3), np.arange(3), :] = 0
            buy[np.arange(3), np.arange(3), :] = 0
            p = rng.dirichlet(np.ones(2), size=3)
            out = project_feasible(continuous_economy, p, OfferTensor(sell, buy))
            rep = feasibility_check(continuous_economy, out.prices, out.offers,
                                    tol=1e-7)
            assert rep.feasible, rep.violations

    def test_idempotent(self, continuous_economy):
        rng = np.random.default_rng(13)
        sell = rng.uniform(0, 0.5, size=(3, 3, 2))
        sell[np.arange(3), np.arange(3), :] = 0
        out1 = project_feasible(continuous_economy, uniform_prices(3, 2),
                                OfferTensor(sell, sell.copy()))
        out2 = project_feasible(continuous_economy, out1.prices, out1.offers)
        assert np.max(np.abs(out2.prices - out1.prices)) <= 1e-8
        assert np.max(np.abs(out2.offers.sell - out1.offers.sell)) <= 1e-8


class TestGradientAscent:
    @pytest.fixture(scope="class")
    def result(self):
        return gradient_ascent(benchmark_economy(mode="continuous"))

    def test_terminates_at_fixed_point(self, result):
        assert result.converged
        assert result.trajectory[-1][2] <= 1e-6

    def test_welfare_monotone(self, result):
        us = [u for _, u, _ in result.trajectory]
        assert all(b >= a - 1e-9 for a, b in zip(us, us[1:]))

    def test_terminal_welfare_beats_autarky(self, result):
        # autarky welfare is 1.2848 + 2 + 1.2848
        assert result.terminal.welfare >= 4.57

    def test_terminal_state_feasible(self, result):
        eco = benchmark_economy(mode="continuous")
        rep = feasibility_check(eco, result.terminal.prices,
                                result.terminal.offers, tol=1e-7)
        assert rep.feasible

    def test_one_good_identical_agents_stay_put(self):
        eco = Economy(agents=(
            Agent(endowment=[2.0], utility=UtilitySpec.ces([1.0], 0.5)),
            Agent(endowment=[2.0], utility=UtilitySpec.ces([1.0], 0.5)),
        ))
        res = gradient_ascent(eco, max_steps=50)
        assert res.terminal.welfare == pytest.approx(
            welfare(eco, uniform_prices(2, 1), saturated_offers(np.zeros((2, 2, 1)))),
            abs=1e-7)
        assert np.allclose(effective_flows(res.terminal.offers), 0.0, atol=1e-6)


class TestNontatonnement:
    def test_first_step_found_from_benchmark(self, economy):
        out = nontatonnement_step(economy, economy.endowments())
        assert out is not None
        rec, endow = out
        assert np.all(rec.utilities >= economy.utilities_at(economy.endowments()) - 1e-9)

    def test_rest_point_returns_none(self, economy):
        # the mirrored endowment is the process's own terminal point
        steps, path = run_nontatonnement(economy)
        assert nontatonnement_step(economy, path[-1]) is None

    def test_two_agent_one_good_no_step(self):
        eco = Economy(agents=(
            Agent(endowment=[2], utility=UtilitySpec.ces([1.0], 0.5)),
            Agent(endowment=[1], utility=UtilitySpec.ces([1.0], 0.5)),
        ), mode="discrete")
        assert nontatonnement_step(eco, eco.endowments()) is None

    def test_utilities_nondecreasing_over_run(self, economy):
        steps, path = run_nontatonnement(economy)
        prev = economy.utilities_at(economy.endowments())
        for _, utils in steps:
            assert np.all(utils >= prev - 1e-9)
            prev = utils
        ok, _ = rest_point_certificate(economy, path[-1], samples=1000, seed=3)
        assert ok

    def test_nash_restricted_first_step_hits_top_profile(self, economy):
        out = nontatonnement_nash_step(economy, economy.endowments())
        assert out is not None
        rec, endow = out
        assert float(rec.utilities.sum()) == pytest.approx(6.9486, abs=1e-3)
        assert np.array_equal(rec.flows[0, 2], [2, 0])

    def test_nash_restricted_run_terminates(self, economy):
        steps, path = run_nontatonnement(economy, nash=True)
        assert 1 <= len(steps) < 25
        prev = economy.utilities_at(economy.endowments())
        for rec, utils in steps:
            assert rec.nash
            assert np.all(utils >= prev - 1e-9)
            prev = utils


class TestContinuousDeviationSearch:
    def test_published_continuous_allocation_is_not_nash(self, continuous_economy):
        p, q = table1_state()
        dev = find_improving_deviation(continuous_economy, p, q)
        assert dev is not None
        agent, bundle, gain = dev
        assert gain > 1e-3

    def test_autarky_admits_no_deviation(self, continuous_economy):
        p = uniform_prices(3, 2)
        dev = find_improving_deviation(continuous_economy, p, np.zeros((3, 3, 2)))
        assert dev is None
