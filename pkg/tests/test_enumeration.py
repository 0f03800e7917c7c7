import itertools

import numpy as np
import pytest

from effective_trade.core import Agent, ContractViolation, Economy, UtilitySpec, apply_topology
from effective_trade.enumeration import (
    EquilibriumRecord,
    dominates,
    enumerate_feasible,
    pareto_filter,
    pareto_mask,
)
from effective_trade.prices import price_feasibility_solve
from conftest import barred_capacities, benchmark_economy, flows_from_vectors, TABLE_2, TABLE_3


def records_by_key(records):
    return {r.key(): r for r in records}


@pytest.fixture(scope="module")
def benchmark_records():
    return enumerate_feasible(benchmark_economy())


class TestEnumerateFeasible:
    def test_benchmark_counts(self, benchmark_records):
        assert len(benchmark_records) == 3334

    def test_autarky_always_present(self, benchmark_records):
        keys = records_by_key(benchmark_records)
        assert tuple([0] * 18) in keys

    def test_contains_every_published_row(self, benchmark_records):
        keys = records_by_key(benchmark_records)
        for _, _, g1, g2, _ in TABLE_2:
            q = flows_from_vectors(g1, g2).astype(int)
            assert tuple(q.ravel()) in keys

    def test_restricted_contains_published_rows(self, restricted_economy):
        recs = records_by_key(enumerate_feasible(restricted_economy))
        for _, _, g1, g2, _ in TABLE_3:
            q = flows_from_vectors(g1, g2).astype(int)
            assert tuple(q.ravel()) in recs

    def test_every_record_is_price_feasible_and_valid(self, benchmark_records):
        eco = benchmark_economy()
        w = eco.endowments()
        rng = np.random.default_rng(2)
        sample = rng.choice(len(benchmark_records), size=60, replace=False)
        for idx in sample:
            rec = benchmark_records[idx]
            q = rec.flows
            # no bidirectional flow per pair and good
            assert np.all((q * np.swapaxes(q, 0, 1)) == 0)
            # sales capped by endowments, holdings non-negative
            assert np.all(q.sum(axis=1) <= w)
            assert np.all(rec.allocation >= 0)
            # stored witness balances all budgets
            from effective_trade.core import budget_residuals
            assert np.max(np.abs(budget_residuals(rec.price_witness, q))) <= 1e-9

    def test_deterministic_order(self):
        a = enumerate_feasible(benchmark_economy())
        b = enumerate_feasible(benchmark_economy())
        assert [r.key() for r in a] == [r.key() for r in b]
        keys = [r.key() for r in a]
        assert keys == sorted(keys)

    def test_matches_brute_force_on_tiny_economy(self):
        eco = Economy(agents=(
            Agent(endowment=[1, 1], utility=UtilitySpec.ces([0.5, 0.5], 0.5)),
            Agent(endowment=[1, 1], utility=UtilitySpec.ces([0.3, 0.7], 0.5)),
        ), mode="discrete")
        got = {r.key() for r in enumerate_feasible(eco)}
        expected = set()
        # brute force: all directed integer flows up to the endowment cap
        for vals in itertools.product(range(2), repeat=4):
            q = np.zeros((2, 2, 2), dtype=int)
            q[0, 1, 0], q[1, 0, 0], q[0, 1, 1], q[1, 0, 1] = vals
            if np.any(q * np.swapaxes(q, 0, 1) > 0):
                continue
            if np.any(q.sum(axis=1) > eco.endowments()):
                continue
            if price_feasibility_solve(eco, q) is None:
                continue
            expected.add(tuple(q.ravel()))
        assert got == expected

    def test_flow_bound_caps_entries(self):
        eco = benchmark_economy()
        recs = enumerate_feasible(eco, flow_bound=1)
        assert all(r.flows.max() <= 1 for r in recs)

    def test_flow_bound_validation(self):
        with pytest.raises(ContractViolation):
            enumerate_feasible(benchmark_economy(), flow_bound=0)

    def test_requires_discrete_mode(self, continuous_economy):
        with pytest.raises(ContractViolation):
            enumerate_feasible(continuous_economy)

    def test_single_agent_economy_has_only_autarky(self):
        eco = Economy(agents=(Agent(endowment=[2, 1],
                                    utility=UtilitySpec.ces([0.5, 0.5], 0.5)),),
                      mode="discrete")
        recs = enumerate_feasible(eco)
        assert len(recs) == 1
        assert np.all(recs[0].flows == 0)


class TestTopology:
    def test_restricted_counts(self, restricted_economy):
        recs = enumerate_feasible(restricted_economy)
        assert len(recs) == 225
        assert len(pareto_filter(recs)) == 56

    def test_infinite_capacities_change_nothing(self, benchmark_records):
        eco = apply_topology(benchmark_economy(), np.full((3, 3, 2), np.inf))
        recs = enumerate_feasible(eco)
        assert [r.key() for r in recs] == [r.key() for r in benchmark_records]

    def test_zero_capacities_leave_only_autarky(self):
        eco = apply_topology(benchmark_economy(), np.zeros((3, 3, 2)))
        recs = enumerate_feasible(eco)
        assert len(recs) == 1
        assert np.all(recs[0].flows == 0)

    def test_monotone_restriction(self, benchmark_records):
        # tighter capacities can only shrink the feasible set
        sub = {r.key() for r in enumerate_feasible(
            benchmark_economy(capacities=barred_capacities()))}
        full = {r.key() for r in benchmark_records}
        assert sub <= full

    def test_negative_capacity_rejected(self):
        with pytest.raises(ContractViolation):
            apply_topology(benchmark_economy(), -np.ones((3, 3, 2)))


class TestParetoFilter:
    def test_benchmark_pareto_count(self, benchmark_records):
        assert len(pareto_filter(benchmark_records)) == 771

    def test_dominated_profile_removed(self):
        recs = [
            EquilibriumRecord(np.zeros((2, 2, 1), dtype=int), np.eye(2), 0,
                              np.zeros((2, 1)), np.array(u))
            for u in ([1.0, 1.0, 1.0], [2.0, 1.0, 1.0])
        ]
        out = pareto_filter(recs)
        assert len(out) == 1
        assert np.array_equal(out[0].utilities, [2.0, 1.0, 1.0])
        assert recs[0].pareto is False and recs[1].pareto is True

    def test_empty_input(self):
        assert pareto_filter([]) == []

    def test_soundness_and_completeness(self, benchmark_records):
        U = np.array([r.utilities for r in benchmark_records])
        keep = pareto_mask(U)
        kept = U[keep]
        excluded = U[~keep]
        rng = np.random.default_rng(4)
        # soundness: no kept profile dominated by any input profile
        for idx in rng.choice(len(kept), size=40, replace=False):
            assert not any(dominates(v, kept[idx]) for v in U)
        # completeness: every excluded profile dominated by some kept one
        for idx in rng.choice(len(excluded), size=40, replace=False):
            assert any(dominates(v, excluded[idx]) for v in kept)

    def test_ties_all_survive(self):
        recs = [
            EquilibriumRecord(np.zeros((2, 2, 1), dtype=int), np.eye(2), 0,
                              np.zeros((2, 1)), np.array([1.0, 2.0]))
            for _ in range(3)
        ]
        assert len(pareto_filter(recs)) == 3
