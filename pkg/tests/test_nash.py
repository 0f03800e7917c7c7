import numpy as np
import pytest

from effective_trade.core import budget_residuals
from effective_trade.enumeration import enumerate_feasible
from effective_trade.nash import DeviationCertificate, is_nash, nash_pareto_set, nash_set
from conftest import benchmark_economy, flows_from_vectors, TABLE_2, TABLE_3


@pytest.fixture(scope="module")
def benchmark():
    eco = benchmark_economy()
    records = enumerate_feasible(eco)
    nash = nash_set(eco, records)
    nash_pareto_set(eco, records)
    return eco, records, nash


def find_record(records, g1, g2):
    key = tuple(flows_from_vectors(g1, g2).astype(int).ravel())
    for r in records:
        if r.key() == key:
            return r
    raise AssertionError("record not in the feasible set")


class TestIsNash:
    def test_autarky_is_nash(self, benchmark):
        eco, records, _ = benchmark
        rec = find_record(records, (0,) * 6, (0,) * 6)
        ok, witness = is_nash(eco, rec)
        assert ok
        assert witness.shape == (3, 2)

    def test_published_two_for_two_swap_is_nash(self, benchmark):
        eco, records, _ = benchmark
        rec = find_record(records, (0, 2, 0, 0, 0, 0), (0, 0, 0, 0, 2, 0))
        ok, witness = is_nash(eco, rec)
        assert ok
        assert np.max(np.abs(budget_residuals(witness, rec.flows))) <= 1e-9

    def test_lopsided_trade_rejected_with_certificate(self, benchmark):
        # shipping 3-for-1 leaves the shipper worse than withdrawal
        eco, records, _ = benchmark
        rec = find_record(records, (0, 3, 0, 0, 0, 0), (0, 0, 0, 0, 1, 0))
        ok, cert = is_nash(eco, rec)
        assert not ok
        assert isinstance(cert, DeviationCertificate)
        assert cert.utility_gain > 0
        # the certificate's deviation is a sub-flow of the state
        assert np.all(cert.purchases <= rec.flows[:, cert.agent, :])
        assert np.all(cert.sales <= rec.flows[cert.agent, :, :])
        # the balancing price row lies on the simplex and balances the move
        assert cert.price_row.sum() == pytest.approx(1.0)
        V = float(np.einsum("jk,jk->", rec.price_witness, cert.purchases))
        S = cert.sales.sum(axis=0)
        assert S.min() - 1e-9 <= V <= S.max() + 1e-9

    def test_three_for_three_swap_fails_complete_search(self, benchmark):
        # trading all three units is published as an equilibrium, but a
        # two-for-two sub-trade strictly improves both sides at every price,
        # so the complete deviation search rejects it
        eco, records, _ = benchmark
        rec = find_record(records, (0, 3, 0, 0, 0, 0), (0, 0, 0, 0, 3, 0))
        ok, cert = is_nash(eco, rec, deviation_mode="full")
        assert not ok
        assert cert.utility_gain > 0.5
        # the same state survives the coordinate-only search
        ok_coord, _ = is_nash(eco, rec, deviation_mode="coordinate")
        assert ok_coord

    def test_profile_outside_published_six_is_rejected(self, benchmark):
        eco, records, nash = benchmark
        published = {u for u, *_ in TABLE_2}
        for rec in nash:
            prof = tuple(round(v, 2) for v in rec.utilities)
            assert prof in published

    def test_infeasible_record_rejected(self, benchmark):
        eco, records, _ = benchmark
        rec = find_record(records, (0,) * 6, (0,) * 6)
        import dataclasses
        bad = dataclasses.replace(rec, feasible=False) if dataclasses.is_dataclass(rec) else rec
        from effective_trade.core import ContractViolation
        with pytest.raises(ContractViolation):
            is_nash(eco, bad)


class TestNashSet:
    def test_published_rows_classified_nash(self, benchmark):
        eco, records, nash = benchmark
        keys = {r.key() for r in nash}
        missing = []
        for utils, _, g1, g2, _ in TABLE_2:
            key = tuple(flows_from_vectors(g1, g2).astype(int).ravel())
            if key not in keys:
                missing.append((utils, g1, g2))
        # the complete deviation search validates 17 of the 18 published rows;
        # the three-for-three swap is refuted by an explicit certificate
        assert len(missing) == 1
        assert missing[0][0] == (1.90, 2.00, 1.90)

    def test_nash_count_and_profiles(self, benchmark):
        eco, records, nash = benchmark
        assert len(nash) == 19
        profiles = {tuple(round(v, 2) for v in r.utilities) for r in nash}
        assert profiles == {(1.28, 2.0, 1.28), (1.28, 2.02, 2.0), (2.0, 2.0, 2.0),
                            (2.47, 2.0, 2.47), (2.0, 2.02, 2.47)}

    def test_nash_pareto_subset_chain(self, benchmark):
        eco, records, nash = benchmark
        np_recs = [r for r in records if r.nash_pareto]
        nash_keys = {r.key() for r in nash}
        feasible_keys = {r.key() for r in records}
        assert {r.key() for r in np_recs} <= nash_keys <= feasible_keys

    def test_nash_pareto_equals_nash_intersect_pareto_when_nonempty(self, benchmark):
        from effective_trade.enumeration import pareto_filter
        eco, records, nash = benchmark
        pareto_filter(records)
        inter = {r.key() for r in records if r.nash and r.pareto}
        np_keys = {r.key() for r in records if r.nash_pareto}
        if inter:
            assert np_keys == inter

    def test_welfare_theorems_fail_on_benchmark(self, benchmark):
        # some Pareto records are not Nash and some Nash records not Pareto
        from effective_trade.enumeration import pareto_filter
        eco, records, nash = benchmark
        pareto_filter(records)
        assert any(r.pareto and not r.nash for r in records)
        assert any(r.nash and not r.pareto for r in records)

    def test_stored_witnesses_balance_budgets(self, benchmark):
        eco, records, nash = benchmark
        for rec in nash:
            assert np.max(np.abs(budget_residuals(rec.price_witness, rec.flows))) <= 1e-9

    def test_autarky_in_every_nash_set(self, benchmark):
        eco, records, nash = benchmark
        assert tuple([0] * 18) in {r.key() for r in nash}


class TestRestrictedNashSet:
    def test_table_3_reproduced_exactly(self, restricted_economy):
        records = enumerate_feasible(restricted_economy)
        nash = nash_set(restricted_economy, records)
        np_set = nash_pareto_set(restricted_economy, records)
        assert len(nash) == 2
        got = sorted((tuple(round(v, 2) for v in r.utilities), r.flow_vector(0),
                      r.flow_vector(1), bool(r.nash_pareto)) for r in nash)
        expected = sorted((u, g1, g2, star) for u, _, g1, g2, star in TABLE_3)
        assert [g[1:] for g in got] == [e[1:] for e in expected]
        assert got[0][0] == pytest.approx(expected[0][0], abs=0.01)
        assert got[1][0] == pytest.approx(expected[1][0], abs=0.01)
        assert len(np_set) == 1
        # neither restricted equilibrium is Pareto-optimal in the full sense
        from effective_trade.enumeration import pareto_filter
        pareto_filter(records)
        assert all(not r.pareto for r in nash)
