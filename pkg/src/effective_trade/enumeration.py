"""Exhaustive enumeration of feasible indivisible-goods trade states.

A candidate state is an integer flow tensor; offers are taken to saturate the
flows (both sides post exactly what trades). Feasibility per good requires no
bidirectional flow inside a pair, capacity compliance, holdings inside every
consumption set, and each agent's total posted sales of a good not exceeding
its endowment of that good; across goods the state must admit at least one
simplex price system balancing every agent's budget.

The sales-capped-by-endowment rule is what bounds the state space (cyclic
shipments would otherwise be unbounded); the looser rule that only caps
entries at a global flow bound is available via ``offer_cap="flow-bound"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional

import numpy as np

from .core import ContractViolation, Economy, evaluate_utility, final_allocation
from .prices import PricePolytope, price_feasibility_solve, reduced_price_system

__all__ = ["EquilibriumRecord", "enumerate_feasible", "pareto_filter",
           "dominates", "pareto_mask"]


@dataclass
class EquilibriumRecord:
    """A feasible state: integer flows, canonical price witness, derived data.

    ``pareto``/``nash``/``nash_pareto`` start as None and are filled in by the
    corresponding set computations.
    """

    flows: np.ndarray
    price_witness: np.ndarray
    polytope_dim: int
    allocation: np.ndarray
    utilities: np.ndarray
    feasible: bool = True
    pareto: Optional[bool] = None
    nash: Optional[bool] = None
    nash_pareto: Optional[bool] = None
    certificate: object = None

    def key(self):
        """Deterministic identity: the flattened flow tensor."""
        return tuple(int(v) for v in self.flows.ravel())

    def flow_vector(self, good):
        """Flows of one good in the conventional bilateral column order
        (upper-triangle pairs first, then the reversed directions)."""
        n = self.flows.shape[0]
        fwd = [(i, j) for i in range(n) for j in range(i + 1, n)]
        rev = [(j, i) for (i, j) in fwd]
        return tuple(int(self.flows[i, j, good]) for i, j in fwd + rev)


def _pair_options(i, j, k, ub_ij, ub_ji):
    """All (flow i->j, flow j->i) choices for one pair and good: at most one
    direction positive."""
    opts = [(0, 0)]
    opts += [(m, 0) for m in range(1, ub_ij + 1)]
    opts += [(0, m) for m in range(1, ub_ji + 1)]
    return opts


def _good_configs(economy: Economy, k, flow_bound_k, offer_cap):
    """All feasible single-good flow matrices (n, n) of integers."""
    n = economy.n
    w = economy.endowments()[:, k]
    cap = economy.capacities
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def ub(i, j):
        b = flow_bound_k
        if offer_cap == "endowment":
            b = min(b, int(w[i]))
        if cap is not None:
            b = min(b, int(min(cap[i, j, k], flow_bound_k)))
        return max(b, 0)

    options = [_pair_options(i, j, k, ub(i, j), ub(j, i)) for i, j in pairs]
    configs = []
    for combo in product(*options):
        q = np.zeros((n, n), dtype=int)
        for (i, j), (fij, fji) in zip(pairs, combo):
            q[i, j] = fij
            q[j, i] = fji
        sales = q.sum(axis=1)
        if offer_cap == "endowment":
            if np.any(sales > w):
                continue
        holding = w + q.sum(axis=0) - sales
        ok = True
        for idx, a in enumerate(economy.agents):
            if holding[idx] < a.lower[k] or holding[idx] > a.upper[k]:
                ok = False
                break
        if ok:
            configs.append(q)
    return configs


def enumerate_feasible(economy: Economy, flow_bound=None,
                       offer_cap="endowment") -> list:
    """All feasible integer flow tensors with their canonical price witnesses,
    in lexicographic order of the flattened tensor.

    ``flow_bound`` may be a scalar or per-good vector; it defaults to the
    total endowment of each good.
    """
    if economy.mode != "discrete":
        raise ContractViolation("enumeration requires a discrete economy")
    n, L = economy.n, economy.goods
    totals = economy.endowments().sum(axis=0)
    if flow_bound is None:
        bounds = [int(t) for t in totals]
    else:
        arr = np.broadcast_to(np.asarray(flow_bound, dtype=int), (L,))
        if np.any(arr < 1):
            raise ContractViolation("flow bound must be at least 1")
        bounds = [int(v) for v in arr]
    if offer_cap not in ("endowment", "flow-bound"):
        raise ContractViolation(f"unknown offer cap rule {offer_cap!r}")

    per_good = [_good_configs(economy, k, bounds[k], offer_cap) for k in range(L)]
    w = economy.endowments()
    records = []
    for combo in product(*per_good):
        q = np.stack(combo, axis=2)
        witness = price_feasibility_solve(economy, q)
        if witness is None:
            continue
        alloc = w + q.sum(axis=0) - q.sum(axis=1)
        utils = np.array([evaluate_utility(a.utility, alloc[i])
                          for i, a in enumerate(economy.agents)])
        records.append(EquilibriumRecord(
            flows=q, price_witness=witness.prices,
            polytope_dim=witness.polytope_dim,
            allocation=alloc.astype(float), utilities=utils))
    records.sort(key=lambda r: r.key())
    return records


# ---------------------------------------------------------------------------
# Pareto filtering
# ---------------------------------------------------------------------------

def dominates(u, v, tol=1e-9):
    """True when profile u weakly beats v everywhere and strictly somewhere."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return bool(np.all(u >= v - tol) and np.any(u > v + tol))


def pareto_mask(utilities, tol=1e-9):
    """Boolean mask of undominated rows of a (N, n) utility matrix."""
    U = np.asarray(utilities, dtype=float)
    N = U.shape[0]
    mask = np.ones(N, dtype=bool)
    if N == 0:
        return mask
    ge = np.all(U[None, :, :] >= U[:, None, :] - tol, axis=2)
    gt = np.any(U[None, :, :] > U[:, None, :] + tol, axis=2)
    dominated = np.any(ge & gt, axis=1)
    return ~dominated


def pareto_filter(records, tol=1e-9):
    """Records whose utility profile no other input record dominates.

    Sets the ``pareto`` flag on every input record.
    """
    records = list(records)
    if not records:
        return []
    U = np.array([r.utilities for r in records])
    keep = pareto_mask(U, tol=tol)
    for r, flag in zip(records, keep):
        r.pareto = bool(flag)
    return [r for r, flag in zip(records, keep) if flag]
