"""First-order (KKT) analysis of a single agent's trade problem.

The Lagrangian couples the agent's utility with its transaction balance
(multiplier lam), offer non-negativity (mu), the partner cross-caps (eta),
holding non-negativity (theta), price non-negativity (nu) and the simplex
normalization (kappa). Stationarity in the agent's own price and in each
buy/sell coordinate, together with complementary slackness and dual signs,
characterizes the agent's optimum; the residual checker measures how far a
supplied primal/dual point is from satisfying each family.

Multipliers for an externally supplied primal point can be recovered by
bounded least squares on the stationarity system, with inactive-constraint
multipliers pinned to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    ContractViolation,
    Economy,
    OfferTensor,
    utility_gradient,
)

__all__ = ["KKTPoint", "KKTReport", "kkt_residuals", "fit_kkt_multipliers",
           "classify_price_regimes", "RegimeReport"]


@dataclass
class KKTPoint:
    """Primal state plus one agent's multipliers."""

    agent: int
    prices: np.ndarray          # (n, L) all agents' price rows
    offers: OfferTensor         # joint posted offers
    lam: float                  # transaction balance
    mu_sell: np.ndarray         # (n, L) own sell-offer >= 0
    mu_buy: np.ndarray          # (n, L) own buy-offer >= 0
    eta_sell: np.ndarray        # (n, L) sell cross-cap
    eta_buy: np.ndarray         # (n, L) buy cross-cap
    theta: np.ndarray           # (L,) holding >= 0
    nu: np.ndarray              # (L,) own price >= 0
    kappa: float                # simplex normalization


@dataclass(frozen=True)
class KKTReport:
    primal: float
    complementary: float
    dual: float
    stationarity_price: float
    stationarity_sell: float
    stationarity_buy: float

    @property
    def stationarity(self):
        return max(self.stationarity_price, self.stationarity_sell,
                   self.stationarity_buy)

    @property
    def worst(self):
        return max(self.primal, self.complementary, self.dual, self.stationarity)


def _agent_arrays(point: KKTPoint, economy: Economy):
    i = point.agent
    n, L = economy.n, economy.goods
    sell = point.offers.sell[i]                     # (n, L): own sales x_ij
    buy = point.offers.buy[i]                       # (n, L): own purchases x_ji
    y_buycap = point.offers.buy[:, i, :]            # partner j's buy offer caps x_ij
    y_sellcap = point.offers.sell[:, i, :]          # partner j's sell offer caps x_ji
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    return i, n, L, sell, buy, y_buycap, y_sellcap, mask


def kkt_residuals(economy: Economy, point: KKTPoint, grad_cap=1e12) -> KKTReport:
    """Max absolute violation of each KKT family at the supplied point."""
    i, n, L, sell, buy, y_buycap, y_sellcap, mask = _agent_arrays(point, economy)
    p = point.prices
    agent = economy.agents[i]
    holding = agent.endowment + buy[mask].sum(axis=0) - sell[mask].sum(axis=0)
    g, _ = utility_gradient(agent.utility, np.maximum(holding, 0.0), cap=grad_cap)

    primal = 0.0
    primal = max(primal, float(np.max(-sell[mask], initial=0.0)))
    primal = max(primal, float(np.max(-buy[mask], initial=0.0)))
    primal = max(primal, float(np.max(sell[mask] - y_buycap[mask], initial=0.0)))
    primal = max(primal, float(np.max(buy[mask] - y_sellcap[mask], initial=0.0)))
    primal = max(primal, float(np.max(-p[i], initial=0.0)))
    primal = max(primal, abs(float(p[i].sum()) - 1.0))
    budget = float(np.einsum("jk,jk->", p[mask], buy[mask]) - p[i] @ sell[mask].sum(axis=0))
    primal = max(primal, abs(budget))
    primal = max(primal, float(np.max(-holding, initial=0.0)))

    comp = 0.0
    comp = max(comp, float(np.max(np.abs(point.mu_sell[mask] * sell[mask]), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(point.mu_buy[mask] * buy[mask]), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(point.eta_sell[mask] * (y_buycap[mask] - sell[mask])), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(point.eta_buy[mask] * (y_sellcap[mask] - buy[mask])), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(point.nu * p[i]), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(point.theta * holding), initial=0.0)))

    dual = 0.0
    for arr in (point.mu_sell[mask], point.mu_buy[mask], point.eta_sell[mask],
                point.eta_buy[mask], point.theta, point.nu):
        dual = max(dual, float(np.max(-arr, initial=0.0)))

    # stationarity: dL/dp_k, dL/dx_sell, dL/dx_buy
    st_p = point.lam * sell[mask].sum(axis=0) + point.nu + point.kappa
    stationarity_price = float(np.max(np.abs(st_p)))
    st_sell = (-g[None, :] + point.lam * p[i][None, :] + point.mu_sell[mask]
               - point.eta_sell[mask] - point.theta[None, :])
    st_buy = (g[None, :] - point.lam * p[mask] + point.mu_buy[mask]
              - point.eta_buy[mask] + point.theta[None, :])
    return KKTReport(primal, comp, dual, stationarity_price,
                     float(np.max(np.abs(st_sell), initial=0.0)),
                     float(np.max(np.abs(st_buy), initial=0.0)))


def fit_kkt_multipliers(economy: Economy, agent: int, prices, offers: OfferTensor,
                        active_tol=1e-7, grad_cap=1e12) -> KKTPoint:
    """Recover multipliers for a primal point by sign-constrained least squares.

    Complementary slackness pins multipliers of inactive constraints to zero;
    the remaining ones (plus the free lam and kappa) are fitted to the
    stationarity equations with non-negativity bounds.
    """
    from scipy.optimize import lsq_linear

    p = np.asarray(prices, dtype=float)
    n, L = economy.n, economy.goods
    point = KKTPoint(agent, p, offers, 0.0, np.zeros((n, L)), np.zeros((n, L)),
                     np.zeros((n, L)), np.zeros((n, L)), np.zeros(L),
                     np.zeros(L), 0.0)
    i, n, L, sell, buy, y_buycap, y_sellcap, mask = _agent_arrays(point, economy)
    a = economy.agents[i]
    holding = a.endowment + buy[mask].sum(axis=0) - sell[mask].sum(axis=0)
    g, _ = utility_gradient(a.utility, np.maximum(holding, 0.0), cap=grad_cap)

    partners = [j for j in range(n) if j != i]
    cols = []   # (kind, j, k) for bounded multipliers; lam and kappa are free

    def active(v):
        return abs(v) <= active_tol

    for j in partners:
        for k in range(L):
            if active(sell[j, k]):
                cols.append(("mu_sell", j, k))
            if active(y_buycap[j, k] - sell[j, k]):
                cols.append(("eta_sell", j, k))
            if active(buy[j, k]):
                cols.append(("mu_buy", j, k))
            if active(y_sellcap[j, k] - buy[j, k]):
                cols.append(("eta_buy", j, k))
    for k in range(L):
        if active(holding[k]):
            cols.append(("theta", None, k))
        if active(p[i, k]):
            cols.append(("nu", None, k))

    # rows: L price-stationarity + 2 (n-1) L offer-stationarity equations
    eq_index = {}
    rows = L + 2 * len(partners) * L
    for r_idx, k in enumerate(range(L)):
        eq_index[("p", k)] = r_idx
    r = L
    for j in partners:
        for k in range(L):
            eq_index[("sell", j, k)] = r
            eq_index[("buy", j, k)] = r + 1
            r += 2

    nvar = 2 + len(cols)          # lam, kappa, then bounded multipliers
    A = np.zeros((rows, nvar))
    b = np.zeros(rows)
    for k in range(L):
        r_idx = eq_index[("p", k)]
        A[r_idx, 0] = float(sell[mask][:, k].sum())   # lam
        A[r_idx, 1] = 1.0                             # kappa
    for j in partners:
        for k in range(L):
            rs = eq_index[("sell", j, k)]
            A[rs, 0] = p[i, k]
            b[rs] = g[k]
            rb = eq_index[("buy", j, k)]
            A[rb, 0] = -p[j, k]
            b[rb] = -g[k]
    for c_idx, (kind, j, k) in enumerate(cols):
        col = 2 + c_idx
        if kind == "mu_sell":
            A[eq_index[("sell", j, k)], col] = 1.0
        elif kind == "eta_sell":
            A[eq_index[("sell", j, k)], col] = -1.0
        elif kind == "mu_buy":
            A[eq_index[("buy", j, k)], col] = 1.0
        elif kind == "eta_buy":
            A[eq_index[("buy", j, k)], col] = -1.0
        elif kind == "theta":
            for jj in partners:
                A[eq_index[("sell", jj, k)], col] = -1.0
                A[eq_index[("buy", jj, k)], col] = 1.0
        elif kind == "nu":
            A[eq_index[("p", k)], col] = 1.0

    lb = np.full(nvar, 0.0)
    ub = np.full(nvar, np.inf)
    lb[0] = -np.inf   # lam free
    lb[1] = -np.inf   # kappa free
    res = lsq_linear(A, b, bounds=(lb, ub), max_iter=500)
    x = res.x

    point.lam = float(x[0])
    point.kappa = float(x[1])
    for c_idx, (kind, j, k) in enumerate(cols):
        v = float(x[2 + c_idx])
        if kind == "mu_sell":
            point.mu_sell[j, k] = v
        elif kind == "eta_sell":
            point.eta_sell[j, k] = v
        elif kind == "mu_buy":
            point.mu_buy[j, k] = v
        elif kind == "eta_buy":
            point.eta_buy[j, k] = v
        elif kind == "theta":
            point.theta[k] = v
        elif kind == "nu":
            point.nu[k] = v
    return point


# ---------------------------------------------------------------------------
# price-regime classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegimeReport:
    agent: int
    good: int
    higher: tuple      # partners pricing the good above the agent
    lower: tuple
    equal: tuple
    compliant: dict    # partner -> bool
    violations: tuple

    @property
    def all_compliant(self):
        return all(self.compliant.values())


def classify_price_regimes(prices, flows, agent: int, good: int,
                           tol=1e-9) -> RegimeReport:
    """Partition partners by their price of one good and check that flows
    respect the regime: with unequal prices a pair may trade the good in at
    most one direction; with equal prices any matched flows comply."""
    p = np.asarray(prices, dtype=float)
    q = np.asarray(flows, dtype=float)
    n = p.shape[0]
    i, k = agent, good
    higher, lower, equal = [], [], []
    compliant = {}
    violations = []
    for j in range(n):
        if j == i:
            continue
        diff = p[j, k] - p[i, k]
        if diff > tol:
            higher.append(j)
        elif diff < -tol:
            lower.append(j)
        else:
            equal.append(j)
        if j in equal:
            ok = True
        else:
            ok = not (q[i, j, k] > tol and q[j, i, k] > tol)
        compliant[j] = ok
        if not ok:
            violations.append((i, j, k))
    return RegimeReport(i, k, tuple(higher), tuple(lower), tuple(equal),
                        compliant, tuple(violations))
