"""Core data model for bilateral exchange with effective (min-of-offers) trade.

An economy is a set of agents, each holding an endowment of L goods and a
utility function over final holdings. Every agent posts its own price row on
the unit simplex together with bilateral offers: quantities it wants to sell
to / buy from each partner. A trade executes at the minimum of the two sides'
posted quantities; final holdings follow from the executed flows, and each
agent's purchases (valued at the sellers' prices) must equal the value of its
own sales (valued at its own price).

All types are plain values and every operation is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_TOL = 1e-9

# marginal utilities are clipped at this magnitude on the boundary, where CES
# exponents r < 1 make them blow up
GRAD_CAP = 1e6


class ContractViolation(ValueError):
    """An input broke a documented precondition."""


def _as_vector(x, name="vector"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def as_bundle(x, length=None, name="bundle"):
    """Validate a goods bundle: 1-d, non-negative, optional fixed length."""
    arr = _as_vector(x, name)
    if length is not None and arr.shape[0] != length:
        raise ContractViolation(f"{name} has length {arr.shape[0]}, expected {length}")
    if np.any(arr < 0):
        raise ContractViolation(f"{name} has negative components: {arr}")
    return arr


# ---------------------------------------------------------------------------
# utilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UtilitySpec:
    """Tagged utility description: CES or an arbitrary callable.

    CES form: u(x) = (sum_k weights[k] * x_k**exponent) ** (1/exponent),
    weights non-negative summing to one, exponent != 0.
    """

    kind: str = "ces"
    weights: Optional[tuple] = None
    exponent: float = 0.5
    func: Optional[Callable[[np.ndarray], float]] = None
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @staticmethod
    def ces(weights, exponent):
        w = as_bundle(weights, name="CES weights")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ContractViolation(f"CES weights must sum to 1, got {w.sum()}")
        if exponent == 0:
            raise ContractViolation("CES exponent must be nonzero")
        return UtilitySpec(kind="ces", weights=tuple(float(v) for v in w),
                           exponent=float(exponent))

    @staticmethod
    def custom(func, grad=None):
        return UtilitySpec(kind="custom", func=func, grad=grad)

    @property
    def dimension(self):
        return len(self.weights) if self.weights is not None else None


def evaluate_utility(spec: UtilitySpec, bundle) -> float:
    """Utility of a non-negative bundle under `spec`.

    For CES the convention 0**r = 0 (r > 0) applies, so the all-zero bundle
    maps to 0 with no special-casing.
    """
    x = as_bundle(bundle)
    if spec.kind == "custom":
        return float(spec.func(x))
    w = np.asarray(spec.weights, dtype=float)
    if x.shape[0] != w.shape[0]:
        raise ContractViolation(
            f"bundle length {x.shape[0]} does not match utility dimension {w.shape[0]}")
    r = spec.exponent
    if r < 0 and np.any(x[w > 0] == 0):
        return 0.0  # limit value: any required good at zero kills CES with r < 0
    inner = float(np.dot(w, np.power(x, r)))
    if inner <= 0.0:
        return 0.0
    return inner ** (1.0 / r)


def utility_gradient(spec: UtilitySpec, bundle, cap=GRAD_CAP):
    """Marginal utilities, one-sided at the boundary and clipped to `cap`.

    Returns (gradient, boundary_mask) where the mask marks components whose
    derivative was clipped (zero CES component with exponent < 1).
    """
    x = as_bundle(bundle)
    if spec.kind == "custom":
        if spec.grad is not None:
            return np.asarray(spec.grad(x), dtype=float), np.zeros_like(x, dtype=bool)
        h = 1e-7
        g = np.zeros_like(x)
        for k in range(x.shape[0]):
            e = np.zeros_like(x)
            e[k] = h
            g[k] = (spec.func(x + e) - spec.func(np.maximum(x - e, 0.0))) / (
                h + min(h, x[k]))
        return g, np.zeros_like(x, dtype=bool)
    w = np.asarray(spec.weights, dtype=float)
    r = spec.exponent
    boundary = (x == 0) & (w > 0) & (r < 1)
    inner = float(np.dot(w, np.power(np.where(x > 0, x, 0.0), r)))
    if inner <= 0.0:
        # utility is 0 here; the one-sided derivative of each weighted good is
        # unbounded for r < 1, so report the capped value
        g = np.where(w > 0, cap, 0.0)
        return g, w > 0
    outer = inner ** (1.0 / r - 1.0)
    xs = np.where(x > 0, x, 1.0)  # placeholder at zeros, fixed up below
    g = outer * w * np.power(xs, r - 1.0)
    if r > 1:
        g = np.where((x == 0) & ~boundary, 0.0, g)
    g = np.where(boundary, cap, g)
    g = np.minimum(g, cap)
    return g, boundary


# ---------------------------------------------------------------------------
# agents and economies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Agent:
    """Endowment, utility, consumption-set bounds, optional money endowment."""

    endowment: np.ndarray
    utility: UtilitySpec
    lower: Optional[np.ndarray] = None   # componentwise bounds on final holdings
    upper: Optional[np.ndarray] = None
    money: float = 0.0

    def __post_init__(self):
        w = as_bundle(self.endowment, name="endowment")
        object.__setattr__(self, "endowment", w)
        lo = np.zeros_like(w) if self.lower is None else as_bundle(self.lower, w.shape[0], "lower bound")
        hi = np.full_like(w, np.inf) if self.upper is None else _as_vector(self.upper, "upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.money < 0:
            raise ContractViolation("money endowment must be non-negative")
        if np.any(w < lo - DEFAULT_TOL) or np.any(w > hi + DEFAULT_TOL):
            raise ContractViolation("endowment lies outside the consumption set")


@dataclass(frozen=True)
class Economy:
    """Agents, good count, divisibility mode, optional capacity tensor.

    Capacities, when present, bound posted offers per directed pair and good:
    capacity[i, j, k] caps shipments of good k from i to j.
    """

    agents: tuple
    mode: str = "continuous"
    capacities: Optional[np.ndarray] = None

    def __post_init__(self):
        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        if len(agents) < 1:
            raise ContractViolation("an economy needs at least one agent")
        if self.mode not in ("continuous", "discrete"):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        L = agents[0].endowment.shape[0]
        for a in agents:
            if a.endowment.shape[0] != L:
                raise ContractViolation("all endowments must have the same length")
        if self.mode == "discrete":
            for a in agents:
                if np.any(a.endowment != np.round(a.endowment)):
                    raise ContractViolation("discrete mode requires integer endowments")
        if self.capacities is not None:
            cap = np.asarray(self.capacities, dtype=float)
            n = len(agents)
            if cap.shape != (n, n, L):
                raise ContractViolation(
                    f"capacities must have shape {(n, n, L)}, got {cap.shape}")
            if np.any(cap < 0):
                raise ContractViolation("capacities must be non-negative")
            object.__setattr__(self, "capacities", cap)

    @property
    def n(self):
        return len(self.agents)

    @property
    def goods(self):
        return self.agents[0].endowment.shape[0]

    def endowments(self):
        return np.array([a.endowment for a in self.agents])

    def utilities_at(self, allocation):
        return np.array([evaluate_utility(a.utility, allocation[i])
                         for i, a in enumerate(self.agents)])


def apply_topology(economy: Economy, capacities) -> Economy:
    """Return a copy of the economy with exchange capacities installed."""
    cap = np.asarray(capacities, dtype=float)
    if np.any(cap < 0):
        raise ContractViolation("capacities must be non-negative")
    return replace(economy, capacities=cap)


# ---------------------------------------------------------------------------
# prices
# ---------------------------------------------------------------------------

def uniform_prices(n, L):
    return np.full((n, L), 1.0 / L)


def validate_prices(prices, n=None, L=None, tol=DEFAULT_TOL):
    p = np.asarray(prices, dtype=float)
    if p.ndim != 2:
        raise ContractViolation("price system must be a 2-d array (one row per agent)")
    if n is not None and p.shape[0] != n:
        raise ContractViolation(f"price system has {p.shape[0]} rows, expected {n}")
    if L is not None and p.shape[1] != L:
        raise ContractViolation(f"price rows have length {p.shape[1]}, expected {L}")
    if np.any(p < -tol) or np.any(np.abs(p.sum(axis=1) - 1.0) > tol):
        raise ContractViolation("each price row must lie on the unit simplex")
    return p


def simplex_rows_ok(prices, tol=DEFAULT_TOL):
    p = np.asarray(prices, dtype=float)
    return bool(np.all(p >= -tol) and np.all(np.abs(p.sum(axis=1) - 1.0) <= tol))


def scale_prices(prices, lam):
    """Scale every price row by lam > 0 (result is not re-normalized).

    Budget residuals scale linearly, so their zero set is preserved.
    """
    if lam <= 0:
        raise ContractViolation("price scale factor must be positive")
    return np.asarray(prices, dtype=float) * float(lam)


# ---------------------------------------------------------------------------
# offers and flows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OfferTensor:
    """Posted bilateral quantities.

    sell[i, j, k] -- quantity of good k agent i offers to ship to j.
    buy[i, j, k]  -- quantity of good k agent i offers to take from j.
    Diagonals are zero.
    """

    sell: np.ndarray
    buy: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sell, dtype=float)
        b = np.asarray(self.buy, dtype=float)
        if s.shape != b.shape or s.ndim != 3 or s.shape[0] != s.shape[1]:
            raise ContractViolation("offer arrays must both have shape (n, n, L)")
        if np.any(s < 0) or np.any(b < 0):
            raise ContractViolation("offers must be non-negative")
        idx = np.arange(s.shape[0])
        if np.any(s[idx, idx, :] != 0) or np.any(b[idx, idx, :] != 0):
            raise ContractViolation("self-offers must be zero")
        object.__setattr__(self, "sell", s)
        object.__setattr__(self, "buy", b)

    @property
    def n(self):
        return self.sell.shape[0]

    @property
    def goods(self):
        return self.sell.shape[2]


def effective_flows(offers: OfferTensor) -> np.ndarray:
    """Executed trade: flows[i, j, k] = min(i's sell offer, j's buy offer)."""
    return np.minimum(offers.sell, np.swapaxes(offers.buy, 0, 1))


def saturated_offers(flows) -> OfferTensor:
    """Offers in which both sides post exactly the executed flows."""
    q = np.asarray(flows, dtype=float)
    return OfferTensor(sell=q.copy(), buy=np.swapaxes(q, 0, 1).copy())


def validate_flows(flows, n=None, L=None):
    q = np.asarray(flows, dtype=float)
    if q.ndim != 3 or q.shape[0] != q.shape[1]:
        raise ContractViolation("flow tensor must have shape (n, n, L)")
    if n is not None and q.shape[0] != n:
        raise ContractViolation(f"flow tensor is for {q.shape[0]} agents, expected {n}")
    if L is not None and q.shape[2] != L:
        raise ContractViolation(f"flow tensor has {q.shape[2]} goods, expected {L}")
    if np.any(q < 0):
        raise ContractViolation("flows must be non-negative")
    idx = np.arange(q.shape[0])
    if np.any(q[idx, idx, :] != 0):
        raise ContractViolation("self-flows must be zero")
    return q


def bidirectional_pairs(flows, tol=0.0):
    """List the (i, j, k) triples (i < j) where good k flows both ways in the pair."""
    q = np.asarray(flows, dtype=float)
    out = []
    n, _, L = q.shape
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(L):
                if q[i, j, k] > tol and q[j, i, k] > tol:
                    out.append((i, j, k))
    return out


def final_allocation(economy: Economy, flows) -> np.ndarray:
    """Final holdings: endowment + inflows - outflows, per agent and good."""
    q = validate_flows(flows, economy.n, economy.goods)
    w = economy.endowments()
    return w + q.sum(axis=0) - q.sum(axis=1)


def budget_residuals(prices, flows) -> np.ndarray:
    """Per-agent transaction balance: purchases valued at the sellers' prices
    minus sales valued at the agent's own price. Zero at every feasible state."""
    p = np.asarray(prices, dtype=float)
    q = np.asarray(flows, dtype=float)
    inflow_value = np.einsum("jk,jik->i", p, q)
    outflow_value = np.einsum("ik,ijk->i", p, q)
    return inflow_value - outflow_value


def budget_residual(agent_index, prices, flows) -> float:
    return float(budget_residuals(prices, flows)[agent_index])


# ---------------------------------------------------------------------------
# feasibility report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeasibilityReport:
    simplex_ok: bool
    budget_ok: bool
    holdings_ok: bool
    cross_caps_ok: bool
    capacity_ok: bool
    no_bidirectional_ok: bool
    budget_residuals: np.ndarray
    allocation: np.ndarray
    violations: tuple = ()

    @property
    def feasible(self):
        return (self.simplex_ok and self.budget_ok and self.holdings_ok
                and self.cross_caps_ok and self.capacity_ok
                and self.no_bidirectional_ok)


def feasibility_check(economy: Economy, prices, offers: OfferTensor,
                      tol=DEFAULT_TOL) -> FeasibilityReport:
    """Check a joint state flag by flag; violations become report entries,
    never exceptions."""
    p = np.asarray(prices, dtype=float)
    q = effective_flows(offers)
    notes = []

    simplex_ok = simplex_rows_ok(p, tol)
    if not simplex_ok:
        notes.append("price rows off the unit simplex")

    res = budget_residuals(p, q)
    budget_ok = bool(np.all(np.abs(res) <= tol))
    if not budget_ok:
        notes.append(f"budget residuals up to {np.max(np.abs(res)):.3g}")

    alloc = final_allocation(economy, q)
    holdings_ok = True
    for i, a in enumerate(economy.agents):
        if np.any(alloc[i] < a.lower - tol) or np.any(alloc[i] > a.upper + tol):
            holdings_ok = False
            notes.append(f"agent {i} holding outside its consumption set")

    # every agent's offers must be covered by the partner's counter-offer
    buy_t = np.swapaxes(offers.buy, 0, 1)
    cross_caps_ok = bool(np.all(offers.sell <= buy_t + tol)
                         and np.all(buy_t <= offers.sell + tol))
    if not cross_caps_ok:
        notes.append("posted offers exceed the partner's counter-offer")

    capacity_ok = True
    if economy.capacities is not None:
        cap = economy.capacities
        capacity_ok = bool(np.all(offers.sell <= cap + tol)
                           and np.all(np.swapaxes(offers.buy, 0, 1) <= cap + tol))
        if not capacity_ok:
            notes.append("offers exceed exchange capacities")

    bidir = bidirectional_pairs(q, tol=tol)
    no_bidir_ok = not bidir
    if bidir:
        notes.append(f"bidirectional flows on {bidir}")

    return FeasibilityReport(simplex_ok, budget_ok, holdings_ok, cross_caps_ok,
                             capacity_ok, no_bidir_ok, res, alloc, tuple(notes))
