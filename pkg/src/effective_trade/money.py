"""Monetary counterpart of executed trades.

Every goods shipment generates an opposite money flow valued at the seller's
price. The ledger keeps double-entry records: ``paid[i, j]`` is what agent i
records paying to j, ``received[i, j]`` what i records collecting from j; for
a ledger derived from trades the two sides coincide. Audits: the per-agent
net identity (trade value nets out against money nets), total-money
conservation, and the aggregate quantity-of-money identity defining velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ContractViolation

__all__ = ["MoneyLedger", "derive_money_flows", "build_ledger",
           "local_net_audit", "conservation_audit", "quantity_equation",
           "QuantityEquation"]


@dataclass(frozen=True)
class MoneyLedger:
    """Money endowments plus double-entry pairwise flow records."""

    endowments: np.ndarray      # (n,) non-negative
    paid: np.ndarray            # (n, n): paid[i, j] = money i pays j
    received: np.ndarray        # (n, n): received[i, j] = money i collects from j

    def __post_init__(self):
        m0 = np.asarray(self.endowments, dtype=float)
        paid = np.asarray(self.paid, dtype=float)
        rec = np.asarray(self.received, dtype=float)
        n = m0.shape[0]
        if paid.shape != (n, n) or rec.shape != (n, n):
            raise ContractViolation("flow matrices must be (n, n)")
        if np.any(m0 < 0) or np.any(paid < 0) or np.any(rec < 0):
            raise ContractViolation("money endowments and flows must be non-negative")
        object.__setattr__(self, "endowments", m0)
        object.__setattr__(self, "paid", paid)
        object.__setattr__(self, "received", rec)

    @property
    def balances(self):
        """Final money holdings per agent (may go negative; not asserted)."""
        return self.endowments - self.paid.sum(axis=1) + self.received.sum(axis=1)

    @property
    def total(self):
        return float(math.fsum(self.endowments))

    @property
    def velocity(self):
        flow = float(math.fsum(self.paid.ravel()))
        if self.total == 0.0:
            if flow > 0.0:
                raise ContractViolation("velocity undefined: trades with zero money stock")
            return 0.0
        return flow / self.total


def derive_money_flows(prices, flows) -> np.ndarray:
    """Money payments implied by trades: the buyer pays the seller's price.

    Returns m with m[i, j] = sum_k p[j, k] * flows[j, i, k] (i pays j for the
    goods j ships to i).
    """
    p = np.asarray(prices, dtype=float)
    q = np.asarray(flows, dtype=float)
    return np.einsum("jk,jik->ij", p, q)


def build_ledger(money_endowments, prices, flows) -> MoneyLedger:
    """Double-entry ledger implied by a price system and executed flows."""
    paid = derive_money_flows(prices, flows)
    return MoneyLedger(np.asarray(money_endowments, dtype=float),
                       paid, paid.T.copy())


def local_net_audit(ledger: MoneyLedger, prices, flows) -> np.ndarray:
    """Per-agent residual of the local net money identity: net trade value
    minus net money outflow. Zero (within float noise) for consistent ledgers
    built on budget-balanced states."""
    p = np.asarray(prices, dtype=float)
    q = np.asarray(flows, dtype=float)
    purchase_value = np.einsum("jk,jik->i", p, q)
    sale_value = np.einsum("ik,ijk->i", p, q)
    money_out = ledger.paid.sum(axis=1)
    money_in = ledger.received.sum(axis=1)
    return (purchase_value - sale_value) - (money_out - money_in)


def conservation_audit(ledger: MoneyLedger) -> float:
    """Total final money minus total initial money.

    Exactly zero for any ledger whose payer- and payee-side records agree
    (the same multiset of entries is summed on both sides); a corrupted
    one-sided entry shows up as a nonzero residual.
    """
    inflow = math.fsum(ledger.received.ravel())
    outflow = math.fsum(ledger.paid.ravel())
    return inflow - outflow


@dataclass(frozen=True)
class QuantityEquation:
    trade_value: float      # p . X . 1, total purchases at sellers' prices
    money_flow: float       # sum of all payments
    velocity: float
    money_stock: float

    @property
    def left(self):
        return self.trade_value

    @property
    def right(self):
        return self.money_stock * self.velocity


def quantity_equation(prices, flows, ledger: MoneyLedger,
                      tol=1e-9) -> QuantityEquation:
    """Aggregate identity: total trade value = money stock times velocity."""
    p = np.asarray(prices, dtype=float)
    q = np.asarray(flows, dtype=float)
    trade_value = float(math.fsum(np.einsum("jk,jik->ij", p, q).ravel()))
    money_flow = float(math.fsum(ledger.paid.ravel()))
    stock = ledger.total
    if stock == 0.0 and money_flow > 0.0:
        raise ContractViolation("velocity undefined: trades with zero money stock")
    v = ledger.velocity
    out = QuantityEquation(trade_value, money_flow, v, stock)
    if abs(out.left - out.right) > tol:
        raise ContractViolation(
            f"quantity equation violated: {out.left} vs {out.right}")
    return out
