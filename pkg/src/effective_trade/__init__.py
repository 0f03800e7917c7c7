"""Bilateral min-of-offers exchange: equilibria, dynamics, money, anticipation."""

from .core import (
    Agent,
    ContractViolation,
    Economy,
    FeasibilityReport,
    OfferTensor,
    UtilitySpec,
    apply_topology,
    budget_residual,
    budget_residuals,
    effective_flows,
    evaluate_utility,
    feasibility_check,
    final_allocation,
    saturated_offers,
    scale_prices,
    uniform_prices,
    utility_gradient,
)
from .enumeration import (
    EquilibriumRecord,
    enumerate_feasible,
    pareto_filter,
)
from .prices import PriceWitness, price_feasibility_solve

__version__ = "0.1.0"
