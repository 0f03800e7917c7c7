import numpy as np
import pytest

from effective_trade.core import Agent, Economy, UtilitySpec


def benchmark_economy(mode="discrete", capacities=None, money=0.0):
    """Three CES traders over two goods; the canonical benchmark instance."""
    return Economy(agents=(
        Agent(endowment=[3, 1], utility=UtilitySpec.ces([0.2, 0.8], 0.3), money=money),
        Agent(endowment=[2, 2], utility=UtilitySpec.ces([0.4, 0.6], 0.3), money=money),
        Agent(endowment=[1, 3], utility=UtilitySpec.ces([0.8, 0.2], 0.3), money=money),
    ), mode=mode, capacities=capacities)


def barred_capacities(n=3, L=2, pair=(0, 2)):
    cap = np.full((n, n, L), np.inf)
    i, j = pair
    cap[i, j, :] = 0.0
    cap[j, i, :] = 0.0
    return cap


@pytest.fixture
def economy():
    return benchmark_economy()


@pytest.fixture
def continuous_economy():
    return benchmark_economy(mode="continuous")


@pytest.fixture
def restricted_economy():
    return benchmark_economy(capacities=barred_capacities())


def flows_from_vectors(good1, good2, n=3):
    """Build a flow tensor from the conventional bilateral column order
    (x12, x13, x23, x21, x31, x32) per good."""
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    order = pairs + [(j, i) for i, j in pairs]
    q = np.zeros((n, n, 2))
    for (i, j), v in zip(order, good1):
        q[i, j, 0] = v
    for (i, j), v in zip(order, good2):
        q[i, j, 1] = v
    return q


# the published benchmark equilibria: (utilities, good-1 prices, good-1 flows,
# good-2 flows, nash-pareto star)
TABLE_2 = [
    ((1.29, 2.00, 1.29), (0.27, 0.00, 1.00), (0, 0, 0, 0, 0, 0), (0, 0, 0, 0, 0, 0), False),
    ((1.29, 2.00, 1.29), (0.23, 0.23, 0.23), (0, 0, 0, 0, 0, 0), (0, 1, 0, 1, 0, 1), False),
    ((1.29, 2.00, 1.29), (0.65, 0.65, 0.65), (0, 0, 0, 0, 0, 0), (1, 0, 1, 0, 1, 0), False),
    ((1.29, 2.00, 1.29), (0.22, 0.22, 0.22), (0, 1, 0, 1, 0, 1), (0, 0, 0, 0, 0, 0), False),
    ((1.90, 2.00, 1.90), (1.00, 0.79, 0.00), (0, 3, 0, 0, 0, 0), (0, 0, 0, 0, 3, 0), False),
    ((2.00, 2.00, 2.00), (1.00, 0.00, 0.00), (0, 1, 0, 0, 0, 0), (0, 0, 0, 0, 1, 0), False),
    ((2.00, 2.00, 2.00), (0.34, 0.34, 0.66), (1, 0, 1, 0, 0, 0), (0, 0, 0, 0, 1, 0), False),
    ((2.00, 2.00, 2.00), (0.59, 0.41, 0.41), (0, 1, 0, 0, 0, 0), (0, 0, 0, 1, 0, 1), False),
    ((1.29, 2.02, 2.00), (0.00, 1.00, 0.00), (0, 0, 1, 0, 0, 0), (0, 0, 0, 0, 0, 1), False),
    ((1.29, 2.02, 2.00), (0.26, 0.74, 0.26), (0, 0, 1, 0, 0, 0), (1, 0, 0, 0, 1, 0), False),
    ((1.29, 2.02, 2.00), (0.94, 0.94, 0.07), (0, 1, 0, 1, 0, 0), (0, 0, 0, 0, 0, 1), False),
    ((2.47, 2.00, 2.47), (1.00, 0.00, 0.00), (0, 2, 0, 0, 0, 0), (0, 0, 0, 0, 2, 0), True),
    ((2.47, 2.00, 2.47), (0.61, 0.39, 0.39), (0, 2, 0, 0, 0, 0), (0, 0, 0, 2, 0, 2), True),
    ((2.47, 2.00, 2.47), (0.57, 0.43, 0.43), (0, 2, 0, 0, 0, 0), (0, 0, 0, 1, 1, 1), True),
    ((2.47, 2.00, 2.47), (0.51, 0.51, 0.49), (2, 0, 2, 0, 0, 0), (0, 0, 0, 0, 2, 0), True),
    ((2.00, 2.02, 2.47), (0.97, 0.97, 0.03), (0, 1, 1, 0, 0, 0), (0, 0, 0, 0, 1, 1), True),
    ((2.00, 2.02, 2.47), (0.53, 0.53, 0.47), (0, 2, 0, 1, 0, 0), (0, 0, 0, 0, 1, 1), True),
    ((2.00, 2.02, 2.47), (0.58, 0.58, 0.42), (1, 0, 2, 0, 0, 0), (0, 0, 0, 0, 1, 1), True),
]

TABLE_3 = [
    ((1.29, 2.00, 1.29), (0.27, 0.00, 1.00), (0, 0, 0, 0, 0, 0), (0, 0, 0, 0, 0, 0), False),
    ((1.29, 2.02, 2.00), (0.87, 1.00, 0.00), (0, 0, 1, 0, 0, 0), (0, 0, 0, 0, 0, 1), True),
]

TABLE_1_PRICES = (0.49, 0.73, 0.00)
TABLE_1_GOOD1 = (1.03, 1.12, 3.03, 0.00, 0.00, 0.00)
TABLE_1_GOOD2 = (0.00, 0.66, 0.00, 5.09, 0.00, 3.09)
TABLE_1_UTILITIES = (4.03, 0.00, 3.68)
