"""Divisible-goods welfare dynamics.

Three processes over joint price/offer states:

* projected supergradient ascent on total welfare, with the feasible-set
  projection computed by cyclic projection onto the constraint families
  (simplex rows, offer box and capacities, cross-offer matching, holding
  bounds, budget balance with each block linearized, optional one-way-flow
  netting);
* a non-tatonnement process that executes any feasible trade weakly improving
  every agent, re-endowing agents with their holdings after each step;
* the same process restricted to stage-game Nash states.

The budget constraint is bilinear in (prices, offers); the projection treats
it by alternating the two linear blocks, which preserves the fixed-point
characterisation of feasible states without requiring the implicit projection
set to be known in advance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    ContractViolation,
    Economy,
    OfferTensor,
    effective_flows,
    evaluate_utility,
    feasibility_check,
    final_allocation,
    saturated_offers,
    budget_residuals,
    uniform_prices,
    utility_gradient,
)
from .enumeration import enumerate_feasible
from .prices import price_feasibility_solve

__all__ = ["AscentState", "GradientInfo", "ProjectionResult", "ProjectionError",
           "welfare_supergradient", "project_feasible", "gradient_ascent",
           "welfare", "nontatonnement_step", "nontatonnement_nash_step",
           "run_nontatonnement", "rest_point_certificate",
           "find_improving_deviation"]


@dataclass
class AscentState:
    prices: np.ndarray
    offers: OfferTensor
    step_index: int = 0
    step_size: float = 0.0
    welfare: float = 0.0


@dataclass(frozen=True)
class GradientInfo:
    dprices: np.ndarray
    dsell: np.ndarray
    dbuy: np.ndarray
    boundary: np.ndarray      # (n, L) goods whose marginal utility was capped


@dataclass(frozen=True)
class ProjectionResult:
    prices: np.ndarray
    offers: OfferTensor
    residuals: dict
    iterations: int


class ProjectionError(RuntimeError):
    def __init__(self, residuals, iterations):
        self.residuals = residuals
        self.iterations = iterations
        worst = max(residuals.values())
        super().__init__(
            f"projection did not reach a fixed point in {iterations} cycles "
            f"(worst residual {worst:.3g})")


def welfare(economy: Economy, prices, offers: OfferTensor, weights=None):
    """Total (optionally weighted) utility at the state's effective flows."""
    q = effective_flows(offers)
    alloc = np.maximum(final_allocation(economy, q), 0.0)
    u = np.array([evaluate_utility(a.utility, alloc[i])
                  for i, a in enumerate(economy.agents)])
    w = np.ones(economy.n) if weights is None else np.asarray(weights, dtype=float)
    return float(np.dot(w, u))


def welfare_supergradient(economy: Economy, prices, offers: OfferTensor,
                          weights=None, cap=1e6) -> GradientInfo:
    """Supergradient of total welfare with respect to every offer entry.

    Each agent's allocation responds +1 to its own buy entries and -1 to its
    own sell entries; price coordinates get zero. Boundary goods (zero CES
    component, exponent < 1) use the capped one-sided derivative.
    """
    n, L = economy.n, economy.goods
    q = effective_flows(offers)
    alloc = np.maximum(final_allocation(economy, q), 0.0)
    wts = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    dsell = np.zeros((n, n, L))
    dbuy = np.zeros((n, n, L))
    boundary = np.zeros((n, L), dtype=bool)
    for i, agent in enumerate(economy.agents):
        g, bnd = utility_gradient(agent.utility, alloc[i], cap=cap)
        g = wts[i] * g
        boundary[i] = bnd
        for j in range(n):
            if j == i:
                continue
            dbuy[i, j, :] = g
            dsell[i, j, :] = -g
    return GradientInfo(np.zeros((n, L)), dsell, dbuy, boundary)


# ---------------------------------------------------------------------------
# projection onto the joint feasible set
# ---------------------------------------------------------------------------

def _project_simplex_rows(p):
    """Row-wise Euclidean projection onto the unit simplex."""
    out = np.empty_like(p)
    for r in range(p.shape[0]):
        v = p[r]
        u = np.sort(v)[::-1]
        css = np.cumsum(u)
        rho = np.nonzero(u + (1.0 - css) / (np.arange(len(v)) + 1) > 0)[0][-1]
        lam = (1.0 - css[rho]) / (rho + 1.0)
        out[r] = np.maximum(v + lam, 0.0)
    return out


def _residual_report(economy, p, S, B, netflow):
    q = np.minimum(S, np.swapaxes(B, 0, 1))
    alloc = final_allocation(economy, q)
    lo = np.array([a.lower for a in economy.agents])
    hi = np.array([a.upper for a in economy.agents])
    hold_viol = max(float(np.max(lo - alloc, initial=0.0)),
                    float(np.max(np.where(np.isfinite(hi), alloc - hi, 0.0), initial=0.0)))
    rep = {
        "simplex": float(max(np.max(np.abs(p.sum(axis=1) - 1.0)),
                             max(0.0, -np.min(p)))),
        "budget": float(np.max(np.abs(budget_residuals(p, q)))),
        "holdings": max(hold_viol, 0.0),
        "match": float(np.max(np.abs(S - np.swapaxes(B, 0, 1)))),
        "nonneg": float(max(0.0, -min(np.min(S), np.min(B)))),
    }
    if economy.capacities is not None:
        rep["capacity"] = float(np.max(np.maximum(S - economy.capacities, 0.0)))
    if netflow:
        prod = q * np.swapaxes(q, 0, 1)
        rep["netflow"] = float(np.max(prod))
    return rep


def _projection_cycles(economy, p, S, B, tol, max_iter, netflow):
    """Cyclic projection over the constraint families.

    Stops when the per-cycle displacement drops below tol or a periodic
    residual check clears tol. Returns (p, S, B, cycles).
    """
    n, L = economy.n, economy.goods
    idx = np.arange(n)
    w = economy.endowments()
    lo = np.array([a.lower for a in economy.agents])
    hi = np.array([a.upper for a in economy.agents])
    cap = economy.capacities
    it = 0
    for it in range(1, max_iter + 1):
        p0, S0, B0 = p.copy(), S.copy(), B.copy()

        p = _project_simplex_rows(p)

        np.maximum(S, 0.0, out=S)
        np.maximum(B, 0.0, out=B)
        if cap is not None:
            np.minimum(S, cap, out=S)
            np.minimum(B, np.swapaxes(cap, 0, 1), out=B)
        S[idx, idx, :] = 0.0
        B[idx, idx, :] = 0.0

        # cross-caps bind in both directions, so offers end up matched
        M = 0.5 * (S + np.swapaxes(B, 0, 1))
        S = M
        B = np.swapaxes(M, 0, 1).copy()

        # holding bounds: one halfspace per agent and good
        scale = 2.0 * max(n - 1, 1)
        for i in range(n):
            others = idx != i
            for k in range(L):
                val = w[i, k] + B[i, others, k].sum() - S[i, others, k].sum()
                if val < lo[i, k]:
                    d = (lo[i, k] - val) / scale
                    B[i, others, k] += d
                    S[i, others, k] -= d
                elif np.isfinite(hi[i, k]) and val > hi[i, k]:
                    d = (val - hi[i, k]) / scale
                    B[i, others, k] -= d
                    S[i, others, k] += d

        # budget balance, offers block (prices frozen): one hyperplane per agent
        for i in range(n):
            res = float(np.einsum("jk,jk->", p, B[i]) - p[i] @ S[i].sum(axis=0))
            norm2 = float(np.sum(p ** 2) - np.sum(p[i] ** 2)
                          + (n - 1) * np.sum(p[i] ** 2))
            if norm2 > 1e-15 and abs(res) > 0:
                d = res / norm2
                B[i] -= d * p
                B[i, i, :] = 0.0
                S[i] += d * np.tile(p[i], (n, 1))
                S[i, i, :] = 0.0

        # budget balance, price block (offers frozen): affine subspace
        A = np.zeros((n, n * L))
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                A[i, j * L:(j + 1) * L] += B[i, j]
                A[i, i * L:(i + 1) * L] -= S[i, j]
        r = A @ p.ravel()
        if np.max(np.abs(r)) > 0:
            corr, *_ = np.linalg.lstsq(A, r, rcond=None)
            p = (p.ravel() - corr).reshape(n, L)

        if netflow:
            # net bidirectional pairs to their difference: allocations are
            # untouched, so only a small budget repair is triggered
            M = 0.5 * (S + np.swapaxes(B, 0, 1))
            Mt = np.swapaxes(M, 0, 1)
            M = np.maximum(M - np.minimum(M, Mt), 0.0)
            S = M
            B = np.swapaxes(M, 0, 1).copy()

        disp = max(float(np.max(np.abs(p - p0))), float(np.max(np.abs(S - S0))),
                   float(np.max(np.abs(B - B0))))
        if disp < tol:
            break
        if it % 25 == 0:
            rep = _residual_report(economy, p, S, B, netflow)
            if max(rep.values()) <= tol:
                break
    return p, S, B, it


def project_feasible(economy: Economy, prices, offers: OfferTensor,
                     tol=1e-9, max_iter=10000, netflow=True,
                     accept_tol=1e-7) -> ProjectionResult:
    """Project a joint state onto the feasible set by cyclic projection onto
    the constraint families (simplex rows, offer box and capacities, offer
    matching, holding bounds, the two linearized budget blocks, and the
    nonconvex one-way-flow netting).

    Iterates to a fixed point within ``tol``; raises ProjectionError when the
    iteration cap is hit with some family still violated beyond
    ``accept_tol``.
    """
    p = np.asarray(prices, dtype=float).copy()
    S = offers.sell.copy()
    B = offers.buy.copy()
    p, S, B, used = _projection_cycles(economy, p, S, B, tol, max_iter, netflow)
    rep = _residual_report(economy, p, S, B, netflow)
    result = ProjectionResult(p, OfferTensor(np.maximum(S, 0.0),
                                             np.maximum(B, 0.0)), rep, used)
    if max(rep.values()) > accept_tol:
        raise ProjectionError(rep, used)
    return result


# ---------------------------------------------------------------------------
# projected supergradient ascent
# ---------------------------------------------------------------------------

@dataclass
class AscentResult:
    terminal: AscentState
    trajectory: list            # (step, welfare, projected step norm)
    converged: bool
    reason: str


def gradient_ascent(economy: Economy, initial: Optional[AscentState] = None,
                    schedule: Optional[Callable[[int], float]] = None,
                    stop_tol=1e-6, max_steps=2000, monotone_tol=1e-9,
                    max_backtracks=25, weights=None, step_scale=0.1,
                    explore_steps=400, projection_tol=1e-8) -> AscentResult:
    """Welfare ascent by projected supergradient steps.

    Steps follow ``schedule`` (default c_t/sqrt(t) with c_1 = ``step_scale``);
    a step is accepted only when projected welfare does not drop by more than
    ``monotone_tol``. The coefficient c_t halves whenever a step stalls, and
    decays geometrically once the exploration budget is spent, so the iterate
    settles on a numerical fixed point: the run ends when the projected step
    length falls below ``stop_tol``.
    """
    if economy.mode != "continuous":
        raise ContractViolation("gradient ascent requires a continuous economy")
    n, L = economy.n, economy.goods
    if initial is None:
        state = AscentState(uniform_prices(n, L),
                            saturated_offers(np.zeros((n, n, L))))
    else:
        state = initial
    state.welfare = welfare(economy, state.prices, state.offers, weights)
    traj = [(0, state.welfare, float("nan"))]
    converged = False
    reason = "max_steps"
    coeff = step_scale
    for t in range(1, max_steps + 1):
        grad = welfare_supergradient(economy, state.prices, state.offers, weights)
        mu = schedule(t) if schedule is not None else coeff / math.sqrt(t)
        accepted = None
        for _ in range(max_backtracks + 1):
            cand_p = state.prices + mu * grad.dprices
            cand = OfferTensor(np.maximum(state.offers.sell + mu * grad.dsell, 0.0),
                               np.maximum(state.offers.buy + mu * grad.dbuy, 0.0))
            proj = project_feasible(economy, cand_p, cand, tol=projection_tol)
            Uc = welfare(economy, proj.prices, proj.offers, weights)
            if Uc >= state.welfare - monotone_tol:
                accepted = (proj, Uc, mu)
                break
            mu *= 0.5
        if accepted is None:
            converged = True
            reason = "no_improving_step"
            break
        proj, Uc, mu = accepted
        if schedule is None and (Uc <= state.welfare + monotone_tol
                                 or t > explore_steps):
            coeff *= 0.5  # stalled or out of exploration budget: settle down
        step_norm = max(float(np.max(np.abs(proj.prices - state.prices))),
                        float(np.max(np.abs(proj.offers.sell - state.offers.sell))))
        state = AscentState(proj.prices, proj.offers, t, mu, Uc)
        traj.append((t, Uc, step_norm))
        if step_norm < stop_tol:
            converged = True
            reason = "fixed_point"
            break
    return AscentResult(state, traj, converged, reason)


# ---------------------------------------------------------------------------
# non-tatonnement processes
# ---------------------------------------------------------------------------

def _stage_economy(economy: Economy, endowments):
    agents = tuple(replace(a, endowment=np.asarray(e, dtype=float))
                   for a, e in zip(economy.agents, endowments))
    return replace(economy, agents=agents)


def _utilities(economy, endowments):
    return np.array([evaluate_utility(a.utility, e)
                     for a, e in zip(economy.agents, endowments)])


def _weakly_improves(new, old, tol=1e-9):
    return bool(np.all(new >= old - tol) and np.any(new > old + tol))


def nontatonnement_step(economy: Economy, endowments, seed=0, tries=8):
    """One disequilibrium trade: a feasible state weakly improving everyone.

    Returns (record_or_state, new_endowments) or None at a rest point. The
    discrete path searches the full stage feasible set; the continuous path
    proposes candidates by maximizing randomly weighted welfare.
    """
    endowments = np.asarray(endowments, dtype=float)
    stage = _stage_economy(economy, endowments)
    base = _utilities(stage, endowments)
    if economy.mode == "discrete":
        best = None
        for rec in enumerate_feasible(stage):
            if _weakly_improves(rec.utilities, base):
                key = (-float(rec.utilities.sum()), rec.key())
                if best is None or key < best[0]:
                    best = (key, rec)
        if best is None:
            return None
        rec = best[1]
        return rec, rec.allocation.copy()
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        wts = rng.dirichlet(np.ones(economy.n)) * economy.n
        result = gradient_ascent(stage, weights=wts, max_steps=300,
                                 stop_tol=1e-7)
        st = result.terminal
        q = effective_flows(st.offers)
        alloc = np.maximum(final_allocation(stage, q), 0.0)
        utils = stage.utilities_at(alloc)
        if _weakly_improves(utils, base):
            return st, alloc
    return None


def nontatonnement_nash_step(economy: Economy, endowments,
                             deviation_mode="full"):
    """One trade restricted to stage-game Nash states (discrete mode).

    Selection: the Pareto-improving Nash record with the highest total
    utility, ties broken lexicographically on the flattened flow tensor.
    """
    from .nash import nash_set

    if economy.mode != "discrete":
        raise ContractViolation("the Nash-restricted process needs a discrete economy")
    endowments = np.asarray(endowments, dtype=float)
    stage = _stage_economy(economy, endowments)
    base = _utilities(stage, endowments)
    records = enumerate_feasible(stage)
    best = None
    for rec in nash_set(stage, records, deviation_mode):
        if _weakly_improves(rec.utilities, base):
            key = (-float(rec.utilities.sum()), rec.key())
            if best is None or key < best[0]:
                best = (key, rec)
    if best is None:
        return None
    rec = best[1]
    return rec, rec.allocation.copy()


def run_nontatonnement(economy: Economy, max_steps=25, nash=False, seed=0,
                       deviation_mode="full"):
    """Iterate a non-tatonnement process from the economy's own endowments.

    Returns (steps, endowment_path): each step is (record_or_state,
    utilities_after).
    """
    endow = economy.endowments().copy()
    path = [endow.copy()]
    steps = []
    for t in range(max_steps):
        out = (nontatonnement_nash_step(economy, endow, deviation_mode) if nash
               else nontatonnement_step(economy, endow, seed=seed + t))
        if out is None:
            break
        state, endow = out
        steps.append((state, _utilities(economy, endow)))
        path.append(endow.copy())
    return steps, path


def rest_point_certificate(economy: Economy, endowments, samples=1000, seed=0,
                           tol=1e-9):
    """Randomized no-improvement certificate for a claimed rest point.

    Samples feasible trade states of the stage economy; returns (True, None)
    when none weakly improves every agent, else (False, witness).
    """
    endowments = np.asarray(endowments, dtype=float)
    stage = _stage_economy(economy, endowments)
    base = _utilities(stage, endowments)
    rng = np.random.default_rng(seed)
    n, L = stage.n, stage.goods
    w = stage.endowments()
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for _ in range(samples):
        q = np.zeros((n, n, L))
        for (i, j) in pairs:
            for k in range(L):
                direction = rng.integers(0, 2)
                src, dst = (i, j) if direction else (j, i)
                amount = rng.uniform(0.0, w[src, k])
                if stage.mode == "discrete":
                    amount = float(rng.integers(0, int(w[src, k]) + 1))
                q[src, dst, k] = amount
        sales = q.sum(axis=1)
        if np.any(sales > w + 1e-12):
            continue
        alloc = w + q.sum(axis=0) - sales
        if np.any(alloc < 0):
            continue
        if price_feasibility_solve(stage, q) is None:
            continue
        utils = stage.utilities_at(alloc)
        if _weakly_improves(utils, base, tol):
            return False, (q, utils)
    return True, None


# ---------------------------------------------------------------------------
# continuous unilateral deviation search
# ---------------------------------------------------------------------------

def find_improving_deviation(economy: Economy, prices, flows, tol=1e-7):
    """Search each agent for a feasible strictly improving unilateral move
    against a continuous state (offers saturated at the flows).

    Deviations keep every kept trade inside the posted quantities and must
    admit a balancing own-price row. Returns (agent, bundle, gain) or None.
    """
    from scipy.optimize import minimize

    p = np.asarray(prices, dtype=float)
    q = np.asarray(flows, dtype=float)
    n, L = economy.n, economy.goods
    alloc = final_allocation(economy, np.maximum(q, 0.0))
    for i, agent in enumerate(economy.agents):
        u0 = evaluate_utility(agent.utility, np.maximum(alloc[i], 0.0))
        purch_cap = q[:, i, :].copy()
        sale_cap = q[i, :, :].copy()

        def bundle_of(z):
            purch = z[:n * L].reshape(n, L)
            sales = z[n * L:].reshape(n, L)
            return agent.endowment + purch.sum(axis=0) - sales.sum(axis=0)

        def neg_u(z):
            return -evaluate_utility(agent.utility, np.maximum(bundle_of(z), 0.0))

        # candidate corners first: full withdrawal and single-leg withdrawals
        corners = [np.zeros(2 * n * L)]
        base = np.concatenate([purch_cap.ravel(), sale_cap.ravel()])
        for e in range(2 * n * L):
            if base[e] > 0:
                c = base.copy()
                c[e] = 0.0
                corners.append(c)
        for z in corners:
            purch = z[:n * L].reshape(n, L)
            sales = z[n * L:].reshape(n, L)
            V = float(np.einsum("jk,jk->", p, purch))
            S = sales.sum(axis=0)
            if not (S.min() - tol <= V <= S.max() + tol):
                continue
            bundle = bundle_of(z)
            if np.any(bundle < agent.lower - tol):
                continue
            gain = evaluate_utility(agent.utility, np.maximum(bundle, 0.0)) - u0
            if gain > tol:
                return i, np.maximum(bundle, 0.0), float(gain)

        # polished interior search over sub-flows with the budget window
        bounds = ([(0.0, float(v)) for v in purch_cap.ravel()]
                  + [(0.0, float(v)) for v in sale_cap.ravel()])
        if not any(b[1] > 0 for b in bounds):
            continue

        def win_low(z):
            purch = z[:n * L].reshape(n, L)
            sales = z[n * L:].reshape(n, L)
            return float(np.einsum("jk,jk->", p, purch)) - sales.sum(axis=0).min()

        def win_high(z):
            purch = z[:n * L].reshape(n, L)
            sales = z[n * L:].reshape(n, L)
            return sales.sum(axis=0).max() - float(np.einsum("jk,jk->", p, purch))

        cons = ({"type": "ineq", "fun": win_low},
                {"type": "ineq", "fun": win_high},
                {"type": "ineq", "fun": lambda z: bundle_of(z) - agent.lower})
        res = minimize(neg_u, base, bounds=bounds, constraints=cons,
                       method="SLSQP", options={"maxiter": 200, "ftol": 1e-12})
        if res.success:
            gain = -res.fun - u0
            if gain > tol:
                return i, np.maximum(bundle_of(res.x), 0.0), float(gain)
    return None
