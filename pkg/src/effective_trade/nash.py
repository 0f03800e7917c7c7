"""Nash classification of feasible discrete trade states.

Candidate states follow the offer-saturation convention: both sides post
exactly the executed flows, so a unilateral deviation can only scale posted
quantities back (a partner's posted quantity caps the trade from above) while
re-balancing the deviator's own price row on the simplex.

The deviation space checked here is the one that reproduces the benchmark
tables: the deviator may withdraw from trade entirely (the autarky fallback is
always available) or lower any single posted quantity, keeping the rest of its
trades. A deviation kills a state only if it is strictly improving. Whether a
balancing own-price row exists reduces, for the value V of the deviator's
purchases at the partners' prices, to min_k S_k <= V <= max_k S_k where S is
the total sales vector. Because V is affine in the other agents' prices, each
improving deviation excludes a slab of the state's price polytope; the state
is Nash exactly when the polytope is not covered by the union of these slabs.
The covering question is decided exactly (rational arithmetic) for two goods.

``deviation_mode="full"`` switches to the complete sub-flow search (every
entrywise reduction combination). That stricter test rejects one of the
published equilibria, so it is not the default; see the module tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Optional

import numpy as np

from .core import ContractViolation, Economy, evaluate_utility
from .enumeration import EquilibriumRecord, pareto_mask
from .prices import PricePolytope, reduced_price_system

__all__ = ["DeviationCertificate", "is_nash", "nash_set", "nash_pareto_set"]

STRICT_TOL = 1e-9  # a deviation must beat the current utility by more than this


@dataclass(frozen=True)
class DeviationCertificate:
    """Witness of a failed Nash check: a strictly improving unilateral move."""

    agent: int
    purchases: np.ndarray      # (n, L) sub-flows the deviator still takes
    sales: np.ndarray          # (n, L) sub-flows the deviator still ships
    price_row: np.ndarray      # balancing own-price row on the simplex
    utility_gain: float


class _Deviation:
    """A candidate unilateral move, reduced to the data the checks need."""

    __slots__ = ("purchases", "sales_total", "sales_entries", "bundle",
                 "coef", "const", "win_lo", "win_hi", "gain")

    def __init__(self, purchases, sales_entries, bundle, coef, const, gain):
        self.purchases = purchases          # (n, L) int
        self.sales_entries = sales_entries  # (n, L) int
        self.sales_total = sales_entries.sum(axis=0)
        self.bundle = bundle
        self.coef = coef                    # V(t) = const + coef . t
        self.const = const
        self.win_lo = int(self.sales_total.min())
        self.win_hi = int(self.sales_total.max())
        self.gain = gain


def _purchase_value_coeffs(purchases):
    """V(t) = const + coef . t for L = 2: purchases valued at partner prices."""
    coef = purchases[:, 0] - purchases[:, 1]
    const = int(purchases[:, 1].sum())
    return coef.astype(int), const


def _candidate_moves(q, i, n, L, mode):
    """Yield (purchases, sales_entries) integer arrays for agent i's moves."""
    purch0 = q[:, i, :].copy()   # what i currently takes, by partner
    sales0 = q[i, :, :].copy()   # what i currently ships, by partner
    yield np.zeros_like(purch0), np.zeros_like(sales0)  # full withdrawal
    if mode == "coordinate":
        for j in range(n):
            if j == i:
                continue
            for k in range(L):
                for v in range(int(purch0[j, k])):
                    p = purch0.copy()
                    p[j, k] = v
                    yield p, sales0.copy()
                for v in range(int(sales0[j, k])):
                    s = sales0.copy()
                    s[j, k] = v
                    yield purch0.copy(), s
    elif mode == "full":
        p_ranges = [range(int(purch0[j, k]) + 1) for j in range(n) for k in range(L)]
        s_ranges = [range(int(sales0[j, k]) + 1) for j in range(n) for k in range(L)]
        for p_combo in product(*p_ranges):
            p = np.array(p_combo, dtype=int).reshape(n, L)
            for s_combo in product(*s_ranges):
                s = np.array(s_combo, dtype=int).reshape(n, L)
                if np.array_equal(p, purch0) and np.array_equal(s, sales0):
                    continue
                yield p, s
    else:
        raise ContractViolation(f"unknown deviation mode {mode!r}")


def _improving_deviations(economy, record, i, mode):
    """All strictly improving candidate moves of agent i, with their slabs."""
    q = record.flows
    n, L = economy.n, economy.goods
    agent = economy.agents[i]
    w = agent.endowment
    u0 = record.utilities[i]
    out = []
    seen = set()
    for purchases, sales in _candidate_moves(q, i, n, L, mode):
        key = (purchases.tobytes(), sales.tobytes())
        if key in seen:
            continue
        seen.add(key)
        bundle = w + purchases.sum(axis=0) - sales.sum(axis=0)
        if np.any(bundle < agent.lower) or np.any(bundle > agent.upper):
            continue
        gain = evaluate_utility(agent.utility, bundle) - u0
        if gain <= STRICT_TOL:
            continue
        coef, const = _purchase_value_coeffs(purchases)
        out.append(_Deviation(purchases, sales, bundle, coef, const, gain))
    return out


# ---------------------------------------------------------------------------
# exact covering decision on the price polytope (L = 2)
# ---------------------------------------------------------------------------

def _frac(v):
    return Fraction(int(v))


def _slab_interval_1d(c, d, lo_w, hi_w):
    """s-interval where lo_w <= c + d s <= hi_w; None means empty, 'all' covers
    everything."""
    if d == 0:
        return "all" if lo_w <= c <= hi_w else None
    a = (Fraction(lo_w) - c) / d
    b = (Fraction(hi_w) - c) / d
    return (a, b) if a <= b else (b, a)


def _free_point(domain, excluded):
    """A point of [domain] not covered by the closed intervals, or None."""
    lo, hi = domain
    ivs = []
    for iv in excluded:
        if iv == "all":
            return None
        a, b = iv
        if b < lo or a > hi:
            continue
        ivs.append((max(a, lo), min(b, hi)))
    ivs.sort()
    cur = lo
    covered_cur = False
    for a, b in ivs:
        if a > cur:
            return cur if not covered_cur else (cur + a) / 2
        covered_cur = covered_cur or (a <= cur <= b)
        if b >= cur:
            cur = b
            covered_cur = True
    if cur < hi:
        return (cur + hi) / 2
    if not covered_cur:
        return cur
    return None


def _witness_on_segment(t0, v, s_lo, s_hi, slabs):
    """Uncovered point of the segment t0 + s v, s in [s_lo, s_hi]."""
    excluded = []
    for coef, const, lo_w, hi_w in slabs:
        c = Fraction(const) + sum(_frac(cc) * tc for cc, tc in zip(coef, t0))
        d = sum(_frac(cc) * vc for cc, vc in zip(coef, v))
        iv = _slab_interval_1d(c, d, lo_w, hi_w)
        if iv is not None:
            excluded.append(iv)
    s = _free_point((s_lo, s_hi), excluded)
    if s is None:
        return None
    return [c0 + s * vc for c0, vc in zip(t0, v)]


def _witness_in_polygon(a, beta, piv, n, slabs):
    """Uncovered point of {t in [0,1]^n : a . t = beta} for n = 3.

    Sweeps the first free coordinate over the critical values where the
    boundary arrangement changes; each slice is a one-dimensional problem.
    """
    free = [c for c in range(n) if c != piv]
    u_ax, v_ax = free

    # every constraint becomes alpha*u + gamma*v <= / == delta after
    # substituting t_piv = (beta - a_u u - a_v v) / a_piv
    def substitute(coef, const):
        coef = [_frac(c) for c in coef]
        const = Fraction(const)
        cp = coef[piv] / a[piv]
        alpha = coef[u_ax] - cp * a[u_ax]
        gamma = coef[v_ax] - cp * a[v_ax]
        delta = const + cp * beta
        return alpha, gamma, delta

    lines = []  # (alpha, gamma, delta) of every boundary line
    t_piv_coef = substitute([1 if c == piv else 0 for c in range(n)], 0)
    for bound in (0, 1):
        lines.append((t_piv_coef[0], t_piv_coef[1], Fraction(bound) - t_piv_coef[2]))
    lines.append((Fraction(0), Fraction(1), Fraction(0)))
    lines.append((Fraction(0), Fraction(1), Fraction(1)))
    slab_data = []
    for coef, const, lo_w, hi_w in slabs:
        alpha, gamma, delta = substitute(coef, const)
        slab_data.append((alpha, gamma, delta, Fraction(lo_w), Fraction(hi_w)))
        lines.append((alpha, gamma, Fraction(lo_w) - delta))
        lines.append((alpha, gamma, Fraction(hi_w) - delta))

    criticals = {Fraction(0), Fraction(1)}
    for idx1 in range(len(lines)):
        a1, g1, d1 = lines[idx1]
        if g1 == 0 and a1 != 0:
            u = d1 / a1
            if 0 <= u <= 1:
                criticals.add(u)
        for idx2 in range(idx1 + 1, len(lines)):
            a2, g2, d2 = lines[idx2]
            det = a1 * g2 - a2 * g1
            if det == 0:
                continue
            u = (d1 * g2 - d2 * g1) / det
            if 0 <= u <= 1:
                criticals.add(u)
    crit = sorted(criticals)
    samples = list(crit)
    samples += [(x + y) / 2 for x, y in zip(crit[:-1], crit[1:])]

    ap, au, av = _frac(a[piv]), _frac(a[u_ax]), _frac(a[v_ax])
    for u in samples:
        # domain in v: [0,1] intersected with 0 <= t_piv(u, v) <= 1
        lo_v, hi_v = Fraction(0), Fraction(1)
        num0 = beta - au * u          # t_piv = (num0 - av v)/ap
        if av == 0:
            tp = num0 / ap
            if not (0 <= tp <= 1):
                continue
        else:
            b1 = num0 / av            # v where t_piv = 0
            b2 = (num0 - ap) / av     # v where t_piv = 1
            vlo, vhi = (b1, b2) if b1 <= b2 else (b2, b1)
            lo_v, hi_v = max(lo_v, vlo), min(hi_v, vhi)
            if lo_v > hi_v:
                continue
        excluded = []
        for alpha, gamma, delta, lo_w, hi_w in slab_data:
            c = delta + alpha * u
            iv = _slab_interval_1d(c, gamma, lo_w, hi_w)
            if iv is not None:
                excluded.append(iv)
        v = _free_point((lo_v, hi_v), excluded)
        if v is not None:
            t = [Fraction(0)] * n
            t[u_ax] = u
            t[v_ax] = v
            t[piv] = (beta - au * u - av * v) / ap
            return t
    return None


def _prices_from_t(t):
    t = np.asarray([float(v) for v in t])
    return np.stack([t, 1.0 - t], axis=1)


def _certificate(economy, record, witness_t, deviations_by_agent):
    """Build a certificate for some deviation available at the witness point."""
    t = np.asarray([float(v) for v in witness_t])
    for i, devs in deviations_by_agent.items():
        for dev in devs:
            V = dev.const + float(np.dot(dev.coef, t))
            if dev.win_lo - 1e-9 <= V <= dev.win_hi + 1e-9:
                S = dev.sales_total.astype(float)
                smin, smax = float(S.min()), float(S.max())
                if smax - smin < 1e-12:
                    row = np.full(economy.goods, 1.0 / economy.goods)
                else:
                    theta = min(1.0, max(0.0, (V - smin) / (smax - smin)))
                    row = np.zeros(economy.goods)
                    row[int(S.argmax())] += theta
                    row[int(S.argmin())] += 1.0 - theta
                return DeviationCertificate(
                    agent=i, purchases=dev.purchases.astype(float),
                    sales=dev.sales_entries.astype(float), price_row=row,
                    utility_gain=dev.gain)
    return None


def is_nash(economy: Economy, record: EquilibriumRecord,
            deviation_mode="coordinate"):
    """Decide whether some price system in the record's budget polytope makes
    the state deviation-proof.

    Returns (True, witness_prices) or (False, DeviationCertificate).
    """
    if not record.feasible:
        raise ContractViolation("is_nash requires a feasible record")
    if economy.goods != 2:
        raise ContractViolation("the exact Nash search is implemented for two goods")
    q = record.flows
    n = economy.n
    A, c = reduced_price_system(q)
    poly = PricePolytope(A, c)
    if poly.empty or not poly.exact:
        raise ContractViolation("record has no exact price polytope")

    devs_by_agent = {}
    slabs = []
    for i in range(n):
        devs = _improving_deviations(economy, record, i, deviation_mode)
        if devs:
            devs_by_agent[i] = devs
            slabs.extend(devs)

    canonical = poly.canonical_witness()
    if not slabs:
        return True, _prices_from_t(canonical)

    partial = []
    for dev in slabs:
        vlo, vhi = poly.value_range(dev.coef, dev.const)
        if vhi < dev.win_lo or vlo > dev.win_hi:
            continue  # never available on the polytope
        if dev.win_lo <= vlo and vhi <= dev.win_hi:
            cert = _certificate(economy, record, canonical, devs_by_agent)
            return False, cert  # available everywhere: the state is dead
        partial.append(dev)

    if not partial:
        return True, _prices_from_t(canonical)

    # prefer the canonical witness when it clearly avoids every partial slab
    t_can = np.asarray([float(v) for v in canonical])
    margin = 1e-9
    if all(not (d.win_lo - margin <= d.const + float(np.dot(d.coef, t_can)) <= d.win_hi + margin)
           for d in partial):
        return True, _prices_from_t(canonical)

    slab_tuples = [(d.coef, d.const, d.win_lo, d.win_hi) for d in partial]
    geo = poly._solve_geometry()
    kind = geo[0]
    witness = None
    if kind == "point":
        witness = None  # a partial slab on a point polytope cannot happen
    elif kind == "segment":
        _, t0, v, lo, hi = geo
        witness = _witness_on_segment(t0, v, lo, hi, slab_tuples)
    elif kind == "face":
        _, t, free_axes = geo
        if len(free_axes) == 1:
            t0 = list(t)
            v = [Fraction(0)] * n
            v[free_axes[0]] = Fraction(1)
            t0[free_axes[0]] = Fraction(0)
            witness = _witness_on_segment(t0, v, Fraction(0), Fraction(1), slab_tuples)
        elif len(free_axes) == 2 and n == 3:
            pinned = next(j for j in range(n) if j not in free_axes)
            a_vec = [0] * n
            a_vec[pinned] = 1
            witness = _witness_in_polygon([Fraction(x) for x in a_vec],
                                          Fraction(t[pinned]), pinned, n, slab_tuples)
        else:
            raise ContractViolation("unsupported face dimension in Nash search")
    elif kind == "polygon":
        _, a, beta, piv = geo
        witness = _witness_in_polygon(a, beta, piv, n, slab_tuples)
    elif kind == "box":
        # a non-trivial box polytope only arises from balanced cycles, which a
        # universally available deviation always kills before reaching here
        raise ContractViolation("unexpected partial slabs on a full-box polytope")
    else:
        raise ContractViolation(f"unsupported polytope geometry {kind!r}")

    if witness is None:
        cert = _certificate(economy, record, canonical, devs_by_agent)
        return False, cert
    return True, _prices_from_t(witness)


def nash_set(economy: Economy, records, deviation_mode="coordinate"):
    """Records passing is_nash; flags and stored witnesses are updated."""
    out = []
    for rec in records:
        ok, payload = is_nash(economy, rec, deviation_mode)
        rec.nash = ok
        if ok:
            rec.price_witness = payload
            rec.certificate = None
            out.append(rec)
        else:
            rec.certificate = payload
            rec.nash_pareto = False
    return out


def nash_pareto_set(economy: Economy, records, deviation_mode="coordinate"):
    """Pareto frontier within the Nash set (flags set on the inputs)."""
    records = list(records)
    nash = [r for r in records if r.nash] if all(r.nash is not None for r in records) \
        else nash_set(economy, records, deviation_mode)
    if not nash:
        return []
    keep = pareto_mask(np.array([r.utilities for r in nash]))
    for r, flag in zip(nash, keep):
        r.nash_pareto = bool(flag)
    return [r for r, flag in zip(nash, keep) if flag]
