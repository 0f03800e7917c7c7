"""Joint budget-balance price solving.

Given a flow tensor, decide whether some price system (one simplex row per
agent) zeroes every agent's transaction balance, and return a canonical
witness when one exists: the feasible point closest to the uniform system.
Because residuals are linear in prices and sum to zero across agents, the
feasible set is a polytope of dimension at most n-1 equations short of the
full simplex product.

For two goods the problem reduces to the box [0,1]^n in the good-1 price
coordinates t_i (p_i = (t_i, 1 - t_i)) intersected with an integer-coefficient
affine system; for three agents that intersection is resolved exactly with
rational arithmetic. Other shapes fall back to an LP feasibility check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Optional

import numpy as np

from .core import ContractViolation, uniform_prices

__all__ = ["PriceWitness", "PricePolytope", "price_feasibility_solve",
           "reduced_price_system"]


@dataclass(frozen=True)
class PriceWitness:
    """A feasible price system plus a description of the solution set."""

    prices: np.ndarray          # (n, L) simplex rows
    polytope_dim: int           # dimension of the feasible polytope
    description: str = ""


def reduced_price_system(flows):
    """For L = 2, the residual system in good-1 price coordinates t.

    residual_i(t) = sum_j A[i, j] t_j + c_i; returns (A, c). Entries are exact
    integers whenever the flows are integral.
    """
    q = np.asarray(flows)
    n = q.shape[0]
    if q.shape[2] != 2:
        raise ContractViolation("reduced system requires exactly two goods")
    d = q[:, :, 0] - q[:, :, 1]          # net good-1 minus good-2 content per edge
    A = d.T.copy()                       # coefficient of t_j in residual_i is d[j, i]
    np.fill_diagonal(A, 0)
    A[np.arange(n), np.arange(n)] = -d.sum(axis=1)
    c = q[:, :, 1].sum(axis=0) - q[:, :, 1].sum(axis=1)
    return A, c


def _fraction_matrix(M):
    return [[Fraction(int(v)) if float(v).is_integer() else Fraction(float(v))
             for v in row] for row in np.atleast_2d(M)]


def _row_echelon(A, b):
    """Gaussian elimination over Fractions. Returns (pivots, rows, rhs, consistent)."""
    rows = [list(r) for r in A]
    rhs = list(b)
    m = len(rows)
    ncols = len(rows[0]) if m else 0
    pivots = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, m) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        rhs[r], rhs[piv] = rhs[piv], rhs[r]
        inv = Fraction(1, 1) / rows[r][col]
        rows[r] = [v * inv for v in rows[r]]
        rhs[r] = rhs[r] * inv
        for i in range(m):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * p for a, p in zip(rows[i], rows[r])]
                rhs[i] = rhs[i] - f * rhs[r]
        pivots.append(col)
        r += 1
    consistent = all(rhs[i] == 0 for i in range(r, m))
    return pivots, rows[:r], rhs[:r], consistent


class PricePolytope:
    """Exact description of {t in [0,1]^n : A t + c = 0} for small n, L = 2.

    Supports emptiness/dimension queries, vertex enumeration (n = 3), ranges
    of affine functionals, and the canonical minimum-norm witness relative to
    the uniform point t = 1/2.
    """

    def __init__(self, A, c):
        self.A = np.asarray(A)
        self.c = np.asarray(c)
        self.n = self.A.shape[0]
        Af = _fraction_matrix(self.A)
        bf = [-(Fraction(int(v)) if float(v).is_integer() else Fraction(float(v)))
              for v in self.c]
        self.pivots, self.rows, self.rhs, self.consistent = _row_echelon(Af, bf)
        self.rank = len(self.pivots)
        self._geometry = None

    # -- geometry ----------------------------------------------------------

    def _solve_geometry(self):
        """Classify the polytope: ('empty',), ('point', t), ('segment', t0, v,
        lo, hi), ('polygon', a, beta, piv), or ('box',)."""
        if self._geometry is not None:
            return self._geometry
        half = Fraction(1, 2)
        if not self.consistent:
            geo = ("empty",)
        elif self.rank == 0:
            geo = ("box",)
        elif self.rank == self.n:
            t = [Fraction(0)] * self.n
            for row_i, col in enumerate(self.pivots):
                t[col] = self.rhs[row_i]
            geo = ("point", t) if all(0 <= v <= 1 for v in t) else ("empty",)
        elif self.rank == self.n - 1:
            free = next(c for c in range(self.n) if c not in self.pivots)
            t0 = [Fraction(0)] * self.n
            v = [Fraction(0)] * self.n
            v[free] = Fraction(1)
            for row_i, col in enumerate(self.pivots):
                t0[col] = self.rhs[row_i]
                v[col] = -self.rows[row_i][free]
            lo, hi = Fraction(0), Fraction(1)
            ok = True
            for c0, vc in zip(t0, v):
                if vc == 0:
                    if not (0 <= c0 <= 1):
                        ok = False
                        break
                else:
                    a, b = (-c0) / vc, (1 - c0) / vc
                    a, b = (a, b) if a <= b else (b, a)
                    lo, hi = max(lo, a), min(hi, b)
            if not ok or lo > hi:
                geo = ("empty",)
            elif lo == hi:
                geo = ("point", [c0 + lo * vc for c0, vc in zip(t0, v)])
            else:
                geo = ("segment", t0, v, lo, hi)
        elif self.rank == 1:
            # single effective equation a . t = beta over the box
            row_i = 0
            a = self.rows[row_i]
            beta = self.rhs[row_i]
            lo = sum(min(ai, 0) for ai in a)
            hi = sum(max(ai, 0) for ai in a)
            if not (lo <= beta <= hi):
                geo = ("empty",)
            elif lo == beta or hi == beta:
                # the plane only touches the box on a face: coordinates with
                # nonzero coefficient are pinned, the rest stay free
                t = []
                free_axes = []
                for j, aj in enumerate(a):
                    if aj == 0:
                        t.append(half)
                        free_axes.append(j)
                    elif (aj < 0) == (beta == lo):
                        t.append(Fraction(1))
                    else:
                        t.append(Fraction(0))
                if not free_axes:
                    geo = ("point", t)
                else:
                    geo = ("face", t, free_axes)
            else:
                piv = max(range(len(a)), key=lambda j: abs(a[j]))
                geo = ("polygon", list(a), beta, piv)
        else:
            # 1 < rank < n-1 only happens for n > 3; no exact path implemented
            geo = ("general",)
        self._geometry = geo
        return geo

    @property
    def empty(self):
        return self._solve_geometry()[0] == "empty"

    @property
    def exact(self):
        return self._solve_geometry()[0] != "general"

    @property
    def dim(self):
        geo = self._solve_geometry()
        kind = geo[0]
        if kind == "empty":
            return -1
        if kind == "point":
            return 0
        if kind == "segment":
            return 1
        if kind == "face":
            return len(geo[2])
        if kind == "polygon":
            return 2
        if kind == "general":
            return self.n - self.rank  # affine dimension, box cut not resolved
        return self.n  # box

    # -- vertices and functional ranges -------------------------------------

    def vertices(self):
        """Exact vertex list (Fractions). Extreme points for dims 0-2 and the
        box; for 'face' geometries the face corners."""
        geo = self._solve_geometry()
        kind = geo[0]
        if kind == "empty":
            return []
        if kind == "point":
            return [tuple(geo[1])]
        if kind == "segment":
            _, t0, v, lo, hi = geo
            return [tuple(c0 + s * vc for c0, vc in zip(t0, v)) for s in (lo, hi)]
        if kind == "face":
            _, t, free_axes = geo
            verts = []
            for combo in product((Fraction(0), Fraction(1)), repeat=len(free_axes)):
                w = list(t)
                for ax, val in zip(free_axes, combo):
                    w[ax] = val
                verts.append(tuple(w))
            return verts
        if kind == "box":
            return [tuple(Fraction(v) for v in combo)
                    for combo in product((0, 1), repeat=self.n)]
        # polygon: intersect the plane with every box edge
        _, a, beta, piv = geo
        verts = set()
        n = self.n
        for free_ax in range(n):
            others = [j for j in range(n) if j != free_ax]
            for fixed in product((Fraction(0), Fraction(1)), repeat=n - 1):
                if a[free_ax] == 0:
                    continue
                rem = beta - sum(a[j] * v for j, v in zip(others, fixed))
                t_free = rem / a[free_ax]
                if 0 <= t_free <= 1:
                    point = [None] * n
                    for j, v in zip(others, fixed):
                        point[j] = v
                    point[free_ax] = t_free
                    verts.add(tuple(point))
        return sorted(verts)

    def value_range(self, coef, const):
        """Exact [min, max] of const + coef . t over the polytope."""
        verts = self.vertices()
        if not verts:
            raise ContractViolation("value_range on an empty polytope")
        coef = [Fraction(int(v)) if float(v).is_integer() else Fraction(float(v))
                for v in coef]
        const = Fraction(int(const)) if float(const).is_integer() else Fraction(float(const))
        vals = [const + sum(c * x for c, x in zip(coef, vert)) for vert in verts]
        return min(vals), max(vals)

    def contains(self, t, tol=1e-9):
        t = np.asarray(t, dtype=float)
        if np.any(t < -tol) or np.any(t > 1 + tol):
            return False
        res = self.A.astype(float) @ t + self.c.astype(float)
        return bool(np.all(np.abs(res) <= tol))

    # -- canonical witness ---------------------------------------------------

    def canonical_witness(self):
        """Closest feasible point to the uniform t = 1/2, exact Fractions."""
        geo = self._solve_geometry()
        kind = geo[0]
        half = Fraction(1, 2)
        if kind == "empty":
            return None
        if kind == "box":
            return [half] * self.n
        if kind == "point":
            return list(geo[1])
        if kind == "face":
            _, t, free_axes = geo
            w = list(t)
            for ax in free_axes:
                w[ax] = half
            return w
        if kind == "segment":
            _, t0, v, lo, hi = geo
            num = sum(vc * (half - c0) for c0, vc in zip(t0, v))
            den = sum(vc * vc for vc in v)
            s = max(lo, min(hi, num / den))
            return [c0 + s * vc for c0, vc in zip(t0, v)]
        # polygon: project the uniform point onto the plane within the box by
        # walking the breakpoints of t(lam) = clip(u + lam a)
        _, a, beta, piv = geo
        u = [half] * self.n
        lams = set()
        for aj, uj in zip(a, u):
            if aj != 0:
                lams.add((Fraction(0) - uj) / aj)
                lams.add((Fraction(1) - uj) / aj)
        lams = sorted(lams)
        span = max(abs(l) for l in lams) + 1

        def t_of(lam):
            return [min(Fraction(1), max(Fraction(0), uj + lam * aj))
                    for uj, aj in zip(u, a)]

        def g(lam):
            return sum(aj * tj for aj, tj in zip(a, t_of(lam)))

        knots = [lams[0] - span] + lams + [lams[-1] + span]
        for left, right in zip(knots[:-1], knots[1:]):
            gl, gr = g(left), g(right)
            if gl == beta:
                return t_of(left)
            if gr == beta:
                return t_of(right)
            if gl < beta < gr or gr < beta < gl:
                # g is affine on [left, right]
                lam = left + (beta - gl) * (right - left) / (gr - gl)
                return t_of(lam)
        return None  # unreachable for feasible polygons


def _prices_from_t(t):
    t = np.asarray([float(v) for v in t])
    return np.stack([t, 1.0 - t], axis=1)


def _general_lp_solve(economy_n, L, flows, tol):
    """LP feasibility + least-squares polish for shapes without an exact path."""
    from scipy.optimize import linprog, minimize

    q = np.asarray(flows, dtype=float)
    n = economy_n
    nv = n * L
    A_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros(nv)
        row[i * L:(i + 1) * L] = 1.0
        A_eq.append(row)
        b_eq.append(1.0)
    for i in range(n):
        row = np.zeros(nv)
        for j in range(n):
            if j == i:
                continue
            row[j * L:(j + 1) * L] += q[j, i]
            row[i * L:(i + 1) * L] -= q[i, j]
        A_eq.append(row)
        b_eq.append(0.0)
    res = linprog(np.zeros(nv), A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                  bounds=[(0, 1)] * nv, method="highs")
    if not res.success:
        return None
    u = uniform_prices(n, L).ravel()
    cons = ({"type": "eq", "fun": lambda p: np.array(A_eq) @ p - np.array(b_eq)},)
    out = minimize(lambda p: np.sum((p - u) ** 2), res.x, constraints=cons,
                   bounds=[(0, 1)] * nv, method="SLSQP",
                   options={"maxiter": 200, "ftol": 1e-14})
    p = out.x if out.success else res.x
    rank = np.linalg.matrix_rank(np.array(A_eq), tol=1e-10)
    dim = nv - rank
    return PriceWitness(p.reshape(n, L), int(dim), "lp")


def price_feasibility_solve(economy, flows, tol=1e-9) -> Optional[PriceWitness]:
    """Decide whether the budget-balance price polytope is non-empty.

    Returns the canonical minimum-norm witness (plus the polytope dimension),
    or None when no simplex price system balances every agent.
    """
    q = np.asarray(flows)
    n, _, L = q.shape
    if L == 2:
        A, c = reduced_price_system(q)
        poly = PricePolytope(A, c)
        if poly.exact:
            if poly.empty:
                return None
            t = poly.canonical_witness()
            return PriceWitness(_prices_from_t(t), poly.dim, "exact")
    return _general_lp_solve(n, L, q, tol)


def price_polytope(flows) -> PricePolytope:
    """The exact reduced polytope for a two-good flow tensor."""
    A, c = reduced_price_system(flows)
    return PricePolytope(A, c)
