"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Solves ``min c.x  s.t.  A x = b,  x >= 0`` on a full tableau. Meant for the
small, dense problems of the weight search (tens of rows and columns).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stablelbm.errors import ConstructionError, Infeasible


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, a: np.ndarray, b: np.ndarray, basis: list[int], tol: float):
        self.t = np.hstack([a, b[:, None]])
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def pivot(self, r: int, c: int):
        t = self.t
        t[r] /= t[r, c]
        col = t[:, c].copy()
        col[r] = 0.0
        t -= np.outer(col, t[r])
        t[:, c] = 0.0
        t[r, c] = 1.0
        self.basis[r] = c
        self.iterations += 1

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        cb = cost[self.basis]
        return cost - cb @ self.t[:, :-1]

    def optimize(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int):
        """Bland's rule: lowest-index improving column, lowest-index leaving basic."""
        for _ in range(max_iter):
            d = self.reduced_costs(cost)
            cand = np.flatnonzero((d < -self.tol) & allowed)
            if cand.size == 0:
                return
            c = cand[0]
            col = self.t[:, c]
            rhs = self.t[:, -1]
            rows = np.flatnonzero(col > self.tol)
            if rows.size == 0:
                raise ConstructionError("linear program is unbounded")
            ratios = rhs[rows] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + self.tol * max(1.0, abs(best))]
            r = min(ties, key=lambda i: self.basis[i])
            self.pivot(r, c)
        raise ConstructionError(f"simplex did not terminate in {max_iter} pivots")


def simplex(
    c: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 50_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    a = np.array(a_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = a.shape
    neg = b < 0
    a[neg] *= -1
    b[neg] *= -1

    # phase 1: artificial identity columns n .. n+m-1
    tab = _Tableau(np.hstack([a, np.eye(m)]), b, list(range(n, n + m)), tol)
    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    tab.optimize(phase1_cost, np.ones(n + m, dtype=bool), max_iter)
    infeas = float(tab.t[:, -1] @ phase1_cost[tab.basis])
    if infeas > tol * max(1.0, np.abs(b).max(initial=0.0)):
        raise Infeasible(f"phase 1 optimum {infeas:.3e} > 0", phase1_objective=infeas)

    # drive zero-level artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if tab.basis[r] < n:
            keep.append(r)
            continue
        row = tab.t[r, :n]
        c_in = np.flatnonzero(np.abs(row) > tol)
        if c_in.size:
            tab.pivot(r, c_in[0])
            keep.append(r)
    tab.t = tab.t[keep]
    tab.basis = [tab.basis[r] for r in keep]

    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    cost = np.concatenate([c, np.zeros(m)])
    tab.optimize(cost, allowed, max_iter)

    x = np.zeros(n + m)
    x[tab.basis] = tab.t[:, -1]
    x = x[:n]
    return LPResult(x=x, objective=float(c @ x), iterations=tab.iterations)
