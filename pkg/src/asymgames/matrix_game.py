"""Exact value and optimal mixed strategies of finite zero-sum games.

Convention (fixed project-wide): the ROW player MINIMISES, the column
player MAXIMISES.  The value is computed by a self-contained dense
simplex solve of the standard game LP; pivot ties are broken by lowest
variable index (Bland's rule), so reruns are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MixedStrategy

_PIVOT_TOL = 1e-11
_MAX_PIVOTS = 20000


class IllConditionedGameError(RuntimeError):
    """Numerically degenerate pivot; carries the offending matrix."""

    def __init__(self, message, matrix):
        super().__init__(message)
        self.matrix = np.array(matrix)


@dataclass(frozen=True)
class MatrixGame:
    """An m x n payoff table; rows minimise, columns maximise."""

    A: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", a)
        if a.size == 0:
            raise ValueError("payoff matrix must be nonempty")
        if not np.isfinite(a).all():
            raise ValueError("payoff matrix must be finite")

    @property
    def shape(self):
        return self.A.shape


@dataclass(frozen=True)
class Saddle:
    """Mixed value with optimal strategies and an optimality certificate.

    certificate_gap = max_j (row_mix^T A)_j - min_i (A col_mix)_i >= 0;
    it bounds how far the returned pair is from a saddle point.
    """

    value: float
    row_mix: MixedStrategy
    col_mix: MixedStrategy
    certificate_gap: float


def pure_minimax(game: MatrixGame):
    """(inf-sup, sup-inf) over PURE strategies; they differ when Isaacs fails."""
    a = game.A
    infsup = float(a.max(axis=1).min())
    supinf = float(a.min(axis=0).max())
    return infsup, supinf


def _simplex_max(BT, tol):
    """Maximise 1.y subject to BT y <= 1, y >= 0 (BT with positive entries).

    Returns (objective, y, duals).  Dense tableau simplex with Bland's
    rule for both the entering and the leaving variable.
    """
    n, m = BT.shape  # n constraints, m structural variables
    # tableau: columns [y (m) | slack (n) | rhs]; basis starts as slacks
    T = np.zeros((n, m + n + 1))
    T[:, :m] = BT
    T[:, m : m + n] = np.eye(n)
    T[:, -1] = 1.0
    cost = np.zeros(m + n + 1)
    cost[:m] = 1.0
    basis = list(range(m, m + n))
    for _ in range(_MAX_PIVOTS):
        entering = -1
        for j in range(m + n):
            if cost[j] > tol:
                entering = j  # Bland: lowest eligible index
                break
        if entering < 0:
            break
        col = T[:, entering]
        best_ratio, leave_row = None, -1
        for i in range(n):
            if col[i] > _PIVOT_TOL:
                ratio = T[i, -1] / col[i]
                if (
                    best_ratio is None
                    or ratio < best_ratio - 1e-15
                    or (abs(ratio - best_ratio) <= 1e-15 and basis[i] < basis[leave_row])
                ):
                    best_ratio, leave_row = ratio, i
        if leave_row < 0:
            raise IllConditionedGameError("ill-conditioned game: unbounded pivot column", BT)
        piv = T[leave_row, entering]
        if abs(piv) < _PIVOT_TOL * max(1.0, np.abs(col).max()):
            raise IllConditionedGameError("ill-conditioned game: degenerate pivot", BT)
        T[leave_row] /= piv
        for i in range(n):
            if i != leave_row and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leave_row]
        cost = cost - cost[entering] * T[leave_row]
        basis[leave_row] = entering
    else:
        raise IllConditionedGameError("ill-conditioned game: pivot limit reached", BT)
    y = np.zeros(m)
    for i, b in enumerate(basis):
        if b < m:
            y[b] = T[i, -1]
    objective = float(y.sum())
    duals = -cost[m : m + n]  # shadow prices of the <= constraints
    return objective, y, duals


def solve(game: MatrixGame, tol_game: float = 1e-9) -> Saddle:
    """Exact mixed value  min_mu max_nu mu^T A nu  =  max_nu min_mu mu^T A nu.

    LP formulation on the shifted-positive matrix; the column player's
    optimal mix is read off the dual prices, so one solve yields both
    strategies and the certificate.
    """
    a = game.A
    m, n = a.shape
    shift = 1.0 - a.min()
    b = a + shift  # all entries >= 1
    # row player: max 1.y s.t. B^T y <= 1  (y = mu / value(B))
    objective, y, duals = _simplex_max(b.T.copy(), tol=1e-12)
    if objective <= 0:
        raise IllConditionedGameError("ill-conditioned game: nonpositive objective", a)
    value_shifted = 1.0 / objective
    row = y / objective
    dual_sum = duals.sum()
    if dual_sum <= 0:
        raise IllConditionedGameError("ill-conditioned game: degenerate duals", a)
    col = duals / dual_sum
    row = np.clip(row, 0.0, None)
    row /= row.sum()
    col = np.clip(col, 0.0, None)
    col /= col.sum()
    value = value_shifted - shift
    gap = float((row @ a).max() - (a @ col).min())
    if gap < -1e-12 or gap > max(tol_game, 1e-9):
        raise IllConditionedGameError(
            f"ill-conditioned game: certificate gap {gap:.3e} exceeds {tol_game:.1e}", a
        )
    return Saddle(
        value=float(value),
        row_mix=MixedStrategy(row),
        col_mix=MixedStrategy(col),
        certificate_gap=max(gap, 0.0),
    )


def solve_matrix(a, tol_game: float = 1e-9) -> Saddle:
    """Convenience wrapper: solve a raw array as a MatrixGame."""
    return solve(MatrixGame(np.asarray(a, dtype=float)), tol_game)
