"""Mixed-strategy Hamiltonians evaluated by exact finite matrix games.

H(x, xi)  = inf over mixes mu on U, sup over mixes nu on V, of the
bilinear expectation of f(x,u,v).xi -- the value of the matrix game
A_uv = f(x,u,v).xi with rows minimising.  H*(x, xi) = -H(x, -xi).

`MixedHamiltonian` is the per-call API with optional memoisation; the
module also provides batched evaluation over whole grids of (x, xi)
pairs for the PDE sweeps, exact by positive homogeneity (d = 1) or by
closed forms / vectorised enumeration for degenerate and 2x2 games,
with a per-node LP fallback otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GameSpec, MixedStrategy
from .matrix_game import MatrixGame, pure_minimax, solve


@dataclass(frozen=True)
class HamiltonianEval:
    """Value and optimal mixes at one (x, xi), with the pure-control gap."""

    value: float
    mu: MixedStrategy
    nu: MixedStrategy
    isaacs_gap: float  # inf-sup minus sup-inf over pure controls


def payoff_tensor(spec: GameSpec, x: np.ndarray) -> np.ndarray:
    """f(x, u, v) for all control pairs: shape x.shape[:-1] + (n_u, n_v, d)."""
    x = np.asarray(x, dtype=float)
    lead = x.shape[:-1]
    out = np.empty(lead + (spec.n_u, spec.n_v, spec.d))
    for iu in range(spec.n_u):
        for iv in range(spec.n_v):
            out[..., iu, iv, :] = spec.f_field(x, iu, iv)
    return out


def _game_matrix(spec: GameSpec, x, xi) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return payoff_tensor(spec, x) @ xi


class MixedHamiltonian:
    """Evaluator bound to one GameSpec, with optional (x, xi) memoisation.

    Memoisation keys are quantised with step 1e-12 so that PDE sweeps
    revisiting identical grid gradients hit the cache without false
    positives.
    """

    def __init__(self, spec: GameSpec, tol_game: float = 1e-9, memoize: bool = False):
        self.spec = spec
        self.tol_game = tol_game
        self.memoize = memoize
        self._cache = {}

    def _key(self, x, xi):
        q = np.round(np.concatenate([x, xi]) / 1e-12).astype(np.int64)
        return q.tobytes()

    def eval_H(self, x, xi) -> HamiltonianEval:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        key = ("H", self._key(x, xi)) if self.memoize else None
        if key is not None and key in self._cache:
            return self._cache[key]
        game = MatrixGame(_game_matrix(self.spec, x, xi))
        saddle = solve(game, self.tol_game)
        infsup, supinf = pure_minimax(game)
        out = HamiltonianEval(
            value=saddle.value,
            mu=saddle.row_mix,
            nu=saddle.col_mix,
            isaacs_gap=infsup - supinf,
        )
        if key is not None:
            self._cache[key] = out
        return out

    def eval_H_star(self, x, xi) -> HamiltonianEval:
        """H*(x, xi) = -H(x, -xi) = inf_nu sup_mu of the same bilinear form."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        neg = self.eval_H(x, -xi)
        return HamiltonianEval(
            value=-neg.value, mu=neg.mu, nu=neg.nu, isaacs_gap=neg.isaacs_gap
        )


def eval_H(spec: GameSpec, x, xi, tol_game: float = 1e-9) -> HamiltonianEval:
    return MixedHamiltonian(spec, tol_game).eval_H(x, xi)


def eval_H_star(spec: GameSpec, x, xi, tol_game: float = 1e-9) -> HamiltonianEval:
    return MixedHamiltonian(spec, tol_game).eval_H_star(x, xi)


def _value_2x2_rowmin_batch(a, b, c, d):
    """Values of [[a,b],[c,d]] games (rows minimise), elementwise arrays.

    Pure saddle iff inf-sup == sup-inf; otherwise the fully mixed
    closed form (ad - bc) / (a + d - b - c), clipped into the pure
    bounds to keep near-degenerate cases stable.
    """
    infsup = np.minimum(np.maximum(a, b), np.maximum(c, d))
    supinf = np.maximum(np.minimum(a, c), np.minimum(b, d))
    den = a + d - b - c
    safe = np.where(den == 0.0, 1.0, den)
    with np.errstate(invalid="ignore"):
        mixed = (a * d - b * c) / safe
    mixed = np.clip(mixed, supinf, infsup)
    return np.where(infsup > supinf, np.where(den == 0.0, infsup, mixed), infsup)


class StarKernel:
    """Batched H*(x, .) evaluation at every node of a state grid.

    Built once per (spec, grid); `__call__` takes gradients of shape
    nodes_shape + extra + (d,) and returns H* of shape nodes_shape +
    extra.  Dispatch, all exact:

    - d == 1: positive homogeneity, H*(x, s) = s+ H*(x,1) - s- H*(x,-1),
      with the two directional values solved by LP per node;
    - single-row / single-column games: vectorised max / min;
    - 2x2 games: vectorised closed form;
    - otherwise: per-point LP solves (slow path, small uses only).
    """

    def __init__(self, spec: GameSpec, grid_nodes: np.ndarray, tol_game: float = 1e-9):
        self.spec = spec
        self.tol_game = tol_game
        nodes = np.asarray(grid_nodes, dtype=float)
        self.nodes_shape = nodes.shape[:-1]
        self.tensor = payoff_tensor(spec, nodes)  # nodes_shape + (m, n, d)
        self.m, self.n = spec.n_u, spec.n_v
        if spec.d == 1:
            flat = self.tensor.reshape(-1, self.m, self.n, 1)
            hp = np.empty(flat.shape[0])
            hm = np.empty(flat.shape[0])
            for k in range(flat.shape[0]):
                mat = flat[k, :, :, 0]
                # H*(x, +1) = -H(x, -1), H*(x, -1) = -H(x, +1)
                hp[k] = -solve(MatrixGame(-mat), tol_game).value
                hm[k] = -solve(MatrixGame(mat), tol_game).value
            self._hp = hp.reshape(self.nodes_shape)
            self._hm = hm.reshape(self.nodes_shape)

    def _entries(self, xi, iu, iv):
        # sum over the state axis of tensor[..., iu, iv, :] * xi
        t = self.tensor[..., iu, iv, :]
        t = t.reshape(self.nodes_shape + (1,) * (xi.ndim - 1 - len(self.nodes_shape)) + (self.spec.d,))
        return (t * xi).sum(axis=-1)

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        extra = xi.ndim - 1 - len(self.nodes_shape)
        if self.spec.d == 1:
            s = xi[..., 0]
            hp = self._hp.reshape(self.nodes_shape + (1,) * extra)
            hm = self._hm.reshape(self.nodes_shape + (1,) * extra)
            return np.where(s >= 0.0, s * hp, -s * hm)
        if self.m == 1 and self.n == 1:
            return self._entries(xi, 0, 0)
        if self.n == 1:
            # sup over mu only: max_u
            vals = [self._entries(xi, iu, 0) for iu in range(self.m)]
            return np.maximum.reduce(vals)
        if self.m == 1:
            # inf over nu only: min_v
            vals = [self._entries(xi, 0, iv) for iv in range(self.n)]
            return np.minimum.reduce(vals)
        if self.m == 2 and self.n == 2:
            # H* = sup_mu inf_nu: negate, solve rows-minimise, negate
            e = [[self._entries(xi, iu, iv) for iv in range(2)] for iu in range(2)]
            return -_value_2x2_rowmin_batch(-e[0][0], -e[0][1], -e[1][0], -e[1][1])
        return self._slow_path(xi)

    def _slow_path(self, xi):
        flatten_n = int(np.prod(self.nodes_shape))
        xi_flat = xi.reshape((flatten_n, -1, self.spec.d))
        tens = self.tensor.reshape((flatten_n, self.m, self.n, self.spec.d))
        out = np.empty(xi_flat.shape[:2])
        for k in range(flatten_n):
            for r in range(xi_flat.shape[1]):
                mat = tens[k] @ xi_flat[k, r]
                out[k, r] = -solve(MatrixGame(-mat), self.tol_game).value
        return out.reshape(xi.shape[:-1])
