"""Shared domain types: game specification, grids, mixed strategies,
time partitions, and fixed-step integration of the controlled dynamics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

SUM_TOL = 1e-12


class IntegrationBudgetError(RuntimeError):
    """Raised when an integration would exceed the configured step cap."""


@dataclass(frozen=True)
class MixedStrategy:
    """Probability vector on a finite support (a point of a simplex)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty vector")
        if w.min() < -SUM_TOL:
            raise ValueError(f"negative weight {w.min()}")
        if abs(w.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()}, not 1")

    @property
    def n(self) -> int:
        return self.weights.size


def uniform_mix(n: int) -> MixedStrategy:
    return MixedStrategy(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class TimePartition:
    """Strictly increasing knots 0 = t_0 < ... < t_N = T."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", k)
        if k.ndim != 1 or k.size < 2:
            raise ValueError("a partition needs at least two knots")
        if k[0] != 0.0:
            raise ValueError("first knot must be 0")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")

    @staticmethod
    def uniform(n_steps: int, horizon: float) -> "TimePartition":
        return TimePartition(np.linspace(0.0, horizon, n_steps + 1))

    @property
    def n_steps(self) -> int:
        return self.knots.size - 1

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def mesh(self) -> float:
        return float(np.diff(self.knots).max())


@dataclass(frozen=True)
class StateGrid:
    """Uniform box grid on [lo, hi] with n nodes per axis (n >= 3)."""

    lo: np.ndarray
    hi: np.ndarray
    n_per_axis: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        n = tuple(int(v) for v in np.atleast_1d(self.n_per_axis))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_per_axis", n)
        if not (lo.shape == hi.shape and len(n) == lo.size):
            raise ValueError("lo, hi, n_per_axis must agree in dimension")
        if np.any(hi <= lo):
            raise ValueError("need lo < hi componentwise")
        if min(n) < 3:
            raise ValueError("need at least 3 nodes per axis")

    @property
    def d(self) -> int:
        return self.lo.size

    @property
    def dx(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.n_per_axis) - 1)

    @property
    def axes(self) -> list:
        return [
            np.linspace(self.lo[a], self.hi[a], self.n_per_axis[a])
            for a in range(self.d)
        ]

    def nodes(self) -> np.ndarray:
        """All grid nodes, shape (prod(n_per_axis), d), C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def shape(self) -> tuple:
        return self.n_per_axis


@dataclass(frozen=True)
class SimplexGrid:
    """All probability vectors with coordinates in {0, 1/K, ..., 1}."""

    m: int
    resolution: int
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.m < 1 or self.resolution < 1:
            raise ValueError("need m >= 1 and resolution >= 1")
        K, m = self.resolution, self.m
        counts = []
        # stars and bars, lexicographic in the divider positions
        for dividers in itertools.combinations(range(K + m - 1), m - 1):
            prev, row = -1, []
            for pos in dividers:
                row.append(pos - prev - 1)
                prev = pos
            row.append(K + m - 2 - prev)
            counts.append(row)
        nodes = np.array(counts, dtype=float) / K
        object.__setattr__(self, "nodes", nodes)
        assert nodes.shape[0] == comb(K + m - 1, m - 1)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def strategy(self, idx: int) -> MixedStrategy:
        return MixedStrategy(self.nodes[idx])


@dataclass(frozen=True)
class GameSpec:
    """Dynamics, finite control sets, payoff table, horizon, dimension.

    f(x, iu, iv) maps states of shape (..., d) to derivatives of the
    same shape for the control pair with indices (iu, iv); g[i][j](x)
    maps states to scalar terminal payoffs.  Convention throughout:
    player 1 (controls u, learns type i) minimises, player 2 (controls
    v, learns type j) maximises.
    """

    d: int
    T: float
    u_points: tuple
    v_points: tuple
    f: Callable[[np.ndarray, int, int], np.ndarray]
    g: tuple

    def __post_init__(self):
        object.__setattr__(self, "u_points", tuple(self.u_points))
        object.__setattr__(self, "v_points", tuple(self.v_points))
        object.__setattr__(self, "g", tuple(tuple(row) for row in self.g))
        if self.d < 1 or self.T <= 0:
            raise ValueError("need d >= 1 and T > 0")
        if not self.u_points or not self.v_points:
            raise ValueError("control sets must be nonempty")
        if not self.g or not all(len(row) == len(self.g[0]) for row in self.g):
            raise ValueError("payoff table must be a nonempty I x J grid")

    @property
    def I(self) -> int:
        return len(self.g)

    @property
    def J(self) -> int:
        return len(self.g[0])

    @property
    def n_u(self) -> int:
        return len(self.u_points)

    @property
    def n_v(self) -> int:
        return len(self.v_points)

    def f_field(self, x: np.ndarray, iu: int, iv: int) -> np.ndarray:
        """f evaluated with broadcasting guaranteed to match x's shape."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.f(x, iu, iv), dtype=float)
        return np.broadcast_to(out, x.shape)

    def payoff(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.g[i][j](x), dtype=float)
        return np.broadcast_to(out, x.shape[:-1])


@dataclass
class NumericsConfig:
    """Grid resolutions, CFL/viscosity constants, tolerances, caps."""

    grid: StateGrid
    partition: TimePartition
    simplex_k: int = 16
    dual_radius: float | None = None  # default G_max + 1
    dual_nodes: int | None = None  # per axis, default simplex_k + 1
    sigma_margin: float = 1.05
    tol_game: float = 1e-9
    tol_convexity: float = 1e-8
    h_ode: float | None = None  # default partition.mesh / 20
    ode_step_cap: int = 2_000_000
    profile_cap: int = 4096
    pde_dim_cap: int = 3
    seed: int = 0

    @property
    def ode_step(self) -> float:
        return self.h_ode if self.h_ode is not None else self.partition.mesh / 20.0


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-constant control indices along a partition."""

    partition: TimePartition
    u_idx: tuple
    v_idx: tuple

    def __post_init__(self):
        object.__setattr__(self, "u_idx", tuple(int(i) for i in self.u_idx))
        object.__setattr__(self, "v_idx", tuple(int(i) for i in self.v_idx))
        if len(self.u_idx) != self.partition.n_steps or len(self.v_idx) != self.partition.n_steps:
            raise ValueError("need one (u, v) index pair per interval")


def constant_path(partition: TimePartition, iu: int, iv: int) -> ControlPath:
    n = partition.n_steps
    return ControlPath(partition, (iu,) * n, (iv,) * n)


def _rk4_segment(spec, x, iu, iv, t0, t1, h_max):
    span = t1 - t0
    n = max(1, int(np.ceil(span / h_max - 1e-12)))
    h = span / n
    for _ in range(n):
        k1 = spec.f_field(x, iu, iv)
        k2 = spec.f_field(x + 0.5 * h * k1, iu, iv)
        k3 = spec.f_field(x + 0.5 * h * k2, iu, iv)
        k4 = spec.f_field(x + h * k3, iu, iv)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def integrate(
    spec: GameSpec,
    t: float,
    x: np.ndarray,
    controls: ControlPath,
    s: float,
    h_ode: float,
    step_cap: int = 2_000_000,
) -> np.ndarray:
    """State at time s from (t, x) under a piecewise-constant control path.

    Fixed-step RK4 with step <= h_ode inside every control interval;
    deterministic given its inputs.
    """
    if not (t <= s <= spec.T + 1e-12):
        raise ValueError(f"need t <= s <= T, got t={t}, s={s}, T={spec.T}")
    if h_ode <= 0:
        raise ValueError("h_ode must be positive")
    if (s - t) / h_ode > step_cap:
        raise IntegrationBudgetError("integration budget exceeded")
    x = np.asarray(x, dtype=float)
    knots = controls.partition.knots
    for k in range(controls.partition.n_steps):
        a, b = max(t, knots[k]), min(s, knots[k + 1])
        if b <= a:
            continue
        x = _rk4_segment(spec, x, controls.u_idx[k], controls.v_idx[k], a, b, h_ode)
    return x


def dynamics_bound(spec: GameSpec, grid: StateGrid) -> float:
    """sup-norm bound on f, by enumeration over grid nodes and (u, v)."""
    nodes = grid.nodes()
    best = 0.0
    for iu in range(spec.n_u):
        for iv in range(spec.n_v):
            best = max(best, float(np.abs(spec.f_field(nodes, iu, iv)).max()))
    return best


def payoff_bound(spec: GameSpec, grid: StateGrid) -> float:
    """Bound on |g_ij| over the grid, by enumeration."""
    nodes = grid.nodes()
    best = 0.0
    for i in range(spec.I):
        for j in range(spec.J):
            best = max(best, float(np.abs(spec.payoff(i, j, nodes)).max()))
    return best


@dataclass
class EstimateReport:
    """Empirical constants for the growth and stability estimates."""

    c_growth: float  # fitted C in |X_s - x| <= C (s - t)
    c_stability: float  # fitted C in |X_s^{t,x} - X_s^{t',x'}| <= C(|t-t'| + |x-x'|)
    growth_bound: float  # theory bound sup|f| from grid enumeration
    growth_violation: float  # max(0, c_growth - growth_bound)
    n_samples: int


def verify_estimates(
    spec: GameSpec,
    grid: StateGrid,
    n_samples: int = 64,
    seed: int = 0,
    n_intervals: int = 4,
    h_ode: float | None = None,
) -> EstimateReport:
    """Check the standard trajectory estimates on random samples."""
    rng = np.random.default_rng(seed)
    f_max = dynamics_bound(spec, grid)
    h = h_ode if h_ode is not None else spec.T / 80.0
    c1 = 0.0
    c2 = 0.0
    span = grid.hi - grid.lo
    for _ in range(n_samples):
        t = float(rng.uniform(0.0, 0.9 * spec.T))
        tp = float(rng.uniform(0.0, 0.9 * spec.T))
        s = float(rng.uniform(max(t, tp), spec.T))
        x = grid.lo + rng.uniform(0.1, 0.9, size=grid.d) * span
        xp = grid.lo + rng.uniform(0.1, 0.9, size=grid.d) * span
        part = TimePartition.uniform(n_intervals, spec.T)
        path = ControlPath(
            part,
            rng.integers(0, spec.n_u, size=n_intervals),
            rng.integers(0, spec.n_v, size=n_intervals),
        )
        xs = integrate(spec, t, x, path, s, h)
        if s > t:
            c1 = max(c1, float(np.linalg.norm(xs - x)) / (s - t))
        xs2 = integrate(spec, tp, xp, path, s, h)
        denom = abs(t - tp) + float(np.linalg.norm(x - xp))
        if denom > 1e-9:
            c2 = max(c2, float(np.linalg.norm(xs - xs2)) / denom)
    bound = f_max * np.sqrt(grid.d)
    return EstimateReport(
        c_growth=c1,
        c_stability=c2,
        growth_bound=float(bound),
        growth_violation=max(0.0, c1 - float(bound) * (1.0 + 1e-6)),
        n_samples=n_samples,
    )
