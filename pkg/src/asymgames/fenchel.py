"""Discrete Fenchel conjugation over simplex grids.

Conjugates are brute-force max / min over the grid nodes, O(#nodes) per
dual point: exact on the grid, deterministic (ties resolved by lowest
node index through numpy's first-match argmax), and fast at the belief
dimensions this project targets (I, J <= 6).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import SimplexGrid


class DualBoxError(ValueError):
    """The dual box cannot capture the attained subgradients."""


@dataclass(frozen=True)
class DualBox:
    """Cartesian grid on [-R, R]^m for the dual (conjugate) variables.

    R must dominate the payoff bound G_max so every attained slope of a
    value function lies inside.
    """

    m: int
    radius: float
    nodes_per_axis: int
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.m < 1 or self.radius <= 0 or self.nodes_per_axis < 2:
            raise ValueError("need m >= 1, radius > 0, nodes_per_axis >= 2")
        axis = np.linspace(-self.radius, self.radius, self.nodes_per_axis)
        mesh = np.meshgrid(*([axis] * self.m), indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        object.__setattr__(self, "nodes", nodes)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.nodes_per_axis)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.nodes_per_axis - 1)

    def boundary_mask(self) -> np.ndarray:
        """True for nodes with any coordinate on the box boundary."""
        return (np.abs(self.nodes) >= self.radius - 1e-12).any(axis=1)


@dataclass(frozen=True)
class SimplexFunction:
    """Scalar samples of a function over a SimplexGrid."""

    grid: SimplexGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"values shape {v.shape} does not match grid with {self.grid.n_nodes} nodes"
            )
        if not np.isfinite(v).all():
            raise ValueError("values must be finite")


def convex_conjugate(w: SimplexFunction, p_hat) -> float:
    """w*(p_hat) = max over grid p of <p_hat, p> - w(p)."""
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.shape != (w.grid.m,):
        raise ValueError(f"dual vector must have dimension {w.grid.m}")
    return float((w.grid.nodes @ p_hat - w.values).max())


def concave_conjugate(w: SimplexFunction, q_hat) -> float:
    """w#(q_hat) = min over grid q of <q_hat, q> - w(q)."""
    q_hat = np.asarray(q_hat, dtype=float)
    if q_hat.shape != (w.grid.m,):
        raise ValueError(f"dual vector must have dimension {w.grid.m}")
    return float((w.grid.nodes @ q_hat - w.values).min())


def conjugate_table(w: SimplexFunction, box: DualBox, concave: bool = False) -> np.ndarray:
    """Conjugate values at every dual-box node, vectorised."""
    if box.m != w.grid.m:
        raise ValueError("dual box dimension must match the simplex dimension")
    pairings = box.nodes @ w.grid.nodes.T - w.values[None, :]
    return pairings.min(axis=1) if concave else pairings.max(axis=1)


def estimate_slope_bound(w: SimplexFunction) -> float:
    """Largest |dw| / |dp| over neighbouring grid nodes (edge directions)."""
    grid = w.grid
    index = {tuple(np.round(n * grid.resolution).astype(int)): k for k, n in enumerate(grid.nodes)}
    step = 1.0 / grid.resolution
    worst = 0.0
    for k, node in enumerate(grid.nodes):
        counts = tuple(np.round(node * grid.resolution).astype(int))
        for a, b in itertools.permutations(range(grid.m), 2):
            shifted = list(counts)
            shifted[a] += 1
            shifted[b] -= 1
            other = index.get(tuple(shifted))
            if other is not None:
                worst = max(worst, abs(w.values[other] - w.values[k]) / step)
    return worst


def biconjugate_p(w: SimplexFunction, box: DualBox) -> SimplexFunction:
    """Convex biconjugate p -> max over dual nodes of <p_hat, p> - w*(p_hat).

    Equals the convex envelope of w at grid nodes up to the dual
    resolution; idempotent.  Rejects boxes too small for the attained
    slopes of w.
    """
    slope = estimate_slope_bound(w)
    if slope > box.radius + 1e-12:
        raise DualBoxError(
            f"dual box underscoped: slope estimate {slope:.3g} exceeds radius {box.radius:.3g}"
        )
    star = conjugate_table(w, box, concave=False)
    pairings = w.grid.nodes @ box.nodes.T - star[None, :]
    return SimplexFunction(w.grid, pairings.max(axis=1))


def biconjugate_q(w: SimplexFunction, box: DualBox) -> SimplexFunction:
    """Concave biconjugate via the concave conjugate; mirror of biconjugate_p."""
    slope = estimate_slope_bound(w)
    if slope > box.radius + 1e-12:
        raise DualBoxError(
            f"dual box underscoped: slope estimate {slope:.3g} exceeds radius {box.radius:.3g}"
        )
    sharp = conjugate_table(w, box, concave=True)
    pairings = w.grid.nodes @ box.nodes.T - sharp[None, :]
    return SimplexFunction(w.grid, pairings.min(axis=1))
