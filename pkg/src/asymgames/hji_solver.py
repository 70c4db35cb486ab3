"""Backward monotone finite-difference solution of the dual HJ equation,
and primal recovery by Fenchel conjugation.

Both dual routes march the same scalar equation dV/dt + H*(x, DV) = 0
backward from route-specific terminal data:

  route V: terminal  max_i ( p_hat_i - sum_j q_j g_ij(x) ),    field
           indexed by (t, x, p_hat node, q node);
  route W: terminal  min_j ( q_hat_j - sum_i p_i g_ij(x) ),    field
           indexed by (t, x, q_hat node, p node).

The numerical Hamiltonian is local Lax-Friedrichs with one-sided
differences xi-, xi+ and dissipation sigma = margin * F_max.  In the
backward-in-time orientation the monotone update is

  V[k] = V[k+1] + dt * ( H*(x, (xi- + xi+)/2) + (sigma/2) sum_a (xi+_a - xi-_a) )

(the dissipation sign flips relative to the forward-time convention so
that increasing any neighbour weakly increases the update; the CFL
bound dt <= dx / (2 sigma d) then makes the scheme monotone).
Boundaries use zero-gradient extrapolation; results are certified only
on the box deflated by F_max * (T - t).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import (
    GameSpec,
    NumericsConfig,
    SimplexGrid,
    StateGrid,
    TimePartition,
    dynamics_bound,
    payoff_bound,
)
from .fenchel import DualBox
from .hamiltonian import StarKernel
from .matrix_game import MatrixGame, solve


class SchemeError(RuntimeError):
    pass


class CFLError(SchemeError):
    """Partition step too large for the monotone scheme."""


class NonFiniteError(SchemeError):
    """A sweep produced a non-finite value; carries the first location."""


@dataclass(frozen=True)
class DualField:
    """Dual values on (time knot, state node, dual node, belief node)."""

    route: str  # "V" or "W"
    partition: TimePartition
    grid: StateGrid
    box: DualBox
    belief: SimplexGrid
    values: np.ndarray
    sigma: float
    f_max: float
    g_max: float


@dataclass(frozen=True)
class ValueField:
    """Primal values on (time knot, state node, p node, q node)."""

    partition: TimePartition
    grid: StateGrid
    p_grid: SimplexGrid
    q_grid: SimplexGrid
    values: np.ndarray


def dual_terminal(spec: GameSpec, x, p_hat, q) -> float:
    """Convex conjugate in p of the bilinear terminal data, in closed form.

    The terminal condition is linear in p, so the conjugate is attained
    at a vertex: max_i ( p_hat_i - sum_j q_j g_ij(x) ).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p_hat = np.asarray(p_hat, dtype=float)
    q = np.asarray(q, dtype=float)
    vals = [
        p_hat[i] - sum(q[j] * float(spec.payoff(i, j, x)) for j in range(spec.J))
        for i in range(spec.I)
    ]
    return float(max(vals))


def _payoff_grid(spec: GameSpec, grid: StateGrid) -> np.ndarray:
    """g_ij at every grid node: shape (I, J) + grid.shape."""
    nodes = grid.nodes()
    out = np.empty((spec.I, spec.J) + grid.shape)
    for i in range(spec.I):
        for j in range(spec.J):
            out[i, j] = spec.payoff(i, j, nodes).reshape(grid.shape)
    return out


def _terminal_array(spec, grid, box, belief, route):
    """Terminal dual slice of shape grid.shape + (n_dual, n_belief)."""
    g = _payoff_grid(spec, grid)  # (I, J) + grid.shape
    if route == "V":
        # c[i, b, nodes] = sum_j q_b[j] g_ij ; term = max_i (p_hat_i - c_i)
        c = np.tensordot(belief.nodes, g, axes=([1], [1]))  # (n_belief, I) + grid.shape
        c = np.moveaxis(c, (0, 1), (-1, -2))  # grid.shape + (I, n_belief)
        duals = box.nodes  # (n_dual, I)
        out = (duals.T[:, :, None] - c[..., :, None, :]).max(axis=-3)
        return out
    # route W: c[j, b, nodes] = sum_i p_b[i] g_ij ; term = min_j (q_hat_j - c_j)
    c = np.tensordot(belief.nodes, g, axes=([1], [0]))  # (n_belief, J) + grid.shape
    c = np.moveaxis(c, (0, 1), (-1, -2))  # grid.shape + (J, n_belief)
    duals = box.nodes  # (n_dual, J)
    out = (duals.T[:, :, None] - c[..., :, None, :]).min(axis=-3)
    return out


def _one_sided_differences(v, axis, dx):
    """(backward, forward) differences with zero-gradient ghost nodes."""
    first = np.take(v, [0], axis=axis)
    last = np.take(v, [-1], axis=axis)
    padded = np.concatenate([first, v, last], axis=axis)
    n = v.shape[axis]
    fwd = (np.take(padded, range(2, n + 2), axis=axis) - v) / dx
    bwd = (v - np.take(padded, range(0, n), axis=axis)) / dx
    return bwd, fwd


def lf_step(prev, kernel, sigma, dt, dx, d):
    """One backward Lax-Friedrichs step on a slice grid.shape + extra dims."""
    bwds, fwds = [], []
    for a in range(d):
        bwd, fwd = _one_sided_differences(prev, a, dx[a])
        bwds.append(bwd)
        fwds.append(fwd)
    xi_bar = np.stack([0.5 * (bwds[a] + fwds[a]) for a in range(d)], axis=-1)
    hstar = kernel(xi_bar)
    visc = sum(fwds[a] - bwds[a] for a in range(d))
    return prev + dt * (hstar + 0.5 * sigma * visc)


def check_cfl(num: NumericsConfig, sigma: float, d: int):
    if sigma <= 0.0:
        return
    dx_min = float(num.grid.dx.min())
    dt_max = num.partition.mesh
    limit = dx_min / (2.0 * sigma * d)
    if dt_max > limit * (1.0 + 1e-12):
        raise CFLError(
            f"CFL violation: partition mesh {dt_max:.4g} exceeds dx/(2*sigma*d) = {limit:.4g}"
        )


def _default_box(spec, num, g_max, m):
    radius = num.dual_radius if num.dual_radius is not None else g_max + 1.0
    n = num.dual_nodes if num.dual_nodes is not None else num.simplex_k + 1
    return DualBox(m=m, radius=radius, nodes_per_axis=n)


def _solve_dual(spec: GameSpec, num: NumericsConfig, route: str) -> DualField:
    grid = num.grid
    if grid.d != spec.d:
        raise ValueError("grid dimension does not match the game dimension")
    if spec.d > num.pde_dim_cap:
        raise SchemeError(
            f"dimension budget exceeded: d = {spec.d} > PDE cap {num.pde_dim_cap}"
        )
    f_max = dynamics_bound(spec, grid)
    g_max = payoff_bound(spec, grid)
    sigma = num.sigma_margin * f_max
    check_cfl(num, sigma, spec.d)
    if route == "V":
        box = _default_box(spec, num, g_max, spec.I)
        belief = SimplexGrid(spec.J, num.simplex_k)
    else:
        box = _default_box(spec, num, g_max, spec.J)
        belief = SimplexGrid(spec.I, num.simplex_k)
    kernel = StarKernel(spec, grid.nodes().reshape(grid.shape + (spec.d,)), num.tol_game)
    knots = num.partition.knots
    n_t = knots.size
    values = np.empty((n_t,) + grid.shape + (box.n_nodes, belief.n_nodes))
    values[-1] = _terminal_array(spec, grid, box, belief, route)
    dx = grid.dx
    for k in range(n_t - 2, -1, -1):
        dt = knots[k + 1] - knots[k]
        values[k] = lf_step(values[k + 1], kernel, sigma, dt, dx, spec.d)
        if not np.isfinite(values[k]).all():
            loc = np.argwhere(~np.isfinite(values[k]))[0]
            raise NonFiniteError(f"non-finite value at knot {k}, index {tuple(loc)}")
    return DualField(
        route=route,
        partition=num.partition,
        grid=grid,
        box=box,
        belief=belief,
        values=values,
        sigma=sigma,
        f_max=f_max,
        g_max=g_max,
    )


def solve_dual_V(spec: GameSpec, num: NumericsConfig) -> DualField:
    """March the dual field whose conjugate recovers the lower value V."""
    return _solve_dual(spec, num, "V")


def solve_dual_W(spec: GameSpec, num: NumericsConfig) -> DualField:
    """Mirror of solve_dual_V with the players' roles exchanged."""
    return _solve_dual(spec, num, "W")


def recover_primal(
    dual: DualField,
    route: str | None = None,
    dual_box: DualBox | None = None,
    simplex_k: int | None = None,
    boundary_warn_fraction: float = 0.01,
) -> ValueField:
    """Conjugate the dual field back: V = max_p_hat <p_hat,p> - dual (route V),
    W = min_q_hat <q_hat,q> - dual (route W).

    The output is convex in p (route V) / concave in q (route W) by
    construction.  Warns when the conjugate is attained on the dual box
    boundary at more than `boundary_warn_fraction` of the nodes.
    """
    route = route or dual.route
    if route != dual.route:
        raise ValueError(f"field was built for route {dual.route}, not {route}")
    box = dual_box or dual.box
    k_res = simplex_k or dual.belief.resolution
    n_t = dual.values.shape[0]
    bnd = box.boundary_mask()
    interior = ~bnd
    boundary_hits = 0
    total = 0
    if route == "V":
        p_grid = SimplexGrid(box.m, k_res)
        q_grid = dual.belief
        dot = p_grid.nodes @ box.nodes.T  # (n_p, n_dual)
        out = np.empty((n_t,) + dual.grid.shape + (p_grid.n_nodes, q_grid.n_nodes))
        for k in range(n_t):
            # grid.shape + (n_p, n_dual, n_belief)
            tmp = dot[:, :, None] - dual.values[k][..., None, :, :]
            out[k] = tmp.max(axis=-2)
            if interior.any():
                # strictly better than every interior node, beyond ulp noise
                mx_int = tmp[..., interior, :].max(axis=-2)
                slack = 1e-9 * (1.0 + np.abs(out[k]))
                boundary_hits += int((out[k] > mx_int + slack).sum())
            else:
                boundary_hits += out[k].size
            total += out[k].size
    else:
        q_grid = SimplexGrid(box.m, k_res)
        p_grid = dual.belief
        dot = q_grid.nodes @ box.nodes.T  # (n_q, n_dual)
        out = np.empty((n_t,) + dual.grid.shape + (p_grid.n_nodes, q_grid.n_nodes))
        for k in range(n_t):
            wt = np.moveaxis(dual.values[k], -2, -1)  # grid.shape + (n_p, n_dual)
            tmp = dot[:, :] - wt[..., :, None, :]  # grid.shape + (n_p, n_q, n_dual)
            out[k] = tmp.min(axis=-1)
            if interior.any():
                mn_int = tmp[..., interior].min(axis=-1)
                slack = 1e-9 * (1.0 + np.abs(out[k]))
                boundary_hits += int((out[k] < mn_int - slack).sum())
            else:
                boundary_hits += out[k].size
            total += out[k].size
    if total and boundary_hits / total > boundary_warn_fraction:
        warnings.warn(
            f"enlarge dual box: conjugate attained on the boundary at "
            f"{boundary_hits / total:.1%} of nodes",
            stacklevel=2,
        )
    return ValueField(
        partition=dual.partition,
        grid=dual.grid,
        p_grid=p_grid,
        q_grid=q_grid,
        values=out,
    )


def simplex_line_triples(grid: SimplexGrid):
    """Collinear node triples (k-, k0, k+) along directions e_a - e_b."""
    counts = np.round(grid.nodes * grid.resolution).astype(int)
    index = {tuple(c): k for k, c in enumerate(counts)}
    triples = []
    for k0, c in enumerate(counts):
        for a, b in itertools.combinations(range(grid.m), 2):
            up = list(c)
            up[a] += 1
            up[b] -= 1
            dn = list(c)
            dn[a] -= 1
            dn[b] += 1
            ku, kd = index.get(tuple(up)), index.get(tuple(dn))
            if ku is not None and kd is not None:
                triples.append((kd, k0, ku))
    return triples


@dataclass(frozen=True)
class ConvexityReport:
    """Worst discrete-second-difference violations of the saddle shape."""

    worst_p: float  # positive number = convexity violation in p
    worst_q: float  # positive number = concavity violation in q
    n_p_triples: int
    n_q_triples: int

    def passed(self, tol: float) -> bool:
        return self.worst_p <= tol and self.worst_q <= tol


def convexity_report(vf: ValueField) -> ConvexityReport:
    """Convexity in p and concavity in q along simplex grid lines."""
    v = vf.values  # (n_t,) + grid.shape + (n_p, n_q)
    worst_p, worst_q = 0.0, 0.0
    p_triples = simplex_line_triples(vf.p_grid)
    q_triples = simplex_line_triples(vf.q_grid)
    for kd, k0, ku in p_triples:
        second = v[..., ku, :] + v[..., kd, :] - 2.0 * v[..., k0, :]
        worst_p = max(worst_p, float(-second.min()))
    for kd, k0, ku in q_triples:
        second = v[..., :, ku] + v[..., :, kd] - 2.0 * v[..., :, k0]
        worst_q = max(worst_q, float(second.max()))
    return ConvexityReport(
        worst_p=worst_p,
        worst_q=worst_q,
        n_p_triples=len(p_triples),
        n_q_triples=len(q_triples),
    )


@dataclass(frozen=True)
class AgreementReport:
    """Sup gap between the two recovered primal fields."""

    max_gap: float
    arg_knot: int
    arg_index: tuple
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tol


def check_value_agreement(vf: ValueField, wf: ValueField, tol: float) -> AgreementReport:
    if vf.values.shape != wf.values.shape:
        raise ValueError("value fields must share the same grids")
    diff = np.abs(vf.values - wf.values)
    flat = int(diff.argmax())
    idx = np.unravel_index(flat, diff.shape)
    return AgreementReport(
        max_gap=float(diff.max()), arg_knot=int(idx[0]), arg_index=tuple(idx[1:]), tol=tol
    )


def certified_mask(grid: StateGrid, f_max: float, time_to_go: float) -> np.ndarray:
    """Nodes certified at the given time-to-go (domain of dependence)."""
    nodes = grid.nodes().reshape(grid.shape + (grid.d,))
    margin = f_max * time_to_go
    ok = np.ones(grid.shape, dtype=bool)
    for a in range(grid.d):
        ok &= (nodes[..., a] >= grid.lo[a] + margin - 1e-12) & (
            nodes[..., a] <= grid.hi[a] - margin + 1e-12
        )
    return ok


@dataclass(frozen=True)
class SubDppReport:
    """One-step dynamic-programming residuals of a dual field."""

    max_violation: float
    mean_violation: float
    n_samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def check_subdpp(
    dual: DualField,
    spec: GameSpec,
    partition: TimePartition | None = None,
    n_samples: int = 200,
    seed: int = 0,
    h_ode: float | None = None,
    tol: float | None = None,
) -> SubDppReport:
    """Verify the one-step sub (route V) / super (route W) DPP inequality.

    For sampled (t_k, x, dual node, belief node), the one-step game with
    entries M_uv = dual(t_{k+1}, X one step under (u, v)) is solved
    exactly in mixed strategies; route V requires
    dual(t_k) <= inf_nu sup_mu value, route W the reverse.
    """
    partition = partition or dual.partition
    knots = partition.knots
    grid = dual.grid
    rng = np.random.default_rng(seed)
    h = h_ode if h_ode is not None else partition.mesh / 20.0
    if tol is None:
        tol = 5.0 * (partition.mesh + float(grid.dx.max()))
    axes = grid.axes
    violations = []
    n_t = knots.size
    tries = 0
    while len(violations) < n_samples and tries < 50 * n_samples:
        tries += 1
        k = int(rng.integers(0, n_t - 1))
        mask = certified_mask(grid, dual.f_max, spec.T - knots[k])
        if not mask.any():
            continue
        flat_ok = np.flatnonzero(mask.ravel())
        node_flat = int(flat_ok[rng.integers(0, flat_ok.size)])
        node_idx = np.unravel_index(node_flat, grid.shape)
        x = np.array([axes[a][node_idx[a]] for a in range(grid.d)])
        r = int(rng.integers(0, dual.box.n_nodes))
        b = int(rng.integers(0, dual.belief.n_nodes))
        slice_next = dual.values[(k + 1, *([slice(None)] * grid.d), r, b)]
        interp = RegularGridInterpolator(axes, slice_next, bounds_error=False, fill_value=None)
        m_mat = np.empty((spec.n_u, spec.n_v))
        dt = knots[k + 1] - knots[k]
        for iu in range(spec.n_u):
            for iv in range(spec.n_v):
                y = x.copy()
                steps = max(1, int(np.ceil(dt / h - 1e-12)))
                hh = dt / steps
                for _ in range(steps):
                    k1 = spec.f_field(y, iu, iv)
                    k2 = spec.f_field(y + 0.5 * hh * k1, iu, iv)
                    k3 = spec.f_field(y + 0.5 * hh * k2, iu, iv)
                    k4 = spec.f_field(y + hh * k3, iu, iv)
                    y = y + (hh / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                m_mat[iu, iv] = interp(y)[0]
        # inf over nu, sup over mu: transpose so rows (v) minimise
        step_value = solve(MatrixGame(m_mat.T)).value
        here = dual.values[(k, *node_idx, r, b)]
        if dual.route == "V":
            violations.append(here - step_value)
        else:
            violations.append(step_value - here)
    v = np.array(violations)
    pos = np.clip(v, 0.0, None)
    return SubDppReport(
        max_violation=float(pos.max()) if pos.size else 0.0,
        mean_violation=float(pos.mean()) if pos.size else 0.0,
        n_samples=len(violations),
        tol=tol,
    )
