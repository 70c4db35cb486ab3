"""The partition game played concretely: randomized strategies with
delay, the strategy-vs-strategy control fixpoint, Monte Carlo payoff
estimation, and exact brute-force values of tiny instances.

Strategies are finite decision tables: on each interval a rule maps the
discretized observation history (own and opponent control indices so
far) to a mixed action over the player's control set, realised by
inverse-CDF sampling of that interval's fresh uniform variate.  The
rule for interval l never sees opponent play on [t_{l-1}, t_l) -- the
delay that makes the fixpoint well defined.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import ControlPath, GameSpec, TimePartition, integrate
from .fenchel import SimplexFunction, convex_conjugate
from .matrix_game import MatrixGame, pure_minimax, solve

_M64 = (1 << 64) - 1


class DelayViolationError(RuntimeError):
    """A strategy table read beyond its permitted opponent prefix."""


class BruteForceCapError(RuntimeError):
    """Instance too large for brute force."""


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _M64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _M64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RandomSource:
    """Counter-based uniform variates keyed on (seed, episode, interval, player).

    Streams for the two players are disjoint by construction, and any
    variate can be regenerated independently of evaluation order, so
    estimates are identical under any parallel schedule.
    """

    seed: int
    episode: int = 0

    def uniform(self, player: int, interval: int) -> float:
        h = _mix64((self.seed & _M64) ^ 0x9E3779B97F4A7C15)
        h = _mix64(h ^ (self.episode & _M64))
        h = _mix64(h ^ ((interval & 0xFFFFFFFF) << 8 | (player & 0xFF)))
        return (h >> 11) * (1.0 / (1 << 53))


def sample_index(weights, u: float) -> int:
    """Inverse-CDF draw from a probability vector given one uniform."""
    acc = 0.0
    for k, w in enumerate(weights):
        acc += w
        if u < acc:
            return k
    return len(weights) - 1


@dataclass(frozen=True)
class RandomNADStrategy:
    """Per-interval decision tables over (own, opponent) control histories.

    tables[l] maps (own_hist, opp_hist) -- tuples of control indices of
    length l -- to a mixed action over the player's n_actions controls;
    missing histories fall back to the interval's default action.
    """

    n_actions: int
    n_intervals: int
    defaults: tuple  # per interval: probability vector
    tables: tuple = field(default_factory=tuple)  # per interval: dict

    def __post_init__(self):
        if len(self.defaults) != self.n_intervals:
            raise ValueError("need one default mixed action per interval")
        tables = self.tables or tuple({} for _ in range(self.n_intervals))
        object.__setattr__(self, "tables", tuple(tables))
        if len(self.tables) != self.n_intervals:
            raise ValueError("need one table per interval")

    def action_probs(self, interval: int, own_hist, opp_hist):
        own_hist, opp_hist = tuple(own_hist), tuple(opp_hist)
        if len(own_hist) != interval or len(opp_hist) != interval:
            raise DelayViolationError(
                f"delay violation: interval {interval} rule fed history of length "
                f"({len(own_hist)}, {len(opp_hist)})"
            )
        probs = self.tables[interval].get((own_hist, opp_hist), self.defaults[interval])
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (self.n_actions,) or probs.min() < -1e-12 or abs(probs.sum() - 1) > 1e-9:
            raise ValueError(f"bad mixed action for interval {interval}: {probs}")
        return probs

    def act(self, interval: int, own_hist, opp_hist, variate: float) -> int:
        return sample_index(self.action_probs(interval, own_hist, opp_hist), variate)


def constant_strategy(n_actions: int, n_intervals: int, idx: int) -> RandomNADStrategy:
    probs = np.zeros(n_actions)
    probs[idx] = 1.0
    return RandomNADStrategy(n_actions, n_intervals, (tuple(probs),) * n_intervals)


def mixed_strategy(n_actions: int, n_intervals: int, probs) -> RandomNADStrategy:
    """Same mixed action on every interval, independent of observations."""
    probs = tuple(np.asarray(probs, dtype=float))
    return RandomNADStrategy(n_actions, n_intervals, (probs,) * n_intervals)


def echo_strategy(n_actions: int, n_intervals: int, first_idx: int) -> RandomNADStrategy:
    """Play first_idx, then repeat the opponent's previous-interval control."""
    defaults = []
    tables = []
    for l in range(n_intervals):
        base = np.zeros(n_actions)
        base[first_idx] = 1.0
        defaults.append(tuple(base))
        table = {}
        if l > 0:
            for own in itertools.product(range(n_actions), repeat=l):
                for opp in itertools.product(range(n_actions), repeat=l):
                    probs = np.zeros(n_actions)
                    probs[opp[-1]] = 1.0
                    table[(own, opp)] = tuple(probs)
        tables.append(table)
    return RandomNADStrategy(n_actions, n_intervals, tuple(defaults), tuple(tables))


@dataclass(frozen=True)
class StrategyProfile:
    """One strategy per type for each player."""

    alpha_per_type: tuple  # I strategies over U
    beta_per_type: tuple  # J strategies over V

    def __post_init__(self):
        object.__setattr__(self, "alpha_per_type", tuple(self.alpha_per_type))
        object.__setattr__(self, "beta_per_type", tuple(self.beta_per_type))
        if not self.alpha_per_type or not self.beta_per_type:
            raise ValueError("profile needs at least one strategy per player")


def resolve_controls(
    alpha: RandomNADStrategy,
    beta: RandomNADStrategy,
    omega: RandomSource,
    partition: TimePartition,
) -> tuple:
    """The unique control pair fixed by the pair of delayed strategies.

    Interval by interval: rules for interval l read only prefixes of
    length l, all fixed by earlier iterations, so the pair is
    determined with no iteration-to-convergence needed.
    """
    n = partition.n_steps
    if alpha.n_intervals != n or beta.n_intervals != n:
        raise ValueError("strategies and partition disagree on interval count")
    u_path, v_path = [], []
    for l in range(n):
        u_l = alpha.act(l, tuple(u_path), tuple(v_path), omega.uniform(1, l + 1))
        v_l = beta.act(l, tuple(v_path), tuple(u_path), omega.uniform(2, l + 1))
        u_path.append(u_l)
        v_path.append(v_l)
    return tuple(u_path), tuple(v_path)


def payoff_mc(
    spec: GameSpec,
    profile: StrategyProfile,
    t: float,
    x,
    p,
    q,
    n_samples: int,
    seed: int = 0,
    h_ode: float | None = None,
    partition: TimePartition | None = None,
) -> tuple:
    """Monte Carlo estimate of the expected payoff under p (x) q types.

    Types and control randomisations are drawn per episode from the
    counter-based source; episodes are summed in index order, so the
    estimate is reproducible bit-for-bit for a given seed.
    """
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    if len(profile.alpha_per_type) != spec.I or len(profile.beta_per_type) != spec.J:
        raise ValueError("profile type counts must match the spec")
    part = partition or TimePartition.uniform(profile.alpha_per_type[0].n_intervals, spec.T)
    h = h_ode if h_ode is not None else part.mesh / 20.0
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    payoffs = np.empty(n_samples)
    for ep in range(n_samples):
        rs = RandomSource(seed, ep)
        i = sample_index(p, rs.uniform(1, 0))
        j = sample_index(q, rs.uniform(2, 0))
        u_path, v_path = resolve_controls(
            profile.alpha_per_type[i], profile.beta_per_type[j], rs, part
        )
        xT = integrate(spec, t, x, ControlPath(part, u_path, v_path), spec.T, h)
        payoffs[ep] = spec.payoff(i, j, xT)
    est = float(payoffs.mean())
    stderr = float(payoffs.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return est, stderr


def _terminal_states(spec, t, x, h_ode):
    """X_T under every constant control pair; shape (n_u, n_v, d)."""
    part = TimePartition.uniform(1, spec.T)
    out = np.empty((spec.n_u, spec.n_v, spec.d))
    for iu in range(spec.n_u):
        for iv in range(spec.n_v):
            out[iu, iv] = integrate(spec, t, x, ControlPath(part, (iu,), (iv,)), spec.T, h_ode)
    return out


@dataclass(frozen=True)
class OneStageValue:
    """Exact one-stage value with the optimal (possibly revealing) mixes."""

    value: float
    u_profiles: tuple  # all (u_1..u_I) assignments, row order
    v_profiles: tuple  # all (v_1..v_J) assignments, column order
    row_mix: np.ndarray
    col_mix: np.ndarray
    certificate_gap: float
    pure_infsup: float
    pure_supinf: float


def one_stage_value(
    spec: GameSpec,
    x,
    p,
    q,
    t: float = 0.0,
    h_ode: float | None = None,
    profile_cap: int = 4096,
) -> OneStageValue:
    """Exact value of the single-interval game with private types.

    Pure strategies are type-indexed control assignments; the payoff of
    ((u_i), (v_j)) is sum_ij p_i q_j g_ij(X_T^{u_i,v_j}); the mixed
    value comes from one matrix-game solve over those profiles.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n_rows = spec.n_u**spec.I
    n_cols = spec.n_v**spec.J
    if n_rows * n_cols > profile_cap:
        raise BruteForceCapError(
            f"instance too large for brute force: {n_rows} x {n_cols} profiles"
        )
    h = h_ode if h_ode is not None else spec.T / 40.0
    xT = _terminal_states(spec, t, x, h)
    gv = np.empty((spec.I, spec.J, spec.n_u, spec.n_v))
    for i in range(spec.I):
        for j in range(spec.J):
            gv[i, j] = spec.payoff(i, j, xT)
    u_profiles = tuple(itertools.product(range(spec.n_u), repeat=spec.I))
    v_profiles = tuple(itertools.product(range(spec.n_v), repeat=spec.J))
    mat = np.empty((n_rows, n_cols))
    for r, up in enumerate(u_profiles):
        for c, vp in enumerate(v_profiles):
            mat[r, c] = sum(
                p[i] * q[j] * gv[i, j, up[i], vp[j]]
                for i in range(spec.I)
                for j in range(spec.J)
            )
    game = MatrixGame(mat)
    saddle = solve(game)
    infsup, supinf = pure_minimax(game)
    return OneStageValue(
        value=saddle.value,
        u_profiles=u_profiles,
        v_profiles=v_profiles,
        row_mix=saddle.row_mix.weights,
        col_mix=saddle.col_mix.weights,
        certificate_gap=saddle.certificate_gap,
        pure_infsup=infsup,
        pure_supinf=supinf,
    )


@dataclass(frozen=True)
class ReformulationReport:
    """Gap between the conjugated one-stage value and its inf-sup form."""

    lhs: float  # convex conjugate of the one-stage value over the p grid
    rhs: float  # inf over mixed (beta_j) families, sup over pure u, max over i
    gap: float
    p_resolution: int
    response_resolution: int


def check_dual_reformulation(
    spec: GameSpec,
    x,
    p_hat,
    q,
    t: float = 0.0,
    p_resolution: int = 64,
    response_resolution: int = 200,
    h_ode: float | None = None,
    profile_cap: int = 4096,
) -> ReformulationReport:
    """One-stage check of the inf-sup reformulation of the dual value.

    LHS: conjugate of p -> one_stage_value(x, p, q) over a p grid.
    RHS: min over per-type mixed responses (nu_j) on a grid, of
    max over pure u and over i of p_hat_i - sum_j q_j E[g_ij(X_T^{u,nu_j})].
    Both sides converge to the same number as the grids refine, LHS
    from below and RHS from above.
    """
    from .core import SimplexGrid

    p_hat = np.asarray(p_hat, dtype=float)
    q = np.asarray(q, dtype=float)
    if spec.n_v**spec.J > profile_cap:
        raise BruteForceCapError("instance too large for brute force")
    h = h_ode if h_ode is not None else spec.T / 40.0
    p_grid = SimplexGrid(spec.I, p_resolution)
    vals = np.array(
        [one_stage_value(spec, x, pnode, q, t, h, profile_cap).value for pnode in p_grid.nodes]
    )
    lhs = convex_conjugate(SimplexFunction(p_grid, vals), p_hat)

    xT = _terminal_states(spec, t, x, h)
    gv = np.empty((spec.I, spec.J, spec.n_u, spec.n_v))
    for i in range(spec.I):
        for j in range(spec.J):
            gv[i, j] = spec.payoff(i, j, xT)
    nu_grid = SimplexGrid(spec.n_v, response_resolution).nodes
    best = np.inf
    for nu_combo in itertools.product(range(nu_grid.shape[0]), repeat=spec.J):
        # E[g_ij] under nu_j, for each pure u: shape (I, J, n_u)
        worst = -np.inf
        for iu in range(spec.n_u):
            for i in range(spec.I):
                expected = sum(
                    q[j] * float(gv[i, j, iu] @ nu_grid[nu_combo[j]]) for j in range(spec.J)
                )
                worst = max(worst, p_hat[i] - expected)
        best = min(best, worst)
    return ReformulationReport(
        lhs=lhs,
        rhs=float(best),
        gap=float(best - lhs),
        p_resolution=p_resolution,
        response_resolution=response_resolution,
    )


@dataclass(frozen=True)
class ConvexityProbe:
    """Midpoint convexity/concavity of the one-stage value in (p, q)."""

    worst_p_violation: float  # positive = convexity in p violated
    worst_q_violation: float  # positive = concavity in q violated
    n_checks: int


def convexity_probe(
    spec: GameSpec,
    x,
    q,
    p_resolution: int = 10,
    t: float = 0.0,
    h_ode: float | None = None,
    profile_cap: int = 4096,
) -> ConvexityProbe:
    """Probe Lemma-style convexity in p (at fixed q) and concavity in q."""
    from .core import SimplexGrid
    from .hji_solver import simplex_line_triples

    q = np.asarray(q, dtype=float)
    h = h_ode if h_ode is not None else spec.T / 40.0
    p_grid = SimplexGrid(spec.I, p_resolution)
    vals_p = np.array(
        [one_stage_value(spec, x, pn, q, t, h, profile_cap).value for pn in p_grid.nodes]
    )
    worst_p = 0.0
    checks = 0
    for kd, k0, ku in simplex_line_triples(p_grid):
        second = vals_p[ku] + vals_p[kd] - 2.0 * vals_p[k0]
        worst_p = max(worst_p, -second)
        checks += 1
    q_grid = SimplexGrid(spec.J, p_resolution)
    p_mid = np.full(spec.I, 1.0 / spec.I)
    vals_q = np.array(
        [one_stage_value(spec, x, p_mid, qn, t, h, profile_cap).value for qn in q_grid.nodes]
    )
    worst_q = 0.0
    for kd, k0, ku in simplex_line_triples(q_grid):
        second = vals_q[ku] + vals_q[kd] - 2.0 * vals_q[k0]
        worst_q = max(worst_q, second)
        checks += 1
    return ConvexityProbe(
        worst_p_violation=float(worst_p), worst_q_violation=float(worst_q), n_checks=checks
    )
