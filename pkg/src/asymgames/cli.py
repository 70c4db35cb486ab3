"""Configuration ingestion, run orchestration, and plot-ready exports.

Subcommands: solve | converge | game | hamiltonian | conjugate.
Config files are JSON (one key tree: game / numerics / output); payoff
and dynamics entries are expression strings over x1..xd, u1.., v1..
CSV exports print floats with 17 significant digits and round-trip
exactly; reruns with the same config and seed are byte-identical.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 budget
exceeded.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blowup import DimensionBudgetError, ScenarioSpec, blow_up, stacked_initial_state
from .core import (
    ControlPath,
    GameSpec,
    IntegrationBudgetError,
    NumericsConfig,
    SimplexGrid,
    StateGrid,
    TimePartition,
    dynamics_bound,
    integrate,
    payoff_bound,
)
from .discrete_game import (
    BruteForceCapError,
    RandomNADStrategy,
    StrategyProfile,
    one_stage_value,
    payoff_mc,
)
from .expr import ExpressionError, compile_dynamics, compile_payoff
from .fenchel import DualBoxError
from .hamiltonian import MixedHamiltonian
from .hji_solver import (
    DualField,
    SchemeError,
    ValueField,
    check_value_agreement,
    convexity_report,
    recover_primal,
    solve_dual_V,
    solve_dual_W,
)
from .matrix_game import IllConditionedGameError


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing


def _point_coords(raw, label):
    pts = []
    for entry in raw:
        if isinstance(entry, (int, float)):
            pts.append((float(entry),))
        elif isinstance(entry, list) and all(isinstance(v, (int, float)) for v in entry):
            pts.append(tuple(float(v) for v in entry))
        else:
            raise ConfigError(f"{label}: control points must be numbers or number lists")
    dims = {len(p) for p in pts}
    if len(dims) != 1:
        raise ConfigError(f"{label}: control points must share one coordinate dimension")
    return pts


@dataclass
class RunConfig:
    spec: GameSpec
    scenario: ScenarioSpec | None
    x0: np.ndarray | None
    numerics: NumericsConfig
    out_dir: Path
    formats: tuple
    raw: dict


def _build_plain_game(section) -> GameSpec:
    d = int(section.get("dim", 1))
    horizon = float(section.get("horizon", 1.0))
    u_pts = _point_coords(section.get("u_points", []), "game.u_points")
    v_pts = _point_coords(section.get("v_points", []), "game.v_points")
    dyn = section.get("dynamics")
    if not isinstance(dyn, list) or len(dyn) != d:
        raise ConfigError(f"game.dynamics: need {d} expression(s)")
    f_expr = compile_dynamics(dyn, d, len(u_pts[0]), len(v_pts[0]))

    def f(x, iu, iv):
        return f_expr(x, u_pts[iu], v_pts[iv])

    payoffs = section.get("payoffs")
    if not isinstance(payoffs, list) or not payoffs:
        raise ConfigError("game.payoffs: need a nonempty I x J table of expressions")
    g = tuple(tuple(compile_payoff(src, d) for src in row) for row in payoffs)
    return GameSpec(d=d, T=horizon, u_points=u_pts, v_points=v_pts, f=f, g=g)


def _build_scenario(section) -> tuple:
    sc_raw = section["scenario"]
    d = int(section.get("dim", 1))
    horizon = float(section.get("horizon", 1.0))
    u_pts = _point_coords(section.get("u_points", []), "game.u_points")
    v_pts = _point_coords(section.get("v_points", []), "game.v_points")
    dyn_tab = sc_raw.get("dynamics")
    x0_tab = sc_raw.get("x0")
    pay_tab = sc_raw.get("payoffs")
    if not (isinstance(dyn_tab, list) and isinstance(x0_tab, list) and isinstance(pay_tab, list)):
        raise ConfigError("game.scenario: needs dynamics, x0 and payoffs tables")

    def compile_cell(srcs):
        expr = compile_dynamics(srcs, d, len(u_pts[0]), len(v_pts[0]))

        def f(x, iu, iv, _expr=expr):
            return _expr(x, u_pts[iu], v_pts[iv])

        return f

    try:
        f_table = tuple(tuple(compile_cell(cell) for cell in row) for row in dyn_tab)
        g_table = tuple(tuple(compile_payoff(src, d) for src in row) for row in pay_tab)
    except (TypeError, ExpressionError) as exc:
        raise ConfigError(f"game.scenario: {exc}") from exc
    sc = ScenarioSpec(
        d=d,
        T=horizon,
        u_points=u_pts,
        v_points=v_pts,
        f_table=f_table,
        x0_table=tuple(tuple(cell for cell in row) for row in x0_tab),
        g_table=g_table,
    )
    return sc


def _build_numerics(section, d) -> NumericsConfig:
    dom = section.get("domain")
    if not isinstance(dom, dict) or "lo" not in dom or "hi" not in dom:
        raise ConfigError("numerics.domain: need lo and hi")
    lo = np.atleast_1d(np.asarray(dom["lo"], dtype=float))
    hi = np.atleast_1d(np.asarray(dom["hi"], dtype=float))
    if lo.size == 1 and d > 1:
        lo = np.full(d, lo[0])
        hi = np.full(d, hi[0])
    nodes = section.get("nodes_per_axis", 51)
    n_per_axis = tuple(int(v) for v in (nodes if isinstance(nodes, list) else [nodes] * d))
    try:
        grid = StateGrid(lo, hi, n_per_axis)
    except ValueError as exc:
        raise ConfigError(f"numerics.domain: {exc}") from exc
    if "knots" in section:
        partition = TimePartition(np.asarray(section["knots"], dtype=float))
    else:
        partition = TimePartition.uniform(
            int(section.get("partition_steps", 20)), float(section["horizon"])
        )
    return NumericsConfig(
        grid=grid,
        partition=partition,
        simplex_k=int(section.get("simplex_resolution", 16)),
        dual_radius=section.get("dual_radius"),
        dual_nodes=section.get("dual_nodes"),
        sigma_margin=float(section.get("sigma_margin", 1.05)),
        tol_game=float(section.get("tol_game", 1e-9)),
        tol_convexity=float(section.get("tol_convexity", 1e-8)),
        h_ode=section.get("ode_step"),
        seed=int(section.get("seed", 0)),
        pde_dim_cap=int(section.get("pde_dim_cap", 3)),
    )


def _check_truncation(spec: GameSpec, num: NumericsConfig, section):
    """The domain must contain the region of interest inflated by F_max*T."""
    f_max = dynamics_bound(spec, num.grid)
    margin = f_max * spec.T
    interest = section.get("interest")
    if interest is not None:
        ilo = np.atleast_1d(np.asarray(interest["lo"], dtype=float))
        ihi = np.atleast_1d(np.asarray(interest["hi"], dtype=float))
        if np.any(num.grid.lo > ilo - margin) or np.any(num.grid.hi < ihi + margin):
            raise ConfigError(
                f"numerics.domain: must contain the interest box inflated by "
                f"F_max*T = {margin:.4g} per side"
            )
    elif np.any(num.grid.lo + margin >= num.grid.hi - margin):
        raise ConfigError(
            f"numerics.domain: box too small, nothing remains after deflating by "
            f"F_max*T = {margin:.4g} per side"
        )


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return build_config(raw)


def build_config(raw: dict) -> RunConfig:
    if "game" not in raw or "numerics" not in raw:
        raise ConfigError("config needs game and numerics sections")
    game = raw["game"]
    scenario = None
    x0 = None
    try:
        if "scenario" in game:
            scenario = _build_scenario(game)
            spec = blow_up(scenario)
            x0 = stacked_initial_state(scenario)
        else:
            spec = _build_plain_game(game)
            if "x0" in game:
                x0 = np.atleast_1d(np.asarray(game["x0"], dtype=float))
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from exc
    num_section = dict(raw["numerics"])
    num_section.setdefault("horizon", game.get("horizon", 1.0))
    num = _build_numerics(num_section, spec.d)
    _check_truncation(spec, num, num_section)
    out = raw.get("output", {})
    return RunConfig(
        spec=spec,
        scenario=scenario,
        x0=x0,
        numerics=num,
        out_dir=Path(out.get("dir", "out")),
        formats=tuple(out.get("formats", ["csv", "json"])),
        raw=raw,
    )


# ---------------------------------------------------------------------------
# exports


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def value_field_csv(vf: ValueField) -> str:
    d = vf.grid.d
    n_p, n_q = vf.p_grid.n_nodes, vf.q_grid.n_nodes
    header = (
        ["t"]
        + [f"x{a + 1}" for a in range(d)]
        + [f"p{i + 1}" for i in range(vf.p_grid.m)]
        + [f"q{j + 1}" for j in range(vf.q_grid.m)]
        + ["value"]
    )
    lines = [",".join(header)]
    nodes = vf.grid.nodes()
    flat = vf.values.reshape(vf.values.shape[0], nodes.shape[0], n_p, n_q)
    for k, t in enumerate(vf.partition.knots):
        for nidx in range(nodes.shape[0]):
            for ip in range(n_p):
                for iq in range(n_q):
                    row = (
                        [_fmt(t)]
                        + [_fmt(c) for c in nodes[nidx]]
                        + [_fmt(c) for c in vf.p_grid.nodes[ip]]
                        + [_fmt(c) for c in vf.q_grid.nodes[iq]]
                        + [_fmt(flat[k, nidx, ip, iq])]
                    )
                    lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def dual_field_csv(df: DualField, knot_indices=None) -> str:
    d = df.grid.d
    dual_names = (
        [f"ph{i + 1}" for i in range(df.box.m)]
        if df.route == "V"
        else [f"qh{j + 1}" for j in range(df.box.m)]
    )
    belief_names = (
        [f"q{j + 1}" for j in range(df.belief.m)]
        if df.route == "V"
        else [f"p{i + 1}" for i in range(df.belief.m)]
    )
    header = ["t"] + [f"x{a + 1}" for a in range(d)] + dual_names + belief_names + ["value"]
    lines = [",".join(header)]
    nodes = df.grid.nodes()
    knot_indices = (
        range(df.partition.knots.size) if knot_indices is None else list(knot_indices)
    )
    flat = df.values.reshape(df.values.shape[0], nodes.shape[0], df.box.n_nodes, df.belief.n_nodes)
    for k in knot_indices:
        t = df.partition.knots[k]
        for nidx in range(nodes.shape[0]):
            for r in range(df.box.n_nodes):
                for b in range(df.belief.n_nodes):
                    row = (
                        [_fmt(t)]
                        + [_fmt(c) for c in nodes[nidx]]
                        + [_fmt(c) for c in df.box.nodes[r]]
                        + [_fmt(c) for c in df.belief.nodes[b]]
                        + [_fmt(flat[k, nidx, r, b])]
                    )
                    lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def read_field_csv(path):
    """Parse an exported field back into a header list and a float array."""
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return header, data


def _write(out_dir: Path, name: str, content: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(content)
    return path


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommand drivers


def run_solve(config: RunConfig, write_files: bool = True) -> dict:
    """Both dual routes, both primal recoveries, agreement + shape report."""
    spec, num = config.spec, config.numerics
    t0 = time.monotonic()
    dual_v = solve_dual_V(spec, num)
    dual_w = solve_dual_W(spec, num)
    vf = recover_primal(dual_v)
    wf = recover_primal(dual_w)
    dx = float(num.grid.dx.max())
    dt = num.partition.mesh
    tol = 5.0 * (dx + dt + 1.0 / num.simplex_k)
    agreement = check_value_agreement(vf, wf, tol)
    shape_v = convexity_report(vf)
    shape_w = convexity_report(wf)
    elapsed = time.monotonic() - t0
    summary = {
        "max_gap_V_W": agreement.max_gap,
        "agreement_tol": tol,
        "agreement_passed": bool(agreement.passed),
        "convexity_violation_V_p": shape_v.worst_p,
        "concavity_violation_V_q": shape_v.worst_q,
        "convexity_violation_W_p": shape_w.worst_p,
        "concavity_violation_W_q": shape_w.worst_q,
        "sigma": dual_v.sigma,
        "f_max": dual_v.f_max,
        "g_max": dual_v.g_max,
        "dx": dx,
        "dt": dt,
        "simplex_resolution": num.simplex_k,
        "runtime_seconds": round(elapsed, 3),
    }
    artifacts = {"value_V": vf, "value_W": wf, "dual_V": dual_v, "dual_W": dual_w,
                 "summary": summary}
    if write_files:
        out = config.out_dir
        if "csv" in config.formats:
            _write(out, "value_V.csv", value_field_csv(vf))
            _write(out, "value_W.csv", value_field_csv(wf))
            last = num.partition.knots.size - 1
            _write(out, "dual_V.csv", dual_field_csv(dual_v, [0, last]))
            _write(out, "dual_W.csv", dual_field_csv(dual_w, [0, last]))
        _write(out, "summary.json", _json_dump(summary))
    return artifacts


def _coarsen_maps(k_coarse, k_fine, m):
    """Indices of fine simplex nodes matching each coarse node (K doubled)."""
    fine = SimplexGrid(m, k_fine)
    coarse = SimplexGrid(m, k_coarse)
    index = {
        tuple(np.round(n * k_fine).astype(int)): i for i, n in enumerate(fine.nodes)
    }
    ratio = k_fine // k_coarse
    return [index[tuple(np.round(n * k_coarse).astype(int) * ratio)] for n in coarse.nodes]


def run_converge(config: RunConfig, levels: int, write_files: bool = True,
                 time_budget: float | None = None) -> dict:
    """Rerun solve with (dt, dx, 1/K) halved per level; tabulate sup diffs."""
    if levels < 2:
        raise ConfigError("converge needs at least 2 levels")
    spec = config.spec
    base = config.numerics
    rows = []
    fields = []
    flagged = False
    t_start = time.monotonic()
    for lvl in range(levels):
        scale = 2**lvl
        grid = StateGrid(
            base.grid.lo,
            base.grid.hi,
            tuple((n - 1) * scale + 1 for n in base.grid.n_per_axis),
        )
        num = NumericsConfig(
            grid=grid,
            partition=TimePartition.uniform(base.partition.n_steps * scale, spec.T),
            simplex_k=base.simplex_k * scale,
            dual_radius=base.dual_radius,
            dual_nodes=None,
            sigma_margin=base.sigma_margin,
            tol_game=base.tol_game,
            tol_convexity=base.tol_convexity,
            seed=base.seed,
            pde_dim_cap=base.pde_dim_cap,
        )
        t0 = time.monotonic()
        dual = solve_dual_V(spec, num)
        vf = recover_primal(dual)
        wf = recover_primal(solve_dual_W(spec, num))
        gap = check_value_agreement(vf, wf, np.inf).max_gap
        fields.append(vf)
        rows.append(
            {
                "level": lvl,
                "dx": float(grid.dx.max()),
                "dt": num.partition.mesh,
                "K": num.simplex_k,
                "gap_V_W": gap,
                "runtime_seconds": round(time.monotonic() - t0, 3),
            }
        )
        if time_budget is not None and time.monotonic() - t_start > time_budget:
            flagged = lvl + 1 < levels
            break
    diffs = []
    for lvl in range(1, len(fields)):
        coarse, fine = fields[lvl - 1], fields[lvl]
        scale = 2
        t_idx = np.arange(coarse.values.shape[0]) * scale
        x_idx = [np.arange(n) * scale for n in coarse.grid.n_per_axis]
        p_map = _coarsen_maps(coarse.p_grid.resolution, fine.p_grid.resolution, coarse.p_grid.m)
        q_map = _coarsen_maps(coarse.q_grid.resolution, fine.q_grid.resolution, coarse.q_grid.m)
        sub = fine.values[np.ix_(t_idx, *x_idx, p_map, q_map)]
        diffs.append(float(np.abs(sub - coarse.values).max()))
        rows[lvl]["sup_diff_to_previous"] = diffs[-1]
    orders = [
        float(np.log2(diffs[i] / diffs[i + 1]))
        for i in range(len(diffs) - 1)
        if diffs[i + 1] > 0
    ]
    report = {
        "levels": rows,
        "decreasing": bool(all(diffs[i + 1] < diffs[i] for i in range(len(diffs) - 1))),
        "empirical_orders": orders,
        "partial": flagged,
    }
    if write_files:
        lines = ["level,dx,dt,K,gap_V_W,sup_diff_to_previous"]
        for r in rows:
            lines.append(
                ",".join(
                    [
                        str(r["level"]),
                        _fmt(r["dx"]),
                        _fmt(r["dt"]),
                        str(r["K"]),
                        _fmt(r["gap_V_W"]),
                        _fmt(r.get("sup_diff_to_previous", np.nan)),
                    ]
                )
            )
        _write(config.out_dir, "converge.csv", "\n".join(lines) + "\n")
        _write(config.out_dir, "converge.json", _json_dump(report))
    return report


def _strategy_from_json(raw, n_actions, n_intervals) -> RandomNADStrategy:
    defaults = tuple(tuple(float(v) for v in row) for row in raw["defaults"])
    tables = [dict() for _ in range(n_intervals)]
    for case in raw.get("cases", []):
        l = int(case["interval"])
        key = (tuple(int(v) for v in case["own"]), tuple(int(v) for v in case["opp"]))
        tables[l][key] = tuple(float(v) for v in case["probs"])
    return RandomNADStrategy(n_actions, n_intervals, defaults, tuple(tables))


def _pure_tables(n_actions, n_opp, n_intervals):
    """All deterministic response tables for the given sizes (n_intervals <= 2)."""
    if n_intervals == 1:
        for a in range(n_actions):
            yield (a, None)
    else:
        for a0 in range(n_actions):
            for resp in itertools.product(range(n_actions), repeat=n_opp):
                yield (a0, resp)


def _expected_payoffs_vs_pure(spec, beta, table, i, t, x, part, h_ode):
    """E[g_ij] for all j when type-i player 1 uses a pure 1- or 2-interval table."""
    n = part.n_steps
    a0, resp = table
    out = np.zeros(spec.J)
    for j in range(spec.J):
        bj = beta[j]
        # enumerate v paths with probabilities (player 2 randomises per interval)
        stack = [((), (), 1.0)]
        total = 0.0
        for l in range(n):
            new_stack = []
            for u_hist, v_hist, prob in stack:
                u_l = a0 if l == 0 else resp[v_hist[0]]
                probs = bj.action_probs(l, v_hist, u_hist)
                for v_l, pv in enumerate(probs):
                    if pv > 0:
                        new_stack.append((u_hist + (u_l,), v_hist + (v_l,), prob * pv))
            stack = new_stack
        for u_hist, v_hist, prob in stack:
            xT = integrate(spec, t, x, ControlPath(part, u_hist, v_hist), spec.T, h_ode)
            total_ij = float(spec.payoff(i, j, xT))
            out[j] += prob * total_ij
    return out


def run_game(config: RunConfig, strategy_path, n_samples: int, seed: int | None = None,
             write_files: bool = True) -> dict:
    """Monte Carlo payoff of a strategy profile, with optional certificates."""
    spec = config.spec
    raw = json.loads(Path(strategy_path).read_text())
    n_steps = int(raw.get("partition_steps", 1))
    part = TimePartition.uniform(n_steps, spec.T)
    try:
        alpha = tuple(
            _strategy_from_json(s, spec.n_u, n_steps) for s in raw["alpha"]
        )
        beta = tuple(_strategy_from_json(s, spec.n_v, n_steps) for s in raw["beta"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"strategy file: {exc}") from exc
    if len(alpha) != spec.I or len(beta) != spec.J:
        raise ConfigError(
            f"strategy/partition mismatch: profile has ({len(alpha)}, {len(beta)}) "
            f"strategies for an ({spec.I}, {spec.J})-type game"
        )
    profile = StrategyProfile(alpha, beta)
    x0 = np.asarray(raw.get("x0", config.x0 if config.x0 is not None else np.zeros(spec.d)),
                    dtype=float)
    p = np.asarray(raw.get("p", [1.0 / spec.I] * spec.I), dtype=float)
    q = np.asarray(raw.get("q", [1.0 / spec.J] * spec.J), dtype=float)
    t = float(raw.get("t", 0.0))
    mc_seed = config.numerics.seed if seed is None else seed
    est, stderr = payoff_mc(spec, profile, t, x0, p, q, n_samples, mc_seed,
                            partition=part)
    report = {
        "estimate": est,
        "stderr": stderr,
        "n_samples": n_samples,
        "seed": mc_seed,
        "t": t,
        "p": list(map(float, p)),
        "q": list(map(float, q)),
    }
    # best-response certificate for the maximiser's profile (pure tables)
    if n_steps <= 2 and spec.n_u ** (1 + (spec.n_v if n_steps == 2 else 0)) <= 512:
        h = part.mesh / 20.0
        br_total = 0.0
        for i in range(spec.I):
            best = np.inf
            for table in _pure_tables(spec.n_u, spec.n_v, n_steps):
                expected = _expected_payoffs_vs_pure(spec, beta, table, i, t, x0, part, h)
                best = min(best, float(q @ expected))
            br_total += p[i] * best
        report["best_response_value"] = br_total
        report["one_sided_gap"] = est - br_total
        if n_steps == 1 and spec.n_u**spec.I * spec.n_v**spec.J <= config.numerics.profile_cap:
            exact = one_stage_value(spec, x0, p, q, t)
            report["one_stage_exact_value"] = exact.value
            report["gap_to_exact"] = est - exact.value
    if write_files:
        _write(config.out_dir, "game.json", _json_dump(report))
    return report


def run_hamiltonian(config: RunConfig, n_samples: int = 100, write_files: bool = True) -> dict:
    """Sampled Hamiltonian probe: H, H*, and the pure-control (Isaacs) gap."""
    spec = config.spec
    num = config.numerics
    rng = np.random.default_rng(num.seed)
    ham = MixedHamiltonian(spec, num.tol_game)
    lines = [
        ",".join(
            [f"x{a + 1}" for a in range(spec.d)]
            + [f"xi{a + 1}" for a in range(spec.d)]
            + ["H", "H_star", "isaacs_gap", "duality_residual"]
        )
    ]
    max_gap = 0.0
    max_residual = 0.0
    for _ in range(n_samples):
        x = num.grid.lo + rng.uniform(size=spec.d) * (num.grid.hi - num.grid.lo)
        xi = rng.normal(size=spec.d)
        h = ham.eval_H(x, xi)
        hs = ham.eval_H_star(x, xi)
        residual = abs(hs.value + ham.eval_H(x, -xi).value)
        max_gap = max(max_gap, h.isaacs_gap)
        max_residual = max(max_residual, residual)
        lines.append(
            ",".join(
                [_fmt(v) for v in x]
                + [_fmt(v) for v in xi]
                + [_fmt(h.value), _fmt(hs.value), _fmt(h.isaacs_gap), _fmt(residual)]
            )
        )
    summary = {
        "n_samples": n_samples,
        "max_isaacs_gap": max_gap,
        "max_duality_residual": max_residual,
    }
    if write_files:
        _write(config.out_dir, "hamiltonian.csv", "\n".join(lines) + "\n")
        _write(config.out_dir, "hamiltonian.json", _json_dump(summary))
    return summary


def run_conjugate(config: RunConfig, write_files: bool = True) -> dict:
    """Terminal-data conjugation demo: conjugate, biconjugate, round-trip."""
    from .hji_solver import _terminal_array
    from .fenchel import DualBox

    spec, num = config.spec, config.numerics
    g_max = payoff_bound(spec, num.grid)
    radius = num.dual_radius if num.dual_radius is not None else g_max + 1.0
    box = DualBox(spec.I, radius, num.dual_nodes or num.simplex_k + 1)
    q_grid = SimplexGrid(spec.J, num.simplex_k)
    p_grid = SimplexGrid(spec.I, num.simplex_k)
    term = _terminal_array(spec, num.grid, box, q_grid, "V")
    dot = p_grid.nodes @ box.nodes.T
    recovered = (dot[:, :, None] - term[..., None, :, :]).max(axis=-2)
    nodes = num.grid.nodes()
    g_tab = np.stack(
        [[spec.payoff(i, j, nodes) for j in range(spec.J)] for i in range(spec.I)]
    )
    bilinear = np.einsum("pi,ijn,qj->npq", p_grid.nodes, g_tab, q_grid.nodes)
    bilinear = bilinear.reshape(num.grid.shape + (p_grid.n_nodes, q_grid.n_nodes))
    err = float(np.abs(recovered - bilinear).max())
    summary = {
        "roundtrip_error": err,
        "dual_radius": radius,
        "dual_nodes_per_axis": box.nodes_per_axis,
        "simplex_resolution": num.simplex_k,
    }
    if write_files:
        lines = [
            ",".join(
                [f"x{a + 1}" for a in range(spec.d)]
                + [f"ph{i + 1}" for i in range(spec.I)]
                + [f"q{j + 1}" for j in range(spec.J)]
                + ["value"]
            )
        ]
        flat = term.reshape(nodes.shape[0], box.n_nodes, q_grid.n_nodes)
        for nidx in range(nodes.shape[0]):
            for r in range(box.n_nodes):
                for b in range(q_grid.n_nodes):
                    lines.append(
                        ",".join(
                            [_fmt(c) for c in nodes[nidx]]
                            + [_fmt(c) for c in box.nodes[r]]
                            + [_fmt(c) for c in q_grid.nodes[b]]
                            + [_fmt(flat[nidx, r, b])]
                        )
                    )
        _write(config.out_dir, "dual_terminal.csv", "\n".join(lines) + "\n")
        _write(config.out_dir, "conjugate.json", _json_dump(summary))
    return summary


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="asymgames",
        description="Zero-sum differential games with asymmetric information",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config path")
    common.add_argument("--out", default=None, help="output directory (overrides config)")
    common.add_argument("--seed", type=int, default=None, help="override numerics.seed")
    common.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker hint; results are identical at any setting",
    )
    sub.add_parser("solve", parents=[common], help="solve both dual routes and recover values")
    conv = sub.add_parser("converge", parents=[common], help="refinement study")
    conv.add_argument("--level", type=int, default=3, help="number of refinement levels")
    game = sub.add_parser("game", parents=[common], help="Monte Carlo strategy evaluation")
    game.add_argument("--strategy", required=True, help="strategy profile JSON")
    game.add_argument("--samples", type=int, default=1000)
    ham = sub.add_parser("hamiltonian", parents=[common], help="Hamiltonian probe")
    ham.add_argument("--samples", type=int, default=100)
    sub.add_parser("conjugate", parents=[common], help="terminal conjugation round-trip")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        config = parse_config(args.config)
        if args.out is not None:
            config.out_dir = Path(args.out)
        if args.seed is not None:
            config.numerics.seed = args.seed
        if args.command == "solve":
            artifacts = run_solve(config)
            s = artifacts["summary"]
            print(
                f"max |V - W| = {s['max_gap_V_W']:.6g} (tol {s['agreement_tol']:.6g}), "
                f"convexity violations p/q = {s['convexity_violation_V_p']:.2e}/"
                f"{s['concavity_violation_V_q']:.2e}"
            )
        elif args.command == "converge":
            report = run_converge(config, args.level)
            for row in report["levels"]:
                print(row)
            print("decreasing:", report["decreasing"])
            if not report["decreasing"]:
                return 2
        elif args.command == "game":
            report = run_game(config, args.strategy, args.samples)
            print(_json_dump(report).strip())
        elif args.command == "hamiltonian":
            print(_json_dump(run_hamiltonian(config, args.samples)).strip())
        elif args.command == "conjugate":
            print(_json_dump(run_conjugate(config)).strip())
        return 0
    except (ConfigError, ExpressionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SchemeError, IllConditionedGameError, DualBoxError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (IntegrationBudgetError, BruteForceCapError, DimensionBudgetError) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
