"""Brute-force baselines, per-posterior contracts, the K-uniform scheme and a simulator."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np
import scipy.sparse as sp

from .linear import direct_lp_batch, menu_lp, normalize_rows
from .lp import LpError, LpProblem, solve_lp
from .model import (
    Instance,
    Mechanism,
    Menu,
    SignalingScheme,
    Single,
    SolveReport,
    check_ic,
    finish_report,
    payment_at,
)

DEFAULT_BUDGET = 10**6


class BudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Contract lattices


def prop5_cap(inst: Instance) -> np.ndarray:
    """Per-outcome payment cap ``2 C / max_i sum_t mu_t F[t, i, w]``.

    Outcomes no action can reach get cap 0 since their payment never matters.
    """
    inst = inst.as_float
    reach = inst.mix(inst.prior).max(axis=0)
    cap = np.zeros(inst.num_outcomes)
    ok = reach > 0
    cap[ok] = 2.0 * inst.scale / reach[ok]
    return cap


@dataclass(frozen=True)
class ContractGrid:
    """Additive lattice ``{0, g, 2g, ...}`` per outcome, topped with the bound itself."""

    step: float
    bound: Any  # scalar or per-outcome vector
    budget: int = DEFAULT_BUDGET

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        b = np.asarray(self.bound, dtype=float)
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValueError("grid bound must be finite and nonnegative")

    def axes(self, m: int) -> list[np.ndarray]:
        bounds = np.broadcast_to(np.asarray(self.bound, dtype=float), (m,))
        out = []
        for b in bounds:
            count = int(math.floor(b / self.step + 1e-9))
            pts = np.round(np.arange(count + 1) * self.step, 12)
            if b - pts[-1] > 1e-12:
                pts = np.append(pts, b)
            out.append(pts)
        return out

    def size(self, m: int) -> int:
        return int(np.prod([len(a) for a in self.axes(m)], dtype=object))

    def capped(self, cap: np.ndarray) -> "ContractGrid":
        return ContractGrid(self.step, np.minimum(np.asarray(self.bound, dtype=float), cap), self.budget)

    def chunks(self, m: int, chunk: int = 50_000) -> Iterator[np.ndarray]:
        axes = self.axes(m)
        total = self.size(m)
        if total > self.budget:
            raise BudgetExceeded(f"lattice has {total} points, budget is {self.budget}")
        shape = tuple(len(a) for a in axes)
        for start in range(0, total, chunk):
            idx = np.unravel_index(np.arange(start, min(total, start + chunk)), shape)
            yield np.stack([axes[w][idx[w]] for w in range(m)], axis=1)

    def all_points(self, m: int) -> np.ndarray:
        parts = list(self.chunks(m))
        return np.concatenate(parts) if parts else np.zeros((0, m))


def default_grid(inst: Instance, step: float, bound: float | None = None, budget: int = DEFAULT_BUDGET) -> ContractGrid:
    cap = prop5_cap(inst)
    b = cap if bound is None else np.minimum(bound, cap)
    return ContractGrid(step, b, budget)


# ---------------------------------------------------------------------------
# Per-posterior optimal contract


@dataclass(frozen=True)
class PosteriorContract:
    contract: np.ndarray
    action: int
    value: float  # unnormalized principal utility


def optimal_contract_for_posterior(
    inst: Instance, mass: np.ndarray, bound: float | None = None
) -> PosteriorContract:
    """Cheapest IC contract for each action under the posterior, best action kept."""
    inst = inst.as_float
    x = np.asarray(mass, dtype=float)
    q = x.sum()
    if not q > 0:
        raise ValueError("posterior mass must be positive")
    belief = x / q
    mix = inst.mix(belief)
    n, m = inst.num_actions, inst.num_outcomes
    c = inst.costs
    # block-diagonal stack of one min-payment LP per action
    nv = n * m
    prob = LpProblem(-mix.ravel(), upper=np.full(nv, np.inf if bound is None else float(bound)))
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for a in range(n):
        for i in range(n):
            if i == a:
                continue
            d = mix[a] - mix[i]
            rows.append(np.full(m, r))
            cols.append(a * m + np.arange(m))
            vals.append(d)
            rhs.append(c[a] - c[i])
            r += 1
    feasible = np.ones(n, dtype=bool)
    if r:
        mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, nv))
        sol = _solve_blocks_separately(prob, mat, np.array(rhs), n, m)
        pay, feasible = sol
    else:
        pay = np.zeros((n, m))
    gross = mix @ inst.rewards
    value = np.where(feasible, gross - np.einsum("am,am->a", mix, pay), -np.inf)
    best = int(np.flatnonzero(value >= value.max() - 1e-12)[0])
    return PosteriorContract(pay[best], best, float(value[best] * q))


def _solve_blocks_separately(
    prob: LpProblem, ic: sp.csr_matrix, rhs: np.ndarray, n: int, m: int
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the stacked per-action LPs; fall back to one-by-one when some block is infeasible."""
    prob.add_rows(ic, ">=", rhs)
    sol = solve_lp(prob)
    if sol.ok:
        return sol.assignment.reshape(n, m), np.ones(n, dtype=bool)
    pays = np.zeros((n, m))
    feasible = np.zeros(n, dtype=bool)
    per = n - 1
    for a in range(n):
        sub = LpProblem(prob.objective[a * m : (a + 1) * m], upper=prob.upper[a * m : (a + 1) * m])
        sub.add_rows(ic[a * per : (a + 1) * per, a * m : (a + 1) * m], ">=", rhs[a * per : (a + 1) * per])
        s = solve_lp(sub)
        if s.ok:
            pays[a] = s.assignment
            feasible[a] = True
        elif s.status == "numerical_failure":
            raise LpError(s)
    return pays, feasible


# ---------------------------------------------------------------------------
# Single explicit contract


def _upper_bounds(inst: Instance, contracts: np.ndarray) -> np.ndarray:
    """Two valid bounds on the value of any scheme under each shared contract."""
    dense = inst.dense()
    mu = inst.prior
    gross = dense @ inst.rewards  # (k, n)
    paid = np.einsum("tnm,gm->gtn", dense, contracts)  # (G, k, n)
    ub_state = np.einsum("t,gt->g", mu, (gross[None] - paid).max(axis=2))
    welfare = float(mu @ (gross - inst.costs[None]).max(axis=1))
    agent_floor = (np.einsum("t,gtn->gn", mu, paid) - inst.costs[None]).max(axis=1)
    return np.minimum(ub_state, welfare - agent_floor)


def oracle_single(inst: Instance, grid: ContractGrid, batch: int = 512) -> SolveReport:
    """Exhaustive lattice search for the best shared contract, with exact bound pruning."""
    inst = inst.as_float
    grid = grid.capped(prop5_cap(inst))
    m = inst.num_outcomes
    points = grid.all_points(m)
    ub = _upper_bounds(inst, points)
    order = np.argsort(-ub, kind="stable")
    best_val, best_idx, best_pi = -np.inf, -1, None
    solved = 0
    for start in range(0, len(order), batch):
        idx = order[start : start + batch]
        idx = idx[ub[idx] > best_val + 1e-12]
        if idx.size == 0:
            break
        vals, pis = direct_lp_batch(inst, points[idx])
        solved += idx.size
        for g in range(idx.size):
            if vals[g] > best_val + 1e-12:
                best_val, best_idx, best_pi = float(vals[g]), int(idx[g]), pis[g]
    scheme = SignalingScheme(inst.actions, normalize_rows(best_pi))
    mech = Mechanism(scheme, Single(points[best_idx]), tuple(range(inst.num_actions)))
    return finish_report(
        inst, mech, best_val,
        params={"step": grid.step, "bound": np.asarray(grid.bound, dtype=float).tolist()},
        diagnostics={"mode": "oracle-single", "lattice_size": len(points), "lps_solved": solved},
    )


# ---------------------------------------------------------------------------
# Menu of explicit contracts


def _region_vertices(
    u: np.ndarray, v: np.ndarray, floor: np.ndarray | None = None, keep: np.ndarray | None = None, tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vertices of every best-response region in the belief simplex.

    ``u`` and ``v`` are per-state agent and principal utilities ``(G, k, n)``.
    The region of action ``i`` under contract ``g`` is
    ``{q in simplex : q @ (u[g, :, i] - u[g, :, j]) >= 0 for all j}``; its
    vertices come from making ``k - 1`` inequalities tight.  Returns vertex
    beliefs, their principal value under action ``i``, and ``(g, i)`` labels.

    With ``floor`` (per-state values some other column always attains),
    pairs whose value never exceeds it in any state are skipped unless
    flagged in ``keep``.
    """
    g_count, k, n = u.shape
    out_q, out_v, out_lab = [], [], []
    eye = np.eye(k)
    for i in range(n):
        rows_g = np.arange(g_count)
        if floor is not None:
            useful = np.any(v[:, :, i] > floor[None, :] + tol, axis=1)
            if keep is not None:
                useful |= keep
            rows_g = np.flatnonzero(useful)
            if rows_g.size == 0:
                continue
        others = [j for j in range(n) if j != i]
        d = (u[rows_g][:, :, i : i + 1] - u[rows_g][:, :, others]).transpose(0, 2, 1)  # (G', n-1, k)
        cons = np.concatenate([d, np.broadcast_to(eye, (rows_g.size, k, k))], axis=1)  # (G', n-1+k, k)
        ncons = cons.shape[1]
        for combo in itertools.combinations(range(ncons), k - 1):
            q, ok = _null_point(cons[:, list(combo), :])
            if not ok.any():
                continue
            q = q[ok]
            slack = np.einsum("gck,gk->gc", cons[ok], q)
            feas = np.all(slack >= -tol, axis=1)
            if not feas.any():
                continue
            q = np.clip(q[feas], 0.0, None)
            q /= q.sum(axis=1, keepdims=True)
            gs = rows_g[np.flatnonzero(ok)[feas]]
            out_q.append(q)
            out_v.append(np.einsum("gk,gk->g", q, v[gs, :, i]))
            out_lab.append(np.stack([gs, np.full(gs.size, i)], axis=1))
    if not out_q:
        return np.zeros((0, k)), np.zeros(0), np.zeros((0, 2), dtype=int)
    return np.concatenate(out_q), np.concatenate(out_v), np.concatenate(out_lab)


def _null_point(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point ``q`` with ``rows @ q = 0`` and ``sum(q) = 1`` for each stacked ``(k-1, k)`` system."""
    g_count, _, k = rows.shape
    if k == 1:
        return np.ones((g_count, 1)), np.ones(g_count, dtype=bool)
    if k == 2:
        direction = np.stack([rows[:, 0, 1], -rows[:, 0, 0]], axis=1)
    elif k == 3:
        direction = np.cross(rows[:, 0, :], rows[:, 1, :])
    else:
        a = np.concatenate([rows, np.ones((g_count, 1, k))], axis=1)
        det = np.linalg.det(a)
        ok = np.abs(det) > 1e-12
        q = np.zeros((g_count, k))
        if ok.any():
            rhs = np.zeros(k)
            rhs[-1] = 1.0
            q[ok] = np.linalg.solve(a[ok], np.broadcast_to(rhs, (ok.sum(), k))[..., None])[..., 0]
        return q, ok
    total = direction.sum(axis=1)
    scale = np.abs(direction).max(axis=1)
    ok = np.abs(total) > 1e-12 * np.maximum(scale, 1.0)
    q = np.zeros((g_count, k))
    q[ok] = direction[ok] / total[ok, None]
    return q, ok


def _zero_contract_value(inst: Instance, beliefs: np.ndarray, dense: np.ndarray) -> np.ndarray:
    """Principal value at each belief when nothing is paid (ties go to the principal)."""
    gross = dense @ inst.rewards  # (k, n)
    agent = beliefs @ (-inst.costs[None].repeat(inst.num_states, 0))  # (N, n)
    princ = beliefs @ gross
    cand = agent >= agent.max(axis=1, keepdims=True) - 1e-9
    return np.where(cand, princ, -np.inf).max(axis=1)


def oracle_menu(inst: Instance, grid: ContractGrid, method: str = "vertex", chunk: int = 20_000) -> SolveReport:
    """Best menu whose contracts all lie on the lattice.

    ``method="direct"`` solves the signal LP with one column per (contract,
    action, state).  ``method="vertex"`` solves the equivalent LP over vertices
    of the best-response regions, discarding vertices that the zero contract
    already matches; it gives the same optimum with far fewer columns.
    """
    inst = inst.as_float
    grid = grid.capped(prop5_cap(inst))
    m, n, k = inst.num_outcomes, inst.num_actions, inst.num_states
    size = grid.size(m)
    if size * n > grid.budget:
        raise BudgetExceeded(f"{size} contracts x {n} actions exceeds budget {grid.budget}")
    if method == "direct":
        points = grid.all_points(m)
        value, pi, recs = menu_lp(inst, points)
        col_contracts = np.repeat(points, n, axis=0)
        used = np.flatnonzero(pi.max(axis=0) > 1e-12)
        mech = _menu_mechanism(inst, pi[:, used], col_contracts[used], recs[used])
        return finish_report(inst, mech, value, {"step": grid.step},
                             {"mode": "oracle-menu", "method": "direct", "lattice_size": size})
    if method != "vertex":
        raise ValueError(f"unknown method {method!r}")
    dense = inst.dense()
    gross = dense @ inst.rewards
    qs, vs, contracts, acts = [], [], [], []
    for pts in grid.chunks(m, chunk):
        paid = np.einsum("tnm,gm->gtn", dense, pts)
        u = paid - inst.costs[None, None, :]
        v = (dense @ inst.rewards)[None] - paid
        is_zero = np.all(pts == 0, axis=1)
        q, val, lab = _region_vertices(u, v, floor=gross[:, 0], keep=is_zero)
        if q.size == 0:
            continue
        zero = is_zero[lab[:, 0]]
        keep = zero | (val > _zero_contract_value(inst, q, dense) + 1e-12)
        qs.append(q[keep])
        vs.append(val[keep])
        contracts.append(pts[lab[keep, 0]])
        acts.append(lab[keep, 1])
    q = np.concatenate(qs)
    val = np.concatenate(vs)
    contract = np.concatenate(contracts)
    act = np.concatenate(acts)
    # keep the best column at each distinct belief
    key = np.round(q, 12)
    order = np.lexsort((-val,) + tuple(key[:, t] for t in range(k - 1, -1, -1)))
    key_sorted = key[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(key_sorted[1:] != key_sorted[:-1], axis=1)
    pick = order[first]
    q, val, contract, act = q[pick], val[pick], contract[pick], act[pick]
    prob = LpProblem(val)
    prob.add_rows(sp.csr_matrix(q.T), "=", inst.prior)
    sol = solve_lp(prob)
    if not sol.ok:
        raise LpError(sol)
    gamma = sol.assignment
    used = np.flatnonzero(gamma > 1e-12)
    # merge vertices that share a (contract, action) signal
    sig_key: dict[tuple, int] = {}
    masses: list[np.ndarray] = []
    sig_contracts, sig_acts = [], []
    for c in used:
        kk = (tuple(contract[c]), int(act[c]))
        if kk not in sig_key:
            sig_key[kk] = len(masses)
            masses.append(np.zeros(k))
            sig_contracts.append(contract[c])
            sig_acts.append(int(act[c]))
        masses[sig_key[kk]] += gamma[c] * q[c]
    pi = _masses_to_pi(inst, np.array(masses).T)
    mech = _menu_mechanism(inst, pi, np.array(sig_contracts), np.array(sig_acts))
    return finish_report(
        inst, mech, sol.value, {"step": grid.step},
        {"mode": "oracle-menu", "method": "vertex", "lattice_size": size, "columns": int(len(q))},
    )


def _masses_to_pi(inst: Instance, masses: np.ndarray) -> np.ndarray:
    """Convert unnormalized state masses ``(k, S)`` into conditionals."""
    mu = inst.prior
    pi = np.zeros_like(masses)
    pos = mu > 0
    pi[pos] = masses[pos] / mu[pos, None]
    pi[~pos, 0] = 1.0
    return normalize_rows(pi)


def _menu_mechanism(inst: Instance, pi: np.ndarray, contracts: np.ndarray, recs: np.ndarray) -> Mechanism:
    ids = tuple(f"s{j}" for j in range(pi.shape[1]))
    return Mechanism(SignalingScheme(ids, normalize_rows(pi)), Menu(contracts), tuple(int(a) for a in recs))


# ---------------------------------------------------------------------------
# K-uniform posteriors


@dataclass(frozen=True)
class KUniformParams:
    K: int
    B: float
    epsilon: float | None = None
    budget: int = 100_000

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.B > 0:
            raise ValueError("B must be positive")

    def formula_k(self, n: int) -> float | None:
        """The sample count a worst-case guarantee would need, for reference only."""
        if self.epsilon is None:
            return None
        e, b = self.epsilon, self.B
        return math.log(2 * n * b / e) / (2 * b**2 * e**4)


def k_uniform_beliefs(num_states: int, K: int) -> np.ndarray:
    rows = []
    for combo in itertools.combinations_with_replacement(range(num_states), K):
        rows.append(np.bincount(combo, minlength=num_states) / K)
    return np.array(rows)


def solve_kuniform(inst: Instance, params: KUniformParams) -> SolveReport:
    """Price every K-uniform belief, then split the prior over them by LP."""
    from .amb import eps_to_ic

    inst = inst.as_float
    k = inst.num_states
    count = math.comb(params.K + k - 1, params.K)
    if count > params.budget:
        raise BudgetExceeded(f"{count} K-uniform beliefs exceed budget {params.budget}")
    beliefs = k_uniform_beliefs(k, params.K)
    priced = [optimal_contract_for_posterior(inst, q, params.B) for q in beliefs]
    values = np.array([pc.value for pc in priced])
    prob = LpProblem(values)
    prob.add_rows(sp.csr_matrix(beliefs.T), "=", inst.prior)
    sol = solve_lp(prob)
    if not sol.ok:
        raise AssertionError(f"decomposition LP failed ({sol.status}); point masses always span the prior")
    gamma = sol.assignment
    used = np.flatnonzero(gamma > 1e-12)
    pi = _masses_to_pi(inst, (gamma[used, None] * beliefs[used]).T)
    contracts = np.array([priced[j].contract for j in used])
    recs = np.array([priced[j].action for j in used])
    mech = _menu_mechanism(inst, pi, contracts, recs)
    slack = float(check_ic(inst, mech, 1e-9).max_violation)
    converted = False
    if slack > 1e-9:
        mech = eps_to_ic(inst, mech, slack)
        converted = True
    return finish_report(
        inst, mech, sol.value,
        params={"K": params.K, "B": params.B, "epsilon": params.epsilon},
        diagnostics={
            "mode": "kuniform",
            "beliefs": count,
            "ic_slack_before": slack,
            "converted": converted,
            "formula_K": params.formula_k(inst.num_actions),
        },
    )


# ---------------------------------------------------------------------------
# Monte Carlo


SIM_CHUNK = 1 << 16


def _simulate_chunk(inst: Instance, mech: Mechanism, recs: tuple[int, ...], size: int, seed: np.random.SeedSequence):
    rng = np.random.default_rng(seed)
    k = inst.num_states
    theta = rng.choice(k, size=size, p=inst.prior)
    cum = np.cumsum(np.asarray(mech.scheme.pi, dtype=float), axis=1)
    draw = rng.random(size)
    sig = np.minimum((draw[:, None] > cum[theta]).sum(axis=1), cum.shape[1] - 1)
    act = np.asarray(recs)[sig]
    if inst.is_sparse:
        rows = np.array([inst.state_matrix(t)[a] for t, a in zip(theta, act)])
    else:
        rows = inst.matrices[theta, act]
    cum_f = np.cumsum(rows, axis=1)
    draw = rng.random(size)
    omega = np.minimum((draw[:, None] > cum_f).sum(axis=1), inst.num_outcomes - 1)
    pays = np.array([np.asarray(payment_at(inst, mech.payments, j), dtype=float) for j in range(mech.scheme.num_signals)]) \
        if mech.payments.signal_indexed else np.asarray(payment_at(inst, mech.payments, 0), dtype=float)[None]
    sig_idx = sig if mech.payments.signal_indexed else np.zeros(size, dtype=int)
    if pays.ndim == 3:
        paid = pays[sig_idx, theta, omega]
    else:
        paid = pays[sig_idx, omega]
    util = inst.rewards[omega] - paid
    # shifting by one sample keeps constant streams exact
    d = util - util[0]
    dm = d.mean()
    return size, float(util[0] + dm), float(((d - dm) ** 2).sum())


def simulate(
    inst: Instance, mech: Mechanism, samples: int, seed: int, threads: int | None = None
) -> tuple[float, float]:
    """Replay the interaction; returns the sample mean and its standard error.

    Samples are cut into fixed-size chunks seeded from one seed sequence, so
    the answer does not depend on ``threads``.
    """
    from .model import recommendations_or_best

    if samples < 1:
        raise ValueError("need at least one sample")
    inst = inst.as_float
    recs = recommendations_or_best(inst, mech)
    sizes = [SIM_CHUNK] * (samples // SIM_CHUNK)
    if samples % SIM_CHUNK:
        sizes.append(samples % SIM_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    work = lambda args: _simulate_chunk(inst, mech, recs, *args)  # noqa: E731
    if threads is not None and threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, zip(sizes, seeds)))
    else:
        parts = [work(a) for a in zip(sizes, seeds)]
    count, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:
        delta = mb - mean
        total = count + nb
        mean += delta * nb / total
        m2 += m2b + delta * delta * count * nb / total
        count = total
    var = m2 / (count - 1) if count > 1 else 0.0
    return float(mean), float(math.sqrt(var / count))
