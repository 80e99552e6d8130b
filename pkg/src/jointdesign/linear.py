"""Explicit linear contracts: grid search over the share alpha.

Also hosts the two LP shapes reused by the oracles: the direct signaling LP
under a fixed shared contract, and the menu LP whose signals carry fixed
contracts and recommendations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lp import LpError, LpProblem, solve_lp
from .model import (
    Instance,
    LinearMenu,
    LinearSingle,
    Mechanism,
    SignalingScheme,
    SolveReport,
    finish_report,
)

BATCH_VARS = 60_000


@dataclass(frozen=True)
class Grid:
    """``{0, eps, 2 eps, ...}`` clipped to [0, 1], always containing 1."""

    epsilon: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def points(self) -> np.ndarray:
        count = int(np.floor(1.0 / self.epsilon + 1e-9))
        # rounding keeps multiples of eps identical across nested grids
        pts = np.round(np.arange(count + 1) * self.epsilon, 12)
        pts = pts[pts <= 1.0]
        return np.unique(np.append(pts, 1.0))


def _utilities(dense: np.ndarray, inst: Instance, contracts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-state agent and principal utilities ``(G, k, n)`` for each contract."""
    paid = np.einsum("tnm,gm->gtn", dense, contracts)
    gross = dense @ inst.rewards
    return paid - inst.costs[None, None, :], gross[None] - paid


def direct_lp_batch(inst: Instance, contracts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best direct signaling scheme for each fixed shared contract.

    Returns values ``(G,)`` and schemes ``(G, k, n)``.  Independent problems are
    stacked block-diagonally so that one solver call handles many contracts.
    """
    inst = inst.as_float
    contracts = np.atleast_2d(np.asarray(contracts, dtype=float))
    dense = inst.dense()
    k, n = inst.num_states, inst.num_actions
    size = k * n
    per_call = max(1, BATCH_VARS // size)
    values = np.empty(len(contracts))
    schemes = np.empty((len(contracts), k, n))
    for start in range(0, len(contracts), per_call):
        chunk = contracts[start : start + per_call]
        vals, pis = _direct_chunk(inst, dense, chunk)
        values[start : start + len(chunk)] = vals
        schemes[start : start + len(chunk)] = pis
    return values, schemes


def _direct_chunk(inst: Instance, dense: np.ndarray, contracts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g_count = len(contracts)
    k, n = inst.num_states, inst.num_actions
    mu = inst.prior
    u, v = _utilities(dense, inst, contracts)
    nv = g_count * k * n
    var = np.arange(nv).reshape(g_count, k, n)
    objective = (mu[None, :, None] * v).ravel()
    prob = LpProblem(objective, upper=np.ones(nv))
    s_idx, i_idx = np.nonzero(~np.eye(n, dtype=bool))
    pairs = len(s_idx)
    if pairs:
        # row (g, pair) has entries at (g, t, s) for every state t
        coef = mu[None, None, :] * (u[:, :, s_idx] - u[:, :, i_idx]).transpose(0, 2, 1)  # (G, pairs, k)
        rows = np.broadcast_to(np.arange(g_count * pairs).reshape(g_count, pairs, 1), coef.shape)
        cols = var[:, :, s_idx].transpose(0, 2, 1)
        ic = sp.csr_matrix((coef.ravel(), (rows.ravel(), cols.ravel())), shape=(g_count * pairs, nv))
        prob.add_rows(ic, ">=", 0.0)
    rows = np.repeat(np.arange(g_count * k), n)
    simplex = sp.csr_matrix((np.ones(nv), (rows, np.arange(nv))), shape=(g_count * k, nv))
    prob.add_rows(simplex, "=", 1.0)
    sol = solve_lp(prob)
    if not sol.ok:
        raise LpError(sol)
    x = sol.assignment.reshape(g_count, k, n)
    vals = np.einsum("gtn,gtn->g", x, mu[None, :, None] * v)
    return vals, x


def menu_lp(
    inst: Instance, contracts: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """One LP over signals ``(contract g, action i)`` with fixed payments and recommendations.

    Returns the value, ``pi`` of shape ``(k, G*n)`` and the recommendation of
    each column.
    """
    inst = inst.as_float
    contracts = np.atleast_2d(np.asarray(contracts, dtype=float))
    dense = inst.dense()
    k, n = inst.num_states, inst.num_actions
    g_count = len(contracts)
    mu = inst.prior
    u, v = _utilities(dense, inst, contracts)  # (G, k, n)
    nv = k * g_count * n
    var = np.arange(nv).reshape(k, g_count, n)
    objective = (mu[:, None, None] * v.transpose(1, 0, 2)).ravel()
    prob = LpProblem(objective, upper=np.ones(nv))
    s_idx, j_idx = np.nonzero(~np.eye(n, dtype=bool))
    pairs = len(s_idx)
    if pairs:
        coef = mu[None, None, :] * (u[:, :, s_idx] - u[:, :, j_idx]).transpose(0, 2, 1)  # (G, pairs, k)
        rows = np.broadcast_to(np.arange(g_count * pairs).reshape(g_count, pairs, 1), coef.shape)
        cols = var[:, :, s_idx].transpose(1, 2, 0)  # (G, pairs, k)
        ic = sp.csr_matrix((coef.ravel(), (rows.ravel(), cols.ravel())), shape=(g_count * pairs, nv))
        prob.add_rows(ic, ">=", 0.0)
    rows = np.repeat(np.arange(k), g_count * n)
    prob.add_rows(sp.csr_matrix((np.ones(nv), (rows, np.arange(nv))), shape=(k, nv)), "=", 1.0)
    sol = solve_lp(prob)
    if not sol.ok:
        raise LpError(sol)
    pi = sol.assignment.reshape(k, g_count * n)
    recs = np.tile(np.arange(n), g_count)
    return sol.value, pi, recs


def normalize_rows(pi: np.ndarray) -> np.ndarray:
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum(axis=1, keepdims=True)


def solve_signaling_for_fixed_linear(inst: Instance, alpha: float) -> tuple[SignalingScheme, float]:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    inst = inst.as_float
    vals, pis = direct_lp_batch(inst, (alpha * inst.rewards)[None])
    return SignalingScheme(inst.actions, normalize_rows(pis[0])), float(vals[0])


def solve_single_linear(inst: Instance, epsilon: float) -> SolveReport:
    """Best (alpha, direct scheme) pair over the alpha grid."""
    inst = inst.as_float
    alphas = Grid(epsilon).points
    vals, pis = direct_lp_batch(inst, alphas[:, None] * inst.rewards[None])
    best = 0
    for g in range(1, len(alphas)):
        if vals[g] > vals[best] + 1e-12:
            best = g
    scheme = SignalingScheme(inst.actions, normalize_rows(pis[best]))
    mech = Mechanism(scheme, LinearSingle(float(alphas[best])), tuple(range(inst.num_actions)))
    return finish_report(
        inst, mech, float(vals[best]),
        params={"epsilon": epsilon},
        diagnostics={
            "mode": "linear-single",
            "alpha": float(alphas[best]),
            "grid_values": {float(a): float(x) for a, x in zip(alphas, vals)},
            "guarantee": epsilon * inst.scale,
        },
    )


def solve_menu_linear(inst: Instance, epsilon: float) -> SolveReport:
    """One LP over signals ``s_(alpha, i)`` for every grid alpha and action i."""
    inst = inst.as_float
    alphas = Grid(epsilon).points
    value, pi, recs = menu_lp(inst, alphas[:, None] * inst.rewards[None])
    n = inst.num_actions
    ids = tuple(f"alpha{a:.12g}_{inst.actions[i]}" for a in alphas for i in range(n))
    scheme = SignalingScheme(ids, normalize_rows(pi))
    mech = Mechanism(scheme, LinearMenu(np.repeat(alphas, n)), tuple(int(r) for r in recs))
    return finish_report(
        inst, mech, value,
        params={"epsilon": epsilon},
        diagnostics={
            "mode": "linear-menu",
            "num_signals": len(ids),
            "guarantee": epsilon * inst.scale,
        },
    )
