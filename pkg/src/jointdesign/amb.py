"""Ambiguous contracts: LP relaxation, repair of irregular pairs, and the IC fix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linear import normalize_rows
from .lp import LpError, LpProblem, solve_lp
from .model import (
    Ambiguous,
    Instance,
    LinearMenu,
    LinearSingle,
    Mechanism,
    Menu,
    SignalingScheme,
    Single,
    SolveReport,
    check_ic,
    finish_report,
    make_direct,
    principal_utility,
    with_best_responses,
)
from .oracle import optimal_contract_for_posterior

IRREGULAR_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RelaxedSolution:
    pi: SignalingScheme  # signal s recommends action s
    z: np.ndarray  # (n, k, m): z[s, t] stands in for pi(s|t) * p[s, t]
    value: float


@dataclass(frozen=True)
class AmbParams:
    zeta: float
    xi: float
    epsilon: float
    delta: float
    eta: float

    @classmethod
    def from_zeta(cls, zeta: float, n: int) -> "AmbParams":
        if not zeta > 0:
            raise ValueError("zeta must be positive")
        xi = (zeta / (2 * (n + 1))) ** 2
        eps = n * xi / (n + 1)
        return cls(zeta=zeta, xi=xi, epsilon=eps, delta=eps / n, eta=math.sqrt(xi))


def solve_amb_relaxation(inst: Instance) -> RelaxedSolution:
    """The linear relaxation in (pi, z); its value is the ambiguous-contract supremum."""
    inst = inst.as_float
    dense = inst.dense()
    k, n, m = inst.num_states, inst.num_actions, inst.num_outcomes
    mu, c = inst.prior, inst.costs
    n_pi = k * n
    pi_var = np.arange(n_pi).reshape(k, n)
    z_var = n_pi + np.arange(n * k * m).reshape(n, k, m)
    nv = n_pi + n * k * m
    obj = np.zeros(nv)
    gross = dense @ inst.rewards  # (k, n)
    obj[pi_var] = mu[:, None] * gross
    # z[s, t, w] enters with -mu_t F[t, s, w]
    f_own = dense.transpose(1, 0, 2)  # (n, k, m): F[t, s] at [s, t]
    obj[z_var] = -(mu[None, :, None] * f_own)
    upper = np.full(nv, np.inf)
    upper[pi_var] = 1.0
    prob = LpProblem(obj, upper=upper)
    rows, cols, vals = [], [], []
    r = 0
    for s in range(n):
        for i in range(n):
            if i == s:
                continue
            diff = mu[:, None] * (dense[:, s, :] - dense[:, i, :])  # (k, m)
            rows.append(np.full(k * m, r))
            cols.append(z_var[s].ravel())
            vals.append(diff.ravel())
            rows.append(np.full(k, r))
            cols.append(pi_var[:, s])
            vals.append(-mu * (c[s] - c[i]))
            r += 1
    if r:
        ic = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, nv))
        prob.add_rows(ic, ">=", 0.0)
    simplex = sp.csr_matrix((np.ones(n_pi), (np.repeat(np.arange(k), n), pi_var.ravel())), shape=(k, nv))
    prob.add_rows(simplex, "=", 1.0)
    sol = solve_lp(prob)
    if not sol.ok:
        raise LpError(sol)
    x = sol.assignment
    pi = x[pi_var]
    return RelaxedSolution(SignalingScheme(inst.actions, normalize_rows(pi)), x[z_var], sol.value)


def irregular_pairs(rel: RelaxedSolution) -> np.ndarray:
    """Boolean ``(n, k)`` mask of pairs with payments but no probability."""
    zmax = rel.z.max(axis=2)
    return (zmax > IRREGULAR_TOL) & (rel.pi.pi.T <= IRREGULAR_TOL)


def repair_irregular(inst: Instance, rel: RelaxedSolution, params: AmbParams) -> Mechanism:
    """Reserve mass on an extra signal, hand it to irregular pairs, recover payments."""
    inst = inst.as_float
    k, n = inst.num_states, inst.num_actions
    pi = np.asarray(rel.pi.pi, dtype=float)
    z = rel.z.copy()
    bad = irregular_pairs(rel)
    negligible = (z.max(axis=2) <= IRREGULAR_TOL) & (pi.T <= IRREGULAR_TOL)
    z[negligible] = 0.0
    eps, delta = params.epsilon, params.delta
    new = np.zeros((k, n + 1))
    new[:, :n] = (1 - eps) * pi
    new[:, n] = eps
    for s, t in zip(*np.nonzero(bad)):
        bump = delta - new[t, s]
        new[t, s] = delta
        new[t, n] -= bump
    if np.any(new[:, n] < -1e-15):
        raise AssertionError("reserved mass went negative; more irregular pairs than actions")
    new[:, n] = np.maximum(new[:, n], 0.0)
    pay = np.zeros((n + 1, k, inst.num_outcomes))
    safe = np.where(new[:, :n].T > 0, new[:, :n].T, 1.0)  # (n, k)
    pay[:n] = np.where((new[:, :n].T > 0)[..., None], z / safe[..., None], 0.0)
    recs = list(range(n))
    reserve = inst.prior * new[:, n]
    if reserve.sum() > 0:
        pc = optimal_contract_for_posterior(inst, reserve)
        pay[n] = pc.contract[None, :]
        recs.append(pc.action)
    else:
        recs.append(0)
    ids = tuple(inst.actions) + ("reserve",)
    mech = Mechanism(SignalingScheme(ids, normalize_rows(new)), Ambiguous(pay), tuple(recs))
    return make_direct(inst, mech, tol=params.xi * inst.scale + 1e-9)


def eps_to_ic(inst: Instance, mech: Mechanism, xi: float) -> Mechanism:
    """Blend every contract toward the full reward with weight sqrt(xi), then re-optimize actions."""
    eta = math.sqrt(max(xi, 0.0))
    if eta == 0:
        return mech
    eta = min(eta, 1.0)
    inst_f = inst.as_float
    pay = mech.payments
    r = inst_f.rewards
    if isinstance(pay, Ambiguous):
        new = Ambiguous((1 - eta) * pay.p.astype(float) + eta * r)
    elif isinstance(pay, Menu):
        new = Menu((1 - eta) * pay.p.astype(float) + eta * r)
    elif isinstance(pay, Single):
        new = Single((1 - eta) * pay.p.astype(float) + eta * r)
    elif isinstance(pay, LinearSingle):
        new = LinearSingle(min(1.0, (1 - eta) * float(pay.alpha) + eta))
    elif isinstance(pay, LinearMenu):
        new = LinearMenu(np.minimum(1.0, (1 - eta) * pay.alpha.astype(float) + eta))
    else:
        raise TypeError(f"unknown payment scheme {type(pay).__name__}")
    return with_best_responses(inst_f, Mechanism(mech.scheme, new, None))


def solve_amb(inst: Instance, zeta: float) -> SolveReport:
    """Relaxation, repair, and IC conversion with the parameters implied by ``zeta``."""
    inst = inst.as_float
    params = AmbParams.from_zeta(zeta, inst.num_actions)
    rel = solve_amb_relaxation(inst)
    repaired = repair_irregular(inst, rel, params)
    rep_util = float(principal_utility(inst, repaired))
    rep_ic = float(check_ic(inst, repaired, 1e-9).max_violation)
    final = eps_to_ic(inst, repaired, params.xi)
    return finish_report(
        inst, final, rel.value,
        params={"zeta": zeta, "xi": params.xi, "epsilon": params.epsilon, "delta": params.delta, "eta": params.eta},
        diagnostics={
            "mode": "amb",
            "irregular_pairs": int(irregular_pairs(rel).sum()),
            "repair_utility": rep_util,
            "repair_ic_violation": rep_ic,
            "guarantee": zeta * inst.scale,
        },
    )
