"""Game instances, mechanisms and their evaluation.

Utilities are kept unnormalized: for a signal with state masses ``x`` (where
``x[t] = prior[t] * pi[t, s]``) the agent's value of action ``a`` is
``sum_t x[t] * (F[t, a] @ p[t] - c[a])``.  Dividing by the signal probability
gives posterior-normalized numbers.

Arrays may hold ``fractions.Fraction`` objects (dtype=object) instead of
floats, which makes every evaluation routine here exact.  LP-based solvers
always work on the float view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Sequence, Union

import numpy as np
import scipy.sparse as sp

ROW_TOL = 1e-12
SCHEME_TOL = 1e-9
BR_TOL = 1e-9


def _freeze(a: Any, dtype: Any = None) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    if arr.dtype != object:
        arr = arr.astype(float)
    arr.setflags(write=False)
    return arr


def _is_exact(*arrays: Any) -> bool:
    return any(isinstance(a, np.ndarray) and a.dtype == object for a in arrays)


def to_fraction_array(a: Any) -> np.ndarray:
    """Object array of ``Fraction`` built from ints, strings, floats or Fractions."""
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = Fraction(v) if not isinstance(v, Fraction) else v
    return out


def _arrays_equal(a: Any, b: Any) -> bool:
    if sp.issparse(a) or sp.issparse(b):
        if not (sp.issparse(a) and sp.issparse(b)) or a.shape != b.shape:
            return False
        return (abs(a - b)).nnz == 0
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and a.dtype == b.dtype and bool(np.all(a == b))


# ---------------------------------------------------------------------------
# Instance


@dataclass(frozen=True, eq=False)
class Instance:
    """Prior, costs, rewards and per-state action-to-outcome matrices.

    ``matrices`` is either a dense ``(k, n, m)`` array or a scipy sparse matrix
    of shape ``(k, n*m)`` whose row ``t`` is ``F[t]`` flattened row-major.
    """

    prior: np.ndarray
    costs: np.ndarray
    rewards: np.ndarray
    matrices: Any
    states: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    outcomes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        exact = _is_exact(self.prior, self.costs, self.rewards, self.matrices)
        dt = object if exact else None
        conv = to_fraction_array if exact else (lambda v: v)
        object.__setattr__(self, "prior", _freeze(conv(self.prior), dt))
        object.__setattr__(self, "costs", _freeze(conv(self.costs), dt))
        object.__setattr__(self, "rewards", _freeze(conv(self.rewards), dt))
        k, n, m = self.prior.size, self.costs.size, self.rewards.size
        if self.prior.ndim != 1 or self.costs.ndim != 1 or self.rewards.ndim != 1:
            raise ValueError("prior, costs and rewards must be vectors")
        if sp.issparse(self.matrices):
            if exact:
                raise ValueError("exact arithmetic requires dense matrices")
            mats = sp.csr_matrix(self.matrices, dtype=float)
            if mats.shape != (k, n * m):
                raise ValueError(f"sparse matrices must have shape {(k, n * m)}, got {mats.shape}")
            mats.sum_duplicates()
            mats.data.setflags(write=False)
        else:
            mats = _freeze(conv(self.matrices), dt)
            if mats.shape != (k, n, m):
                raise ValueError(f"matrices must have shape {(k, n, m)}, got {mats.shape}")
        object.__setattr__(self, "matrices", mats)
        for name, size, prefix in (("states", k, "t"), ("actions", n, "a"), ("outcomes", m, "o")):
            ids = tuple(str(v) for v in getattr(self, name)) or tuple(f"{prefix}{i}" for i in range(size))
            if len(ids) != size:
                raise ValueError(f"{name} has {len(ids)} ids for {size} entries")
            if len(set(ids)) != size:
                raise ValueError(f"duplicate {name} ids")
            object.__setattr__(self, name, ids)

    @property
    def num_states(self) -> int:
        return self.prior.size

    @property
    def num_actions(self) -> int:
        return self.costs.size

    @property
    def num_outcomes(self) -> int:
        return self.rewards.size

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrices)

    @property
    def exact(self) -> bool:
        return self.prior.dtype == object

    @property
    def bound_c(self) -> float:
        vals = [0.0]
        if self.costs.size:
            vals.append(float(max(self.costs)))
        if self.rewards.size:
            vals.append(float(max(self.rewards)))
        return max(vals)

    @property
    def scale(self) -> float:
        """Multiplier applied to loss bounds derived for data in [0, 1]."""
        return max(1.0, self.bound_c)

    def state_matrix(self, t: int) -> np.ndarray:
        if self.is_sparse:
            return self.matrices[t].toarray().reshape(self.num_actions, self.num_outcomes)
        return self.matrices[t]

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrices.toarray().reshape(self.num_states, self.num_actions, self.num_outcomes)
        return self.matrices

    @cached_property
    def _coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrices.tocoo()
        m = self.num_outcomes
        return coo.row, coo.col // m, coo.col % m, coo.data

    @cached_property
    def as_float(self) -> "Instance":
        if not self.exact:
            return self
        f = np.vectorize(float, otypes=[float])
        return Instance(f(self.prior), f(self.costs), f(self.rewards), f(self.matrices),
                        self.states, self.actions, self.outcomes)

    def mix(self, x: np.ndarray) -> np.ndarray:
        """``sum_t x[t] * F[t]`` as an ``(n, m)`` array."""
        x = np.asarray(x)
        if self.is_sparse:
            rows, acts, outs, data = self._coo
            flat = np.bincount(acts * self.num_outcomes + outs, weights=data * x[rows],
                               minlength=self.num_actions * self.num_outcomes)
            return flat.reshape(self.num_actions, self.num_outcomes)
        if self.exact or x.dtype == object:
            total = np.zeros((self.num_actions, self.num_outcomes), dtype=object)
            total[...] = Fraction(0)
            for t in range(self.num_states):
                if x[t] != 0:
                    total = total + x[t] * self.matrices[t]
            return total
        return np.tensordot(x, self.matrices, axes=1)

    def expected_payment(self, x: np.ndarray, pay: np.ndarray) -> np.ndarray:
        """Per-action ``sum_t x[t] * F[t, a] @ pay[t]``; ``pay`` is ``(m,)`` or ``(k, m)``."""
        pay = np.asarray(pay)
        if pay.ndim == 1:
            return self.mix(x) @ pay
        x = np.asarray(x)
        if self.is_sparse:
            rows, acts, outs, data = self._coo
            return np.bincount(acts, weights=data * x[rows] * pay[rows, outs], minlength=self.num_actions)
        if self.exact or x.dtype == object or pay.dtype == object:
            total = np.zeros(self.num_actions, dtype=object)
            total[...] = Fraction(0)
            for t in range(self.num_states):
                if x[t] != 0:
                    total = total + x[t] * (self.matrices[t] @ pay[t])
            return total
        return np.einsum("t,tnm,tm->n", x, self.matrices, pay)

    def action_values(self, x: np.ndarray, pay: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unnormalized agent and principal utility of every action."""
        x = np.asarray(x)
        q = x.sum()
        paid = self.expected_payment(x, pay)
        reward = self.mix(x) @ self.rewards
        return paid - q * self.costs, reward - paid

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.outcomes == other.outcomes
            and _arrays_equal(self.prior, other.prior)
            and _arrays_equal(self.costs, other.costs)
            and _arrays_equal(self.rewards, other.rewards)
            and _arrays_equal(self.matrices, other.matrices)
        )

    __hash__ = None  # type: ignore[assignment]


def validate_instance(inst: Instance) -> list[str]:
    """Every invariant violation, each tagged with its location. Empty means valid."""
    issues: list[str] = []
    fl = inst.as_float
    if not np.all(np.isfinite(fl.prior)):
        issues.append("prior: non-finite entry")
    for t in np.flatnonzero(fl.prior < 0):
        issues.append(f"prior: negative entry at state {inst.states[t]}")
    total = sum(inst.prior) if inst.exact else float(fl.prior.sum())
    if abs(total - 1) > ROW_TOL:
        issues.append(f"prior: sums to {float(total):.17g}, not 1")
    if inst.num_actions == 0:
        issues.append("actions: empty action set")
    elif inst.costs[0] != 0:
        issues.append(f"opt-out cost nonzero: c[0] = {float(inst.costs[0]):.17g}")
    for i in np.flatnonzero(~(fl.costs >= 0)):
        issues.append(f"cost: negative or non-finite at action {inst.actions[i]}")
    for w in np.flatnonzero(~(fl.rewards >= 0)):
        issues.append(f"reward: negative or non-finite at outcome {inst.outcomes[w]}")
    if inst.is_sparse:
        rows, acts, _, data = inst._coo
        bad = np.unique(rows[~(data >= 0)] * inst.num_actions + acts[~(data >= 0)])
        for key in bad:
            t, a = divmod(int(key), inst.num_actions)
            issues.append(f"matrix: negative entry at state {inst.states[t]} action {inst.actions[a]}")
        sums = np.bincount(rows * inst.num_actions + acts, weights=data,
                           minlength=inst.num_states * inst.num_actions).reshape(inst.num_states, inst.num_actions)
    else:
        neg = np.argwhere(~(fl.matrices >= 0))
        for t, a in {(int(t), int(a)) for t, a, _ in neg}:
            issues.append(f"matrix: negative entry at state {inst.states[t]} action {inst.actions[a]}")
        sums = inst.matrices.sum(axis=2)
    for t, a in np.argwhere(np.vectorize(lambda v: abs(v - 1) > ROW_TOL, otypes=[bool])(sums)):
        issues.append(
            f"row not stochastic: state {inst.states[t]} action {inst.actions[a]} sums to {float(sums[t, a]):.17g}"
        )
    return issues


# ---------------------------------------------------------------------------
# Signaling and payments


@dataclass(frozen=True, eq=False)
class SignalingScheme:
    """``pi[t, j]`` is the probability of sending signal ``signals[j]`` in state ``t``."""

    signals: tuple[str, ...]
    pi: np.ndarray

    def __post_init__(self) -> None:
        pi = _freeze(self.pi, object if _is_exact(self.pi) else None)
        if pi.ndim != 2:
            raise ValueError("pi must be a (states, signals) matrix")
        signals = tuple(str(s) for s in self.signals) or tuple(f"s{j}" for j in range(pi.shape[1]))
        if len(signals) != pi.shape[1]:
            raise ValueError(f"{len(signals)} signal ids for {pi.shape[1]} columns")
        if len(set(signals)) != len(signals):
            raise ValueError("duplicate signal ids")
        if np.any(pi < 0):
            raise ValueError("negative signaling probability")
        for t, row in enumerate(pi):
            if abs(sum(row) - 1) > SCHEME_TOL:
                raise ValueError(f"pi row {t} sums to {float(sum(row)):.17g}")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "signals", signals)

    @property
    def num_signals(self) -> int:
        return len(self.signals)

    def index(self, s: str | int) -> int:
        if isinstance(s, str):
            if s not in self.signals:
                raise KeyError(f"unknown signal {s!r}")
            return self.signals.index(s)
        if isinstance(s, (int, np.integer)) and 0 <= s < self.num_signals:
            return int(s)
        raise KeyError(f"unknown signal {s!r}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignalingScheme):
            return NotImplemented
        return self.signals == other.signals and _arrays_equal(self.pi, other.pi)

    __hash__ = None  # type: ignore[assignment]


def full_revelation(inst: Instance) -> SignalingScheme:
    k = inst.num_states
    eye = np.eye(k, dtype=float)
    if inst.exact:
        eye = to_fraction_array(eye.astype(int))
    return SignalingScheme(tuple(f"s_{t}" for t in inst.states), eye)


class _Payments:
    kind: str = ""
    signal_indexed: bool = False

    def __eq__(self, other: object) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        return all(_arrays_equal(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__)

    __hash__ = None  # type: ignore[assignment]


def _check_nonneg(arr: np.ndarray, what: str) -> None:
    if np.any(~(arr.astype(float) >= 0)):
        raise ValueError(f"{what} must be nonnegative (limited liability)")


def _check_unit(arr: np.ndarray, what: str) -> None:
    f = arr.astype(float)
    if np.any(~((f >= 0) & (f <= 1))):
        raise ValueError(f"{what} must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class Ambiguous(_Payments):
    """Per-signal, per-state payments ``p[s, t, :]``."""

    p: np.ndarray
    kind = "ambiguous"
    signal_indexed = True

    def __post_init__(self) -> None:
        p = _freeze(self.p, object if _is_exact(self.p) else None)
        if p.ndim != 3:
            raise ValueError("ambiguous payments need shape (signals, states, outcomes)")
        _check_nonneg(p, "payments")
        object.__setattr__(self, "p", p)

    @property
    def num_signals(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class Menu(_Payments):
    """One revealed contract ``p[s, :]`` per signal."""

    p: np.ndarray
    kind = "menu"
    signal_indexed = True

    def __post_init__(self) -> None:
        p = _freeze(self.p, object if _is_exact(self.p) else None)
        if p.ndim != 2:
            raise ValueError("menu payments need shape (signals, outcomes)")
        _check_nonneg(p, "payments")
        object.__setattr__(self, "p", p)

    @property
    def num_signals(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True, eq=False)
class Single(_Payments):
    p: np.ndarray
    kind = "single"

    def __post_init__(self) -> None:
        p = _freeze(self.p, object if _is_exact(self.p) else None)
        if p.ndim != 1:
            raise ValueError("single contract must be a vector")
        _check_nonneg(p, "payments")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True, eq=False)
class LinearSingle(_Payments):
    alpha: float
    kind = "linear-single"

    def __post_init__(self) -> None:
        a = self.alpha if isinstance(self.alpha, Fraction) else float(self.alpha)
        _check_unit(np.array([a], dtype=object), "alpha")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True, eq=False)
class LinearMenu(_Payments):
    alpha: np.ndarray
    kind = "linear-menu"
    signal_indexed = True

    def __post_init__(self) -> None:
        a = _freeze(self.alpha, object if _is_exact(self.alpha) else None)
        if a.ndim != 1:
            raise ValueError("alpha must be a vector over signals")
        _check_unit(a, "alpha")
        object.__setattr__(self, "alpha", a)

    @property
    def num_signals(self) -> int:
        return self.alpha.size


PaymentScheme = Union[Ambiguous, Menu, Single, LinearSingle, LinearMenu]


def payment_at(inst: Instance, payments: PaymentScheme, j: int) -> np.ndarray:
    """Payments in force after signal ``j``: ``(m,)`` or ``(k, m)`` for ambiguous."""
    if isinstance(payments, Ambiguous):
        return payments.p[j]
    if isinstance(payments, Menu):
        return payments.p[j]
    if isinstance(payments, Single):
        return payments.p
    if isinstance(payments, LinearSingle):
        return payments.alpha * inst.rewards
    if isinstance(payments, LinearMenu):
        return payments.alpha[j] * inst.rewards
    raise TypeError(f"unknown payment scheme {type(payments).__name__}")


def expand_payments(inst: Instance, payments: PaymentScheme, num_signals: int) -> Ambiguous:
    """The same payments written as per-signal, per-state vectors."""
    rows = []
    for j in range(num_signals):
        p = np.asarray(payment_at(inst, payments, j))
        rows.append(p if p.ndim == 2 else np.broadcast_to(p, (inst.num_states, inst.num_outcomes)))
    return Ambiguous(np.array(rows, dtype=object if inst.exact or _is_exact(*rows) else float))


def explicit_payments(inst: Instance, payments: PaymentScheme) -> PaymentScheme:
    """Linear contracts rewritten as explicit vectors; others unchanged."""
    if isinstance(payments, LinearSingle):
        return Single(payments.alpha * inst.rewards)
    if isinstance(payments, LinearMenu):
        return Menu(np.outer(payments.alpha, inst.rewards))
    return payments


@dataclass(frozen=True, eq=False)
class Mechanism:
    scheme: SignalingScheme
    payments: PaymentScheme
    recommendations: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.payments.signal_indexed and self.payments.num_signals != self.scheme.num_signals:
            raise ValueError(
                f"payments cover {self.payments.num_signals} signals, scheme has {self.scheme.num_signals}"
            )
        if self.recommendations is not None:
            recs = tuple(int(a) for a in self.recommendations)
            if len(recs) != self.scheme.num_signals:
                raise ValueError("one recommendation per signal required")
            object.__setattr__(self, "recommendations", recs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mechanism):
            return NotImplemented
        return (
            self.scheme == other.scheme
            and self.payments == other.payments
            and self.recommendations == other.recommendations
        )

    __hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True, eq=False)
class Posterior:
    signal: str
    mass: np.ndarray
    total: Any
    belief: np.ndarray | None

    @property
    def defined(self) -> bool:
        return self.belief is not None


def _masses(inst: Instance, scheme: SignalingScheme) -> np.ndarray:
    if scheme.pi.shape[0] != inst.num_states:
        raise ValueError(f"scheme covers {scheme.pi.shape[0]} states, instance has {inst.num_states}")
    return inst.prior[:, None] * scheme.pi


def posterior(inst: Instance, scheme: SignalingScheme, s: str | int) -> Posterior:
    j = scheme.index(s)
    mass = _masses(inst, scheme)[:, j]
    total = mass.sum()
    belief = mass / total if total > 0 else None
    return Posterior(scheme.signals[j], mass, total, belief)


def _argbest(u: np.ndarray, v: np.ndarray, tol: float) -> int:
    cand = u >= u.max() - tol
    best_v = max(v[i] for i in np.flatnonzero(cand))
    for i in np.flatnonzero(cand):
        if v[i] >= best_v - tol:
            return int(i)
    raise AssertionError("unreachable")


def best_response(inst: Instance, post: Posterior, pay: np.ndarray, tol: float = BR_TOL) -> int:
    """Agent's choice after a signal, breaking ties for the principal then by index."""
    if not post.total > 0:
        raise ValueError(f"signal {post.signal!r} has zero probability")
    u, v = inst.action_values(post.mass, pay)
    return _argbest(u, v, tol)


def recommendations_or_best(inst: Instance, mech: Mechanism, tol: float = BR_TOL) -> tuple[int, ...]:
    if mech.recommendations is not None:
        return mech.recommendations
    masses = _masses(inst, mech.scheme)
    recs = []
    for j in range(mech.scheme.num_signals):
        x = masses[:, j]
        if x.sum() > 0:
            u, v = inst.action_values(x, payment_at(inst, mech.payments, j))
            recs.append(_argbest(u, v, tol))
        else:
            recs.append(0)
    return tuple(recs)


def with_best_responses(inst: Instance, mech: Mechanism, tol: float = BR_TOL) -> Mechanism:
    bare = Mechanism(mech.scheme, mech.payments, None)
    return Mechanism(mech.scheme, mech.payments, recommendations_or_best(inst, bare, tol))


def signal_utilities(inst: Instance, mech: Mechanism) -> list[Any]:
    """Unnormalized principal utility contributed by each signal."""
    recs = recommendations_or_best(inst, mech)
    masses = _masses(inst, mech.scheme)
    out = []
    for j, a in enumerate(recs):
        x = masses[:, j]
        if not x.sum() > 0:
            out.append(x.sum() * 0)
            continue
        _, v = inst.action_values(x, payment_at(inst, mech.payments, j))
        out.append(v[a])
    return out


def principal_utility(inst: Instance, mech: Mechanism) -> Any:
    vals = signal_utilities(inst, mech)
    total = sum(vals[1:], vals[0]) if vals else 0.0
    return total if inst.exact else float(total)


@dataclass(frozen=True)
class SignalIC:
    signal: str
    action: int
    deviation: int
    violation: Any
    probability: Any
    agent_utility: Any  # posterior-normalized utility of the recommended action


@dataclass(frozen=True)
class ICReport:
    max_violation: Any
    per_signal: tuple[SignalIC, ...]
    ir_ok: bool
    tol: float

    @property
    def ic(self) -> bool:
        return self.max_violation <= self.tol


def check_ic(inst: Instance, mech: Mechanism, tol: float = 1e-9) -> ICReport:
    if mech.recommendations is None:
        raise ValueError("check_ic needs recommendations")
    masses = _masses(inst, mech.scheme)
    rows = []
    worst: Any = 0
    ir_ok = True
    for j, a in enumerate(mech.recommendations):
        x = masses[:, j]
        q = x.sum()
        if not q > tol:
            continue
        u, _ = inst.action_values(x, payment_at(inst, mech.payments, j))
        best = max(u)
        dev = next(i for i in range(u.size) if u[i] == best)
        viol = u[dev] - u[a]
        worst = viol if viol > worst else worst
        if u[a] < -tol:
            ir_ok = False
        rows.append(SignalIC(mech.scheme.signals[j], a, dev, viol, q, u[a] / q))
    if not inst.exact:
        worst = float(worst)
    return ICReport(worst, tuple(rows), ir_ok, tol)


# ---------------------------------------------------------------------------
# Direct mechanisms


def make_direct(inst: Instance, mech: Mechanism, tol: float = 1e-9) -> Mechanism:
    """Merge signals that recommend the same action.

    Ambiguous payments are mixed with weights ``pi(s'|t) / pi(s|t)``.  Menu
    signals merge only when their contracts coincide; linear menus merge only
    signals sharing both alpha and recommendation.
    """
    recs = recommendations_or_best(inst, mech)
    mech = Mechanism(mech.scheme, mech.payments, recs)
    report = check_ic(inst, mech, tol)
    if not report.ic:
        raise ValueError(f"mechanism is not IC within {tol:g} (violation {float(report.max_violation):.3e})")
    pi = mech.scheme.pi
    pay = mech.payments
    live = [any(pi[:, j] != 0) for j in range(pi.shape[1])]
    groups: dict[Any, list[int]] = {}
    for j in range(pi.shape[1]):
        if isinstance(pay, LinearMenu):
            key: Any = (recs[j], pay.alpha[j])
        else:
            key = recs[j]
        groups.setdefault(key, []).append(j)
    # the contract kept for a group comes from its first signal that is ever sent
    rep = {g[0]: next((j for j in g if live[j]), g[0]) for g in groups.values()}
    if isinstance(pay, Menu):
        for members in groups.values():
            sent = [j for j in members if live[j]]
            for j in sent[1:]:
                if not _arrays_equal(pay.p[j], pay.p[sent[0]]):
                    raise ValueError(
                        "refusing to merge menu signals with different contracts; "
                        "such merges can lose utility"
                    )
    ordered = sorted(groups.values(), key=lambda g: g[0])
    new_pi = np.stack([sum((pi[:, j] for j in g[1:]), pi[:, g[0]]) for g in ordered], axis=1)
    new_ids = tuple(mech.scheme.signals[g[0]] for g in ordered)
    new_recs = tuple(recs[g[0]] for g in ordered)
    if isinstance(pay, Ambiguous):
        blocks = []
        for g, col in zip(ordered, new_pi.T):
            acc = sum((pi[:, j][:, None] * pay.p[j] for j in g[1:]), pi[:, g[0]][:, None] * pay.p[g[0]])
            safe = np.where(col > 0, col, 1)
            mixed = acc / safe[:, None]
            # states never sending this signal keep the first member's payments
            mixed = np.where((col > 0)[:, None], mixed, pay.p[rep[g[0]]])
            blocks.append(mixed)
        new_pay: PaymentScheme = Ambiguous(np.array(blocks, dtype=pay.p.dtype))
    elif isinstance(pay, Menu):
        new_pay = Menu(np.array([pay.p[rep[g[0]]] for g in ordered], dtype=pay.p.dtype))
    elif isinstance(pay, LinearMenu):
        new_pay = LinearMenu(np.array([pay.alpha[g[0]] for g in ordered], dtype=pay.alpha.dtype))
    else:
        new_pay = pay
    return Mechanism(SignalingScheme(new_ids, new_pi), new_pay, new_recs)


# ---------------------------------------------------------------------------
# Solver output


@dataclass(frozen=True, eq=False)
class SolveReport:
    mechanism: Mechanism
    utility: float
    lp_value: float | None
    ic_violation: float
    params: dict[str, Any] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)


def finish_report(
    inst: Instance,
    mech: Mechanism,
    lp_value: float | None,
    params: dict[str, Any],
    diagnostics: dict[str, Any],
) -> SolveReport:
    mech = mech if mech.recommendations is not None else with_best_responses(inst, mech)
    report = check_ic(inst, mech, 1e-9)
    diag = dict(diagnostics)
    diag.setdefault("ir_ok", report.ir_ok)
    if inst.bound_c > 1:
        diag.setdefault("scaled_bound", True)
    return SolveReport(
        mechanism=mech,
        utility=float(principal_utility(inst, mech)),
        lp_value=None if lp_value is None else float(lp_value),
        ic_violation=float(report.max_violation),
        params=dict(params),
        diagnostics=diag,
    )


def stack_rows(rows: Sequence[np.ndarray]) -> np.ndarray:
    return np.array(rows, dtype=object if _is_exact(*rows) else float)
