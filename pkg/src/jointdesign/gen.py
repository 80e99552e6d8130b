"""Instance generators and closed-form mechanism evaluations."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .model import (
    ICReport,
    Instance,
    Mechanism,
    Menu,
    SignalingScheme,
    Single,
    check_ic,
    full_revelation,
    principal_utility,
    signal_utilities,
    to_fraction_array,
    with_best_responses,
)

F = Fraction


# ---------------------------------------------------------------------------
# Graphs


@dataclass(frozen=True)
class Graph:
    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        seen = set()
        norm = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise ValueError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise ValueError(f"self-loop at {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return [sorted(a) for a in adj]

    def is_independent(self, vertices: Iterable[int]) -> bool:
        vs = set(vertices)
        return not any(u in vs and v in vs for u, v in self.edges)

    def is_dominating(self, vertices: Iterable[int]) -> bool:
        vs = set(vertices)
        adj = self.neighbors()
        return all(v in vs or any(w in vs for w in adj[v]) for v in range(self.num_vertices))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, tuple((u, v) for u in range(n) for v in range(u + 1, n)))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, ())


def parse_graph(text: str) -> Graph:
    """``|V| |E|`` on the first line, then one ``u v`` pair per line."""
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0]) != 2:
        raise ValueError("graph header must be '|V| |E|'")
    nv, ne = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != ne:
        raise ValueError(f"header declares {ne} edges, found {len(body)}")
    edges = []
    for parts in body:
        if len(parts) != 2:
            raise ValueError(f"bad edge line: {' '.join(parts)}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph(nv, tuple(edges))


def format_graph(g: Graph) -> str:
    return "\n".join([f"{g.num_vertices} {len(g.edges)}"] + [f"{u} {v}" for u, v in g.edges]) + "\n"


# ---------------------------------------------------------------------------
# Small fixed instances


def _num(exact: bool):
    return (lambda v: F(v)) if exact else (lambda v: float(F(v)))


def gen_prop2(exact: bool = False) -> Instance:
    """Three equally likely states where the relaxation's supremum is not attained."""
    q = _num(exact)
    z, h, one = q(0), q(F(1, 2)), q(1)
    f1 = [[z, h, h, z], [z, z, z, one], [z, one, z, z]]
    f2 = [[z, z, one, z], [one, z, z, z], [z, z, z, one]]
    f3 = [[h, z, h, z], [z, z, z, one], [one, z, z, z]]
    prior = [q(F(1, 3))] * 3
    costs = [z, z, q(F(1, 8))]
    rewards = [one, h, z, z]
    dt = object if exact else float
    return Instance(
        np.array(prior, dtype=dt), np.array(costs, dtype=dt), np.array(rewards, dtype=dt),
        np.array([f1, f2, f3], dtype=dt), states=("theta1", "theta2", "theta3"),
        actions=("a1", "a2", "a3"), outcomes=("w1", "w2", "w3", "w4"),
    )


def gen_prop4(delta: float | Fraction | str, exact: bool = False) -> Instance:
    """Two actions, two outcomes, three states; direct mechanisms lose utility here."""
    d = F(delta) if exact else float(F(delta)) if isinstance(delta, str) else delta
    if not 0 < float(d) < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    q = _num(exact)
    mats = [
        [[q(1), q(0)], [q(1), q(0)]],
        [[q(F(1, 10)), q(F(9, 10))], [q(F(8, 10)), q(F(2, 10))]],
        [[q(F(2, 10)), q(F(8, 10))], [q(1), q(0)]],
    ]
    dt = object if exact else float
    prior = [1 - 2 * d, d, d]
    return Instance(
        np.array(prior, dtype=dt), np.array([q(0), q(5)], dtype=dt), np.array([q(10), q(0)], dtype=dt),
        np.array(mats, dtype=dt), states=("theta1", "theta2", "theta3"),
        actions=("a1", "a2"), outcomes=("w1", "w2"),
    )


def prop2_mechanism(eps: float | Fraction, exact: bool = False) -> Mechanism:
    """Three-signal ambiguous mechanism worth ``9/12 - 9*eps/8`` on :func:`gen_prop2`."""
    e = F(eps) if exact else float(eps)
    q = _num(exact)
    dt = object if exact else float
    z = q(0)
    pi = np.array([[z, z, q(1)], [z, 1 - 3 * e, 3 * e], [z, z, q(1)]], dtype=dt)
    p = np.full((3, 3, 4), z, dtype=dt)
    p[2, 1, 3] = 1 / (12 * e) + q(F(1, 8))
    return Mechanism(SignalingScheme(("s1", "s2", "s3"), pi), _ambiguous(p), (0, 1, 2))


def _ambiguous(p: np.ndarray):
    from .model import Ambiguous

    return Ambiguous(p)


# ---------------------------------------------------------------------------
# Menu hardness construction


@dataclass(frozen=True)
class MenuHardnessParams:
    num_vertices: int
    kbar: Fraction
    khat: Fraction
    delta: Fraction

    @classmethod
    def for_vertices(cls, nv: int, require_integral: bool = True) -> "MenuHardnessParams":
        if nv <= 0:
            raise ValueError("graph must have vertices")
        if require_integral and nv % 900:
            raise ValueError("|V| must be divisible by 900 so that 33|V|/100 and |V|/9 are integers")
        return cls(nv, F(33 * nv, 100), F(nv, 9), F(1, nv * 10**5))

    @property
    def payment(self) -> Fraction:
        """Payment on each outcome of an independent block."""
        return F(3, 16) * self.kbar / (self.delta * (self.kbar - self.khat))


def menu_hardness_layout(nv: int) -> dict[str, Any]:
    """Index helpers: action blocks ``bar``, ``tilde``, ``hat`` then ``star``; outcomes ``w_v``, star, empty."""
    return {
        "bar": np.arange(nv),
        "tilde": nv + np.arange(nv),
        "hat": 2 * nv + np.arange(nv),
        "star": 3 * nv,
        "w": np.arange(nv),
        "w_star": nv,
        "w_empty": nv + 1,
    }


def gen_menu_hardness(g: Graph, require_integral: bool = True) -> Instance:
    """States ``theta_v``, actions ``bar a_v, tilde a_v, hat a_v, a*``; sparse matrices.

    Zero-cost ``bar a_0`` comes first so that index 0 is an opt-out action.
    """
    prm = MenuHardnessParams.for_vertices(g.num_vertices, require_integral)
    nv = g.num_vertices
    lay = menu_hardness_layout(nv)
    n, m = 3 * nv + 1, nv + 2
    delta, khat = float(prm.delta), float(prm.khat)
    adj = [set(a) for a in g.neighbors()]
    rows, cols, vals = [], [], []

    def put(t: int, a: np.ndarray | int, w: np.ndarray | int, v: np.ndarray | float) -> None:
        a, w = np.atleast_1d(a), np.atleast_1d(w)
        v = np.broadcast_to(np.asarray(v, dtype=float), a.shape)
        rows.append(np.full(a.shape, t))
        cols.append(a * m + w)
        vals.append(v)

    verts = np.arange(nv)
    for t in range(nv):
        put(t, lay["star"], lay["w_star"], 0.5)
        put(t, lay["star"], t, delta)
        put(t, lay["star"], lay["w_empty"], float(F(1, 2) - prm.delta))
        put(t, lay["hat"], lay["w_star"], 0.25)
        others = verts[verts != t]
        put(t, lay["hat"][others], lay["w_empty"], 0.75)
        put(t, lay["hat"][t], t, float(prm.khat * prm.delta))
        put(t, lay["hat"][t], lay["w_empty"], float(F(3, 4) - prm.khat * prm.delta))
        put(t, lay["bar"], verts, delta / 10)
        put(t, lay["bar"], lay["w_empty"], float(1 - prm.delta / 10))
        linked = np.array([v in adj[t] for v in verts])
        put(t, lay["tilde"][linked], verts[linked], 1.0)
        put(t, lay["tilde"][~linked], lay["w_empty"], 1.0)
    mats = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, n * m)
    )
    costs = np.zeros(n)
    costs[lay["hat"]] = 1 / 16
    costs[lay["star"]] = 1 / 4
    rewards = np.zeros(m)
    rewards[lay["w_star"]] = 1.0
    actions = (
        [f"bar{v}" for v in range(nv)] + [f"tilde{v}" for v in range(nv)]
        + [f"hat{v}" for v in range(nv)] + ["star"]
    )
    outcomes = [f"w{v}" for v in range(nv)] + ["w_star", "w_empty"]
    return Instance(
        np.full(nv, 1.0 / nv), costs, rewards, mats,
        states=tuple(f"theta{v}" for v in range(nv)), actions=tuple(actions), outcomes=tuple(outcomes),
    )


@dataclass(frozen=True, eq=False)
class MenuHardnessReport:
    mechanism: Mechanism
    signal_utility: tuple[float, ...]  # posterior-normalized principal utility per block signal
    agent_star: float  # posterior-normalized agent utility of a* after a block signal
    agent_hat: float  # same for hat a_v with v in the block
    agent_bar: float  # same for bar a_v with v in the block
    total: float
    ic: ICReport


def eval_menu_hardness_mechanism(
    inst: Instance, graph: Graph, parts: Sequence[Sequence[int]]
) -> MenuHardnessReport:
    """Four-signal mechanism built from three disjoint independent sets."""
    nv = graph.num_vertices
    if inst.num_states != nv:
        raise ValueError("instance does not match the graph")
    prm = MenuHardnessParams.for_vertices(nv, require_integral=False)
    if len(parts) != 3:
        raise ValueError("exactly three parts are required")
    blocks = [sorted(set(int(v) for v in p)) for p in parts]
    flat = [v for b in blocks for v in b]
    if len(set(flat)) != len(flat):
        raise ValueError("parts must be disjoint")
    for b in blocks:
        if len(b) != prm.kbar:
            raise ValueError(f"each part needs {prm.kbar} vertices, got {len(b)}")
        if not graph.is_independent(b):
            raise ValueError("a part is not an independent set")
        if any(not 0 <= v < nv for v in b):
            raise ValueError("vertex out of range")
    rest = sorted(set(range(nv)) - set(flat))
    lay = menu_hardness_layout(nv)
    groups = blocks + ([rest] if rest else [])
    pi = np.zeros((nv, len(groups)))
    pay = np.zeros((len(groups), inst.num_outcomes))
    for j, grp in enumerate(groups):
        pi[grp, j] = 1.0
        if j < 3:
            pay[j, lay["w"][grp]] = float(prm.payment)
    ids = ("s1", "s2", "s3", "s_empty")[: len(groups)]
    mech = with_best_responses(inst, Mechanism(SignalingScheme(ids, pi), Menu(pay)))
    ic = check_ic(inst, mech, 1e-9)
    per = signal_utilities(inst, mech)
    normalized = []
    for j in range(3):
        q = float(inst.prior[blocks[j]].sum())
        normalized.append(float(per[j]) / q)
    # agent values on the first block
    x = inst.prior * pi[:, 0]
    q = x.sum()
    u, _ = inst.action_values(x, pay[0])
    v0 = blocks[0][0]
    return MenuHardnessReport(
        mechanism=mech,
        signal_utility=tuple(normalized),
        agent_star=float(u[lay["star"]] / q),
        agent_hat=float(u[lay["hat"][v0]] / q),
        agent_bar=float(u[lay["bar"][v0]] / q),
        total=float(principal_utility(inst, mech)),
        ic=ic,
    )


# ---------------------------------------------------------------------------
# Single-contract hardness construction

# Within each block of five actions the zero-cost action is listed first, so
# the first action overall is an opt-out action.
_BLOCK = 5


def single_hardness_action(block: int, t: int) -> int:
    """Index of the construction's ``a_t`` (``t`` in 1..5) in block ``block`` (0-based)."""
    return block * _BLOCK + (0 if t == 5 else t)


def gen_single_hardness(g: Graph, exact: bool = False) -> Instance:
    """``2N`` states, ``2N`` blocks of five actions, outcomes ``w_1..w_N`` and a dummy."""
    nv = g.num_vertices
    adj = g.neighbors()
    if any(len(a) > 3 for a in adj):
        raise ValueError("maximum degree must be at most 3")
    k, n, m = 2 * nv, 2 * nv * _BLOCK, nv + 1
    dummy = nv
    targets = np.full((k, n), dummy, dtype=int)
    for i in range(nv):
        nb = adj[i] + [i] * (3 - len(adj[i]))
        for j in range(3):
            targets[i, single_hardness_action(i, j + 1)] = nb[j]
        targets[i, single_hardness_action(i, 4)] = i
    for i in range(nv, 2 * nv):
        # the zero-cost action of block i reaches the outcome of vertex i - N
        targets[i, single_hardness_action(i, 5)] = i - nv
    one = F(1) if exact else 1.0
    half = F(1, 2) if exact else 0.5
    zero = F(0) if exact else 0.0
    dt = object if exact else float
    if exact or k * n * m <= 5_000_000:
        mats = np.full((k, n, m), zero, dtype=dt)
        tt, aa = np.meshgrid(np.arange(k), np.arange(n), indexing="ij")
        mats[tt, aa, targets] = one
    else:
        rows = np.repeat(np.arange(k), n)
        cols = np.tile(np.arange(n), k) * m + targets.ravel()
        mats = sp.csr_matrix((np.ones(k * n), (rows, cols)), shape=(k, n * m))
    costs = np.array([zero, half, half, half, half] * (2 * nv), dtype=dt)
    rewards = np.array([one] * nv + [zero], dtype=dt)
    prior = np.array([F(1, k) if exact else 1.0 / k] * k, dtype=dt)
    actions = tuple(f"b{b}_a{t}" for b in range(2 * nv) for t in (5, 1, 2, 3, 4))
    return Instance(
        prior, costs, rewards, mats,
        states=tuple(f"theta{i + 1}" for i in range(k)), actions=actions,
        outcomes=tuple(f"w{i + 1}" for i in range(nv)) + ("w_dummy",),
    )


@dataclass(frozen=True, eq=False)
class SingleHardnessReport:
    mechanism: Mechanism
    utility: Any
    closed_form: Any
    ic: ICReport


def eval_single_hardness_mechanism(inst: Instance, graph: Graph, domset: Iterable[int]) -> SingleHardnessReport:
    """Full revelation with the contract paying 1/2 on every dominating vertex's outcome."""
    nv = graph.num_vertices
    if inst.num_states != 2 * nv:
        raise ValueError("instance does not match the graph")
    dom = sorted(set(int(v) for v in domset))
    if any(not 0 <= v < nv for v in dom):
        raise ValueError("vertex out of range")
    if not graph.is_dominating(dom):
        raise ValueError("vertex set is not dominating")
    if inst.exact:
        p = to_fraction_array(np.zeros(inst.num_outcomes, dtype=int))
        for v in dom:
            p[v] = F(1, 2)
        closed = F(1, 2) + F(1, 4) - F(len(dom), 4 * nv)
    else:
        p = np.zeros(inst.num_outcomes)
        p[dom] = 0.5
        closed = 0.5 + 0.25 - len(dom) / (4 * nv)
    mech = with_best_responses(inst, Mechanism(full_revelation(inst), Single(p)))
    ic = check_ic(inst, mech, 1e-9)
    if not ic.ic:
        raise AssertionError("full-revelation mechanism is not IC")
    return SingleHardnessReport(mech, principal_utility(inst, mech), closed, ic)


# ---------------------------------------------------------------------------
# Random instances


def gen_random(
    n: int, m: int, num_states: int, seed: int, reward_bound: float = 1.0
) -> Instance:
    """Dirichlet(1) rows, sorted costs with a free first action, uniform rewards."""
    if n < 1 or m < 1 or num_states < 1:
        raise ValueError("n, m and num_states must be positive")
    rng = np.random.default_rng(seed)
    mats = rng.dirichlet(np.ones(m), size=(num_states, n))
    mats /= mats.sum(axis=2, keepdims=True)
    costs = np.concatenate([[0.0], np.sort(rng.uniform(0.0, reward_bound / 4, n - 1))])
    rewards = rng.uniform(0.0, reward_bound, m)
    prior = 1.0 + rng.uniform(-0.5, 0.5, num_states)
    prior /= prior.sum()
    return Instance(prior, costs, rewards, mats)
