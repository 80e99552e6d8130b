"""Canonical JSON documents for instances and mechanisms.

Reals are written with 17 significant digits so doubles survive a round
trip; exact (Fraction) data is written as ``"p/q"`` strings.  Keys are
sorted, which makes ``dumps(loads(text)) == text`` for canonical text.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

import numpy as np
import scipy.sparse as sp

from .model import (
    Ambiguous,
    Instance,
    LinearMenu,
    LinearSingle,
    Mechanism,
    Menu,
    SignalingScheme,
    Single,
    to_fraction_array,
)


class FormatError(ValueError):
    """Malformed instance or mechanism document."""


# ---------------------------------------------------------------------------
# canonical emitter


def _scalar(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return json.dumps(f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not np.isfinite(f):
            raise FormatError("non-finite number cannot be serialized")
        text = format(f, ".17g")
        if "." not in text and "e" not in text and "inf" not in text:
            text += ".0"
        return text
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _emit(obj: Any, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_emit(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in obj):
            return "[" + ", ".join(_scalar(x) for x in obj) + "]"
        return "[\n" + ",\n".join(inner + _emit(x, indent + 1) for x in obj) + "\n" + pad + "]"
    return _scalar(obj)


def dumps(doc: Any) -> str:
    return _emit(doc, 0) + "\n"


def _number(v: Any, where: str) -> Any:
    if isinstance(v, bool) or v is None:
        raise FormatError(f"{where}: expected a number")
    if isinstance(v, str):
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"{where}: bad rational {v!r}") from exc
    if isinstance(v, (int, float)):
        return float(v)
    raise FormatError(f"{where}: expected a number")


def _vec(vals: Any, where: str) -> list[Any]:
    if not isinstance(vals, list):
        raise FormatError(f"{where}: expected a list")
    return [_number(v, f"{where}[{i}]") for i, v in enumerate(vals)]


def _array(data: Any) -> np.ndarray:
    """Float array unless any entry is a Fraction, then everything becomes exact."""
    arr = np.array(data, dtype=object)
    if any(isinstance(v, Fraction) for v in arr.ravel()):
        return to_fraction_array(arr)
    return arr.astype(float)


def _value(v: Any) -> Any:
    if isinstance(v, Fraction):
        return v
    return float(v)


# ---------------------------------------------------------------------------
# instances


def instance_to_doc(inst: Instance, sparse: bool | None = None) -> dict[str, Any]:
    sparse = inst.is_sparse if sparse is None else sparse
    doc: dict[str, Any] = {
        "states": [{"id": s, "prior": _value(p)} for s, p in zip(inst.states, inst.prior)],
        "actions": [{"id": a, "cost": _value(c)} for a, c in zip(inst.actions, inst.costs)],
        "outcomes": [{"id": o, "reward": _value(r)} for o, r in zip(inst.outcomes, inst.rewards)],
    }
    mats: dict[str, Any] = {}
    for t, sid in enumerate(inst.states):
        if sparse:
            if inst.is_sparse:
                row = inst.matrices[t].tocoo()
                entries = sorted(zip(row.col.tolist(), row.data.tolist()))
                m = inst.num_outcomes
                mats[sid] = {"entries": [[c // m, c % m, float(v)] for c, v in entries]}
            else:
                mat = inst.matrices[t]
                mats[sid] = {
                    "entries": [[int(a), int(w), _value(mat[a, w])] for a, w in zip(*np.nonzero(mat != 0))]
                }
        else:
            mat = inst.state_matrix(t)
            mats[sid] = [[_value(v) for v in row] for row in mat]
    doc["matrices"] = mats
    return doc


def instance_from_doc(doc: Any) -> Instance:
    try:
        states = doc["states"]
        actions = doc["actions"]
        outcomes = doc["outcomes"]
        mats = doc["matrices"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"instance document missing key: {exc}") from exc
    try:
        sids = [str(s["id"]) for s in states]
        prior = [_number(s["prior"], f"states[{s['id']}].prior") for s in states]
        aids = [str(a["id"]) for a in actions]
        costs = [_number(a["cost"], f"actions[{a['id']}].cost") for a in actions]
        oids = [str(o["id"]) for o in outcomes]
        rewards = [_number(o["reward"], f"outcomes[{o['id']}].reward") for o in outcomes]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad state/action/outcome entry: {exc}") from exc
    if not isinstance(mats, dict) or set(mats) != set(sids):
        raise FormatError("matrices must map every state id to a matrix")
    n, m = len(aids), len(oids)
    sparse_form = any(isinstance(mats[s], dict) for s in sids)
    exact = False
    try:
        if sparse_form:
            rows, cols, vals = [], [], []
            for t, s in enumerate(sids):
                block = mats[s]
                if not isinstance(block, dict) or "entries" not in block:
                    raise FormatError(f"matrix for {s}: mix of dense and sparse forms")
                for e in block["entries"]:
                    a, w, v = int(e[0]), int(e[1]), _number(e[2], f"matrices[{s}]")
                    if not (0 <= a < n and 0 <= w < m):
                        raise FormatError(f"matrix for {s}: entry ({a}, {w}) out of range")
                    exact |= isinstance(v, Fraction)
                    rows.append(t)
                    cols.append(a * m + w)
                    vals.append(v)
            if exact or any(isinstance(v, Fraction) for v in prior + costs + rewards):
                dense = np.full((len(sids), n, m), Fraction(0), dtype=object)
                for t, c, v in zip(rows, cols, vals):
                    dense[t, c // m, c % m] = Fraction(v)
                matrices: Any = dense
            else:
                matrices = sp.csr_matrix((vals, (rows, cols)), shape=(len(sids), n * m))
        else:
            blocks = []
            for s in sids:
                mat = mats[s]
                if not isinstance(mat, list) or len(mat) != n:
                    raise FormatError(f"matrix for {s} must have {n} rows")
                rows_ = []
                for a, row in enumerate(mat):
                    vals_ = _vec(row, f"matrices[{s}][{a}]")
                    if len(vals_) != m:
                        raise FormatError(f"matrix for {s} row {a} must have {m} entries")
                    rows_.append(vals_)
                blocks.append(rows_)
            matrices = _array(blocks) if blocks else np.zeros((0, n, m))
        exact = sparse_form and exact or (not sparse_form and matrices.dtype == object)
        if exact or any(isinstance(v, Fraction) for v in prior + costs + rewards):
            prior_a, costs_a, rewards_a = (to_fraction_array(x) for x in (prior, costs, rewards))
            if not isinstance(matrices, np.ndarray) or matrices.dtype != object:
                matrices = to_fraction_array(matrices.toarray().reshape(len(sids), n, m)
                                             if sp.issparse(matrices) else matrices)
        else:
            prior_a, costs_a, rewards_a = (np.array(x, dtype=float) for x in (prior, costs, rewards))
        return Instance(prior_a, costs_a, rewards_a, matrices, tuple(sids), tuple(aids), tuple(oids))
    except FormatError:
        raise
    except (ValueError, TypeError, IndexError, KeyError) as exc:
        raise FormatError(str(exc)) from exc


def dump_instance(inst: Instance, sparse: bool | None = None) -> str:
    return dumps(instance_to_doc(inst, sparse))


def load_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    return instance_from_doc(doc)


# ---------------------------------------------------------------------------
# mechanisms


def mechanism_to_doc(inst: Instance, mech: Mechanism) -> dict[str, Any]:
    sig = mech.scheme.signals
    pay = mech.payments
    data: Any
    if isinstance(pay, Ambiguous):
        data = {
            s: {t: [_value(v) for v in pay.p[j, ti]] for ti, t in enumerate(inst.states)}
            for j, s in enumerate(sig)
        }
    elif isinstance(pay, Menu):
        data = {s: [_value(v) for v in pay.p[j]] for j, s in enumerate(sig)}
    elif isinstance(pay, Single):
        data = [_value(v) for v in pay.p]
    elif isinstance(pay, LinearSingle):
        data = _value(pay.alpha)
    elif isinstance(pay, LinearMenu):
        data = {s: _value(pay.alpha[j]) for j, s in enumerate(sig)}
    else:
        raise TypeError(f"unknown payment scheme {type(pay).__name__}")
    return {
        "scheme": {
            "signals": list(sig),
            "pi": {t: [_value(v) for v in mech.scheme.pi[ti]] for ti, t in enumerate(inst.states)},
        },
        "payments": {"kind": pay.kind, "data": data},
        "recommendations": None
        if mech.recommendations is None
        else {s: inst.actions[a] for s, a in zip(sig, mech.recommendations)},
    }


def mechanism_from_doc(inst: Instance, doc: Any) -> Mechanism:
    try:
        scheme_doc = doc["scheme"]
        signals = [str(s) for s in scheme_doc["signals"]]
        pi_doc = scheme_doc["pi"]
        if set(pi_doc) != set(inst.states):
            raise FormatError("scheme.pi must have one row per instance state")
        pi = _array([_vec(pi_doc[t], f"pi[{t}]") for t in inst.states])
        if pi.shape != (inst.num_states, len(signals)):
            raise FormatError("scheme.pi rows must have one entry per signal")
        kind = doc["payments"]["kind"]
        data = doc["payments"]["data"]
        if kind == "ambiguous":
            arr = [[_vec(data[s][t], f"payments[{s}][{t}]") for t in inst.states] for s in signals]
            pay: Any = Ambiguous(_array(arr))
        elif kind == "menu":
            pay = Menu(_array([_vec(data[s], f"payments[{s}]") for s in signals]))
        elif kind == "single":
            pay = Single(_array(_vec(data, "payments")))
        elif kind == "linear-single":
            pay = LinearSingle(_number(data, "payments.alpha"))
        elif kind == "linear-menu":
            pay = LinearMenu(_array([_number(data[s], f"alpha[{s}]") for s in signals]))
        else:
            raise FormatError(f"unknown payment kind {kind!r}")
        width = None
        if kind in ("menu", "ambiguous", "single"):
            width = pay.p.shape[-1]
        if width is not None and width != inst.num_outcomes:
            raise FormatError("payment vectors must have one entry per outcome")
        recs_doc = doc.get("recommendations")
        recs = None
        if recs_doc is not None:
            index = {a: i for i, a in enumerate(inst.actions)}
            recs = tuple(index[str(recs_doc[s])] for s in signals)
        return Mechanism(SignalingScheme(tuple(signals), pi), pay, recs)
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"bad mechanism document: {exc!r}") from exc


def dump_mechanism(inst: Instance, mech: Mechanism) -> str:
    return dumps(mechanism_to_doc(inst, mech))


def load_mechanism(inst: Instance, text: str) -> Mechanism:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from exc
    return mechanism_from_doc(inst, doc)
