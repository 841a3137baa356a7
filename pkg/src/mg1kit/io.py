"""JSON config parsing and emission for chains and MAP/G/1 queues.

Chain config::

    {"type": "chain", "name": "SC1", "m0": 1, "m1": 1,
     "A": {"-1": [[0.5]], "0": [[0.3]], "1": [[0.2]]},
     "B": {"-1": [[0.5]], "0": [[0.8]], "1": [[0.2]]},
     "tail": null}

``tail`` may instead hold ``weights_a``/``profile_a``/``weights_b``/``profile_b``.
A preset is ``{"type": "preset", "name": "HC1", "params": {...}}`` and a
queue is ``{"type": "mapg1", "lambda0": ..., "lambda1": ..., "service": {...}}``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .chain import AnalyticTail, ChainSpec
from .errors import ValidationError
from .tails import weights_from_dict


def _blocks(d: dict, lo: int, name: str, shape) -> np.ndarray:
    keys = sorted(int(k) for k in d)
    if not keys or keys[0] != lo:
        raise ValidationError(f"{name} blocks must start at offset {lo}")
    if keys != list(range(lo, keys[-1] + 1)):
        raise ValidationError(f"{name} block offsets must be contiguous")
    out = [np.asarray(d[str(k)], dtype=float) for k in keys]
    for k, b in zip(keys, out):
        if b.shape != shape(k):
            raise ValidationError(f"{name}({k}) has shape {b.shape}, expected {shape(k)}")
    return np.stack(out) if out else np.zeros((0,) + shape(lo))


def chain_from_dict(d: dict) -> ChainSpec:
    """Build a :class:`ChainSpec` from its JSON form (see module docstring)."""
    kind = d.get("type", "chain")
    if kind == "preset":
        from . import presets

        fn = presets.PRESETS.get(str(d["name"]).upper())
        if fn is None:
            raise ValidationError(f"unknown preset {d['name']!r}")
        return fn(**d.get("params", {}))
    if kind == "mapg1":
        from .mapg1 import embed_chain

        mp, svc = queue_from_dict(d)
        return embed_chain(mp, svc, tol=d.get("tol", 1e-14))
    if kind != "chain":
        raise ValidationError(f"unknown config type {kind!r}")
    try:
        m0, m1 = int(d["m0"]), int(d["m1"])
        A, B = d["A"], d["B"]
    except KeyError as exc:
        raise ValidationError(f"chain config lacks field {exc.args[0]!r}") from None
    a = _blocks(A, -1, "A", lambda k: (m1, m1))
    bd = {k: v for k, v in B.items() if int(k) >= 1}
    b_head = (_blocks(bd, 1, "B", lambda k: (m0, m1)) if bd else None)
    for key, shape in (("-1", (m1, m0)), ("0", (m0, m0))):
        if key not in B:
            raise ValidationError(f"B({key}) is required")
        if np.shape(B[key]) != shape:
            raise ValidationError(f"B({key}) has shape {np.shape(B[key])}, expected {shape}")
    tail = None
    t = d.get("tail")
    if t:
        tail = AnalyticTail(weights_from_dict(t["weights_a"]), np.asarray(t["profile_a"], float),
                            weights_from_dict(t["weights_b"]), np.asarray(t["profile_b"], float))
    return ChainSpec(a_head=a, b_minus1=B["-1"], b0=B["0"], b_head=b_head, tail=tail,
                     name=d.get("name", "chain"))


def chain_to_dict(spec: ChainSpec) -> dict:
    out = {"type": "chain", "name": spec.name, "m0": spec.m0, "m1": spec.m1,
           "A": {str(k - 1): spec.a_head[k].tolist() for k in range(len(spec.a_head))},
           "B": {"-1": spec.b_minus1.tolist(), "0": spec.b0.tolist()}}
    for k in range(spec.kb):
        out["B"][str(k + 1)] = spec.b_head[k].tolist()
    if spec.tail is None:
        out["tail"] = None
    else:
        t = spec.tail
        out["tail"] = {"weights_a": t.weights_a.to_dict(), "profile_a": t.profile_a.tolist(),
                       "weights_b": t.weights_b.to_dict(), "profile_b": t.profile_b.tolist()}
    return out


def queue_from_dict(d: dict):
    from .mapg1 import MapSpec, service_from_dict

    try:
        mp = MapSpec(d["lambda0"], d["lambda1"])
    except KeyError as exc:
        raise ValidationError(f"queue config lacks field {exc.args[0]!r}") from None
    svc = service_from_dict(d["service"]) if "service" in d else None
    return mp, svc


def load_json(path) -> dict:
    p = Path(path)
    with p.open() as fh:
        return json.load(fh)


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, numpy scalars and arrays converted)."""

    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(f"not serializable: {type(o).__name__}")

    return json.dumps(obj, sort_keys=True, indent=2, default=conv) + "\n"
