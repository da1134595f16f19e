"""Problem files, command dispatch and JSON reports.

File grammar (one item per line, `#` starts a comment):

    version: 1
    kind: constraint | semilinear | variational | stationary | mpec
    n: 1
    d: 2
    scenarios: s1 0.5, s2 0.5 nonatomic
    xbar: 0
    zbar: 0.5 0.5
    <option>: <value>

    node phi s1          # blocks: node | scalar | set | data, then a role and an optional scenario id
      type: affine
      A: -1 1 0; 0 0 1   # matrix rows are separated by ';'
      b: -1 0
    end
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import oracle, systems
from .geometry import PolyhedralSet
from .multifunction import (
    AffineMap,
    BoxValued,
    ComposedNormalCone,
    Indicator,
    MaxAffine,
    NormalConeMap,
    Polynomial,
    PolyScalar,
    Quadratic,
    SmoothMap,
    SmoothPlusMap,
    select_vars,
)
from .stochastic import Atom, RandomIntegrand, ScenarioModel
from .wellposedness import CERTIFIED, INCONCLUSIVE, LIPSCHITZ_LIKE, METRIC_REGULARITY, REFUTED

SCHEMA = "covar-report/1"
VERSION = 1

KINDS = ("constraint", "semilinear", "variational", "stationary", "mpec")
NODE_TYPES = ("affine", "polynomial", "normal_cone", "affine_plus_normal_cone", "composed_normal_cone", "box")
SCALAR_TYPES = ("quadratic", "max_affine", "indicator", "polynomial")
SET_TYPES = ("hrep", "orthant", "box", "full", "point")

INT_KEYS = {"version", "n", "d", "dim", "sign", "per_axis", "grid", "seed"}
FLOAT_KEYS = {"weight", "eta", "rho", "radius", "tau_opt", "gamma", "const", "search"}
VECTOR_KEYS = {"b", "c", "beta", "center_b", "radius_b", "xbar", "zbar", "zstar", "slater_point", "lo", "hi",
               "at", "vars"}
MATRIX_KEYS = {"A", "Q", "a", "B", "center_A", "radius_A"}
WORD_KEYS = {"kind", "type", "set", "route", "property", "normally_regular", "truncate"}
LIST_KEYS = {"poly"}
TOP_KEYS = {"version", "kind", "n", "d", "scenarios", "xbar", "zbar", "zstar", "seed", "eta", "rho", "per_axis",
            "grid", "radius", "tau_opt", "route", "slater_point", "normally_regular", "truncate", "property",
            "search"}
BLOCK_KEYS = {
    "node": {"type", "A", "b", "poly", "set", "vars", "center_A", "center_b", "radius_A", "radius_b"},
    "scalar": {"type", "Q", "c", "const", "a", "beta", "set", "poly"},
    "set": {"type", "A", "b", "dim", "sign", "lo", "hi", "at"},
    "data": {"a", "B", "beta"},
}
# set blocks take any name; K, O, C and graph_G carry meaning for the system kinds
ROLES = {"node": ("phi", "G"), "scalar": ("f", "psi", "cost"), "data": ("scenario",)}

EXIT_OK, EXIT_ERROR, EXIT_REFUTED, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class SchemaError(ValueError):
    def __init__(self, msg: str, line: int | None = None, field: str | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(where + msg)
        self.line, self.field = line, field


class DimensionError(ValueError):
    def __init__(self, msg: str, field: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


# ---------------------------------------------------------------------------
# parsed representation


@dataclass(frozen=True)
class Block:
    kind: str  # node | scalar | set | data
    role: str
    scenario: str | None
    fields: tuple  # ((key, value), ...) in file order

    def get(self, key, default=None):
        for k, v in self.fields:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class ProblemFile:
    version: int
    kind: str
    n: int
    d: int
    scenarios: tuple  # ((id, weight, nonatomic), ...)
    xbar: tuple
    zbar: tuple
    options: tuple = ()  # sorted ((key, value), ...)
    blocks: tuple = field(default_factory=tuple)

    def option(self, key, default=None):
        return dict(self.options).get(key, default)

    def blocks_of(self, kind: str, role: str) -> list[Block]:
        return [b for b in self.blocks if b.kind == kind and b.role == role]


def _fmt_num(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _parse_value(key: str, text: str, line: int):
    text = text.strip()
    try:
        if key in INT_KEYS:
            return int(text)
        if key in FLOAT_KEYS:
            return float(text)
        if key in VECTOR_KEYS:
            return tuple(float(t) for t in text.replace(",", " ").split())
        if key in MATRIX_KEYS:
            rows = [r for r in text.split(";") if r.strip()]
            M = tuple(tuple(float(t) for t in r.replace(",", " ").split()) for r in rows)
            if len({len(r) for r in M}) > 1:
                raise DimensionError("rows of different lengths", key)
            return M
        if key in WORD_KEYS:
            return text
    except ValueError as exc:
        if isinstance(exc, DimensionError):
            raise
        raise SchemaError(f"cannot read {key!r}: {exc}", line, key) from None
    raise SchemaError(f"unknown field {key!r}", line, key)


def _parse_scenarios(text: str, line: int) -> tuple:
    out = []
    for item in text.split(","):
        parts = item.split()
        if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "nonatomic"):
            raise SchemaError("scenarios are written 'id weight [nonatomic]'", line, "scenarios")
        try:
            w = float(parts[1])
        except ValueError:
            raise SchemaError(f"bad weight {parts[1]!r}", line, "scenarios") from None
        out.append((parts[0], w, len(parts) == 3))
    return tuple(out)


def parse_text(text: str) -> ProblemFile:
    top: dict = {}
    blocks: list[Block] = []
    cur = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()
        if cur is None and head[0] in BLOCK_KEYS and ":" not in head[0]:
            if len(head) not in (2, 3):
                raise SchemaError(f"block header is '{head[0]} <role> [scenario]'", ln)
            if head[0] == "set":
                if not head[1].isidentifier() or len(head) != 2:
                    raise SchemaError("set header is 'set <name>'", ln)
            elif head[1] not in ROLES[head[0]]:
                raise SchemaError(f"unknown {head[0]} role {head[1]!r}; expected one of {', '.join(ROLES[head[0]])}", ln)
            cur = (head[0], head[1], head[2] if len(head) == 3 else None, [], ln)
            continue
        if line == "end":
            if cur is None:
                raise SchemaError("'end' outside a block", ln)
            blocks.append(Block(cur[0], cur[1], cur[2], tuple(cur[3])))
            cur = None
            continue
        if ":" not in line:
            raise SchemaError(f"expected 'key: value', got {line!r}", ln)
        key, val = (s.strip() for s in line.split(":", 1))
        if cur is not None:
            if key not in BLOCK_KEYS[cur[0]]:
                raise SchemaError(f"field {key!r} is not allowed in a {cur[0]} block", ln, key)
            if key in LIST_KEYS:
                cur[3].append((key, val))
            else:
                cur[3].append((key, _parse_value(key, val, ln)))
            continue
        if key not in TOP_KEYS:
            raise SchemaError(f"unknown field {key!r}", ln, key)
        top[key] = _parse_scenarios(val, ln) if key == "scenarios" else _parse_value(key, val, ln)
    if cur is not None:
        raise SchemaError(f"block opened on line {cur[4]} is not closed", cur[4])
    for req in ("version", "kind", "n", "d", "scenarios", "xbar", "zbar"):
        if req not in top:
            raise SchemaError(f"missing required field {req!r}", None, req)
    if top["version"] != VERSION:
        raise SchemaError(f"unsupported version {top['version']}", None, "version")
    if top["kind"] not in KINDS:
        raise SchemaError(f"unknown system kind {top['kind']!r}; expected one of {', '.join(KINDS)}", None, "kind")
    opts = tuple(sorted((k, v) for k, v in top.items()
                        if k not in {"version", "kind", "n", "d", "scenarios", "xbar", "zbar"}))
    # merge repeated poly lines into one tuple per block field
    merged = []
    for b in blocks:
        fields, polys = [], []
        for k, v in b.fields:
            if k == "poly":
                polys.append(v)
            else:
                fields.append((k, v))
        if polys:
            fields.append(("poly", tuple(polys)))
        merged.append(Block(b.kind, b.role, b.scenario, tuple(fields)))
    pf = ProblemFile(VERSION, top["kind"], top["n"], top["d"], top["scenarios"], top["xbar"], top["zbar"],
                     opts, tuple(merged))
    validate(pf)
    return pf


def parse(path) -> ProblemFile:
    return parse_text(Path(path).read_text())


def _fmt_value(key, v) -> str:
    if key in LIST_KEYS:
        raise AssertionError
    if isinstance(v, str):
        return v
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return _fmt_num(v)
    if v and isinstance(v[0], tuple):
        return "; ".join(" ".join(_fmt_num(x) for x in r) for r in v)
    return " ".join(_fmt_num(x) for x in v)


def serialize(pf: ProblemFile) -> str:
    out = [f"version: {pf.version}", f"kind: {pf.kind}", f"n: {pf.n}", f"d: {pf.d}",
           "scenarios: " + ", ".join(f"{i} {_fmt_num(w)}" + (" nonatomic" if na else "")
                                     for i, w, na in pf.scenarios),
           f"xbar: {_fmt_value('xbar', pf.xbar)}", f"zbar: {_fmt_value('zbar', pf.zbar)}"]
    for k, v in pf.options:
        out.append(f"{k}: {_fmt_value(k, v)}")
    for b in pf.blocks:
        out.append("")
        out.append(f"{b.kind} {b.role}" + (f" {b.scenario}" if b.scenario else ""))
        for k, v in b.fields:
            if k == "poly":
                out.extend(f"  poly: {p}" for p in v)
            else:
                out.append(f"  {k}: {_fmt_value(k, v)}")
        out.append("end")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# validation and construction


def _mat(b: Block, key: str, shape: tuple | None = None) -> np.ndarray:
    v = b.get(key)
    if v is None:
        raise SchemaError(f"{b.kind} {b.role}: missing field {key!r}", None, key)
    M = np.array(v, float)
    if shape is not None:
        r, c = shape
        if (r is not None and M.shape[0] != r) or (c is not None and M.shape[1] != c):
            raise DimensionError(f"expected shape {shape}, got {M.shape}", f"{b.role}.{key}")
    return M


def _vecf(b: Block, key: str, size: int | None, default=None) -> np.ndarray | None:
    v = b.get(key)
    if v is None:
        if default is None:
            return None
        return np.asarray(default, float)
    x = np.array(v, float)
    if size is not None and x.size != size:
        raise DimensionError(f"expected {size} entries, got {x.size}", f"{b.role}.{key}")
    return x


def build_set(b: Block, dim: int | None = None) -> PolyhedralSet:
    t = b.get("type", "hrep")
    if t not in SET_TYPES:
        raise SchemaError(f"unknown set type {t!r}; expected one of {', '.join(SET_TYPES)}", None, "type")
    if t == "hrep":
        A = _mat(b, "A", (None, dim))
        bb = _vecf(b, "b", A.shape[0])
        if bb is None:
            raise SchemaError(f"set {b.role}: missing field 'b'", None, "b")
        return PolyhedralSet(A, bb)
    k = b.get("dim", dim)
    if k is None:
        raise SchemaError(f"set {b.role}: missing field 'dim'", None, "dim")
    if dim is not None and k != dim:
        raise DimensionError(f"expected dimension {dim}, got {k}", f"{b.role}.dim")
    if t == "orthant":
        return PolyhedralSet.orthant(k, b.get("sign", -1))
    if t == "full":
        return PolyhedralSet.full(k)
    if t == "point":
        return PolyhedralSet.point(_vecf(b, "at", k))
    return PolyhedralSet.box(_vecf(b, "lo", k), _vecf(b, "hi", k))


def _named_set(pf: ProblemFile, role: str, dim: int | None, required: bool = True) -> PolyhedralSet | None:
    bs = pf.blocks_of("set", role)
    if not bs:
        if required:
            raise SchemaError(f"missing set {role!r}", None, role)
        return None
    return build_set(bs[0], dim)


def _var_names(n: int, d: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)] + [f"z{i + 1}" for i in range(d)]


def build_node(pf: ProblemFile, b: Block, in_dim: int, out_dim: int | None):
    t = b.get("type")
    n, d = pf.n, pf.d
    if t not in NODE_TYPES:
        raise SchemaError(f"unknown node kind {t!r}; the catalog is {', '.join(NODE_TYPES)}", None, "type")
    if t == "affine":
        A = _mat(b, "A", (out_dim, in_dim))
        return AffineMap(A, _vecf(b, "b", A.shape[0], np.zeros(A.shape[0])))
    if t == "polynomial":
        names = _var_names(n, d) if in_dim == n + d else [f"z{i + 1}" for i in range(in_dim)]
        polys = [Polynomial.parse(p, names) for p in b.get("poly", ())]
        if not polys:
            raise SchemaError("polynomial node needs at least one 'poly' line", None, "poly")
        if out_dim is not None and len(polys) != out_dim:
            raise DimensionError(f"expected {out_dim} components, got {len(polys)}", f"{b.role}.poly")
        return SmoothMap.from_polynomials(polys)
    C = _named_set(pf, b.get("set", ""), None)
    if t == "normal_cone":
        idx = [int(i) for i in b.get("vars", ())] or None
        node = NormalConeMap(C)
        if idx is not None:
            node = select_vars(node, idx, in_dim)
        elif C.dim != in_dim:
            raise DimensionError(f"set has dimension {C.dim} but the node reads {in_dim} variables", f"{b.role}.set")
        return node
    if t == "affine_plus_normal_cone":
        A = _mat(b, "A", (C.dim, in_dim))
        idx = [int(i) for i in b.get("vars", ())] or list(range(in_dim - C.dim, in_dim))
        return SmoothPlusMap(AffineMap(A, _vecf(b, "b", A.shape[0], np.zeros(A.shape[0]))),
                             select_vars(NormalConeMap(C), idx, in_dim))
    if t == "composed_normal_cone":
        A = _mat(b, "A", (C.dim, in_dim))
        return ComposedNormalCone(AffineMap(A, _vecf(b, "b", A.shape[0], np.zeros(A.shape[0]))), C)
    cA = _mat(b, "center_A", (out_dim, in_dim))
    rA = _mat(b, "radius_A", (1, in_dim))
    return BoxValued(AffineMap(cA, _vecf(b, "center_b", cA.shape[0], np.zeros(cA.shape[0]))),
                     AffineMap(rA, _vecf(b, "radius_b", 1, np.zeros(1))))


def build_scalar(pf: ProblemFile, b: Block, dim: int, names: Sequence[str]):
    t = b.get("type")
    if t not in SCALAR_TYPES:
        raise SchemaError(f"unknown scalar kind {t!r}; the catalog is {', '.join(SCALAR_TYPES)}", None, "type")
    if t == "quadratic":
        Q = _mat(b, "Q", (dim, dim))
        return Quadratic(Q, _vecf(b, "c", dim), float(b.get("const", 0.0)))
    if t == "max_affine":
        a = _mat(b, "a", (None, dim))
        return MaxAffine(a, _vecf(b, "beta", a.shape[0]))
    if t == "indicator":
        return Indicator(_named_set(pf, b.get("set", ""), dim))
    polys = b.get("poly", ())
    if len(polys) != 1:
        raise SchemaError("a polynomial scalar needs exactly one 'poly' line", None, "poly")
    return PolyScalar(Polynomial.parse(polys[0], names))


def validate(pf: ProblemFile) -> None:
    if pf.n <= 0 or pf.d <= 0:
        raise DimensionError("n and d must be positive", "n" if pf.n <= 0 else "d")
    if len(pf.xbar) != pf.n:
        raise DimensionError(f"expected {pf.n} entries, got {len(pf.xbar)}", "xbar")
    if len(pf.zbar) != pf.d:
        raise DimensionError(f"expected {pf.d} entries, got {len(pf.zbar)}", "zbar")
    zs = pf.option("zstar")
    if zs is not None and len(zs) != pf.d:
        raise DimensionError(f"expected {pf.d} entries, got {len(zs)}", "zstar")
    build(pf)


def scenario_model(pf: ProblemFile) -> ScenarioModel:
    return ScenarioModel(tuple(Atom(i, w, na) for i, w, na in pf.scenarios), pf.option("seed", 0))


def _scenario_blocks(pf: ProblemFile, kind: str, role: str, ids) -> dict:
    bs = {b.scenario: b for b in pf.blocks_of(kind, role)}
    if None in bs and len(bs) == 1:
        return {i: bs[None] for i in ids}
    missing = [i for i in ids if i not in bs]
    if missing:
        raise SchemaError(f"missing {kind} {role} for scenarios {', '.join(missing)}", None, role)
    return bs


def build(pf: ProblemFile):
    """The system spec described by the file (and the cost for MPECs)."""
    m = scenario_model(pf)
    n, d = pf.n, pf.d
    opts = dict(pf.options)
    common = {k: opts[k] for k in ("eta", "rho", "per_axis") if k in opts}
    if pf.kind == "semilinear":
        data = _scenario_blocks(pf, "data", "scenario", m.ids)
        a, B, beta = {}, {}, {}
        rows = None
        for i in m.ids:
            ai = _mat(data[i], "a", (rows, d))
            rows = ai.shape[0]
            a[i] = ai
            B[i] = _mat(data[i], "B", (rows, n))
            beta[i] = _vecf(data[i], "beta", rows)
        G = _named_set(pf, "graph_G", n + d)
        sp = opts.get("slater_point")
        if sp is not None and len(sp) != d:
            raise DimensionError(f"expected {d} entries, got {len(sp)}", "slater_point")
        return systems.SemilinearSpec(a, B, beta, G, m, n, None if sp is None else np.array(sp))
    if pf.kind == "stationary":
        names = _var_names(n, d)
        fb = _scenario_blocks(pf, "scalar", "f", m.ids)
        f = {i: build_scalar(pf, fb[i], n + d, names) for i in m.ids}
        pb = pf.blocks_of("scalar", "psi")
        if not pb:
            raise SchemaError("missing scalar psi", None, "psi")
        psi_b = pb[0]
        psi_dim = d
        if psi_b.get("type") == "quadratic":
            psi_dim = len(psi_b.get("Q"))
        psi = build_scalar(pf, psi_b, psi_dim, [f"z{i + 1}" for i in range(d)] if psi_dim == d else names)
        return systems.StationaryMapSpec(f, psi, m, n, **common)
    pb = _scenario_blocks(pf, "node", "phi", m.ids)
    nodes = {i: build_node(pf, pb[i], n + d, None) for i in m.ids}
    outs = {nd.out_dim for nd in nodes.values()}
    if len(outs) != 1:
        raise DimensionError("scenario maps have different output dimensions", "phi")
    Phi = RandomIntegrand(nodes)
    if pf.kind == "constraint":
        K = _named_set(pf, "K", Phi.out_dim)
        O = _named_set(pf, "O", n + d, required=False)
        nr = opts.get("normally_regular")
        sp = opts.get("slater_point")
        return systems.ConstraintSystemSpec(Phi, K, m, n, O, route=opts.get("route", "general"),
                                            slater_point=None if sp is None else np.array(sp),
                                            normally_regular=None if nr is None else nr == "true", **common)
    gb = pf.blocks_of("node", "G")
    if not gb:
        raise SchemaError("missing node G", None, "G")
    G = build_node(pf, gb[0], _g_in_dim(pf, gb[0]), Phi.out_dim)
    vs = systems.VariationalSystemSpec(Phi, G, m, n, **common)
    vs.validate()
    if pf.kind == "variational":
        return vs
    cb = pf.blocks_of("scalar", "cost")
    if not cb:
        raise SchemaError("missing scalar cost", None, "cost")
    cost = build_scalar(pf, cb[0], n + d, _var_names(n, d))
    return systems.MpecSpec(cost, vs, _named_set(pf, "C", n, required=False))


def _g_in_dim(pf: ProblemFile, b: Block) -> int:
    A = b.get("A")
    if A is not None:
        return len(A[0])
    if b.get("type") == "normal_cone" and not b.get("vars"):
        s = pf.blocks_of("set", b.get("set", ""))
        if s:
            C = build_set(s[0])
            return C.dim
    return pf.d


# ---------------------------------------------------------------------------
# reports


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    y = float(f"{x:.12g}")
    return 0.0 if y == 0 else y


def canonical(obj):
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (float, int, np.floating, np.integer, bool, np.bool_)):
        return _num(obj)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(canonical(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _piece_dict(P) -> dict:
    g = P.generators()
    if g is None:
        return {"enumeration": "too large"}
    pts, rays, lines = g

    def srt(X):
        X = np.round(np.asarray(X, float), 12) + 0.0
        return X[np.lexsort(X.T[::-1])] if len(X) else X
    return {"points": srt(pts), "rays": srt(rays), "lines": srt(lines)}


def _estimate_dict(est: systems.SystemEstimate, zstar=None) -> dict:
    out = {
        "emitted": est.emitted,
        "basis": list(est.basis),
        "hypotheses": [{"name": h.name, "status": h.status, "detail": h.detail} for h in est.hypotheses],
        "log": list(est.log),
        "base_points": [list(y) for y in est.ybars],
        "witness": None if est.witness is None else list(est.witness),
    }
    if est.emitted:
        out["graph_pieces"] = [_piece_dict(p) for p in est.estimate.pieces]
        if zstar is not None:
            val = est.at(zstar)
            out["at"] = {"zstar": list(zstar), "members": [_piece_dict(p) for p in val.pruned().members],
                         "exact": val.exact}
    return out


PROPERTIES = {"lipschitz": LIPSCHITZ_LIKE, "lipschitz_like": LIPSCHITZ_LIKE, "lipschitz-like": LIPSCHITZ_LIKE,
              "metric-regularity": METRIC_REGULARITY, "metric_regularity": METRIC_REGULARITY}
VERDICT_EXIT = {CERTIFIED: EXIT_OK, REFUTED: EXIT_REFUTED, INCONCLUSIVE: EXIT_INCONCLUSIVE}


FLAG_KEYS = ("property", "grid", "radius", "seed", "eta", "rho", "tau_opt")


def _with_flags(pf: ProblemFile, flags: dict) -> ProblemFile:
    """Flags override the file's options."""
    opts = dict(pf.options)
    opts.update({k: v for k, v in flags.items() if v is not None})
    return replace(pf, options=tuple(sorted(opts.items())))


def _effective(pf: ProblemFile) -> dict:
    opts = dict(pf.options)
    eff = {
        "eta": opts.get("eta", 0.1), "rho": opts.get("rho", 0.25), "per_axis": opts.get("per_axis", 5),
        "tau_opt": opts.get("tau_opt", systems.TAU_OPT),
        "grid": opts.get("grid", 11),
        "radius": opts.get("radius", 0.5),
        "seed": opts.get("seed", 0),
        "search": opts.get("search", 3.0),
        "threads": 1,
    }
    eff["property"] = opts.get("property", "lipschitz")
    return eff


def _system_for_estimates(spec):
    if isinstance(spec, systems.SemilinearSpec):
        return spec.to_constraint()
    if isinstance(spec, systems.StationaryMapSpec):
        return spec.to_variational()
    if isinstance(spec, systems.MpecSpec):
        return spec.system
    return spec


def cmd_analyze(pf: ProblemFile, spec, eff: dict) -> tuple[dict, int]:
    x, z = np.array(pf.xbar), np.array(pf.zbar)
    zstar = pf.option("zstar")
    if isinstance(spec, systems.StationaryMapSpec):
        est = systems.stationary_estimate(spec, x, z)
    else:
        sys_ = _system_for_estimates(spec)
        if isinstance(sys_, systems.ConstraintSystemSpec):
            est = systems.constraint_estimate(sys_, x, z)
        else:
            est = systems.variational_estimate(sys_, x, z)
    return {"estimate": _estimate_dict(est, zstar)}, EXIT_OK if est.emitted else EXIT_INCONCLUSIVE


def _semilinear_checks(sl: systems.SemilinearSpec, est: systems.SystemEstimate, x, z) -> dict:
    worst, rows = 0.0, []
    if est.emitted:
        for p in est.estimate.pieces:
            for v in p.support_points(1.0):
                zs, xs = v[:len(z)], v[len(z):]
                r = systems.semilinear_multipliers(sl, x, z, xs, zs)
                worst = max(worst, r.residual)
                rows.append({"zstar": zs, "xstar": xs, "lambda": list(r.lam), "u": list(r.u), "v": list(r.v),
                             "residual": r.residual, "complementarity": r.complementarity})
    return {"max_residual": worst, "samples": rows}


def cmd_certify(pf: ProblemFile, spec, eff: dict) -> tuple[dict, int]:
    prop = PROPERTIES.get(eff["property"])
    if prop is None:
        raise SchemaError(f"unknown property {eff['property']!r}; use lipschitz or metric-regularity", None, "property")
    x, z = np.array(pf.xbar), np.array(pf.zbar)
    out: dict = {}
    truncate = pf.option("truncate") == "true"
    try:
        if truncate:
            sys_ = _system_for_estimates(spec)
            nr = pf.option("normally_regular")
            cert, est = systems.truncated_pathway(sys_, x, z, prop, None if nr is None else nr == "true")
        elif isinstance(spec, systems.SemilinearSpec):
            cs = spec.to_constraint(**{k: eff[k] for k in ("eta", "rho", "per_axis")})
            cert, est = systems.constraint_certify(cs, x, z, prop)
            out["multipliers"] = _semilinear_checks(spec, est, x, z)
        elif isinstance(spec, systems.ConstraintSystemSpec):
            cert, est = systems.constraint_certify(spec, x, z, prop)
        elif isinstance(spec, systems.StationaryMapSpec):
            cert, est = systems.stationary_certify(spec, x, z, prop)
        else:
            cert, est = systems.variational_certify(_system_for_estimates(spec), x, z, prop)
    except (systems.PathUnavailable, systems.EvidenceMissing, systems.AssumptionUnverifiable) as exc:
        out["certificate"] = {"property": prop, "verdict": INCONCLUSIVE, "reason": str(exc), "log": exc.log}
        return out, EXIT_INCONCLUSIVE
    out["certificate"] = cert.to_dict()
    if est is not None:
        out["estimate"] = _estimate_dict(est)
    return out, VERDICT_EXIT[cert.verdict]


def cmd_estimate(pf: ProblemFile, spec, eff: dict) -> tuple[dict, int]:
    sys_ = _system_for_estimates(spec)
    S = systems.SolutionMap(sys_)
    g = oracle.GridSpec(tuple(pf.xbar), float(eff["radius"]), int(eff["grid"]), int(eff["seed"]))
    p = (np.array(pf.xbar), np.array(pf.zbar))
    lip = oracle.empirical_lip(S, p, g)
    reg = oracle.empirical_reg(S, p, g, float(eff["search"]))
    return {"oracle": {"map": "solution map", "empirical_lip": lip.to_dict(), "empirical_reg": reg.to_dict(),
                       "grid": {"center": list(g.center), "radius": g.radius, "resolution": g.resolution,
                                "seed": g.seed}}}, EXIT_OK


def cmd_check_mpec(pf: ProblemFile, spec, eff: dict) -> tuple[dict, int]:
    if not isinstance(spec, systems.MpecSpec):
        raise SchemaError("check-mpec needs kind: mpec", None, "kind")
    try:
        r = systems.mpec_check(spec, np.array(pf.xbar), np.array(pf.zbar), float(eff["tau_opt"]))
    except systems.QualificationFailed as exc:
        return {"mpec": {"verdict": "inconclusive", "reason": str(exc), "log": exc.log}}, EXIT_INCONCLUSIVE
    code = {"satisfied": EXIT_OK, "violated": EXIT_REFUTED, "inconclusive": EXIT_INCONCLUSIVE}[r.verdict]
    return {"mpec": r.to_dict()}, code


COMMANDS = {"analyze": cmd_analyze, "certify": cmd_certify, "estimate": cmd_estimate, "check-mpec": cmd_check_mpec}


def run(command: str, path, flags: dict | None = None) -> tuple[dict, int]:
    flags = dict(flags or {})
    unknown = set(flags) - set(FLAG_KEYS)
    if unknown:
        raise SchemaError(f"unknown flags {sorted(unknown)}")
    pf = _with_flags(parse(path), flags)
    spec = build(pf)
    eff = _effective(pf)
    body, code = COMMANDS[command](pf, spec, eff)
    report = {"schema": SCHEMA, "command": command, "kind": pf.kind, "file": Path(path).name,
              "base_point": {"xbar": list(pf.xbar), "zbar": list(pf.zbar)}, "options": eff, "exit_code": code}
    report.update(body)
    return report, code


def _text_report(report: dict) -> str:
    lines = [f"{report['command']} {report['file']} ({report['kind']})"]
    cert = report.get("certificate")
    if cert:
        lines.append(f"  {cert['property']}: {cert['verdict']}")
        if "bound" in cert:
            lines.append(f"  bound: {cert['bound']} ({cert['bound_kind']}, {cert['norm']})")
        for l in cert.get("assumptions_log", cert.get("log", [])):
            lines.append(f"    - {l}")
    est = report.get("estimate")
    if est:
        lines.append(f"  estimate emitted: {est['emitted']}")
        for b in est["basis"]:
            lines.append(f"    basis: {b}")
        for h in est["hypotheses"]:
            lines.append(f"    {h['name']}: {h['status']}")
    if "oracle" in report:
        o = report["oracle"]
        for k in ("empirical_lip", "empirical_reg"):
            lines.append(f"  {k}: {o[k]['value']} (trend {o[k]['trend']}, diverging {o[k]['diverging']})")
    if "mpec" in report:
        mp = report["mpec"]
        lines.append(f"  verdict: {mp['verdict']}")
        if "residual" in mp:
            lines.append(f"  residual: {mp['residual']}")
    if "multipliers" in report:
        lines.append(f"  multiplier identities: max residual {report['multipliers']['max_residual']}")
    lines.append(f"  exit code: {report['exit_code']}")
    return "\n".join(lines) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="covar", description="Coderivative-based well-posedness certificates.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("file")
    ap.add_argument("--property", choices=sorted(PROPERTIES))
    ap.add_argument("--grid", type=int)
    ap.add_argument("--radius", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--eta", type=float)
    ap.add_argument("--rho", type=float)
    ap.add_argument("--tau-opt", dest="tau_opt", type=float)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    os.environ.get("COVAR_THREADS")  # accepted; evaluation is sequential
    try:
        report, code = run(args.command, args.file, {k: getattr(args, k) for k in FLAG_KEYS})
    except (SchemaError, DimensionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(dumps(report) if args.json else _text_report(canonical(report)))
    return code


if __name__ == "__main__":
    sys.exit(main())
