"""Coderivative criteria for the Lipschitz-like property and metric regularity.

Every unit-sphere search runs over the faces of the l-infinity sphere in a fixed
order (coordinate index, then sign + before -), so the first witness found is
the lexicographically first one and results do not depend on scheduling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _linalg as la
from .geometry import (
    ZERO_TOL,
    HomogeneousMapValue,
    LiftedPolyhedron,
    PolyhedralCone,
    _vec,
    outer_norm_details,
    zero_input_witness,
)
from .stochastic import (
    RandomIntegrand,
    ScenarioModel,
    check_standing,
    leibniz_estimate,
    lipschitz_property_check,
    selection_set,
)

LIPSCHITZ_LIKE = "lipschitz_like"
METRIC_REGULARITY = "metric_regularity"
CERTIFIED, REFUTED, INCONCLUSIVE = "certified", "refuted", "inconclusive"

BASIS_LIP = "coderivative criterion: D*F(x,y)(0) = {0}, lip F = |D*F(x,y)|"
BASIS_REG = "kernel criterion: ker D*F(x,y) = {0}, reg F = |(D*F(x,y))^-1|"


def _clean(v) -> tuple | None:
    if v is None:
        return None
    v = np.asarray(v, float)
    v = np.where(np.abs(v) < 1e-12, 0.0, v)
    return tuple(float(x) for x in np.round(v, 12))


@dataclass
class Certificate:
    """Outcome of a well-posedness test.

    `bound_kind` says how `bound` relates to the true modulus: "exact", "upper"
    (from an upper estimate of the coderivative) or "none".
    """

    property: str
    verdict: str
    bound: float = math.inf
    bound_interval: tuple = (math.inf, math.inf)
    bound_kind: str = "none"
    norm: str = "l2"
    witness: tuple | None = None
    assumptions_log: list = field(default_factory=list)
    basis: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in (CERTIFIED, REFUTED, INCONCLUSIVE):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == CERTIFIED and (self.witness is not None or not math.isfinite(self.bound)):
            raise ValueError("a certified verdict needs a finite bound and no witness")
        if self.verdict == REFUTED and self.witness is None:
            raise ValueError("a refuted verdict needs a witness")

    @property
    def ok(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "verdict": self.verdict,
            "bound": self.bound,
            "bound_interval": list(self.bound_interval),
            "bound_kind": self.bound_kind,
            "norm": self.norm,
            "witness": None if self.witness is None else list(self.witness),
            "assumptions_log": list(self.assumptions_log),
            "basis": list(self.basis),
        }


# ---------------------------------------------------------------------------
# sphere-face search


def _sphere_faces(coords: Sequence[int]):
    for j in coords:
        for s in (1.0, -1.0):
            yield j, s


def _face_rows(P: LiftedPolyhedron, coords: Sequence[int], j: int, s: float, extra: int = 0):
    """Constraints in the lifted variables pinning v_j = s and |v_i| <= 1 on `coords`."""
    p = P.nvar
    Mc = P.M[list(coords)]
    cc = P.c[list(coords)]
    ub = np.hstack([np.vstack([Mc, -Mc]), np.zeros((2 * len(coords), extra))])
    ubb = np.concatenate([1.0 - cc, 1.0 + cc])
    eq = np.hstack([P.M[j][None, :], np.zeros((1, extra))])
    eqb = np.array([s - P.c[j]])
    return ub, ubb, eq, eqb


def _face_feasible(P: LiftedPolyhedron, coords, j, s) -> np.ndarray | None:
    ub, ubb, eq, eqb = _face_rows(P, coords, j, s)
    r = P._lp(np.zeros(P.nvar), ub, ubb, eq, eqb)
    if r.x is None:
        return None
    return P.M @ r.x + P.c


def _face_min_inf(P: LiftedPolyhedron, coords, j, s, obj_coords) -> tuple[float, np.ndarray | None]:
    """min ||v_obj||_inf over P on the sphere face (j, s)."""
    p = P.nvar
    ub, ubb, eq, eqb = _face_rows(P, coords, j, s, extra=1)
    Mo = P.M[list(obj_coords)]
    co = P.c[list(obj_coords)]
    k = len(obj_coords)
    ub2 = np.vstack([np.hstack([Mo, -np.ones((k, 1))]), np.hstack([-Mo, -np.ones((k, 1))])])
    ubb2 = np.concatenate([-co, co])
    r = P._lp(np.r_[np.zeros(p), 1.0], np.vstack([ub, ub2]), np.concatenate([ubb, ubb2]), eq, eqb,
              nextra=1, extra_bounds=[(0, None)])
    if r.x is None:
        return math.inf, None
    v = P.M @ r.x[:p] + P.c
    return float(np.max(np.abs(v[list(obj_coords)]))) if k else 0.0, v


# ---------------------------------------------------------------------------
# implication queries


@dataclass(frozen=True, eq=False)
class ImplicationQuery:
    """[v ∈ piece for some piece] ⇒ v_norm = 0, with each piece a polyhedral cone.

    The implication holds iff no piece meets the unit l-infinity sphere in the
    `norm_coords` coordinates.
    """

    pieces: tuple
    norm_coords: tuple
    description: str = ""
    coordinate_names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "norm_coords", tuple(int(i) for i in self.norm_coords))
        for P in self.pieces:
            if np.any(np.abs(P.c) > 1e-12) or np.any(np.abs(P.h) > 1e-12) or np.any(np.abs(P.f) > 1e-12):
                raise ValueError("implication pieces must be cones")


@dataclass(frozen=True)
class QualificationResult:
    holds: bool
    witness: tuple | None = None
    piece: int | None = None
    description: str = ""


def qualification_check(q: ImplicationQuery) -> QualificationResult:
    for j, s in _sphere_faces(q.norm_coords):
        for i, P in enumerate(q.pieces):
            v = _face_feasible(P, q.norm_coords, j, s)
            if v is not None:
                return QualificationResult(False, _clean(v), i, q.description)
    return QualificationResult(True, None, None, q.description)


def _kernel_pieces(H: HomogeneousMapValue, cone: PolyhedralCone | None = None) -> list[LiftedPolyhedron]:
    """Pieces {y* : 0 ∈ H(y*), y* ∈ cone} in y*-space."""
    m, n = H.in_dim, H.out_dim
    sel_x = np.hstack([np.zeros((n, m)), np.eye(n)])
    sel_y = np.hstack([np.eye(m), np.zeros((m, n))])
    out = []
    for p in H.pieces:
        P = p.constrain(A_eq=sel_x, b_eq=np.zeros(n))
        if cone is not None and cone.rows.shape[0]:
            P = P.constrain(cone.rows @ sel_y, np.zeros(cone.rows.shape[0]))
        out.append(P.image(sel_y))
    return out


def kernel_query(H: HomogeneousMapValue, cone: PolyhedralCone | None = None,
                 description: str = "") -> ImplicationQuery:
    """[0 ∈ H(y*), y* ∈ cone] ⇒ y* = 0."""
    return ImplicationQuery(tuple(_kernel_pieces(H, cone)), tuple(range(H.in_dim)),
                            description or "0 in H(y*) implies y* = 0")


def range_query(H: HomogeneousMapValue, y_cone: PolyhedralCone | None = None,
                x_cone: PolyhedralCone | None = None, description: str = "") -> ImplicationQuery:
    """[x* ∈ H(y*), y* ∈ y_cone, x* ∈ x_cone] ⇒ x* = 0 (pieces live in (y*, x*) space)."""
    m, n = H.in_dim, H.out_dim
    pieces = []
    for p in H.pieces:
        P = p
        if y_cone is not None and y_cone.rows.shape[0]:
            P = P.constrain(np.hstack([y_cone.rows, np.zeros((y_cone.rows.shape[0], n))]),
                            np.zeros(y_cone.rows.shape[0]))
        if x_cone is not None and x_cone.rows.shape[0]:
            P = P.constrain(np.hstack([np.zeros((x_cone.rows.shape[0], m)), x_cone.rows]),
                            np.zeros(x_cone.rows.shape[0]))
        pieces.append(P)
    return ImplicationQuery(tuple(pieces), tuple(range(m, m + n)),
                            description or "x* in H(y*) implies x* = 0")


# ---------------------------------------------------------------------------
# adjoint generalized equations


@dataclass(frozen=True, eq=False)
class AdjointEquation:
    """0 ∈ term1(y*) + term2(y*) with both terms positively homogeneous in y*."""

    term1: HomogeneousMapValue
    term2: HomogeneousMapValue | None = None
    base: tuple = ()
    description: str = "adjoint generalized equation"

    def __post_init__(self):
        if self.term2 is not None and (self.term1.in_dim, self.term1.out_dim) != (self.term2.in_dim, self.term2.out_dim):
            raise ValueError("adjoint equation terms have different dimensions")

    @property
    def total(self) -> HomogeneousMapValue:
        return self.term1 if self.term2 is None else self.term1.plus(self.term2)


@dataclass(frozen=True)
class AdjointResult:
    trivial_only: bool
    witness: tuple | None = None

    @property
    def label(self) -> str:
        return "trivial_only" if self.trivial_only else "nontrivial"


def adjoint_solve(eq: AdjointEquation) -> AdjointResult:
    r = qualification_check(kernel_query(eq.total, description=eq.description))
    return AdjointResult(r.holds, r.witness)


# ---------------------------------------------------------------------------
# certificates


def _exact_tag(exact: bool) -> str:
    return "coderivative input is exact" if exact else "coderivative input is an upper estimate"


def lipschitz_certify(D: HomogeneousMapValue, exact: bool | None = None, log: Sequence[str] = ()) -> Certificate:
    exact = D.exact if exact is None else exact
    log = list(log) + [_exact_tag(exact)]
    w = zero_input_witness(D)
    if w is not None:
        if exact:
            log.append("D(0) contains a nonzero vector")
            return Certificate(LIPSCHITZ_LIKE, REFUTED, witness=_clean(w), assumptions_log=log, basis=[BASIS_LIP])
        log.append("the upper estimate of D(0) is nontrivial; no conclusion")
        return Certificate(LIPSCHITZ_LIKE, INCONCLUSIVE, witness=_clean(w), assumptions_log=log, basis=[BASIS_LIP])
    nb = outer_norm_details(D)
    if not math.isfinite(nb.value):
        log.append("outer norm is unbounded although D(0) = {0}")
        return Certificate(LIPSCHITZ_LIKE, INCONCLUSIVE, assumptions_log=log, basis=[BASIS_LIP])
    kind = "exact" if exact else "upper"
    if nb.norm == "linf":
        log.append("modulus measured in the l-infinity norm; interval brackets the Euclidean value")
    return Certificate(LIPSCHITZ_LIKE, CERTIFIED, nb.value, tuple(nb.interval), kind, nb.norm,
                       assumptions_log=log, basis=[BASIS_LIP])


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def _linear_min_gain(L: np.ndarray) -> tuple[float, np.ndarray]:
    """inf ||L y|| over unit y, with a minimizer."""
    n, m = L.shape
    if m == 0:
        return math.inf, np.zeros(0)
    _, s, vt = np.linalg.svd(L if n else np.zeros((1, m)))
    s = np.concatenate([s, np.zeros(m - s.size)])
    j = m - 1 if s.size else 0
    return float(s[-1]), _canonical_sign(vt[j])


def metric_regularity_certify(D: HomogeneousMapValue, exact: bool | None = None, log: Sequence[str] = ()) -> Certificate:
    exact = D.exact if exact is None else exact
    log = list(log) + [_exact_tag(exact)]
    m, n = D.in_dim, D.out_dim
    if D.linear is not None:
        gains = [_linear_min_gain(L) for L in D.linear]
        c, arg = min(gains, key=lambda g: g[0])
        norm, interval_k = "l2", 1.0
    else:
        c, arg = math.inf, None
        for j, s in _sphere_faces(range(m)):
            for P in D.pieces:
                val, v = _face_min_inf(P, range(m), j, s, range(m, m + n))
                if val < c - 1e-12:
                    c, arg = val, v[:m]
                if c <= ZERO_TOL:
                    break
            if c <= ZERO_TOL:
                break
        norm, interval_k = "linf", math.sqrt(max(m, n, 1))
    if m == 0:
        return Certificate(METRIC_REGULARITY, CERTIFIED, 0.0, (0.0, 0.0), "exact" if exact else "upper", norm,
                           assumptions_log=log, basis=[BASIS_REG])
    if c <= ZERO_TOL:
        w = _clean(arg)
        if exact:
            log.append("kernel of D is nontrivial")
            return Certificate(METRIC_REGULARITY, REFUTED, witness=w, assumptions_log=log, basis=[BASIS_REG])
        log.append("the upper estimate has a nontrivial kernel; no conclusion")
        return Certificate(METRIC_REGULARITY, INCONCLUSIVE, witness=w, assumptions_log=log, basis=[BASIS_REG])
    if not math.isfinite(c):
        # every D(y*) with y* on the sphere is empty: F is metrically regular with modulus 0
        return Certificate(METRIC_REGULARITY, CERTIFIED, 0.0, (0.0, 0.0), "exact" if exact else "upper", norm,
                           assumptions_log=log + ["D(y*) is empty for every unit y*"], basis=[BASIS_REG])
    reg = 1.0 / c
    if norm == "linf":
        log.append("modulus measured in the l-infinity norm; interval brackets the Euclidean value")
    return Certificate(METRIC_REGULARITY, CERTIFIED, reg, (reg / interval_k, reg * interval_k),
                       "exact" if exact else "upper", norm, assumptions_log=log, basis=[BASIS_REG])


def certify(D: HomogeneousMapValue, prop: str, exact: bool | None = None, log: Sequence[str] = ()) -> Certificate:
    if prop == LIPSCHITZ_LIKE:
        return lipschitz_certify(D, exact, log)
    if prop == METRIC_REGULARITY:
        return metric_regularity_certify(D, exact, log)
    raise ValueError(f"unknown property {prop!r}")


def integrable_lipschitz_certify(Phi: RandomIntegrand, m: ScenarioModel, u, y, eta: float = 0.1,
                                 rho: float | None = None, per_axis: int = 7) -> Certificate:
    """Lipschitz-like property of the expected map from integrable quasi-Lipschitz evidence.

    The bound is the largest integrated modulus over the extreme selections.
    """
    basis = ["integrable quasi-Lipschitz integrand gives a Lipschitz-like expected map",
             "coderivative Leibniz rule"]
    u = _vec(u, Phi.in_dim)
    y = _vec(y, Phi.out_dim)
    log: list[str] = []
    st = check_standing(Phi, m, u, eta if rho is None else rho, per_axis)
    log += [f"standing assumptions: {'pass' if st.passes else 'fail'}"] + list(st.messages)
    S = selection_set(Phi, m, u, y)
    log.append("inner semicompactness of the selection map: "
               + ("granted (bounded scenario values)" if S.inner_semicompact else "declared by the caller"))
    sels = S.extreme_selections()
    log.append(f"{len(sels)} extreme selections checked")
    bound = 0.0
    for sel in sels:
        ev = lipschitz_property_check(Phi, m, u, sel, "quasi", eta, per_axis)
        if ev.verdict != "holds":
            log.append("integrable quasi-Lipschitz property fails on a selection")
            wit = ev.witnesses[0][3] if ev.witnesses else None
            return Certificate(LIPSCHITZ_LIKE, INCONCLUSIVE, witness=wit, assumptions_log=log, basis=basis)
        bound = max(bound, ev.integrated)
    if not st.passes:
        return Certificate(LIPSCHITZ_LIKE, INCONCLUSIVE, assumptions_log=log, basis=basis)
    if not S.inner_semicompact:
        log.append("selection map may fail inner semicompactness")
        return Certificate(LIPSCHITZ_LIKE, INCONCLUSIVE, assumptions_log=log, basis=basis)
    D = leibniz_estimate(Phi, m, u, y)
    if zero_input_witness(D) is not None:
        log.append("Leibniz estimate of D*(0) is nontrivial")
        return Certificate(LIPSCHITZ_LIKE, INCONCLUSIVE, assumptions_log=log, basis=basis)
    return Certificate(LIPSCHITZ_LIKE, CERTIFIED, bound, (0.0, bound), "upper", "l2",
                       assumptions_log=log, basis=basis)
