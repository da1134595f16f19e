"""Stochastic constraint systems, variational systems, stationary-point maps and MPECs.

Every estimate is a positively homogeneous map z* -> {x*} stored as graph
pieces in (z*, x*) space. An estimate is only emitted when the proviso of the
result it rests on (qualification condition, adjoint equation, standing
assumptions) has been checked; the log names each hypothesis and its status.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import _linalg as la
from .geometry import (
    TAU_MEM,
    ZERO_TOL,
    CoderivativeSet,
    HomogeneousMapValue,
    LiftedPolyhedron,
    PolyhedralCone,
    PolyhedralSet,
    _vec,
    normal_cone,
    outer_norm_details,
    zero_input_witness,
)
from .multifunction import (
    AffineMap,
    ComposedNormalCone,
    DomainError,
    Indicator,
    MaxAffine,
    Node,
    NormalConeMap,
    PolyScalar,
    Precompose,
    Quadratic,
    ScalarFunction,
    SetValue,
    SmoothMap,
)
from .stochastic import (
    RandomIntegrand,
    ScenarioModel,
    check_standing,
    expected_coderivative_map,
    expected_map,
    lipschitz_property_check,
    selection_set,
)
from .wellposedness import (
    CERTIFIED,
    INCONCLUSIVE,
    LIPSCHITZ_LIKE,
    METRIC_REGULARITY,
    AdjointEquation,
    Certificate,
    ImplicationQuery,
    adjoint_solve,
    kernel_query,
    lipschitz_certify,
    metric_regularity_certify,
    qualification_check,
    range_query,
)

TAU_OPT = 1e-6

PASS, FAIL, DECLARED, UNVERIFIABLE = "pass", "fail", "declared", "unverifiable"


class SystemError_(Exception):
    """Base class; carries the hypothesis log and an optional witness."""

    def __init__(self, msg: str, log: Sequence[str] = (), witness=None):
        super().__init__(msg)
        self.log = list(log)
        self.witness = witness


class QualificationFailed(SystemError_):
    pass


class AdjointNontrivial(SystemError_):
    pass


class AssumptionUnverifiable(SystemError_):
    pass


class PathUnavailable(SystemError_):
    pass


class EvidenceMissing(SystemError_):
    pass


class LocalizationFailed(SystemError_):
    pass


# ---------------------------------------------------------------------------
# results


@dataclass
class Hypothesis:
    name: str
    status: str
    detail: str = ""

    def line(self) -> str:
        return f"{self.name}: {self.status}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class SystemEstimate:
    """Outcome of an estimate computation: the map z* -> x* set when emitted."""

    basis: list
    emitted: bool
    estimate: HomogeneousMapValue | None
    hypotheses: list = field(default_factory=list)
    log: list = field(default_factory=list)
    witness: tuple | None = None
    ybars: list = field(default_factory=list)

    def hyp(self, name: str, status: str, detail: str = "") -> None:
        h = Hypothesis(name, status, detail)
        self.hypotheses.append(h)
        self.log.append(h.line())

    def failed(self) -> list:
        return [h for h in self.hypotheses if h.status == FAIL]

    def at(self, zstar) -> CoderivativeSet:
        if self.estimate is None:
            raise QualificationFailed("no estimate was emitted", self.log, self.witness)
        return self.estimate(_vec(zstar, self.estimate.in_dim))


def _clean(v):
    if v is None:
        return None
    v = np.where(np.abs(np.asarray(v, float)) < 1e-10, 0.0, np.asarray(v, float))
    return tuple(float(x) for x in np.round(v, 12))


# ---------------------------------------------------------------------------
# shared assembly


def _blocks(n: int, d: int):
    Px = np.hstack([np.eye(n), np.zeros((n, d))])
    Pz = np.hstack([np.zeros((d, n)), np.eye(d)])
    return Px, Pz


def _points_of(parts: Sequence[PolyhedralSet], interior: bool = True) -> list[np.ndarray]:
    """Vertices of each nonempty part plus its centroid; a feasible point for unbounded parts."""
    pts = []
    for P in parts:
        if P.is_empty():
            continue
        if P.is_bounded():
            V = P.vertices()
            pts.extend(V)
            if interior and V.shape[0] > 1:
                pts.append(V.mean(axis=0))
        else:
            pts.extend(P.vrep[0])
    if not pts:
        return []
    Q = la.unique_rows(np.round(np.array(pts), 12), 1e-9)
    Q = Q[np.lexsort(Q.T[::-1])]
    return [q for q in Q]


def _cone_rows(K: PolyhedralCone) -> np.ndarray:
    return K.rows if K.rows.shape[0] else np.zeros((0, K.dim))


def _estimate_from_terms(T: HomogeneousMapValue, n: int, d: int, y_cone: PolyhedralCone | None = None,
                         extra: PolyhedralCone | None = None) -> list[LiftedPolyhedron]:
    """Graph pieces of z* -> {x* : (x*, -z*) ∈ T(y*) + extra, y* ∈ y_cone}."""
    m = T.in_dim
    pieces = []
    drop_y = np.hstack([np.zeros((n + d, m)), np.eye(n + d)])
    out = np.block([[np.zeros((d, n)), -np.eye(d)], [np.eye(n), np.zeros((n, d))]])
    for p in T.pieces:
        P = p
        if y_cone is not None:
            B = _cone_rows(y_cone)
            if B.shape[0]:
                P = P.constrain(np.hstack([B, np.zeros((B.shape[0], n + d))]), np.zeros(B.shape[0]))
        Q = P.image(drop_y)
        if extra is not None and not extra.is_zero():
            Q = Q + extra.as_lifted()
        pieces.append(Q.image(out))
    return pieces


def _expected_point(Phi: RandomIntegrand, m: ScenarioModel, u) -> np.ndarray | None:
    val = expected_map(Phi, m, u)
    return val.as_point()


def _standing_and_quasi(est: SystemEstimate, Phi, model, u, sels_by_y, eta, rho, per_axis,
                        quasi_evidence: str | None = None) -> bool:
    st = check_standing(Phi, model, u, rho, per_axis)
    est.hyp("standing assumptions (convex values on nonatomic atoms, integrable bound)",
            PASS if st.passes else FAIL, "; ".join(st.messages))
    for msg in st.messages:
        est.log.append(msg)
    semi = all(S.inner_semicompact for S in sels_by_y.values())
    est.hyp("inner semicompactness of the selection map", PASS if semi else DECLARED,
            "bounded scenario values" if semi else "declared for unbounded values")
    if quasi_evidence is not None:
        est.hyp("integrable quasi-Lipschitz property", PASS, quasi_evidence)
        return st.passes
    ok = True
    for yb, S in sels_by_y.items():
        for sel in S.extreme_selections():
            ev = lipschitz_property_check(Phi, model, u, sel, "quasi", eta, per_axis)
            if ev.verdict != "holds":
                est.hyp("integrable quasi-Lipschitz property", FAIL,
                        f"unbounded coderivative on atom {ev.witnesses[0][0]}" if ev.witnesses else "")
                est.witness = ev.witnesses[0][3] if ev.witnesses else None
                return False
    est.hyp("integrable quasi-Lipschitz property", PASS if ok else FAIL, "sampled on extreme selections")
    return st.passes and ok


# ---------------------------------------------------------------------------
# constraint systems


@dataclass(frozen=True, eq=False)
class ConstraintSystemSpec:
    """F(x) = {z : E[Φ](x, z) ∩ K ≠ ∅, (x, z) ∈ O}; Φ acts on (x, z) with x of size n."""

    Phi: RandomIntegrand
    K: PolyhedralSet
    model: ScenarioModel
    n: int
    O: PolyhedralSet | None = None
    route: str = "general"  # "general" or "slater" (convex-in-z systems with a Slater point)
    slater_point: np.ndarray | None = None
    normally_regular: bool | None = None
    eta: float = 0.1
    rho: float = 0.25
    per_axis: int = 5

    @property
    def d(self) -> int:
        return self.Phi.in_dim - self.n

    def validate(self) -> None:
        if self.d <= 0:
            raise ValueError("Φ must act on (x, z) with z nonempty")
        if self.K.dim != self.Phi.out_dim:
            raise ValueError("K must live in the output space of Φ")
        if self.O is not None and self.O.dim != self.Phi.in_dim:
            raise ValueError("O must live in (x, z) space")
        if self.route not in ("general", "slater"):
            raise ValueError(f"unknown route {self.route!r}")

    def feasible(self, x, z, tol: float = TAU_MEM) -> bool:
        u = np.concatenate([_vec(x, self.n), _vec(z, self.d)])
        if self.O is not None and not self.O.contains(u, tol):
            return False
        val = expected_map(self.Phi, self.model, u)
        return any(not P.intersect(self.K).is_empty() for P in val.parts)

    def evaluate(self, x, grid: np.ndarray) -> np.ndarray:
        """Feasible z among the rows of `grid` (used by the oracle)."""
        return np.array([z for z in grid if self.feasible(x, z)]).reshape(-1, self.d)


def _constraint_terms(spec: ConstraintSystemSpec, u: np.ndarray, est: SystemEstimate):
    """(ȳ, normal cone N(ȳ; K), selection set) triples."""
    val = expected_map(spec.Phi, spec.model, u)
    parts = [P.intersect(spec.K) for P in val.parts]
    ys = _points_of(parts)
    if not ys:
        raise ValueError("(x̄, z̄) is not on the graph: E[Φ] misses K")
    out = []
    for yb in ys:
        NK = normal_cone(spec.K, yb)
        out.append((yb, NK, selection_set(spec.Phi, spec.model, u, yb)))
    est.ybars = [_clean(y) for y in ys]
    est.log.append(f"{len(ys)} base points ȳ in E[Φ](x̄,z̄) ∩ K (vertices and centroids)")
    return out


def constraint_estimate(spec: ConstraintSystemSpec, xbar, zbar, quasi_evidence: str | None = None) -> SystemEstimate:
    spec.validate()
    n, d = spec.n, spec.d
    u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
    est = SystemEstimate(["coderivative estimate for stochastic constraint systems",
                          "qualification conditions on N(ȳ;K) and N((x̄,z̄);O)"], False, None)
    if not spec.feasible(xbar, zbar):
        raise ValueError("(x̄, z̄) is not on the graph of F")
    triples = _constraint_terms(spec, u, est)
    NO = normal_cone(spec.O, u) if spec.O is not None else None
    ok = _standing_and_quasi(est, spec.Phi, spec.model, u, {i: t[2] for i, t in enumerate(triples)},
                             spec.eta, spec.rho, spec.per_axis, quasi_evidence)
    if not ok:
        return est
    pieces = []
    for yb, NK, S in triples:
        for sel in S.extreme_selections():
            H = expected_coderivative_map(spec.Phi, spec.model, u, sel)
            q1 = qualification_check(kernel_query(H, NK, "0 ∈ ∫D*Φ(y*), y* ∈ N(ȳ;K) ⇒ y* = 0"))
            if not q1.holds:
                est.hyp("qualification: trivial kernel over N(ȳ;K)", FAIL, f"ȳ = {_clean(yb)}")
                est.witness = q1.witness
                return est
            if NO is not None and not NO.is_zero():
                negNO = PolyhedralCone.from_inequalities(-_cone_rows(NO), n + d) if _cone_rows(NO).shape[0] \
                    else PolyhedralCone.full(n + d)
                q2 = qualification_check(range_query(H, NK, negNO, "∫D*Φ(N(ȳ;K)) ∩ -N(O) = {0}"))
                if not q2.holds:
                    est.hyp("qualification: ∫D*Φ(N(ȳ;K)) ∩ -N((x̄,z̄);O) = {0}", FAIL, f"ȳ = {_clean(yb)}")
                    est.witness = q2.witness[H.in_dim:] if q2.witness else None
                    return est
            pieces += _estimate_from_terms(H, n, d, NK, NO)
    est.hyp("qualification conditions", PASS, "checked on every base point and extreme selection")
    est.estimate = HomogeneousMapValue(d, n, tuple(pieces), exact=False)
    est.emitted = True
    return est


def constraint_coderivative(spec: ConstraintSystemSpec, xbar, zbar, zstar):
    """(estimate set for D*F(x̄,z̄)(z*), log); raises QualificationFailed when the proviso fails."""
    est = constraint_estimate(spec, xbar, zbar)
    if not est.emitted:
        raise QualificationFailed("no estimate emitted: " + "; ".join(h.line() for h in est.failed()),
                                  est.log, est.witness)
    return est.at(zstar), est.log


def _affine_parts(node: Node):
    """(A, b) when the node is affine in (x, z), else None."""
    if isinstance(node, AffineMap):
        return node.A, node.b
    return None


def _convex_in_z(node: Node, u: np.ndarray, n: int, d: int, radius: float, per_axis: int) -> str:
    if isinstance(node, AffineMap):
        return PASS
    if isinstance(node, SmoothMap) and node.polys is not None:
        from .stochastic import ball_grid
        for p in ball_grid(u, radius, per_axis):
            for poly in node.polys:
                Hz = poly.hessian(p)[n:, n:]
                if np.min(np.linalg.eigvalsh(0.5 * (Hz + Hz.T))) < -1e-9:
                    return FAIL
        return PASS
    return UNVERIFIABLE


def _graph_coderivative(O: PolyhedralSet, u: np.ndarray, n: int, d: int) -> HomogeneousMapValue:
    """D*G(x̄,z̄) for G with polyhedral graph O: v* -> {u* : (u*, -v*) ∈ N(O)}."""
    NO = normal_cone(O, u)
    T = np.block([[np.zeros((d, n)), -np.eye(d)], [np.eye(n), np.zeros((n, d))]])
    return HomogeneousMapValue(d, n, (NO.as_lifted().image(T),), exact=True)


def slater_check(spec: ConstraintSystemSpec, xbar, zbar) -> tuple[str, np.ndarray | None, str]:
    """Look for z0 ∈ G(x̄) with E g_i(x̄, z0) < 0 on the active indices; K must be the nonpositive orthant."""
    n, d = spec.n, spec.d
    xbar, zbar = _vec(xbar, n), _vec(zbar, d)
    u = np.concatenate([xbar, zbar])
    g = _expected_point(spec.Phi, spec.model, u)
    active = np.flatnonzero(np.abs(g) <= 1e-9)
    G = spec.O.slice(range(n), xbar) if spec.O is not None else PolyhedralSet.full(d)
    if spec.slater_point is not None:
        z0 = _vec(spec.slater_point, d)
        g0 = _expected_point(spec.Phi, spec.model, np.concatenate([xbar, z0]))
        ok = G.contains(z0) and np.linalg.norm(z0 - zbar) > 1e-9 and np.all(g0[active] < -1e-9)
        return (PASS if ok else FAIL), z0, "user-supplied point"
    nodes = spec.Phi.of(spec.model)
    aff = [_affine_parts(nd) for nd in nodes]
    if any(a is None for a in aff):
        return UNVERIFIABLE, None, "no Slater point supplied and the constraints are not affine"
    w = spec.model.weights
    A = sum(wi * a[0] for wi, a in zip(w, aff))
    b = sum(wi * a[1] for wi, a in zip(w, aff))
    Ax, Az = A[:, :n], A[:, n:]
    if active.size == 0:
        return PASS, zbar, "no active constraints"
    # max s subject to (Ax x̄ + Az z + b)_i + s <= 0 on I, z ∈ G(x̄), s <= 1
    rows = np.hstack([Az[active], np.ones((active.size, 1))])
    rhs = -(Ax[active] @ xbar + b[active])
    Grows = np.hstack([G.A, np.zeros((G.nrows, 1))]) if G.nrows else np.zeros((0, d + 1))
    c = np.zeros(d + 1)
    c[-1] = -1.0
    r = la.solve_lp(c, np.vstack([rows, Grows]), np.concatenate([rhs, G.b]),
                    bounds=[(None, None)] * d + [(None, 1.0)])
    if not r.ok or r.x[-1] <= 1e-9:
        return FAIL, None, f"max slack {0.0 if not r.ok else r.x[-1]:.3e}"
    return PASS, r.x[:d], f"slack {r.x[-1]:.6g}"


def constraint_certify(spec: ConstraintSystemSpec, xbar, zbar, prop: str = LIPSCHITZ_LIKE,
                       quasi_evidence: str | None = None) -> tuple[Certificate, SystemEstimate]:
    spec.validate()
    n, d = spec.n, spec.d
    u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
    pre: list[Hypothesis] = []
    basis = ["coderivative criterion applied to the constraint-system estimate"]
    if spec.route == "slater":
        if prop != LIPSCHITZ_LIKE:
            raise PathUnavailable("the Slater route only addresses the Lipschitz-like property")
        basis.append("Slater-type condition for convex-in-z constraint systems")
        if not np.allclose(spec.K.A, np.eye(spec.K.dim)) or np.any(np.abs(spec.K.b) > 0):
            raise PathUnavailable("the Slater route requires K to be the nonpositive orthant")
        conv = [_convex_in_z(nd, u, n, d, spec.eta, spec.per_axis) for nd in spec.Phi.of(spec.model)]
        cstat = FAIL if FAIL in conv else (UNVERIFIABLE if UNVERIFIABLE in conv else PASS)
        pre.append(Hypothesis("constraints convex in z", cstat))
        if spec.O is not None:
            pre.append(Hypothesis("G(x̄) convex and gph G normally regular", PASS, "polyhedral convex graph"))
        s_status, z0, s_detail = slater_check(spec, xbar, zbar)
        pre.append(Hypothesis("Slater point on the active constraints", s_status,
                              s_detail + ("" if z0 is None else f", z0 = {_clean(z0)}")))
        if spec.O is not None:
            DG = _graph_coderivative(spec.O, u, n, d)
            gl = lipschitz_certify(DG, True)
            pre.append(Hypothesis("G Lipschitz-like around (x̄,z̄)", PASS if gl.ok else FAIL,
                                  "coderivative criterion on gph G"))
    est = constraint_estimate(spec, xbar, zbar, quasi_evidence)
    est.hypotheses = pre + est.hypotheses
    est.log = [h.line() for h in pre] + est.log
    log = list(est.log)
    bad = [h for h in pre if h.status in (FAIL, UNVERIFIABLE)]
    if bad:
        log.append("no certificate: " + ", ".join(h.name for h in bad))
        return Certificate(prop, INCONCLUSIVE, assumptions_log=log, basis=basis + est.basis), est
    if not est.emitted:
        log.append("no certificate: the estimate was not emitted")
        return Certificate(prop, INCONCLUSIVE, witness=est.witness, assumptions_log=log,
                           basis=basis + est.basis), est
    if prop == LIPSCHITZ_LIKE:
        cert = lipschitz_certify(est.estimate, False, log)
    elif prop == METRIC_REGULARITY:
        cert = metric_regularity_certify(est.estimate, False, log)
    else:
        raise ValueError(f"unknown property {prop!r}")
    cert.basis = basis + est.basis
    return cert, est


# semilinear systems


@dataclass(frozen=True, eq=False)
class SemilinearSpec:
    """F(x) = {z : <E a_i, z> <= E b_i(x), z ∈ G(x)} with affine b_t(x) = B_t x + beta_t.

    `a`, `B`, `beta` map scenario ids to arrays of shapes (m, d), (m, n), (m,);
    `graph_G` is the polyhedral graph of G in (x, z) space.
    """

    a: Mapping[str, np.ndarray]
    B: Mapping[str, np.ndarray]
    beta: Mapping[str, np.ndarray]
    graph_G: PolyhedralSet
    model: ScenarioModel
    n: int
    slater_point: np.ndarray | None = None

    def mean(self, key: str) -> np.ndarray:
        src = {"a": self.a, "B": self.B, "beta": self.beta}[key]
        return sum(w * np.asarray(src[i], float) for w, i in zip(self.model.weights, self.model.ids))

    def to_constraint(self, **kw) -> ConstraintSystemSpec:
        nodes = {}
        for i in self.model.ids:
            a = np.atleast_2d(np.asarray(self.a[i], float))
            B = np.atleast_2d(np.asarray(self.B[i], float))
            beta = np.atleast_1d(np.asarray(self.beta[i], float))
            nodes[i] = AffineMap(np.hstack([-B, a]), -beta)
        m = np.atleast_2d(np.asarray(self.a[self.model.ids[0]])).shape[0]
        return ConstraintSystemSpec(RandomIntegrand(nodes), PolyhedralSet.orthant(m, -1), self.model, self.n,
                                    self.graph_G, route="slater", slater_point=self.slater_point, **kw)


@dataclass(frozen=True)
class MultiplierSolution:
    residual: float
    lam: tuple
    u: tuple
    v: tuple
    complementarity: float


def semilinear_multipliers(spec: SemilinearSpec, xbar, zbar, xstar, zstar) -> MultiplierSolution:
    """Direct multiplier solve for x* ∈ D*F(x̄,z̄)(z*).

    With ζ = -z*, finds λ >= 0 (zero on inactive rows) and (-u*, -v*) in the
    normal cone of gph G, written through the active rows of its inequality
    description, that minimize the l-infinity residual of
        ζ + v* = Σ λ_i E a_i,   x* + u* = -Σ λ_i E ∇b_i.
    """
    n = spec.n
    Ea, EB, Eb = spec.mean("a"), spec.mean("B"), spec.mean("beta")
    Ea = np.atleast_2d(Ea)
    EB = np.atleast_2d(EB)
    m, d = Ea.shape
    xbar, zbar, xstar, zstar = _vec(xbar, n), _vec(zbar, d), _vec(xstar, n), -_vec(zstar, d)
    slack = Ea @ zbar - (EB @ xbar + np.atleast_1d(Eb))
    inactive = np.flatnonzero(slack < -1e-9)
    Gs = spec.graph_G
    act = Gs.active_rows(np.concatenate([xbar, zbar]))
    Ga = Gs.A[act]  # normal cone = {Gaᵀ μ : μ >= 0}
    k = Ga.shape[0]
    # variables: λ (m), μ (k), t (1); (p, q) = Gaᵀ μ, u* = -p, v* = -q
    nv = m + k + 1
    # residual r1 = z* - q - Eaᵀλ, r2 = x* - p + EBᵀλ
    Mq = Ga[:, n:].T if k else np.zeros((d, 0))
    Mp = Ga[:, :n].T if k else np.zeros((n, 0))
    R1 = np.hstack([-Ea.T, -Mq])  # times (λ, μ) plus z*
    R2 = np.hstack([EB.T, -Mp])
    R = np.vstack([R1, R2])
    rc = np.concatenate([zstar, xstar])
    one = np.ones((R.shape[0], 1))
    A_ub = np.vstack([np.hstack([R, -one]), np.hstack([-R, -one])])
    b_ub = np.concatenate([-rc, rc])
    c = np.zeros(nv)
    c[-1] = 1.0
    bounds = [(0.0, 0.0) if i in set(inactive.tolist()) else (0.0, None) for i in range(m)]
    bounds += [(0.0, None)] * k + [(0.0, None)]
    r = la.solve_lp(c, A_ub, b_ub, bounds=bounds)
    lam, mu = r.x[:m], r.x[m:m + k]
    p, q = Mp @ mu, Mq @ mu
    res1 = zstar + (-q) - Ea.T @ lam
    res2 = xstar + (-p) + EB.T @ lam
    comp = float(np.max(np.abs(lam * slack))) if m else 0.0
    return MultiplierSolution(float(max(np.max(np.abs(res1)), np.max(np.abs(res2)))), _clean(lam),
                              _clean(-p), _clean(-q), comp)


# ---------------------------------------------------------------------------
# variational systems


@dataclass(frozen=True, eq=False)
class VariationalSystemSpec:
    """S(x) = {z : 0 ∈ E[Φ](x, z) + G(·)}; G acts on (x, z), or on z alone when G.in_dim == d."""

    Phi: RandomIntegrand
    G: Node
    model: ScenarioModel
    n: int
    eta: float = 0.1
    rho: float = 0.25
    per_axis: int = 5

    @property
    def d(self) -> int:
        return self.Phi.in_dim - self.n

    @property
    def x_independent(self) -> bool:
        return self.G.in_dim == self.d

    def validate(self) -> None:
        if self.d <= 0:
            raise ValueError("Φ must act on (x, z) with z nonempty")
        if self.G.out_dim != self.Phi.out_dim:
            raise ValueError("E[Φ] and G must map into the same space")
        if self.G.in_dim not in (self.d, self.n + self.d):
            raise ValueError("G must act on z or on (x, z)")

    def g_input(self, u: np.ndarray) -> np.ndarray:
        return u[self.n:] if self.x_independent else u

    def residual(self, x, z) -> float:
        """dist(0, E[Φ](x,z) + G(x,z)) in the l-infinity norm (inf off the domain)."""
        u = np.concatenate([_vec(x, self.n), _vec(z, self.d)])
        try:
            val = expected_map(self.Phi, self.model, u)
            g = self.G.evaluate(self.g_input(u))
        except DomainError:
            return math.inf
        best = math.inf
        for P in val.parts:
            for Q in g.parts:
                # 0 ∈ P + Q  iff  P ∩ (-Q) ≠ ∅
                negQ = PolyhedralSet(-Q.A, Q.b)
                best = min(best, _set_gap(P, negQ))
        return best

    def contains(self, x, z, tol: float = 1e-7) -> bool:
        return self.residual(x, z) <= tol


def _set_gap(P: PolyhedralSet, Q: PolyhedralSet) -> float:
    """min ||p - q|| over p ∈ P, q ∈ Q (l-infinity)."""
    L = LiftedPolyhedron.from_polyhedron(P) + LiftedPolyhedron.from_polyhedron(Q).scaled(-1.0)
    return L.dist_inf(np.zeros(P.dim))[0]


def _variational_ybars(spec: VariationalSystemSpec, u: np.ndarray) -> list[np.ndarray]:
    val = expected_map(spec.Phi, spec.model, u)
    g = spec.G.evaluate(spec.g_input(u))
    parts = []
    for P in val.parts:
        for Q in g.parts:
            parts.append(P.intersect(PolyhedralSet(-Q.A, Q.b)))
    return _points_of(parts)


def _g_term(spec: VariationalSystemSpec, u: np.ndarray, yb: np.ndarray) -> HomogeneousMapValue:
    H = spec.G.coderivative_map(spec.g_input(u), -yb)
    if spec.x_independent:
        H = H.output_map(np.vstack([np.zeros((spec.n, spec.d)), np.eye(spec.d)]))
    return H


def variational_estimate(spec: VariationalSystemSpec, xbar, zbar, quasi_evidence: str | None = None,
                         basis: Sequence[str] | None = None) -> SystemEstimate:
    spec.validate()
    n, d = spec.n, spec.d
    u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
    est = SystemEstimate(list(basis or ["coderivative estimate for stochastic variational systems",
                                        "adjoint generalized equation"]), False, None)
    if not spec.contains(xbar, zbar):
        raise ValueError("(x̄, z̄) is not on the graph of S")
    ys = _variational_ybars(spec, u)
    est.ybars = [_clean(y) for y in ys]
    est.log.append(f"{len(ys)} base points ȳ in -G(x̄,z̄) ∩ E[Φ](x̄,z̄)")
    sels = {i: selection_set(spec.Phi, spec.model, u, yb) for i, yb in enumerate(ys)}
    if not _standing_and_quasi(est, spec.Phi, spec.model, u, sels, spec.eta, spec.rho, spec.per_axis,
                               quasi_evidence):
        return est
    pieces = []
    Px, Pz = _blocks(n, d)
    single = all(nd.single_valued for nd in spec.Phi.of(spec.model))
    for i, yb in enumerate(ys):
        DG = _g_term(spec, u, yb)
        for sel in sels[i].extreme_selections():
            T1 = expected_coderivative_map(spec.Phi, spec.model, u, sel)
            if single and spec.x_independent:
                qx = qualification_check(kernel_query(T1.output_map(Px), description="ker proj_x ∫∂<·,Φ> = {0}"))
                est.hyp("x-block kernel condition", PASS if qx.holds else FAIL,
                        "" if qx.holds else f"witness {qx.witness}")
            r = adjoint_solve(AdjointEquation(T1, DG, (tuple(u), _clean(yb))))
            if not r.trivial_only:
                est.hyp("adjoint generalized equation has only the trivial solution", FAIL,
                        f"ȳ = {_clean(yb)}, y* = {r.witness}")
                est.witness = r.witness
                return est
            pieces += _estimate_from_terms(T1.plus(DG), n, d)
    est.hyp("adjoint generalized equation has only the trivial solution", PASS)
    est.estimate = HomogeneousMapValue(d, n, tuple(pieces), exact=False)
    est.emitted = True
    return est


def variational_coderivative(spec: VariationalSystemSpec, xbar, zbar, zstar):
    est = variational_estimate(spec, xbar, zbar)
    if not est.emitted:
        cls = AdjointNontrivial if any("adjoint" in h.name for h in est.failed()) else QualificationFailed
        raise cls("no estimate emitted: " + "; ".join(h.line() for h in est.failed()), est.log, est.witness)
    return est.at(zstar), est.log


def partial_adjoint_check(spec: VariationalSystemSpec, xbar, zbar):
    """0 ∈ proj_z ∫∂<y*,Φ> + D*G(z̄,-ȳ)(y*) ⇒ y* = 0, over every base point ȳ and extreme selection."""
    n, d = spec.n, spec.d
    u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
    _, Pz = _blocks(n, d)
    for yb in _variational_ybars(spec, u):
        DGz = spec.G.coderivative_map(spec.g_input(u), -yb)
        for sel in selection_set(spec.Phi, spec.model, u, yb).extreme_selections():
            T1 = expected_coderivative_map(spec.Phi, spec.model, u, sel).output_map(Pz)
            r = adjoint_solve(AdjointEquation(T1, DGz, description="partial adjoint equation"))
            if not r.trivial_only:
                return r
    return r


def variational_certify(spec: VariationalSystemSpec, xbar, zbar, prop: str = LIPSCHITZ_LIKE,
                        quasi_evidence: str | None = None) -> tuple[Certificate, SystemEstimate]:
    spec.validate()
    n, d = spec.n, spec.d
    u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
    single = all(nd.single_valued for nd in spec.Phi.of(spec.model))
    path53 = single and spec.x_independent
    basis = ["coderivative criterion applied to the variational-system estimate"]
    if path53:
        basis.append("single-valued Φ with x-independent G: partial adjoint equation and Lipschitz-like G")
    est = variational_estimate(spec, xbar, zbar, quasi_evidence)
    log = list(est.log)
    if path53:
        pa = partial_adjoint_check(spec, xbar, zbar)
        log.append(f"partial adjoint equation: {pa.label}" + ("" if pa.trivial_only else f" (y* = {pa.witness})"))
        if prop == METRIC_REGULARITY:
            for yb in _variational_ybars(spec, u):
                gl = lipschitz_certify(spec.G.coderivative_map(spec.g_input(u), -yb), True)
                if gl.ok:
                    log.append(f"G Lipschitz-like around (z̄, -ȳ) for ȳ = {_clean(yb)}")
                else:
                    log.append(f"G is not Lipschitz-like around (z̄, -ȳ) for ȳ = {_clean(yb)}: "
                               f"the sufficient condition for metric regularity does not hold")
                    if isinstance(spec.G, (NormalConeMap, ComposedNormalCone)):
                        log.append("normal-cone mappings are not Lipschitz-like at boundary points, "
                                   "so metric regularity cannot be certified this way")
    if not est.emitted:
        log.append("no certificate: the estimate was not emitted")
        return Certificate(prop, INCONCLUSIVE, witness=est.witness, assumptions_log=log,
                           basis=basis + est.basis), est
    if prop == LIPSCHITZ_LIKE:
        cert = lipschitz_certify(est.estimate, False, log)
    elif prop == METRIC_REGULARITY:
        cert = metric_regularity_certify(est.estimate, False, log)
    else:
        raise ValueError(f"unknown property {prop!r}")
    cert.basis = basis + est.basis
    return cert, est


# ---------------------------------------------------------------------------
# truncation


@dataclass(frozen=True, eq=False)
class TruncatedNode(Node):
    """u -> Φ(u) ∩ (ȳ + γ[-1, 1]^m); the l-infinity box stands in for the Euclidean ball."""

    inner: Node
    center: np.ndarray
    gamma: float
    kind = "truncated"

    @property
    def in_dim(self) -> int:
        return self.inner.in_dim

    @property
    def out_dim(self) -> int:
        return self.inner.out_dim

    @property
    def single_valued(self) -> bool:
        return self.inner.single_valued

    @property
    def box(self) -> PolyhedralSet:
        c = _vec(self.center, self.out_dim)
        return PolyhedralSet.box(c - self.gamma, c + self.gamma)

    def evaluate(self, u) -> SetValue:
        val = self.inner.evaluate(u)
        return SetValue(tuple(P.intersect(self.box) for P in val.parts), self.out_dim)

    def contains(self, u, y, tol: float = TAU_MEM) -> bool:
        return self.box.contains(y, tol) and self.inner.contains(u, y, tol)

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        y = _vec(y, self.out_dim)
        if np.max(np.abs(y - self.center)) >= self.gamma - 1e-12:
            raise DomainError("coderivative of a truncation is only available inside the box")
        return self.inner.coderivative_map(u, y)

    def bounded_values(self) -> bool:
        return True

    def convex_valued(self) -> bool:
        return self.inner.convex_valued()


def truncated_pathway(spec, xbar, zbar, prop: str = LIPSCHITZ_LIKE, normally_regular: bool | None = None,
                      eta: float | None = None, per_axis: int | None = None):
    """Replace Φ by its truncation around the base values and delegate.

    Requires single-valued base values, convex values near the point and
    integrable Lipschitz-like evidence; normal regularity of the graph of the
    system is a declared hypothesis.
    """
    is_constraint = isinstance(spec, ConstraintSystemSpec)
    n, d = spec.n, spec.d
    u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
    eta = spec.eta if eta is None else eta
    per_axis = spec.per_axis if per_axis is None else per_axis
    log: list[str] = []
    basis = ["truncated integrand under the integrable Lipschitz-like property"]
    nodes = spec.Phi.of(spec.model)
    base = []
    for atom, nd in zip(spec.model.atoms, nodes):
        val = nd.evaluate(u)
        p = val.as_point()
        if p is None:
            raise EvidenceMissing(f"Φ_t(x̄,z̄) is not single-valued on atom {atom.id}", log)
        base.append(p)
    log.append("base values Φ_t(x̄,z̄) are single-valued: pass")
    conv = all(nd.convex_valued() for nd in nodes)
    log.append(f"convex values near (x̄,z̄): {'pass' if conv else 'fail'}")
    ev = lipschitz_property_check(spec.Phi, spec.model, u, np.array(base), "lipschitz_like", eta, per_axis)
    if ev.verdict != "holds":
        raise EvidenceMissing("integrable Lipschitz-like evidence fails", log)
    log.append(f"integrable Lipschitz-like evidence: pass (integrated modulus {ev.integrated:.6g}, eta {eta:g})")
    if normally_regular is None:
        normally_regular = spec.normally_regular if is_constraint else None
    if not normally_regular or not conv:
        reason = "normal regularity of the graph is not declared" if not normally_regular else "nonconvex values"
        log.append(f"no certificate: {reason}")
        return Certificate(prop, INCONCLUSIVE, assumptions_log=log, basis=basis), None
    log.append("normal regularity of the graph: declared")
    gamma = 2.0 * eta
    trunc = RandomIntegrand({i: TruncatedNode(nd, b, gamma) for i, nd, b in zip(spec.model.ids, nodes, base)})
    tspec = replace(spec, Phi=trunc)
    evidence = "implied by the integrable Lipschitz-like property of the truncated integrand"
    if is_constraint:
        cert, est = constraint_certify(tspec, xbar, zbar, prop, quasi_evidence=evidence)
    else:
        cert, est = variational_certify(tspec, xbar, zbar, prop, quasi_evidence=evidence)
    cert.assumptions_log = log + [f"truncation radius gamma = {gamma:g}"] + cert.assumptions_log
    cert.basis = basis + cert.basis
    return cert, est


# ---------------------------------------------------------------------------
# stationary-point maps


@dataclass(frozen=True, eq=False)
class StationaryMapSpec:
    """S(x) = {z : 0 ∈ Σ w_t ∂_z f_t(x, z) + ∂_z ψ(·)}; ψ acts on (x, z) or on z alone."""

    f: Mapping[str, ScalarFunction]
    psi: ScalarFunction
    model: ScenarioModel
    n: int
    eta: float = 0.1
    rho: float = 0.25
    per_axis: int = 5

    @property
    def d(self) -> int:
        return next(iter(self.f.values())).dim - self.n

    def to_variational(self) -> VariationalSystemSpec:
        n, d = self.n, self.d
        zc = list(range(n, n + d))
        Phi = RandomIntegrand({i: self.f[i].subgradient_map(zc) for i in self.model.ids})
        G = self.psi.subgradient_map(None if self.psi.dim == d else zc)
        return VariationalSystemSpec(Phi, G, self.model, n, self.eta, self.rho, self.per_axis)

    def psi_c11(self) -> bool:
        return isinstance(self.psi, (Quadratic, PolyScalar)) and self.psi.dim == self.d


STATIONARY_BASIS = ["second-order subdifferential estimate for stationary-point maps",
                    "second-order adjoint generalized equation"]


def stationary_estimate(spec: StationaryMapSpec, xbar, zbar) -> SystemEstimate:
    vs = spec.to_variational()
    est = variational_estimate(vs, xbar, zbar, basis=STATIONARY_BASIS)
    est.log.insert(0, "local boundedness of -∂_zψ ∩ E[∂_z f]: declared from catalog structure")
    return est


def stationary_map_coderivative(spec: StationaryMapSpec, xbar, zbar, zstar):
    est = stationary_estimate(spec, xbar, zbar)
    if not est.emitted:
        failed = [h for h in est.failed()]
        if any("standing" in h.name for h in failed):
            raise LocalizationFailed("localized conditions fail", est.log)
        raise AdjointNontrivial("the second-order adjoint equation has a nontrivial solution", est.log, est.witness)
    return est.at(zstar), est.log


def stationary_certify(spec: StationaryMapSpec, xbar, zbar, prop: str = LIPSCHITZ_LIKE):
    vs = spec.to_variational()
    n, d = spec.n, spec.d
    est = stationary_estimate(spec, xbar, zbar)
    log = list(est.log)
    basis = list(STATIONARY_BASIS)
    if prop == METRIC_REGULARITY:
        if spec.psi_c11():
            basis.append("C^{1,1} ψ with trivial x-block kernel gives metric regularity")
            u = np.concatenate([_vec(xbar, n), _vec(zbar, d)])
            Px, _ = _blocks(n, d)
            ok = True
            for yb in _variational_ybars(vs, u):
                for sel in selection_set(vs.Phi, vs.model, u, yb).extreme_selections():
                    T1 = expected_coderivative_map(vs.Phi, vs.model, u, sel).output_map(Px)
                    ok &= qualification_check(kernel_query(T1)).holds
            log.append(f"x-block kernel of the integrated second-order term: {'trivial' if ok else 'nontrivial'}")
        else:
            log.append("ψ is not C^{1,1}: the subdifferential structure of ∂_zψ prevents a metric regularity "
                       "certificate")
    if not est.emitted:
        log.append("no certificate: the estimate was not emitted")
        return Certificate(prop, INCONCLUSIVE, witness=est.witness, assumptions_log=log, basis=basis), est
    cert = (lipschitz_certify if prop == LIPSCHITZ_LIKE else metric_regularity_certify)(est.estimate, False, log)
    cert.basis = basis
    return cert, est


# ---------------------------------------------------------------------------
# MPECs


@dataclass(frozen=True, eq=False)
class MpecSpec:
    """min φ(x, z) subject to z ∈ S(x), x ∈ C."""

    phi: ScalarFunction
    system: VariationalSystemSpec
    C: PolyhedralSet | None = None

    def feasible(self, x, z, tol: float = 1e-7) -> bool:
        if self.C is not None and not self.C.contains(x, tol):
            return False
        return self.system.contains(x, z, tol)


@dataclass
class MpecReport:
    residual: float
    verdict: str  # "satisfied" | "violated" | "inconclusive"
    multipliers: dict
    log: list
    basis: list

    def to_dict(self) -> dict:
        return {"residual": self.residual, "verdict": self.verdict, "multipliers": self.multipliers,
                "log": list(self.log), "basis": list(self.basis)}


def _lipschitz_cost(phi: ScalarFunction) -> bool:
    return isinstance(phi, (Quadratic, PolyScalar, MaxAffine))


def mpec_check(spec: MpecSpec, xbar, zbar, tau: float = TAU_OPT) -> MpecReport:
    vs = spec.system
    vs.validate()
    n, d = vs.n, vs.d
    xbar, zbar = _vec(xbar, n), _vec(zbar, d)
    u = np.concatenate([xbar, zbar])
    basis = ["necessary optimality conditions for stochastic MPECs"]
    log: list[str] = []
    if not spec.feasible(xbar, zbar):
        raise ValueError("(x̄, z̄) is not feasible")
    subphi = spec.phi.subdifferential(u)
    NC = normal_cone(spec.C, xbar) if spec.C is not None else PolyhedralCone.zero(n)
    # (N(x̄;C), 0) in (x, z) space
    NC0 = NC.as_lifted().image(np.vstack([np.eye(n), np.zeros((d, n))]))
    est = variational_estimate(vs, xbar, zbar)
    log += est.log
    gated = est.emitted
    if _lipschitz_cost(spec.phi):
        log.append("cost is locally Lipschitz: the singular qualification condition holds automatically")
    else:
        log.append("cost is not locally Lipschitz: checking the singular qualification condition")
        if not gated:
            raise QualificationFailed("cannot check the singular qualification condition without an estimate", log)
        if not _singular_qc(spec, u, est.estimate, NC):
            raise QualificationFailed("a nontrivial singular pair satisfies the qualification inclusion", log)
        log.append("singular qualification condition: pass")
    best = (math.inf, None)
    for yb in _variational_ybars(vs, u):
        DG = _g_term(vs, u, yb)
        for sel in selection_set(vs.Phi, vs.model, u, yb).extreme_selections():
            T = expected_coderivative_map(vs.Phi, vs.model, u, sel).plus(DG)
            m = T.in_dim
            for p in T.pieces:
                # output (sum, y*, ∂φ part)
                k = n + d
                A = LiftedPolyhedron.from_polyhedron(subphi)
                S = A.stack(p)  # (g, y, w)
                S = S.stack(NC0)  # (g, y, w, c)
                L = np.hstack([np.eye(k), np.zeros((k, m)), np.eye(k), np.eye(k)])
                total = S.image(np.vstack([L, np.hstack([np.zeros((m, k)), np.eye(m), np.zeros((m, 2 * k))]),
                                           np.hstack([np.eye(k), np.zeros((k, m + 2 * k))])]))
                val, pt = total.image(np.hstack([np.eye(k), np.zeros((k, m + k))])).dist_inf(np.zeros(k))
                if val < best[0] - 1e-15:
                    box = np.hstack([np.vstack([np.eye(k), -np.eye(k)]), np.zeros((2 * k, m + k))])
                    W = total.constrain(box, np.full(2 * k, val + 1e-12)).feasible_point()
                    best = (val, (yb, W))
    res, arg = best
    mult = {}
    if arg is not None and arg[1] is not None:
        yb, W = arg
        k = n + d
        mult = {"ybar": _clean(yb), "ystar": _clean(W[k:k + vs.Phi.out_dim]), "cost_subgradient": _clean(W[k + vs.Phi.out_dim:])}
    if not gated:
        verdict = "inconclusive"
        log.append("the estimate for S was not emitted; the condition is reported without its proviso")
    else:
        verdict = "satisfied" if res <= tau else "violated"
    log.append(f"residual {res:.6e} against tolerance {tau:g}")
    return MpecReport(float(res), verdict, mult, log, basis + est.basis)


def _singular_qc(spec: MpecSpec, u: np.ndarray, est: HomogeneousMapValue, NC: PolyhedralCone) -> bool:
    """[(x∞, z∞) ∈ ∂^∞φ, 0 ∈ x∞ + D*S(z∞) + N(x̄;C)] ⇒ (x∞, z∞) = 0, with ∂^∞φ = N(u; dom φ)."""
    if not isinstance(spec.phi, Indicator):
        return False
    n, d = spec.system.n, spec.system.d
    Ndom = normal_cone(spec.phi.C, u).as_lifted()  # (x∞, z∞)
    pieces = []
    for p in est.pieces:  # (z*, x*)
        S = Ndom.stack(p).stack(NC.as_lifted())  # (x∞, z∞, z*, x*, c)
        eq1 = np.hstack([np.zeros((d, n)), np.eye(d), -np.eye(d), np.zeros((d, n)), np.zeros((d, n))])
        eq2 = np.hstack([np.eye(n), np.zeros((n, d)), np.zeros((n, d)), np.eye(n), np.eye(n)])
        S = S.constrain(A_eq=np.vstack([eq1, eq2]), b_eq=np.zeros(n + d))
        pieces.append(S.image(np.hstack([np.eye(n + d), np.zeros((n + d, d + 2 * n))])))
    return qualification_check(ImplicationQuery(tuple(pieces), tuple(range(n + d)), "singular pair")).holds


# ---------------------------------------------------------------------------
# exact solution maps for affine data (used by the oracle)


def _mean_affine(Phi: RandomIntegrand, model: ScenarioModel):
    nodes = Phi.of(model)
    if not all(isinstance(nd, AffineMap) for nd in nodes):
        raise PathUnavailable("exact solution maps need affine scenario maps")
    A = sum(w * nd.A for w, nd in zip(model.weights, nodes))
    b = sum(w * nd.b for w, nd in zip(model.weights, nodes))
    return A, b


@dataclass(frozen=True, eq=False)
class SolutionMap(Node):
    """x -> F(x) or S(x) as a union of polyhedra, for affine scenario maps and polyhedral O or G."""

    spec: object
    kind = "solution_map"

    @cached_property
    def _pieces(self):
        if isinstance(self.spec, ConstraintSystemSpec):
            return None
        pieces = self.spec.G.graph_pieces()
        if pieces is None:
            raise PathUnavailable("G has no polyhedral graph")
        return pieces

    @property
    def in_dim(self) -> int:
        return self.spec.n

    @property
    def out_dim(self) -> int:
        return self.spec.d

    def evaluate(self, u) -> SetValue:
        sp = self.spec
        n, d = sp.n, sp.d
        x = _vec(u, n)
        A, b = _mean_affine(sp.Phi, sp.model)
        Ax, Az = A[:, :n], A[:, n:]
        r = Ax @ x + b
        if isinstance(sp, ConstraintSystemSpec):
            # K: Kc (Az z + r) <= Kb ; O sliced at x
            P = PolyhedralSet(sp.K.A @ Az, sp.K.b - sp.K.A @ r)
            if sp.O is not None:
                P = P.intersect(sp.O.slice(range(n), x))
            return SetValue((P,), d)
        pieces = self._pieces
        parts = []
        for Q in pieces:
            # (g_in, v) ∈ Q with v = -(Az z + r) and g_in = z or (x, z)
            if sp.x_independent:
                Qz, Qv = Q.A[:, :d], Q.A[:, d:]
                parts.append(PolyhedralSet(Qz - Qv @ Az, Q.b + Qv @ r))
            else:
                Qx, Qz, Qv = Q.A[:, :n], Q.A[:, n:n + d], Q.A[:, n + d:]
                parts.append(PolyhedralSet(Qz - Qv @ Az, Q.b + Qv @ r - Qx @ x))
        return SetValue(tuple(parts), d)

    def bounded_values(self) -> bool:
        return False
