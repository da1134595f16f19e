"""Structured multifunctions with per-node coderivative rules.

Every node maps an input vector u in R^n to a subset of R^m and answers three
questions at a graph point (u, y):

* ``evaluate(u)``               the value as a finite union of polyhedra
* ``coderivative_map(u, y)``    y* -> D*F(u, y)(y*) as a HomogeneousMapValue
* ``graph_pieces()``            gph F as a union of convex polyhedra, when it is one

Variables (x, z) of a system are concatenated into u; ``Precompose`` and
``select_vars`` restrict a node to a subset of them.
"""
from __future__ import annotations

import ast
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _linalg as la
from .geometry import (
    TAU_MEM,
    ZERO_TOL,
    CoderivativeSet,
    EmptySet,
    GeometryError,
    HomogeneousMapValue,
    LiftedPolyhedron,
    PointNotInSet,
    PolyhedralCone,
    PolyhedralSet,
    _enumerate_cells,
    _hyperplane_key,
    _vec,
    minkowski_sum,
    normal_cone,
    normal_cone_map_graph,
    normal_cone_union,
    normal_map_graph_pieces,
)


class MultifunctionError(Exception):
    pass


class DomainError(MultifunctionError):
    pass


class OffGraph(MultifunctionError):
    pass


class NotSingleValued(MultifunctionError):
    pass


class SubgradientMismatch(MultifunctionError):
    pass


class NotConvexInZ(MultifunctionError):
    pass


# ---------------------------------------------------------------------------
# set values


@dataclass(frozen=True, eq=False)
class SetValue:
    """Finite union of convex polyhedra (empty union = empty set)."""

    parts: tuple
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(P for P in self.parts if not P.is_empty()))

    @classmethod
    def point(cls, y) -> "SetValue":
        y = _vec(y)
        return cls((PolyhedralSet.point(y),), y.size)

    @classmethod
    def of(cls, P: PolyhedralSet) -> "SetValue":
        return cls((P,), P.dim)

    @property
    def is_empty(self) -> bool:
        return not self.parts

    def contains(self, y, tol: float = TAU_MEM) -> bool:
        return any(P.dist(y) <= tol for P in self.parts)

    def dist(self, y) -> float:
        if not self.parts:
            return math.inf
        return min(P.dist(y) for P in self.parts)

    def project(self, y) -> np.ndarray:
        if not self.parts:
            raise EmptySet("empty value")
        cands = [P.project(y) for P in self.parts]
        return min(cands, key=lambda c: float(np.linalg.norm(c - y)))

    @property
    def is_bounded(self) -> bool:
        return all(P.is_bounded() for P in self.parts)

    def as_point(self) -> np.ndarray | None:
        """The single point of the value, or None."""
        if len(self.parts) == 0 or not self.is_bounded:
            return None
        V = self._vertex_stack()
        if V.shape[0] == 0:
            return None
        if np.max(np.abs(V - V[0])) <= 1e-9:
            return V[0].copy()
        return None

    def _vertex_stack(self) -> np.ndarray:
        # parts within the LP feasibility tolerance of empty can have no vertices; skip them
        V = [P.vrep[0] for P in self.parts]
        return np.vstack(V) if V else np.zeros((0, self.dim))

    def vertices(self) -> np.ndarray:
        if not self.is_bounded:
            raise GeometryError("value is unbounded")
        V = self._vertex_stack()
        if V.shape[0] == 0:
            raise EmptySet("value has no vertices")
        V = la.unique_rows(V, 1e-10)
        return V[np.lexsort(V.T[::-1])]

    def scaled(self, w: float) -> "SetValue":
        if w <= 0:
            raise ValueError("weight must be positive")
        return SetValue(tuple(P.scale(w) if P.nrows else P for P in self.parts), self.dim)

    def __add__(self, other: "SetValue") -> "SetValue":
        return SetValue(tuple(minkowski_sum([a, b]) for a in self.parts for b in other.parts), self.dim)

    def excess(self, other: "SetValue", window: PolyhedralSet | None = None) -> float | None:
        """sup over (self ∩ window) of dist(·, other); None when self ∩ window is empty.

        Distance to a single convex part is convex, so vertices suffice; for a
        union target, edge midpoints and centroids are added as extra candidates.
        """
        cands, worst, seen = [], 0.0, False
        for P in self.parts:
            Q = P if window is None else P.intersect(window)
            if Q.is_empty():
                continue
            seen = True
            if not Q.is_bounded():
                worst = max(worst, math.inf if not other.parts else _unbounded_excess(Q, other))
                continue
            V = Q.vertices()
            cands.extend(V)
            if len(other.parts) > 1 and V.shape[0] > 1:
                cands.extend((a + b) / 2 for a, b in itertools.combinations(V, 2))
                cands.append(V.mean(axis=0))
        if not seen:
            return None
        if not other.parts:
            return math.inf
        return float(max([worst] + [other.dist(c) for c in cands]))

    def bounding_radius(self) -> float:
        """max ||y|| over the value (inf when unbounded)."""
        if not self.is_bounded:
            return math.inf
        if self.is_empty:
            return 0.0
        return float(max(np.linalg.norm(v) for v in self.vertices()))


def _unbounded_excess(Q: PolyhedralSet, other: "SetValue") -> float:
    """Excess of an unbounded Q over a single convex target.

    Along a recession direction of the target the distance is convex and
    bounded, hence nonincreasing, so the sup sits at the points of Q.
    """
    if len(other.parts) != 1:
        return math.inf
    B = other.parts[0]
    P, R, L = Q.vrep
    rec = PolyhedralCone.from_inequalities(B.A, B.dim)
    if not all(rec.contains(d) for d in np.vstack([R, L, -L])):
        return math.inf
    return float(max(B.dist(v) for v in P))


# ---------------------------------------------------------------------------
# polynomials (file grammar for smooth nodes)


@dataclass(frozen=True)
class Polynomial:
    """Sparse polynomial: {exponent tuple: coefficient}."""

    nvars: int
    terms: tuple  # ((exponents, coef), ...)

    @classmethod
    def from_dict(cls, nvars: int, d: dict) -> "Polynomial":
        items = tuple(sorted((tuple(int(e) for e in k), float(v)) for k, v in d.items() if v != 0.0))
        return cls(nvars, items)

    @classmethod
    def parse(cls, text: str, names: Sequence[str]) -> "Polynomial":
        names = list(names)
        n = len(names)

        def conv(node) -> dict:
            if isinstance(node, ast.Expression):
                return conv(node.body)
            if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
                return {(0,) * n: float(node.value)}
            if isinstance(node, ast.Name):
                if node.id not in names:
                    raise ValueError(f"unknown variable {node.id!r}; expected one of {names}")
                e = [0] * n
                e[names.index(node.id)] = 1
                return {tuple(e): 1.0}
            if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
                p = conv(node.operand)
                return {k: -v for k, v in p.items()} if isinstance(node.op, ast.USub) else p
            if isinstance(node, ast.BinOp):
                if isinstance(node.op, ast.Pow):
                    if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)
                            and node.right.value >= 0):
                        raise ValueError("exponents must be nonnegative integer literals")
                    base = conv(node.left)
                    out = {(0,) * n: 1.0}
                    for _ in range(node.right.value):
                        out = _pmul(out, base)
                    return out
                a, b = conv(node.left), conv(node.right)
                if isinstance(node.op, ast.Add):
                    return _padd(a, b, 1.0)
                if isinstance(node.op, ast.Sub):
                    return _padd(a, b, -1.0)
                if isinstance(node.op, ast.Mult):
                    return _pmul(a, b)
            raise ValueError(f"unsupported expression element: {ast.dump(node)}")

        tree = ast.parse(text.replace("^", "**"), mode="eval")
        p = cls.from_dict(n, conv(tree))
        if p.degree > 3:
            raise ValueError("polynomials are limited to degree 3")
        return p

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, u) -> float:
        u = np.asarray(u, float)
        return float(sum(c * np.prod(u ** np.array(e)) for e, c in self.terms))

    def derivative(self, i: int) -> "Polynomial":
        d = {}
        for e, c in self.terms:
            if e[i] == 0:
                continue
            e2 = list(e)
            e2[i] -= 1
            d[tuple(e2)] = d.get(tuple(e2), 0.0) + c * e[i]
        return Polynomial.from_dict(self.nvars, d)

    def gradient(self, u) -> np.ndarray:
        return np.array([self.derivative(i)(u) for i in range(self.nvars)])

    def hessian(self, u) -> np.ndarray:
        return np.array([[self.derivative(i).derivative(j)(u) for j in range(self.nvars)]
                         for i in range(self.nvars)])

    def combine(self, weights: Sequence[float], others: Sequence["Polynomial"]) -> "Polynomial":
        d: dict = {}
        for w, p in zip(weights, others):
            for e, c in p.terms:
                d[e] = d.get(e, 0.0) + w * c
        return Polynomial.from_dict(self.nvars, d)

    def to_text(self, names: Sequence[str]) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms:
            mon = "*".join(f"{names[i]}^{k}" if k > 1 else names[i] for i, k in enumerate(e) if k)
            parts.append(repr(c) + ("*" + mon if mon else ""))
        return " + ".join(parts)


def _padd(a: dict, b: dict, s: float) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + s * v
    return out


def _pmul(a: dict, b: dict) -> dict:
    out: dict = {}
    for (ka, va), (kb, vb) in itertools.product(a.items(), b.items()):
        k = tuple(x + y for x, y in zip(ka, kb))
        out[k] = out.get(k, 0.0) + va * vb
    return out


# ---------------------------------------------------------------------------
# nodes


class Node:
    in_dim: int
    out_dim: int
    kind: str = "node"
    single_valued: bool = False

    def evaluate(self, u) -> SetValue:
        raise NotImplementedError

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        raise NotImplementedError

    def graph_pieces(self) -> list[PolyhedralSet] | None:
        return None

    def bounded_values(self) -> bool:
        """Whether every value is bounded (catalog-level, used for standing checks)."""
        return True

    def convex_valued(self) -> bool:
        return True

    # shared helpers
    def _check_graph(self, u, y) -> tuple[np.ndarray, np.ndarray]:
        u = _vec(u, self.in_dim)
        y = _vec(y, self.out_dim)
        if not self.evaluate(u).contains(y):
            raise OffGraph(f"y is not in F(u) for node {self.kind}")
        return u, y

    def contains(self, u, y, tol: float = TAU_MEM) -> bool:
        try:
            return self.evaluate(u).contains(y, tol)
        except DomainError:
            return False

    def coderivative(self, u, y, ystar) -> CoderivativeSet:
        return self.coderivative_map(u, y)(_vec(ystar, self.out_dim))


@dataclass(frozen=True, eq=False)
class AffineMap(Node):
    A: np.ndarray
    b: np.ndarray | None = None
    kind = "affine"
    single_valued = True

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        b = np.zeros(A.shape[0]) if self.b is None else _vec(self.b, A.shape[0])
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def in_dim(self) -> int:
        return self.A.shape[1]

    @property
    def out_dim(self) -> int:
        return self.A.shape[0]

    def value(self, u) -> np.ndarray:
        return self.A @ _vec(u, self.in_dim) + self.b

    def jacobian(self, u) -> np.ndarray:
        return self.A

    def evaluate(self, u) -> SetValue:
        return SetValue.point(self.value(u))

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        self._check_graph(u, y)
        return HomogeneousMapValue.linear_map(self.A.T)

    def graph_pieces(self):
        n, m = self.in_dim, self.out_dim
        return [PolyhedralSet.from_constraints(A_eq=np.hstack([self.A, -np.eye(m)]), b_eq=-self.b, n=n + m)]


@dataclass(frozen=True, eq=False)
class SmoothMap(Node):
    """C^1 single-valued map from user oracles; `polys` records a polynomial form."""

    fun: Callable
    jac: Callable
    in_dim: int
    out_dim: int
    polys: tuple | None = None
    kind = "smooth"
    single_valued = True

    @classmethod
    def from_polynomials(cls, polys: Sequence[Polynomial]) -> "SmoothMap":
        polys = tuple(polys)
        n = polys[0].nvars
        return cls(
            lambda u: np.array([p(u) for p in polys]),
            lambda u: np.vstack([p.gradient(u) for p in polys]),
            n, len(polys), polys,
        )

    def value(self, u) -> np.ndarray:
        return np.asarray(self.fun(_vec(u, self.in_dim)), float).reshape(self.out_dim)

    def jacobian(self, u) -> np.ndarray:
        return np.asarray(self.jac(_vec(u, self.in_dim)), float).reshape(self.out_dim, self.in_dim)

    def evaluate(self, u) -> SetValue:
        return SetValue.point(self.value(u))

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, _ = self._check_graph(u, y)
        return HomogeneousMapValue.linear_map(self.jacobian(u).T)


@dataclass(frozen=True, eq=False)
class PolyhedralGraph(Node):
    """Multifunction whose graph is a finite union of convex polyhedra in (u, y)."""

    pieces: tuple
    in_dim: int
    out_dim: int
    affine: tuple | None = None  # ((region, A_j, b_j), ...) for piecewise-affine functions
    kind = "polyhedral"

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for P in self.pieces:
            if P.dim != self.in_dim + self.out_dim:
                raise ValueError("graph piece dimension mismatch")

    @property
    def single_valued(self) -> bool:
        return self.affine is not None

    @classmethod
    def from_affine_pieces(cls, pieces: Sequence[tuple]) -> "PolyhedralGraph":
        """Piecewise-affine function: y = A_j u + b_j on region R_j (regions cover the domain)."""
        out, aff = [], []
        for R, A, b in pieces:
            A = np.atleast_2d(np.asarray(A, float))
            b = _vec(b, A.shape[0])
            n, m = A.shape[1], A.shape[0]
            P = PolyhedralSet.from_constraints(
                np.hstack([R.A, np.zeros((R.nrows, m))]), R.b,
                np.hstack([A, -np.eye(m)]), -b, n=n + m)
            out.append(P)
            aff.append((R, A, b))
        return cls(tuple(out), aff[0][1].shape[1], aff[0][1].shape[0], tuple(aff))

    @classmethod
    def abs_value(cls) -> "PolyhedralGraph":
        return cls.from_affine_pieces([
            (PolyhedralSet(-np.eye(1), np.zeros(1)), [[1.0]], [0.0]),
            (PolyhedralSet(np.eye(1), np.zeros(1)), [[-1.0]], [0.0]),
        ])

    @classmethod
    def square_pl(cls, h: float, L: float = 1.0) -> "PolyhedralGraph":
        """Piecewise-linear interpolant of x^2 on [-L, L] with knots at multiples of h (constant extension outside)."""
        k = int(round(L / h))
        knots = np.arange(-k, k + 1) * h
        pieces = []
        for a, b in zip(knots[:-1], knots[1:]):
            slope = a + b
            pieces.append((PolyhedralSet.box([a], [b]), [[slope]], [a * a - slope * a]))
        pieces.append((PolyhedralSet(np.array([[1.0]]), [knots[0]]), [[0.0]], [knots[0] ** 2]))
        pieces.append((PolyhedralSet(np.array([[-1.0]]), [-knots[-1]]), [[0.0]], [knots[-1] ** 2]))
        return cls.from_affine_pieces(pieces)

    def evaluate(self, u) -> SetValue:
        u = _vec(u, self.in_dim)
        idx = list(range(self.in_dim))
        parts = []
        for P in self.pieces:
            S = P.slice(idx, u)
            if not S.is_empty():
                parts.append(S)
        return SetValue(tuple(parts), self.out_dim)

    def value(self, u) -> np.ndarray:
        v = self.evaluate(u).as_point()
        if v is None:
            raise NotSingleValued("graph is not single-valued at u")
        return v

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, y = self._check_graph(u, y)
        n, m = self.in_dim, self.out_dim
        cones = normal_cone_union(self.pieces, np.concatenate([u, y]))
        return _graph_cones_to_map(cones, n, m, exact=True)

    def graph_pieces(self):
        return list(self.pieces)


def _graph_cones_to_map(cones: Sequence[PolyhedralCone], n: int, m: int, exact: bool) -> HomogeneousMapValue:
    """Normal cones in (x*, w) with w = -y* become graph pieces in (y*, x*)."""
    T = np.block([[np.zeros((m, n)), -np.eye(m)], [np.eye(n), np.zeros((n, m))]])
    pieces = tuple(K.as_lifted().image(T) for K in cones)
    return HomogeneousMapValue(m, n, pieces, exact)


@dataclass(frozen=True, eq=False)
class NormalConeMap(Node):
    """z -> N(z; C)."""

    C: PolyhedralSet
    kind = "normal_cone"

    @property
    def in_dim(self) -> int:
        return self.C.dim

    @property
    def out_dim(self) -> int:
        return self.C.dim

    def evaluate(self, u) -> SetValue:
        u = _vec(u, self.in_dim)
        try:
            K = normal_cone(self.C, u)
        except PointNotInSet as exc:
            raise DomainError(str(exc)) from exc
        return SetValue.of(PolyhedralSet(K.rows, np.zeros(K.rows.shape[0])) if K.rows.shape[0]
                           else PolyhedralSet.full(self.C.dim))

    def contains(self, u, y, tol: float = TAU_MEM) -> bool:
        u = _vec(u, self.in_dim)
        if self.C.residual(u) > tol:
            return False
        return normal_cone(self.C, u).contains(y, max(tol, ZERO_TOL))

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, y = self._check_graph(u, y)
        return normal_cone_map_graph(self.C, u, y)

    def graph_pieces(self):
        return normal_map_graph_pieces(self.C)

    def bounded_values(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class ComposedNormalCone(Node):
    """u -> N(ψ(u); C) for a C^1 map ψ; the coderivative is ∇ψ(u)ᵀ ∘ D*N(·; C).

    The chain rule is an equality when ∇ψ(u) has full row rank, otherwise an
    upper estimate.
    """

    psi: Node  # AffineMap or SmoothMap
    C: PolyhedralSet
    kind = "composed_normal_cone"

    def __post_init__(self):
        if self.psi.out_dim != self.C.dim:
            raise ValueError("psi must map into the space of C")

    @property
    def in_dim(self) -> int:
        return self.psi.in_dim

    @property
    def out_dim(self) -> int:
        return self.C.dim

    def evaluate(self, u) -> SetValue:
        return NormalConeMap(self.C).evaluate(self.psi.value(u))

    def contains(self, u, y, tol: float = TAU_MEM) -> bool:
        return NormalConeMap(self.C).contains(self.psi.value(u), y, tol)

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, y = self._check_graph(u, y)
        J = self.psi.jacobian(u)
        H = normal_cone_map_graph(self.C, self.psi.value(u), y).output_map(J.T)
        return H.with_exact(la.rank(J) == J.shape[0])

    def bounded_values(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class BoxValued(Node):
    """u -> c(u) + r(u) [-1, 1]^m with smooth center c and smooth scalar radius r >= 0."""

    center: Node  # AffineMap or SmoothMap, out_dim m
    radius: Node  # AffineMap or SmoothMap, out_dim 1
    kind = "box"

    @property
    def in_dim(self) -> int:
        return self.center.in_dim

    @property
    def out_dim(self) -> int:
        return self.center.out_dim

    def _cr(self, u):
        c = self.center.value(u)
        r = float(self.radius.value(u)[0])
        if r < -TAU_MEM:
            raise DomainError(f"negative radius {r}")
        return c, max(r, 0.0)

    def evaluate(self, u) -> SetValue:
        c, r = self._cr(_vec(u, self.in_dim))
        return SetValue.of(PolyhedralSet.box(c - r, c + r))

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, y = self._check_graph(u, y)
        c, r = self._cr(u)
        if r <= TAU_MEM:
            raise DomainError("radius vanishes at the base point; the box rule needs r > 0")
        m, n = self.out_dim, self.in_dim
        Jc = self.center.jacobian(u)
        gr = self.radius.jacobian(u)[0]
        L = np.zeros((n, m))
        G, E = [], []
        for j in range(m):
            e = np.zeros(m)
            e[j] = 1.0
            if abs(y[j] - (c[j] + r)) <= 1e-9:
                L[:, j] = Jc[j] + gr
                G.append(e)
            elif abs(y[j] - (c[j] - r)) <= 1e-9:
                L[:, j] = Jc[j] - gr
                G.append(-e)
            else:
                E.append(e)
        G = np.array(G).reshape(-1, m)
        E = np.array(E).reshape(-1, m)
        piece = LiftedPolyhedron(np.vstack([np.eye(m), L]), np.zeros(m + n), G, np.zeros(G.shape[0]),
                                 E, np.zeros(E.shape[0]))
        lin = (L,) if G.shape[0] == 0 else None
        return HomogeneousMapValue(m, n, (piece,), True, lin)


@dataclass(frozen=True, eq=False)
class Sum(Node):
    """F1(u) + F2(u). The coderivative is the Minkowski-sum upper estimate."""

    left: Node
    right: Node
    kind = "sum"

    def __post_init__(self):
        if self.left.in_dim != self.right.in_dim or self.left.out_dim != self.right.out_dim:
            raise ValueError("summands must share dimensions")

    @property
    def in_dim(self) -> int:
        return self.left.in_dim

    @property
    def out_dim(self) -> int:
        return self.left.out_dim

    @property
    def single_valued(self) -> bool:
        return self.left.single_valued and self.right.single_valued

    def evaluate(self, u) -> SetValue:
        return self.left.evaluate(u) + self.right.evaluate(u)

    def decompositions(self, u, y) -> list[tuple[np.ndarray, np.ndarray]]:
        """Splits y = y1 + y2 with y1 in F1(u), y2 in F2(u): vertices and the centroid."""
        u = _vec(u)
        out = []
        for P1 in self.left.evaluate(u).parts:
            for P2 in self.right.evaluate(u).parts:
                # y1 in P1 and y - y1 in P2
                D = P1.intersect(PolyhedralSet(-P2.A, P2.b - P2.A @ y))
                if D.is_empty():
                    continue
                pts, _, _ = D.vrep
                cands = list(pts)
                if pts.shape[0] > 1:
                    cands.append(pts.mean(axis=0))
                for y1 in cands:
                    out.append((y1, y - y1))
        return out

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, y = self._check_graph(u, y)
        total = None
        for y1, y2 in self.decompositions(u, y):
            H = self.left.coderivative_map(u, y1).plus(self.right.coderivative_map(u, y2))
            total = H if total is None else total.union(H)
        return total.with_exact(False)

    def graph_pieces(self):
        for a, b in ((self.left, self.right), (self.right, self.left)):
            if isinstance(a, AffineMap):
                pb = b.graph_pieces()
                if pb is not None:
                    return _shift_graph(pb, a)
        return None

    def bounded_values(self) -> bool:
        return self.left.bounded_values() and self.right.bounded_values()

    def convex_valued(self) -> bool:
        return self.left.convex_valued() and self.right.convex_valued()


def _shift_graph(pieces, aff: AffineMap) -> list[PolyhedralSet]:
    """{(u, y) : (u, y - A u - b) in piece}."""
    n, m = aff.in_dim, aff.out_dim
    out = []
    for P in pieces:
        Au, Ay = P.A[:, :n], P.A[:, n:]
        out.append(PolyhedralSet(np.hstack([Au - Ay @ aff.A, Ay]), P.b + Ay @ aff.b))
    return out


@dataclass(frozen=True, eq=False)
class SmoothPlusMap(Node):
    """f(u) + F(u) with f smooth; the sum rule is exact here."""

    f: Node  # AffineMap or SmoothMap
    inner: Node
    kind = "smooth_plus"

    @property
    def in_dim(self) -> int:
        return self.inner.in_dim

    @property
    def out_dim(self) -> int:
        return self.inner.out_dim

    @property
    def single_valued(self) -> bool:
        return self.inner.single_valued

    def evaluate(self, u) -> SetValue:
        fu = self.f.value(u)
        v = self.inner.evaluate(u)
        return SetValue(tuple(P.translate(fu) for P in v.parts), self.out_dim)

    def contains(self, u, y, tol: float = TAU_MEM) -> bool:
        try:
            return self.inner.contains(u, _vec(y) - self.f.value(u), tol)
        except DomainError:
            return False

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u = _vec(u, self.in_dim)
        y = _vec(y, self.out_dim)
        fu = self.f.value(u)
        if not self.inner.contains(u, y - fu):
            raise OffGraph("y is not in F(u)")
        H = self.inner.coderivative_map(u, y - fu)
        return H.plus(HomogeneousMapValue.linear_map(self.f.jacobian(u).T))

    def graph_pieces(self):
        if isinstance(self.f, AffineMap):
            p = self.inner.graph_pieces()
            return None if p is None else _shift_graph(p, self.f)
        return None

    def bounded_values(self) -> bool:
        return self.inner.bounded_values()


@dataclass(frozen=True, eq=False)
class Precompose(Node):
    """u -> F(P u + q) with P of full row rank (then the chain rule is exact)."""

    inner: Node
    P: np.ndarray
    q: np.ndarray | None = None
    kind = "precompose"

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, float))
        if P.shape[0] != self.inner.in_dim:
            raise ValueError("P rows must match the inner input dimension")
        if la.rank(P) < P.shape[0]:
            raise ValueError("P must have full row rank")
        q = np.zeros(P.shape[0]) if self.q is None else _vec(self.q, P.shape[0])
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)

    @property
    def in_dim(self) -> int:
        return self.P.shape[1]

    @property
    def out_dim(self) -> int:
        return self.inner.out_dim

    @property
    def single_valued(self) -> bool:
        return self.inner.single_valued

    def _map(self, u):
        return self.P @ _vec(u, self.in_dim) + self.q

    def value(self, u):
        return self.inner.value(self._map(u))

    def jacobian(self, u):
        return self.inner.jacobian(self._map(u)) @ self.P

    def evaluate(self, u) -> SetValue:
        return self.inner.evaluate(self._map(u))

    def contains(self, u, y, tol: float = TAU_MEM) -> bool:
        return self.inner.contains(self._map(u), y, tol)

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        return self.inner.coderivative_map(self._map(u), y).output_map(self.P.T)

    def graph_pieces(self):
        p = self.inner.graph_pieces()
        if p is None:
            return None
        k = self.inner.in_dim
        out = []
        for S in p:
            Av, Ay = S.A[:, :k], S.A[:, k:]
            out.append(PolyhedralSet(np.hstack([Av @ self.P, Ay]), S.b - Av @ self.q))
        return out

    def bounded_values(self) -> bool:
        return self.inner.bounded_values()


def select_vars(inner: Node, idx: Sequence[int], total: int) -> Precompose:
    """Node of u in R^total that reads only the coordinates `idx`."""
    P = np.zeros((len(idx), total))
    for r, i in enumerate(idx):
        P[r, i] = 1.0
    return Precompose(inner, P)


# ---------------------------------------------------------------------------
# scalar catalog functions


class ScalarFunction:
    dim: int
    smooth: bool = False

    def value(self, w) -> float:
        raise NotImplementedError

    def subdifferential(self, w) -> PolyhedralSet:
        raise NotImplementedError

    def subgradient_map(self, coords: Sequence[int] | None = None) -> Node:
        """(w) -> ∂f(w), or the partial map w -> ∂_{coords} f(w) when coords is given."""
        raise NotImplementedError

    def convex_in(self, coords: Sequence[int], w) -> bool:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Quadratic(ScalarFunction):
    """f(w) = 1/2 wᵀQw + cᵀw + d with Q symmetric."""

    Q: np.ndarray
    c: np.ndarray | None = None
    d: float = 0.0
    smooth = True

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, float))
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", np.zeros(Q.shape[0]) if self.c is None else _vec(self.c, Q.shape[0]))

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def value(self, w) -> float:
        w = _vec(w, self.dim)
        return float(0.5 * w @ self.Q @ w + self.c @ w + self.d)

    def gradient(self, w) -> np.ndarray:
        return self.Q @ _vec(w, self.dim) + self.c

    def hessian(self, w) -> np.ndarray:
        return self.Q

    def subdifferential(self, w) -> PolyhedralSet:
        return PolyhedralSet.point(self.gradient(w))

    def subgradient_map(self, coords=None) -> Node:
        idx = list(range(self.dim)) if coords is None else list(coords)
        return AffineMap(self.Q[idx], self.c[idx])

    def convex_in(self, coords, w) -> bool:
        idx = list(coords)
        return bool(np.min(np.linalg.eigvalsh(self.Q[np.ix_(idx, idx)])) >= -1e-12)


@dataclass(frozen=True, eq=False)
class PolyScalar(ScalarFunction):
    """Scalar polynomial (the smooth file grammar)."""

    poly: Polynomial
    smooth = True

    @property
    def dim(self) -> int:
        return self.poly.nvars

    def value(self, w) -> float:
        return self.poly(_vec(w, self.dim))

    def gradient(self, w) -> np.ndarray:
        return self.poly.gradient(_vec(w, self.dim))

    def hessian(self, w) -> np.ndarray:
        return self.poly.hessian(_vec(w, self.dim))

    def subdifferential(self, w) -> PolyhedralSet:
        return PolyhedralSet.point(self.gradient(w))

    def subgradient_map(self, coords=None) -> Node:
        idx = list(range(self.dim)) if coords is None else list(coords)
        return SmoothMap.from_polynomials([self.poly.derivative(i) for i in idx])

    def convex_in(self, coords, w) -> bool:
        idx = list(coords)
        return bool(np.min(np.linalg.eigvalsh(self.hessian(w)[np.ix_(idx, idx)])) >= -1e-12)


@dataclass(frozen=True, eq=False)
class MaxAffine(ScalarFunction):
    """g(w) = max_j (a_j · w + beta_j), a convex piecewise-linear function."""

    a: np.ndarray
    beta: np.ndarray | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, float))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", np.zeros(a.shape[0]) if self.beta is None else _vec(self.beta, a.shape[0]))

    @classmethod
    def abs(cls, n: int = 1, i: int = 0) -> "MaxAffine":
        e = np.zeros(n)
        e[i] = 1.0
        return cls(np.vstack([e, -e]))

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def value(self, w) -> float:
        return float(np.max(self.a @ _vec(w, self.dim) + self.beta))

    def active(self, w, tol: float = 1e-9) -> np.ndarray:
        vals = self.a @ _vec(w, self.dim) + self.beta
        return np.flatnonzero(vals >= vals.max() - tol)

    def subdifferential(self, w) -> PolyhedralSet:
        return PolyhedralSet.from_vrep(self.a[self.active(w)])

    def region(self, J: Sequence[int]) -> PolyhedralSet:
        """{w : a_j w + beta_j >= a_k w + beta_k for j in J, all k; equal within J}."""
        rows, rhs = [], []
        j0 = J[0]
        for k in range(self.a.shape[0]):
            rows.append(self.a[k] - self.a[j0])
            rhs.append(self.beta[j0] - self.beta[k])
        for j in J[1:]:
            rows.append(self.a[j0] - self.a[j])
            rhs.append(self.beta[j] - self.beta[j0])
        return PolyhedralSet(np.array(rows), np.array(rhs))

    def subgradient_map(self, coords=None) -> "IndicatorSubgradient":
        return IndicatorSubgradient(self, None if coords is None else tuple(coords))

    def convex_in(self, coords, w) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class Indicator(ScalarFunction):
    """Indicator function of a polyhedron; its subgradient map is N(·; C)."""

    C: PolyhedralSet

    @property
    def dim(self) -> int:
        return self.C.dim

    def value(self, w) -> float:
        return 0.0 if self.C.contains(w) else math.inf

    def subdifferential(self, w) -> PolyhedralSet:
        K = normal_cone(self.C, w)
        return PolyhedralSet(K.rows, np.zeros(K.rows.shape[0])) if K.rows.shape[0] else PolyhedralSet.full(self.dim)

    def subgradient_map(self, coords=None) -> Node:
        if coords is not None and list(coords) != list(range(self.dim)):
            raise ValueError("partial subgradients of an indicator need a product structure")
        return NormalConeMap(self.C)

    def convex_in(self, coords, w) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class IndicatorSubgradient(Node):
    """w -> ∂g(w) (or the partial map w -> ∂_{coords} g(w)) for convex piecewise-linear g."""

    g: MaxAffine
    coords: tuple | None = None
    kind = "subgradient"

    @property
    def _idx(self) -> list[int]:
        return list(range(self.g.dim)) if self.coords is None else list(self.coords)

    @property
    def in_dim(self) -> int:
        return self.g.dim

    @property
    def out_dim(self) -> int:
        return len(self._idx)

    def evaluate(self, u) -> SetValue:
        J = self.g.active(u)
        return SetValue.of(PolyhedralSet.from_vrep(self.g.a[np.ix_(J, self._idx)]))

    def _active_sets(self) -> list[tuple[int, ...]]:
        k = self.g.a.shape[0]
        out = []
        for r in range(1, k + 1):
            for J in itertools.combinations(range(k), r):
                if not self.g.region(J).is_empty():
                    out.append(J)
        return out

    def graph_pieces(self):
        n, m = self.in_dim, self.out_dim
        pieces = []
        for J in self._active_sets():
            R = self.g.region(J)
            V = PolyhedralSet.from_vrep(self.g.a[np.ix_(list(J), self._idx)])
            pieces.append(R.product(V))
        return pieces

    def coderivative_map(self, u, y) -> HomogeneousMapValue:
        u, y = self._check_graph(u, y)
        cones = normal_cone_union(self.graph_pieces(), np.concatenate([u, y]))
        return _graph_cones_to_map(cones, self.in_dim, self.out_dim, exact=True)


# ---------------------------------------------------------------------------
# operations


def coderivative(F: Node, u, y, ystar) -> CoderivativeSet:
    return F.coderivative(u, y, ystar)


def scalarized_subdifferential(F: Node, u, ystar) -> CoderivativeSet:
    """Limiting subdifferential of <y*, F>(u), computed without the graph normal cone.

    Smooth nodes differentiate the scalarized function directly; piecewise-affine
    nodes take the union over arrangement cells q near u of the regular
    subdifferentials ∩_j (g_j + N(q; R_j)).
    """
    u = _vec(u, F.in_dim)
    ystar = _vec(ystar, F.out_dim)
    if isinstance(F, AffineMap):
        return CoderivativeSet.single(ystar @ F.A)
    if isinstance(F, SmoothMap):
        if F.polys is not None:
            return CoderivativeSet.single(F.polys[0].combine(ystar, F.polys).gradient(u))
        return CoderivativeSet.single(_fd_gradient(lambda w: float(ystar @ F.value(w)), u))
    if isinstance(F, Precompose) and F.single_valued:
        inner = scalarized_subdifferential(F.inner, F._map(u), ystar)
        return inner.image(F.P.T)
    if isinstance(F, PolyhedralGraph) and F.affine is not None:
        return _pl_scalarized(F, u, ystar)
    raise NotSingleValued(f"node {F.kind} is not a single-valued catalog node")


def _fd_gradient(f, u, h: float = 1e-6) -> np.ndarray:
    g = np.zeros(u.size)
    for i in range(u.size):
        e = np.zeros(u.size)
        e[i] = h
        g[i] = (f(u + e) - f(u - e)) / (2 * h)
    return g


def _pl_scalarized(F: PolyhedralGraph, u, ystar) -> CoderivativeSet:
    n = F.in_dim
    regs = [(R, A, b) for R, A, b in F.affine if R.contains(u, 1e-9)]
    hyper: list[np.ndarray] = []
    per = []
    for R, A, b in regs:
        idx = R.active_rows(u)
        rows = la.normalize_rows(R.A[idx]) if idx.size else np.zeros((0, n))
        ents = []
        for r in rows:
            hr, s = _hyperplane_key(r)
            j = next((t for t, q in enumerate(hyper) if np.max(np.abs(q - hr)) <= 1e-9), None)
            if j is None:
                hyper.append(hr)
                j = len(hyper) - 1
            ents.append((j, s, r))
        per.append((ents, A.T @ ystar))
    cells = _enumerate_cells(np.array(hyper)) if hyper else [np.zeros(0, dtype=int)]
    members = []
    for sig in cells:
        acc = None
        for ents, g in per:
            if not all(s * sig[j] <= 0 for j, s, _ in ents):
                continue
            gens = np.array([r for j, s, r in ents if sig[j] == 0]).reshape(-1, n)
            k = gens.shape[0]
            piece = LiftedPolyhedron(gens.T.reshape(n, k), g, -np.eye(k), np.zeros(k))
            acc = piece if acc is None else acc.intersect(piece)
        if acc is not None and not acc.is_empty():
            members.append(acc)
    return CoderivativeSet(tuple(members), n, True).pruned()


def second_order_subdifferential(f: ScalarFunction, w, wstar, vstar, coords: Sequence[int] | None = None) -> CoderivativeSet:
    """∂²f(w, w*)(v*) = D*(∂f)(w, w*)(v*); with coords, the partial version in those coordinates."""
    w = _vec(w, f.dim)
    S = f.subgradient_map(coords)
    if not S.contains(w, wstar):
        raise SubgradientMismatch("w* is not a (partial) subgradient at w")
    if f.smooth:
        idx = list(range(f.dim)) if coords is None else list(coords)
        return CoderivativeSet.single(f.hessian(w)[idx].T @ _vec(vstar, len(idx)))
    return S.coderivative(w, wstar, vstar)


@dataclass(frozen=True)
class PartialSubdifferential:
    value: PolyhedralSet
    projection: PolyhedralSet  # proj_z of the full subdifferential
    inclusion_holds: bool


def partial_sub_z(g: ScalarFunction, x, z) -> PartialSubdifferential:
    """∂_z g(x, z) for a catalog function of w = (x, z), with the projection check."""
    x, z = _vec(x), _vec(z)
    nx = x.size
    w = np.concatenate([x, z])
    zidx = list(range(nx, nx + z.size))
    if not g.convex_in(zidx, w):
        raise NotConvexInZ("function is not convex in z at the point")
    if isinstance(g, Indicator):
        raise NotConvexInZ("partial subdifferentials of indicators are not in the catalog")
    val = g.subgradient_map(zidx).evaluate(w).parts[0]
    full = g.subdifferential(w)
    if full.is_bounded():
        proj = PolyhedralSet.from_vrep(la.unique_rows(full.vertices()[:, zidx]))
    else:
        raise GeometryError("unbounded subdifferential")
    inc = all(val.dist(v) <= 1e-9 for v in proj.vertices())
    return PartialSubdifferential(val, proj, inc)
