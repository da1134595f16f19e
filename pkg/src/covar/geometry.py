"""Exact polyhedral geometry: sets, cones, faces, polars, normal cones, distances.

Everything downstream (coderivatives, certificates, estimates) is carried by three
containers defined here:

* ``PolyhedralSet``    inequality form {z : A z <= b}
* ``PolyhedralCone``   generator form or inequality form {v : B v <= 0}
* ``LiftedPolyhedron`` projection {c + M w : G w <= h, E w = f}

Lifted polyhedra are closed under Minkowski sums, linear images and
intersections without any double-description work, so all calculus rules are
expressed with them and only membership/support questions are sent to the LP
solver.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _linalg as la

log = logging.getLogger(__name__)

TAU_MEM = 1e-9
ZERO_TOL = 1e-8
FACE_DIM_CAP = 8


class GeometryError(Exception):
    pass


class PointNotInSet(GeometryError):
    pass


class EmptySet(GeometryError):
    pass


class DimensionCapExceeded(GeometryError):
    pass


class NotANormalPair(GeometryError):
    pass


def _vec(z, n: int | None = None) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    if n is not None and z.size != n:
        raise ValueError(f"expected a vector of length {n}, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise ValueError("vector entries must be finite")
    return z


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True, eq=False)
class PolyhedralSet:
    """{z : A z <= b}. Equalities are stored as paired inequalities."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(1, -1) if A.size else A.reshape(0, 0)
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def nrows(self) -> int:
        return self.A.shape[0]

    # constructors
    @classmethod
    def full(cls, n: int) -> "PolyhedralSet":
        return cls(np.zeros((0, n)), np.zeros(0))

    @classmethod
    def orthant(cls, n: int, sign: int = -1) -> "PolyhedralSet":
        """sign=-1 gives the nonpositive orthant, +1 the nonnegative one."""
        return cls(-float(sign) * np.eye(n), np.zeros(n))

    @classmethod
    def box(cls, lo, hi) -> "PolyhedralSet":
        lo, hi = _vec(lo), _vec(hi)
        n = lo.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    @classmethod
    def point(cls, z) -> "PolyhedralSet":
        z = _vec(z)
        return cls.box(z, z)

    @classmethod
    def from_constraints(cls, A_ub=None, b_ub=None, A_eq=None, b_eq=None, n=None) -> "PolyhedralSet":
        parts_A, parts_b = [], []
        if A_ub is not None and np.size(A_ub):
            A_ub = np.atleast_2d(np.asarray(A_ub, float))
            parts_A.append(A_ub)
            parts_b.append(np.atleast_1d(np.asarray(b_ub, float)))
            n = A_ub.shape[1]
        if A_eq is not None and np.size(A_eq):
            A_eq = np.atleast_2d(np.asarray(A_eq, float))
            b_eq = np.atleast_1d(np.asarray(b_eq, float))
            parts_A += [A_eq, -A_eq]
            parts_b += [b_eq, -b_eq]
            n = A_eq.shape[1]
        if not parts_A:
            if n is None:
                raise ValueError("dimension unknown")
            return cls.full(n)
        return cls(np.vstack(parts_A), np.concatenate(parts_b))

    @classmethod
    def from_vrep(cls, points, rays=None, lines=None) -> "PolyhedralSet":
        points = np.atleast_2d(np.asarray(points, float))
        n = points.shape[1]
        A, b = la.poly_vrep_to_hrep(points, np.zeros((0, n)) if rays is None else rays,
                                    np.zeros((0, n)) if lines is None else lines, n)
        return cls(A, b)

    # queries
    def residual(self, z) -> float:
        z = _vec(z, self.dim)
        if self.nrows == 0:
            return 0.0
        return float(np.max(self.A @ z - self.b))

    def contains(self, z, tol: float = TAU_MEM) -> bool:
        return self.residual(z) <= tol

    def is_empty(self) -> bool:
        if self.nrows == 0:
            return False
        return not la.solve_lp(np.zeros(self.dim), self.A, self.b).ok

    def feasible_point(self) -> np.ndarray:
        if self.nrows == 0:
            return np.zeros(self.dim)
        r = la.solve_lp(np.zeros(self.dim), self.A, self.b)
        if not r.ok:
            raise EmptySet("polyhedron is empty")
        return r.x

    def active_rows(self, z, tol: float = 1e-8) -> np.ndarray:
        z = _vec(z, self.dim)
        if self.nrows == 0:
            return np.zeros(0, dtype=int)
        scale = np.maximum(1.0, np.linalg.norm(self.A, axis=1))
        return np.flatnonzero(np.abs(self.A @ z - self.b) <= tol * scale)

    def project(self, z) -> np.ndarray:
        """Euclidean projection via the least-distance program."""
        z = _vec(z, self.dim)
        if self.nrows == 0:
            return z.copy()
        d = la.ldp(-self.A, self.A @ z - self.b)
        if d is None:
            raise EmptySet("polyhedron is empty")
        return z + d

    def dist(self, z) -> float:
        z = _vec(z, self.dim)
        return float(np.linalg.norm(self.project(z) - z))

    @cached_property
    def vrep(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(points, rays, lines)."""
        if self.nrows == 0:
            n = self.dim
            return np.zeros((1, n)), np.zeros((0, n)), np.eye(n)
        return la.poly_hrep_to_vrep(self.A, self.b)

    def is_bounded(self) -> bool:
        P, R, L = self.vrep
        return R.shape[0] == 0 and L.shape[0] == 0

    def vertices(self) -> np.ndarray:
        """Vertices of a nonempty polytope, sorted lexicographically."""
        P, R, L = self.vrep
        if P.shape[0] == 0:
            raise EmptySet("polyhedron is empty")
        if R.shape[0] or L.shape[0]:
            raise GeometryError("polyhedron is unbounded")
        order = np.lexsort(P.T[::-1])
        return P[order]

    def intersect(self, other: "PolyhedralSet") -> "PolyhedralSet":
        return PolyhedralSet(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def product(self, other: "PolyhedralSet") -> "PolyhedralSet":
        A = np.block([
            [self.A, np.zeros((self.nrows, other.dim))],
            [np.zeros((other.nrows, self.dim)), other.A],
        ])
        return PolyhedralSet(A, np.concatenate([self.b, other.b]))

    def translate(self, t) -> "PolyhedralSet":
        t = _vec(t, self.dim)
        return PolyhedralSet(self.A, self.b + self.A @ t)

    def scale(self, s: float) -> "PolyhedralSet":
        if s <= 0:
            raise ValueError("scale must be positive")
        return PolyhedralSet(self.A, self.b * s)

    def slice(self, fixed_index: Sequence[int], values) -> "PolyhedralSet":
        """Restrict the coordinates `fixed_index` to `values`; returns a set in the rest."""
        fixed_index = list(fixed_index)
        values = _vec(values, len(fixed_index))
        free = [i for i in range(self.dim) if i not in fixed_index]
        return PolyhedralSet(self.A[:, free], self.b - self.A[:, fixed_index] @ values)


def minkowski_sum(sets: Sequence[PolyhedralSet], weights: Sequence[float] | None = None) -> PolyhedralSet:
    """Weighted Minkowski sum of polyhedra, via vertex/ray sums."""
    if weights is None:
        weights = [1.0] * len(sets)
    n = sets[0].dim
    pts = np.zeros((1, n))
    rays, lines = [], []
    for S, w in zip(sets, weights):
        P, R, L = S.vrep
        if P.shape[0] == 0:
            raise EmptySet("summand is empty")
        pts = (pts[:, None, :] + w * P[None, :, :]).reshape(-1, n)
        pts = la.unique_rows(pts, 1e-12)
        rays += list(R)
        lines += list(L)
    R = np.array(rays) if rays else np.zeros((0, n))
    L = np.array(lines) if lines else np.zeros((0, n))
    if not rays and not lines and pts.shape[0] == 1:
        return PolyhedralSet.point(pts[0])
    return PolyhedralSet.from_vrep(pts, R, L)


# ---------------------------------------------------------------------------
# cones


class PolyhedralCone:
    """Closed convex polyhedral cone in R^d.

    Built from generators (rays and lines) or from inequalities {v : B v <= 0};
    the other representation is derived on demand and cached.
    """

    def __init__(self, dim: int, rays=None, lines=None, rows=None):
        self.dim = int(dim)
        self._rays = None if rays is None else np.asarray(rays, float).reshape(-1, self.dim)
        self._lines = None if lines is None else np.asarray(lines, float).reshape(-1, self.dim)
        self._rows = None if rows is None else np.asarray(rows, float).reshape(-1, self.dim)
        if self._rows is None and self._rays is None:
            self._rays = np.zeros((0, self.dim))
        if self._rays is not None and self._lines is None:
            self._lines = np.zeros((0, self.dim))

    @classmethod
    def from_generators(cls, rays, lines=None, dim: int | None = None) -> "PolyhedralCone":
        rays = np.asarray(rays, float)
        if dim is None:
            dim = rays.shape[-1]
        return cls(dim, rays=rays.reshape(-1, dim), lines=None if lines is None else lines)

    @classmethod
    def from_inequalities(cls, rows, dim: int | None = None) -> "PolyhedralCone":
        rows = np.asarray(rows, float)
        if dim is None:
            dim = rows.shape[-1]
        return cls(dim, rows=rows.reshape(-1, dim))

    @classmethod
    def zero(cls, d: int) -> "PolyhedralCone":
        return cls(d, rays=np.zeros((0, d)))

    @classmethod
    def full(cls, d: int) -> "PolyhedralCone":
        return cls(d, rows=np.zeros((0, d)))

    @property
    def rows(self) -> np.ndarray:
        if self._rows is None:
            self._rows = la.cone_vrep_to_hrep(self._lines, self._rays, self.dim)
        return self._rows

    def _gens(self):
        if self._rays is None or self._lines is None:
            self._lines, self._rays = la.cone_hrep_to_vrep(self._rows, self.dim)
        return self._rays, self._lines

    @property
    def rays(self) -> np.ndarray:
        return self._gens()[0]

    @property
    def lines(self) -> np.ndarray:
        return self._gens()[1]

    def generators(self) -> np.ndarray:
        """Rays followed by both orientations of each lineality direction."""
        R, L = self._gens()
        return np.vstack([R, L, -L])

    def contains(self, v, tol: float = ZERO_TOL) -> bool:
        v = _vec(v, self.dim)
        if self._rows is not None:
            B = la.normalize_rows(self._rows)
            return B.shape[0] == 0 or float(np.max(B @ v)) <= tol * max(1.0, np.linalg.norm(v))
        G = self.generators()
        if G.shape[0] == 0:
            return float(np.max(np.abs(v))) <= tol
        # LP: v = G^T a, a >= 0 (lines are split into two rays)
        k = G.shape[0]
        r = la.solve_lp(
            np.r_[np.zeros(k), 1.0],
            A_ub=np.block([[G.T, -np.ones((self.dim, 1))], [-G.T, -np.ones((self.dim, 1))]]),
            b_ub=np.r_[v, -v],
            bounds=[(0, None)] * k + [(0, None)],
        )
        return r.ok and r.value <= tol * max(1.0, np.linalg.norm(v))

    def is_subset(self, other: "PolyhedralCone", tol: float = ZERO_TOL) -> bool:
        return all(other.contains(g, tol) for g in self.generators())

    def equals(self, other: "PolyhedralCone", tol: float = ZERO_TOL) -> bool:
        return self.is_subset(other, tol) and other.is_subset(self, tol)

    def is_zero(self) -> bool:
        return self.generators().shape[0] == 0

    def intersect(self, other: "PolyhedralCone") -> "PolyhedralCone":
        return PolyhedralCone.from_inequalities(np.vstack([self.rows, other.rows]), self.dim)

    def as_lifted(self) -> "LiftedPolyhedron":
        if self._rows is not None and (self._rays is None):
            return LiftedPolyhedron.from_hrep(self._rows, np.zeros(self._rows.shape[0]))
        G = self.generators()
        k = G.shape[0]
        return LiftedPolyhedron(G.T.reshape(self.dim, k), np.zeros(self.dim), -np.eye(k), np.zeros(k))

    def __repr__(self) -> str:
        if self._rays is not None:
            return f"PolyhedralCone(dim={self.dim}, rays={self._rays.tolist()}, lines={self._lines.tolist()})"
        return f"PolyhedralCone(dim={self.dim}, rows={self._rows.tolist()})"


def polar(K: PolyhedralCone) -> PolyhedralCone:
    """K° = {v : <v, k> <= 0 for all k in K}."""
    if K._rays is not None and K._lines is not None:
        return PolyhedralCone.from_inequalities(K.generators(), K.dim)
    return PolyhedralCone.from_generators(K.rows, dim=K.dim)


def normal_cone(C: PolyhedralSet, z) -> PolyhedralCone:
    """N(z; C) as the conic hull of the active constraint rows."""
    z = _vec(z, C.dim)
    if C.is_empty():
        raise EmptySet("C is infeasible")
    if C.dist(z) > TAU_MEM:
        raise PointNotInSet(f"dist(z, C) = {C.dist(z):.3e} exceeds tolerance")
    act = C.active_rows(z)
    return PolyhedralCone.from_generators(C.A[act], dim=C.dim)


def tangent_cone(C: PolyhedralSet, z) -> PolyhedralCone:
    z = _vec(z, C.dim)
    if C.dist(z) > TAU_MEM:
        raise PointNotInSet("z not in C")
    return PolyhedralCone.from_inequalities(C.A[C.active_rows(z)], C.dim)


# ---------------------------------------------------------------------------
# faces


@dataclass(frozen=True)
class Face:
    """Face {v in K : B_i v = 0 for i in active} of an inequality-form cone."""

    cone: PolyhedralCone = field(compare=False)
    active: frozenset
    dim: int


def _implicit_equalities(B: np.ndarray, E: frozenset) -> frozenset:
    """Rows of {v : B v <= 0, B_E v = 0} that vanish on the whole cone."""
    m, d = B.shape
    free = [i for i in range(m) if i not in E]
    if not free:
        return frozenset(range(m))
    Bi = B[free]
    Be = B[sorted(E)] if E else np.zeros((0, d))
    k = len(free)
    r = la.solve_lp(
        np.r_[np.zeros(d), -np.ones(k)],
        A_ub=np.hstack([Bi, np.eye(k)]),
        b_ub=np.zeros(k),
        A_eq=np.hstack([Be, np.zeros((Be.shape[0], k))]) if Be.shape[0] else None,
        b_eq=np.zeros(Be.shape[0]) if Be.shape[0] else None,
        bounds=[(None, None)] * d + [(0.0, 1.0)] * k,
    )
    s = r.x[d:]
    return frozenset(E) | frozenset(free[j] for j in range(k) if s[j] < 0.5)


def _face_data(K: PolyhedralCone, cap: int = FACE_DIM_CAP) -> tuple[np.ndarray, list[Face]]:
    d = K.dim
    if d > cap:
        raise DimensionCapExceeded(f"dimension {d} exceeds face-enumeration cap {cap}")
    B = la.normalize_rows(K.rows)
    B = la.unique_rows(B)
    m = B.shape[0]
    start = _implicit_equalities(B, frozenset())
    seen = {start}
    queue = [start]
    while queue:
        E = queue.pop()
        for i in range(m):
            if i in E:
                continue
            E2 = _implicit_equalities(B, E | {i})
            if E2 not in seen:
                seen.add(E2)
                queue.append(E2)
    out = []
    for E in seen:
        rows_eq = B[sorted(E)].reshape(-1, d)
        rows = np.vstack([B, -rows_eq])
        out.append(Face(PolyhedralCone.from_inequalities(rows, d), frozenset(E), d - la.rank(rows_eq)))
    out.sort(key=lambda f: (f.dim, sorted(f.active)))
    return B, out


def faces(K: PolyhedralCone, cap: int = FACE_DIM_CAP) -> list[Face]:
    """All faces of K, ordered by dimension then by active set."""
    return _face_data(K, cap)[1]


# ---------------------------------------------------------------------------
# lifted polyhedra and coderivative containers


def _mat(M, r, c):
    M = np.asarray(M, float)
    if M.size == 0:
        return np.zeros((r, c))
    return M.reshape(r, c)


@dataclass(frozen=True, eq=False)
class LiftedPolyhedron:
    """{c + M w : G w <= h, E w = f} with w in R^p."""

    M: np.ndarray
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray | None = None
    f: np.ndarray | None = None

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, float))
        c = np.atleast_1d(np.asarray(self.c, float)).ravel()
        k = c.size
        M = M.reshape(k, -1) if M.size else np.zeros((k, 0 if M.ndim < 2 else M.shape[1]))
        p = M.shape[1]
        h = np.atleast_1d(np.asarray(self.h, float)).ravel()
        G = _mat(self.G, h.size, p)
        f = np.zeros(0) if self.f is None else np.atleast_1d(np.asarray(self.f, float)).ravel()
        E = _mat(np.zeros((0, p)) if self.E is None else self.E, f.size, p)
        for name, val in (("M", M), ("c", c), ("G", G), ("h", h), ("E", E), ("f", f)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def nvar(self) -> int:
        return self.M.shape[1]

    # constructors
    @classmethod
    def point(cls, v) -> "LiftedPolyhedron":
        v = _vec(v)
        return cls(np.zeros((v.size, 0)), v, np.zeros((0, 0)), np.zeros(0))

    @classmethod
    def from_hrep(cls, A, b, A_eq=None, b_eq=None) -> "LiftedPolyhedron":
        A = np.atleast_2d(np.asarray(A, float))
        n = A.shape[1]
        return cls(np.eye(n), np.zeros(n), A, b,
                   None if A_eq is None else A_eq, None if b_eq is None else b_eq)

    @classmethod
    def from_polyhedron(cls, P: PolyhedralSet) -> "LiftedPolyhedron":
        return cls(np.eye(P.dim), np.zeros(P.dim), P.A, P.b)

    @classmethod
    def full(cls, n: int) -> "LiftedPolyhedron":
        return cls(np.eye(n), np.zeros(n), np.zeros((0, n)), np.zeros(0))

    # algebra
    def image(self, L, shift=None) -> "LiftedPolyhedron":
        L = np.atleast_2d(np.asarray(L, float)).reshape(-1, self.dim)
        s = np.zeros(L.shape[0]) if shift is None else _vec(shift, L.shape[0])
        return LiftedPolyhedron(L @ self.M, L @ self.c + s, self.G, self.h, self.E, self.f)

    def scaled(self, s: float) -> "LiftedPolyhedron":
        return LiftedPolyhedron(s * self.M, s * self.c, self.G, self.h, self.E, self.f)

    def translate(self, t) -> "LiftedPolyhedron":
        return LiftedPolyhedron(self.M, self.c + _vec(t, self.dim), self.G, self.h, self.E, self.f)

    def __add__(self, other: "LiftedPolyhedron") -> "LiftedPolyhedron":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in Minkowski sum")
        return LiftedPolyhedron(
            np.hstack([self.M, other.M]),
            self.c + other.c,
            np.block([[self.G, np.zeros((self.G.shape[0], other.nvar))],
                         [np.zeros((other.G.shape[0], self.nvar)), other.G]]),
            np.concatenate([self.h, other.h]),
            np.block([[self.E, np.zeros((self.E.shape[0], other.nvar))],
                      [np.zeros((other.E.shape[0], self.nvar)), other.E]]),
            np.concatenate([self.f, other.f]),
        )

    def stack(self, other: "LiftedPolyhedron") -> "LiftedPolyhedron":
        """Cartesian product (outputs concatenated)."""
        p, q = self.nvar, other.nvar
        M = np.block([[self.M, np.zeros((self.dim, q))], [np.zeros((other.dim, p)), other.M]])
        return LiftedPolyhedron(
            M, np.concatenate([self.c, other.c]),
            np.block([[self.G, np.zeros((self.G.shape[0], q))], [np.zeros((other.G.shape[0], p)), other.G]]),
            np.concatenate([self.h, other.h]),
            np.block([[self.E, np.zeros((self.E.shape[0], q))], [np.zeros((other.E.shape[0], p)), other.E]]),
            np.concatenate([self.f, other.f]),
        )

    def constrain(self, A=None, b=None, A_eq=None, b_eq=None) -> "LiftedPolyhedron":
        """Intersect with {v : A v <= b, A_eq v = b_eq} in the output space."""
        G, h, E, f = self.G, self.h, self.E, self.f
        if A is not None and np.size(A):
            A = np.atleast_2d(np.asarray(A, float)).reshape(-1, self.dim)
            G = np.vstack([G, A @ self.M])
            h = np.concatenate([h, np.atleast_1d(b) - A @ self.c])
        if A_eq is not None and np.size(A_eq):
            A_eq = np.atleast_2d(np.asarray(A_eq, float)).reshape(-1, self.dim)
            E = np.vstack([E, A_eq @ self.M])
            f = np.concatenate([f, np.atleast_1d(b_eq) - A_eq @ self.c])
        return LiftedPolyhedron(self.M, self.c, G, h, E, f)

    def intersect(self, other: "LiftedPolyhedron") -> "LiftedPolyhedron":
        S = self.stack(other)
        k = self.dim
        sel = np.hstack([np.eye(k), -np.eye(k)])
        S = S.constrain(A_eq=sel, b_eq=np.zeros(k))
        return S.image(np.hstack([np.eye(k), np.zeros((k, k))]))

    # LP queries
    def _lp(self, c_w, extra_ub=None, extra_ub_b=None, extra_eq=None, extra_eq_b=None, nextra=0,
            extra_bounds=None):
        p = self.nvar
        c = np.r_[c_w, np.zeros(nextra)] if nextra and np.size(c_w) == p else c_w
        A_ub = np.hstack([self.G, np.zeros((self.G.shape[0], nextra))])
        b_ub = self.h
        A_eq = np.hstack([self.E, np.zeros((self.E.shape[0], nextra))])
        b_eq = self.f
        if extra_ub is not None:
            A_ub = np.vstack([A_ub, extra_ub])
            b_ub = np.concatenate([b_ub, extra_ub_b])
        if extra_eq is not None:
            A_eq = np.vstack([A_eq, extra_eq])
            b_eq = np.concatenate([b_eq, extra_eq_b])
        bounds = [(None, None)] * p + (extra_bounds or [])
        return la.solve_lp(c, A_ub, b_ub, A_eq, b_eq, bounds)

    def is_empty(self) -> bool:
        return self._lp(np.zeros(self.nvar)).status not in ("optimal", "unbounded")

    def feasible_point(self) -> np.ndarray | None:
        r = self._lp(np.zeros(self.nvar))
        if r.x is None:
            return None
        return self.M @ r.x + self.c

    def support(self, d) -> tuple[float, np.ndarray | None]:
        """sup <d, v> over the set; returns (value, maximizer or None)."""
        d = _vec(d, self.dim)
        r = self._lp(-(d @ self.M))
        if r.status == "infeasible":
            return -math.inf, None
        if r.status == "unbounded":
            return math.inf, None
        v = self.M @ r.x + self.c
        return float(d @ v), v

    def dist_inf(self, v) -> tuple[float, np.ndarray | None]:
        """min ||u - v||_inf over u in the set, with the minimizer."""
        v = _vec(v, self.dim)
        k, p = self.dim, self.nvar
        if k == 0:
            return (0.0, np.zeros(0)) if not self.is_empty() else (math.inf, None)
        ub = np.vstack([np.hstack([self.M, -np.ones((k, 1))]), np.hstack([-self.M, -np.ones((k, 1))])])
        ubb = np.concatenate([v - self.c, self.c - v])
        r = self._lp(np.r_[np.zeros(p), 1.0], ub, ubb, nextra=1, extra_bounds=[(0, None)])
        if not r.ok:
            return math.inf, None
        u = self.M @ r.x[:p] + self.c
        return float(np.max(np.abs(u - v))), u

    def contains(self, v, tol: float = ZERO_TOL) -> bool:
        return self.dist_inf(v)[0] <= tol

    def max_abs(self, coords: Sequence[int] | None = None) -> tuple[float, np.ndarray | None]:
        """sup of |v_j| over selected coordinates (inf when unbounded)."""
        coords = range(self.dim) if coords is None else coords
        best, arg = -math.inf, None
        for j in coords:
            for s in (1.0, -1.0):
                e = np.zeros(self.dim)
                e[j] = s
                val, v = self.support(e)
                if val > best + 1e-12:
                    best, arg = val, v
                if val == math.inf:
                    return math.inf, None
        return best, arg

    def support_points(self, box: float = 1.0) -> np.ndarray:
        """Support points of (set ∩ box) in the ± coordinate and diagonal directions."""
        k = self.dim
        S = self.constrain(np.vstack([np.eye(k), -np.eye(k)]), np.full(2 * k, box))
        dirs = [np.eye(k)[j] * s for j in range(k) for s in (1, -1)]
        if 1 < k <= 6:
            dirs += [np.array(s, float) for s in itertools.product((1, -1), repeat=k)]
        pts = []
        for d in dirs:
            val, v = S.support(d)
            if v is not None:
                pts.append(v)
        if not pts:
            return np.zeros((0, k))
        P = la.unique_rows(np.round(np.array(pts), 12), 1e-9)
        return P[np.lexsort(P.T[::-1])]

    def recession(self) -> "LiftedPolyhedron":
        return LiftedPolyhedron(self.M, np.zeros(self.dim), self.G, np.zeros_like(self.h),
                                self.E, np.zeros_like(self.f))

    def generators(self):
        """(points, rays, lines) of the image, or None when enumeration is too large."""
        p = self.nvar
        if p == 0:
            return self.c[None, :].copy(), np.zeros((0, self.dim)), np.zeros((0, self.dim))
        A = np.vstack([self.G, self.E, -self.E])
        b = np.concatenate([self.h, self.f, -self.f])
        if A.shape[0] == 0:
            P, R, L = np.zeros((1, p)), np.zeros((0, p)), np.eye(p)
        else:
            try:
                P, R, L = la.poly_hrep_to_vrep(A, b)
            except la.CombinatorialBlowup:
                return None
        img = lambda X: (self.M @ X.T).T
        Pi = la.unique_rows(img(P) + self.c, 1e-10)
        Ri = np.array([r / np.linalg.norm(r) for r in img(R) if np.linalg.norm(r) > 1e-12]).reshape(-1, self.dim)
        Li = np.array([l / np.linalg.norm(l) for l in img(L) if np.linalg.norm(l) > 1e-12]).reshape(-1, self.dim)
        return Pi, Ri, Li

    def key(self) -> bytes:
        return b"|".join(np.round(a, 12).tobytes() + str(a.shape).encode()
                         for a in (self.M, self.c, self.G, self.h, self.E, self.f))


@dataclass(frozen=True, eq=False)
class CoderivativeSet:
    """Finite union of polyhedra in a dual space, with an exactness tag."""

    members: tuple
    dim: int
    exact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))

    @classmethod
    def empty(cls, dim: int, exact: bool = True) -> "CoderivativeSet":
        return cls((), dim, exact)

    @classmethod
    def single(cls, v, exact: bool = True) -> "CoderivativeSet":
        v = _vec(v)
        return cls((LiftedPolyhedron.point(v),), v.size, exact)

    @property
    def is_empty(self) -> bool:
        return all(m.is_empty() for m in self.members)

    def contains(self, v, tol: float = ZERO_TOL) -> bool:
        return any(m.contains(v, tol) for m in self.members)

    def dist_inf(self, v) -> float:
        if not self.members:
            return math.inf
        return min(m.dist_inf(v)[0] for m in self.members)

    def contains_zero(self, tol: float = ZERO_TOL) -> bool:
        return self.contains(np.zeros(self.dim), tol)

    def __add__(self, other: "CoderivativeSet") -> "CoderivativeSet":
        mem = [a + b for a in self.members for b in other.members]
        return CoderivativeSet(tuple(mem), self.dim, self.exact and other.exact).pruned()

    def scaled(self, s: float) -> "CoderivativeSet":
        return CoderivativeSet(tuple(m.scaled(s) for m in self.members), self.dim, self.exact)

    def image(self, L) -> "CoderivativeSet":
        L = np.atleast_2d(np.asarray(L, float))
        return CoderivativeSet(tuple(m.image(L) for m in self.members), L.shape[0], self.exact)

    def union(self, other: "CoderivativeSet") -> "CoderivativeSet":
        return CoderivativeSet(self.members + other.members, self.dim, self.exact and other.exact).pruned()

    def with_exact(self, exact: bool) -> "CoderivativeSet":
        return CoderivativeSet(self.members, self.dim, exact)

    def pruned(self) -> "CoderivativeSet":
        """Drop empty and duplicate members and members contained in another one."""
        keep, keys = [], set()
        for m in self.members:
            k = m.key()
            if k in keys or m.is_empty():
                continue
            keys.add(k)
            keep.append(m)
        gens = [m.generators() for m in keep]
        out = []
        for i, m in enumerate(keep):
            inside = False
            for j, o in enumerate(keep):
                if i == j or gens[i] is None:
                    continue
                if _generators_in(gens[i], o):
                    if j > i and gens[j] is not None and _generators_in(gens[j], m):
                        continue  # equal sets: keep the first
                    inside = True
                    break
            if not inside:
                out.append(m)
        return CoderivativeSet(tuple(out), self.dim, self.exact)

    def support_points(self, box: float = 1.0) -> list[np.ndarray]:
        return [m.support_points(box) for m in self.members]


def _generators_in(gens, o: "LiftedPolyhedron", tol: float = 1e-9) -> bool:
    points, rays, lines = gens
    if any(not o.contains(p, tol) for p in points):
        return False
    rec = o.recession()
    return all(rec.contains(r, tol) for r in np.vstack([rays, lines, -lines]))


@dataclass(frozen=True, eq=False)
class HomogeneousMapValue:
    """Positively homogeneous map y* -> finite union of polyhedra.

    Stored through its graph: each piece is a polyhedral cone in (y*, x*) space.
    `linear` optionally records that piece i is the full graph of x* = L_i y*,
    which lets the outer norm be computed exactly in the Euclidean norm.
    """

    in_dim: int
    out_dim: int
    pieces: tuple
    exact: bool = True
    linear: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for p in self.pieces:
            if p.dim != self.in_dim + self.out_dim:
                raise ValueError("graph piece has the wrong dimension")

    @classmethod
    def linear_map(cls, L, exact: bool = True) -> "HomogeneousMapValue":
        L = np.atleast_2d(np.asarray(L, float))
        n, m = L.shape
        piece = LiftedPolyhedron(np.vstack([np.eye(m), L]), np.zeros(m + n), np.zeros((0, m)), np.zeros(0))
        return cls(m, n, (piece,), exact, (L,))

    @classmethod
    def zero_map(cls, m: int, n: int) -> "HomogeneousMapValue":
        return cls.linear_map(np.zeros((n, m)))

    @classmethod
    def from_graph_cones(cls, cones: Iterable[PolyhedralCone], m: int, n: int, exact: bool = True):
        """Pieces from cones in (y*, x*) space."""
        return cls(m, n, tuple(K.as_lifted() for K in cones), exact)

    def __call__(self, ystar) -> CoderivativeSet:
        ystar = _vec(ystar, self.in_dim)
        m, n = self.in_dim, self.out_dim
        sel_y = np.hstack([np.eye(m), np.zeros((m, n))])
        sel_x = np.hstack([np.zeros((n, m)), np.eye(n)])
        mem = tuple(p.constrain(A_eq=sel_y, b_eq=ystar).image(sel_x) for p in self.pieces)
        return CoderivativeSet(mem, n, self.exact).pruned()

    def plus(self, other: "HomogeneousMapValue") -> "HomogeneousMapValue":
        """Pointwise Minkowski sum y* -> H1(y*) + H2(y*)."""
        if other.in_dim != self.in_dim or other.out_dim != self.out_dim:
            raise ValueError("dimension mismatch")
        m, n = self.in_dim, self.out_dim
        pieces = []
        for a in self.pieces:
            for b in other.pieces:
                S = a.stack(b)  # (y1, x1, y2, x2)
                eq = np.hstack([np.eye(m), np.zeros((m, n)), -np.eye(m), np.zeros((m, n))])
                S = S.constrain(A_eq=eq, b_eq=np.zeros(m))
                out = np.block([[np.eye(m), np.zeros((m, n)), np.zeros((m, m)), np.zeros((m, n))],
                                [np.zeros((n, m)), np.eye(n), np.zeros((n, m)), np.eye(n)]])
                pieces.append(S.image(out))
        lin = None
        if self.linear is not None and other.linear is not None:
            lin = tuple(A + B for A in self.linear for B in other.linear)
        return HomogeneousMapValue(m, n, tuple(pieces), self.exact and other.exact, lin)

    def scaled(self, w: float) -> "HomogeneousMapValue":
        if w < 0:
            raise ValueError("weights must be nonnegative")
        m, n = self.in_dim, self.out_dim
        T = np.block([[np.eye(m), np.zeros((m, n))], [np.zeros((n, m)), w * np.eye(n)]])
        lin = None if self.linear is None else tuple(w * L for L in self.linear)
        return HomogeneousMapValue(m, n, tuple(p.image(T) for p in self.pieces), self.exact, lin)

    def output_map(self, L) -> "HomogeneousMapValue":
        """y* -> L H(y*)."""
        L = np.atleast_2d(np.asarray(L, float))
        m, n = self.in_dim, self.out_dim
        k = L.shape[0]
        T = np.block([[np.eye(m), np.zeros((m, n))], [np.zeros((k, m)), L]])
        lin = None if self.linear is None else tuple(L @ A for A in self.linear)
        return HomogeneousMapValue(m, k, tuple(p.image(T) for p in self.pieces), self.exact, lin)

    def input_map(self, P) -> "HomogeneousMapValue":
        """u* -> H(P u*), P of shape (in_dim, k)."""
        P = np.atleast_2d(np.asarray(P, float))
        m, n = self.in_dim, self.out_dim
        k = P.shape[1]
        pieces = []
        for p in self.pieces:
            # variables of the new graph: (u*, piece)
            S = LiftedPolyhedron.full(k).stack(p)  # (u, y, x)
            eq = np.hstack([P, -np.eye(m), np.zeros((m, n))])
            S = S.constrain(A_eq=eq, b_eq=np.zeros(m))
            out = np.block([[np.eye(k), np.zeros((k, m)), np.zeros((k, n))],
                            [np.zeros((n, k)), np.zeros((n, m)), np.eye(n)]])
            pieces.append(S.image(out))
        lin = None if self.linear is None else tuple(A @ P for A in self.linear)
        return HomogeneousMapValue(k, n, tuple(pieces), self.exact, lin)

    def union(self, other: "HomogeneousMapValue") -> "HomogeneousMapValue":
        lin = None
        if self.linear is not None and other.linear is not None:
            lin = self.linear + other.linear
        return HomogeneousMapValue(self.in_dim, self.out_dim, self.pieces + other.pieces,
                                   self.exact and other.exact, lin)

    def with_exact(self, exact: bool) -> "HomogeneousMapValue":
        return HomogeneousMapValue(self.in_dim, self.out_dim, self.pieces, exact, self.linear)


# ---------------------------------------------------------------------------
# outer norm


@dataclass(frozen=True)
class NormBound:
    """sup{||x*|| : x* in H(y*), ||y*|| <= 1} with the norm actually used."""

    value: float
    norm: str  # "l2" (exact Euclidean) or "linf" (l-infinity on both sides)
    interval: tuple  # Euclidean value lies in this interval
    argmax: tuple | None = None


def outer_norm_details(H: HomogeneousMapValue) -> NormBound:
    m, n = H.in_dim, H.out_dim
    if H.linear is not None:
        vals = [float(np.linalg.norm(L, 2)) if L.size else 0.0 for L in H.linear]
        v = max(vals) if vals else 0.0
        return NormBound(v, "l2", (v, v))
    best, arg = 0.0, None
    box_rows = np.hstack([np.vstack([np.eye(m), -np.eye(m)]), np.zeros((2 * m, n))])
    for p in H.pieces:
        S = p.constrain(box_rows, np.ones(2 * m))
        for j in range(n):
            for s in (1.0, -1.0):
                d = np.zeros(m + n)
                d[m + j] = s
                val, v = S.support(d)
                if val == math.inf:
                    return NormBound(math.inf, "linf", (math.inf, math.inf))
                if val > best + 1e-12:
                    best, arg = val, tuple(np.round(v, 15))
    k = math.sqrt(max(m, n, 1))
    return NormBound(best, "linf", (best / k, best * k), arg)


def zero_input_witness(H: HomogeneousMapValue, tol: float = ZERO_TOL) -> np.ndarray | None:
    """A nonzero x* in H(0) (largest l-infinity entry, first found), or None when H(0) ⊆ {0}."""
    m, n = H.in_dim, H.out_dim
    sel_y = np.hstack([np.eye(m), np.zeros((m, n))])
    box = np.hstack([np.zeros((2 * n, m)), np.vstack([np.eye(n), -np.eye(n)])])
    best, arg = tol, None
    for p in H.pieces:
        S = p.constrain(box, np.ones(2 * n), sel_y, np.zeros(m))
        for j in range(n):
            for s in (1.0, -1.0):
                d = np.zeros(m + n)
                d[m + j] = s
                val, v = S.support(d)
                if v is not None and val > best + 1e-12:
                    best, arg = val, v[m:]
    return None if arg is None else np.where(np.abs(arg) < 1e-12, 0.0, arg)


def outer_norm(H: HomogeneousMapValue) -> float:
    """Outer norm of a positively homogeneous polyhedral map (may be +inf)."""
    return outer_norm_details(H).value


# ---------------------------------------------------------------------------
# distances


def dist(z, C: PolyhedralSet) -> float:
    if C.is_empty():
        raise EmptySet("C is empty")
    return C.dist(z)


def set_excess(S1: PolyhedralSet, S2: PolyhedralSet) -> float:
    """e(S1, S2) = sup_{s in S1} dist(s, S2), attained at a vertex of S1."""
    if S1.is_empty() or S2.is_empty():
        raise EmptySet("excess needs nonempty sets")
    return max(S2.dist(v) for v in S1.vertices())


# ---------------------------------------------------------------------------
# normal cones to finite unions of polyhedra


def _hyperplane_key(r: np.ndarray) -> tuple[np.ndarray, float]:
    nz = np.flatnonzero(np.abs(r) > 1e-12)
    s = 1.0 if r[nz[0]] > 0 else -1.0
    return s * r, s


def _enumerate_cells(H: np.ndarray) -> list[np.ndarray]:
    """Sign vectors of the nonempty cells of a central hyperplane arrangement."""
    k, d = H.shape
    out: list[np.ndarray] = []

    def feasible(signs):
        A_ub, b_ub, A_eq = [], [], []
        for j, s in enumerate(signs):
            if s == 0:
                A_eq.append(H[j])
            else:
                A_ub.append(s * H[j])
                b_ub.append(-1.0)
        r = la.solve_lp(np.zeros(d), np.array(A_ub).reshape(-1, d), np.array(b_ub),
                        np.array(A_eq).reshape(-1, d), np.zeros(len(A_eq)))
        return r.ok

    def rec(signs):
        if len(signs) == k:
            out.append(np.array(signs, dtype=int))
            return
        for s in (0, -1, 1):
            cand = signs + [s]
            if feasible(cand):
                rec(cand)

    rec([])
    return out


def normal_cone_union(pieces: Sequence[PolyhedralSet], p) -> list[PolyhedralCone]:
    """Limiting normal cone to a finite union of convex polyhedra at p.

    Near p the union coincides with the union of tangent cones T_i. The regular
    normal cone at q is the intersection of N(q; T_i) over the pieces containing
    q, and it only depends on the cell of the arrangement of all active
    hyperplanes containing q; the limiting cone is the union over cells.
    """
    p = _vec(p)
    d = p.size
    act_pieces = [P for P in pieces if P.contains(p, 1e-8)]
    if not act_pieces:
        raise PointNotInSet("point lies in no piece")
    rows_per_piece = []
    hyper: list[np.ndarray] = []
    for P in act_pieces:
        idx = P.active_rows(p)
        R = la.normalize_rows(P.A[idx]) if idx.size else np.zeros((0, d))
        entries = []
        for r in R:
            hr, s = _hyperplane_key(r)
            j = next((t for t, q in enumerate(hyper) if np.max(np.abs(q - hr)) <= 1e-9), None)
            if j is None:
                hyper.append(hr)
                j = len(hyper) - 1
            entries.append((j, s, r))
        rows_per_piece.append(entries)
    if hyper:
        Hm = np.array(hyper)
        cells = _enumerate_cells(Hm)
    else:
        cells = [np.zeros(0, dtype=int)]
    cache: dict = {}
    cones: list[PolyhedralCone] = []
    for sig in cells:
        parts = []
        for i, entries in enumerate(rows_per_piece):
            inside = all(s * sig[j] <= 0 for j, s, _ in entries)
            if not inside:
                continue
            zero = tuple(t for t, (j, s, _) in enumerate(entries) if sig[j] == 0)
            key = (i, zero)
            if key not in cache:
                gens = np.array([entries[t][2] for t in zero]).reshape(-1, d)
                cache[key] = PolyhedralCone.from_generators(gens, dim=d).rows
            parts.append(cache[key])
        if not parts:
            continue
        K = PolyhedralCone.from_inequalities(np.vstack(parts), d)
        cones.append(K)
    return prune_cones(cones)


def prune_cones(cones: Sequence[PolyhedralCone]) -> list[PolyhedralCone]:
    """Remove cones contained in another one (keeps the first of equal cones)."""
    keep = []
    for i, K in enumerate(cones):
        dominated = False
        for j, L in enumerate(cones):
            if i == j:
                continue
            if K.is_subset(L):
                if L.is_subset(K) and j > i:
                    continue
                dominated = True
                break
        if not dominated:
            keep.append(K)
    return keep


# ---------------------------------------------------------------------------
# coderivative of the normal-cone map via face pairs


@dataclass(frozen=True)
class FacePair:
    """F2 ⊆ F1 faces of the critical cone, with F1 - F2 = {d : B_eq d = 0, B_in d <= 0}."""

    F1: Face
    F2: Face
    B_eq: np.ndarray = field(compare=False, repr=False)
    B_in: np.ndarray = field(compare=False, repr=False)

    def contains_difference(self, d, tol: float = ZERO_TOL) -> bool:
        d = np.asarray(d, float)
        scale = max(1.0, float(np.linalg.norm(d)))
        if self.B_eq.shape[0] and np.max(np.abs(self.B_eq @ d)) > tol * scale:
            return False
        if self.B_in.shape[0] and np.max(self.B_in @ d) > tol * scale:
            return False
        return True

    def polar_lifted(self) -> LiftedPolyhedron:
        """(F1 - F2)° = B_eq^T mu + B_in^T lam, lam >= 0."""
        d = self.B_eq.shape[1] if self.B_eq.size else self.B_in.shape[1]
        ke, ki = self.B_eq.shape[0], self.B_in.shape[0]
        M = np.hstack([self.B_eq.T.reshape(d, ke), self.B_in.T.reshape(d, ki)])
        G = np.hstack([np.zeros((ki, ke)), -np.eye(ki)])
        return LiftedPolyhedron(M, np.zeros(d), G, np.zeros(ki))

    def graph_piece(self) -> LiftedPolyhedron:
        """{(u, w) : -u in F1 - F2, w in (F1 - F2)°} over variables (u, mu, lam)."""
        d = self.B_eq.shape[1] if self.B_eq.size else self.B_in.shape[1]
        ke, ki = self.B_eq.shape[0], self.B_in.shape[0]
        p = d + ke + ki
        M = np.block([[np.eye(d), np.zeros((d, ke + ki))],
                      [np.zeros((d, d)), self.B_eq.T.reshape(d, ke), self.B_in.T.reshape(d, ki)]])
        # -u in {B_in d <= 0} reads -B_in u <= 0
        G = np.vstack([np.hstack([-self.B_in.reshape(ki, d), np.zeros((ki, ke + ki))]),
                       np.hstack([np.zeros((ki, d + ke)), -np.eye(ki)])])
        E = np.hstack([self.B_eq.reshape(ke, d), np.zeros((ke, ke + ki))])
        return LiftedPolyhedron(M, np.zeros(2 * d), G, np.zeros(2 * ki), E, np.zeros(ke))


def critical_cone(C: PolyhedralSet, z, v) -> PolyhedralCone:
    """T_C(z) ∩ v⊥ in inequality form."""
    z = _vec(z, C.dim)
    v = _vec(v, C.dim)
    rows = C.A[C.active_rows(z)]
    if np.linalg.norm(v) > 1e-14:
        rows = np.vstack([rows, -v[None, :]])
    return PolyhedralCone.from_inequalities(rows.reshape(-1, C.dim), C.dim)


def _check_normal_pair(C: PolyhedralSet, z, v):
    if C.is_empty():
        raise EmptySet("C is infeasible")
    if C.dist(z) > TAU_MEM:
        raise PointNotInSet("z not in C")
    if not normal_cone(C, z).contains(v, ZERO_TOL):
        raise NotANormalPair("v is not a normal to C at z")


def face_pairs(C: PolyhedralSet, z, v, cap: int = FACE_DIM_CAP) -> list[FacePair]:
    z = _vec(z, C.dim)
    v = _vec(v, C.dim)
    _check_normal_pair(C, z, v)
    B, fl = _face_data(critical_cone(C, z, v), cap)
    out = []
    for F1 in fl:
        for F2 in fl:
            if not F2.active >= F1.active:
                continue
            E1 = sorted(F1.active)
            E21 = sorted(F2.active - F1.active)
            out.append(FacePair(F1, F2, B[E1].reshape(-1, C.dim), B[E21].reshape(-1, C.dim)))
    return out


def coderivative_normal_cone_map(C: PolyhedralSet, z, v, u) -> CoderivativeSet:
    """D*N(·;C)(z, v)(u) as a union of polars (F1 - F2)° over face pairs with -u ∈ F1 - F2."""
    u = _vec(u, C.dim)
    members = []
    for fp in face_pairs(C, z, v):
        if fp.contains_difference(-u):
            members.append(fp.polar_lifted())
    return CoderivativeSet(tuple(members), C.dim, True).pruned()


def normal_cone_map_graph(C: PolyhedralSet, z, v) -> HomogeneousMapValue:
    """u -> D*N(·;C)(z, v)(u) with its graph pieces."""
    pieces = [fp.graph_piece() for fp in face_pairs(C, z, v)]
    return HomogeneousMapValue(C.dim, C.dim, tuple(pieces), True)


def normal_map_graph_pieces(C: PolyhedralSet) -> list[PolyhedralSet]:
    """gph N(·;C) as a union of convex polyhedra F × N_F over the faces of C."""
    n = C.dim
    m = C.nrows
    pieces = []
    seen = set()
    for k in range(0, min(m, n) + 1 if m else 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            A_eq = C.A[S]
            face = PolyhedralSet.from_constraints(C.A, C.b, A_eq, C.b[S], n=n) if S else C
            if face.is_empty():
                continue
            # keep each face once, keyed by its full active set
            pt = _relative_interior_point(face)
            act = tuple(C.active_rows(pt))
            if act in seen:
                continue
            seen.add(act)
            gens = C.A[list(act)].reshape(-1, n)
            Nrows = PolyhedralCone.from_generators(gens, dim=n).rows
            Fset = PolyhedralSet.from_constraints(C.A, C.b, C.A[list(act)], C.b[list(act)], n=n) if act else C
            A = np.block([[Fset.A, np.zeros((Fset.nrows, n))],
                          [np.zeros((Nrows.shape[0], n)), Nrows]])
            b = np.concatenate([Fset.b, np.zeros(Nrows.shape[0])])
            pieces.append(PolyhedralSet(A, b))
    return pieces


def _relative_interior_point(P: PolyhedralSet) -> np.ndarray:
    """A point where exactly the implicit equalities of P are tight.

    Homogenized slack LP: max sum(s), A x - b t + s <= 0, t >= 1, 0 <= s <= 1.
    Scaling (x, t) lets every non-implicit row reach s = 1.
    """
    n, m = P.dim, P.nrows
    if m == 0:
        return np.zeros(n)
    r = la.solve_lp(
        np.r_[np.zeros(n + 1), -np.ones(m)],
        A_ub=np.hstack([P.A, -P.b[:, None], np.eye(m)]),
        b_ub=np.zeros(m),
        bounds=[(None, None)] * n + [(1.0, None)] + [(0.0, 1.0)] * m,
    )
    if not r.ok:
        raise EmptySet("empty face")
    return r.x[:n] / r.x[n]
