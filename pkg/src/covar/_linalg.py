"""Low-level numerics shared by the polyhedral layer.

LPs go through HiGHS (scipy.optimize.linprog); least-distance problems use the
Lawson-Hanson reduction to NNLS. Double-description conversions are done by
active-set enumeration, which is fine at the dimensions this package targets.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

RANK_TOL = 1e-10
RAY_TOL = 1e-9
MAX_SUBSETS = 250_000


class CombinatorialBlowup(RuntimeError):
    """Raised when an enumeration would exceed MAX_SUBSETS candidates."""


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "error"
    x: np.ndarray | None
    value: float

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _as2d(M, ncols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    M = np.asarray(M, dtype=float)
    if M.ndim == 2 and M.shape[1] == ncols:
        return M
    if M.size == 0:
        return np.zeros((0, ncols))
    return M.reshape(-1, ncols)


def _as1d(v, n: int) -> np.ndarray:
    if v is None:
        return np.zeros(n)
    return np.asarray(v, dtype=float).reshape(n)


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None) -> LPResult:
    """Minimize c @ x; variables are free unless `bounds` says otherwise."""
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A_ub = _as2d(A_ub, n)
    b_ub = _as1d(b_ub, A_ub.shape[0])
    A_eq = _as2d(A_eq, n)
    b_eq = _as1d(b_eq, A_eq.shape[0])
    if n == 0:
        feas = np.all(b_ub >= -1e-9) and np.all(np.abs(b_eq) <= 1e-9)
        return LPResult("optimal" if feas else "infeasible", np.zeros(0), 0.0)
    if bounds is None:
        bounds = [(None, None)] * n
    res = linprog(
        c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 0:
        return LPResult("optimal", np.asarray(res.x, dtype=float), float(res.fun))
    if res.status == 2:
        return LPResult("infeasible", None, math.inf)
    if res.status == 3:
        # HiGHS may report "unbounded" for infeasible-or-unbounded; confirm feasibility
        feas = linprog(
            np.zeros(n),
            A_ub=A_ub if A_ub.shape[0] else None,
            b_ub=b_ub if A_ub.shape[0] else None,
            A_eq=A_eq if A_eq.shape[0] else None,
            b_eq=b_eq if A_eq.shape[0] else None,
            bounds=bounds,
            method="highs",
        )
        if feas.status == 0:
            return LPResult("unbounded", np.asarray(feas.x, dtype=float), -math.inf)
        return LPResult("infeasible", None, math.inf)
    return LPResult("error", None, math.nan)


def ldp(G: np.ndarray, h: np.ndarray) -> np.ndarray | None:
    """Least-distance program: min ||x|| subject to G x >= h.

    Returns None when infeasible.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float).ravel()
    m, n = G.shape
    if m == 0:
        return np.zeros(n)
    norms = np.linalg.norm(G, axis=1)
    zero = norms <= 1e-14
    if np.any(h[zero] > 1e-12):
        return None
    G = G[~zero] / norms[~zero, None]
    h = h[~zero] / norms[~zero]
    if G.shape[0] == 0:
        return np.zeros(n)
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[n] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (G.shape[0] + n + 1))
    r = E @ u - f
    if np.linalg.norm(r) <= 1e-12 or r[n] > -1e-14:
        return None
    x = -r[:n] / r[n]
    return x


def null_space(M: np.ndarray, ncols: int | None = None, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of ker M."""
    M = np.asarray(M, dtype=float)
    if ncols is None:
        ncols = M.shape[1]
    M = M.reshape(-1, ncols)
    if M.shape[0] == 0:
        return np.eye(ncols)
    _, s, vt = np.linalg.svd(M)
    scale = max(1.0, s[0]) if s.size else 1.0
    rank = int(np.sum(s > tol * scale))
    return vt[rank:].T.copy()


def rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def normalize_rows(B: np.ndarray) -> np.ndarray:
    """Scale rows to unit length and drop zero rows."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] == 0:
        return B
    n = np.linalg.norm(B, axis=1)
    keep = n > 1e-14
    return B[keep] / n[keep, None]


def unique_rows(B: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop (near) duplicate rows, keeping first occurrences in order."""
    out: list[np.ndarray] = []
    for r in B:
        if not any(np.max(np.abs(r - q)) <= tol for q in out):
            out.append(r)
    if not out:
        return np.zeros((0, B.shape[1]))
    return np.array(out)


def cone_hrep_to_vrep(B: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Generators of {x : B x <= 0}: (lineality basis rows, extreme ray rows)."""
    B = unique_rows(normalize_rows(np.asarray(B, dtype=float).reshape(-1, d)))
    L = null_space(B, d)  # d x l
    Q = null_space(L.T, d) if L.shape[1] else np.eye(d)
    dp = Q.shape[1]
    if dp == 0:
        return L.T.copy(), np.zeros((0, d))
    C = B @ Q
    C = unique_rows(normalize_rows(C)) if C.shape[0] else C
    rays: list[np.ndarray] = []
    if dp == 1:
        for s in (np.ones(1), -np.ones(1)):
            if C.shape[0] == 0 or np.max(C @ s) <= RAY_TOL:
                rays.append(s)
    else:
        m = C.shape[0]
        if math.comb(m, dp - 1) > MAX_SUBSETS:
            raise CombinatorialBlowup(f"{math.comb(m, dp - 1)} active-set candidates")
        for S in itertools.combinations(range(m), dp - 1):
            N = null_space(C[list(S)], dp)
            if N.shape[1] != 1:
                continue
            r = N[:, 0]
            for s in (r, -r):
                if np.max(C @ s) <= RAY_TOL:
                    if not any(np.max(np.abs(s - q)) <= 1e-7 for q in rays):
                        rays.append(s)
                    break
    R = (Q @ np.array(rays).T).T if rays else np.zeros((0, d))
    if R.shape[0]:
        R = R / np.linalg.norm(R, axis=1)[:, None]
    return L.T.copy(), R


def cone_vrep_to_hrep(lines: np.ndarray, rays: np.ndarray, d: int) -> np.ndarray:
    """Rows B with cone(rays) + span(lines) = {x : B x <= 0}."""
    lines = np.asarray(lines, dtype=float).reshape(-1, d)
    rays = np.asarray(rays, dtype=float).reshape(-1, d)
    polar_rows = np.vstack([rays, lines, -lines])
    pl, pr = cone_hrep_to_vrep(polar_rows, d)
    rows = np.vstack([pr, pl, -pl])
    return rows


def poly_hrep_to_vrep(A: np.ndarray, b: np.ndarray):
    """(points, rays, lines) for {x : A x <= b}; points empty iff the set is empty."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[1]
    Bh = np.vstack([np.hstack([A, -b[:, None]]), np.hstack([np.zeros((1, n)), -np.ones((1, 1))])])
    L, R = cone_hrep_to_vrep(Bh, n + 1)
    pts, rec = [], []
    for r in R:
        if r[n] > 1e-9:
            pts.append(r[:n] / r[n])
        else:
            v = r[:n]
            nv = np.linalg.norm(v)
            if nv > 1e-12:
                rec.append(v / nv)
    lines = []
    for l in L:
        v = l[:n]
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            lines.append(v / nv)
    P = np.array(pts) if pts else np.zeros((0, n))
    Rr = np.array(rec) if rec else np.zeros((0, n))
    Ll = np.array(lines) if lines else np.zeros((0, n))
    if Ll.shape[0] and P.shape[0]:
        # points are only defined modulo the lineality space; project them onto its complement
        Qn = null_space(Ll, n)
        P = (Qn @ (Qn.T @ P.T)).T if Qn.shape[1] else np.zeros_like(P)
        P = unique_rows(P, 1e-9)
    return P, Rr, Ll


def poly_vrep_to_hrep(points: np.ndarray, rays: np.ndarray, lines: np.ndarray, n: int):
    """(A, b) with conv(points) + cone(rays) + span(lines) = {x : A x <= b}."""
    points = np.asarray(points, dtype=float).reshape(-1, n)
    rays = np.asarray(rays, dtype=float).reshape(-1, n)
    lines = np.asarray(lines, dtype=float).reshape(-1, n)
    gens = np.vstack([
        np.hstack([points, np.ones((points.shape[0], 1))]),
        np.hstack([rays, np.zeros((rays.shape[0], 1))]),
    ])
    lin = np.hstack([lines, np.zeros((lines.shape[0], 1))])
    rows = cone_vrep_to_hrep(lin, gens, n + 1)
    A, b = [], []
    for r in rows:
        a = r[:n]
        if np.linalg.norm(a) <= 1e-12:
            continue
        A.append(a)
        b.append(-r[n])
    if not A:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(A), np.array(b)
