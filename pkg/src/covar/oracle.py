"""Brute-force reference computations on small grids.

Everything here works from definitions: ratios over sampled point pairs,
regular-normal tests over sampled neighbours, enumeration of discretized
selections. Results are deterministic for a fixed GridSpec.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PolyhedralCone, PolyhedralSet, _vec
from .multifunction import AffineMap, DomainError, Node, SetValue
from .stochastic import RandomIntegrand, ScenarioModel

GRID_BUDGET = 1_000_000
LIMSUP_TOL = 0.02
DIVERGENCE_FACTOR = 10.0


class GridBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Lattice of `resolution` points per axis on the cube of half-width `radius`.

    `step` is the offset used for local point pairs (defaults to the lattice
    spacing); `jitter` moves interior lattice points by a seeded fraction of
    the spacing.
    """

    center: tuple
    radius: float
    resolution: int = 11
    seed: int = 0
    step: float | None = None
    jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if self.resolution < 3:
            raise ValueError("resolution must be at least 3")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.resolution - 1)

    @property
    def pair_step(self) -> float:
        return self.spacing if self.step is None else float(self.step)

    def shrink(self, factor: float) -> "GridSpec":
        step = None if self.step is None else self.step * factor
        return replace(self, radius=self.radius * factor, step=step)

    def at(self, center) -> "GridSpec":
        return replace(self, center=tuple(_vec(center)))

    def lattice(self, ball: bool = True) -> np.ndarray:
        n = self.dim
        if self.resolution ** n > GRID_BUDGET:
            raise GridBudgetExceeded(f"{self.resolution}^{n} grid points exceed the budget of {GRID_BUDGET}")
        c = np.array(self.center)
        axes = [np.linspace(ci - self.radius, ci + self.radius, self.resolution) for ci in c]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n) if n else np.zeros((1, 0))
        if self.jitter:
            rng = np.random.default_rng(self.seed)
            J = rng.uniform(-0.5, 0.5, G.shape) * self.jitter * self.spacing
            J[np.all(np.abs(G - c) < 1e-15, axis=1)] = 0.0
            G = G + J
        if ball:
            G = G[np.linalg.norm(G - c, axis=1) <= self.radius * (1 + 1e-12)]
        return G


@dataclass
class EmpiricalEstimate:
    value: float
    trend: tuple
    diverging: bool
    radii: tuple = ()

    def to_dict(self) -> dict:
        return {"value": self.value, "trend": list(self.trend), "diverging": self.diverging,
                "radii": list(self.radii)}


def _trend(values: Sequence[float], radii: Sequence[float]) -> EmpiricalEstimate:
    vals = tuple(float(v) for v in values)
    div = any(math.isinf(v) for v in vals) or (vals[-1] > DIVERGENCE_FACTOR * vals[0] + 1e-12)
    return EmpiricalEstimate(vals[-1], vals, bool(div), tuple(float(r) for r in radii))


# ---------------------------------------------------------------------------
# sampling of multifunctions


def _safe_eval(F: Node, u) -> SetValue | None:
    try:
        return F.evaluate(u)
    except DomainError:
        return None


def _point_values(F: Node, pts: np.ndarray) -> np.ndarray | None:
    """Values as an (N, m) array with NaN rows for empty values, or None if some value is not a point."""
    m = F.out_dim
    if isinstance(F, AffineMap):
        return np.asarray(pts, float) @ F.A.T + F.b
    if getattr(F, "single_valued", False) and hasattr(F, "value"):
        try:
            return np.array([F.value(u) for u in pts], float).reshape(len(pts), m)
        except DomainError:
            pass
    out = np.full((len(pts), m), np.nan)
    for i, u in enumerate(pts):
        val = _safe_eval(F, u)
        if val is None or val.is_empty:
            continue
        p = val.as_point()
        if p is None:
            return None
        out[i] = p
    return out


def _stencil(n: int, seed: int, extra: int = 16) -> np.ndarray:
    D = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        D.append(e)
    for i, j in itertools.combinations(range(n), 2):
        for s in (1.0, -1.0):
            e = np.zeros(n)
            e[i], e[j] = 1.0, s
            D.append(e / math.sqrt(2))
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(extra, n))
    D.extend(R / np.linalg.norm(R, axis=1, keepdims=True))
    D = np.array(D)
    D = np.vstack([D, -D]) if n > 1 else np.array([[1.0], [-1.0]])
    return D


def _pair_ratios(U: np.ndarray, Y: np.ndarray, rows: np.ndarray, chunk: int = 1024) -> float:
    """max |Y_i - Y_j| / |U_i - U_j| over i in rows, all j."""
    best = 0.0
    nu, ny = np.sum(U * U, axis=1), np.sum(Y * Y, axis=1)
    for s in range(0, len(rows), chunk):
        I = rows[s:s + chunk]
        dU = nu[I, None] + nu[None, :] - 2.0 * U[I] @ U.T
        dY = np.maximum(ny[I, None] + ny[None, :] - 2.0 * Y[I] @ Y.T, 0.0)
        ok = dU > 1e-10
        if np.any(ok):
            best = max(best, math.sqrt(float(np.max(dY[ok] / dU[ok]))))
    return best


def _ratio_matrix(U: np.ndarray, P: np.ndarray, Y: np.ndarray, V: np.ndarray, chunk: int = 1024) -> float:
    """max |U_i - P_k| / |Y_i - V_k| over pairs with Y_i != V_k."""
    best = 0.0
    nu, npp, ny, nv = (np.sum(M * M, axis=1) for M in (U, P, Y, V))
    for s in range(0, len(V), chunk):
        K = slice(s, s + chunk)
        num = np.maximum(nu[:, None] + npp[None, K] - 2.0 * U @ P[K].T, 0.0)
        den = np.maximum(ny[:, None] + nv[None, K] - 2.0 * Y @ V[K].T, 0.0)
        ok = den > 1e-12
        if np.any(ok):
            best = max(best, math.sqrt(float(np.max(num[ok] / den[ok]))))
    return best


def _sphere_search(ratio, d0: np.ndarray, steps=(0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)) -> float:
    """Coordinate pattern search for max ratio(d) over unit directions, started at d0."""
    d = d0 / np.linalg.norm(d0)
    best = ratio(d)
    n = len(d)
    for t in steps:
        improved = True
        while improved:
            improved = False
            for k in range(n):
                for s in (t, -t):
                    e = d.copy()
                    e[k] += s
                    e /= np.linalg.norm(e)
                    r = ratio(e)
                    if r > best:
                        best, d, improved = r, e, True
    return best


# ---------------------------------------------------------------------------
# moduli


def _lip_at(F: Node, u0: np.ndarray, y0: np.ndarray, g: GridSpec) -> float:
    U = g.at(u0).lattice()
    rho = g.radius
    Y = _point_values(F, U)
    if Y is not None:
        defined = ~np.isnan(Y[:, 0])
        inwin = defined & (np.max(np.abs(np.nan_to_num(Y) - y0), axis=1) <= rho + 1e-12)
        if np.any(inwin) and not np.all(defined):
            return math.inf  # F(u) ∩ V is nonempty while some nearby F(v) is empty
        rows = np.flatnonzero(inwin)
        best = _pair_ratios(U, Y, rows)
        h = g.pair_step
        D = _stencil(len(u0), g.seed)
        for s in range(0, len(rows), 256):
            I = rows[s:s + 256]
            V = (U[I, None, :] + h * D[None, :, :]).reshape(-1, len(u0))
            W = _point_values(F, V)
            if W is None:
                continue
            if np.any(np.isnan(W[:, 0])):
                return math.inf
            diff = np.repeat(Y[I], len(D), axis=0) - W
            best = max(best, float(np.max(np.linalg.norm(diff, axis=1)) / h))
        return best
    window = PolyhedralSet.box(y0 - rho, y0 + rho)
    vals = [_safe_eval(F, u) for u in U]
    h = g.spacing
    best = 0.0
    for i, j in itertools.permutations(range(len(U)), 2):
        duv = float(np.linalg.norm(U[i] - U[j]))
        if duv > 1.01 * h * math.sqrt(len(u0)) or vals[i] is None:
            continue
        other = vals[j] if vals[j] is not None else SetValue((), F.out_dim)
        ex = vals[i].excess(other, window)
        if ex is None:
            continue
        best = max(best, ex / duv)
        if math.isinf(best):
            return best
    return best


def empirical_lip(F: Node, p, g: GridSpec) -> EmpiricalEstimate:
    """max over sampled pairs of excess(F(u) ∩ V, F(v)) / |u - v|, V the window around ȳ."""
    u0, y0 = _vec(p[0], F.in_dim), _vec(p[1], F.out_dim)
    grids = [g, g.shrink(0.5), g.shrink(0.25)]
    return _trend([_lip_at(F, u0, y0, gg) for gg in grids], [gg.radius for gg in grids])


def _search_grid(g: GridSpec, u0: np.ndarray, search: float) -> GridSpec:
    """Same spacing as g on a cube `search` times larger."""
    k = max(1, int(round(search)))
    return GridSpec(tuple(u0), k * g.radius, k * (g.resolution - 1) + 1, g.seed)


def _reg_at(F: Node, u0: np.ndarray, y0: np.ndarray, g: GridSpec, search: float) -> float:
    rho = g.radius
    Ud = g.at(u0).lattice()  # points u near x̄
    Us = _search_grid(g, u0, search).lattice()  # preimage search region
    Ys = _point_values(F, Us)
    probes = GridSpec(tuple(y0), rho, g.resolution, g.seed).lattice()
    if Ys is None:
        return _reg_sets(F, Ud, Us, y0, rho, probes, g)
    Yd = _point_values(F, Ud)
    defined = ~np.isnan(Ys[:, 0])
    S, Ysd = Us[defined], Ys[defined]
    if not len(Ysd):
        return math.inf
    tree = cKDTree(Ysd)
    dd = ~np.isnan(Yd[:, 0])
    Udd, Ydd = Ud[dd], Yd[dd]
    best = 0.0
    # images inside the window have exact lattice preimages
    win = np.max(np.abs(Ydd - y0), axis=1) <= rho + 1e-12
    V = np.unique(np.round(Ydd[win], 12), axis=0)
    pres = tree.query_ball_point(V, 1e-9) if len(V) else []
    single = [p[0] for p in pres if len(p) == 1]
    if len(single) == len(V):
        best = _ratio_matrix(Udd, S[single], Ydd, V)
    else:
        for v, idx in zip(V, pres):
            pre = S[idx]
            den = np.linalg.norm(Ydd - v, axis=1)
            ok = den > 1e-12
            if np.any(ok):
                num = np.min(np.linalg.norm(Udd[ok, None, :] - pre[None, :, :], axis=2), axis=1)
                best = max(best, float(np.max(num / den[ok])))
    best = max(best, _reg_stencil(F, Udd, Ydd, y0, rho, g))
    # window probes with no preimage in the search region
    tol = 1.5 * max(_neighbour_variation(Ud, Yd, g.spacing), g.spacing)
    gaps, _ = tree.query(probes)
    for v in probes[gaps > tol]:
        if np.any(np.linalg.norm(Ydd - v, axis=1) > 1e-12):
            return math.inf
    return best


def _reg_stencil(F: Node, U: np.ndarray, Y: np.ndarray, y0: np.ndarray, rho: float, g: GridSpec) -> float:
    """h / |F(u) - F(u + h d)| over stencil directions, refined by a search on the sphere.
    The known preimage u + h d bounds dist(u; F⁻¹(v)) from above; it is exact when F is
    injective at scale h."""
    h = g.pair_step
    n = U.shape[1]
    if not len(U):
        return 0.0
    D = _stencil(n, g.seed)
    c = np.argmin(np.linalg.norm(U - np.mean(U, axis=0), axis=1))
    u, y = U[c], Y[c]

    def ratio(d):
        w = _point_values(F, (u + h * d)[None, :])
        if w is None or np.isnan(w[0, 0]) or np.max(np.abs(w[0] - y0)) > rho + 1e-12:
            return 0.0
        den = float(np.linalg.norm(w[0] - y))
        return math.inf if den <= 1e-14 else h / den

    W = _point_values(F, u + h * D)
    if W is None:
        return 0.0
    vals = [ratio(d) for d in D]
    k = int(np.argmax(vals))
    if math.isinf(vals[k]) or vals[k] == 0.0:
        return vals[k]
    return _sphere_search(ratio, D[k])


def _neighbour_variation(U: np.ndarray, Y: np.ndarray, h: float) -> float:
    """max |Y_i - Y_j| over lattice neighbours with both values defined."""
    ok = ~np.isnan(Y[:, 0])
    U, Y = U[ok], Y[ok]
    if len(U) < 2:
        return 0.0
    pairs = cKDTree(U).query_pairs(1.01 * h * math.sqrt(U.shape[1]), output_type="ndarray")
    if not len(pairs):
        return 0.0
    return float(np.max(np.linalg.norm(Y[pairs[:, 0]] - Y[pairs[:, 1]], axis=1)))


def _reg_sets(F: Node, Ud, Us, y0, rho, probes, g) -> float:
    vals_s = [_safe_eval(F, u) for u in Us]
    vals_d = [_safe_eval(F, u) for u in Ud]
    reps = []
    for val in vals_s:
        if val is not None and not val.is_empty:
            reps.append(val.project(y0))
    cands = [v for v in reps if np.max(np.abs(v - y0)) <= rho + 1e-12] + list(probes)
    tol = 1.5 * g.spacing
    best = 0.0
    for v in cands:
        ds = np.array([math.inf if val is None or val.is_empty else val.dist(v) for val in vals_s])
        pre = Us[ds <= 1e-9]
        if len(pre) == 0 and np.min(ds) <= tol:
            continue
        for u, val in zip(Ud, vals_d):
            den = math.inf if val is None or val.is_empty else val.dist(v)
            if den <= 1e-12:
                continue
            if len(pre) == 0:
                return math.inf
            if math.isfinite(den):
                best = max(best, float(np.min(np.linalg.norm(pre - u, axis=1))) / den)
    return best


def empirical_reg(F: Node, p, g: GridSpec, search: float = 3.0) -> EmpiricalEstimate:
    """max over sampled (u, v) of dist(u; F⁻¹(v)) / dist(v; F(u)); window probes with no
    preimage in the search region count as infinite ratios."""
    u0, y0 = _vec(p[0], F.in_dim), _vec(p[1], F.out_dim)
    grids = [g, g.shrink(0.5), g.shrink(0.25)]
    return _trend([_reg_at(F, u0, y0, gg, search) for gg in grids], [gg.radius for gg in grids])


# ---------------------------------------------------------------------------
# normal cones and coderivatives


def direction_set(n: int, count: int = 72, seed: int = 0) -> np.ndarray:
    """Unit directions: ±1 in 1-D, `count` equally spaced angles in 2-D,
    axis/diagonal directions plus seeded random ones beyond."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = 2 * math.pi * np.arange(count) / count
        D = np.stack([np.cos(t), np.sin(t)], axis=1)
        return np.where(np.abs(D) < 1e-15, 0.0, D)
    base = []
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=n):
        v = np.array(signs)
        if np.any(v):
            base.append(v / np.linalg.norm(v))
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(count, n))
    return np.vstack([np.array(base), R / np.linalg.norm(R, axis=1, keepdims=True)])


def _regular_normal_mask(points: np.ndarray, base: np.ndarray, cands: np.ndarray, radius: float) -> np.ndarray:
    """Candidates e passing <e, (u - b)/|u - b|> <= LIMSUP_TOL for all sampled u within radius of b."""
    d = np.linalg.norm(points - base, axis=1)
    nb = (d > 1e-12) & (d <= radius)
    if not np.any(nb):
        return np.ones(len(cands), bool)
    D = (points[nb] - base) / d[nb, None]
    return np.max(cands @ D.T, axis=1) <= LIMSUP_TOL


def _limiting_normals(points: np.ndarray, x: np.ndarray, cands: np.ndarray, g: GridSpec,
                      normal_radius: float = 1.5) -> np.ndarray:
    """Union over sampled base points within radius/3 of x of the candidates passing the regular
    test on the ball of `normal_radius` grid steps."""
    h = g.spacing
    near = np.linalg.norm(points - x, axis=1) <= g.radius / 3 + 1e-12
    test_r = normal_radius * h
    ok = np.zeros(len(cands), bool)
    for b in points[near]:
        ok |= _regular_normal_mask(points, b, cands, test_r)
        if ok.all():
            break
    return ok


@dataclass
class SampledCone:
    directions: np.ndarray  # unit rows passing the test
    tested: np.ndarray  # all tested unit rows

    def contains_direction(self, v, angle_tol: float = 0.06) -> bool:
        v = np.asarray(v, float)
        nv = np.linalg.norm(v)
        if nv == 0 or not len(self.directions):
            return nv == 0
        return bool(np.max(self.directions @ (v / nv)) >= math.cos(angle_tol))

    def disagreement(self, K: PolyhedralCone, tol: float = 1e-9) -> float:
        """Fraction of tested directions on which membership differs from the cone K."""
        sampled = {tuple(np.round(d, 12)) for d in self.directions}
        bad = 0
        for d in self.tested:
            if (tuple(np.round(d, 12)) in sampled) != K.contains(d, tol):
                bad += 1
        return bad / max(len(self.tested), 1)


def _as_member(C) -> Callable:
    if isinstance(C, PolyhedralSet):
        return lambda z: C.contains(z, 1e-9)
    if isinstance(C, (list, tuple)) and all(isinstance(P, PolyhedralSet) for P in C):
        return lambda z: any(P.contains(z, 1e-9) for P in C)
    return C


def empirical_normal_cone(C, x, g: GridSpec, directions: np.ndarray | None = None,
                          normal_radius: float = 1.5) -> SampledCone:
    """Sampled limiting normal cone of C at x (C is a membership callable, a PolyhedralSet or a union)."""
    x = _vec(x)
    member = _as_member(C)
    pts = g.at(x).lattice()
    pts = pts[np.array([member(z) for z in pts], bool)]
    D = direction_set(len(x), seed=g.seed) if directions is None else np.asarray(directions, float)
    ok = _limiting_normals(pts, x, D, g, normal_radius)
    return SampledCone(D[ok], D)


def _rim(mask: np.ndarray, shape: tuple) -> np.ndarray:
    """Lattice points outside the mask with a lattice neighbour inside it."""
    M = mask.reshape(shape)
    grown = M.copy()
    for ax in range(M.ndim):
        grown[tuple(slice(1, None) if a == ax else slice(None) for a in range(M.ndim))] |= \
            M[tuple(slice(None, -1) if a == ax else slice(None) for a in range(M.ndim))]
        grown[tuple(slice(None, -1) if a == ax else slice(None) for a in range(M.ndim))] |= \
            M[tuple(slice(1, None) if a == ax else slice(None) for a in range(M.ndim))]
    return (grown & ~M).ravel()


def sample_graph(F: Node, p, g: GridSpec) -> np.ndarray:
    """Graph points (u, y) with u on the domain lattice and y on the output lattice (same spacing),
    plus each value's projection of ȳ."""
    u0, y0 = _vec(p[0], F.in_dim), _vec(p[1], F.out_dim)
    U = g.at(u0).lattice(ball=False)
    Yl = replace(g, center=tuple(y0)).lattice(ball=False)
    shape = (g.resolution,) * F.out_dim
    n_total = len(U) * len(Yl)
    if n_total > GRID_BUDGET:
        raise GridBudgetExceeded(f"{n_total} graph samples exceed the budget of {GRID_BUDGET}")
    out = []
    for u in U:
        val = _safe_eval(F, u)
        if val is None or val.is_empty:
            continue
        pt = val.as_point() if val.is_bounded else None
        if pt is not None:
            out.append(np.concatenate([u, pt]))
            continue
        mask = np.zeros(len(Yl), bool)
        for P in val.parts:
            mask |= np.all(Yl @ P.A.T <= P.b + 1e-9, axis=1) if P.nrows else True
        for y in Yl[mask]:
            out.append(np.concatenate([u, y]))
        # exact boundary points next to the sampled part, so edges are not staircases
        for y in [y0, *Yl[_rim(mask, shape)]]:
            out.append(np.concatenate([u, val.project(y)]))
    G = np.array(out) if out else np.zeros((0, F.in_dim + F.out_dim))
    return np.unique(np.round(G, 12), axis=0)


def xstar_lattice(n: int, box: float, resolution: int) -> np.ndarray:
    axes = [np.linspace(-box, box, resolution)] * n
    return np.array(list(itertools.product(*axes)))


def empirical_coderivative(F: Node, p, ystar, g: GridSpec, box: float = 2.0, resolution: int = 9,
                           graph: np.ndarray | None = None, normal_radius: float = 1.5) -> np.ndarray:
    """x* on a lattice of [-box, box]^n with (x*, -y*) passing the limiting regular-normal test.
    Graph edges of slope s are sampled at gaps h·sqrt(1 + s²) along the input axes, so steep
    edges need normal_radius above that."""
    u0, y0 = _vec(p[0], F.in_dim), _vec(p[1], F.out_dim)
    ystar = _vec(ystar, F.out_dim)
    pts = sample_graph(F, p, g) if graph is None else graph
    X = xstar_lattice(F.in_dim, box, resolution)
    cands = np.hstack([X, np.tile(-ystar, (len(X), 1))])
    nrm = np.linalg.norm(cands, axis=1)
    keep = nrm > 1e-14
    E = np.zeros_like(cands)
    E[keep] = cands[keep] / nrm[keep, None]
    ok = _limiting_normals(pts, np.concatenate([u0, y0]), E, g, normal_radius)
    ok[~keep] = True  # 0 is always a normal
    return X[ok]


def hausdorff(A: np.ndarray, B: np.ndarray) -> float:
    """Hausdorff distance between finite point sets (inf when exactly one is empty)."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    if A.size == 0 and B.size == 0:
        return 0.0
    if A.size == 0 or B.size == 0:
        return math.inf
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return float(max(np.max(np.min(D, axis=1)), np.max(np.min(D, axis=0))))


def lattice_members(X: np.ndarray, member: Callable, tol: float = 1e-9) -> np.ndarray:
    return X[np.array([member(x) for x in X], bool)] if len(X) else X


# ---------------------------------------------------------------------------
# expected values by enumeration


def _discretize(val: SetValue, step: float) -> np.ndarray:
    pts = []
    for P in val.parts:
        if not P.is_bounded():
            raise ValueError("brute-force enumeration needs bounded values")
        V = P.vertices()
        pts.extend(V)
        lo, hi = V.min(axis=0), V.max(axis=0)
        counts = np.maximum(np.ceil((hi - lo) / step).astype(int) + 1, 1)
        if np.prod(counts) > GRID_BUDGET:
            raise GridBudgetExceeded("value discretization exceeds the budget")
        axes = [np.linspace(l, hh, c) for l, hh, c in zip(lo, hi, counts)]
        L = np.array(list(itertools.product(*axes)))
        pts.extend(L[np.all(L @ P.A.T <= P.b + 1e-9, axis=1)] if P.nrows else L)
    return np.unique(np.round(np.array(pts), 12), axis=0)


def brute_expected_map(Phi: RandomIntegrand, m: ScenarioModel, u, step: float = 0.05) -> np.ndarray:
    """All weighted sums Σ w_i y_i with y_i on a discretization of Φ_{t_i}(u) (at most 3 atoms)."""
    if len(m.atoms) > 3:
        raise ValueError("brute-force enumeration is limited to 3 atoms")
    u = _vec(u, Phi.in_dim)
    samples = [_discretize(nd.evaluate(u), step) for nd in Phi.of(m)]
    total = int(np.prod([len(s) for s in samples]))
    if total > GRID_BUDGET:
        raise GridBudgetExceeded(f"{total} selections exceed the budget of {GRID_BUDGET}")
    acc = np.zeros((1, Phi.out_dim))
    for w, S in zip(m.weights, samples):
        acc = (acc[:, None, :] + w * S[None, :, :]).reshape(-1, Phi.out_dim)
        acc = np.unique(np.round(acc, 12), axis=0)
    return acc
