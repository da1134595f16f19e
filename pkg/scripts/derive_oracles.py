"""Brute-force reference values for the test suite.

Every value here comes from direct sampling of a definition (inner products
over grids, exhaustive vertex sums, dense grid search). Nothing imports the
package under test. Run once and commit the output:

    python3 scripts/derive_oracles.py > tests/data/derived.json
"""
from __future__ import annotations

import itertools
import json
import math

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull

TOL = 1e-12


def circle(k: int = 7200) -> np.ndarray:
    t = np.arange(k) * (2 * math.pi / k)
    return np.column_stack([np.cos(t), np.sin(t)])


def arc_extremes(mask: np.ndarray, dirs: np.ndarray) -> list:
    """Endpoints of the single contiguous arc of directions selected by mask."""
    k = len(mask)
    start = next(i for i in range(k) if mask[i] and not mask[i - 1])
    end = start
    while mask[(end + 1) % k]:
        end = (end + 1) % k
    return sorted([np.round(dirs[start], 6).tolist(), np.round(dirs[end], 6).tolist()])


def normal_cone_triangle() -> dict:
    # C = {z1 + z2 <= 1, z >= 0} at (1, 0); v is normal iff <v, c - z> <= 0 for all c in C
    g = np.linspace(0, 1, 201)
    pts = np.array([(a, b) for a in g for b in g if a + b <= 1 + 1e-12])
    D = circle()
    mask = np.max(D @ (pts - [1.0, 0.0]).T, axis=1) <= TOL
    return {"generators": arc_extremes(mask, D)}


def polar_example() -> dict:
    gens = np.array([[1.0, 1.0], [1.0, 0.0]])
    D = circle()
    mask = np.max(D @ gens.T, axis=1) <= TOL
    return {"generators": arc_extremes(mask, D)}


def face_count_reduced_generators() -> int:
    # exposed faces of K = cone{(1,0),(1,1),(0,1)}: zero sets of functionals c with <c, g> <= 0 on K
    gens = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    sets = set()
    for c in itertools.product(range(-5, 6), repeat=2):
        vals = gens @ np.array(c, float)
        if np.all(vals <= 0):
            sets.add(tuple(np.flatnonzero(np.abs(vals) <= TOL)))
    return len(sets)


def _graph_nc_minus(h: float, L: float) -> np.ndarray:
    s = np.arange(0, L + h / 2, h)
    return np.unique(np.round(np.vstack([np.column_stack([-s, 0 * s]), np.column_stack([0 * s, s])]), 12), axis=0)


def coderivative_nc_minus() -> dict:
    """D*N(.;R_-)(0,0)(u) on the box [-2, 2], from regular normals to the sampled graph near the origin."""
    h, L = 0.005, 0.5
    G = _graph_nc_minus(h, L)
    D = circle(720)
    r, rt = 30 * h, 1.5 * h  # base points within r/3, regular-normal test over neighbours within rt
    normals = np.zeros(len(D), bool)
    for p in G[np.linalg.norm(G, axis=1) <= r / 3]:
        Q = G - p
        nq = np.linalg.norm(Q, axis=1)
        near = (nq > 0) & (nq <= rt)
        Q = Q[near] / nq[near][:, None]
        normals |= np.max(D @ Q.T, axis=1) <= 0.02
    out = {}
    xs = np.linspace(-2, 2, 81)
    for u in (-1.0, 0.0, 1.0):
        keep = []
        for x in xs:
            w = np.array([x, -u])
            if np.linalg.norm(w) == 0:
                keep.append(x)
                continue
            w = w / np.linalg.norm(w)
            if np.max(D[normals] @ w) >= math.cos(math.radians(1.0)):
                keep.append(x)
        out[str(u)] = [min(keep), max(keep)]
    return out


def outer_norm_diag23() -> float:
    A = np.diag([2.0, 3.0])
    return float(np.max(np.linalg.norm(circle(3600) @ A, axis=1)))


def limiting_subgradients_neg_abs() -> list:
    # regular subgradients of -|x| at sample points x != 0 near 0 (at 0 the regular set is empty)
    xs = np.concatenate([-np.logspace(-6, -1, 20), np.logspace(-6, -1, 20)])
    h = 1e-9
    grads = {round((-abs(x + h) + abs(x - h)) / (2 * h), 6) for x in xs}
    return sorted(grads)


def partial_max_affine() -> dict:
    # g(x, z) = max(z - x, 0); full subdifferential at (0, 0) by the subgradient inequality on a grid
    f = lambda w: max(w[1] - w[0], 0.0)
    W = np.array(list(itertools.product(np.linspace(-1, 1, 41), repeat=2)))
    fw = np.array([f(w) for w in W])
    gs = np.array(list(itertools.product(np.linspace(-2, 2, 81), repeat=2)))
    ok = np.all(fw[None, :] >= (gs @ W.T) - 1e-12, axis=1)
    sub = gs[ok]
    ends = sub[[np.argmin(sub[:, 1]), np.argmax(sub[:, 1])]]  # the set is a segment
    return {"full_vertices": sorted(np.round(ends, 6).tolist()),
            "projection_z": [float(sub[:, 1].min()), float(sub[:, 1].max())]}


def minkowski_three_boxes() -> dict:
    boxes = [([0, 0], [1, 2]), ([-1, 0], [0, 1]), ([0, -1], [2, 0])]
    w = [0.5, 0.25, 0.25]
    verts = [np.array(list(itertools.product(*zip(lo, hi))), float) for lo, hi in boxes]
    sums = np.array([sum(wi * v for wi, v in zip(w, combo)) for combo in itertools.product(*verts)])
    hull = ConvexHull(sums)
    return {"vertices": sorted(np.round(sums[hull.vertices], 9).tolist())}


def selection_vertex_count() -> int:
    # y1 in [0,1]^2, y2 in [0,2]x[0,1], (y1 + y2)/2 = centroid (0.75, 0.5); y1 ranges over B1 ∩ (2y - B2)
    y = np.array([0.75, 0.5])
    g = np.linspace(0, 1, 401)
    pts = []
    for a in g:
        for b in g:
            y2 = 2 * y - [a, b]
            if 0 - 1e-12 <= y2[0] <= 2 + 1e-12 and -1e-12 <= y2[1] <= 1 + 1e-12:
                pts.append((a, b))
    pts = np.array(pts)
    return len(ConvexHull(pts).vertices)


def affine_kappa() -> float:
    A, b = np.diag([2.0, 1.0]), np.array([1.0, 0.0])
    X = np.vstack([circle(3600), np.zeros((1, 2))])
    return float(np.max(np.linalg.norm(X @ A.T + b, axis=1)))


def box_local_lipschitz() -> float:
    # F(x) = [c(x) - r(x), c(x) + r(x)], c = 2x, r = 0.5x + 1; Hausdorff ratio over pairs in [-0.1, 0.1]
    xs = np.linspace(-0.1, 0.1, 41)
    best = 0.0
    for u, v in itertools.combinations(xs, 2):
        I = lambda x: np.array([2 * x - (0.5 * x + 1), 2 * x + (0.5 * x + 1)])
        a, b = I(u), I(v)
        best = max(best, np.max(np.abs(a - b)) / abs(u - v))
    return round(float(best), 9)


def semilinear_coderivative() -> dict:
    # F(x) = {z >= 0 : z1 + z2 <= x + 1} at (0, (0.5, 0.5)); normals to the sampled graph
    g = np.linspace(-0.2, 0.2, 9)
    base = np.array([0.0, 0.5, 0.5])
    pts = [base + d for d in itertools.product(g, repeat=3)]
    pts = np.array([p for p in pts if p[1] >= 0 and p[2] >= 0 and p[1] + p[2] <= p[0] + 1 + 1e-12])
    out = {}
    for zs in ((-1.0, -1.0), (1.0, 1.0), (0.0, 0.0), (-1.0, 0.0)):
        members = []
        for xs in np.linspace(-3, 3, 61):
            w = np.array([xs, -zs[0], -zs[1]])
            if np.max((pts - base) @ w) <= 1e-12:
                members.append(round(float(xs), 9))
        out[f"{zs[0]},{zs[1]}"] = members
    return out


def vi_solution_reg() -> dict:
    # S(x) = {z : 0 ∈ x + z + N(z; R_-)} = {-x} for x > 0 and {0} for x <= 0
    S = lambda x: -x if x > 0 else 0.0
    xs = np.linspace(-1.5, 1.5, 3001)
    res = {}
    for r in (0.5, 0.25, 0.125):
        ratios = []
        for z in np.linspace(-r, r, 11):
            pre = xs[np.abs(np.array([S(x) for x in xs]) - z) <= 1e-12]
            for x in np.linspace(-r, r, 11):
                dz = abs(z - S(x))
                if dz == 0:
                    continue
                ratios.append(math.inf if pre.size == 0 else np.min(np.abs(pre - x)) / dz)
        res[str(r)] = max(ratios)
    return {"ratios": {k: ("inf" if math.isinf(v) else v) for k, v in res.items()}}


def mpec_optimum() -> dict:
    S = lambda x: max((x[0] + 0.5 * x[1]) / 1.5, 0.0)
    cost = lambda x: 0.5 * (x[0] ** 2 + x[1] ** 2 + S(x) ** 2) + S(x) + 0.5
    g = np.linspace(-1, 1, 201)
    best = min(((cost((a, b)), (a, b)) for a in g for b in g))
    ref = minimize(cost, np.array(best[1]), method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    x = np.round(ref.x, 6) + 0.0
    return {"x": x.tolist(), "z": round(S(x), 9), "value": round(float(ref.fun), 9)}


def pl_square_reg(h: float = 0.05) -> dict:
    # F = piecewise-linear interpolant of x^2 with knots at multiples of h; dist(x, F^-1(y)) / dist(y, F(x))
    knots = np.arange(-20, 21) * h
    F = lambda x: np.interp(x, knots, knots ** 2)
    xs = np.linspace(-1, 1, 4001)
    Fx = F(xs)
    out = {}
    for r in (0.4, 0.2, 0.1):
        best = 0.0
        for x in np.linspace(-r / 2, r / 2, 21):
            for y in np.linspace(-r / 2, r / 2, 21):
                dy = abs(y - F(x))
                if dy < 1e-12:
                    continue
                pre = xs[np.abs(Fx - y) <= 1e-3]
                best = max(best, math.inf if pre.size == 0 else np.min(np.abs(pre - x)) / dy)
        out[str(r)] = "inf" if math.isinf(best) else best
    return out


def main():
    data = {
        "normal_cone_triangle": normal_cone_triangle(),
        "polar_example": polar_example(),
        "face_count_reduced_generators": face_count_reduced_generators(),
        "coderivative_nc_minus": coderivative_nc_minus(),
        "outer_norm_diag23": outer_norm_diag23(),
        "limiting_subgradients_neg_abs": limiting_subgradients_neg_abs(),
        "partial_max_affine": partial_max_affine(),
        "minkowski_three_boxes": minkowski_three_boxes(),
        "selection_vertex_count": selection_vertex_count(),
        "affine_kappa": affine_kappa(),
        "box_local_lipschitz": box_local_lipschitz(),
        "semilinear_coderivative": semilinear_coderivative(),
        "vi_solution_reg": vi_solution_reg(),
        "mpec_optimum": mpec_optimum(),
        "pl_square_reg": pl_square_reg(),
    }
    print(json.dumps(data, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
