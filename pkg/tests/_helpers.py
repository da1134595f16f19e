"""Small set-comparison helpers shared by the tests."""
import numpy as np

from covar.geometry import CoderivativeSet, LiftedPolyhedron


def clip(P: LiftedPolyhedron, box: float) -> LiftedPolyhedron:
    k = P.dim
    return P.constrain(np.vstack([np.eye(k), -np.eye(k)]), np.full(2 * k, box))


def interval(S: CoderivativeSet, box: float = 2.0):
    """(lo, hi) of the 1-D set S ∩ [-box, box], or None when empty."""
    lo, hi = np.inf, -np.inf
    for m in S.members:
        c = clip(m, box)
        if c.is_empty():
            continue
        hi = max(hi, c.support(np.ones(1))[0])
        lo = min(lo, -c.support(-np.ones(1))[0])
    return None if lo == np.inf else (lo, hi)


def is_point_set(S: CoderivativeSet, v, tol: float = 1e-9) -> bool:
    """S == {v} (checked on the unit box around v)."""
    v = np.asarray(v, float)
    if not S.contains(v, tol):
        return False
    for m in S.members:
        c = clip(m.translate(-v), 1.0)
        if c.is_empty():
            continue
        for j in range(S.dim):
            for s in (1.0, -1.0):
                d = np.zeros(S.dim)
                d[j] = s
                if c.support(d)[0] > tol:
                    return False
    return True


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def same_rays(R1, R2, tol: float = 1e-6) -> bool:
    A = sorted(map(tuple, np.round([unit(r) for r in R1], 6)))
    B = sorted(map(tuple, np.round([unit(r) for r in R2], 6)))
    return len(A) == len(B) and all(np.allclose(a, b, atol=tol) for a, b in zip(A, B))
