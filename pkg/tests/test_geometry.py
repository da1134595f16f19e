import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covar.geometry import (
    DimensionCapExceeded,
    EmptySet,
    HomogeneousMapValue,
    NotANormalPair,
    PointNotInSet,
    PolyhedralCone,
    PolyhedralSet,
    coderivative_normal_cone_map,
    dist,
    faces,
    minkowski_sum,
    normal_cone,
    outer_norm,
    outer_norm_details,
    polar,
    set_excess,
    tangent_cone,
)

from _helpers import interval, is_point_set, same_rays, unit

TRIANGLE = PolyhedralSet(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 0.0, 0.0]))


# ---------------------------------------------------------------------------
# normal cones


def test_normal_cone_orthant_corner():
    K = normal_cone(PolyhedralSet.orthant(2, -1), [0, 0])
    assert same_rays(K.rays, np.eye(2))
    assert K.contains([1, 2]) and not K.contains([-1, 0])


def test_normal_cone_interior_is_zero():
    assert normal_cone(PolyhedralSet.orthant(2, -1), [-1, -1]).is_zero()


def test_normal_cone_triangle_vertex(derived):
    K = normal_cone(TRIANGLE, [1, 0])
    assert same_rays(K.rays, derived["normal_cone_triangle"]["generators"])
    assert K.lines.size == 0


def test_normal_cone_errors():
    with pytest.raises(PointNotInSet):
        normal_cone(PolyhedralSet.orthant(2, -1), [1, 0])
    with pytest.raises(EmptySet):
        normal_cone(PolyhedralSet(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])), [0])


def test_normal_cone_is_polar_of_tangent_cone():
    for z in ([1, 0], [0, 0], [0.5, 0.5], [0.2, 0.1]):
        assert normal_cone(TRIANGLE, z).equals(polar(tangent_cone(TRIANGLE, z)))


# ---------------------------------------------------------------------------
# polars and faces


def test_polar_of_orthant():
    P = polar(PolyhedralCone.from_generators(np.eye(2)))
    assert P.equals(PolyhedralCone.from_generators(-np.eye(2)))


def test_polar_of_zero_is_full():
    assert polar(PolyhedralCone.zero(3)).equals(PolyhedralCone.full(3))


def test_polar_example(derived):
    P = polar(PolyhedralCone.from_generators(np.array([[1.0, 1.0], [1.0, 0.0]])))
    assert same_rays(P.rays, derived["polar_example"]["generators"])


def test_faces_orthant():
    fl = faces(PolyhedralCone.from_generators(np.eye(2)))
    assert [f.dim for f in fl] == [0, 1, 1, 2]


def test_faces_zero_cone():
    assert len(faces(PolyhedralCone.zero(2))) == 1


def test_faces_reduced_generators(derived):
    K = PolyhedralCone.from_generators(np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    assert len(faces(K)) == derived["face_count_reduced_generators"]


def test_faces_dimension_cap():
    with pytest.raises(DimensionCapExceeded):
        faces(PolyhedralCone.from_generators(np.eye(9)))


def test_faces_of_cone_with_lines():
    K = PolyhedralCone.from_inequalities(np.array([[0.0, -1.0, 0.0]]), 3)  # halfspace y >= 0 with a line
    fl = faces(K)
    assert [f.dim for f in fl] == [2, 3]


# ---------------------------------------------------------------------------
# coderivatives of normal-cone maps


def test_coderivative_nc_minus(derived):
    C = PolyhedralSet.orthant(1, -1)
    for u, (lo, hi) in derived["coderivative_nc_minus"].items():
        S = coderivative_normal_cone_map(C, [0], [0], [float(u)])
        assert interval(S, 2.0) == pytest.approx((lo, hi), abs=1e-9)


def test_coderivative_nc_minus_smooth_point():
    C = PolyhedralSet.orthant(1, -1)
    for u in (-2.0, 0.0, 3.0):
        assert is_point_set(coderivative_normal_cone_map(C, [-1], [0], [u]), [0.0])


def test_coderivative_not_a_normal_pair():
    with pytest.raises(NotANormalPair):
        coderivative_normal_cone_map(PolyhedralSet.orthant(1, -1), [0], [-1], [0])


# ---------------------------------------------------------------------------
# outer norms


def test_outer_norm_diag(derived):
    H = HomogeneousMapValue.linear_map(np.diag([2.0, 3.0]))
    assert outer_norm(H) == pytest.approx(derived["outer_norm_diag23"], abs=1e-9)


def test_outer_norm_zero():
    assert outer_norm(HomogeneousMapValue.zero_map(2, 3)) == 0.0


def test_outer_norm_kernel_violation_is_infinite():
    # graph {(y*, x*) : y* = 0} has a nonzero ray at y* = 0
    H = HomogeneousMapValue.from_graph_cones([PolyhedralCone.from_inequalities(np.array([[1.0, 0.0], [-1.0, 0.0]]), 2)],
                                             1, 1, True)
    assert outer_norm(H) == math.inf


def test_outer_norm_polyhedral_graph_linf():
    # graph of the linear map 2y* written through cones: l-infinity value 2, interval brackets it
    H = HomogeneousMapValue.from_graph_cones(
        [PolyhedralCone.from_generators(np.array([[1.0, 2.0]]), np.array([[1.0, 2.0]]))], 1, 1, True)
    nb = outer_norm_details(H)
    assert nb.value == pytest.approx(2.0)
    assert nb.interval[0] <= 2.0 <= nb.interval[1]


@given(st.integers(2, 3), st.integers(0, 10_000))
def test_outer_norm_spectral(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    assert outer_norm(HomogeneousMapValue.linear_map(A)) == pytest.approx(np.linalg.norm(A, 2), abs=1e-9)


# ---------------------------------------------------------------------------
# distances


def test_dist_to_orthant():
    assert dist([1, 1], PolyhedralSet.orthant(2, -1)) == pytest.approx(math.sqrt(2))


def test_excess_examples():
    S = PolyhedralSet.box([0, 0], [1, 2])
    assert set_excess(S, S) == pytest.approx(0.0, abs=1e-12)
    assert set_excess(PolyhedralSet.box([0], [2]), PolyhedralSet.box([0], [1])) == pytest.approx(1.0)


def test_dist_empty_raises():
    with pytest.raises(EmptySet):
        dist([0], PolyhedralSet(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])))


def test_minkowski_sum_boxes():
    S = minkowski_sum([PolyhedralSet.box([0], [1]), PolyhedralSet.box([1], [2])], [0.5, 0.5])
    assert sorted(S.vertices().ravel()) == pytest.approx([0.5, 1.5])


# ---------------------------------------------------------------------------
# invariants


cone_gens = st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3)),
                     min_size=1, max_size=4).map(lambda g: np.array(g, float))


@given(cone_gens)
def test_polar_involution(G):
    K = PolyhedralCone.from_generators(G)
    assert polar(polar(K)).equals(K)


@given(cone_gens)
def test_faces_contain_lineality_and_cone(G):
    K = PolyhedralCone.from_generators(G)
    fl = faces(K)
    assert fl[-1].cone.equals(K)
    rows = K.rows
    lineality = 3 - (np.linalg.matrix_rank(rows) if rows.size else 0)
    assert fl[0].dim == lineality
    assert fl[0].cone.equals(PolyhedralCone.from_inequalities(np.vstack([rows, -rows]), 3))
    # every face satisfies the face axiom: sampled generators of K whose sum lies in F both lie in F
    for f in fl:
        for a, b in itertools.combinations(list(G), 2):
            if f.cone.contains(a + b):
                assert f.cone.contains(a) and f.cone.contains(b)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_normal_cone_interior_points_zero(z):
    C = PolyhedralSet.box([-2, -2], [2, 2])
    assert normal_cone(C, z).is_zero()


@given(st.integers(0, 5), st.floats(0.1, 10))
def test_normal_cone_positive_homogeneity(k, lam):
    z = [[1, 0], [0, 1], [0, 0], [0.5, 0.5], [0, 0.3], [0.3, 0]][k]
    K = normal_cone(TRIANGLE, z)
    for r in K.generators():
        assert K.contains(lam * r)
        # defining inequality on the vertices of C (enough for a polytope)
        assert np.max(TRIANGLE.vertices() @ r - np.dot(r, z)) <= 1e-9


# |u| is kept away from the 1e-8 zero tolerance, where the sign of u is numerically ambiguous
@given(st.one_of(st.just(0.0), st.floats(1e-3, 2), st.floats(-2, -1e-3)), st.floats(0.5, 10))
def test_nc_coderivative_positive_homogeneity(u, lam):
    C = PolyhedralSet.orthant(1, -1)
    a = interval(coderivative_normal_cone_map(C, [0], [0], [u]), 100.0)
    b = interval(coderivative_normal_cone_map(C, [0], [0], [lam * u]), 100.0 * lam)
    assert a is not None and b is not None
    assert b == pytest.approx((lam * a[0], lam * a[1]), abs=1e-7)


def test_face_pair_oracle_agreement_2d():
    # D*N(·;C) on the triangle vertex against a direct check of the regular-normal definition
    from covar.geometry import normal_map_graph_pieces
    pieces = normal_map_graph_pieces(TRIANGLE)
    z, v = np.array([1.0, 0.0]), np.array([1.0, 1.0])
    assert any(P.contains(np.concatenate([z, v])) for P in pieces)
    for u in ([1.0, 0.0], [0.0, 1.0], [-1.0, 1.0]):
        S = coderivative_normal_cone_map(TRIANGLE, z, v, u)
        for m in S.members:
            for p in m.support_points(1.0):
                # (p, -u) must be normal to one graph piece through (z, v)
                w = np.concatenate([p, -np.asarray(u)])
                ok = False
                for P in pieces:
                    if not P.contains(np.concatenate([z, v])):
                        continue
                    if normal_cone(P, np.concatenate([z, v])).contains(w, 1e-7):
                        ok = True
                assert ok or np.linalg.norm(w) == 0 or _limiting(pieces, z, v, w)


def _limiting(pieces, z, v, w):
    # normals at nearby graph points (outer limit): shift into each piece along its relative interior
    base = np.concatenate([z, v])
    for P in pieces:
        if not P.contains(base):
            continue
        c = P.vertices().mean(axis=0) if P.is_bounded() else P.feasible_point()
        for t in (1e-3, 1e-2):
            q = base + t * unit(c - base) if np.linalg.norm(c - base) > 0 else base
            if P.contains(q, 1e-9) and normal_cone(P, q).contains(w, 1e-6):
                return True
    return False
