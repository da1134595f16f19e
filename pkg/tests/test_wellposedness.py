import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from covar.geometry import HomogeneousMapValue, LiftedPolyhedron, PolyhedralCone, PolyhedralSet
from covar.multifunction import AffineMap, BoxValued, NormalConeMap, PolyhedralGraph, Sum
from covar.oracle import GridSpec, empirical_lip, empirical_reg
from covar.stochastic import Atom, RandomIntegrand, ScenarioModel
from covar.wellposedness import (
    CERTIFIED,
    INCONCLUSIVE,
    LIPSCHITZ_LIKE,
    METRIC_REGULARITY,
    REFUTED,
    AdjointEquation,
    Certificate,
    ImplicationQuery,
    adjoint_solve,
    certify,
    integrable_lipschitz_certify,
    kernel_query,
    lipschitz_certify,
    metric_regularity_certify,
    qualification_check,
    range_query,
)

NC_MINUS = NormalConeMap(PolyhedralSet.orthant(1, -1))


def dstar(F, u, y):
    return F.coderivative_map(np.atleast_1d(np.asarray(u, float)), np.atleast_1d(np.asarray(y, float)))


# ---------------------------------------------------------------------------
# certificate records


def test_certificate_invariants():
    with pytest.raises(ValueError):
        Certificate(LIPSCHITZ_LIKE, CERTIFIED)  # infinite bound
    with pytest.raises(ValueError):
        Certificate(LIPSCHITZ_LIKE, REFUTED)  # no witness
    with pytest.raises(ValueError):
        Certificate(LIPSCHITZ_LIKE, "maybe")
    d = Certificate(LIPSCHITZ_LIKE, CERTIFIED, 2.0, (2.0, 2.0), "exact").to_dict()
    assert set(d) == {"property", "verdict", "bound", "bound_interval", "bound_kind", "norm", "witness",
                      "assumptions_log", "basis"}


def test_unknown_property():
    with pytest.raises(ValueError):
        certify(HomogeneousMapValue.zero_map(1, 1), "stability")


# ---------------------------------------------------------------------------
# linear maps


def test_linear_lipschitz_exact():
    c = lipschitz_certify(dstar(AffineMap(np.diag([2.0, 3.0])), [0, 0], [0, 0]))
    assert c.verdict == CERTIFIED and c.bound == pytest.approx(3.0) and c.bound_kind == "exact"
    assert c.norm == "l2" and c.basis


def test_linear_regularity_exact():
    A = np.array([[2.0, 1.0], [0.0, 0.5]])
    c = metric_regularity_certify(dstar(AffineMap(A), [0, 0], [0, 0]))
    assert c.verdict == CERTIFIED
    assert c.bound == pytest.approx(1.0 / np.linalg.svd(A, compute_uv=False)[-1], abs=1e-9)


def test_singular_linear_refuted():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    c = metric_regularity_certify(dstar(AffineMap(A), [0, 0], [0, 0]))
    assert c.verdict == REFUTED
    w = np.array(c.witness)
    assert np.linalg.norm(A.T @ w) <= 1e-9 and np.linalg.norm(w) > 0.5


def test_wide_matrix_regular_not_injective():
    # surjective 1x2 map: metrically regular, Lipschitz
    A = np.array([[3.0, 4.0]])
    D = dstar(AffineMap(A), [0, 0], [0])
    assert metric_regularity_certify(D).bound == pytest.approx(0.2)
    assert lipschitz_certify(D).bound == pytest.approx(5.0)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_linear_certificates_match_svd(m, n, seed):
    A = np.random.default_rng(seed).normal(size=(m, n))
    D = dstar(AffineMap(A), np.zeros(n), np.zeros(m))
    assert lipschitz_certify(D).bound == pytest.approx(np.linalg.norm(A, 2), abs=1e-9)
    s = np.linalg.svd(A, compute_uv=False)
    c = metric_regularity_certify(D)
    if m <= n and s[-1] > 1e-6:
        assert c.verdict == CERTIFIED and c.bound == pytest.approx(1.0 / s[-1], rel=1e-9)
    if m > n:
        assert c.verdict == REFUTED


# ---------------------------------------------------------------------------
# polyhedral maps


def test_normal_cone_corner_not_lipschitz():
    c = lipschitz_certify(dstar(NC_MINUS, [0], [0]))
    assert c.verdict == REFUTED and abs(c.witness[0]) > 0


def test_normal_cone_corner_not_regular():
    c = metric_regularity_certify(dstar(NC_MINUS, [0], [0]))
    assert c.verdict == REFUTED


def test_normal_cone_interior_not_regular():
    # the graph is locally {(z, 0)}: Lipschitz with modulus 0, never regular
    D = dstar(NC_MINUS, [-1], [0])
    assert lipschitz_certify(D).verdict == CERTIFIED and lipschitz_certify(D).bound == pytest.approx(0.0)
    assert metric_regularity_certify(D).verdict == REFUTED


def test_normal_cone_open_ray_regular_modulus_zero():
    # the graph is locally {0} x R: D*(y*) is empty for y* != 0
    D = dstar(NC_MINUS, [0], [1])
    assert lipschitz_certify(D).verdict == REFUTED
    c = metric_regularity_certify(D)
    assert c.verdict == CERTIFIED and c.bound == 0.0


def test_abs_value_lipschitz_linf():
    c = lipschitz_certify(dstar(PolyhedralGraph.abs_value(), [0], [0]))
    assert c.verdict == CERTIFIED and c.bound == pytest.approx(1.0)
    assert c.bound_interval[0] - 1e-9 <= 1.0 <= c.bound_interval[1] + 1e-9


def test_upper_estimate_gives_inconclusive():
    D = dstar(NC_MINUS, [0], [0]).with_exact(False)
    c = lipschitz_certify(D)
    assert c.verdict == INCONCLUSIVE and c.witness is not None
    assert metric_regularity_certify(D).verdict == INCONCLUSIVE


def test_upper_estimate_certified_is_upper():
    c = lipschitz_certify(HomogeneousMapValue.linear_map(np.eye(2), exact=False))
    assert c.verdict == CERTIFIED and c.bound_kind == "upper"


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_lipschitz_bound_dominates_oracle_affine(a, b):
    F = AffineMap(np.array([[a, b]]))
    c = lipschitz_certify(dstar(F, [0, 0], [0]))
    e = empirical_lip(F, ([0, 0], [0]), GridSpec((0, 0, 0), 0.5, 9))
    assert e.value <= c.bound + 1e-9


def test_sum_affine_normal_cone_regular():
    # x -> x + N(x; R_-) is metrically regular at the corner with modulus 1
    F = Sum(AffineMap(np.eye(1)), NC_MINUS)
    c = metric_regularity_certify(F.coderivative_map(np.zeros(1), np.zeros(1)))
    assert c.verdict == CERTIFIED and c.bound_kind == "upper"
    e = empirical_reg(F, ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.5, 21))
    assert e.value <= c.bound_interval[1] + 1e-9


# ---------------------------------------------------------------------------
# implication queries


def _cone(rows, dim):
    return PolyhedralCone.from_inequalities(np.atleast_2d(np.asarray(rows, float)), dim).as_lifted()


def test_qualification_holds_on_pointed_cone():
    q = ImplicationQuery((_cone([[-1, 0], [1, 0]], 2),), (0,))  # v1 = 0
    assert qualification_check(q).holds


def test_qualification_witness_first_face():
    q = ImplicationQuery((_cone([[-1, 0]], 2),), (0, 1))  # v1 >= 0
    r = qualification_check(q)
    assert not r.holds and r.piece == 0 and r.witness[0] == pytest.approx(1.0)


def test_query_rejects_affine_pieces():
    with pytest.raises(ValueError):
        ImplicationQuery((LiftedPolyhedron(np.eye(1), [1.0], np.zeros((0, 1)), np.zeros(0)),), (0,))


def test_kernel_and_range_queries():
    D = dstar(AffineMap(np.array([[1.0, 0.0], [0.0, 0.0]])), [0, 0], [0, 0])
    assert not qualification_check(kernel_query(D)).holds
    pos_first = PolyhedralCone.from_inequalities(np.array([[0.0, 1.0], [0.0, -1.0]]), 2)  # y2* = 0
    assert qualification_check(kernel_query(D, pos_first)).holds
    assert not qualification_check(range_query(D)).holds
    assert qualification_check(range_query(D, y_cone=PolyhedralCone.from_inequalities(
        np.array([[1.0, 0.0], [-1.0, 0.0]]), 2))).holds


def test_adjoint_solve():
    T1 = HomogeneousMapValue.linear_map(np.eye(1))
    T2 = dstar(NC_MINUS, [0], [0])
    assert adjoint_solve(AdjointEquation(T1)).trivial_only
    r = adjoint_solve(AdjointEquation(HomogeneousMapValue.zero_map(1, 1), T2))
    assert r.label == "nontrivial"
    with pytest.raises(ValueError):
        AdjointEquation(T1, HomogeneousMapValue.zero_map(2, 1))


# ---------------------------------------------------------------------------
# integrable Lipschitz certificates


def test_integrable_boxes_certified():
    Phi = RandomIntegrand({"a": BoxValued(AffineMap(2 * np.eye(1)), AffineMap(np.zeros((1, 1)), [1.0])),
                           "b": AffineMap(np.eye(1))})
    m = ScenarioModel((Atom("a", 0.5), Atom("b", 0.5)))
    # at y = 0.5 the box atom sits on its upper edge 2x + 1 (slope 2), the affine atom has slope 1
    c = integrable_lipschitz_certify(Phi, m, [0.0], [0.5])
    assert c.verdict == CERTIFIED
    assert c.bound == pytest.approx(1.5, rel=1e-6)
    # in the interior of the box the graph is locally full-dimensional, so only the affine atom counts
    assert integrable_lipschitz_certify(Phi, m, [0.0], [0.0]).bound == pytest.approx(0.5, rel=1e-6)


def test_integrable_normal_cone_inconclusive():
    Phi = RandomIntegrand({"a": NC_MINUS, "b": AffineMap(np.eye(1))})
    m = ScenarioModel((Atom("a", 0.5), Atom("b", 0.5)))
    c = integrable_lipschitz_certify(Phi, m, [0.0], [0.0])
    assert c.verdict == INCONCLUSIVE
    assert any("fails" in line for line in c.assumptions_log)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=4))
def test_integrable_affine_bound_is_mean_modulus(slopes):
    assume(all(math.isfinite(s) for s in slopes))
    k = len(slopes)
    Phi = RandomIntegrand({f"t{i}": AffineMap([[s]]) for i, s in enumerate(slopes)})
    c = integrable_lipschitz_certify(Phi, ScenarioModel.uniform(k), [0.0], [0.0])
    assert c.verdict == CERTIFIED
    assert c.bound == pytest.approx(sum(abs(s) for s in slopes) / k, abs=1e-9)
    assert c.bound >= abs(sum(slopes) / k) - 1e-9
