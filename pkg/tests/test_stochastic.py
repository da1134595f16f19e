import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covar.geometry import PolyhedralSet
from covar.multifunction import AffineMap, BoxValued, NormalConeMap
from covar.oracle import GridSpec, brute_expected_map, empirical_coderivative, hausdorff
from covar.stochastic import (
    Atom,
    NotInExpectedValue,
    RandomIntegrand,
    ScenarioModel,
    SelectionInfeasible,
    StandingAssumptionViolation,
    check_standing,
    expected_coderivative,
    expected_map,
    leibniz_estimate,
    lipschitz_property_check,
    selection_set,
)

from _helpers import is_point_set


def box_node(lo, hi, n_in: int = 1):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    m = lo.size
    assert np.allclose(hi - lo, (hi - lo)[0])
    return BoxValued(AffineMap(np.zeros((m, n_in)), (lo + hi) / 2), AffineMap(np.zeros((1, n_in)), [(hi - lo)[0] / 2]))


def two_atoms(w=(0.5, 0.5)):
    return ScenarioModel((Atom("a", w[0]), Atom("b", w[1])))


# ---------------------------------------------------------------------------
# scenario models


def test_model_validation():
    with pytest.raises(ValueError):
        ScenarioModel((Atom("a", 0.5), Atom("a", 0.5)))
    with pytest.raises(ValueError):
        ScenarioModel((Atom("a", -1.0),))
    with pytest.raises(ValueError):
        ScenarioModel(())
    m = ScenarioModel.uniform(4)
    assert m.total_mass == pytest.approx(1.0) and len(m.ids) == 4


def test_integrand_dimension_mismatch():
    with pytest.raises(ValueError):
        RandomIntegrand({"a": AffineMap(np.eye(1)), "b": AffineMap(np.eye(2))})


# ---------------------------------------------------------------------------
# expected maps


def test_expected_map_intervals():
    Phi = RandomIntegrand({"a": box_node([0], [1]), "b": box_node([1], [2])})
    v = expected_map(Phi, two_atoms(), [0.0])
    assert sorted(v.vertices().ravel()) == pytest.approx([0.5, 1.5])


def test_expected_map_singletons():
    A1, A2 = np.array([[1.0, 2.0]]), np.array([[0.0, -1.0]])
    m = two_atoms((0.25, 0.75))
    Phi = RandomIntegrand({"a": AffineMap(A1), "b": AffineMap(A2)})
    x = np.array([1.0, 2.0])
    assert np.allclose(expected_map(Phi, m, x).as_point(), (0.25 * A1 + 0.75 * A2) @ x)


def test_expected_map_three_boxes(derived):
    from covar.multifunction import PolyhedralGraph

    def const(lo, hi):
        P = PolyhedralSet.box([-1e9] + list(lo), [1e9] + list(hi))
        return PolyhedralGraph((P,), 1, 2)

    shapes = [([0, 0], [1, 2]), ([-1, 0], [0, 1]), ([0, -1], [2, 0])]
    m = ScenarioModel((Atom("a", 0.5), Atom("b", 0.25), Atom("c", 0.25)))
    Phi = RandomIntegrand({i: const(lo, hi) for i, (lo, hi) in zip("abc", shapes)})
    got = sorted(map(tuple, np.round(expected_map(Phi, m, [0.0]).vertices(), 9)))
    assert got == sorted(map(tuple, derived["minkowski_three_boxes"]["vertices"]))


def test_nonatomic_convexity_enforced():
    from covar.multifunction import PolyhedralGraph
    two_pieces = PolyhedralGraph((PolyhedralSet.box([-1, 0], [1, 0]), PolyhedralSet.box([-1, 1], [1, 1])), 1, 1)
    m = ScenarioModel((Atom("a", 1.0, nonatomic=True),))
    with pytest.raises(StandingAssumptionViolation):
        expected_map(RandomIntegrand({"a": two_pieces}), m, [0.0])


@given(st.floats(0, 1), st.floats(0.1, 2))
def test_expected_map_monotone(shift, grow):
    m = two_atoms()
    small = RandomIntegrand({"a": box_node([0], [1]), "b": box_node([shift], [shift + 1])})
    big = RandomIntegrand({"a": box_node([0], [1]), "b": box_node([shift - grow], [shift + 1 + grow])})
    vs, vb = expected_map(small, m, [0.0]), expected_map(big, m, [0.0])
    assert all(vb.contains(p) for p in vs.vertices())


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(0.01, 1)), min_size=1, max_size=3))
def test_expected_map_matches_brute_force(spec):
    m = ScenarioModel(tuple(Atom(f"t{i}", 1.0 / len(spec)) for i in range(len(spec))))
    Phi = RandomIntegrand({f"t{i}": box_node([c - r], [c + r]) for i, (c, r) in enumerate(spec)})
    lo = sum(c - r for c, r in spec) / len(spec)
    hi = sum(c + r for c, r in spec) / len(spec)
    v = expected_map(Phi, m, [0.0])
    verts = v.vertices().ravel()
    assert verts.min() == pytest.approx(lo, abs=1e-8) and verts.max() == pytest.approx(hi, abs=1e-8)
    pts = brute_expected_map(Phi, m, [0.0], step=0.05)
    dense = np.linspace(lo, hi, 201)[:, None]
    assert hausdorff(pts, dense) <= 0.05 + 1e-9


# ---------------------------------------------------------------------------
# selection sets


def test_selection_singletons_unique():
    Phi = RandomIntegrand({"a": AffineMap(np.eye(1)), "b": AffineMap(2 * np.eye(1))})
    S = selection_set(Phi, two_atoms(), [1.0], [1.5])
    ext = S.extreme_selections()
    assert len(ext) == 1 and np.allclose(ext[0].ravel(), [1.0, 2.0])


def test_selection_transportation_1d():
    Phi = RandomIntegrand({"a": box_node([0], [1]), "b": box_node([0], [1])})
    ext = selection_set(Phi, two_atoms(), [0.0], [0.5]).extreme_selections()
    assert sorted(tuple(e.ravel()) for e in ext) == [(0.0, 1.0), (1.0, 0.0)]


def test_selection_two_boxes_count(derived):
    from covar.multifunction import PolyhedralGraph

    def const(lo, hi):
        return PolyhedralGraph((PolyhedralSet.box([-1e9] + list(lo), [1e9] + list(hi)),), 1, 2)

    Phi = RandomIntegrand({"a": const([0, 0], [1, 1]), "b": const([0, 0], [2, 1])})
    ext = selection_set(Phi, two_atoms(), [0.0], [0.75, 0.5]).extreme_selections()
    assert len(ext) == derived["selection_vertex_count"]


def test_selection_not_in_expected_value():
    Phi = RandomIntegrand({"a": box_node([0], [1]), "b": box_node([0], [1])})
    with pytest.raises(NotInExpectedValue):
        selection_set(Phi, two_atoms(), [0.0], [2.0])


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_extreme_selections_reproduce_y(c, r, t):
    Phi = RandomIntegrand({"a": box_node([c - r], [c + r]), "b": box_node([0], [1])})
    m = two_atoms((0.3, 0.7))
    val = expected_map(Phi, m, [0.0])
    lo, hi = sorted(val.vertices().ravel())[0], sorted(val.vertices().ravel())[-1]
    y = lo + t * (hi - lo)
    S = selection_set(Phi, m, [0.0], [y])
    for e in S.extreme_selections():
        assert abs(m.weights @ e.ravel() - y) <= 1e-9
        assert S.contains(e)


# ---------------------------------------------------------------------------
# integrated coderivatives


def test_expected_coderivative_affine():
    A = [np.array([[1.0, 0.0]]), np.array([[2.0, -1.0]])]
    m = two_atoms((0.25, 0.75))
    Phi = RandomIntegrand({"a": AffineMap(A[0]), "b": AffineMap(A[1])})
    u = np.array([0.5, 0.5])
    sel = [A[0] @ u, A[1] @ u]
    S = expected_coderivative(Phi, m, u, sel, [2.0])
    assert is_point_set(S, 2.0 * (0.25 * A[0] + 0.75 * A[1]).ravel()) and not S.exact


def test_expected_coderivative_zero_dual_quasi():
    Phi = RandomIntegrand({"a": AffineMap(np.eye(2)), "b": AffineMap(-np.eye(2))})
    S = expected_coderivative(Phi, two_atoms(), [1.0, 1.0], [[1.0, 1.0], [-1.0, -1.0]], [0.0, 0.0])
    assert is_point_set(S, [0.0, 0.0])


def test_expected_coderivative_infeasible_selection():
    Phi = RandomIntegrand({"a": AffineMap(np.eye(1)), "b": AffineMap(np.eye(1))})
    with pytest.raises(SelectionInfeasible):
        expected_coderivative(Phi, two_atoms(), [1.0], [[0.0], [2.0]], [1.0])


def test_mixed_affine_normal_cone_contains_oracle():
    m = two_atoms()
    nc = NormalConeMap(PolyhedralSet.orthant(1, -1))
    Phi = RandomIntegrand({"a": AffineMap(np.eye(1)), "b": nc})
    u, y = [0.0], [0.0]
    H = leibniz_estimate(Phi, m, u, y)
    EF = _ExpectedNode(Phi, m)
    g = GridSpec((0.0, 0.0), 0.5, 41)
    for ys in (-1.0, 0.0, 1.0):
        S = H([ys])
        for x in empirical_coderivative(EF, (u, y), [ys], g, box=2.0, resolution=41):
            assert S.contains(x, 2 * g.spacing)


class _ExpectedNode:
    """x -> E[Φ](x), evaluable by the oracle."""

    def __init__(self, Phi, m):
        self.Phi, self.m = Phi, m
        self.in_dim, self.out_dim = Phi.in_dim, Phi.out_dim
        self.single_valued = False

    def evaluate(self, u):
        return expected_map(self.Phi, self.m, u)

    def bounded_values(self):
        return False


# ---------------------------------------------------------------------------
# standing assumptions and Lipschitz evidence


def test_standing_boxes_pass():
    Phi = RandomIntegrand({"a": BoxValued(AffineMap(np.eye(1)), AffineMap(np.zeros((1, 1)), [1.0])),
                           "b": box_node([0], [1])})
    r = check_standing(Phi, two_atoms(), [0.0], 0.5)
    assert r.passes
    assert r.atoms[0].kappa == pytest.approx(1.5) and r.atoms[1].kappa == pytest.approx(1.0)


def test_standing_normal_cone_fails():
    Phi = RandomIntegrand({"a": NormalConeMap(PolyhedralSet.orthant(1, -1))})
    r = check_standing(Phi, ScenarioModel((Atom("a", 1.0),)), [0.0], 0.5)
    assert not r.passes and r.integrable_bound == math.inf
    assert any("truncated" in msg for msg in r.messages)


def test_standing_affine_kappa(derived):
    Phi = RandomIntegrand({"a": AffineMap(np.diag([2.0, 1.0]), [1.0, 0.0])})
    r = check_standing(Phi, ScenarioModel((Atom("a", 1.0),)), [0.0, 0.0], 1.0, per_axis=41)
    a = r.atoms[0]
    assert a.kappa_bound == pytest.approx(derived["affine_kappa"])
    assert a.kappa <= a.kappa_bound + 1e-12 and a.kappa >= 0.99 * derived["affine_kappa"]


def test_quasi_lipschitz_affine():
    A = [np.array([[3.0, 4.0]]), np.array([[1.0, 0.0]])]
    Phi = RandomIntegrand({"a": AffineMap(A[0]), "b": AffineMap(A[1])})
    u = np.zeros(2)
    ev = lipschitz_property_check(Phi, two_atoms(), u, [[0.0], [0.0]], "quasi")
    assert ev.verdict == "holds"
    assert ev.moduli == pytest.approx((5.0, 1.0))


def test_quasi_lipschitz_normal_cone_fails():
    Phi = RandomIntegrand({"a": NormalConeMap(PolyhedralSet.orthant(1, -1))})
    ev = lipschitz_property_check(Phi, ScenarioModel((Atom("a", 1.0),)), [0.0], [[0.0]], "quasi")
    assert ev.verdict == "fails" and ev.witnesses
    atom, u, y, w = ev.witnesses[0]
    # the witness is a nonzero x* in D*N(u, y)(0)
    from covar.multifunction import coderivative
    assert coderivative(NormalConeMap(PolyhedralSet.orthant(1, -1)), u, y, [0.0]).contains(w)
    assert np.linalg.norm(w) > 0


def test_box_locally_lipschitz(derived):
    F = BoxValued(AffineMap(2 * np.eye(1)), AffineMap(np.array([[0.5]]), [1.0]))
    Phi = RandomIntegrand({"a": F})
    ev = lipschitz_property_check(Phi, ScenarioModel((Atom("a", 1.0),)), [0.0], [[0.0]], "locally", per_axis=41)
    assert ev.verdict == "holds"
    assert ev.moduli[0] == pytest.approx(derived["box_local_lipschitz"], rel=1e-6)
