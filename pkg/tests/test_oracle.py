import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covar.geometry import PolyhedralSet, normal_cone
from covar.multifunction import AffineMap, BoxValued, NormalConeMap, PolyhedralGraph
from covar.oracle import (
    GridBudgetExceeded,
    GridSpec,
    brute_expected_map,
    empirical_coderivative,
    empirical_lip,
    empirical_normal_cone,
    empirical_reg,
    hausdorff,
    sample_graph,
)
from covar.stochastic import Atom, RandomIntegrand, ScenarioModel


def test_grid_validation_and_spacing():
    g = GridSpec((0.0, 0.0), 0.5, 11)
    assert g.spacing == pytest.approx(0.1) and g.dim == 2
    with pytest.raises(ValueError):
        GridSpec((0.0,), 0.5, 2)
    with pytest.raises(ValueError):
        GridSpec((0.0,), 0.0)


def test_grid_budget():
    with pytest.raises(GridBudgetExceeded):
        GridSpec((0.0,) * 4, 1.0, 40).lattice()


def test_grid_jitter_is_seeded():
    a = GridSpec((0.0, 0.0), 1.0, 5, seed=3, jitter=0.5).lattice()
    b = GridSpec((0.0, 0.0), 1.0, 5, seed=3, jitter=0.5).lattice()
    c = GridSpec((0.0, 0.0), 1.0, 5, seed=4, jitter=0.5).lattice()
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_hausdorff():
    A = np.array([[0.0], [1.0]])
    assert hausdorff(A, A) == 0.0
    assert hausdorff(A, np.array([[0.0]])) == pytest.approx(1.0)
    assert hausdorff(np.zeros((0, 1)), A) == math.inf
    assert hausdorff(np.zeros((0, 1)), np.zeros((0, 1))) == 0.0


# ---------------------------------------------------------------------------
# Lipschitz and regularity moduli


def test_empirical_lip_linear():
    A = np.array([[1.0, 2.0], [0.0, 3.0]])
    e = empirical_lip(AffineMap(A), ([0, 0], [0, 0]), GridSpec((0, 0, 0, 0), 0.5, step=0.01))
    assert abs(e.value - np.linalg.norm(A, 2)) <= 0.05 * np.linalg.norm(A, 2)
    assert not e.diverging and len(e.trend) == len(e.radii)


def test_empirical_reg_linear():
    A = np.array([[2.0, 0.0], [0.0, 0.5]])
    e = empirical_reg(AffineMap(A), ([0, 0], [0, 0]), GridSpec((0, 0, 0, 0), 0.5, step=0.01))
    assert e.value == pytest.approx(2.0, rel=0.1)


def test_empirical_reg_pl_square(derived):
    ref = derived["pl_square_reg"]
    assert all(v == "inf" for v in ref.values())
    e = empirical_reg(PolyhedralGraph.square_pl(0.05), ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.4, 21))
    assert e.diverging and e.value == math.inf


def test_empirical_lip_normal_cone_diverges():
    e = empirical_lip(NormalConeMap(PolyhedralSet.orthant(1, -1)), ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.5, 21))
    assert e.diverging


def test_empirical_lip_box_valued(derived):
    F = BoxValued(AffineMap(2 * np.eye(1)), AffineMap(np.array([[0.5]]), [1.0]))
    e = empirical_lip(F, ([0.0], [1.0]), GridSpec((0.0, 1.0), 0.1, 21))
    assert e.value == pytest.approx(derived["box_local_lipschitz"], rel=0.05)


def test_estimate_dict():
    e = empirical_lip(AffineMap(np.eye(1)), ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.5, 11))
    assert set(e.to_dict()) == {"value", "trend", "diverging", "radii"}


@settings(max_examples=10)
@given(st.floats(0.2, 3.0), st.floats(-1.0, 1.0))
def test_empirical_lip_slope(a, b):
    e = empirical_lip(AffineMap([[a]], [b]), ([0.0], [b]), GridSpec((0.0, b), 0.5, 21))
    assert e.value == pytest.approx(a, rel=0.05)


# ---------------------------------------------------------------------------
# normal cones and coderivatives


def test_empirical_normal_cone_orthant():
    C = PolyhedralSet.orthant(2, -1)
    s = empirical_normal_cone(C, [0.0, 0.0], GridSpec((0.0, 0.0), 0.5, 21))
    assert s.contains_direction([1, 1]) and not s.contains_direction([-1, 0.5])
    assert s.disagreement(normal_cone(C, [0.0, 0.0])) <= 0.1


def test_empirical_normal_cone_callable_union():
    # the union of two orthant axes is nonconvex; its limiting normal cone at 0 is the union of axes' normals
    member = lambda z: (abs(z[1]) <= 1e-9 and z[0] >= 0) or (abs(z[0]) <= 1e-9 and z[1] >= 0)
    s = empirical_normal_cone(member, [0.0, 0.0], GridSpec((0.0, 0.0), 0.5, 21))
    assert s.contains_direction([0, 1]) and s.contains_direction([1, 0])
    assert s.contains_direction([-1, -1])


def test_empirical_coderivative_nc_minus(derived):
    F = NormalConeMap(PolyhedralSet.orthant(1, -1))
    g = GridSpec((0.0, 0.0), 0.5, 41)
    for u, (lo, hi) in derived["coderivative_nc_minus"].items():
        X = empirical_coderivative(F, ([0.0], [0.0]), [float(u)], g, box=2.0, resolution=41).ravel()
        assert X.min() == pytest.approx(lo, abs=0.1) and X.max() == pytest.approx(hi, abs=0.1)


def test_sample_graph_single_valued():
    G = sample_graph(AffineMap([[2.0]]), ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.5, 11))
    assert np.allclose(G[:, 1], 2 * G[:, 0])


# ---------------------------------------------------------------------------
# brute-force expected maps


def test_brute_expected_map_limits():
    m = ScenarioModel(tuple(Atom(f"t{i}", 0.25) for i in range(4)))
    Phi = RandomIntegrand({f"t{i}": AffineMap(np.eye(1)) for i in range(4)})
    with pytest.raises(ValueError):
        brute_expected_map(Phi, m, [0.0])


def test_brute_expected_map_intervals():
    box = lambda lo, hi: BoxValued(AffineMap(np.zeros((1, 1)), [(lo + hi) / 2]),
                                   AffineMap(np.zeros((1, 1)), [(hi - lo) / 2]))
    Phi = RandomIntegrand({"a": box(0, 1), "b": box(1, 2)})
    pts = brute_expected_map(Phi, ScenarioModel((Atom("a", 0.5), Atom("b", 0.5))), [0.0], step=0.1)
    assert pts.min() == pytest.approx(0.5) and pts.max() == pytest.approx(1.5)


def test_sample_graph_has_exact_edges():
    # a sloped box-valued map: each column carries its exact edge points inside the output window
    F = BoxValued(AffineMap([[-1.2]]), AffineMap([[0.0]], [0.3]))
    G = sample_graph(F, ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.5, 21))
    for u in np.unique(G[:, 0]):
        col = G[np.isclose(G[:, 0], u), 1]
        for edge in (-1.2 * u - 0.3, -1.2 * u + 0.3):
            if abs(edge) <= 0.5:
                assert np.min(np.abs(col - edge)) <= 1e-9


def test_empirical_reg_ill_conditioned():
    # the minimal singular direction is off every lattice direction
    Q = np.array([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    A = Q @ np.diag([3.0, 0.25]) @ Q.T
    e = empirical_reg(AffineMap(A), ([0, 0], [0, 0]), GridSpec((0, 0, 0, 0), 0.5, step=0.01))
    assert e.value == pytest.approx(4.0, rel=0.01)
