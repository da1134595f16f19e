"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""
import math
import os
import subprocess
import sys
import time

import numpy as np

from covar import cli
from covar.geometry import PolyhedralSet, coderivative_normal_cone_map
from covar.multifunction import AffineMap, BoxValued, NormalConeMap, SetValue
from covar.oracle import (
    GridSpec,
    empirical_coderivative,
    empirical_lip,
    empirical_reg,
    hausdorff,
    lattice_members,
    sample_graph,
    xstar_lattice,
)
from covar.stochastic import (
    Atom,
    RandomIntegrand,
    ScenarioModel,
    expected_map,
    leibniz_estimate,
)
from covar.systems import MpecSpec, SolutionMap, VariationalSystemSpec, mpec_check, variational_certify
from covar.multifunction import Quadratic
from covar.wellposedness import CERTIFIED, METRIC_REGULARITY, integrable_lipschitz_certify, lipschitz_certify, \
    metric_regularity_certify

from conftest import PROBLEMS

TRIANGLE = PolyhedralSet(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 0.0, 0.0]))
NONPOS = PolyhedralSet.orthant(1, -1)
TWO = ScenarioModel((Atom("s1", 0.5), Atom("s2", 0.5)))


def linear_systems(count: int, seed: int, square: bool = False):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, 5))
        m = n if square else int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        if square:
            while np.linalg.svd(A, compute_uv=False)[-1] < 0.2:
                A = rng.normal(size=(m, n))
        yield A


def dstar(F, u, y):
    return F.coderivative_map(np.asarray(u, float), np.asarray(y, float))


class ExpectedNode:
    """u -> E[Φ](u), sampled by the oracle."""

    single_valued = False

    def __init__(self, Phi, m):
        self.Phi, self.m = Phi, m
        self.in_dim, self.out_dim = Phi.in_dim, Phi.out_dim

    def evaluate(self, u) -> SetValue:
        return expected_map(self.Phi, self.m, u)

    def bounded_values(self) -> bool:
        return False


def random_two_atom(rng):
    """Two scalar atoms from {affine, box-valued, normal cone of R_-} and a base point (0, ȳ).
    Parameters keep every other kink of the expected graph at least 0.08 from (0, ȳ)."""
    nodes, ys = {}, []
    kinds = rng.choice(["affine", "box", "normal_cone"], size=2, p=[0.4, 0.4, 0.2])
    for i, kind in enumerate(kinds):
        if kind == "affine":
            a, b = rng.uniform(-1.5, 1.5), rng.uniform(-1, 1)
            nodes[f"t{i}"] = AffineMap([[a]], [b])
            ys.append(b)
        elif kind == "box":
            a, c, r = rng.uniform(-1.5, 1.5), rng.uniform(-1, 1), rng.uniform(0.5, 1.0)
            nodes[f"t{i}"] = BoxValued(AffineMap([[a]], [c]), AffineMap([[0.0]], [r]))
            ys.append(c + r * rng.choice([-1.0, 1.0, 0.0]))
        else:
            nodes[f"t{i}"] = NormalConeMap(NONPOS)
            ys.append(rng.choice([0.0, 6.0]))  # the offset keeps ray points clear of strip edges
    w = rng.uniform(0.3, 0.7)
    m = ScenarioModel((Atom("t0", w), Atom("t1", 1.0 - w)))
    return RandomIntegrand(nodes), m, np.array([w * ys[0] + (1 - w) * ys[1]]), list(kinds)


def near_graph(H, x: float, ys: float, tol: float) -> bool:
    """(x, ys) within max-norm distance tol of the graph of the homogeneous map H (scalar case)."""
    ts = list(np.linspace(ys - tol, ys + tol, 21)) + ([0.0] if abs(ys) <= tol else [])
    return any(H([t]).contains([x], tol) for t in ts)


# ---------------------------------------------------------------------------


def test_criterion_1_lipschitz_exactness(report):
    t0 = time.perf_counter()
    worst_exact, worst_emp = 0.0, 0.0
    for A in linear_systems(25, seed=1):
        m, n = A.shape
        F = AffineMap(A)
        cert = lipschitz_certify(dstar(F, np.zeros(n), np.zeros(m)))
        spec = np.linalg.norm(A, 2)
        worst_exact = max(worst_exact, abs(cert.bound - spec))
        e = empirical_lip(F, (np.zeros(n), np.zeros(m)), GridSpec((0.0,) * (n + m), 0.5, step=0.01))
        worst_emp = max(worst_emp, abs(e.value - spec) / spec)
    elapsed = time.perf_counter() - t0
    ok = worst_exact <= 1e-9 and worst_emp <= 0.05 and elapsed < 10.0
    report(1, "coderivative criterion, linear class", ok,
           f"max |lip - ||A|||={worst_exact:.2e}, max empirical rel. error={worst_emp:.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_metric_regularity_duality(report):
    worst_exact, worst_emp = 0.0, 0.0
    for A in linear_systems(25, seed=2, square=True):
        n = A.shape[0]
        F = AffineMap(A)
        cert = metric_regularity_certify(dstar(F, np.zeros(n), np.zeros(n)))
        ref = 1.0 / np.linalg.svd(A, compute_uv=False)[-1]
        worst_exact = max(worst_exact, abs(cert.bound - ref))
        e = empirical_reg(F, (np.zeros(n), np.zeros(n)), GridSpec((0.0,) * (2 * n), 0.5, step=0.01))
        worst_emp = max(worst_emp, abs(e.value - ref) / ref)
    ok = worst_exact <= 1e-9 and worst_emp <= 0.10
    report(2, "metric regularity duality", ok,
           f"max |reg - 1/smin|={worst_exact:.2e}, max empirical rel. error={worst_emp:.3f}")
    assert ok


def test_criterion_3_polyhedral_oracle_equivalence(report):
    t0 = time.perf_counter()
    dirs2 = [[1, 0], [0, 1], [-1, 1], [1, 1], [-1, -1], [0, 0]]
    cases = [
        (NONPOS, [0.0], [0.0], [[-1.0], [-0.5], [0.0], [0.5], [1.0]], 41),
        (PolyhedralSet.orthant(2, -1), [0.0, 0.0], [0.0, 0.0], dirs2, 19),
        (TRIANGLE, [1.0, 0.0], [0.0, -1.0], dirs2, 19),
        (PolyhedralSet.box([-1, -1], [1, 1]), [1.0, 0.0], [0.0, 0.0], dirs2, 19),
    ]
    worst, checked = 0.0, 0
    for C, z, v, ystars, res in cases:
        F = NormalConeMap(C)
        g = GridSpec(tuple(z) + tuple(v), 0.5, res)
        h = g.spacing
        box = 1.0
        r = int(round(2 * box / h)) + 1  # x* lattice with the same spacing
        graph = sample_graph(F, (z, v), g)
        X = xstar_lattice(len(z), box, r)
        for ys in ystars:
            E = empirical_coderivative(F, (z, v), ys, g, box=box, resolution=r, graph=graph)
            S = coderivative_normal_cone_map(C, np.array(z), np.array(v), np.array(ys, float))
            A = lattice_members(X, lambda x: S.contains(x, 1e-9))
            worst = max(worst, hausdorff(E, A) / h)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 2.0 and elapsed < 60.0
    report(3, "polyhedral coderivative oracle equivalence", ok,
           f"{checked} y* checked, max Hausdorff/spacing={worst:.2f}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_leibniz_inclusion(report):
    rng = np.random.default_rng(4)
    violations, checked = 0, 0
    box, res = 3.0, 61
    tol = 2 * (2 * box / (res - 1))  # twice the x* lattice spacing
    for _ in range(10):
        Phi, m, y, _ = random_two_atom(rng)
        u = np.zeros(1)
        H = leibniz_estimate(Phi, m, u, y)
        EF = ExpectedNode(Phi, m)
        # window well inside the conic neighbourhood of (0, ȳ); radius 3 steps resolves slopes up to 2.8
        g = GridSpec((0.0, float(y[0])), 0.15, 61)
        graph = sample_graph(EF, (u, y), g)
        for ys in rng.uniform(-2, 2, size=20):
            for x in empirical_coderivative(EF, (u, y), [ys], g, box=box, resolution=res, graph=graph,
                                            normal_radius=3.0):
                checked += 1
                if not near_graph(H, float(x[0]), float(ys), tol):
                    violations += 1
    ok = violations == 0
    report(4, "Leibniz inclusion", ok, f"{checked} oracle x* checked, {violations} violations")
    assert ok


def test_criterion_5_certified_never_divergent(report):
    rng = np.random.default_rng(5)
    bad, certified, refused, diverging = [], 0, 0, 0
    for k in range(20):
        Phi, m, y, kinds = random_two_atom(rng)
        u = np.zeros(1)
        cert = integrable_lipschitz_certify(Phi, m, u, y)
        e = empirical_lip(ExpectedNode(Phi, m), (u, y), GridSpec((0.0, float(y[0])), 0.5, 21))
        if cert.verdict == CERTIFIED:
            certified += 1
            if e.diverging or not math.isfinite(e.value):
                bad.append((k, kinds))
        else:
            refused += 1
            diverging += int(e.diverging)
    ok = not bad
    report(5, "no certified-but-divergent case", ok,
           f"{certified} certified, {refused} refused ({diverging} of them diverging), {len(bad)} bad")
    assert ok


def test_criterion_6_semilinear(report):
    rep, code = cli.run("certify", PROBLEMS / "semilinear_slater.txt")
    res = rep["multipliers"]["max_residual"]
    rep2, code2 = cli.run("certify", PROBLEMS / "semilinear_no_slater.txt")
    ok = (rep["certificate"]["verdict"] == "certified" and code == 0 and res <= 1e-8
          and rep2["certificate"]["verdict"] == "inconclusive" and code2 == 3)
    report(6, "semilinear system", ok,
           f"with Slater point: {rep['certificate']['verdict']}, multiplier residual {res:.1e}; "
           f"without: {rep2['certificate']['verdict']}")
    assert ok


def test_criterion_7_variational_failure_mode(report):
    Phi = RandomIntegrand({"s1": AffineMap([[1.0, 1.0]]), "s2": AffineMap([[1.0, 1.0]])})
    spec = VariationalSystemSpec(Phi, NormalConeMap(NONPOS), TWO, 1)
    cert, _ = variational_certify(spec, [0.0], [0.0], METRIC_REGULARITY)
    e = empirical_reg(SolutionMap(spec), ([0.0], [0.0]), GridSpec((0.0, 0.0), 0.5, 21))
    ok = cert.verdict != CERTIFIED and e.diverging
    report(7, "variational-system failure mode", ok,
           f"metric regularity {cert.verdict}, empirical reg trend {e.trend}, diverging={e.diverging}")
    assert ok


def test_criterion_8_mpec_residual(report, derived):
    Phi = RandomIntegrand({"s1": AffineMap([[-1.0, -1.0, 2.0]]), "s2": AffineMap([[-1.0, 0.0, 1.0]])})
    system = VariationalSystemSpec(Phi, NormalConeMap(PolyhedralSet.orthant(1, 1)), TWO, 2)
    spec = MpecSpec(Quadratic(np.eye(3), np.array([0.0, 0.0, 1.0]), 0.5), system)
    opt = derived["mpec_optimum"]
    at_opt = mpec_check(spec, opt["x"], [opt["z"]]).residual
    S = SolutionMap(system)
    rng = np.random.default_rng(8)
    perturbed = []
    for _ in range(10):
        d = rng.normal(size=2)
        x = np.asarray(opt["x"]) + 0.1 * d / np.linalg.norm(d)
        perturbed.append(mpec_check(spec, x, S.evaluate(x).as_point()).residual)
    ok = at_opt <= 1e-8 and min(perturbed) >= 1e-2
    report(8, "MPEC residual", ok, f"residual {at_opt:.1e} at the optimum, min {min(perturbed):.3f} off it")
    assert ok


def test_criterion_9_determinism(report):
    env = dict(os.environ)
    mismatches, runs = [], 0
    for path in sorted(PROBLEMS.glob("*.txt")):
        for command in sorted(cli.COMMANDS):
            outs = []
            for hashseed in ("0", "1"):
                env["PYTHONHASHSEED"] = hashseed
                p = subprocess.run([sys.executable, "-m", "covar.cli", command, str(path), "--json"],
                                   capture_output=True, env=env)
                outs.append((p.returncode, p.stdout))
            runs += 1
            if outs[0] != outs[1]:
                mismatches.append(f"{command} {path.name}")
    ok = not mismatches
    report(9, "determinism", ok, f"{runs} command/file pairs run twice, {len(mismatches)} differ")
    assert ok
