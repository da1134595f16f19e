"""Finite scenario models and expected-integral multifunctions.

For a finite weighted atom list the Aumann integral of a random multifunction
is the weighted Minkowski sum of its scenario values; selections are tuples of
scenario values whose weighted sum hits a target.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _linalg as la
from .geometry import (
    TAU_MEM,
    CoderivativeSet,
    HomogeneousMapValue,
    PolyhedralSet,
    _vec,
    outer_norm,
    zero_input_witness,
)
from .multifunction import (
    AffineMap,
    DomainError,
    Node,
    Precompose,
    SetValue,
    SmoothMap,
)


class StochasticError(Exception):
    pass


class StandingAssumptionViolation(StochasticError):
    pass


class NotInExpectedValue(StochasticError):
    pass


class SelectionInfeasible(StochasticError):
    pass


@dataclass(frozen=True)
class Atom:
    id: str
    weight: float
    nonatomic: bool = False


@dataclass(frozen=True)
class ScenarioModel:
    atoms: tuple
    seed: int = 0

    def __post_init__(self):
        atoms = tuple(self.atoms)
        ids = [a.id for a in atoms]
        if len(set(ids)) != len(ids):
            raise ValueError("scenario ids must be unique")
        for a in atoms:
            if not (a.weight > 0 and math.isfinite(a.weight)):
                raise ValueError(f"weight of atom {a.id!r} must be positive and finite")
        if not atoms:
            raise ValueError("a scenario model needs at least one atom")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def uniform(cls, k: int, nonatomic: bool = False) -> "ScenarioModel":
        return cls(tuple(Atom(f"t{i}", 1.0 / k, nonatomic) for i in range(k)))

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.atoms]

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms])

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class RandomIntegrand:
    """Scenario id -> node, all with the same input and output dimensions."""

    nodes: Mapping[str, Node]

    def __post_init__(self):
        nodes = dict(self.nodes)
        dims = {(n.in_dim, n.out_dim) for n in nodes.values()}
        if len(dims) != 1:
            raise ValueError("all scenario nodes must share input/output dimensions")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def constant(cls, node: Node, m: ScenarioModel) -> "RandomIntegrand":
        return cls({i: node for i in m.ids})

    @property
    def in_dim(self) -> int:
        return next(iter(self.nodes.values())).in_dim

    @property
    def out_dim(self) -> int:
        return next(iter(self.nodes.values())).out_dim

    def __getitem__(self, key: str) -> Node:
        return self.nodes[key]

    def of(self, m: ScenarioModel) -> list[Node]:
        missing = [i for i in m.ids if i not in self.nodes]
        if missing:
            raise ValueError(f"integrand has no node for scenarios {missing}")
        return [self.nodes[i] for i in m.ids]


# ---------------------------------------------------------------------------
# expectation and selections


def expected_map(Phi: RandomIntegrand, m: ScenarioModel, u) -> SetValue:
    """Σ w_i Φ_{t_i}(u)."""
    u = _vec(u, Phi.in_dim)
    total = None
    for atom, node in zip(m.atoms, Phi.of(m)):
        val = node.evaluate(u)
        if atom.nonatomic and (len(val.parts) > 1 or not node.convex_valued()):
            raise StandingAssumptionViolation(f"value on nonatomic atom {atom.id!r} is not convex")
        if val.is_empty:
            raise DomainError(f"empty value on atom {atom.id!r}")
        val = val.scaled(atom.weight)
        total = val if total is None else total + val
    return total


@dataclass(frozen=True, eq=False)
class SelectionSet:
    u: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    values: tuple  # per-scenario SetValue
    inner_semicompact: bool

    def contains(self, sel, tol: float = TAU_MEM) -> bool:
        sel = np.asarray(sel, float)
        if np.max(np.abs(self.weights @ sel - self.y)) > tol:
            return False
        return all(v.contains(s, tol) for v, s in zip(self.values, sel))

    def _polytopes(self):
        k = len(self.values)
        d = self.y.size
        for combo in itertools.product(*[v.parts for v in self.values]):
            A = np.zeros((0, k * d))
            b = np.zeros(0)
            for i, P in enumerate(combo):
                Ai = np.zeros((P.nrows, k * d))
                Ai[:, i * d:(i + 1) * d] = P.A
                A = np.vstack([A, Ai])
                b = np.concatenate([b, P.b])
            Aeq = np.hstack([w * np.eye(d) for w in self.weights])
            yield PolyhedralSet.from_constraints(A, b, Aeq, self.y, n=k * d) if A.shape[0] else \
                PolyhedralSet.from_constraints(A_eq=Aeq, b_eq=self.y, n=k * d)

    def extreme_selections(self) -> list[np.ndarray]:
        """Vertices of the selection polytopes (shape (k, d) each), lexicographically sorted."""
        k, d = len(self.values), self.y.size
        out = []
        for S in self._polytopes():
            if S.is_empty():
                continue
            pts, _, _ = S.vrep
            out.extend(pts)
        if not out:
            return []
        P = la.unique_rows(np.round(np.array(out), 12), 1e-9)
        P = P[np.lexsort(P.T[::-1])]
        return [p.reshape(k, d) for p in P]


def selection_set(Phi: RandomIntegrand, m: ScenarioModel, u, y) -> SelectionSet:
    u = _vec(u, Phi.in_dim)
    y = _vec(y, Phi.out_dim)
    vals = tuple(n.evaluate(u) for n in Phi.of(m))
    S = SelectionSet(u, y, m.weights, vals, all(v.is_bounded for v in vals))
    if not any(not P.is_empty() for P in S._polytopes()):
        raise NotInExpectedValue("y is not in the expected value at u")
    return S


def expected_coderivative_map(Phi: RandomIntegrand, m: ScenarioModel, u, selection) -> HomogeneousMapValue:
    """y* -> Σ w_i D*Φ_{t_i}(u, 𝓎(t_i))(y*), tagged as an upper estimate."""
    u = _vec(u, Phi.in_dim)
    sel = np.asarray(selection, float).reshape(len(m.atoms), Phi.out_dim)
    total = None
    for atom, node, yi in zip(m.atoms, Phi.of(m), sel):
        if not node.contains(u, yi):
            raise SelectionInfeasible(f"selection is off the graph on atom {atom.id!r}")
        H = node.coderivative_map(u, yi).scaled(atom.weight)
        total = H if total is None else total.plus(H)
    return total.with_exact(False)


def expected_coderivative(Phi: RandomIntegrand, m: ScenarioModel, u, selection, ystar) -> CoderivativeSet:
    return expected_coderivative_map(Phi, m, u, selection)(_vec(ystar, Phi.out_dim))


def leibniz_estimate(Phi: RandomIntegrand, m: ScenarioModel, u, y) -> HomogeneousMapValue:
    """Union over extreme selections of the integrated coderivative maps."""
    S = selection_set(Phi, m, u, y)
    total = None
    for sel in S.extreme_selections():
        H = expected_coderivative_map(Phi, m, u, sel)
        total = H if total is None else total.union(H)
    return total.with_exact(False)


# ---------------------------------------------------------------------------
# standing assumptions


def ball_grid(center, radius: float, per_axis: int = 11) -> np.ndarray:
    """Grid points of the cube around center that lie in the closed Euclidean ball."""
    center = _vec(center)
    axes = [np.linspace(c - radius, c + radius, per_axis) for c in center]
    G = np.array(list(itertools.product(*axes)))
    keep = np.linalg.norm(G - center, axis=1) <= radius * (1 + 1e-12)
    return G[keep]


@dataclass(frozen=True)
class AtomStanding:
    id: str
    convex: bool
    kappa: float
    kappa_bound: float | None = None


@dataclass(frozen=True)
class StandingReport:
    atoms: tuple
    integrable_bound: float
    passes: bool
    messages: tuple = ()


def check_standing(Phi: RandomIntegrand, m: ScenarioModel, center, rho: float, per_axis: int = 11) -> StandingReport:
    """Convexity on nonatomic atoms and a uniform bound Φ_t(x) ⊆ κ(t)𝔹 over the ball 𝔹_ρ(center)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    center = _vec(center, Phi.in_dim)
    pts = ball_grid(center, rho, per_axis)
    atoms, msgs = [], []
    for atom, node in zip(m.atoms, Phi.of(m)):
        convex = node.convex_valued()
        kappa = 0.0
        for u in pts:
            try:
                val = node.evaluate(u)
            except DomainError:
                continue
            if len(val.parts) > 1:
                convex = False
            kappa = max(kappa, val.bounding_radius())
            if kappa == math.inf:
                break
        bound = None
        if isinstance(node, AffineMap):
            bound = float(np.linalg.norm(node.A, 2) * rho + np.linalg.norm(node.A @ center + node.b))
        if kappa == math.inf:
            msgs.append(f"atom {atom.id}: values are unbounded; use the truncated pathway")
        if atom.nonatomic and not convex:
            msgs.append(f"atom {atom.id}: nonconvex values on a nonatomic atom")
        atoms.append(AtomStanding(atom.id, convex, kappa, bound))
    integ = float(sum(a.weight * s.kappa for a, s in zip(m.atoms, atoms)))
    ok = math.isfinite(integ) and all(s.convex or not a.nonatomic for a, s in zip(m.atoms, atoms))
    return StandingReport(tuple(atoms), integ, ok, tuple(msgs))


# ---------------------------------------------------------------------------
# integrable Lipschitz properties


@dataclass(frozen=True)
class LipschitzEvidence:
    kind: str  # "locally" | "quasi" | "lipschitz_like"
    moduli: tuple
    eta: float
    verdict: str  # "holds" | "fails"
    witnesses: tuple = ()  # (atom id, graph point u, y, x* in D*Φ(u, y)(0)) for quasi failures
    integrated: float = math.inf


def _graph_samples(node: Node, u0, y0, eta: float, per_axis: int):
    """Graph points (u, y) with u on a grid of 𝔹_η(u0) and y near y0."""
    for u in ball_grid(u0, eta, per_axis):
        try:
            val = node.evaluate(u)
        except DomainError:
            continue
        if val.is_empty:
            continue
        cands = [val.project(y0)]
        if val.is_bounded:
            cands += [v for v in val.vertices() if np.linalg.norm(v - y0) <= eta]
        for y in cands:
            if np.linalg.norm(y - y0) <= eta + 1e-12:
                yield u, y


def lipschitz_property_check(Phi: RandomIntegrand, m: ScenarioModel, u, selection, kind: str = "quasi",
                             eta: float = 0.1, per_axis: int = 11) -> LipschitzEvidence:
    u = _vec(u, Phi.in_dim)
    sel = np.asarray(selection, float).reshape(len(m.atoms), Phi.out_dim)
    moduli, witnesses = [], []
    for atom, node, yi in zip(m.atoms, Phi.of(m), sel):
        if kind in ("quasi", "locally") and _is_c1(node):
            # C^1 single-valued nodes: D*Φ(u)(y*) = {∇Φ(u)ᵀy*}, so the modulus is sup ||∇Φ||
            ell = max((float(np.linalg.norm(node.jacobian(p), 2)) for p in ball_grid(u, eta, per_axis)),
                      default=0.0)
        elif kind == "quasi":
            ell = 0.0
            for up, yp in _graph_samples(node, u, yi, eta, per_axis):
                H = node.coderivative_map(up, yp)
                w = zero_input_witness(H)
                if w is not None:
                    witnesses.append((atom.id, tuple(map(float, up)), tuple(map(float, yp)), tuple(map(float, w))))
                    ell = math.inf
                    break
                ell = max(ell, outer_norm(H))
        elif kind in ("locally", "lipschitz_like"):
            ell = _sampled_modulus(node, u, yi, eta, per_axis, windowed=kind == "lipschitz_like")
        else:
            raise ValueError(f"unknown property kind {kind!r}")
        moduli.append(ell)
    integ = float(sum(a.weight * l for a, l in zip(m.atoms, moduli)))
    verdict = "holds" if math.isfinite(integ) else "fails"
    return LipschitzEvidence(kind, tuple(moduli), eta, verdict, tuple(witnesses), integ)


def _is_c1(node: Node) -> bool:
    if isinstance(node, (AffineMap, SmoothMap)):
        return True
    return isinstance(node, Precompose) and _is_c1(node.inner)


def _sampled_modulus(node: Node, u0, y0, eta: float, per_axis: int, windowed: bool) -> float:
    pts = ball_grid(u0, eta, per_axis)
    vals = []
    for p in pts:
        try:
            vals.append(node.evaluate(p))
        except DomainError:
            vals.append(None)
    window = PolyhedralSet.box(y0 - eta, y0 + eta) if windowed else None
    best = 0.0
    for i, j in itertools.permutations(range(len(pts)), 2):
        if vals[i] is None:
            continue
        e = vals[i].excess(vals[j], window) if vals[j] is not None else (None if vals[i].is_empty else math.inf)
        if e is None:
            continue
        best = max(best, e / float(np.linalg.norm(pts[i] - pts[j])))
        if best == math.inf:
            return best
    return best
