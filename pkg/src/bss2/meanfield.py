"""Deterministic mean-field recursion, expectation engine, scale-equilibrium solver.

The expectation engine evaluates E[phi(s1, s2)] either by seeded Monte Carlo
or by the model's probability-weighted quadrature rule.  The equilibrium
solver finds positive scales (c1, c2) with

    E[h11(c1 s1, c2 s2)] = 0,   E[h22(c1 s1, c2 s2)] = 0

(arguments swapped for the anti-diagonal orientation) using damped Newton
with a secant Jacobian and a bracketed bisection fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nonlinearity import HMatrix
from .sources import CapabilityError, SourceModel

__all__ = [
    "ExpectationEngine",
    "ScaleEquilibrium",
    "expect",
    "meanfield_step",
    "expected_H",
    "solve_scale_equilibrium",
    "equilibrium_residuals",
]


@dataclass
class ExpectationEngine:
    """E[.] over the source pair; mode 'mc' (n_samples, seed) or 'quad' (nodes)."""

    mode: str = "quad"
    n_samples: int = 200_000
    seed: int = 0
    nodes: int = 64

    def __post_init__(self):
        if self.mode not in ("mc", "quad"):
            raise ValueError(f"unknown engine mode {self.mode!r}")
        if self.mode == "mc" and self.n_samples < 10_000:
            raise ValueError("MC engine requires at least 10^4 samples")
        if self.mode == "quad" and self.nodes < 32:
            raise ValueError("quadrature engine requires at least 32 nodes per axis")

    def points(self, model: SourceModel, nodes=None):
        """(s1, s2, w) with sum(w) = 1; fixed order for bit-reproducibility."""
        if self.mode == "mc":
            s = model.sample(self.n_samples, self.seed)
            w = np.full(len(s), 1.0 / len(s))
            return s[:, 0], s[:, 1], w
        if model.quad_nodes is None:
            if model.pdf is None:
                raise CapabilityError(
                    f"quadrature engine needs an analytic pdf for {model.label!r}"
                )
            pts, w = _box_rule(model, nodes or self.nodes)
        else:
            pts, w = model.quad_nodes(nodes or self.nodes)
        return pts[:, 0], pts[:, 1], w

    def expect(self, model: SourceModel, phi) -> float:
        s1, s2, w = self.points(model)
        return float(w @ np.asarray(phi(s1, s2), dtype=float))

    def expect_with_error(self, model: SourceModel, phi):
        """Estimate plus MC standard error or quadrature grid-refinement delta."""
        if self.mode == "mc":
            s1, s2, w = self.points(model)
            v = np.asarray(phi(s1, s2), dtype=float)
            est = float(w @ v)
            se = float(np.sqrt(np.sum(w**2 * (v - est) ** 2)))
            return est, se
        est = self.expect(model, phi)
        s1, s2, w = self.points(model, nodes=max(32, self.nodes // 2))
        coarse = float(w @ np.asarray(phi(s1, s2), dtype=float))
        return est, abs(est - coarse)


def _box_rule(model: SourceModel, n):
    """Generic tensor Gauss-Legendre rule over a truncation box, weighted by the pdf."""
    if model.support is not None:
        (l1, h1), (l2, h2) = model.support
    else:
        l1, h1 = -6.0 * model.std[0], 6.0 * model.std[0]
        l2, h2 = -6.0 * model.std[1], 6.0 * model.std[1]
    from .sources import _split_gauss_legendre

    x1, w1 = _split_gauss_legendre(l1, h1, n)
    x2, w2 = _split_gauss_legendre(l2, h2, n)
    P1, P2 = np.meshgrid(x1, x2, indexing="ij")
    W = np.outer(w1, w2) * model.pdf(P1, P2)
    w = W.ravel()
    return np.column_stack([P1.ravel(), P2.ravel()]), w / w.sum()


def expect(engine: ExpectationEngine, model: SourceModel, phi) -> float:
    return engine.expect(model, phi)


def expected_H(H: HMatrix, model: SourceModel, C, engine: ExpectationEngine) -> np.ndarray:
    """E[H(C S)] as a 2x2 matrix, sharing one set of sample/quadrature points."""
    C = np.asarray(C, dtype=float).reshape(2, 2)
    s1, s2, w = engine.points(model)
    z1 = C[0, 0] * s1 + C[0, 1] * s2
    z2 = C[1, 0] * s1 + C[1, 1] * s2
    return np.array(
        [
            [w @ H.h11(z1, z2), w @ H.h12(z1, z2)],
            [w @ H.h21(z1, z2), w @ H.h22(z1, z2)],
        ]
    )


def meanfield_step(Cbar, H: HMatrix, model: SourceModel, mu: float,
                   engine: ExpectationEngine) -> np.ndarray:
    """One deterministic step  Cbar <- Cbar - mu E[H(Cbar S)] Cbar."""
    Cbar = np.asarray(Cbar, dtype=float).reshape(2, 2)
    return Cbar - mu * expected_H(H, model, Cbar, engine) @ Cbar


@dataclass
class ScaleEquilibrium:
    """Positive scales fixing the amplitude of a non-mixing equilibrium."""

    c1: float
    c2: float
    residuals: tuple
    orientation: str = "diagonal"

    def matrix(self) -> np.ndarray:
        if self.orientation == "diagonal":
            return np.diag([self.c1, self.c2])
        # Matches the swapped-argument equilibrium system: C S = (c2 s2, c1 s1).
        return np.array([[0.0, self.c2], [self.c1, 0.0]])


def _diag_residuals(H, model, engine, orientation):
    s1, s2, w = engine.points(model)

    def res(c):
        c1, c2 = c
        if orientation == "diagonal":
            z1, z2 = c1 * s1, c2 * s2
        else:
            z1, z2 = c2 * s2, c1 * s1
        return np.array([w @ H.h11(z1, z2), w @ H.h22(z1, z2)])

    return res


def solve_scale_equilibrium(H: HMatrix, model: SourceModel, engine: ExpectationEngine,
                            orientation="diagonal", tol=1e-10,
                            bracket=(0.05, 20.0)) -> ScaleEquilibrium:
    """Solve the two diagonal expectation equations for positive (c1, c2)."""
    if orientation not in ("diagonal", "anti-diagonal"):
        raise ValueError(f"unknown orientation {orientation!r}")
    res = _diag_residuals(H, model, engine, orientation)

    # Whitening-type diagonals h_ii(z1,z2) = h(z_i) make the system separable;
    # a scale-matched start point serves the general Newton iteration too.
    c = np.array([1.0 / max(model.std[0], 1e-6), 1.0 / max(model.std[1], 1e-6)])
    c = np.clip(c, *bracket)
    r = res(c)
    for _ in range(80):
        if np.max(np.abs(r)) <= tol:
            break
        J = np.empty((2, 2))
        for j in range(2):
            h = 1e-6 * max(abs(c[j]), 1e-3)
            cp = c.copy()
            cp[j] += h
            J[:, j] = (res(cp) - r) / h
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(10):
            cn = np.clip(c + lam * step, bracket[0], bracket[1])
            rn = res(cn)
            if np.linalg.norm(rn) < np.linalg.norm(r):
                c, r = cn, rn
                break
            lam *= 0.5
        else:
            break

    if np.max(np.abs(r)) > max(tol, 1e-8):
        c, r = _bisect_fallback(res, bracket, tol)
    if np.max(np.abs(r)) > max(tol, 1e-7):
        raise RuntimeError(
            f"no equilibrium found in bracket {bracket}: residuals {tuple(r)}"
        )
    return ScaleEquilibrium(
        c1=float(c[0]), c2=float(c[1]), residuals=(float(r[0]), float(r[1])),
        orientation=orientation,
    )


def _bisect_fallback(res, bracket, tol):
    """Alternating per-coordinate bisection on the two diagonal residuals."""
    c = np.array([1.0, 1.0])
    for _ in range(60):
        for j in range(2):
            lo, hi = bracket
            flo = res(_with(c, j, lo))[j]
            fhi = res(_with(c, j, hi))[j]
            if flo * fhi > 0:
                continue
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                fm = res(_with(c, j, mid))[j]
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            c[j] = 0.5 * (lo + hi)
        r = res(c)
        if np.max(np.abs(r)) <= tol:
            break
    return c, res(c)


def _with(c, j, val):
    out = c.copy()
    out[j] = val
    return out


def equilibrium_residuals(H: HMatrix, model: SourceModel, c1: float, c2: float,
                          engine: ExpectationEngine) -> np.ndarray:
    """The four expectations E[h_ij(c1 s1, c2 s2)] as a 2x2 matrix."""
    return expected_H(H, model, np.diag([c1, c2]), engine)
