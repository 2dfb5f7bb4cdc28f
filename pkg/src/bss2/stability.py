"""Local stability matrices, Routh-Hurwitz test, and the separability classifier.

The linearization of the mean-field recursion around a non-mixing
equilibrium decouples into two 2x2 blocks driven by the matrices

    F = E[ (h11, h22)^T (s1 f_s1/f, s2 f_s2/f) ]
    G = E[ (h12, h21)^T (s2 f_s1/f, s1 f_s2/f) ]

evaluated at the scaled arguments (c1 s1, c2 s2).  The equilibrium is
locally stable iff both F and G pass the 2x2 Routh-Hurwitz test (negative
trace, positive determinant).  The separability classifier builds the
canonical score-based matrices F* = -E[w w^T], G* = -E[u u^T] and looks for
a null direction [K1, -K2], which certifies a joint density of the
elliptically symmetric form omega(K2 s1^2 + K1 s2^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .meanfield import (
    ExpectationEngine,
    ScaleEquilibrium,
    expected_H,
    solve_scale_equilibrium,
)
from .nonlinearity import HMatrix, OddFunctionPair
from .sources import CapabilityError, SourceModel

__all__ = [
    "StabilityReport",
    "KappaReport",
    "SeparabilityVerdict",
    "JacobianCheckReport",
    "compute_F",
    "compute_G",
    "routh_hurwitz",
    "stability_report",
    "kappa_conditions",
    "verify_jacobian_blocks",
    "star_matrices",
    "elliptical_fit_residual",
    "boundary_decay_ok",
    "classify_separability",
]

# |det| below DET_SNAP * rho(M)^2 cannot be certified strictly positive by a
# numerical engine; such determinants are treated as zero (=> unstable).
DET_SNAP = 1e-6


def _score_points(model: SourceModel, engine: ExpectationEngine):
    """Sample/quadrature points with the two score weight vectors w and u."""
    model.require_grad()
    s1, s2, wts = engine.points(model)
    f = np.maximum(model.pdf(s1, s2), 1e-300)
    g1, g2 = model.pdf_grad(s1, s2)
    r1 = g1 / f
    r2 = g2 / f
    w = np.stack([s1 * r1, s2 * r2])  # drives the diagonal block
    u = np.stack([s2 * r1, s1 * r2])  # drives the anti-diagonal block
    return s1, s2, wts, w, u


def _scaled_args(s1, s2, eq: ScaleEquilibrium):
    if eq.orientation == "diagonal":
        return eq.c1 * s1, eq.c2 * s2
    # Anti-diagonal convention: arguments swap per the equilibrium system.
    return eq.c2 * s2, eq.c1 * s1


def compute_F(H: HMatrix, model: SourceModel, eq: ScaleEquilibrium,
              engine: ExpectationEngine) -> np.ndarray:
    s1, s2, wts, w, _ = _score_points(model, engine)
    z1, z2 = _scaled_args(s1, s2, eq)
    top = H.h11(z1, z2)
    bot = H.h22(z1, z2)
    return np.array(
        [
            [wts @ (top * w[0]), wts @ (top * w[1])],
            [wts @ (bot * w[0]), wts @ (bot * w[1])],
        ]
    )


def compute_G(H: HMatrix, model: SourceModel, eq: ScaleEquilibrium,
              engine: ExpectationEngine) -> np.ndarray:
    s1, s2, wts, _, u = _score_points(model, engine)
    z1, z2 = _scaled_args(s1, s2, eq)
    top = H.h12(z1, z2)
    bot = H.h21(z1, z2)
    return np.array(
        [
            [wts @ (top * u[0]), wts @ (top * u[1])],
            [wts @ (bot * u[0]), wts @ (bot * u[1])],
        ]
    )


def routh_hurwitz(M) -> bool:
    """True iff tr M < 0 and det M > 0 (strict): both eigenvalues in Re < 0."""
    M = np.asarray(M, dtype=float).reshape(2, 2)
    return bool(np.trace(M) < 0.0 and np.linalg.det(M) > 0.0)


def _snapped_det(M) -> float:
    det = float(np.linalg.det(M))
    rho = float(np.max(np.abs(np.linalg.eigvals(M))))
    return 0.0 if abs(det) <= DET_SNAP * max(rho, 1e-30) ** 2 else det


@dataclass
class StabilityReport:
    F: np.ndarray
    G: np.ndarray
    trace_F: float
    trace_G: float
    det_F: float
    det_G: float
    eig_F: np.ndarray
    eig_G: np.ndarray
    stable: bool
    equilibrium: ScaleEquilibrium

    def text(self) -> str:
        lines = []
        eq = self.equilibrium
        lines.append(f"orientation: {eq.orientation}")
        lines.append(f"c1: {eq.c1:.12g}")
        lines.append(f"c2: {eq.c2:.12g}")
        for name, M in (("F", self.F), ("G", self.G)):
            lines.append(f"{name}: {M[0, 0]:.12g} {M[0, 1]:.12g} {M[1, 0]:.12g} {M[1, 1]:.12g}")
        lines.append(f"trace_F: {self.trace_F:.12g}")
        lines.append(f"det_F: {self.det_F:.12g}")
        lines.append(f"trace_G: {self.trace_G:.12g}")
        lines.append(f"det_G: {self.det_G:.12g}")
        lines.append(f"eig_F: {self.eig_F[0]:.12g} {self.eig_F[1]:.12g}")
        lines.append(f"eig_G: {self.eig_G[0]:.12g} {self.eig_G[1]:.12g}")
        lines.append(f"stable: {self.stable}")
        return "\n".join(lines)

    CSV_HEADER = "c1,c2,trF,detF,trG,detG,stable"

    def csv_row(self) -> str:
        return "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d" % (
            self.equilibrium.c1, self.equilibrium.c2,
            self.trace_F, self.det_F, self.trace_G, self.det_G, int(self.stable),
        )


def stability_report(H: HMatrix, model: SourceModel, engine: ExpectationEngine,
                     orientation="diagonal") -> StabilityReport:
    """Solve the equilibrium, compute F and G, apply the Routh-Hurwitz test.

    Determinants that are numerically indistinguishable from zero are snapped
    to zero, so borderline spectra (a genuine zero eigenvalue, e.g. Gaussian
    pairs) classify as unstable rather than picking up the sign of rounding
    noise.
    """
    eq = solve_scale_equilibrium(H, model, engine, orientation=orientation)
    F = compute_F(H, model, eq, engine)
    G = compute_G(H, model, eq, engine)
    det_F = _snapped_det(F)
    det_G = _snapped_det(G)
    stable = (
        np.trace(F) < 0.0 and det_F > 0.0 and np.trace(G) < 0.0 and det_G > 0.0
    )
    return StabilityReport(
        F=F, G=G,
        trace_F=float(np.trace(F)), trace_G=float(np.trace(G)),
        det_F=det_F, det_G=det_G,
        eig_F=np.linalg.eigvals(F), eig_G=np.linalg.eigvals(G),
        stable=bool(stable), equilibrium=eq,
    )


@dataclass
class KappaReport:
    kappa1: float
    kappa2: float
    conditions_hold: bool


def kappa_conditions(g: OddFunctionPair, model: SourceModel,
                     engine: ExpectationEngine, fd_step=1e-5,
                     margin=1e-9) -> KappaReport:
    """kappa_i = E[g_i'(s_i)] E[s_i^2] - E[s_i g_i(s_i)], derivative by central difference.

    The strict inequalities are certified with a small ``margin`` so boundary
    cases (kappa = 0 up to rounding) deterministically report failure.
    """
    s1, s2, w = engine.points(model)
    kappas = []
    for s, gi in ((s1, g.g1), (s2, g.g2)):
        dg = (gi(s + fd_step) - gi(s - fd_step)) / (2.0 * fd_step)
        kappas.append(float((w @ dg) * (w @ s**2) - w @ (s * gi(s))))
    k1, k2 = kappas
    hold = (
        1.0 + k1 > margin
        and 1.0 + k2 > margin
        and (1.0 + k1) * (1.0 + k2) > 1.0 + margin
    )
    return KappaReport(kappa1=k1, kappa2=k2, conditions_hold=hold)


@dataclass
class JacobianCheckReport:
    block_diag: np.ndarray      # analytic C (I + mu F) C^{-1}
    block_antidiag: np.ndarray  # analytic C (I + mu G) C^{-1}
    fd_jacobian: np.ndarray     # 4x4 in coordinates (alpha, beta, gamma, delta)
    max_leakage: float
    max_discrepancy: float

    @property
    def ok(self):
        return self.max_leakage < 1e-3 and self.max_discrepancy < 1e-3


def _delta_from_coords(v):
    a, b, g, d = v
    return np.array([[a, g], [d, b]])


def _coords_from_delta(D):
    return np.array([D[0, 0], D[1, 1], D[0, 1], D[1, 0]])


def verify_jacobian_blocks(H: HMatrix, model: SourceModel, eq: ScaleEquilibrium,
                           mu: float, engine: ExpectationEngine,
                           fd_step=1e-5) -> JacobianCheckReport:
    """Finite-difference Jacobian of the mean-field map in perturbation coordinates.

    Coordinates (alpha, beta, gamma, delta) are the (1,1), (2,2), (1,2), (2,1)
    entries of the perturbation.  The analytic prediction is block-diagonal:
    (alpha, beta) evolve by C (I + mu F) C^{-1}, (gamma, delta) by
    C (I + mu G) C^{-1}.
    """
    C0 = eq.matrix()

    def phi(C):
        return C - mu * expected_H(H, model, C, engine) @ C

    J = np.empty((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = fd_step
        plus = phi(C0 + _delta_from_coords(e))
        minus = phi(C0 - _delta_from_coords(e))
        J[:, k] = _coords_from_delta((plus - minus) / (2.0 * fd_step))

    F = compute_F(H, model, eq, engine)
    G = compute_G(H, model, eq, engine)
    D = np.diag([eq.c1, eq.c2])
    Dinv = np.diag([1.0 / eq.c1, 1.0 / eq.c2])
    block_diag = D @ (np.eye(2) + mu * F) @ Dinv
    block_anti = D @ (np.eye(2) + mu * G) @ Dinv

    leakage = max(float(np.max(np.abs(J[:2, 2:]))), float(np.max(np.abs(J[2:, :2]))))
    disc = max(
        float(np.max(np.abs(J[:2, :2] - block_diag))),
        float(np.max(np.abs(J[2:, 2:] - block_anti))),
    )
    return JacobianCheckReport(
        block_diag=block_diag, block_antidiag=block_anti, fd_jacobian=J,
        max_leakage=leakage, max_discrepancy=disc,
    )


# ---------------------------------------------------------------------------
# Separability classification
# ---------------------------------------------------------------------------

def star_matrices(model: SourceModel, engine: ExpectationEngine):
    """Canonical score-based stability matrices F* = -E[w w^T], G* = -E[u u^T]."""
    _, _, wts, w, u = _score_points(model, engine)
    F = -np.array([[wts @ (w[i] * w[j]) for j in range(2)] for i in range(2)])
    G = -np.array([[wts @ (u[i] * u[j]) for j in range(2)] for i in range(2)])
    return F, G


def boundary_decay_ok(model: SourceModel, tol=1e-8, n_grid=41) -> bool:
    """Probe whether (1 + |s|^2) f decays at the truncation/support boundary.

    The integration-by-parts step behind the stability matrices needs the
    integrands to vanish at the integration boundary; densities with mass at
    a hard edge (e.g. uniform) violate it.
    """
    model.require_pdf()
    if model.support is not None:
        (l1, h1), (l2, h2) = model.support
    else:
        # Wide box: even slowly decaying (exponential-tail) densities must be
        # negligible here, while hard-edged supports stay detectable.
        l1, h1 = -25.0 * model.std[0], 25.0 * model.std[0]
        l2, h2 = -25.0 * model.std[1], 25.0 * model.std[1]
    shrink = 1.0 - 1e-9
    g1 = np.linspace(l1 * shrink, h1 * shrink, n_grid)
    g2 = np.linspace(l2 * shrink, h2 * shrink, n_grid)
    A, B = np.meshgrid(g1, g2, indexing="ij")
    val = model.pdf(A, B) * (1.0 + A**2 + B**2)
    edge = float(
        max(val[0].max(), val[-1].max(), val[:, 0].max(), val[:, -1].max())
    )
    # Reference scale: median of the integrand where the mass actually lives.
    # A grid maximum would be hijacked by integrable pdf singularities.
    s = model.sample(512, seed=0)
    ref = float(np.median(model.pdf(s[:, 0], s[:, 1]) * (1.0 + s[:, 0] ** 2 + s[:, 1] ** 2)))
    return edge <= tol * max(ref, 1e-300)


def elliptical_fit_residual(model: SourceModel, K1: float, K2: float,
                            n_levels=12, n_param=64, qlo=0.5, qhi=0.98,
                            seed=1234) -> float:
    """Constancy of f along contours K2 s1^2 + K1 s2^2 = const.

    Returns the worst relative spread of f over the probed contours; near
    zero iff the density has the elliptical form with these constants.
    """
    model.require_pdf()
    s = model.sample(20_000, seed)
    z = K2 * s[:, 0] ** 2 + K1 * s[:, 1] ** 2
    levels = np.quantile(z, np.linspace(qlo, qhi, n_levels))
    t = np.linspace(0.0, 2.0 * np.pi, n_param, endpoint=False)
    peak = float(np.max(model.pdf(s[:, 0], s[:, 1])))
    worst = 0.0
    for lv in levels:
        s1 = math.sqrt(lv / K2) * np.cos(t)
        s2 = math.sqrt(lv / K1) * np.sin(t)
        f = model.pdf(s1, s2)
        spread = float(f.max() - f.min()) / max(float(f.mean()), 1e-9 * peak)
        worst = max(worst, spread)
    return worst


def _power_fit_residual(model: SourceModel, K1: float, K2: float,
                        n_levels=8, n_param=48, seed=1234) -> float:
    """Constancy of f along contours |s1|^{K2} |s2|^{K1} = const (first-quadrant)."""
    model.require_pdf()
    s = np.abs(model.sample(20_000, seed))
    keep = (s[:, 0] > 0) & (s[:, 1] > 0)
    s = s[keep]
    z = s[:, 0] ** K2 * s[:, 1] ** K1
    levels = np.quantile(z, np.linspace(0.35, 0.65, n_levels))
    s1_grid = np.quantile(s[:, 0], np.linspace(0.25, 0.75, n_param))
    peak = float(np.max(model.pdf(s[:, 0], s[:, 1])))
    worst = 0.0
    for lv in levels:
        s2_grid = (lv / s1_grid**K2) ** (1.0 / K1)
        f = model.pdf(s1_grid, s2_grid)
        spread = float(f.max() - f.min()) / max(float(f.mean()), 1e-9 * peak)
        worst = max(worst, spread)
    return worst


@dataclass
class SeparabilityVerdict:
    separable: bool
    inconclusive: bool = False
    K1: Optional[float] = None
    K2: Optional[float] = None
    min_abs_eig_F: float = float("nan")
    min_abs_eig_G: float = float("nan")
    fit_residual: Optional[float] = None
    boundary_ok: bool = True
    F_star: Optional[np.ndarray] = None
    G_star: Optional[np.ndarray] = None
    null_route: Optional[str] = None
    detail: str = ""

    def text(self) -> str:
        lines = [f"separable: {self.separable}"]
        if self.inconclusive:
            lines.append("inconclusive: True")
        if self.K1 is not None:
            lines.append(f"K1: {self.K1:.12g}")
            lines.append(f"K2: {self.K2:.12g}")
        lines.append(f"min_abs_eig_F_star: {self.min_abs_eig_F:.12g}")
        lines.append(f"min_abs_eig_G_star: {self.min_abs_eig_G:.12g}")
        if self.fit_residual is not None:
            lines.append(f"fit_residual: {self.fit_residual:.12g}")
        lines.append(f"boundary_decay_ok: {self.boundary_ok}")
        if self.null_route:
            lines.append(f"null_route: {self.null_route}")
        if self.detail:
            lines.append(f"detail: {self.detail}")
        return "\n".join(lines)

    CSV_HEADER = "separable,inconclusive,K1,K2,min_eig_F,min_eig_G,fit_residual"

    def csv_row(self) -> str:
        return "%d,%d,%s,%s,%.17g,%.17g,%s" % (
            int(self.separable), int(self.inconclusive),
            "" if self.K1 is None else "%.17g" % self.K1,
            "" if self.K2 is None else "%.17g" % self.K2,
            self.min_abs_eig_F, self.min_abs_eig_G,
            "" if self.fit_residual is None else "%.17g" % self.fit_residual,
        )


def _null_candidates(M, tol_eig):
    """(eigval, eigvec) pairs within the null tolerance, plus gray-zone flag."""
    Ms = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(Ms)
    scale = float(np.max(np.abs(vals)))
    if scale == 0.0:
        return [], False, 0.0
    nulls = []
    gray = False
    for i, v in enumerate(vals):
        r = abs(v) / scale
        if r <= tol_eig:
            nulls.append((float(v), vecs[:, i]))
        elif r <= 10.0 * tol_eig:
            gray = True
    return nulls, gray, scale


def _constants_from_vector(vec):
    """Null vector -> (K1, K2) via the [K1, -K2] convention; None if mixed signs."""
    v = np.asarray(vec, dtype=float)
    v = v / np.max(np.abs(v))
    if v[0] < 0.0:  # overall sign is free; orient K1 >= 0
        v = -v
    K1, K2 = float(v[0]), float(-v[1])
    if K1 <= 1e-9 or K2 <= 1e-9:
        return None
    s = max(K1, K2)
    return K1 / s, K2 / s


def classify_separability(model: SourceModel, engine: ExpectationEngine,
                          tol_eig=1e-3, tol_fit=0.05) -> SeparabilityVerdict:
    """Decide separability from the canonical score construction.

    Non-separable requires a certified null direction of G* (elliptical form
    of the density) or F*, confirmed by a contour-constancy fit of the pdf at
    the fitted constants.  Degenerate score evidence (identically flat
    density, hard support edges) falls back to a direct contour-fit search.
    """
    model.require_grad()
    F, G = star_matrices(model, engine)
    eF = np.linalg.eigvalsh(0.5 * (F + F.T))
    eG = np.linalg.eigvalsh(0.5 * (G + G.T))
    boundary = boundary_decay_ok(model)
    base = SeparabilityVerdict(
        separable=True,
        min_abs_eig_F=float(np.min(np.abs(eF))),
        min_abs_eig_G=float(np.min(np.abs(eG))),
        boundary_ok=boundary,
        F_star=F, G_star=G,
    )

    overall = max(float(np.max(np.abs(eF))), float(np.max(np.abs(eG))))
    if overall < 1e-9:
        # Flat score everywhere (e.g. piecewise-constant density): the star
        # matrices carry no information; search contour fits directly.
        rho, resid = _search_elliptical_ratio(model, tol_fit)
        if resid <= tol_fit:
            base.separable = False
            base.K1, base.K2 = 1.0, rho
            base.fit_residual = resid
            base.null_route = "direct"
            base.detail = "degenerate score evidence; direct contour fit"
        else:
            base.fit_residual = resid
            base.detail = "degenerate score evidence; no elliptical contour fit"
        return base

    gray_any = False
    for M, route, fit in ((G, "G", elliptical_fit_residual),
                          (F, "F", _power_fit_residual)):
        nulls, gray, _ = _null_candidates(M, tol_eig)
        gray_any = gray_any or gray
        for _, vec in nulls:
            consts = _constants_from_vector(vec)
            if consts is None:
                base.inconclusive = True
                base.detail = f"{route}* null vector has invalid sign pattern"
                continue
            K1, K2 = consts
            resid = fit(model, K1, K2)
            if resid <= tol_fit:
                base.separable = False
                base.inconclusive = False
                base.K1, base.K2 = K1, K2
                base.fit_residual = resid
                base.null_route = route
                if not boundary:
                    base.detail = "boundary decay violated; contour fit confirms"
                return base
            base.fit_residual = resid
            base.detail = (
                f"{route}* null direction not confirmed by contour fit"
            )
    if gray_any and base.separable and not base.inconclusive:
        base.inconclusive = True
        base.detail = "eigenvalue in gray zone"
    return base


def _search_elliptical_ratio(model, tol_fit):
    """Grid + refinement search of the aspect ratio rho = K2/K1 (K1 fixed at 1)."""
    grid = np.logspace(-2, 2, 33)
    resids = [elliptical_fit_residual(model, 1.0, r) for r in grid]
    i = int(np.argmin(resids))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    fine = np.logspace(math.log10(lo), math.log10(hi), 17)
    fresid = [elliptical_fit_residual(model, 1.0, r) for r in fine]
    j = int(np.argmin(fresid))
    return float(fine[j]), float(fresid[j])
