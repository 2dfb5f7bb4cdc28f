"""The 2x2 matrix nonlinearity driving the adaptive recursion.

An :class:`HMatrix` bundles four bivariate functions h11, h12, h21, h22 with
the parity contract: diagonal entries even in each argument, anti-diagonal
entries odd in each argument.  All entry functions are numpy-vectorized; the
shipped families additionally carry scalar numba kernels used by the fast
simulation loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .sources import CapabilityError, SourceModel

__all__ = [
    "HMatrix",
    "OddFunctionPair",
    "odd_pair",
    "evaluate",
    "make_classical",
    "make_classical_cubic",
    "make_absvalue",
    "make_score_based",
    "validate_parities",
]


@dataclass(frozen=True)
class OddFunctionPair:
    """Two univariate odd functions g1, g2 with optional numba scalar kernels."""

    g1: Callable[[np.ndarray], np.ndarray]
    g2: Callable[[np.ndarray], np.ndarray]
    label: str = "g"
    njit_g1: Optional[Callable] = None
    njit_g2: Optional[Callable] = None

    def check_odd(self, half_width=4.0, tol=1e-12):
        z = np.linspace(-half_width, half_width, 41)
        for g in (self.g1, self.g2):
            if np.max(np.abs(g(-z) + g(z))) > tol:
                return False
        return True


@njit(nogil=True)
def _cube(z):
    return z * z * z


@njit(nogil=True)
def _ident(z):
    return z


def odd_pair(name: str) -> OddFunctionPair:
    if name == "cubic":
        return OddFunctionPair(lambda z: z**3, lambda z: z**3, "cubic", _cube, _cube)
    if name in ("identity", "linear"):
        return OddFunctionPair(lambda z: z, lambda z: z, "identity", _ident, _ident)
    raise ValueError(f"unknown odd function pair {name!r}")


@dataclass(frozen=True)
class HMatrix:
    """Matrix function H(Z); entry (i,j) is h_ij(z1, z2).

    ``njit_entries``, when present, holds scalar numba kernels
    (h11, h12, h21, h22) consumed by the compiled run loop.
    """

    label: str
    h11: Callable
    h12: Callable
    h21: Callable
    h22: Callable
    njit_entries: Optional[tuple] = None

    def __call__(self, z1, z2):
        return evaluate(self, z1, z2)


def evaluate(H: HMatrix, z1: float, z2: float) -> np.ndarray:
    out = np.array(
        [[H.h11(z1, z2), H.h12(z1, z2)], [H.h21(z1, z2), H.h22(z1, z2)]],
        dtype=float,
    )
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"H({z1}, {z2}) is not finite for {H.label!r}")
    return out


def make_classical(g: OddFunctionPair) -> HMatrix:
    """H(Z) = [Z Z^T - I] + [Z G^T(Z) - G(Z) Z^T].

    Diagonal: z_i^2 - 1 (the whitening part, independent of g).
    Anti-diagonal: z1 z2 + z1 g2(z2) - g1(z1) z2 and its mirror.
    """
    if not g.check_odd():
        raise ValueError(f"g functions of {g.label!r} are not odd")
    g1, g2 = g.g1, g.g2

    njit_entries = None
    if g.njit_g1 is not None and g.njit_g2 is not None:
        ng1, ng2 = g.njit_g1, g.njit_g2

        @njit(nogil=True)
        def k11(z1, z2):
            return z1 * z1 - 1.0

        @njit(nogil=True)
        def k22(z1, z2):
            return z2 * z2 - 1.0

        @njit(nogil=True)
        def k12(z1, z2):
            return z1 * z2 + z1 * ng2(z2) - ng1(z1) * z2

        @njit(nogil=True)
        def k21(z1, z2):
            return z1 * z2 + z2 * ng1(z1) - ng2(z2) * z1

        njit_entries = (k11, k12, k21, k22)

    return HMatrix(
        label=f"classical_{g.label}",
        h11=lambda z1, z2: z1**2 - 1.0,
        h12=lambda z1, z2: z1 * z2 + z1 * g2(z2) - g1(z1) * z2,
        h21=lambda z1, z2: z1 * z2 + z2 * g1(z1) - g2(z2) * z1,
        h22=lambda z1, z2: z2**2 - 1.0,
        njit_entries=njit_entries,
    )


def make_classical_cubic() -> HMatrix:
    return make_classical(odd_pair("cubic"))


@njit(nogil=True)
def _a11(z1, z2):
    return abs(z1) - 1.0


@njit(nogil=True)
def _a22(z1, z2):
    return abs(z2) - 1.0


@njit(nogil=True)
def _a12(z1, z2):
    return z1 * z2 * z2 * np.sign(z2)


@njit(nogil=True)
def _a21(z1, z2):
    return z2 * z1 * z1 * np.sign(z1)


def make_absvalue() -> HMatrix:
    """The family with no whitening part: |z_i| - 1 on the diagonal."""
    return HMatrix(
        label="absvalue",
        h11=lambda z1, z2: np.abs(z1) - 1.0,
        h12=lambda z1, z2: z1 * z2**2 * np.sign(z2),
        h21=lambda z1, z2: z2 * z1**2 * np.sign(z1),
        h22=lambda z1, z2: np.abs(z2) - 1.0,
        njit_entries=(_a11, _a12, _a21, _a22),
    )


def make_score_based(model: SourceModel, diag_offset=False) -> HMatrix:
    """Score-driven nonlinearity built from the model's own density:

        h11 = -z1 f_s1 / f        h12 = -z2 f_s1 / f
        h21 = -z1 f_s2 / f        h22 = -z2 f_s2 / f

    With ``diag_offset`` the diagonal entries are shifted by -1; for smooth
    decaying densities that variant satisfies the scale-equilibrium equations
    at c1 = c2 = 1 (integration by parts gives E[-s_i f_si / f] = 1), while
    the raw variant matches the outer-product form of the canonical
    stability matrices.
    """
    model.require_grad()
    off = 1.0 if diag_offset else 0.0

    def ratios(z1, z2):
        f = np.maximum(model.pdf(z1, z2), 1e-300)
        g1, g2 = model.pdf_grad(z1, z2)
        return g1 / f, g2 / f

    def h11(z1, z2):
        r1, _ = ratios(z1, z2)
        return -np.asarray(z1) * r1 - off

    def h22(z1, z2):
        _, r2 = ratios(z1, z2)
        return -np.asarray(z2) * r2 - off

    def h12(z1, z2):
        r1, _ = ratios(z1, z2)
        return -np.asarray(z2) * r1

    def h21(z1, z2):
        _, r2 = ratios(z1, z2)
        return -np.asarray(z1) * r2

    suffix = "-1" if diag_offset else ""
    return HMatrix(
        label=f"score_based{suffix}[{model.label}]",
        h11=h11, h12=h12, h21=h21, h22=h22,
    )


def validate_parities(H: HMatrix, grid_half_width=4.0, tol=1e-9):
    """Check the eight parity identities on a 21x21 grid over [-w, w]^2.

    Returns (ok, worst violation).
    """
    z = np.linspace(-grid_half_width, grid_half_width, 21)
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    worst = 0.0
    for h, sign in ((H.h11, 1.0), (H.h22, 1.0), (H.h12, -1.0), (H.h21, -1.0)):
        base = sign * h(Z1, Z2)
        worst = max(
            worst,
            float(np.max(np.abs(h(-Z1, Z2) - base))),
            float(np.max(np.abs(h(Z1, -Z2) - base))),
        )
    return worst <= tol, worst
