"""Online stochastic recursions for the separator and non-mixing diagnostics.

``step_B`` updates the working estimate B of the inverse mixing matrix from
an observation x = A s; ``step_C`` runs the normalized recursion on C = B A
driven directly by source samples.  ``run`` iterates the normalized
recursion from C_0 = A with a compiled fast path when the nonlinearity
carries numba kernels.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .nonlinearity import HMatrix, evaluate
from .sources import SourceModel

__all__ = [
    "SeparatorState",
    "NormalizedState",
    "Trajectory",
    "random_mixing",
    "step_B",
    "step_C",
    "run",
    "nonmixing_index",
    "is_nonmixing",
]

DIVERGENCE_LIMIT = 1e12


def random_mixing(seed: int, det_min=0.1) -> np.ndarray:
    """Random mixing matrix: i.i.d. U[-1,1] entries, resampled until |det| > det_min."""
    rng = np.random.default_rng(seed)
    while True:
        A = rng.uniform(-1.0, 1.0, size=(2, 2))
        if abs(np.linalg.det(A)) > det_min:
            return A


def check_mixing(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float).reshape(2, 2)
    if abs(np.linalg.det(A)) <= 1e-9:
        raise ValueError("mixing matrix is (numerically) singular")
    return A


@dataclass
class SeparatorState:
    """Working estimate B of A^{-1} plus step size and iteration counter."""

    B: np.ndarray
    mu: float
    t: int = 0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        self.B = np.asarray(self.B, dtype=float).reshape(2, 2)


@dataclass
class NormalizedState:
    """Normalized state C = B A driven directly by source samples."""

    C: np.ndarray
    mu: float
    t: int = 0

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float).reshape(2, 2)


def step_B(state: SeparatorState, H: HMatrix, x) -> SeparatorState:
    """One update  B <- B - mu H(B x) B;  non-finite output flags divergence."""
    x = np.asarray(x, dtype=float).reshape(2)
    s_hat = state.B @ x
    B_new = state.B - state.mu * evaluate(H, s_hat[0], s_hat[1]) @ state.B
    return SeparatorState(B=B_new, mu=state.mu, t=state.t + 1)


def step_C(state: NormalizedState, H: HMatrix, s) -> NormalizedState:
    """One update  C <- C - mu H(C s) C."""
    s = np.asarray(s, dtype=float).reshape(2)
    z = state.C @ s
    C_new = state.C - state.mu * evaluate(H, z[0], z[1]) @ state.C
    return NormalizedState(C=C_new, mu=state.mu, t=state.t + 1)


@dataclass
class Trajectory:
    """Thinned record of the normalized recursion."""

    t: np.ndarray
    C: np.ndarray  # (n_records, 2, 2)
    index: np.ndarray
    thinning: int
    diverged: bool = False
    steps_done: int = 0

    @property
    def final_C(self) -> np.ndarray:
        return self.C[-1]

    @property
    def final_index(self) -> float:
        return float(self.index[-1])

    def to_csv(self, path):
        rows = np.column_stack(
            [self.t, self.C[:, 0, 0], self.C[:, 0, 1], self.C[:, 1, 0], self.C[:, 1, 1], self.index]
        )
        with open(path, "w", newline="") as fh:
            fh.write("t,c11,c12,c21,c22,index\n")
            for row in rows:
                fh.write("%d,%.17g,%.17g,%.17g,%.17g,%.17g\n" % (int(row[0]), *row[1:]))

    @staticmethod
    def from_csv(path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        C = np.stack(
            [np.stack([data["c11"], data["c12"]], axis=-1),
             np.stack([data["c21"], data["c22"]], axis=-1)],
            axis=-2,
        )
        return Trajectory(
            t=data["t"].astype(int), C=C, index=data["index"],
            thinning=0, steps_done=int(data["t"][-1]),
        )


@njit(nogil=True)
def _run_kernel(C, S, mu, h11, h12, h21, h22, thin, rec_t, rec_C, limit):
    n = S.shape[0]
    k = 0
    rec_t[k] = 0
    rec_C[k] = C
    k += 1
    diverged = False
    t = 0
    for t in range(1, n + 1):
        s1 = S[t - 1, 0]
        s2 = S[t - 1, 1]
        z1 = C[0, 0] * s1 + C[0, 1] * s2
        z2 = C[1, 0] * s1 + C[1, 1] * s2
        a = h11(z1, z2)
        b = h12(z1, z2)
        c = h21(z1, z2)
        d = h22(z1, z2)
        n00 = C[0, 0] - mu * (a * C[0, 0] + b * C[1, 0])
        n01 = C[0, 1] - mu * (a * C[0, 1] + b * C[1, 1])
        n10 = C[1, 0] - mu * (c * C[0, 0] + d * C[1, 0])
        n11 = C[1, 1] - mu * (c * C[0, 1] + d * C[1, 1])
        C[0, 0] = n00
        C[0, 1] = n01
        C[1, 0] = n10
        C[1, 1] = n11
        bad = not (
            np.isfinite(n00) and np.isfinite(n01)
            and np.isfinite(n10) and np.isfinite(n11)
        )
        if bad or abs(n00) > limit or abs(n01) > limit or abs(n10) > limit or abs(n11) > limit:
            diverged = True
            rec_t[k] = t
            rec_C[k] = C
            k += 1
            break
        if t % thin == 0 or t == n:
            rec_t[k] = t
            rec_C[k] = C
            k += 1
    return k, t, diverged


def _run_python(C, S, mu, H, thin, rec_t, rec_C, limit):
    n = S.shape[0]
    rec_t[0] = 0
    rec_C[0] = C
    k = 1
    t = 0
    diverged = False
    for t in range(1, n + 1):
        z = C @ S[t - 1]
        Hm = np.array(
            [[H.h11(z[0], z[1]), H.h12(z[0], z[1])],
             [H.h21(z[0], z[1]), H.h22(z[0], z[1])]], dtype=float
        )
        C = C - mu * Hm @ C
        if not np.all(np.isfinite(C)) or np.max(np.abs(C)) > limit:
            diverged = True
            rec_t[k] = t
            rec_C[k] = C
            k += 1
            break
        if t % thin == 0 or t == n:
            rec_t[k] = t
            rec_C[k] = C
            k += 1
    return k, t, diverged


def run(model: SourceModel, A, H: HMatrix, mu: float, n_steps: int, seed: int,
        thinning: int = 100) -> Trajectory:
    """Iterate C_t = C_{t-1} - mu H(C_{t-1} s_t) C_{t-1} from C_0 = A.

    Deterministic given ``seed``.  A non-finite or exploding entry halts the
    run with the partial trajectory and ``diverged=True``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if thinning < 1:
        raise ValueError("thinning must be >= 1")
    A = check_mixing(A)
    S = model.sample(n_steps, seed)
    n_rec = n_steps // thinning + 3
    rec_t = np.zeros(n_rec, dtype=np.int64)
    rec_C = np.zeros((n_rec, 2, 2), dtype=float)
    C = A.copy()
    if H.njit_entries is not None:
        h11, h12, h21, h22 = H.njit_entries
        k, t, diverged = _run_kernel(
            C, S, float(mu), h11, h12, h21, h22, int(thinning),
            rec_t, rec_C, DIVERGENCE_LIMIT,
        )
    else:
        k, t, diverged = _run_python(
            C, S, float(mu), H, int(thinning), rec_t, rec_C, DIVERGENCE_LIMIT
        )
    rec_t = rec_t[:k]
    rec_C = rec_C[:k]
    idx = np.array([_index_or_nan(Ck) for Ck in rec_C])
    return Trajectory(
        t=rec_t, C=rec_C, index=idx, thinning=thinning,
        diverged=diverged, steps_done=int(t),
    )


def _index_or_nan(C):
    try:
        return nonmixing_index(C)
    except ValueError:
        return float("nan")


def nonmixing_index(C) -> float:
    """Distance of a 2x2 matrix from the set of non-mixing matrices.

    Sum over rows and columns of (sum|entries| / max|entry| - 1); zero exactly
    when each row and column has a single nonzero entry, i.e. when C is
    diagonal or anti-diagonal with nonzero elements.
    """
    a = np.abs(np.asarray(C, dtype=float).reshape(2, 2))
    row_max = a.max(axis=1)
    col_max = a.max(axis=0)
    if np.any(row_max == 0.0) or np.any(col_max == 0.0):
        raise ValueError("matrix has an all-zero row or column")
    return float(
        (a.sum(axis=1) / row_max - 1.0).sum() + (a.sum(axis=0) / col_max - 1.0).sum()
    )


def is_nonmixing(C, tol: float) -> bool:
    return nonmixing_index(C) <= tol
