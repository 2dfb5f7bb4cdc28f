"""Shared fixtures: source models, nonlinearity families, expectation engines.

Session scope keeps numba compilation and quadrature-rule construction to a
single warm-up per test run.
"""

import numpy as np
import pytest

from bss2 import adaptive, meanfield, nonlinearity, sources


@pytest.fixture(scope="session")
def classical_H():
    return nonlinearity.make_classical_cubic()


@pytest.fixture(scope="session")
def absvalue_H():
    return nonlinearity.make_absvalue()


@pytest.fixture(scope="session")
def gsm():
    return sources.make_gaussian_scale_mixture()


@pytest.fixture(scope="session")
def gauss_pair():
    return sources.make_gaussian_pair()


@pytest.fixture(scope="session")
def laplace_pair():
    return sources.make_laplace_pair()


@pytest.fixture(scope="session")
def uniform_pair():
    return sources.make_uniform_pair()


@pytest.fixture(scope="session")
def disk():
    return sources.make_polar_dependent(0.0)


@pytest.fixture(scope="session")
def polar1():
    return sources.make_polar_dependent(1.0)


@pytest.fixture(scope="session")
def ell23():
    omega, omega_prime = sources.named_omega("gaussian")
    return sources.make_elliptical(2.0, 3.0, omega, omega_prime)


@pytest.fixture(scope="session")
def quad_engine():
    return meanfield.ExpectationEngine(mode="quad", nodes=64)


@pytest.fixture(scope="session")
def fine_engine():
    return meanfield.ExpectationEngine(mode="quad", nodes=96)


@pytest.fixture(scope="session")
def mc_engine():
    return meanfield.ExpectationEngine(mode="mc", n_samples=200_000, seed=0)


@pytest.fixture(scope="session")
def mixing_A():
    return adaptive.random_mixing(7)


@pytest.fixture(scope="session", autouse=True)
def _warm_numba(gsm, classical_H, absvalue_H, mixing_A):
    """Compile the run-loop kernels once before any timed test."""
    for H in (classical_H, absvalue_H):
        adaptive.run(gsm, mixing_A, H, 1e-4, 10, seed=0, thinning=5)
