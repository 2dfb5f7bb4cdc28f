"""Source-model suite: normalization, gradients, symmetry, moments, sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bss2 import sources
from bss2.sources import CapabilityError, SourceModel


def _box_integral(model, n=600, widths=8.0):
    """Trapezoid integral of the pdf over the support box / +-widths*sigma."""
    if model.support is not None:
        (l1, h1), (l2, h2) = model.support
    else:
        l1, h1 = -widths * model.std[0], widths * model.std[0]
        l2, h2 = -widths * model.std[1], widths * model.std[1]
    g1 = np.linspace(l1, h1, n)
    g2 = np.linspace(l2, h2, n)
    A, B = np.meshgrid(g1, g2, indexing="ij")
    F = model.pdf(A, B)
    return float(np.trapezoid(np.trapezoid(F, g2, axis=1), g1))


def test_pdf_normalization_smooth_models(gsm, gauss_pair, laplace_pair, uniform_pair, ell23):
    for model in (gsm, gauss_pair, laplace_pair, uniform_pair, ell23):
        assert abs(_box_integral(model) - 1.0) < 1e-3, model.label


def test_pdf_normalization_disk(disk):
    # Radial form removes the 1/r singularity: integrand r * f = 1/(2 pi).
    r, wr = np.polynomial.legendre.leggauss(64)
    r = 0.5 * (r + 1.0)
    wr = 0.5 * wr
    th = np.linspace(-np.pi, np.pi, 257)[:-1]
    total = 0.0
    for ri, wi in zip(r, wr):
        s1, s2 = ri * np.cos(th), ri * np.sin(th)
        total += wi * np.sum(disk.pdf(s1, s2) * ri) * (2.0 * np.pi / len(th))
    assert abs(total - 1.0) < 1e-6


def test_disk_pdf_values(disk):
    # f = 1/(2 pi r) inside the unit disk, 0 outside.
    assert disk.pdf(0.3, 0.4) == pytest.approx(1.0 / (2.0 * np.pi * 0.5), rel=1e-12)
    assert disk.pdf(0.9, 0.9) == 0.0


def test_gsm_pdf_center_value(gsm):
    # Half-sum of two equal Gaussian products: f(0,0) = 1/(4 pi).
    assert gsm.pdf(0.0, 0.0) == pytest.approx(1.0 / (4.0 * np.pi), rel=1e-12)


@pytest.mark.parametrize("name", ["gsm", "gauss_pair", "laplace_pair", "ell23", "disk"])
def test_pdf_grad_matches_central_differences(name, request):
    model = request.getfixturevalue(name)
    s = model.sample(400, seed=5)
    # Keep probes away from kinks (Laplace axis, disk center/edge).
    r = np.hypot(s[:, 0], s[:, 1])
    keep = (np.abs(s[:, 0]) > 0.05) & (np.abs(s[:, 1]) > 0.05)
    if name == "disk":
        keep &= (r > 0.2) & (r < 0.9)
    s = s[keep][:100]
    g1, g2 = model.pdf_grad(s[:, 0], s[:, 1])
    scale = float(np.max(np.abs(np.concatenate([g1, g2]))))
    for axis, g in ((0, g1), (1, g2)):
        h = 1e-5 * np.maximum(np.abs(s[:, axis]), 1.0)
        sp = s.copy()
        sm = s.copy()
        sp[:, axis] += h
        sm[:, axis] -= h
        fd = (model.pdf(sp[:, 0], sp[:, 1]) - model.pdf(sm[:, 0], sm[:, 1])) / (2.0 * h)
        assert np.max(np.abs(fd - g)) < 1e-5 * scale, model.label


def test_quadrantal_symmetry_all_shipped(gsm, gauss_pair, laplace_pair, uniform_pair,
                                         disk, ell23, polar1):
    for model in (gsm, gauss_pair, laplace_pair, uniform_pair, disk, ell23):
        ok, viol = sources.check_quadrantal_symmetry(model)
        assert ok, (model.label, viol)
    ok, viol = sources.check_quadrantal_symmetry(polar1)  # empirical mode
    assert ok, viol


def test_shifted_gaussian_breaks_symmetry():
    base = sources.make_gaussian_pair()
    shifted = SourceModel(
        label="shifted",
        draw=lambda rng, n: base.draw(rng, n) + np.array([1.0, 0.0]),
        pdf=lambda s1, s2: base.pdf(np.asarray(s1) - 1.0, s2),
        std=base.std,
    )
    ok, viol = sources.check_quadrantal_symmetry(shifted)
    assert not ok and viol > 1e-3


def test_empirical_moments_within_3se(gsm, uniform_pair, disk):
    n = 1_000_000
    cases = [
        (gsm, 0, 2.5),
        (gsm, 1, 2.5),
        (uniform_pair, 0, 1.0),
        (disk, 0, 1.0 / 6.0),  # E[r^2]/2 with r ~ U[0,1]
    ]
    for model, axis, target in cases:
        x = model.sample(n, seed=11)[:, axis] ** 2
        se = float(np.std(x)) / math.sqrt(n)
        assert abs(float(np.mean(x)) - target) <= 3.0 * se, model.label


def test_gsm_second_moment_within_1pct(gsm):
    x = gsm.sample(1_000_000, seed=3)[:, 0]
    assert abs(float(np.mean(x**2)) - 2.5) < 0.025


def test_disk_samples_inside_unit_disk(disk):
    s = disk.sample(50_000, seed=2)
    assert np.all(np.hypot(s[:, 0], s[:, 1]) <= 1.0 + 1e-12)


def test_sampling_deterministic(polar1):
    a = polar1.sample(100, seed=9)
    b = polar1.sample(100, seed=9)
    assert np.array_equal(a, b)


def test_polar_nonzero_d_has_no_pdf(polar1):
    assert not polar1.has_pdf
    with pytest.raises(CapabilityError):
        polar1.require_pdf()


def test_contaminated_degenerate_cases():
    m1, m2 = sources.normal_marginal(1.0), sources.normal_marginal(4.0)
    g1, g2 = sources.normal_marginal(4.0), sources.normal_marginal(1.0)
    pure = sources.make_contaminated(0.0, (m1, m2), (g1, g2))
    ref = sources.make_independent_pair(m1, m2)
    x = np.linspace(-3, 3, 11)
    assert np.allclose(pure.pdf(x, x), ref.pdf(x, x), rtol=1e-12)
    alt = sources.make_contaminated(1.0, (m1, m2), (g1, g2))
    ref2 = sources.make_independent_pair(g1, g2)
    assert np.allclose(alt.pdf(x, x), ref2.pdf(x, x), rtol=1e-12)
    with pytest.raises(ValueError):
        sources.make_contaminated(1.5, (m1, m2), (g1, g2))


def test_gsm_equals_half_contamination(gsm):
    m = sources.make_contaminated(
        0.5,
        (sources.normal_marginal(1.0), sources.normal_marginal(4.0)),
        (sources.normal_marginal(4.0), sources.normal_marginal(1.0)),
    )
    x = np.linspace(-4, 4, 21)
    assert np.allclose(m.pdf(x, x[::-1]), gsm.pdf(x, x[::-1]), rtol=1e-12)


def test_elliptical_invalid_constants():
    omega, omega_prime = sources.named_omega("gaussian")
    with pytest.raises(ValueError):
        sources.make_elliptical(-1.0, 2.0, omega, omega_prime)
    with pytest.raises(ValueError):
        sources.named_omega("nope")


def test_elliptical_moments(ell23):
    # Gaussian profile: independent zero-mean normals with var 1/K2, 1/K1.
    s = ell23.sample(400_000, seed=4)
    assert float(np.mean(s[:, 0] ** 2)) == pytest.approx(1.0 / 3.0, abs=0.01)
    assert float(np.mean(s[:, 1] ** 2)) == pytest.approx(1.0 / 2.0, abs=0.01)


def test_scale_model_transforms(disk):
    scaled = sources.scale_model(disk, 2.0, 0.5)
    s = scaled.sample(10_000, seed=1)
    assert np.all(np.abs(s[:, 0]) <= 2.0 + 1e-12)
    assert np.all(np.abs(s[:, 1]) <= 0.5 + 1e-12)
    assert abs(_box_integral(scaled, n=2000) - 1.0) < 0.02  # 1/r singularity: coarse
    with pytest.raises(ValueError):
        sources.scale_model(disk, -1.0, 1.0)


def test_marginal_registry():
    with pytest.raises(ValueError):
        sources.marginal_by_name("cauchy")
    m = sources.marginal_by_name("laplace", 2.0)
    assert m.var == 2.0


@settings(max_examples=20, deadline=None)
@given(var=st.floats(min_value=0.25, max_value=9.0))
def test_marginal_nodes_are_probability_weights(var):
    for make in (sources.normal_marginal, sources.laplace_marginal,
                 sources.uniform_marginal):
        m = make(var)
        x, w = m.nodes(64)
        assert np.all(w >= 0.0)
        assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-12)
        assert float(w @ x**2) == pytest.approx(var, rel=1e-6)


def test_sample_shape_and_validation(gsm):
    s = gsm.sample(17, seed=0)
    assert s.shape == (17, 2)
    with pytest.raises(ValueError):
        gsm.sample(0, seed=0)
