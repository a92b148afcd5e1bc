import math

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import norm

import macrobell.homodyne as hd
from macrobell.bell import BellSettings
from macrobell.errors import BracketError, GridError
from macrobell.homodyne import (
    QuadratureGrid,
    QuadratureModel,
    bell_ratio_homodyne,
    joint_pdf,
    marginal_pdf,
    plus_plus_prob,
    plus_prob,
    sigma0_cutoff,
)


def tensor_grid_plus_plus(model, sigma0):
    """P++ by trapezoid on the uniform 2-D grid of the model."""
    x, h = model.grid.uniform()
    pdf = joint_pdf(model, x[:, None], x[None, :])
    w = ndtr(x / sigma0) if sigma0 > 0 else (x >= 0).astype(float)
    tw = np.full_like(x, h)
    tw[[0, -1]] *= 0.5
    return float((tw * w) @ pdf @ (tw * w))


def test_vacuum_pdf_at_origin():
    assert joint_pdf(QuadratureModel(0.0), 0.0, 0.0) == pytest.approx(1 / (2 * math.pi), rel=1e-14)


def test_vacuum_pdf_is_product_of_unit_gaussians():
    x = np.linspace(-5, 5, 11)
    got = joint_pdf(QuadratureModel(0.0), x[:, None], x[None, :])
    np.testing.assert_allclose(got, np.outer(norm.pdf(x), norm.pdf(x)), rtol=1e-13)


@pytest.mark.parametrize("angle", [0.0, -math.pi / 4, 1.3])
def test_pdf_normalized(angle):
    model = QuadratureModel(1.1, angle)
    x, h = model.grid.uniform()
    total = joint_pdf(model, x[:, None], x[None, :]).sum() * h * h
    assert total == pytest.approx(1.0, abs=1e-8)


def test_pdf_symmetric_in_sites():
    model = QuadratureModel(1.1, 0.4)
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(2, 200))
    np.testing.assert_allclose(joint_pdf(model, x, y), joint_pdf(model, y, x), rtol=1e-13)


@pytest.mark.parametrize("angle", [0.0, -math.pi / 4, 2.0])
def test_marginal_is_angle_independent(angle):
    model = QuadratureModel(1.1, angle)
    y, h = model.grid.uniform()
    for x in (-1.7, 0.0, 0.4, 3.1):
        integrated = joint_pdf(model, x, y).sum() * h
        assert integrated == pytest.approx(float(marginal_pdf(model, x)), abs=1e-8)


def test_vacuum_plus_plus_quarter():
    assert plus_plus_prob(QuadratureModel(0.0), 0.0) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("r0", [0.0, 0.6, 1.1])
def test_huge_noise_plus_plus_quarter(r0):
    assert plus_plus_prob(QuadratureModel(r0, -0.7), 1e4) == pytest.approx(0.25, abs=1e-6)


def test_plus_prob_half():
    for s in (0.0, 0.3, 2.0):
        assert plus_prob(QuadratureModel(1.1), s) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("sigma0", [0.0, 0.3])
def test_plus_plus_monte_carlo(sigma0):
    model = QuadratureModel(1.1, -math.pi / 4)
    target = plus_plus_prob(model, sigma0)
    rng = np.random.default_rng(20240501 + int(sigma0 * 10))
    scale = 2.0
    sums = sq = 0.0
    total = 10_000_000
    chunk = 1_000_000
    for _ in range(total // chunk):
        x, y = rng.normal(scale=scale, size=(2, chunk))
        w = joint_pdf(model, x, y) / (norm.pdf(x, scale=scale) * norm.pdf(y, scale=scale))
        if sigma0 > 0:
            f = w * ndtr(x / sigma0) * ndtr(y / sigma0)
        else:
            f = w * ((x >= 0) & (y >= 0))
        sums += f.sum()
        sq += (f * f).sum()
    mean = sums / total
    se = math.sqrt((sq / total - mean * mean) / total)
    assert abs(mean - target) <= 3 * se


@pytest.mark.parametrize("sigma0,angle", [(0.3, -math.pi / 4), (0.5, -3 * math.pi / 4), (1.0, 0.2)])
def test_plus_plus_tensor_grid(sigma0, angle):
    model = QuadratureModel(1.1, angle)
    assert plus_plus_prob(model, sigma0) == pytest.approx(tensor_grid_plus_plus(model, sigma0), abs=1e-8)


def test_plus_plus_refinement_stable():
    coarse = QuadratureModel(1.1, -math.pi / 4)
    fine = QuadratureModel(1.1, -math.pi / 4, QuadratureGrid(14.0, 3201))
    for s in (0.0, 0.05, 0.27):
        assert plus_plus_prob(coarse, s) == pytest.approx(plus_plus_prob(fine, s), abs=1e-10)


def test_grid_error(monkeypatch):
    monkeypatch.setattr(hd, "RICHARDSON_TOL", -1.0)
    hd._sign_matrix.cache_clear()
    with pytest.raises(GridError):
        plus_plus_prob(QuadratureModel(1.1), 0.3)


def test_grid_validation():
    with pytest.raises(ValueError):
        QuadratureGrid(0.0, 801)
    with pytest.raises(ValueError):
        QuadratureGrid(12.0, 4)
    with pytest.raises(ValueError):
        plus_plus_prob(QuadratureModel(1.1), -1.0)


def test_bell_ratio_vacuum_half(standard_angles):
    assert bell_ratio_homodyne(0.0, standard_angles, 0.0).s == pytest.approx(0.5, abs=1e-12)


def test_bell_ratio_frozen(standard_angles):
    assert bell_ratio_homodyne(1.1, standard_angles, 0.0).s == pytest.approx(1.0159787, abs=2e-7)
    assert bell_ratio_homodyne(1.1, standard_angles, 0.5).s < 1


def test_bell_ratio_angle_sum_invariance(standard_angles):
    shifted = BellSettings(standard_angles.theta + 0.5, standard_angles.theta_prime + 0.5, standard_angles.phi - 0.5, standard_angles.phi_prime - 0.5)
    assert bell_ratio_homodyne(1.1, shifted, 0.1).s == pytest.approx(bell_ratio_homodyne(1.1, standard_angles, 0.1).s, abs=1e-13)


def test_sigma0_cutoff_no_violation(standard_angles):
    with pytest.raises(BracketError):
        sigma0_cutoff(0.0, standard_angles)


def test_sigma0_cutoff_grid_stable(standard_angles):
    base = sigma0_cutoff(1.1, standard_angles)
    fine = sigma0_cutoff(1.1, standard_angles, grid=QuadratureGrid(12.0, 1601))
    assert abs(base - fine) <= 2e-4
    assert bell_ratio_homodyne(1.1, standard_angles, base - 1e-3).s > 1 >= bell_ratio_homodyne(1.1, standard_angles, base + 1e-3).s
