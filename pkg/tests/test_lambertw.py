import math

import numpy as np
import pytest
from scipy.special import lambertw as scipy_lambertw

from relayshare.lambertw import BRANCH_POINT, lambert_w, lambert_w_derivative, lambert_w_iter


def test_special_values():
    assert lambert_w(0.0) == 0.0
    assert abs(lambert_w(math.e) - 1.0) <= 1e-14
    assert lambert_w(1.0) == pytest.approx(0.5671432904097838, abs=1e-15)
    assert lambert_w(BRANCH_POINT) == pytest.approx(-1.0, abs=1e-7)


def test_below_branch_point_rejected():
    with pytest.raises(ValueError):
        lambert_w(-0.4)


def test_array_input_keeps_shape():
    z = np.array([[0.0, 1.0], [math.e, 10.0]])
    w = lambert_w(z)
    assert w.shape == (2, 2)
    assert np.allclose(w * np.exp(w), z, atol=1e-13)


def test_agrees_with_scipy_principal_branch():
    z = np.concatenate([np.linspace(BRANCH_POINT + 1e-3, 5, 500), np.logspace(0, 8, 200)])
    ours = lambert_w(z)
    ref = scipy_lambertw(z, 0).real
    assert np.max(np.abs(ours - ref) / np.maximum(1.0, np.abs(ref))) < 1e-12


def test_near_branch_point_residual_small():
    # W is ill-conditioned here (square-root behaviour), so compare residuals, not values
    z = BRANCH_POINT + np.logspace(-12, -3, 50)
    w = lambert_w(z)
    assert np.all(np.abs(w * np.exp(w) - z) <= 1e-15)
    assert np.all((w > -1.0) & (w < -0.9))


def test_halley_converges_quickly():
    for z in (1e-8, 0.3, 1.0, 50.0, 1e6):
        _, it = lambert_w_iter(z)
        assert it <= 10


def test_derivative_limit_and_value():
    assert lambert_w_derivative(0.0) == 1.0
    assert lambert_w_derivative(1e-9) == pytest.approx(1.0, abs=1e-8)
    assert lambert_w_derivative(math.e) == pytest.approx(1.0 / (2.0 * math.e), abs=1e-14)


def test_derivative_matches_finite_difference():
    for z in (0.2, 1.0, 4.0, 30.0):
        h = 1e-6 * z
        fd = (lambert_w(z + h) - lambert_w(z - h)) / (2 * h)
        assert lambert_w_derivative(z) == pytest.approx(fd, rel=1e-7)
