import math

import numpy as np
import pytest

from relayshare.channel import y_factor
from relayshare.mmd_game import (BANDWIDTH_CAP, ConvergenceError, MmdParams, bandwidth_equilibrium,
                                 bandwidth_foc_residual, best_response_bandwidth, best_response_price,
                                 best_response_slope, golden_section_max, mmd_utility,
                                 mmd_utility_closed, nash_prices, price_foc_residual,
                                 price_foc_residual_printed, supermodularity_check)
from relayshare.omd_game import equilibrium_share_closed


@pytest.fixture
def table_ys(gains_a, gains_b):
    return (y_factor(gains_a), y_factor(gains_b))


def test_mmd_utility_examples():
    assert mmd_utility(0, 10, 0.5, 20) == -10
    assert mmd_utility(1, 10, 0, 20) == 10
    assert mmd_utility(2, 15, 0.1, 30) == pytest.approx(27)


def test_mmd_utility_closed_examples():
    assert mmd_utility_closed(1.3, 1.3, 20, 20, 1.1, 1.1, 40, 0.0) == pytest.approx(1.3 * 20)
    assert mmd_utility_closed(1, 2, 20, 40, 1.1, 1.1, 40, 0.5) == pytest.approx(10.0)


def test_mmd_params_invariants():
    with pytest.raises(ValueError):
        MmdParams(omega=60)
    with pytest.raises(ValueError):
        MmdParams(omega=10, cost=-1)


def test_best_response_examples():
    r = best_response_price(1.0, 20, 40, 2.0, 1.0)
    assert r.price_star == pytest.approx(1.5671432904097838, abs=1e-12)
    assert best_response_price(2.0, 10, 10, 1.2, 1.2).price_star == pytest.approx(2.0, abs=1e-14)
    assert r.w_argument == pytest.approx(1.0)


def test_best_response_increasing(table_ys):
    grid = np.linspace(0.01, 6, 200)
    b = [best_response_price(p, 20, 40, *table_ys).price_star for p in grid]
    assert np.all(np.diff(b) > 0)


@pytest.mark.parametrize("base", [math.e, 2.0, 10.0])
def test_best_response_satisfies_first_order_condition(base, table_ys):
    for p_other in (0.5, 1.0, 2.5):
        p = best_response_price(p_other, 20, 40, *table_ys, base=base).price_star
        assert abs(price_foc_residual(p, p_other, 20, 40, *table_ys, base=base)) < 1e-12
        h = 1e-5
        f = lambda q: mmd_utility_closed(q, p_other, 20, 40, *table_ys, 40, 0.5, base=base)
        assert abs((f(p + h) - f(p - h)) / (2 * h)) <= 1e-6


def test_printed_base2_condition_differs(table_ys):
    p = best_response_price(1.0, 20, 40, *table_ys, base=2.0).price_star
    assert abs(price_foc_residual_printed(p, 1.0, 20, 40, *table_ys)) > 1e-3


def test_nash_symmetric_on_diagonal():
    ne = nash_prices((20, 20), (1.1, 1.1))
    assert ne.prices[0] == pytest.approx(ne.prices[1], abs=1e-9)


def test_nash_table_point(table_ys):
    ne = nash_prices((20, 40), table_ys)
    assert ne.prices == pytest.approx((1.8112, 2.2341), abs=0.05)
    assert max(ne.residuals) < 1e-9


def test_nash_independent_of_start(table_ys):
    rng = np.random.default_rng(0)
    pts = [nash_prices((20, 40), table_ys, start=tuple(rng.uniform(0.01, 10, 2))).prices
           for _ in range(16)]
    assert np.ptp(np.array(pts), axis=0).max() < 2e-9


def test_nash_budget_exhaustion_raises(table_ys):
    with pytest.raises(ConvergenceError):
        nash_prices((20, 40), table_ys, max_iter=1)
    with pytest.raises(ValueError):
        nash_prices((20, 40), table_ys, tol=0)


def test_slope_examples():
    assert float(best_response_slope(1.0 + 1.0, 1, 1, 1, 1, with_ratio=True, form="printed")) == \
        pytest.approx(1 / (2 * math.e), abs=1e-14)
    # z = 1e-6: the slope approaches 1 from below like 1 - 2z
    near = float(best_response_slope(1.0 + math.log(1e-6), 1, 1, 1, 1, form="printed"))
    assert near == pytest.approx(1 - 2e-6, abs=1e-10)
    assert near < 1.0


def test_exact_slope_matches_finite_difference(table_ys):
    for p in (0.3, 1.0, 3.0):
        h = 1e-6
        fd = (best_response_price(p + h, 20, 40, *table_ys).price_star
              - best_response_price(p - h, 20, 40, *table_ys).price_star) / (2 * h)
        assert float(best_response_slope(p, 20, 40, *table_ys, form="exact")) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("form", ["printed", "exact"])
@pytest.mark.parametrize("with_ratio", [True, False])
def test_supermodularity_on_grid(form, with_ratio, table_ys):
    grid = np.linspace(0.1, 5, 50)
    rep = supermodularity_check(grid, grid, (20, 40), table_ys, with_ratio, form)
    assert rep.ok
    assert 0 < rep.min_slope <= rep.max_slope < 1
    assert rep.max_lambda < 1


def test_golden_section():
    assert golden_section_max(lambda x: -(x - 1.3) ** 2, 0, 5, tol=1e-9) == pytest.approx(1.3, abs=1e-7)
    assert golden_section_max(lambda x: 0.0, 2.0, 5.0) == 2.0


def test_bandwidth_zero_cost_takes_cap(table_ys):
    w = best_response_bandwidth((1.0, 1.0), 20, *table_ys, 40, 0.0)
    assert w == pytest.approx(BANDWIDTH_CAP, abs=1e-5)


def test_bandwidth_respects_cap(table_ys):
    for cap in (5.0, 30.0):
        assert best_response_bandwidth((2.0, 1.0), 20, *table_ys, 40, 0.01, omega_cap=cap) <= cap


def test_bandwidth_best_response_foc(table_ys):
    w = best_response_bandwidth((1.0, 1.2), 25, *table_ys, 40, 0.5, tol=1e-10)
    assert abs(bandwidth_foc_residual(w, 25, 1.0, 1.2, *table_ys, 40, 0.5)) < 1e-6


def test_bandwidth_equilibrium_symmetric_closed_form(table_ys):
    y1, y2 = table_ys
    eq = bandwidth_equilibrium((1.0, 1.0), table_ys, 40, (0.5, 0.5))
    expected = 1.0 * 40 * y1 * y2 / (0.5 * (y1 + y2) ** 2)
    assert eq.omegas == pytest.approx((expected, expected), abs=1e-4)
    for i, j in ((0, 1), (1, 0)):
        r = bandwidth_foc_residual(eq.omegas[i], eq.omegas[j], 1.0, 1.0, table_ys[i], table_ys[j], 40, 0.5)
        assert abs(r) < 1e-5


def test_composition_identity_spot_values(table_ys):
    for p in ((1.0, 2.0), (2.5, 0.3)):
        share = equilibrium_share_closed(p[0], p[1], 20, 40, *table_ys, 40)
        assert mmd_utility_closed(*p, 20, 40, *table_ys, 40, 0.5) == \
            pytest.approx(mmd_utility(p[0], share, 0.5, 20), abs=1e-12)
