import math

import numpy as np
import pytest

from pseudolattice.averaging import average_report, q_infinity, time_average, torus_average
from pseudolattice.models import GOLDEN, action_coords, make_flat_model


def _chart_at_origin(q_choice, omega_star=(1.0, GOLDEN)):
    m = make_flat_model(omega_star, q_choice)
    c = m.value_from_xi(np.zeros(2))
    return m, action_coords(m, c)


def test_torus_average_zero_mean_harmonic():
    m, ch = _chart_at_origin("cos_x1")
    assert torus_average(m, ch, np.zeros(2)) == pytest.approx(0.0, abs=1e-12)


def test_torus_average_constant():
    m, ch = _chart_at_origin("const3")
    assert torus_average(m, ch, np.zeros(2)) == 3.0


def test_torus_average_xi_weighted():
    m = make_flat_model((1.0, 0.7), "xi_weighted")
    ch = action_coords(m, m.value_from_xi(np.array([0.2, 0.5])))
    assert torus_average(m, ch, np.array([0.2, 0.5])) == pytest.approx(0.5, abs=1e-12)


def test_torus_average_grid_refinement():
    m = make_flat_model((1.0, 0.7), "xi_weighted")
    ch = action_coords(m, m.value_from_xi(np.array([0.2, 0.3])))
    a = torus_average(m, ch, np.array([0.2, 0.3]), n=64)
    b = torus_average(m, ch, np.array([0.2, 0.3]), n=128)
    assert abs(a - b) < 1e-12


def test_time_average_constant():
    m, ch = _chart_at_origin("const3")
    assert time_average(m, ch, np.zeros(2), (0.4, 1.0), 57.3) == pytest.approx(3.0, abs=1e-12)


def test_time_average_single_harmonic_closed_form():
    # along the flow cos(x1 + t*w1) averages to (2/(T w1)) sin(T w1/2) cos(x1)
    m, ch = _chart_at_origin("cos_x1")
    for T in (100.0, 317.0):
        got = time_average(m, ch, np.zeros(2), (0.0, 0.0), T)
        assert got == pytest.approx(2.0 * math.sin(T / 2.0) / T, abs=1e-8)


def test_time_average_frozen_resonant_angle():
    # omega ~ (1, 0): x2 never moves, so q = cos(x2) stays at its initial value
    m, ch = _chart_at_origin("cos_x2", omega_star=(1.0, 1e-9))
    got = time_average(m, ch, np.zeros(2), (0.0, math.pi / 3), 400.0)
    assert got == pytest.approx(0.5, abs=1e-6)


def test_time_average_rejects_nonpositive_T():
    m, ch = _chart_at_origin("cos_x1")
    with pytest.raises(ValueError):
        time_average(m, ch, np.zeros(2), (0.0, 0.0), 0.0)


def test_ergodic_decay_golden_torus():
    # |<q>_T - <q>| <= C/T with C stable under doubling T
    m, ch = _chart_at_origin("cos_x1")
    xi = np.zeros(2)
    Cs = []
    for T in (100.0, 1000.0, 10_000.0):
        err = abs(time_average(m, ch, xi, (0.0, 0.0), T))
        Cs.append(err * T)
    assert max(Cs) <= 2.0  # explicit bound for one harmonic at |omega_1| = 1


def test_q_infinity_golden_torus():
    m, ch = _chart_at_origin("cos_x1")
    lo, hi = q_infinity(m, ch, np.zeros(2), [100.0, 1000.0])
    assert hi - lo <= 0.02
    assert lo <= 0.0 <= hi  # contains the torus average


def test_q_infinity_resonant_spread():
    # frozen angle: the average depends on x0, sweeping most of [-1, 1]
    m, ch = _chart_at_origin("cos_x2", omega_star=(1.0, 1e-9))
    lo, hi = q_infinity(m, ch, np.zeros(2), [200.0])
    assert hi - lo > 1.5


def test_q_infinity_constant_degenerate():
    m, ch = _chart_at_origin("const3")
    lo, hi = q_infinity(m, ch, np.zeros(2), [50.0])
    assert lo == pytest.approx(3.0, abs=1e-12)
    assert hi == pytest.approx(3.0, abs=1e-12)


def test_q_infinity_validates_T_list():
    m, ch = _chart_at_origin("cos_x1")
    with pytest.raises(ValueError):
        q_infinity(m, ch, np.zeros(2), [])
    with pytest.raises(ValueError):
        q_infinity(m, ch, np.zeros(2), [100.0, 50.0])


def test_average_report_text():
    m, ch = _chart_at_origin("cos_x1")
    rep = average_report(m, ch, np.zeros(2), [50.0, 100.0])
    assert rep.torus_avg == pytest.approx(0.0, abs=1e-12)
    assert rep.q_infinity[0] <= rep.torus_avg <= rep.q_infinity[1]
    lines = rep.to_text().splitlines()
    assert lines[0].startswith("# xi")
    assert len(lines) == 6  # 4 header lines + 2 rows
    T, v = lines[-1].split("\t")
    assert float(T) == 100.0
    assert abs(float(v)) < 0.05
