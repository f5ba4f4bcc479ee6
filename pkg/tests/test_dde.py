"""Tests for the method-of-steps delay equation integrator."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ddlab.dde import (AffineCircleDelayField, History, LinearDelayField,
                       PiecewiseConstantUniform, SineFeedbackField,
                       TentDelayField, Trajectory, convergence_order,
                       eval_field, fundamental_history, integrate,
                       integrate_batch, make_history, state_dim)
from ddlab.errors import DivergenceError
from ddlab.gaussian import LinearDdeParams, fundamental_solution
from ddlab.tabular import read_csv


# ---------------------------------------------------------------------------
# fields and right-hand sides


def test_tent_field_rhs_values():
    f = TentDelayField(13.0, 10.0)
    assert eval_field(f, 0.1, 0.25) == pytest.approx(-1.3 + 2.5, abs=1e-14)
    assert eval_field(f, 0.1, 0.6) == pytest.approx(-1.3 + 4.0, abs=1e-14)
    # both branches agree at the fold
    assert eval_field(f, 0.0, 0.5) == pytest.approx(5.0, abs=1e-14)


def test_linear_field_rhs_value():
    assert eval_field(LinearDelayField(0.0, -1.0), 0.3, 0.5) == -0.5
    assert eval_field(LinearDelayField(2.0, 0.5), 1.0, -2.0) == pytest.approx(1.0)


def test_circle_field_wraps_whole_bracket():
    f = AffineCircleDelayField(10.0, 0.5, 0.567)
    # 0.5*0.8 + 0.567 + 0.1 = 1.067 wraps to 0.067, scaled by alpha
    assert eval_field(f, 0.0, 0.8, 0.0, 0.1) == pytest.approx(0.67, abs=1e-12)
    # without noise the same bracket stays below one
    assert eval_field(f, 0.0, 0.8) == pytest.approx(9.67, abs=1e-12)
    # wrap at exactly one lands on zero
    assert eval_field(f, 0.0, 0.866, 0.0, 0.0) == pytest.approx(
        -0.0 + 10.0 * math.fmod(0.5 * 0.866 + 0.567, 1.0), abs=1e-12)


def test_sine_feedback_rhs_components():
    f = SineFeedbackField(1.0, 1.0)
    out = eval_field(f, np.array([0.0, 0.0]), np.array([0.0, 0.25]))
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)
    out = eval_field(f, np.array([3.0, -0.5]), np.array([0.0, 0.0]))
    np.testing.assert_allclose(out, [-0.5, 0.5], atol=1e-15)


def test_eval_field_broadcasts_over_batches():
    f = TentDelayField(2.0, 3.0)
    x = np.array([[0.1], [0.2]])
    xd = np.array([[0.4], [0.9]])
    out = eval_field(f, x, xd)
    np.testing.assert_allclose(out, [[-0.2 + 1.2], [-0.4 + 0.3]])


def test_field_validation():
    with pytest.raises(ValueError):
        TentDelayField(0.0, 1.0)
    with pytest.raises(ValueError):
        AffineCircleDelayField(1.0, 1.5, 0.5)
    with pytest.raises(ValueError):
        SineFeedbackField(1.0, -1.0)
    with pytest.raises(TypeError):
        eval_field(object(), 0.0, 0.0)


def test_state_dim():
    assert state_dim(LinearDelayField(0.0, 1.0)) == 1
    assert state_dim(SineFeedbackField(1.0, 2.0)) == 2


# ---------------------------------------------------------------------------
# histories


def test_history_grid_properties():
    h = make_history(lambda s: 2.0 * s, 2.0, 8)
    assert h.m == 8
    assert h.step == pytest.approx(0.25)
    assert h.dim == 1
    np.testing.assert_allclose(h.samples, 2.0 * np.linspace(-2.0, 0.0, 9))


def test_history_vector_states():
    h = make_history(lambda s: np.array([s, -s]), 1.0, 4)
    assert h.samples.shape == (5, 2)
    assert h.dim == 2


def test_fundamental_history_is_zero_with_unit_jump():
    h = fundamental_history(1.0, 16)
    assert np.all(h.samples[:-1] == 0.0)
    assert h.samples[-1] == 1.0


def test_history_validation():
    with pytest.raises(ValueError):
        History(0.0, np.zeros(5))
    with pytest.raises(ValueError):
        History(1.0, np.zeros(2))
    with pytest.raises(ValueError):
        History(1.0, np.array([0.0, np.nan, 0.0]))


def test_integrate_rejects_bad_spans():
    h = make_history(lambda s: 1.0, 1.0, 8)
    with pytest.raises(ValueError):
        integrate(LinearDelayField(0.0, 0.5), h, 1.3)  # not a whole step count
    with pytest.raises(ValueError):
        integrate(LinearDelayField(0.0, 0.5), make_history(lambda s: 1.0, 1.0, 3), 1.0)


# ---------------------------------------------------------------------------
# exact and closed-form solutions


def test_pure_delay_datum_is_integrated_exactly():
    # x' = x(t-1) from the unit-jump datum: constant, then a ramp, then
    # piecewise polynomials that the stencils and the update reproduce
    # exactly up to roundoff.
    tr = integrate(LinearDelayField(0.0, 1.0), fundamental_history(1.0, 512), 4.0)
    m = 512
    assert np.all(tr.x[:m + 1] == 1.0)  # pre-jump reads contribute nothing
    assert tr.x[2 * m] == pytest.approx(2.0, abs=1e-12)
    assert tr.x[-1] == pytest.approx(1.0 + 3.0 + 2.0 + 1.0 / 6.0, abs=1e-10)


def test_fundamental_agreement_with_linear_theory():
    for a, b in [(0.0, 1.0), (-1.0, 0.5), (0.5, -1.0)]:
        tr = integrate(LinearDelayField(a, b), fundamental_history(1.0, 512), 4.0)
        expected = fundamental_solution(LinearDdeParams(a, b, 1.0), tr.times)
        assert np.max(np.abs(tr.x - expected)) < 1e-6


def test_delay_free_reduction_matches_exponential():
    tr = integrate(LinearDelayField(-0.7, 0.0),
                   make_history(lambda s: 1.0, 1.0, 128), 5.0)
    assert np.max(np.abs(tr.x - np.exp(-0.7 * tr.times))) < 1e-10


def test_cosine_solution_over_four_periods():
    # With tau = pi/2 the delayed negative feedback differentiates cosine.
    tau = math.pi / 2
    tr = integrate(LinearDelayField(0.0, -1.0), make_history(np.cos, tau, 256),
                   8 * math.pi)
    assert np.max(np.abs(tr.x - np.cos(tr.times))) < 1e-5


def test_history_offset_start_time():
    # Starting the clock at t0 != 0 shifts everything rigidly.
    f = LinearDelayField(-0.4, 0.3)
    h0 = make_history(lambda s: np.cos(s), 1.0, 32)
    h1 = make_history(lambda s: np.cos(s - 2.5), 1.0, 32, t_now=2.5)
    t_a = integrate(f, h0, 3.0)
    t_b = integrate(f, h1, 3.0)
    assert t_b.times[0] == pytest.approx(2.5)
    np.testing.assert_array_equal(t_a.states, t_b.states)


# ---------------------------------------------------------------------------
# convergence


def test_order_pure_ode():
    order = convergence_order(LinearDelayField(-1.0, 0.0), lambda s: 1.0, 2.0,
                              tau=1.0, m0=8)
    assert abs(order - 4.0) <= 0.3


def test_order_smooth_linear_delay():
    order = convergence_order(LinearDelayField(-1.0, 0.5),
                              lambda s: 2.0 + math.sin(s), 2.0, tau=1.0, m0=16)
    assert order >= 3.5


def test_order_cosine():
    order = convergence_order(LinearDelayField(0.0, -1.0), np.cos, math.pi,
                              tau=math.pi / 2, m0=16)
    assert abs(order - 4.0) <= 0.5


def test_order_tent_field_degrades_but_stays_positive():
    # The fold of the tent drive crosses grid cells at h-dependent spots,
    # so the classical order is lost; the scheme still converges.
    order = convergence_order(TentDelayField(2.0, 3.0), lambda s: 0.7, 3.0,
                              tau=1.0, m0=32)
    assert order >= 1.0


def test_order_refines_history_samples():
    h = make_history(lambda s: 1.0, 1.0, 16)
    order = convergence_order(LinearDelayField(-0.5, 0.25), h, 2.0)
    assert order >= 3.5


def test_order_rejects_noisy_fields_and_missing_tau():
    noisy = AffineCircleDelayField(10.0, 0.5, 0.567,
                                   PiecewiseConstantUniform(0.0, 0.1, 1.0))
    with pytest.raises(ValueError):
        convergence_order(noisy, lambda s: 0.5, 2.0, tau=1.0)
    with pytest.raises(ValueError):
        convergence_order(LinearDelayField(0.0, 0.5), lambda s: 0.5, 2.0)


# ---------------------------------------------------------------------------
# noise


def test_constant_noise_equals_shifted_offset():
    h0 = make_history(lambda s: 0.6, 1.0, 64)
    withnoise = AffineCircleDelayField(
        10.0, 0.5, 0.567, PiecewiseConstantUniform(0.3, 0.3, 1.0))
    shifted = AffineCircleDelayField(10.0, 0.5, 0.867)
    t1 = integrate(withnoise, h0, 8.0, seed=1)
    t2 = integrate(shifted, h0, 8.0)
    assert np.max(np.abs(t1.x - t2.x)) < 1e-12


def test_noisy_runs_reproduce_by_seed():
    f = AffineCircleDelayField(10.0, 0.5, 0.567,
                               PiecewiseConstantUniform(0.0, 0.2, 1.0))
    h0 = make_history(lambda s: 0.6, 1.0, 64)
    a = integrate(f, h0, 20.0, seed=42).x
    b = integrate(f, h0, 20.0, seed=42).x
    c = integrate(f, h0, 20.0, seed=43).x
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_noise_levels_pass_uniformity_check():
    proc = PiecewiseConstantUniform(0.0, 0.2, 1.0)
    vals = proc.segment_values(np.random.default_rng(0), 10_000)
    assert vals.min() >= 0.0 and vals.max() <= 0.2
    stat = stats.kstest(vals, "uniform", args=(0.0, 0.2))
    assert stat.pvalue > 0.01


def test_noise_process_validation():
    with pytest.raises(ValueError):
        PiecewiseConstantUniform(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        PiecewiseConstantUniform(0.0, 1.0, 0.0)


def test_noise_table_shape_is_checked():
    f = AffineCircleDelayField(10.0, 0.5, 0.567,
                               PiecewiseConstantUniform(0.0, 0.2, 1.0))
    samples = np.full((2, 65), 0.5)
    with pytest.raises(ValueError):
        integrate_batch(f, samples, 1.0, 8.0)  # missing table
    with pytest.raises(ValueError):
        integrate_batch(f, samples, 1.0, 8.0, noise_table=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        integrate_batch(LinearDelayField(0.0, 0.5), samples, 1.0, 8.0,
                        noise_table=np.zeros((2, 9)))


# ---------------------------------------------------------------------------
# batching, divergence, trajectories


def test_batch_matches_single_runs_bitwise():
    field = TentDelayField(4.0, 5.0)
    hists = [make_history(lambda s, c=c: c + 0.1 * np.sin(3 * s), 1.0, 64)
             for c in (0.3, 0.55, 0.8)]
    singles = [integrate(field, h, 6.0).states for h in hists]
    nodes = []
    integrate_batch(field, np.stack([h.samples for h in hists]), 1.0, 6.0,
                    observer=lambda k, y: nodes.append(y))
    stacked = np.transpose(np.array(nodes), (1, 0, 2))
    for i in range(3):
        assert np.array_equal(stacked[i], singles[i])


def test_batch_final_states_match_observer_tail():
    field = LinearDelayField(-0.3, 0.2)
    samples = np.vstack([np.linspace(0.2, 0.8, 17), np.full(17, 0.5)])
    last = {}
    final = integrate_batch(field, samples, 1.0, 2.0,
                            observer=lambda k, y: last.update(y=y))
    np.testing.assert_array_equal(final, last["y"])
    assert final.shape == (2, 1)


def test_divergence_raises_with_time_and_index():
    field = LinearDelayField(50.0, 0.0)
    h = make_history(lambda s: 1.0, 1.0, 8)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as err:
            integrate(field, h, 40.0)
    assert 0.0 < err.value.time <= 40.0
    assert err.value.index == 0
    assert "non-finite" in str(err.value)


def test_sine_feedback_velocity_stays_bounded():
    # |v'| <= -gamma v + 1, so |v| can never overshoot max(|v0|, 1/gamma).
    f = SineFeedbackField(1.0, 1.0)
    h = make_history(lambda s: np.array([0.0, 0.2]), 1.0, 32)
    tr = integrate(f, h, 40.0)
    assert np.abs(tr.v).max() <= 1.0 + 1e-9
    # position is the integral of velocity
    cd = (tr.x[2:] - tr.x[:-2]) / (2 * tr.step) - tr.v[1:-1]
    assert np.abs(cd).max() < 5e-3


def test_trajectory_csv_round_trip(tmp_path):
    tr = integrate(LinearDelayField(-0.4, 0.1),
                   make_history(lambda s: 1.0 + s, 1.0, 16), 2.0)
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    header, cols = read_csv(path)
    assert header == ["t", "x"]
    np.testing.assert_array_equal(cols[0], tr.times)
    np.testing.assert_array_equal(cols[1], tr.x)


def test_vector_trajectory_csv_has_velocity_column(tmp_path):
    tr = integrate(SineFeedbackField(1.0, 2.0),
                   make_history(lambda s: np.array([0.0, 0.1]), 1.0, 16), 2.0)
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    header, cols = read_csv(path)
    assert header == ["t", "x", "v"]
    np.testing.assert_array_equal(cols[2], tr.v)


def test_trajectory_accessors():
    tr = Trajectory(0.0, 0.5, np.array([1.0, 2.0, 3.0]))
    assert tr.states.shape == (3, 1)
    np.testing.assert_allclose(tr.times, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        tr.v


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-1.2, 0.8), b=st.floats(-1.2, 1.2),
       c=st.floats(0.1, 3.0))
def test_linear_integration_is_linear_in_the_datum(a, b, c):
    field = LinearDelayField(a, b)
    base = make_history(lambda s: math.sin(s) + 0.3, 1.0, 16)
    scaled = History(1.0, c * base.samples, 0.0)
    x1 = integrate(field, base, 2.0).x
    x2 = integrate(field, scaled, 2.0).x
    np.testing.assert_allclose(c * x1, x2, rtol=1e-10, atol=1e-12)
