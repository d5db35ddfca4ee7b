import math

import numpy as np
import pytest

from memcapneuron import (
    DC,
    CircuitState,
    DomainError,
    FixedResistor,
    KernelMemristor,
    ParameterError,
    PiecewiseDC,
    ThresholdMemristor,
    simulate_circuit,
)
from memcapneuron.integrator import (
    CircuitTrace,
    IntegrationError,
    IntegratorConfig,
    StepBudgetExceeded,
    integrate,
    resample,
)
from memcapneuron.signals import detect_spikes

# reference values from tests/oracles/derive.py (scipy DOP853, rtol 1e-11)
REF_OMEGA = {8.0829: 11946.502, 11.547: 18144.465, 15.0111: 8180.2929}
REF_FIRST_SPIKE_8_0829 = 0.00629536
REF_STATIC_7_852 = (2.17994406, 1.34778112)
REF_REST_X = 1.3732970400697908e-05


def test_config_validation():
    with pytest.raises(ParameterError):
        IntegratorConfig(rtol=0)
    with pytest.raises(ParameterError):
        IntegratorConfig(h_init=1.0, h_max=0.1)
    assert IntegratorConfig().tightened(10).rtol == pytest.approx(1e-9)


def test_exponential_decay():
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-12)
    traj = integrate(lambda t, y: -y, [1.0], (0.0, 1.0), cfg)
    assert abs(traj.states[-1, 0] - math.exp(-1)) < 10 * cfg.rtol


def test_harmonic_oscillator_period():
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    traj = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], (0.0, 2 * math.pi), cfg)
    assert np.abs(traj.states[-1] - [1.0, 0.0]).max() < 1e3 * cfg.rtol


def test_dense_output_linear():
    traj = integrate(lambda t, y: np.ones(1), [0.0], (0.0, 1.0))
    t, y = resample(traj, 0.1)
    assert np.allclose(t, np.arange(11) * 0.1)
    assert np.allclose(y[:, 0], t, atol=1e-14)


def test_resample_at_step_times_returns_stored_states():
    traj = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], (0.0, 3.0))
    assert np.abs(traj.evaluate(traj.times) - traj.states).max() < 1e-12


def test_dense_output_accuracy():
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    traj = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], (0.0, 5.0), cfg)
    t = np.linspace(0, 5, 997)
    assert np.abs(traj.evaluate(t)[:, 0] - np.cos(t)).max() < 1e-7


def test_resample_sine_feeds_dft():
    from memcapneuron.signals import single_sided_spectrum

    w0 = 2 * math.pi * 4
    traj = integrate(lambda t, y: np.array([w0 * y[1], -w0 * y[0]]), [0.0, 1.0], (0.0, 1.0),
                     IntegratorConfig(rtol=1e-10, atol=1e-12))
    t, y = resample(traj, 1 / 64)
    spec = single_sided_spectrum(y[:-1, 0], 1 / 64)
    assert np.argmax(spec.P1) == 4
    assert spec.P1[4] == pytest.approx(1.0, rel=1e-3)


def test_evaluate_outside_interval():
    traj = integrate(lambda t, y: -y, [1.0], (0.0, 1.0))
    with pytest.raises(ValueError):
        traj.evaluate(1.5)


def _fixed_step(p, h, T=2e-3):
    cfg = IntegratorConfig(rtol=1e3, atol=1e3, h_init=h, h_max=h)
    tr = simulate_circuit(p, DC(8.0829), FixedResistor(), CircuitState(0, 0), T, cfg, dt_out=T / 2)
    return np.array([tr.x[-1], tr.q[-1]])


def test_step_doubling_order(p):
    # fixed steps h, h/2, h/4 on the circuit: successive differences shrink by 2**order
    y = [_fixed_step(p, h) for h in (2e-5, 1e-5, 5e-6)]
    e1 = np.abs(y[0] - y[1]).max()
    e2 = np.abs(y[1] - y[2]).max()
    order = math.log2(e1 / e2)
    assert order >= 4.0


def test_tolerance_convergence_static(p):
    # static terminal state converges to the reference as tolerances tighten
    errs = []
    for rtol in (1e-6, 1e-8, 1e-10):
        tr = simulate_circuit(p, DC(7.852), FixedResistor(), CircuitState(0, 0), 0.5,
                              IntegratorConfig(rtol, rtol * 1e-3), dt_out=1e-3)
        errs.append(max(abs(tr.x[-1] - REF_STATIC_7_852[0]), abs(tr.q[-1] - REF_STATIC_7_852[1])))
    assert errs[-1] < 1e-7
    assert errs[0] < 1e-4


def test_halving_tolerance_spike_period(trace_8_0829, p):
    cfg = IntegratorConfig().tightened(2)
    tr2 = simulate_circuit(p, DC(8.0829), FixedResistor(), CircuitState(0, 0), 1.5, cfg)
    a = detect_spikes(trace_8_0829, p).times
    b = detect_spikes(tr2, p).times
    assert len(a) == len(b)
    assert np.abs(np.diff(a[-100:]).mean() - np.diff(b[-100:]).mean()) < 1e-9


def test_spiking_against_reference(trace_8_0829, p):
    t = detect_spikes(trace_8_0829, p).times
    assert t[0] == pytest.approx(REF_FIRST_SPIKE_8_0829, abs=2e-6)
    isi = np.diff(t[len(t) // 3:])
    assert 2 * math.pi / isi.mean() == pytest.approx(REF_OMEGA[8.0829], rel=1e-5)
    assert trace_8_0829.x.max() > p.x_c


@pytest.mark.parametrize("V, init", [(11.547, (6.6, 2.0207)), (15.0111, (0.0, 0.0))])
def test_spike_frequency_against_reference(p, V, init):
    tr = simulate_circuit(p, DC(V), FixedResistor(), CircuitState(*init), 1.5)
    t = detect_spikes(tr, p).times
    isi = np.diff(t[len(t) // 3:])
    assert 2 * math.pi / isi.mean() == pytest.approx(REF_OMEGA[V], rel=1e-5)


def test_static_regime(p):
    tr = simulate_circuit(p, DC(7.852), FixedResistor(), CircuitState(0, 0), 0.5, dt_out=1e-5)
    assert len(detect_spikes(tr, p)) == 0
    from memcapneuron import vector_field

    fx, fq = vector_field(p, DC(7.852), FixedResistor(), CircuitState(tr.x[-1], tr.q[-1]))
    assert abs(fx) < 1e-3 and abs(fq) < 1e-3


@pytest.mark.parametrize("init", [(0.0, 0.0), (6.0, 2.5), (3.0, 0.0), (6.0, 0.0), (0.0, 2.5)])
def test_zero_drive_relaxes_to_rest(p, init):
    tr = simulate_circuit(p, DC(0.0), FixedResistor(), CircuitState(*init), 0.5, dt_out=1e-3)
    assert tr.x[-1] == pytest.approx(REF_REST_X, abs=1e-9)
    assert abs(tr.q[-1]) < 1e-9


def test_trace_columns(trace_8_0829, p):
    tr = trace_8_0829
    assert np.allclose(tr.V_C, tr.q * (p.d - tr.x))
    assert np.allclose(tr.I_r, (tr.V_drive - tr.V_C) / 1e-3)
    assert np.all(tr.r_series == 1e-3)
    assert np.allclose(np.diff(tr.t), tr.dt)


def test_trace_window_and_decimate(trace_8_0829):
    w = trace_8_0829.window(1.0)
    assert w.t[0] == pytest.approx(1.0)
    d = trace_8_0829.decimate(1e-4)
    assert d.dt == pytest.approx(1e-4)
    assert np.array_equal(d.x, trace_8_0829.x[::100])


def test_csv_round_trip(tmp_path, p):
    tr = simulate_circuit(p, DC(8.0829), FixedResistor(), CircuitState(0, 0), 0.01, dt_out=1e-4)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = CircuitTrace.from_csv(path)
    for c in CircuitTrace.COLUMNS:
        assert np.array_equal(getattr(back, c), getattr(tr, c))


def test_t_from_drops_transient(p):
    tr = simulate_circuit(p, DC(8.0829), FixedResistor(), CircuitState(0, 0), 0.02, dt_out=1e-5, t_from=0.01)
    assert tr.t[0] == pytest.approx(0.01)
    assert tr.t[-1] == pytest.approx(0.02)


def test_piecewise_drive_switches(p):
    drive = PiecewiseDC(((0.01, 0.0), (0.01, 5.0)))
    tr = simulate_circuit(p, drive, FixedResistor(), CircuitState(0, 0), 0.02, dt_out=1e-4)
    assert np.all(tr.V_drive[tr.t < 0.0099] == 0.0)
    assert np.all(tr.V_drive[tr.t > 0.0101] == 5.0)
    assert tr.q[tr.t < 0.0099].max() < 1e-12


def test_step_budget(p):
    with pytest.raises(StepBudgetExceeded, match="state="):
        simulate_circuit(p, DC(8.0), FixedResistor(), CircuitState(0, 0), 0.05, IntegratorConfig(max_steps=10))
    assert issubclass(StepBudgetExceeded, IntegrationError)


def test_domain_error_reports_state(p):
    # a coarse fixed step at the first spike throws the plate into the wall
    cfg = IntegratorConfig(rtol=1e3, atol=1e3, h_init=4e-5, h_max=4e-5)
    with pytest.raises(DomainError, match="state="):
        simulate_circuit(p, DC(8.0829), FixedResistor(), CircuitState(0, 0), 8e-3, cfg, dt_out=4e-3)


# -- memristor series elements ----------------------------------------------------


def _brute_kernel(tr, km):
    """r(t) from the integro-differential law by direct convolution quadrature."""
    t, r, I = tr.t, tr.r_series, tr.I_r
    u = km.r0 - r
    conv = np.zeros(len(t))
    for i in range(1, len(t)):
        conv[i] = np.trapezoid(np.exp(-km.gamma_kernel * (t[i] - t[: i + 1])) * u[: i + 1], t[: i + 1])
    drdt = -km.alpha1 * I + km.lambda1 * conv
    return r[0] + np.concatenate([[0.0], np.cumsum(0.5 * (drdt[1:] + drdt[:-1]) * np.diff(t))])


@pytest.mark.parametrize("gamma_kernel, r_min", [(0.0, 1e-9), (2000.0, 0.8e-3)])
def test_kernel_memristor_matches_convolution(p, gamma_kernel, r_min):
    km = KernelMemristor(3.4641e-6, 1.6e5, gamma_kernel, r_min=r_min)
    tr = simulate_circuit(p, DC(13.8564), km, CircuitState(0, 0), 0.05, dt_out=5e-6)
    # compare where the floor projection is inactive; the integral law has no floor
    hit = np.flatnonzero(tr.r_series <= km.r_min * (1 + 1e-9))
    n = hit[0] if len(hit) else len(tr)
    assert n > 1000
    rb = _brute_kernel(tr, km)
    assert np.max(np.abs(rb[:n] - tr.r_series[:n]) / tr.r_series[:n]) < 1e-3


def test_kernel_memristor_floor(p):
    km = KernelMemristor(3.4641e-6, 1.6e5)
    tr = simulate_circuit(p, DC(13.8564), km, CircuitState(0, 0), 0.05, dt_out=1e-5)
    assert tr.r_series.min() >= km.r_min
    assert tr.r_series[0] == km.init_r


def test_threshold_memristor_runs(p):
    tm = ThresholdMemristor(1.6e4, 2000.0, 10.3923, 1000.0)
    tr = simulate_circuit(p, DC(7.9674), tm, CircuitState(0, 0), 0.02, dt_out=1e-5)
    assert tr.r_series.min() >= tm.r_min
    assert np.all(np.isfinite(tr.x))
