import math

import numpy as np
import pytest

from coherence_lab.experiment import (COHERENCE, MEASURED, SIMULATED, DelayTrace, NoiseModel,
                                      coherence_trace, default_delays, delay_trace, phase_pair,
                                      rabi_curve, synth_counts)
from coherence_lab.integrator import FULL_WINDOW, evolve
from coherence_lab.units import DomainError, PulseProgram, SystemParams, wavenumber_to_angfreq

from .conftest import TAU_75

INF = math.inf
REFERENCE = SystemParams.from_lab_units(0.03, 60.0, 80.0, TAU_75)


def test_default_grid():
    d = default_delays()
    assert d[0] == 0 and d[-1] == 600 and len(d) == 61


def test_delay_trace_matches_evolve_bitwise():
    p = SystemParams(0.035, 45.0, 0.01, TAU_75)
    tr = delay_trace(p, 0.3, [0.0, 140.0, 600.0])
    for d, val, coh in zip(tr.delays, tr.values, tr.coherence):
        s = evolve(p, PulseProgram(d, 0.3))
        assert val == s.rho11
        assert coh == s.v
    one = delay_trace(p, 0.3, [140.0])
    assert one.values[0] == tr.values[1]


def test_delay_trace_without_dephasing_is_flat():
    tr = delay_trace(SystemParams(0.04, INF, 0.0, TAU_75), 0.0, cfg=FULL_WINDOW)
    assert np.ptp(tr.values) < 1e-6
    assert tr.kind == SIMULATED


def test_rabi_ladder_flips_trace():
    lo = delay_trace(SystemParams(0.01, 40.0, 0.0, TAU_75))
    hi = delay_trace(SystemParams(0.06, 40.0, 0.0, TAU_75))
    assert lo.value_at(600) < lo.value_at(0)
    assert hi.value_at(600) > hi.value_at(0)


def test_pi_trace_vanishes_without_dephasing():
    tr = delay_trace(SystemParams(0.05, INF, 0.0, TAU_75), math.pi, cfg=FULL_WINDOW)
    assert np.max(tr.values) < 1e-9


def test_values_in_range():
    p = SystemParams(0.1, 20.0, 0.05, TAU_75)
    tr = delay_trace(p, 1.0)
    assert np.all((tr.values >= 0) & (tr.values <= 1))
    co = coherence_trace(p, 1.0)
    assert np.all(np.abs(co.values) <= 1)
    assert co.quantity == COHERENCE


def test_coherence_zero_without_drive():
    assert np.all(coherence_trace(SystemParams(0.0, 40.0, 0.0, TAU_75)).values == 0)


def _single_pulse(p, cfg=None):
    # one Gaussian of peak omega_r0 == two coincident pulses of half the amplitude
    half = SystemParams(p.omega_r0 / 2, p.t2_star, p.delta, p.tau_p)
    return evolve(half, PulseProgram(0.0), cfg)


@pytest.mark.parametrize("om", [0.01, 0.035])
def test_coherence_asymptote_is_second_pulse_preparation(om):
    p = SystemParams(om, 40.0, 0.0, TAU_75)
    single = _single_pulse(p)
    # first pulse leaves (0, 0, w1) once dephased; the equations are linear, so the
    # second pulse prepares -w1 times the single-pulse coherence
    expected = -single.w * single.v
    v600 = coherence_trace(p).value_at(600)
    assert v600 == pytest.approx(expected, abs=1e-5)
    assert abs(v600) > 1e-3


def test_coherence_decay_constant_tracks_t2():
    p = SystemParams(0.01, 40.0, 0.0, TAU_75)
    # overlap of the pulse tails biases shorter delays
    tr = coherence_trace(p, delays=np.arange(200.0, 401.0, 10.0), cfg=FULL_WINDOW)
    single = _single_pulse(p, FULL_WINDOW)
    excess = np.abs(tr.values - (-single.w * single.v))
    slope = np.polyfit(tr.delays, np.log(excess), 1)[0]
    assert -1 / slope == pytest.approx(40.0, rel=0.05)


def test_phase_pair_limits():
    pair = phase_pair(SystemParams(0.04, INF, 0.0, TAU_75), cfg=FULL_WINDOW)
    assert np.max(pair.out_of_phase.values) < 1e-9
    assert np.ptp(pair.in_phase.values) < 1e-6
    zero = phase_pair(SystemParams(0.0, 40.0, 0.0, TAU_75))
    assert np.all(zero.in_phase.values == 0) and np.all(zero.out_of_phase.values == 0)


def test_phase_pair_reference():
    pair = phase_pair(REFERENCE)
    d = pair.in_phase.delays
    short = d < 60
    assert np.all(pair.out_of_phase.values[short] < pair.in_phase.values[short])
    late = (d >= 300) & (d <= 600)
    rel = np.abs(pair.out_of_phase.values[late] / pair.in_phase.values[late] - 1)
    assert np.max(rel) < 0.02


def test_rabi_curve_area_theorem():
    amps = np.linspace(0.0, 0.05, 11)
    curve = rabi_curve(TAU_75, INF, 0.0, amps, FULL_WINDOW)
    theta = 2 * math.sqrt(2 * math.pi) * amps * TAU_75
    np.testing.assert_allclose(curve.rho11, np.sin(theta / 2) ** 2, atol=1e-6)
    assert curve.rho11[0] == 0


def test_rabi_curve_rises_then_falls():
    amps = np.linspace(0.0, 0.06, 31)
    rho = rabi_curve(TAU_75, 40.0, wavenumber_to_angfreq(80), amps).rho11
    peak = int(np.argmax(rho))
    assert 0 < peak < len(amps) - 1
    assert rho[-1] < rho[peak] - 0.1


def test_rabi_curve_validation():
    with pytest.raises(DomainError):
        rabi_curve(TAU_75, 40.0, 0.0, [0.02, 0.01])


def test_synth_counts_zero_trace():
    tr = DelayTrace(default_delays(), np.zeros(61))
    out = synth_counts(tr, NoiseModel(4800, 1.0, 3))
    assert out.kind == MEASURED and np.all(out.values == 0)


def test_synth_counts_mean_and_reproducibility():
    tr = DelayTrace(np.arange(1000.0), np.ones(1000))
    noise = NoiseModel(4800, 1.0, 11)
    out = synth_counts(tr, noise)
    assert np.all(out.values == np.round(out.values))
    assert abs(out.values[0] - 4800) < 5 * math.sqrt(4800)
    assert abs(out.values.mean() - 4800) < 3 * math.sqrt(4800 / 1000)
    assert synth_counts(tr, noise) == out


def test_doubling_dwell_reduces_relative_noise():
    tr = DelayTrace([0.0], [0.5])
    rel = []
    for dwell in (1.0, 2.0):
        v = np.array([synth_counts(tr, NoiseModel(400, dwell, s)).values[0] for s in range(1000)])
        rel.append(v.std() / v.mean())
    assert rel[0] / rel[1] == pytest.approx(math.sqrt(2), rel=0.1)


def test_noise_model_validation():
    with pytest.raises(DomainError):
        NoiseModel(0.0)
    with pytest.raises(DomainError):
        NoiseModel(100.0, dwell=0.0)
    meas = DelayTrace([0.0, 1.0], [1.0, 2.0], MEASURED, quantity="counts_per_s")
    with pytest.raises(DomainError):
        synth_counts(meas, NoiseModel(100.0))


def test_trace_validation():
    with pytest.raises(DomainError):
        DelayTrace([0.0, 0.0], [0.1, 0.2])
    with pytest.raises(DomainError):
        DelayTrace([0.0, 1.0], [0.1, 1.2])
    with pytest.raises(DomainError):
        DelayTrace([0.0, 1.0], [-1.0, 2.0], MEASURED, quantity="counts_per_s")
    with pytest.raises(DomainError):
        delay_trace(REFERENCE, 0.0, [])
