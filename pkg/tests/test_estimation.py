import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coherence_lab import estimation
from coherence_lab.estimation import (DegenerateScaleError, FitBounds, FitFailure, FitResult,
                                      SearchGrid, UnfittableTraceError, batch_fit, fit_trace,
                                      nelder_mead, objective, scale_factor, t2_histogram)
from coherence_lab.experiment import COUNTS, MEASURED, DelayTrace, delay_trace
from coherence_lab.units import DomainError, SystemParams

from .conftest import TAU_75

REFERENCE = SystemParams.from_lab_units(0.03, 60.0, 80.0, TAU_75)


def counts_trace(params, scale=3000.0, phase=0.0, delays=None):
    tr = delay_trace(params, phase, delays)
    return DelayTrace(tr.delays, scale * tr.values, MEASURED, phase, COUNTS)


def fake_result(t2, converged=True):
    p = SystemParams(0.03, t2, 0.0, TAU_75)
    return FitResult(p, 1.0, 0.0, 1, converged, np.zeros(1))


@pytest.fixture(scope="module")
def ref_counts():
    return counts_trace(REFERENCE)


@pytest.fixture(scope="module")
def ref_fit(ref_counts):
    return fit_trace(ref_counts, TAU_75)


# scale factor

def test_scale_factor_examples():
    d = np.arange(0.0, 601.0, 10.0)
    sim = DelayTrace(d, np.full(d.size, 0.4))
    meas = DelayTrace(d, np.full(d.size, 2000.0), MEASURED, quantity=COUNTS)
    assert scale_factor(meas, sim) == pytest.approx(5000.0)
    tail = np.zeros(d.size)
    tail[d >= 550] = [1990, 2000, 2010, 1995, 2005, 2000]
    meas = DelayTrace(d, tail, MEASURED, quantity=COUNTS)
    assert scale_factor(meas, sim) == pytest.approx(2000.0 / 0.4)


def test_scale_factor_degenerate():
    d = np.arange(0.0, 601.0, 10.0)
    meas = DelayTrace(d, np.full(d.size, 100.0), MEASURED, quantity=COUNTS)
    with pytest.raises(DegenerateScaleError):
        scale_factor(meas, DelayTrace(d, np.zeros(d.size)))
    zero = DelayTrace(d, np.zeros(d.size), MEASURED, quantity=COUNTS)
    with pytest.raises(DegenerateScaleError) as info:
        scale_factor(zero, DelayTrace(d, np.full(d.size, 0.3)))
    assert info.value.scale == 0
    short = DelayTrace(np.arange(0.0, 500.0, 10.0), np.ones(50), MEASURED, quantity=COUNTS)
    with pytest.raises(DegenerateScaleError):
        scale_factor(short, DelayTrace(d, np.full(d.size, 0.3)))


# objective

def test_objective_examples(ref_counts):
    total = float(np.sum(ref_counts.values ** 2))
    assert objective(ref_counts, REFERENCE) < 1e-9 * total
    undriven = SystemParams(0.0, 60.0, REFERENCE.delta, TAU_75)
    assert objective(ref_counts, undriven) == math.inf
    wider = SystemParams(REFERENCE.omega_r0, 72.0, REFERENCE.delta, TAU_75)
    assert objective(ref_counts, wider) > objective(ref_counts, REFERENCE)


def test_objective_delta_sign_symmetry(ref_counts):
    mirrored = SystemParams(REFERENCE.omega_r0, REFERENCE.t2_star, -REFERENCE.delta, TAU_75)
    off = SystemParams(0.028, 50.0, REFERENCE.delta, TAU_75)
    off_m = SystemParams(0.028, 50.0, -REFERENCE.delta, TAU_75)
    assert objective(ref_counts, mirrored) == pytest.approx(objective(ref_counts, REFERENCE), abs=1e-6)
    assert objective(ref_counts, off_m) == pytest.approx(objective(ref_counts, off), rel=1e-9)


# simplex

def test_nelder_mead_quadratic():
    target = np.array([0.3, 0.7, 0.5])
    x, f, n, conv = nelder_mead(lambda x: float(np.sum((x - target) ** 2)), [0.5, 0.5, 0.5], 0.1)
    assert conv and n < 600
    np.testing.assert_allclose(x, target, atol=2e-4)


def test_nelder_mead_respects_cube():
    x, _, _, conv = nelder_mead(lambda x: float(np.sum((x - 1.5) ** 2)), [0.5, 0.5], 0.2)
    assert conv
    np.testing.assert_allclose(x, [1.0, 1.0], atol=2e-4)


def test_nelder_mead_budget():
    _, _, n, conv = nelder_mead(lambda x: float(np.sum((x - 0.3) ** 2)), [0.9, 0.9, 0.9], 0.1,
                                xtol=1e-14, max_evals=30)
    assert not conv and n < 40


# bounds

@given(st.floats(0.001, 0.12), st.floats(15.0, 200.0), st.floats(0.0, 300.0))
def test_bounds_unit_round_trip(om, t2, dcm):
    b = FitBounds()
    u = b.to_unit(om, t2, dcm)
    assert np.all((u >= 0) & (u <= 1))
    np.testing.assert_allclose(b.from_unit(u), (om, t2, dcm), rtol=1e-9, atol=1e-9)


def test_bounds_validation():
    with pytest.raises(DomainError):
        FitBounds(omega_r0=(0.1, 0.01))
    with pytest.raises(DomainError):
        FitBounds(t2_star=(0.0, 100.0))


# fitting

def test_fit_recovers_reference(ref_fit):
    r = ref_fit
    assert r.converged
    assert r.params.omega_r0 == pytest.approx(0.03, rel=0.02)
    assert r.params.t2_star == pytest.approx(60.0, rel=0.02)
    assert abs(r.delta_cm - 80.0) < 5.0
    assert r.residuals.shape == (61,)
    assert r.sse == pytest.approx(float(np.sum(r.residuals ** 2)))


def test_fit_is_deterministic(ref_counts, ref_fit):
    again = fit_trace(ref_counts, TAU_75)
    assert again.params == ref_fit.params and again.sse == ref_fit.sse


def test_fit_scale_invariance(ref_counts, ref_fit):
    k = 4.0
    scaled = DelayTrace(ref_counts.delays, k * ref_counts.values, MEASURED, 0.0, COUNTS)
    r = fit_trace(scaled, TAU_75)
    assert r.params.omega_r0 == pytest.approx(ref_fit.params.omega_r0, rel=1e-6)
    assert r.params.t2_star == pytest.approx(ref_fit.params.t2_star, rel=1e-6)
    assert r.scale == pytest.approx(k * ref_fit.scale, rel=1e-6)
    assert r.sse == pytest.approx(k * k * ref_fit.sse, rel=1e-3, abs=1e-6)


def test_fit_flat_trace_lands_inside_window():
    r = fit_trace(counts_trace(SystemParams(0.06, 22.0, 0.0, TAU_75)), TAU_75)
    b = FitBounds()
    assert 20.0 <= r.params.t2_star <= 150.0
    assert b.t2_star[0] < r.params.t2_star < b.t2_star[1]


def test_fit_out_of_phase_trace():
    meas = counts_trace(REFERENCE, phase=math.pi)
    r = fit_trace(meas, TAU_75)
    assert r.phase == math.pi
    assert r.params.omega_r0 == pytest.approx(0.03, rel=0.02)
    assert r.params.t2_star == pytest.approx(60.0, rel=0.02)


def test_fit_preconditions(ref_counts):
    with pytest.raises(DomainError):
        fit_trace(delay_trace(REFERENCE), TAU_75)
    few = DelayTrace(ref_counts.delays[-5:], ref_counts.values[-5:], MEASURED, 0.0, COUNTS)
    with pytest.raises(DomainError):
        fit_trace(few, TAU_75)
    head = DelayTrace(ref_counts.delays[:40], ref_counts.values[:40], MEASURED, 0.0, COUNTS)
    with pytest.raises(DegenerateScaleError):
        fit_trace(head, TAU_75)


def test_fit_all_zero_counts_is_unfittable():
    d = np.arange(0.0, 601.0, 10.0)
    zero = DelayTrace(d, np.zeros(d.size), MEASURED, 0.0, COUNTS)
    with pytest.raises(UnfittableTraceError):
        fit_trace(zero, TAU_75, grid=SearchGrid(4, 4, 2))


def test_fit_reports_non_convergence(monkeypatch, ref_counts):
    real = estimation.nelder_mead
    monkeypatch.setattr(estimation, "nelder_mead",
                        lambda f, x0, s, **kw: real(f, x0, s, max_evals=10))
    r = fit_trace(ref_counts, TAU_75, grid=SearchGrid(8, 4, 2, n_starts=1))
    assert not r.converged


# batch

def test_batch_fit_empty():
    assert batch_fit([], TAU_75) == []


def test_batch_fit_singleton_and_failures(ref_counts, ref_fit):
    d = np.arange(0.0, 601.0, 10.0)
    bad = DelayTrace(d, np.zeros(d.size), MEASURED, 0.0, COUNTS)
    out = batch_fit([ref_counts, bad], TAU_75, jobs=2)
    assert out[0].params == ref_fit.params and out[0].sse == ref_fit.sse
    assert np.array_equal(out[0].residuals, ref_fit.residuals)
    assert isinstance(out[1], FitFailure) and not out[1].converged


# histogram

def test_histogram_examples():
    h = t2_histogram([fake_result(60.0)], 10.0)
    assert list(h.edges) == [60.0, 70.0] and list(h.counts) == [1]
    h = t2_histogram([fake_result(25.0), fake_result(25.0), fake_result(35.0)], 10.0)
    assert list(h.counts) == [2, 1] and h.edges[0] == 25.0
    assert h.mode_bin() == (25.0, 35.0)


def test_histogram_skips_failures():
    h = t2_histogram([fake_result(40.0), fake_result(90.0, converged=False),
                      FitFailure("x")], 10.0)
    assert list(h.counts) == [1]
    assert t2_histogram([], 10.0).counts.size == 0
    with pytest.raises(DomainError):
        t2_histogram([fake_result(40.0)], 0.0)


@settings(max_examples=50)
@given(st.lists(st.floats(15.0, 200.0), min_size=1, max_size=60), st.floats(1.0, 30.0))
def test_histogram_conserves_count(t2s, width):
    h = t2_histogram([fake_result(t) for t in t2s], width)
    assert h.counts.sum() == len(t2s)
    assert np.allclose(np.diff(h.edges), width)
    assert h.edges[0] <= min(t2s) and h.edges[-1] > max(t2s)
