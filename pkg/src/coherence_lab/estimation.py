"""Fitting simulated rho11(delay) curves to measured count-rate traces.

The simulated curve is scaled so that its value at 600 fs matches the mean
count rate measured between 550 and 600 fs; the free parameters (peak Rabi
frequency, pure dephasing time, detuning) are then chosen to minimise the
sum of squared residuals. A coarse grid over the bounds is screened first;
downhill-simplex refinement then runs from several of the best, mutually
separated grid cells and the lowest result is kept.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .experiment import MEASURED, DelayTrace
from .integrator import IntegratorConfig, evolve_many
from .units import DomainError, SystemParams, angfreq_to_wavenumber, wavenumber_to_angfreq

log = logging.getLogger(__name__)

TAIL_WINDOW = (550.0, 600.0)
ANCHOR_DELAY = 600.0
MIN_ANCHOR_RHO = 1e-12


class DegenerateScaleError(DomainError):
    """The measured tail or the simulated anchor cannot fix the scale."""

    def __init__(self, message, scale=float("nan")):
        super().__init__(message)
        self.scale = scale


class UnfittableTraceError(DomainError):
    """No candidate in the search grid produced a usable scale."""


@dataclass(frozen=True)
class FitBounds:
    """Search box. ``delta_cm`` is in cm^-1 and searched non-negative only."""

    omega_r0: tuple[float, float] = (0.001, 0.12)
    t2_star: tuple[float, float] = (15.0, 200.0)
    delta_cm: tuple[float, float] = (0.0, 300.0)

    def __post_init__(self):
        for name in ("omega_r0", "t2_star", "delta_cm"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise DomainError(f"{name} bounds must satisfy lo < hi")
            if lo < 0 or (name != "delta_cm" and lo <= 0):
                raise DomainError(f"{name} bounds must be positive")

    def to_unit(self, omega_r0, t2_star, delta_cm) -> np.ndarray:
        """Map physical values into the unit cube (log scale for T2*)."""
        (wl, wh), (tl, th), (dl, dh) = self.omega_r0, self.t2_star, self.delta_cm
        return np.array([
            (omega_r0 - wl) / (wh - wl),
            math.log(t2_star / tl) / math.log(th / tl),
            (delta_cm - dl) / (dh - dl),
        ])

    def from_unit(self, x) -> tuple[float, float, float]:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        (wl, wh), (tl, th), (dl, dh) = self.omega_r0, self.t2_star, self.delta_cm
        return (float(wl + x[0] * (wh - wl)),
                float(tl * (th / tl) ** x[1]),
                float(dl + x[2] * (dh - dl)))


@dataclass(frozen=True, eq=False)
class FitResult:
    params: SystemParams
    scale: float
    sse: float
    n_evals: int
    converged: bool
    residuals: np.ndarray
    phase: float = 0.0

    @property
    def delta_cm(self) -> float:
        return angfreq_to_wavenumber(self.params.delta)


@dataclass(frozen=True)
class FitFailure:
    """Placeholder for a trace that could not be fitted in a batch."""

    error: str
    converged: bool = field(default=False, init=False)


def _tail_mean(measured: DelayTrace) -> float:
    lo, hi = TAIL_WINDOW
    mask = (measured.delays >= lo) & (measured.delays <= hi)
    if not mask.any():
        raise DegenerateScaleError("no measured points between 550 and 600 fs")
    return float(measured.values[mask].mean())


def scale_factor(measured: DelayTrace, simulated: DelayTrace) -> float:
    """Counts/s per unit rho11, anchoring the simulation at 600 fs."""
    tail = _tail_mean(measured)
    try:
        anchor = simulated.value_at(ANCHOR_DELAY)
    except KeyError:
        raise DegenerateScaleError("simulated trace has no point at 600 fs") from None
    if anchor <= MIN_ANCHOR_RHO:
        raise DegenerateScaleError(f"simulated rho11(600 fs) = {anchor:.3g} is degenerate")
    scale = tail / anchor
    if not scale > 0:
        raise DegenerateScaleError("measured tail mean is zero", scale=scale)
    return scale


def _sim_grid(measured: DelayTrace):
    """Measured delays plus the 600 fs anchor; returns (grid, anchor index, data index)."""
    grid = np.union1d(measured.delays, [ANCHOR_DELAY])
    return grid, int(np.searchsorted(grid, ANCHOR_DELAY)), np.searchsorted(grid, measured.delays)


def _sse_batch(measured: DelayTrace, rho: np.ndarray, anchor_idx, data_idx):
    """SSE for each row of ``rho`` (candidates x grid); inf where the scale is degenerate."""
    tail = _tail_mean(measured)
    anchor = rho[:, anchor_idx]
    ok = anchor > MIN_ANCHOR_RHO
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(ok, tail / np.where(ok, anchor, 1.0), 0.0)
    ok &= scale > 0
    model = scale[:, None] * rho[:, data_idx]
    sse = np.sum((model - measured.values) ** 2, axis=1)
    return np.where(ok, sse, np.inf), scale


def _simulate_rho(measured, omega_r0, t2_star, delta, tau_p, phase, cfg):
    grid, anchor_idx, data_idx = _sim_grid(measured)
    omega_r0, t2_star, delta = (np.asarray(a, dtype=float)[:, None]
                                for a in (omega_r0, t2_star, delta))
    states = evolve_many(omega_r0, t2_star, delta, tau_p, grid[None, :], phase, cfg)
    return 0.5 * (1.0 + states[..., 2]), anchor_idx, data_idx


def objective(measured: DelayTrace, candidate: SystemParams, phase: float = 0.0,
              cfg: IntegratorConfig | None = None) -> float:
    """Sum of squared residuals of the scaled simulation; +inf if the scale degenerates."""
    rho, ai, di = _simulate_rho(measured, [candidate.omega_r0], [candidate.t2_star],
                                [candidate.delta], candidate.tau_p, phase, cfg)
    sse, _ = _sse_batch(measured, rho, ai, di)
    return float(sse[0])


def _check_fittable(measured: DelayTrace):
    if measured.kind != MEASURED:
        raise DomainError("fit_trace needs a measured trace")
    if len(measured) < 10:
        raise DomainError(f"need at least 10 measured points, got {len(measured)}")
    _tail_mean(measured)


def nelder_mead(func, x0, step, *, xtol=1e-4, max_evals=600):
    """Downhill simplex minimisation of ``func`` over the unit cube.

    Points are clipped onto the cube before evaluation. Converged when every
    vertex lies within ``xtol`` (max-norm) of the best one.

    Returns ``(x_best, f_best, n_evals, converged)``.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), 0.0, 1.0)
    n = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    sim = [x0]
    for i in range(n):
        e = np.zeros(n)
        # step inwards when sitting on the upper face
        e[i] = step[i] if x0[i] + step[i] <= 1.0 else -step[i]
        sim.append(np.clip(x0 + e, 0.0, 1.0))
    sim = np.array(sim)
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        return func(np.clip(x, 0.0, 1.0))

    fs = np.array([f(x) for x in sim])
    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if np.max(np.abs(sim[1:] - sim[0])) <= xtol:
            converged = True
            break
        if evals >= max_evals:
            break
        centroid = sim[:-1].mean(axis=0)
        xr = np.clip(centroid + (centroid - sim[-1]), 0.0, 1.0)
        fr = f(xr)
        if fr < fs[0]:
            xe = np.clip(centroid + 2.0 * (centroid - sim[-1]), 0.0, 1.0)
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        for i in range(1, n + 1):
            sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
            fs[i] = f(sim[i])
    return np.clip(sim[0], 0.0, 1.0), float(fs[0]), evals, converged


# RK4 at 0.5 fs stays within 1e-6 of the 0.05 fs readout for omega_r0 <= 0.12 rad/fs
FIT_CONFIG = IntegratorConfig(step=0.5)


@dataclass(frozen=True)
class SearchGrid:
    """Resolution of the global stage and how cheaply it is screened.

    The omega_r0 axis must be fine enough that neighbouring cells differ by
    well under one radian of pulse area, otherwise the best cell can sit in
    a Rabi-aliased basin. Screening integrates with ``step`` on every
    ``delay_stride``-th measured delay; simplex refinement is started from
    the ``n_starts`` best mutually non-adjacent cells.
    """

    n_omega: int = 56
    n_t2: int = 16
    n_delta: int = 8
    step: float = 2.0
    delay_stride: int = 2
    n_starts: int = 4

    def __post_init__(self):
        if min(self.n_omega, self.n_t2, self.n_delta) < 2:
            raise DomainError("each grid axis needs at least two points")
        if not self.step > 0 or self.delay_stride < 1 or self.n_starts < 1:
            raise DomainError("invalid screening settings")

    @property
    def shape(self):
        return (self.n_omega, self.n_t2, self.n_delta)

    def axes(self):
        return tuple(np.linspace(0.0, 1.0, n) for n in self.shape)


def _screening_subset(measured: DelayTrace, stride: int) -> DelayTrace:
    if stride == 1:
        return measured
    keep = np.zeros(len(measured), dtype=bool)
    keep[::stride] = True
    lo, hi = TAIL_WINDOW
    keep |= (measured.delays >= lo) & (measured.delays <= hi)
    return DelayTrace(measured.delays[keep], measured.values[keep], MEASURED,
                      measured.phase, measured.quantity)


def _pick_starts(sse: np.ndarray, shape, n_starts: int) -> list[int]:
    """Indices of the lowest finite cells, skipping neighbours of ones already taken."""
    picked, coords = [], []
    for i in np.argsort(sse, kind="stable"):
        if not np.isfinite(sse[i]) or len(picked) == n_starts:
            break
        c = np.array(np.unravel_index(i, shape))
        if any(np.max(np.abs(c - o)) <= 1 for o in coords):
            continue
        picked.append(int(i))
        coords.append(c)
    return picked


def fit_trace(measured: DelayTrace, tau_p: float, bounds: FitBounds | None = None,
              phase: float | None = None, cfg: IntegratorConfig | None = None,
              grid: SearchGrid | None = None) -> FitResult:
    """Best-fit (omega_r0, T2*, |delta|) for one measured trace.

    ``tau_p`` is fixed by the dataset; ``phase`` defaults to the trace's own.
    Refinement integrates with ``cfg`` (default :data:`FIT_CONFIG`).
    """
    bounds = bounds or FitBounds()
    grid = grid or SearchGrid()
    cfg = cfg or FIT_CONFIG
    phase = measured.phase if phase is None else phase
    _check_fittable(measured)
    if not tau_p > 0:
        raise DomainError("tau_p must be positive")

    xs = np.array(np.meshgrid(*grid.axes(), indexing="ij")).reshape(3, -1).T
    phys = np.array([bounds.from_unit(x) for x in xs])
    screen_cfg = IntegratorConfig(step=max(min(grid.step, tau_p / 5.0), cfg.step),
                                  start_offset=cfg.start_offset,
                                  readout_offset=cfg.readout_offset)
    subset = _screening_subset(measured, grid.delay_stride)
    rho, ai, di = _simulate_rho(subset, phys[:, 0], phys[:, 1],
                                wavenumber_to_angfreq(phys[:, 2]), tau_p, phase, screen_cfg)
    sse_grid, _ = _sse_batch(subset, rho, ai, di)
    starts = _pick_starts(sse_grid, grid.shape, grid.n_starts)
    if not starts:
        raise UnfittableTraceError("every grid candidate gives a degenerate scale")

    def cost(x):
        om, t2, dcm = bounds.from_unit(x)
        r, a, d = _simulate_rho(measured, [om], [t2], [wavenumber_to_angfreq(dcm)],
                                tau_p, phase, cfg)
        return float(_sse_batch(measured, r, a, d)[0][0])

    steps = [1.0 / (n - 1) for n in grid.shape]
    n_evals = len(xs)
    best = None
    for i in starts:
        x, fx, n, conv = nelder_mead(cost, xs[i], steps)
        n_evals += n
        log.debug("start %s -> %s sse=%.6g", phys[i], bounds.from_unit(x), fx)
        if best is None or fx < best[1]:
            best = (x, fx, conv)
    x, _, converged = best
    om, t2, dcm = bounds.from_unit(x)
    params = SystemParams(om, t2, wavenumber_to_angfreq(dcm), tau_p)

    r, a, d = _simulate_rho(measured, [om], [t2], [params.delta], tau_p, phase, cfg)
    sse, scale = _sse_batch(measured, r, a, d)
    if not np.isfinite(sse[0]):
        raise UnfittableTraceError("refinement ended on a degenerate candidate")
    residuals = scale[0] * r[0, d] - measured.values
    return FitResult(params, float(scale[0]), float(sse[0]), n_evals, converged,
                     residuals, phase)


def batch_fit(traces, tau_p: float, bounds: FitBounds | None = None,
              cfg: IntegratorConfig | None = None, grid: SearchGrid | None = None,
              jobs: int = 1) -> list:
    """Fit each trace independently; failures become :class:`FitFailure` entries."""

    def one(trace):
        try:
            return fit_trace(trace, tau_p, bounds, None, cfg, grid)
        except DomainError as exc:
            log.warning("fit failed: %s", exc)
            return FitFailure(str(exc))

    traces = list(traces)
    if jobs > 1 and len(traces) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, traces))
    return [one(t) for t in traces]


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def mode_bin(self) -> tuple[float, float]:
        i = int(np.argmax(self.counts))
        return float(self.edges[i]), float(self.edges[i + 1])


def t2_histogram(results, bin_width: float) -> Histogram:
    """Histogram of fitted T2* over converged results, left-closed bins of ``bin_width`` fs."""
    if not bin_width > 0:
        raise DomainError("bin_width must be positive")
    t2 = np.array([r.params.t2_star for r in results
                   if isinstance(r, FitResult) and r.converged], dtype=float)
    if t2.size == 0:
        return Histogram(np.empty(0), np.empty(0, dtype=int))
    lo = math.floor(t2.min())
    nbins = int(math.floor((t2.max() - lo) / bin_width)) + 1
    edges = lo + bin_width * np.arange(nbins + 1)
    idx = np.minimum(np.floor((t2 - lo) / bin_width).astype(int), nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    return Histogram(edges, counts)
