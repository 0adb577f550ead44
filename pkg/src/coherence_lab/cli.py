"""Command-line front end.

Every command writes its primary output plus ``<output>.manifest.json``.
Exit codes: 0 success, 1 usage error, 2 data error, 3 fit did not converge.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimation import FitBounds, FitResult, SearchGrid, batch_fit, fit_trace, t2_histogram
from .experiment import NoiseModel, delay_trace, phase_pair, rabi_curve, synth_counts
from .integrator import IntegratorConfig, PulseProgram, trajectory
from .traceio import (RunManifest, file_digest, fit_result_from_dict, fit_result_to_dict,
                      manifest_path, parse_trace_file, read_json, write_csv, write_json,
                      write_trace_file)
from .units import DomainError, SystemParams, fwhm_to_tau, pulse_area, wavenumber_to_angfreq

log = logging.getLogger("coherence_lab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONVERGE = 0, 1, 2, 3
SEED_ENV = "COHERENCE_LAB_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _range(text: str) -> np.ndarray:
    """``start:stop:step`` (stop inclusive) or a single value."""
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise argparse.ArgumentTypeError(f"range must be start:stop:step, got {text!r}")
    start, stop, step = parts
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _add_pulse(p, *, step=0.05):
    p.add_argument("--fwhm", type=float, default=75.0, help="pulse FWHM in fs (default 75)")
    p.add_argument("--fwhm-kind", choices=("intensity", "field"), default="intensity",
                   help="envelope the FWHM refers to (default intensity)")
    p.add_argument("--tau", type=float, help="Gaussian width tau_p in fs; overrides --fwhm")
    p.add_argument("--step", type=float, default=step, help=f"RK4 step in fs (default {step})")
    p.add_argument("--readout-offset", type=float, default=3.0,
                   help="readout time after the delayed pulse, in tau_p (default 3)")


def _add_system(p):
    p.add_argument("--omega-r0", type=float, required=True, help="peak Rabi frequency, rad/fs")
    p.add_argument("--t2", type=float, default=math.inf, help="pure dephasing time, fs (inf)")
    p.add_argument("--delta-cm", type=float, default=0.0, help="detuning, cm^-1")
    _add_pulse(p)


def _add_out(p, default):
    p.add_argument("--out", type=Path, default=Path(default), help=f"output file ({default})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coherence-lab",
                     description="Simulate and fit femtosecond double-pulse delay traces.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="rho11 and coherence versus delay")
    _add_system(p)
    p.add_argument("--phase", type=float, default=0.0, help="relative phase, rad")
    p.add_argument("--dt", type=_range, default=_range("0:600:10"), help="delay grid start:stop:step")
    _add_out(p, "simulate.csv")

    p = sub.add_parser("phase-pair", help="delay traces at phase 0 and pi")
    _add_system(p)
    p.add_argument("--dt", type=_range, default=_range("0:600:10"))
    _add_out(p, "phase_pair.csv")

    p = sub.add_parser("rabi", help="rho11 versus peak Rabi frequency, coincident pulses")
    p.add_argument("--amplitudes", type=_range, required=True, help="omega_r0 grid start:stop:step")
    p.add_argument("--t2", type=float, default=math.inf)
    p.add_argument("--delta-cm", type=float, default=0.0)
    _add_pulse(p)
    _add_out(p, "rabi.csv")

    p = sub.add_parser("trajectory", help="Bloch vector at every integration step")
    _add_system(p)
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=0.0, help="delay, fs")
    _add_out(p, "trajectory.csv")

    p = sub.add_parser("synth", help="Poisson counts from a simulated trace")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--scale", type=float, default=2000.0, help="counts/s at rho11 = 1")
    p.add_argument("--dwell", type=float, default=1.0, help="seconds per delay point")
    p.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV} or 0)")
    _add_out(p, "synth.csv")

    for name, helptext in (("fit", "fit one measured trace"),
                           ("batch-fit", "fit several measured traces")):
        p = sub.add_parser(name, help=helptext)
        if name == "fit":
            p.add_argument("--in", dest="input", type=Path, required=True)
            p.add_argument("--phase", type=float, help="relative phase (default: from file)")
            _add_out(p, "fit.json")
        else:
            p.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True)
            p.add_argument("--jobs", type=int, default=1, help="worker threads")
            _add_out(p, "batch_fit.json")
        _add_pulse(p, step=0.5)
        p.add_argument("--omega-bounds", type=float, nargs=2, default=(0.001, 0.12))
        p.add_argument("--t2-bounds", type=float, nargs=2, default=(15.0, 200.0))
        p.add_argument("--delta-bounds", type=float, nargs=2, default=(0.0, 300.0))
        p.add_argument("--grid", type=int, nargs=3, default=(56, 16, 8),
                       metavar=("N_OMEGA", "N_T2", "N_DELTA"))

    p = sub.add_parser("histogram", help="histogram of fitted T2*")
    p.add_argument("--in", dest="input", type=Path, required=True, help="batch-fit output")
    p.add_argument("--bin-width", type=float, default=10.0)
    _add_out(p, "histogram.csv")

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("manifest", type=Path)
    return parser


def _tau(args) -> float:
    if args.tau is not None:
        if not args.tau > 0:
            raise DomainError("--tau must be positive")
        return args.tau
    return fwhm_to_tau(args.fwhm, args.fwhm_kind)


def _cfg(args) -> IntegratorConfig:
    return IntegratorConfig(step=args.step, readout_offset=args.readout_offset)


def _system(args) -> SystemParams:
    return SystemParams(args.omega_r0, args.t2, wavenumber_to_angfreq(args.delta_cm), _tau(args))


def _params_doc(params: SystemParams | None = None, cfg: IntegratorConfig | None = None, **extra):
    doc = {}
    if params is not None:
        doc["system"] = {"omega_r0_per_fs": params.omega_r0,
                         "t2_star_fs": None if math.isinf(params.t2_star) else params.t2_star,
                         "delta_cm": params.delta_cm, "delta_rad_per_fs": params.delta,
                         "tau_p_fs": params.tau_p}
    if cfg is not None:
        doc["integrator"] = {"step_fs": cfg.step, "start_offset": cfg.start_offset,
                             "readout_offset": cfg.readout_offset}
    doc.update(extra)
    return doc


def _bounds(args) -> FitBounds:
    return FitBounds(tuple(args.omega_bounds), tuple(args.t2_bounds), tuple(args.delta_bounds))


def cmd_simulate(args):
    params, cfg = _system(args), _cfg(args)
    trace = delay_trace(params, args.phase, args.dt, cfg)
    write_trace_file(args.out, trace)
    return _params_doc(params, cfg, phase_rad=args.phase, delays_fs=args.dt.tolist()), {}, EXIT_OK


def cmd_phase_pair(args):
    params, cfg = _system(args), _cfg(args)
    pair = phase_pair(params, args.dt, cfg)
    write_csv(args.out, ("delay_fs", "rho11_phase0", "rho11_phasepi"),
              zip(pair.in_phase.delays, pair.in_phase.values, pair.out_of_phase.values))
    return _params_doc(params, cfg, delays_fs=args.dt.tolist()), {}, EXIT_OK


def cmd_rabi(args):
    tau, cfg = _tau(args), _cfg(args)
    delta = wavenumber_to_angfreq(args.delta_cm)
    curve = rabi_curve(tau, args.t2, delta, args.amplitudes, cfg)
    areas = [2.0 * pulse_area(a, tau) for a in curve.amplitudes]
    write_csv(args.out, ("omega_r0_per_fs", "pulse_area_rad", "rho11"),
              zip(curve.amplitudes, areas, curve.rho11))
    doc = _params_doc(None, cfg, tau_p_fs=tau, delta_cm=args.delta_cm,
                      t2_star_fs=None if math.isinf(args.t2) else args.t2,
                      amplitudes_per_fs=curve.amplitudes.tolist())
    return doc, {}, EXIT_OK


def cmd_trajectory(args):
    params, cfg = _system(args), _cfg(args)
    traj = trajectory(params, PulseProgram(args.dt, args.phase), cfg)
    s = traj.states
    rho11 = np.clip(0.5 * (1.0 + s[:, 2]), 0.0, 1.0)
    write_csv(args.out, ("t_fs", "u", "v", "w", "rho11"),
              zip(traj.times, s[:, 0], s[:, 1], s[:, 2], rho11))
    return _params_doc(params, cfg, phase_rad=args.phase, delay_fs=args.dt), {}, EXIT_OK


def cmd_synth(args):
    seed = args.seed if args.seed is not None else _default_seed()
    trace = parse_trace_file(args.input)
    noisy = synth_counts(trace, NoiseModel(args.scale, args.dwell, seed))
    write_trace_file(args.out, noisy)
    doc = {"noise": {"scale_cps": args.scale, "dwell_s": args.dwell, "seed": seed}}
    return doc, {str(args.input): file_digest(args.input)}, EXIT_OK


def _fit_setup(args):
    tau = _tau(args)
    grid = SearchGrid(*args.grid)
    cfg = _cfg(args)
    bounds = _bounds(args)
    doc = _params_doc(None, cfg, tau_p_fs=tau, grid=list(args.grid),
                      bounds={"omega_r0_per_fs": list(bounds.omega_r0),
                              "t2_star_fs": list(bounds.t2_star),
                              "delta_cm": list(bounds.delta_cm)})
    return tau, grid, cfg, bounds, doc


def cmd_fit(args):
    tau, grid, cfg, bounds, doc = _fit_setup(args)
    trace = parse_trace_file(args.input)
    result = fit_trace(trace, tau, bounds, args.phase, cfg, grid)
    write_json(args.out, fit_result_to_dict(result))
    code = EXIT_OK if result.converged else EXIT_NOCONVERGE
    return doc, {str(args.input): file_digest(args.input)}, code


def cmd_batch_fit(args):
    tau, grid, cfg, bounds, doc = _fit_setup(args)
    traces, inputs = [], {}
    for path in args.inputs:
        traces.append(parse_trace_file(path))
        inputs[str(path)] = file_digest(path)
    results = batch_fit(traces, tau, bounds, cfg, grid, jobs=max(1, args.jobs))
    entries = []
    for path, res in zip(args.inputs, results):
        entry = fit_result_to_dict(res)
        entry["input"] = str(path)
        entries.append(entry)
    write_json(args.out, {"results": entries})
    ok = all(isinstance(r, FitResult) and r.converged for r in results)
    return doc, inputs, EXIT_OK if ok else EXIT_NOCONVERGE


def cmd_histogram(args):
    doc = read_json(args.input)
    try:
        results = [fit_result_from_dict(e) for e in doc["results"]]
    except (KeyError, TypeError) as exc:
        raise DomainError(f"{args.input}: not a batch-fit document ({exc})") from None
    hist = t2_histogram(results, args.bin_width)
    write_csv(args.out, ("bin_lo_fs", "bin_hi_fs", "count"),
              zip(hist.edges[:-1], hist.edges[1:], hist.counts))
    return {"bin_width_fs": args.bin_width}, {str(args.input): file_digest(args.input)}, EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "phase-pair": cmd_phase_pair,
    "rabi": cmd_rabi,
    "trajectory": cmd_trajectory,
    "synth": cmd_synth,
    "fit": cmd_fit,
    "batch-fit": cmd_batch_fit,
    "histogram": cmd_histogram,
}


def _rerun(path: Path) -> int:
    manifest = RunManifest.read(path)
    for name, digest in manifest.inputs.items():
        if not Path(name).exists() or file_digest(name) != digest:
            raise DomainError(f"input {name} is missing or changed since the recorded run")
    return main(manifest.argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            return _rerun(args.manifest)
        params, inputs, code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    manifest = RunManifest(
        command=args.command, argv=argv, parameters=params, version=__version__,
        inputs=inputs, outputs={str(args.out): file_digest(args.out)})
    manifest.write(manifest_path(args.out))
    return code


if __name__ == "__main__":
    sys.exit(main())
