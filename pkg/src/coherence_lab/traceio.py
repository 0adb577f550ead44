"""Trace files, fit-result documents and run manifests.

Trace files are comma-separated text with a one-line header:

    delay_fs,counts_per_s            measured trace
    delay_fs,rho11[,coherence_v]     simulated trace

Lines starting with ``#`` are comments; ``# phase_rad=<value>`` records the
relative pulse phase. Numbers are written with 9 significant digits.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .experiment import COHERENCE, COUNTS, MEASURED, RHO11, SIMULATED, DelayTrace
from .units import DomainError

MEASURED_HEADER = ("delay_fs", COUNTS)
SIMULATED_HEADERS = (("delay_fs", RHO11), ("delay_fs", RHO11, COHERENCE), ("delay_fs", COHERENCE))


class TraceFormatError(DomainError):
    """Base class for trace-file problems; ``line`` is 1-based (0 = whole file)."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class EmptyTraceFileError(TraceFormatError):
    pass


class MalformedHeaderError(TraceFormatError):
    pass


class NonNumericFieldError(TraceFormatError):
    pass


class NonIncreasingDelayError(TraceFormatError):
    pass


def fmt(x: float) -> str:
    return f"{x:.9g}"


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(float(x)) for x in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_trace_file(path, trace: DelayTrace) -> None:
    if trace.kind == MEASURED:
        header = MEASURED_HEADER
        cols = [trace.delays, trace.values]
    elif trace.quantity == COHERENCE:
        header = ("delay_fs", COHERENCE)
        cols = [trace.delays, trace.values]
    elif trace.coherence is not None:
        header = ("delay_fs", RHO11, COHERENCE)
        cols = [trace.delays, trace.values, trace.coherence]
    else:
        header = ("delay_fs", RHO11)
        cols = [trace.delays, trace.values]
    lines = [f"# phase_rad={fmt(trace.phase)}", ",".join(header)]
    lines.extend(",".join(fmt(float(x)) for x in row) for row in zip(*cols))
    atomic_write_text(path, "\n".join(lines) + "\n")


def parse_trace_file(path) -> DelayTrace:
    """Read a trace file, reporting the first problem with its line number."""
    path = Path(path)
    text = path.read_text()
    header = None
    phase = 0.0
    rows = []
    last_delay = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "phase_rad":
                try:
                    phase = float(val)
                except ValueError:
                    raise NonNumericFieldError(path, lineno, f"bad phase value {val!r}") from None
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            header = tuple(fields)
            if header != MEASURED_HEADER and header not in SIMULATED_HEADERS:
                raise MalformedHeaderError(
                    path, lineno, f"unrecognised header {line!r}; expected "
                    "'delay_fs,counts_per_s' or 'delay_fs,rho11[,coherence_v]'")
            continue
        if len(fields) != len(header):
            raise MalformedHeaderError(
                path, lineno, f"expected {len(header)} fields, found {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise NonNumericFieldError(path, lineno, f"non-numeric field in {line!r}") from None
        if not all(math.isfinite(v) for v in values):
            raise NonNumericFieldError(path, lineno, f"non-finite field in {line!r}")
        if values[0] <= last_delay:
            raise NonIncreasingDelayError(
                path, lineno, f"delay {fields[0]} does not increase on the previous one")
        last_delay = values[0]
        rows.append(values)
    if header is None:
        raise EmptyTraceFileError(path, 0, "file has no header")
    if not rows:
        raise EmptyTraceFileError(path, 0, "file has no data rows")
    data = np.array(rows)
    try:
        if header == MEASURED_HEADER:
            return DelayTrace(data[:, 0], data[:, 1], MEASURED, phase, COUNTS)
        if header[1] == COHERENCE:
            return DelayTrace(data[:, 0], data[:, 1], SIMULATED, phase, COHERENCE)
        coherence = data[:, 2] if len(header) == 3 else None
        return DelayTrace(data[:, 0], data[:, 1], SIMULATED, phase, RHO11, coherence)
    except DomainError as exc:
        raise TraceFormatError(path, 0, str(exc)) from None


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


@dataclass
class RunManifest:
    """Everything needed to re-execute a CLI run."""

    command: str
    argv: list[str]
    parameters: dict
    version: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> RunManifest:
        return cls(**{k: doc[k] for k in ("command", "argv", "parameters", "version",
                                          "inputs", "outputs")})

    def write(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path) -> RunManifest:
        return cls.from_dict(read_json(path))


def manifest_path(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def fit_result_to_dict(result, seed=None) -> dict:
    """JSON document for a fit result (or a batch failure)."""
    from .estimation import FitFailure

    if isinstance(result, FitFailure):
        return {"error": result.error, "converged": False}
    p = result.params
    return {
        "omega_r0_per_fs": p.omega_r0,
        "t2_star_fs": p.t2_star,
        "delta_cm": result.delta_cm,
        "delta_rad_per_fs": p.delta,
        "tau_p_fs": p.tau_p,
        "phase_rad": result.phase,
        "scale_cps": result.scale,
        "sse": result.sse,
        "converged": result.converged,
        "n_evals": result.n_evals,
        "seed": seed,
        "residuals": [float(r) for r in result.residuals],
    }


def fit_result_from_dict(doc: dict):
    from .estimation import FitFailure, FitResult
    from .units import SystemParams

    if "error" in doc:
        return FitFailure(doc["error"])
    params = SystemParams(doc["omega_r0_per_fs"], doc["t2_star_fs"],
                          doc["delta_rad_per_fs"], doc["tau_p_fs"])
    return FitResult(params, doc["scale_cps"], doc["sse"], doc["n_evals"], doc["converged"],
                     np.asarray(doc["residuals"], dtype=float), doc.get("phase_rad", 0.0))
