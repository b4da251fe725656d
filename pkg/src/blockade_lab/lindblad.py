"""Master-equation and Schrodinger propagation with piecewise-constant drives.

Drive amplitude ``u_c[k]`` on channel ``c`` holds on ``[k*dt, (k+1)*dt)`` and
enters as ``Re(u) * X_c + Im(u) * Y_c`` where ``(X_c, Y_c)`` is the c-th pair
of control generators.  The master equation is integrated with fixed-step
RK4 on the row-major vectorised Lindblad generator, with the step bounded by
``1 / (step_factor * ||H||)`` inside every drive segment.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ._kernels import rk4_csr
from .hamiltonian import DeviceParams
from .operators import SystemLayout, annihilation_op, is_hermitian, ket2dm, mode_op, projector, transmon_op

log = logging.getLogger(__name__)

MAX_SUBSTEPS = 10**9
TRACE_BUDGET = 1e-8


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6e} s)")
        self.time = time


@dataclass(frozen=True)
class CollapseChannel:
    operator: np.ndarray
    rate: float
    name: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"collapse rate must be non-negative, got {self.rate}")


@dataclass
class PulseSequence:
    """Piecewise-constant complex envelopes (angular frequency units) on named channels."""

    dt: float
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        self.channels = {k: np.asarray(v, dtype=complex).ravel() for k, v in self.channels.items()}
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ValueError(f"channels have unequal lengths {sorted(lengths)}")

    @classmethod
    def constant(cls, names: Sequence[str], amplitudes: Sequence[complex], duration: float, steps: int = 1):
        return cls(duration / steps, {n: np.full(steps, a, dtype=complex) for n, a in zip(names, amplitudes)})

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def n_steps(self) -> int:
        return len(next(iter(self.channels.values()))) if self.channels else 0

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def amplitudes(self) -> np.ndarray:
        """Array of shape (n_channels, n_steps)."""
        if not self.channels:
            return np.zeros((0, 0), dtype=complex)
        return np.vstack([self.channels[n] for n in self.names])

    def with_amplitudes(self, amps: np.ndarray) -> "PulseSequence":
        return PulseSequence(self.dt, {n: a for n, a in zip(self.names, np.asarray(amps))})

    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.amplitudes()), initial=0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["time"]
        for n in self.names:
            header += [f"re({n})", f"im({n})"]
        w.writerow(header)
        amps = self.amplitudes()
        for k, t in enumerate(self.times):
            row = [repr(float(t))]
            for c in range(len(self.names)):
                row += [repr(float(amps[c, k].real)), repr(float(amps[c, k].imag))]
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PulseSequence":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 2:
            raise ValueError("pulse file needs a header and at least one sample")
        header = rows[0]
        if header[0] != "time" or len(header) % 2 != 1:
            raise ValueError(f"unexpected pulse header {header}")
        names = [h[3:-1] for h in header[1::2]]
        data = np.array(rows[1:], dtype=float)
        times = data[:, 0]
        dt = times[1] - times[0] if len(times) > 1 else 1.0
        chans = {n: data[:, 1 + 2 * i] + 1j * data[:, 2 + 2 * i] for i, n in enumerate(names)}
        return cls(float(dt), chans)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> "PulseSequence":
        return cls.from_csv(Path(path).read_text())


@dataclass
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    is_density: bool = True

    def density(self, k: int) -> np.ndarray:
        s = self.states[k]
        return s if self.is_density else ket2dm(s)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.observables)
        w.writerow(["time"] + names)
        for k, t in enumerate(self.times):
            w.writerow([repr(float(t))] + [repr(float(self.observables[n][k])) for n in names])
        return buf.getvalue()


@dataclass
class ExpectationSeries:
    values: np.ndarray
    max_imag: float
    non_hermitian: bool = False


def standard_channels(params: DeviceParams, layout: SystemLayout) -> list[CollapseChannel]:
    """Cavity decay, transmon decay and heating, and pure transmon dephasing.

    Cavity thermal occupation is taken as zero.
    """
    params.validate()
    chans = []
    for m, d in enumerate(layout.mode_dims):
        a = mode_op(layout, m, annihilation_op(d))
        chans.append(CollapseChannel(a, 1.0 / params.T1_m[m], f"cavity_decay_{params.labels[m]}"))
    lower = transmon_op(layout, _sigma_minus(layout.transmon_levels))
    gamma = 1.0 / params.T1_q
    chans.append(CollapseChannel(lower, gamma * (1 + params.nth_q), "transmon_decay"))
    chans.append(CollapseChannel(lower.conj().T.copy(), gamma * params.nth_q, "transmon_heating"))
    gamma_phi = 1.0 / params.T2_q - 1.0 / (2 * params.T1_q)
    chans.append(CollapseChannel(transmon_op(layout, projector(layout.transmon_levels, 1)), gamma_phi, "transmon_dephasing"))
    return chans


def _sigma_minus(levels: int) -> np.ndarray:
    s = np.zeros((levels, levels), dtype=complex)
    s[0, 1] = 1.0
    return s


def _normalise_generators(control_generators, n_channels: int):
    gens = [tuple(g) for g in control_generators]
    if len(gens) < n_channels:
        raise ValueError(f"pulse has {n_channels} channels but only {len(gens)} generator pairs were given")
    return gens[:n_channels]


def _segments(pulse: PulseSequence | None, sample_times: np.ndarray):
    """Split [0, t_last] at drive-segment boundaries and sample times.

    Yields (t_start, t_end, segment_index), with -1 once the pulse has ended.
    """
    t_end = float(sample_times[-1])
    bounds = {0.0, t_end}
    if pulse is not None and pulse.n_steps:
        edges = np.arange(1, pulse.n_steps + 1) * pulse.dt
        bounds.update(float(e) for e in edges if e < t_end)
    bounds.update(float(t) for t in sample_times)
    grid = np.array(sorted(bounds))
    # merge points closer than rounding noise
    keep = np.concatenate(([True], np.diff(grid) > 1e-15 * max(1.0, t_end)))
    grid = grid[keep]
    for t0, t1 in zip(grid[:-1], grid[1:]):
        seg = -1
        if pulse is not None and pulse.n_steps:
            k = int(np.floor(0.5 * (t0 + t1) / pulse.dt))
            seg = k if k < pulse.n_steps else -1
        yield t0, t1, seg


def _check_samples(sample_times) -> np.ndarray:
    ts = np.asarray(sample_times, dtype=float).ravel()
    if ts.size == 0 or np.any(ts < 0) or np.any(np.diff(ts) < 0):
        raise ValueError("sample times must be non-negative and sorted")
    return ts


class _Liouvillian:
    """Drift generator plus control superoperators on a shared CSR pattern."""

    def __init__(self, drift, generators, channels):
        n = drift.shape[0]
        self.n = n
        eye = sp.identity(n, dtype=complex, format="csr")

        def comm(h):
            hs = sp.csr_matrix(h)
            return -1j * (sp.kron(hs, eye) - sp.kron(eye, hs.T))

        l0 = comm(drift)
        for ch in channels:
            if ch.rate == 0:
                continue
            c = sp.csr_matrix(ch.operator)
            cdc = (c.conj().T @ c).tocsr()
            l0 = l0 + ch.rate * (sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T))
        parts = [l0]
        for x, y in generators:
            parts += [comm(x), comm(y)]
        coos = [p.tocoo() for p in parts]
        dim = n * n
        lin = np.unique(np.concatenate([c.row.astype(np.int64) * dim + c.col for c in coos]))
        self.indices = (lin % dim).astype(np.int32)
        self.indptr = np.concatenate(([0], np.cumsum(np.bincount(lin // dim, minlength=dim)))).astype(np.int32)
        self.data = []
        for c in coos:
            d = np.zeros(lin.size, dtype=complex)
            pos = np.searchsorted(lin, c.row.astype(np.int64) * dim + c.col)
            np.add.at(d, pos, c.data)
            self.data.append(d)
        self.dissipation = sum(ch.rate * np.linalg.norm(ch.operator, 2) ** 2 for ch in channels)

    def generator(self, coeffs: np.ndarray) -> np.ndarray:
        out = self.data[0].copy()
        for c, d in zip(coeffs, self.data[1:]):
            if c:
                out += c * d
        return out


def _hamiltonian_at(drift, gens, amps, seg):
    h = drift
    if seg >= 0:
        for (x, y), u in zip(gens, amps[:, seg]):
            h = h + u.real * x + u.imag * y
    return h


def _coeffs(amps, seg, n_gen):
    if seg < 0:
        return np.zeros(2 * n_gen)
    u = amps[:, seg]
    out = np.empty(2 * n_gen)
    out[0::2] = u.real
    out[1::2] = u.imag
    return out


def evolve_master(
    drift: np.ndarray,
    control_generators: Sequence,
    pulse: PulseSequence | None,
    channels: Sequence[CollapseChannel],
    rho0: np.ndarray,
    sample_times,
    step_factor: float = 50.0,
    max_step: float | None = None,
) -> TrajectoryResult:
    """Integrate the Lindblad equation and return density matrices at ``sample_times``."""
    ts = _check_samples(sample_times)
    drift = np.asarray(drift, dtype=complex)
    n = drift.shape[0]
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = ket2dm(rho0)
    if rho0.shape != (n, n):
        raise ValueError(f"initial state shape {rho0.shape} does not match drift {drift.shape}")
    n_ch = len(pulse.names) if pulse is not None else 0
    gens = _normalise_generators(control_generators, n_ch) if n_ch else []
    amps = pulse.amplitudes() if pulse is not None else np.zeros((0, 0))
    liou = _Liouvillian(drift, gens, channels)
    y = rho0.reshape(-1).copy()
    trace0 = np.trace(rho0).real
    out = np.empty((len(ts), n, n), dtype=complex)
    cache: dict[int, tuple[np.ndarray, float]] = {}
    sample_idx = 0
    while sample_idx < len(ts) and ts[sample_idx] == 0.0:
        out[sample_idx] = rho0
        sample_idx += 1
    for t0, t1, seg in _segments(pulse, ts):
        if seg not in cache:
            h = _hamiltonian_at(drift, gens, amps, seg)
            norm = max(np.linalg.norm(h, np.inf), 1e-300)
            hmax = 1.0 / (step_factor * norm)
            if liou.dissipation > 0:
                hmax = min(hmax, 0.1 / liou.dissipation)
            if max_step is not None:
                hmax = min(hmax, max_step)
            cache[seg] = (liou.generator(_coeffs(amps, seg, len(gens))), hmax)
        data, hmax = cache[seg]
        span = t1 - t0
        if pulse is not None and pulse.n_steps:
            hmax = min(hmax, pulse.dt)
        n_sub = span / hmax
        if not np.isfinite(n_sub) or n_sub > MAX_SUBSTEPS:
            raise IntegrationError(f"segment needs {n_sub:.3g} RK4 steps (limit {MAX_SUBSTEPS:.0e})", t0)
        n_sub = max(1, int(np.ceil(n_sub - 1e-9)))
        y = rk4_csr(data, liou.indices, liou.indptr, y, span / n_sub, n_sub)
        tr = y[:: n + 1].sum().real
        if not np.all(np.isfinite(y)) or abs(tr - trace0) > TRACE_BUDGET:
            raise IntegrationError("master equation integration diverged or lost trace", t1)
        while sample_idx < len(ts) and abs(ts[sample_idx] - t1) <= 1e-15 * max(1.0, t1) + 1e-18:
            out[sample_idx] = y.reshape(n, n)
            sample_idx += 1
    return TrajectoryResult(ts, out, is_density=True)


def _expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def evolve_schrodinger(
    drift: np.ndarray,
    control_generators: Sequence,
    pulse: PulseSequence | None,
    psi0: np.ndarray,
    sample_times,
) -> TrajectoryResult:
    """Compose exact piecewise-constant propagators exp(-i H_k dt)."""
    ts = _check_samples(sample_times)
    drift = np.asarray(drift, dtype=complex)
    psi = np.asarray(psi0, dtype=complex).copy()
    n_ch = len(pulse.names) if pulse is not None else 0
    gens = _normalise_generators(control_generators, n_ch) if n_ch else []
    amps = pulse.amplitudes() if pulse is not None else np.zeros((0, 0))
    out = np.empty((len(ts),) + psi.shape, dtype=complex)
    sample_idx = 0
    while sample_idx < len(ts) and ts[sample_idx] == 0.0:
        out[sample_idx] = psi
        sample_idx += 1
    eig_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    norm0 = np.linalg.norm(psi)
    for t0, t1, seg in _segments(pulse, ts):
        if seg not in eig_cache:
            eig_cache[seg] = np.linalg.eigh(_hamiltonian_at(drift, gens, amps, seg))
        w, v = eig_cache[seg]
        psi = v @ (np.exp(-1j * w * (t1 - t0)) * (v.conj().T @ psi))
        if abs(np.linalg.norm(psi) - norm0) > 1e-8:
            raise IntegrationError("propagation lost norm", t1)
        while sample_idx < len(ts) and abs(ts[sample_idx] - t1) <= 1e-15 * max(1.0, t1) + 1e-18:
            out[sample_idx] = psi
            sample_idx += 1
    return TrajectoryResult(ts, out, is_density=False)


def expectations(trajectory: TrajectoryResult, observables: Mapping[str, np.ndarray]) -> dict[str, ExpectationSeries]:
    """Tr[O rho(t)] per observable; the real part is stored on the trajectory too."""
    out = {}
    states = trajectory.states
    for name, op in observables.items():
        op = np.asarray(op, dtype=complex)
        if trajectory.is_density:
            if op.shape != states.shape[1:]:
                raise ValueError(f"observable {name} has shape {op.shape}, states are {states.shape[1:]}")
            vals = np.einsum("ij,tji->t", op, states)
        else:
            if op.shape[0] != states.shape[1]:
                raise ValueError(f"observable {name} has shape {op.shape}, states are {states.shape[1:]}")
            vals = np.einsum("ti,ij,tj->t", states.conj(), op, states)
        herm = is_hermitian(op, 1e-10)
        max_imag = float(np.max(np.abs(vals.imag), initial=0.0))
        if herm and max_imag > 1e-8:
            log.warning("observable %s has imaginary residual %.2e", name, max_imag)
        if not herm:
            log.warning("observable %s is not Hermitian; reporting the real part", name)
        out[name] = ExpectationSeries(vals.real.copy(), max_imag, non_hermitian=not herm)
        trajectory.observables[name] = vals.real.copy()
    return out


def fock_projectors(layout: SystemLayout, mode: int, prefix: str = "P") -> dict[str, np.ndarray]:
    d = layout.mode_dims[mode]
    return {f"{prefix}{n}": mode_op(layout, mode, projector(d, n)) for n in range(d)}
