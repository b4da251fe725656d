"""Calibration models, fits and state analysis."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import gammaln

from .lindblad import PulseSequence, evolve_schrodinger
from .operators import SystemLayout, fock_state, ket2dm, mode_op, number_op

log = logging.getLogger(__name__)


# --- cavity Ramsey ------------------------------------------------------------

def _poisson_cutoff(alpha: float, tol: float = 1e-16) -> int:
    """Smallest n_max past which the Poisson weights e^-a2 a2^n/n! all stay below tol."""
    a2 = alpha * alpha
    n = int(np.ceil(a2))
    while True:
        log_term = -a2 + n * np.log(a2) - gammaln(n + 1)
        if n > a2 and log_term < np.log(tol):
            return n
        n += 1


def cavity_ramsey_signal(t, alpha: float, omega: float, kerr: float) -> np.ndarray:
    """Vacuum population after a cavity Ramsey sequence.

    P0(t) = |exp(-a^2) sum_n a^(2n)/n! exp(-i t n (omega + kerr n / 2))|^2
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    t = np.asarray(t, dtype=float)
    a2 = alpha * alpha
    if a2 == 0:
        return np.ones_like(t)
    n = np.arange(_poisson_cutoff(alpha) + 1)
    weights = np.exp(-a2 + n * np.log(a2) - gammaln(n + 1))
    phase = np.exp(-1j * np.multiply.outer(t, n * (omega + 0.5 * kerr * n)))
    amp = phase @ weights
    return np.clip(np.abs(amp) ** 2, 0.0, 1.0)


def cavity_ramsey_closed_form(t, alpha: float, omega: float) -> np.ndarray:
    """Kerr-free resummation exp(-2 a^2) exp(2 a^2 cos(omega t))."""
    t = np.asarray(t, dtype=float)
    a2 = alpha * alpha
    return np.exp(-2 * a2 * (1 - np.cos(omega * t)))


# --- fits --------------------------------------------------------------------------

@dataclass
class FitResult:
    model: str
    params: dict[str, float]
    sigmas: dict[str, float]
    covariance: np.ndarray
    residual: float
    converged: bool = True
    degenerate: bool = False

    def report(self) -> str:
        lines = [f"model = {self.model}", "parameter, value, sigma"]
        for k, v in self.params.items():
            lines.append(f"{k}, {float(v)!r}, {float(self.sigmas[k])!r}")
        lines.append(f"residual = {float(self.residual)!r}")
        lines.append(f"converged = {self.converged}")
        lines.append(f"degenerate = {self.degenerate}")
        return "\n".join(lines) + "\n"


def _fft_frequency(t: np.ndarray, y: np.ndarray) -> float:
    """Angular frequency of the strongest non-DC component (zero padded)."""
    dt = np.median(np.diff(t))
    yc = y - y.mean()
    if np.allclose(yc, 0):
        return 0.0
    n = 16 * len(y)
    spec = np.abs(np.fft.rfft(yc * np.hanning(len(y)), n))
    freqs = np.fft.rfftfreq(n, dt)
    k = int(np.argmax(spec[1:]) + 1)
    return float(2 * np.pi * freqs[k])


def _ramsey_model(t, amp, omega, phase, offset, rate):
    return amp * np.cos(omega * t + phase) * np.exp(-rate * t) + offset


def _finish(model, names, popt, pcov, resid, ok) -> FitResult:
    degenerate = not np.all(np.isfinite(pcov))
    sig = np.sqrt(np.abs(np.diag(pcov))) if not degenerate else np.full(len(names), np.inf)
    return FitResult(
        model,
        {k: float(v) for k, v in zip(names, popt)},
        {k: float(s) for k, s in zip(names, sig)},
        pcov,
        float(resid),
        converged=ok,
        degenerate=degenerate,
    )


def fit_oscillation(t, y, model: str = "ramsey", alpha=None) -> FitResult:
    """Least-squares fit of a damped cosine (``ramsey``) or the cavity-Ramsey series.

    For ``cavity_ramsey`` pass ``alpha`` with the displacement of each sample;
    the fitted parameters are ``omega`` and ``kerr`` (angular units).  Initial
    guesses come from the FFT peak and, for the Kerr, a coarse grid.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n_params = 5 if model == "ramsey" else 2
    if t.size < 4 * n_params or t.shape != y.shape:
        raise ValueError(f"need at least {4 * n_params} (t, y) samples of equal length")
    if model == "ramsey":
        return _fit_ramsey(t, y)
    if model == "cavity_ramsey":
        if alpha is None:
            raise ValueError("cavity_ramsey fits need the alpha of every sample")
        return _fit_cavity_ramsey(t, np.asarray(alpha, dtype=float), y)
    raise ValueError(f"unknown model {model!r}")


def _fit_ramsey(t, y) -> FitResult:
    names = ["amplitude", "omega", "phase", "offset", "decay_rate"]
    if np.ptp(y) < 1e-12:
        cov = np.full((5, 5), np.inf)
        return _finish("ramsey", names, [0.0, 0.0, 0.0, float(y.mean()), 0.0], cov, 0.0, True)
    omega0 = _fft_frequency(t, y)
    amp0 = 0.5 * np.ptp(y)
    # phase guess by linear least squares at the FFT frequency
    basis = np.column_stack([np.cos(omega0 * t), np.sin(omega0 * t), np.ones_like(t)])
    c, s, off = np.linalg.lstsq(basis, y, rcond=None)[0]
    phase0 = float(np.arctan2(-s, c))
    p0 = [amp0, omega0, phase0, off, 0.0]
    try:
        popt, pcov = scipy.optimize.curve_fit(_ramsey_model, t, y, p0=p0, maxfev=20000)
        ok = True
    except (RuntimeError, scipy.optimize.OptimizeWarning):
        popt, pcov, ok = np.array(p0), np.full((5, 5), np.inf), False
    if popt[0] < 0:
        popt[0] = -popt[0]
        popt[2] += np.pi
    popt[2] = (popt[2] + np.pi) % (2 * np.pi) - np.pi
    resid = np.linalg.norm(_ramsey_model(t, *popt) - y)
    return _finish("ramsey", names, popt, pcov, resid, ok)


def _fit_cavity_ramsey(t, alpha, y) -> FitResult:
    names = ["omega", "kerr"]
    groups = {a: np.flatnonzero(alpha == a) for a in np.unique(alpha)}

    def model(_, omega, kerr):
        out = np.empty_like(y)
        for a, idx in groups.items():
            out[idx] = cavity_ramsey_signal(t[idx], a, omega, kerr)
        return out

    smallest = min(groups)
    idx = groups[smallest]
    omega0 = _fft_frequency(t[idx], y[idx])
    span = max(abs(omega0), 1.0)
    # the FFT peak of a weak-displacement trace sits on the 0-1 line, omega + kerr/2
    candidates = [(omega0 - 0.5 * k, k) for k in np.linspace(-span, span, 81)]
    scores = [np.sum((model(None, *c) - y) ** 2) for c in candidates]
    p0 = candidates[int(np.argmin(scores))]
    try:
        popt, pcov = scipy.optimize.curve_fit(model, t, y, p0=p0, maxfev=20000, xtol=1e-14, ftol=1e-14)
        ok = True
    except RuntimeError:
        popt, pcov, ok = np.array(p0), np.full((2, 2), np.inf), False
    resid = np.linalg.norm(model(None, *popt) - y)
    return _finish("cavity_ramsey", names, popt, pcov, resid, ok)


# --- W states, fidelity, witness ---------------------------------------------------

@dataclass(frozen=True)
class WState:
    """(|10..0> + e^{i phi_1}|01..0> + ...)/sqrt(N); amplitudes indexed by excited mode."""

    n_modes: int
    phases: tuple[float, ...]

    @property
    def amplitudes(self) -> np.ndarray:
        return np.exp(1j * np.concatenate([[0.0], self.phases])) / np.sqrt(self.n_modes)

    def vector(self, mode_dims: Sequence[int] | None = None) -> np.ndarray:
        """Cavity ket in the given per-mode truncation (default 2 per mode)."""
        dims = tuple(mode_dims) if mode_dims is not None else (2,) * self.n_modes
        if len(dims) != self.n_modes or min(dims) < 2:
            raise ValueError(f"need {self.n_modes} modes with at least 2 levels, got {dims}")
        psi = np.zeros(int(np.prod(dims)), dtype=complex)
        for m, amp in enumerate(self.amplitudes):
            occ = tuple(1 if k == m else 0 for k in range(self.n_modes))
            psi[np.ravel_multi_index(occ, dims)] = amp
        return psi


def w_state(n_modes: int, phases: Sequence[float] = ()) -> WState:
    phases = tuple(float(p) for p in phases) or (0.0,) * (n_modes - 1)
    if n_modes < 1 or len(phases) != n_modes - 1:
        raise ValueError(f"a {n_modes}-mode W state takes {n_modes - 1} phases")
    return WState(n_modes, phases)


def is_pure(rho: np.ndarray, tol: float = 1e-9) -> bool:
    rho = np.asarray(rho)
    return rho.ndim == 1 or abs(np.trace(rho @ rho).real - 1) < tol


def state_fidelity(rho, sigma, kind: str = "overlap") -> float:
    """Fidelity between two states given as kets or density matrices.

    If either argument is a ket the result is <psi|rho|psi>.  For two density
    matrices ``kind="overlap"`` gives Tr[rho sigma] (exact only when one is
    pure; see :func:`is_pure`) and ``kind="uhlmann"`` gives
    (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.ndim == 1 and sigma.ndim == 1:
        if rho.shape != sigma.shape:
            raise ValueError("state dimensions differ")
        return float(abs(np.vdot(sigma, rho)) ** 2)
    if rho.ndim == 1:
        rho, sigma = sigma, rho
    if sigma.ndim == 1:
        if rho.shape != (sigma.size, sigma.size):
            raise ValueError("state dimensions differ")
        return float(np.clip(np.vdot(sigma, rho @ sigma).real, 0.0, 1.0))
    if rho.shape != sigma.shape:
        raise ValueError("state dimensions differ")
    if kind == "overlap":
        return float(np.clip(np.trace(rho @ sigma).real, 0.0, 1.0))
    if kind == "uhlmann":
        sr = scipy.linalg.sqrtm(rho)
        inner = scipy.linalg.sqrtm(sr @ sigma @ sr)
        return float(np.clip(np.trace(inner).real ** 2, 0.0, 1.0))
    raise ValueError(f"unknown fidelity kind {kind!r}")


def single_excitation_block(rho: np.ndarray, mode_dims: Sequence[int]) -> np.ndarray:
    n = len(mode_dims)
    idx = [np.ravel_multi_index(tuple(1 if k == m else 0 for k in range(n)), tuple(mode_dims)) for m in range(n)]
    return np.asarray(rho)[np.ix_(idx, idx)]


@dataclass
class WitnessResult:
    value: float
    phases: tuple[float, ...]
    fidelity: float

    def report(self) -> str:
        ph = " ".join(repr(float(p)) for p in self.phases)
        return f"witness = {float(self.value)!r}\nw_fidelity = {float(self.fidelity)!r}\nphases_rad = {ph}\n"


def max_w_fidelity(rho: np.ndarray, n_modes: int, mode_dims: Sequence[int] | None = None, grid: int = 64):
    """Maximise <W_phi|rho|W_phi> over the N-1 free phases (grid, then Nelder-Mead)."""
    dims = tuple(mode_dims) if mode_dims is not None else (2,) * n_modes
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = ket2dm(rho)
    if rho.shape[0] != int(np.prod(dims)):
        raise ValueError(f"state dimension {rho.shape[0]} does not match mode dims {dims}")
    block = single_excitation_block(rho, dims)
    if n_modes == 1:
        return float(block[0, 0].real), ()

    def fid(ph):
        v = np.exp(1j * np.concatenate([[0.0], ph])) / np.sqrt(n_modes)
        return float(np.vdot(v, block @ v).real)

    axis = np.linspace(-np.pi, np.pi, grid, endpoint=False)
    mesh = np.array(list(itertools.product(axis, repeat=n_modes - 1)))
    vs = np.exp(1j * np.column_stack([np.zeros(len(mesh)), mesh])) / np.sqrt(n_modes)
    vals = np.einsum("ki,ij,kj->k", vs.conj(), block, vs).real
    start = mesh[int(np.argmax(vals))]
    res = scipy.optimize.minimize(lambda p: -fid(p), start, method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    best = res.x if -res.fun >= vals.max() else start
    best = (np.asarray(best) + np.pi) % (2 * np.pi) - np.pi
    return fid(best), tuple(float(p) for p in best)


def entanglement_witness(rho: np.ndarray, n_modes: int, mode_dims: Sequence[int] | None = None) -> WitnessResult:
    """(N-1)/N - max_phi F(phi); negative values certify W-type entanglement."""
    f, phases = max_w_fidelity(rho, n_modes, mode_dims)
    return WitnessResult((n_modes - 1) / n_modes - f, phases, f)


def gauge_transform(rho: np.ndarray, mode_dims: Sequence[int], phases: Sequence[float]) -> np.ndarray:
    """Apply U = prod_m exp(-i phases[m] N_m): rho -> U rho U^dag."""
    grids = np.meshgrid(*[np.arange(d) for d in mode_dims], indexing="ij")
    diag = np.exp(-1j * sum(p * g for p, g in zip(phases, grids))).ravel()
    rho = np.asarray(rho)
    return diag[:, None] * rho * diag.conj()[None, :]


def w_gauge_phases(rho: np.ndarray, mode_dims: Sequence[int]) -> tuple[float, ...]:
    """Per-mode phases that make the <10..|rho|..1_m..> coherences real and positive."""
    block = single_excitation_block(rho, mode_dims)
    return tuple([0.0] + [float(-np.angle(block[0, m])) for m in range(1, len(mode_dims))])


# --- transfer functions ------------------------------------------------------------

class ExtrapolationError(ValueError):
    pass


@dataclass(frozen=True)
class TransferFunction:
    """Calibration table of AWG amplitude against drive strength, extended oddly through 0."""

    awg_amplitude: tuple[float, ...]
    drive_strength: tuple[float, ...]

    def __post_init__(self):
        a = np.asarray(self.awg_amplitude, dtype=float)
        s = np.asarray(self.drive_strength, dtype=float)
        if a.shape != s.shape or a.size < 1:
            raise ValueError("table columns must be non-empty and of equal length")
        if np.any(np.diff(a) <= 0):
            raise ValueError("AWG amplitudes must be strictly increasing")
        if np.any(a < 0) or np.any(np.diff(s) < 0):
            raise ValueError("table must cover non-negative amplitudes with non-decreasing strength")
        object.__setattr__(self, "awg_amplitude", tuple(a))
        object.__setattr__(self, "drive_strength", tuple(s))

    def _odd(self):
        a = np.asarray(self.awg_amplitude)
        s = np.asarray(self.drive_strength)
        if a[0] > 0:
            a, s = np.concatenate([[0.0], a]), np.concatenate([[0.0], s])
        a_full = np.concatenate([-a[:0:-1], a])
        s_full = np.concatenate([-s[:0:-1], s])
        return a_full, s_full

    def strength(self, amplitude):
        a, s = self._odd()
        amplitude = np.asarray(amplitude, dtype=float)
        if np.any(np.abs(amplitude) > a[-1]):
            raise ExtrapolationError(f"amplitude outside calibrated range +-{a[-1]}")
        return np.interp(amplitude, a, s)

    def amplitude(self, strength):
        a, s = self._odd()
        strength = np.asarray(strength, dtype=float)
        if np.any(np.abs(strength) > s[-1]):
            raise ExtrapolationError(f"strength outside calibrated range +-{s[-1]}")
        if np.any(np.diff(s) <= 0):
            # flat segments: take the smallest amplitude reaching the strength
            s, keep = np.unique(s, return_index=True)
            a = a[keep]
        return np.interp(strength, s, a)


def transfer_lookup(tf: TransferFunction, requested_strength):
    """AWG amplitude producing ``requested_strength``."""
    return tf.amplitude(requested_strength)


def transfer_inverse(tf: TransferFunction, amplitude):
    return tf.strength(amplitude)


# --- pulse spectra -----------------------------------------------------------------

def _channel(pulse: PulseSequence, channel: str | None) -> np.ndarray:
    if channel is None:
        if len(pulse.names) != 1:
            raise ValueError("pulse has several channels; name one")
        channel = pulse.names[0]
    return pulse.channels[channel]


def pulse_spectrum(pulse: PulseSequence, channel: str | None = None, pad: int = 1):
    """|dt * sum_k u_k exp(i delta t_k)| on the DFT grid of detunings delta (angular).

    Frequencies are returned in ascending order.
    """
    u = _channel(pulse, channel)
    n = pad * len(u)
    vals = pulse.dt * n * np.fft.ifft(u, n)
    freqs = 2 * np.pi * np.fft.fftfreq(n, pulse.dt)
    order = np.argsort(freqs)
    return freqs[order], np.abs(vals[order])


def coherent_response(pulse: PulseSequence, detuning: float, channel: str | None = None,
                      convention: str = "slope") -> float:
    """|alpha| left in a lossless linear cavity detuned by ``detuning`` from the carrier.

    ``convention="slope"`` follows the calibration relation |xi| = 2|alpha|/tau,
    i.e. |alpha| = |int eps e^{i delta t} dt| / 2.  ``"hamiltonian"`` drops the
    factor 1/2 and matches a drive term eps a^dag + eps^* a.
    """
    u = _channel(pulse, channel)
    t0 = np.arange(len(u)) * pulse.dt
    if detuning == 0:
        seg = np.full(len(u), pulse.dt, dtype=complex)
    else:
        seg = np.exp(1j * detuning * t0) * np.expm1(1j * detuning * pulse.dt) / (1j * detuning)
    total = abs(np.sum(u * seg))
    if convention == "slope":
        return 0.5 * total
    if convention == "hamiltonian":
        return total
    raise ValueError(f"unknown convention {convention!r}")


# --- spectroscopy ------------------------------------------------------------------

@dataclass
class SpectroscopyResult:
    detunings: np.ndarray
    response: np.ndarray
    peak: float = field(default=np.nan)


def drive_spectroscopy(
    drift: np.ndarray,
    generators: Sequence,
    layout: SystemLayout,
    detunings: Sequence[float],
    amplitude: float,
    duration: float,
    mode: int = 0,
    target_photons: int = 1,
) -> SpectroscopyResult:
    """Weak constant cavity drive swept in frequency; records the final |g, n> population.

    A drive at carrier offset ``delta`` is modelled by moving to its frame,
    ``drift - delta * N_mode``.  The peak is refined by a parabola through the
    three highest samples.
    """
    n_op = mode_op(layout, mode, number_op(layout.mode_dims[mode]))
    occ = tuple(target_photons if k == mode else 0 for k in range(layout.n_modes))
    psi0 = fock_state(layout, 0, (0,) * layout.n_modes)
    proj_idx = [layout.index_of(q, occ) for q in range(layout.transmon_levels)]
    pulse = PulseSequence.constant(["drive"], [amplitude], duration)
    gens = [generators[mode] if len(generators) > mode else generators[0]]
    resp = []
    for delta in detunings:
        traj = evolve_schrodinger(drift - delta * n_op, gens, pulse, psi0, [duration])
        resp.append(float(np.sum(np.abs(traj.states[-1][proj_idx]) ** 2)))
    det = np.asarray(detunings, dtype=float)
    resp = np.asarray(resp)
    k = int(np.argmax(resp))
    peak = det[k]
    if 0 < k < len(det) - 1:
        x, y = det[k - 1:k + 2], resp[k - 1:k + 2]
        c = np.polyfit(x, y, 2)
        if c[0] < 0:
            peak = float(-c[1] / (2 * c[0]))
    return SpectroscopyResult(det, resp, float(peak))
