"""Gradient pulse engineering with amplitude caps and forbidden-level penalties.

Each control channel c carries a complex amplitude u_c[k] that enters the
Hamiltonian as ``Re(u) X_c + Im(u) Y_c`` on step k.  The propagator
derivative is exact: in the eigenbasis of H_k the derivative of
exp(-i H dt) along G is the Hadamard product of ``V^dag G V`` with the
divided differences of exp(-i lambda dt).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lindblad import PulseSequence, evolve_schrodinger

log = logging.getLogger(__name__)


@dataclass
class ControlProblem:
    """State transfer (1-D ``initial``) or gate synthesis (2-D ``initial``).

    In gate mode ``initial`` holds the input basis as columns and ``target``
    the desired images as columns, so the cost is taken over that subspace
    only.  ``forbidden`` lists ``(projector, weight)`` pairs; the penalty is
    ``weight / steps`` times the summed forbidden population after each step.

    ``cap_mode="quadrature"`` bounds each real field |Re u|, |Im u| by the
    cap (the controls are the two real quadrature fields); ``"disc"`` bounds
    the complex modulus |u| instead.
    """

    drift: np.ndarray
    control_generators: Sequence
    initial: np.ndarray
    target: np.ndarray
    horizon: float
    steps: int
    amplitude_cap: float
    forbidden: Sequence = ()
    channel_names: Sequence[str] | None = None
    cap_mode: str = "quadrature"

    def __post_init__(self):
        if self.cap_mode not in ("quadrature", "disc"):
            raise ValueError(f"unknown cap mode {self.cap_mode!r}")
        self.drift = np.asarray(self.drift, dtype=complex)
        self.control_generators = [tuple(np.asarray(g, dtype=complex) for g in pair) for pair in self.control_generators]
        self.initial = np.asarray(self.initial, dtype=complex)
        self.target = np.asarray(self.target, dtype=complex)
        if self.steps < 2:
            raise ValueError(f"need at least 2 time steps, got {self.steps}")
        if not self.amplitude_cap > 0:
            raise ValueError("amplitude cap must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.initial.shape != self.target.shape:
            raise ValueError(f"initial {self.initial.shape} and target {self.target.shape} differ in shape")
        if self.initial.shape[0] != self.drift.shape[0]:
            raise ValueError("initial state does not match drift dimension")
        cols = self.target.reshape(self.target.shape[0], -1)
        if not np.allclose(cols.conj().T @ cols, np.eye(cols.shape[1]), atol=1e-10):
            raise ValueError("target must be normalised (state) or have orthonormal columns (gate)")
        if self.channel_names is None:
            self.channel_names = [f"c{i}" for i in range(len(self.control_generators))]
        self.channel_names = list(self.channel_names)
        if len(self.channel_names) != len(self.control_generators):
            raise ValueError("one channel name per generator pair is required")
        self.forbidden = [(np.asarray(p, dtype=complex), float(w)) for p, w in self.forbidden]

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def gate_mode(self) -> bool:
        return self.initial.ndim == 2

    @property
    def n_controls(self) -> int:
        return len(self.control_generators)

    def pulse_from(self, amps: np.ndarray) -> PulseSequence:
        return PulseSequence(self.dt, {n: a for n, a in zip(self.channel_names, amps)})


@dataclass
class OptimizerConfig:
    max_iterations: int = 2000
    target_fidelity: float = 0.999
    initial_step: float = 0.1
    min_step: float = 1e-10
    cost_tolerance: float = 1e-12
    seed: int = 0
    momentum: float = 0.0
    bandwidth: float | None = None


@dataclass
class PulseResult:
    pulse: PulseSequence
    closed_fidelity: float
    cost_history: list[float]
    gradient_norm_final: float
    converged: bool
    fidelity_history: list[float] = field(default_factory=list)
    gradient_history: list[float] = field(default_factory=list)

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "cost", "fidelity", "gradient_norm"])
        for i, (c, f, g) in enumerate(zip(self.cost_history, self.fidelity_history, self.gradient_history)):
            w.writerow([i, repr(float(c)), repr(float(f)), repr(float(g))])
        return buf.getvalue()


def _columns(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1)


def _step_hamiltonians(problem: ControlProblem, amps: np.ndarray):
    h = np.repeat(problem.drift[None], problem.steps, axis=0)
    for (x, y), u in zip(problem.control_generators, amps):
        h += u.real[:, None, None] * x + u.imag[:, None, None] * y
    return h


def _sweep(problem: ControlProblem, amps: np.ndarray, want_grad: bool):
    """Cost, fidelity and (optionally) the gradient w.r.t. (Re u, Im u)."""
    dt = problem.dt
    n_steps = problem.steps
    hs = _step_hamiltonians(problem, amps)
    lam, vecs = np.linalg.eigh(hs)
    phases = np.exp(-1j * lam * dt)
    us = np.einsum("kij,kj,klj->kil", vecs, phases, vecs.conj())

    psi = _columns(problem.initial)
    target = _columns(problem.target)
    k = psi.shape[1]
    states = np.empty((n_steps + 1,) + psi.shape, dtype=complex)
    states[0] = psi
    for j in range(n_steps):
        states[j + 1] = us[j] @ states[j]

    overlap = np.trace(target.conj().T @ states[-1]) / k
    fidelity = float(abs(overlap) ** 2)
    penalty = 0.0
    for proj, weight in problem.forbidden:
        pops = np.einsum("kia,ij,kja->", states[1:].conj(), proj, states[1:]).real / k
        penalty += weight / n_steps * pops
    cost = 1.0 - fidelity + penalty
    if not want_grad:
        return cost, fidelity, None

    # co-state C_j = -o * B_j + sum_p (w_p / N) chi_j^p
    grad = np.zeros((problem.n_controls, n_steps, 2))
    gens = [g for pair in problem.control_generators for g in pair]
    back = target.copy()
    chis = [np.zeros_like(psi) for _ in problem.forbidden]
    for j in range(n_steps - 1, -1, -1):
        for i, (proj, _) in enumerate(problem.forbidden):
            chis[i] = proj @ states[j + 1] + chis[i]
        co = -overlap * back
        for (proj, weight), chi in zip(problem.forbidden, chis):
            co = co + (weight / n_steps) * chi
        v = vecs[j]
        lj = lam[j]
        diff = lj[:, None] - lj[None, :]
        z = -1j * diff * dt
        small = np.abs(z) < 1e-8
        phi = np.where(small, 1 + z / 2, np.expm1(np.where(small, 1.0, z)) / np.where(small, 1.0, z))
        fmat = -1j * dt * phases[j][None, :] * phi
        co_t = v.conj().T @ co
        psi_t = v.conj().T @ states[j]
        q = co_t.conj() @ psi_t.T
        fq = fmat * q
        for g_idx, g in enumerate(gens):
            gt = v.conj().T @ g @ v
            grad[g_idx // 2, j, g_idx % 2] = 2.0 / k * np.sum(fq * gt).real
        back = us[j].conj().T @ back
        for i in range(len(chis)):
            chis[i] = us[j].conj().T @ chis[i]
    return cost, fidelity, grad


def problem_cost(problem: ControlProblem, pulse: PulseSequence | np.ndarray) -> float:
    amps = pulse.amplitudes() if isinstance(pulse, PulseSequence) else np.asarray(pulse)
    return _sweep(problem, amps, False)[0]


def pulse_gradient(problem: ControlProblem, pulse: PulseSequence | np.ndarray) -> np.ndarray:
    """d(cost)/d(Re u, Im u) with shape (controls, steps, 2).

    Exact for piecewise-constant controls (no first-order dt truncation).
    """
    amps = pulse.amplitudes() if isinstance(pulse, PulseSequence) else np.asarray(pulse)
    if amps.shape != (problem.n_controls, problem.steps):
        raise ValueError(f"pulse shape {amps.shape} != ({problem.n_controls}, {problem.steps})")
    return _sweep(problem, amps, True)[2]


def _clamp(amps: np.ndarray, cap: float, mode: str = "disc") -> np.ndarray:
    if mode == "quadrature":
        return np.clip(amps.real, -cap, cap) + 1j * np.clip(amps.imag, -cap, cap)
    mag = np.abs(amps)
    scale = np.where(mag > cap, cap / np.where(mag > 0, mag, 1.0), 1.0)
    return amps * scale


def closed_fidelity(problem: ControlProblem, pulse: PulseSequence) -> float:
    """Fidelity from an independent forward propagation."""
    init = _columns(problem.initial)
    target = _columns(problem.target)
    finals = []
    for c in range(init.shape[1]):
        traj = evolve_schrodinger(problem.drift, problem.control_generators, pulse, init[:, c], [pulse.duration])
        finals.append(traj.states[-1])
    final = np.array(finals).T
    overlap = np.trace(target.conj().T @ final) / init.shape[1]
    return float(min(1.0, abs(overlap) ** 2))


def initial_guess(problem: ControlProblem, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lim = problem.amplitude_cap / 10
    shape = (problem.n_controls, problem.steps)
    return rng.uniform(-lim, lim, shape) + 1j * rng.uniform(-lim, lim, shape)


def optimize_pulse(
    problem: ControlProblem,
    config: OptimizerConfig | None = None,
    initial: PulseSequence | np.ndarray | None = None,
) -> PulseResult:
    """Projected gradient descent with backtracking on the cost.

    Amplitudes are optimised in units of the cap and projected back onto the
    feasible set (per the problem's cap mode) after every trial step, so each
    accepted iterate is feasible and lowers the cost.  With
    ``config.bandwidth`` the start point and every search direction are
    filtered to |f| <= bandwidth (angular); the clamp can still add small
    out-of-band content.
    """
    cfg = config or OptimizerConfig()
    cap = problem.amplitude_cap
    if initial is None:
        amps = initial_guess(problem, cfg.seed)
    else:
        amps = initial.amplitudes() if isinstance(initial, PulseSequence) else np.asarray(initial, dtype=complex)
    mode = problem.cap_mode
    band = None
    if cfg.bandwidth is not None:
        freqs = 2 * np.pi * np.fft.fftfreq(problem.steps, problem.dt)
        band = np.abs(freqs) <= cfg.bandwidth

    def in_band(v):
        return v if band is None else np.fft.ifft(np.fft.fft(v, axis=-1) * band, axis=-1)

    x = _clamp(in_band(amps), cap, mode) / cap

    cost, fid, grad = _sweep(problem, x * cap, True)
    costs, fids, gnorms = [cost], [fid], []
    step = cfg.initial_step
    velocity = np.zeros_like(x)
    converged = fid >= cfg.target_fidelity
    stalled = 0
    for _ in range(cfg.max_iterations):
        if converged:
            break
        g = in_band((grad[..., 0] + 1j * grad[..., 1]) * cap)
        gnorm = float(np.linalg.norm(g))
        gnorms.append(gnorm)
        if gnorm == 0:
            break
        direction = g / gnorm + cfg.momentum * velocity
        accepted = False
        while step >= cfg.min_step:
            trial = _clamp(x - step * direction * np.sqrt(x.size), 1.0, mode)
            t_cost, t_fid, _ = _sweep(problem, trial * cap, False)
            if t_cost < cost:
                accepted = True
                break
            if velocity.any():
                # drop the heavy-ball term before shrinking the step
                velocity[:] = 0
                direction = g / gnorm
                continue
            step *= 0.5
        if not accepted:
            break
        velocity = direction
        gain = cost - t_cost
        x = trial
        cost, fid, grad = _sweep(problem, x * cap, True)
        costs.append(cost)
        fids.append(fid)
        step = min(step * 1.5, 1.0)
        stalled = stalled + 1 if gain < cfg.cost_tolerance else 0
        if fid >= cfg.target_fidelity:
            converged = True
        elif stalled >= 20:
            break
    final_grad = (grad[..., 0] + 1j * grad[..., 1]) * cap
    gnorms.append(float(np.linalg.norm(final_grad)))
    pulse = problem.pulse_from(_clamp(x * cap, cap, mode))
    fidelity = closed_fidelity(problem, pulse)
    if not converged:
        log.info("optimizer stopped at fidelity %.6f without reaching %.6f", fidelity, cfg.target_fidelity)
    return PulseResult(pulse, fidelity, costs, gnorms[-1], bool(converged), fids, gnorms)


def bandlimit_pulse(
    pulse: PulseSequence,
    center: float,
    halfwidth: float,
    cap: float | None = None,
    cap_mode: str = "quadrature",
) -> PulseSequence:
    """Zero every DFT component farther than ``halfwidth`` from ``center`` (angular units).

    The envelope convention is u(t) = sum_f U_f exp(+i 2 pi f t), and the
    result is re-clamped to ``cap`` when given.
    """
    nyquist = np.pi / pulse.dt
    if not 0 < halfwidth < nyquist:
        raise ValueError(f"halfwidth {halfwidth} must lie in (0, Nyquist={nyquist})")
    freqs = 2 * np.pi * np.fft.fftfreq(pulse.n_steps, pulse.dt)
    mask = np.abs(freqs - center) <= halfwidth
    out = {}
    for name, u in pulse.channels.items():
        filt = np.fft.ifft(np.fft.fft(u) * mask)
        out[name] = _clamp(filt, cap, cap_mode) if cap is not None else filt
    return PulseSequence(pulse.dt, out)
