"""Dispersive and blockade-frame Hamiltonians for a transmon coupled to cavity modes.

All frequencies are angular (rad/s) and all times are in seconds.  Cavity
drives enter through the quadrature generators x = a + a^dag and
y = -i(a - a^dag), so a complex amplitude u = x + iy contributes
u a^dag + u^* a to the Hamiltonian.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .operators import (
    DimensionError,
    SystemLayout,
    annihilation_op,
    mode_op,
    number_op,
    projector,
    transmon_op,
)

TWO_PI = 2 * np.pi


class PhysicalityError(ValueError):
    """Device parameters violate a physical constraint."""


@dataclass(frozen=True)
class DeviceParams:
    """Device parameters, angular frequencies and SI times.

    ``cross_kerr`` is a symmetric matrix with zero diagonal; each unordered
    pair (m, n) contributes ``cross_kerr[m, n] * N_m * N_n`` exactly once.
    """

    omega_q: float
    omega_m: tuple[float, ...]
    chi_m: tuple[float, ...]
    kerr_m: tuple[float, ...]
    cross_kerr: np.ndarray
    T1_q: float
    T2_q: float
    nth_q: float
    T1_m: tuple[float, ...]
    T2_m: tuple[float, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.chi_m)
        for name in ("omega_m", "kerr_m", "T1_m"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != n:
                raise DimensionError(f"{name} has {len(val)} entries, expected {n}")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "chi_m", tuple(float(x) for x in self.chi_m))
        t2m = tuple(float(x) for x in self.T2_m) or tuple(2 * t for t in self.T1_m)
        object.__setattr__(self, "T2_m", t2m)
        labels = tuple(str(x) for x in self.labels) or tuple(str(i) for i in range(n))
        object.__setattr__(self, "labels", labels)
        ck = np.zeros((n, n)) if self.cross_kerr is None else np.array(self.cross_kerr, dtype=float)
        if ck.shape != (n, n):
            raise DimensionError(f"cross_kerr must be {n}x{n}, got {ck.shape}")
        ck.setflags(write=False)
        object.__setattr__(self, "cross_kerr", ck)

    @property
    def n_modes(self) -> int:
        return len(self.chi_m)

    def validate(self) -> None:
        if self.T2_q > 2 * self.T1_q:
            raise PhysicalityError(f"T2_q={self.T2_q} exceeds 2*T1_q={2 * self.T1_q}")
        if not 0 <= self.nth_q < 1:
            raise PhysicalityError(f"transmon thermal occupation {self.nth_q} outside [0, 1)")
        if not np.allclose(self.cross_kerr, self.cross_kerr.T):
            raise PhysicalityError("cross_kerr matrix is not symmetric")
        if any(t <= 0 for t in (self.T1_q, self.T2_q, *self.T1_m)):
            raise PhysicalityError("coherence times must be positive")

    def subset(self, modes: Sequence[int]) -> "DeviceParams":
        """Parameters restricted to the listed mode indices, in that order."""
        modes = list(modes)
        return DeviceParams(
            omega_q=self.omega_q,
            omega_m=tuple(self.omega_m[m] for m in modes),
            chi_m=tuple(self.chi_m[m] for m in modes),
            kerr_m=tuple(self.kerr_m[m] for m in modes),
            cross_kerr=self.cross_kerr[np.ix_(modes, modes)],
            T1_q=self.T1_q,
            T2_q=self.T2_q,
            nth_q=self.nth_q,
            T1_m=tuple(self.T1_m[m] for m in modes),
            T2_m=tuple(self.T2_m[m] for m in modes),
            labels=tuple(self.labels[m] for m in modes),
        )

    def mode_index(self, label) -> int:
        return self.labels.index(str(label))


@dataclass(frozen=True)
class BlockadeSpec:
    """A single blockade tone.

    Attributes:
        target_modes: indices (into the layout / params) of the modes sharing the blockade.
        n0: total photon number that is blockaded.
        omega: transmon Rabi coupling; the resonant |g,n0> / |e,n0> pair splits by 2*omega.
        detuning: blockade tone offset from the transmon frequency.  ``None``
            means the mean dispersive shift of all n0-photon patterns.
    """

    target_modes: tuple[int, ...]
    n0: int
    omega: float
    detuning: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "target_modes", tuple(int(m) for m in self.target_modes))
        if self.n0 < 1:
            raise ValueError("blockade photon number n0 must be >= 1")

    def resolved_detuning(self, chis: Sequence[float]) -> float:
        if self.detuning is not None:
            return float(self.detuning)
        return blockade_detuning(chis, self.n0, self.target_modes)

    def validity(self, drive_amplitude: float, chis: Sequence[float]) -> dict:
        """Check eps*sqrt(n0) < Omega < min|chi| for the target modes."""
        min_chi = min(abs(chis[m]) for m in self.target_modes)
        lower = abs(drive_amplitude) * np.sqrt(self.n0)
        return {
            "drive_below_rabi": bool(lower < self.omega),
            "rabi_below_chi": bool(self.omega < min_chi),
            "valid": bool(lower < self.omega < min_chi),
            "leakage_ratio": lower / self.omega if self.omega else np.inf,
            "dressing_ratio": self.omega / min_chi,
        }


def _excited_projector(layout: SystemLayout) -> np.ndarray:
    if layout.transmon_levels < 2:
        raise DimensionError("transmon needs at least two levels")
    return transmon_op(layout, projector(layout.transmon_levels, 1))


def _sigma_x(layout: SystemLayout) -> np.ndarray:
    d = layout.transmon_levels
    s = np.zeros((d, d), dtype=complex)
    s[0, 1] = s[1, 0] = 1.0
    return transmon_op(layout, s)


def _check_modes(params: DeviceParams, layout: SystemLayout) -> None:
    if params.n_modes != layout.n_modes:
        raise DimensionError(
            f"layout has {layout.n_modes} modes but params describe {params.n_modes}"
        )


def _kerr_terms(params: DeviceParams, layout: SystemLayout, numbers) -> np.ndarray:
    eye = np.eye(layout.total_dim)
    h = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    for m, n_op in enumerate(numbers):
        h += 0.5 * params.kerr_m[m] * n_op @ (n_op - eye)
    for m, n in itertools.combinations(range(layout.n_modes), 2):
        if params.cross_kerr[m, n]:
            h += params.cross_kerr[m, n] * numbers[m] @ numbers[n]
    return h


def quadrature_generators(layout: SystemLayout, mode: int) -> tuple[np.ndarray, np.ndarray]:
    a = mode_op(layout, mode, annihilation_op(layout.mode_dims[mode]))
    ad = a.conj().T
    return a + ad, -1j * (a - ad)


def build_dispersive_hamiltonian(params: DeviceParams, layout: SystemLayout) -> np.ndarray:
    """Lab-frame dispersive Hamiltonian (no drives); diagonal in the Fock basis."""
    _check_modes(params, layout)
    ee = _excited_projector(layout)
    numbers = [mode_op(layout, m, number_op(d)) for m, d in enumerate(layout.mode_dims)]
    h = params.omega_q * ee
    for m, n_op in enumerate(numbers):
        h = h + params.omega_m[m] * n_op + params.chi_m[m] * n_op @ ee
    return h + _kerr_terms(params, layout, numbers)


def build_blockade_hamiltonian(
    params: DeviceParams,
    layout: SystemLayout,
    spec: BlockadeSpec,
    mode: int,
    cavity_detuning: float = 0.0,
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Single-mode drift in the frame co-rotating with the blockade tone.

    ``mode`` selects the params entry; the layout holds only that mode.
    ``cavity_detuning`` moves the cavity frame (and hence the drive carrier) by
    that angular frequency, e.g. onto the Stark-shifted 0-1 line.

    Returns:
        (drift, [(x_gen, y_gen)])
    """
    if layout.n_modes != 1 or layout.transmon_levels != 2:
        raise DimensionError("single-mode blockade needs a layout (2; d)")
    d = layout.mode_dims[0]
    if spec.n0 >= d:
        raise IndexError(f"blockade level n0={spec.n0} not below truncation {d}")
    chi = params.chi_m[mode]
    kerr = params.kerr_m[mode]
    ee = _excited_projector(layout)
    n_op = mode_op(layout, 0, number_op(d))
    eye = np.eye(layout.total_dim)
    drift = (
        chi * (n_op - spec.n0 * eye) @ ee
        + 0.5 * kerr * n_op @ (n_op - eye)
        + spec.omega * _sigma_x(layout)
        - cavity_detuning * n_op
    )
    return drift, [quadrature_generators(layout, 0)]


def build_multimode_blockade_hamiltonian(
    params: DeviceParams,
    layout: SystemLayout,
    spec: BlockadeSpec,
    cavity_detunings: Sequence[float] | None = None,
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Multimode drift in the frame of the blockade tone and the cavity drives.

    Layout modes correspond one-to-one with ``params`` modes; one (x, y)
    generator pair is returned per entry of ``spec.target_modes``.
    """
    _check_modes(params, layout)
    if not spec.target_modes:
        raise ValueError("blockade needs at least one target mode")
    if any(not 0 <= m < layout.n_modes for m in spec.target_modes):
        raise IndexError(f"target modes {spec.target_modes} outside layout")
    if layout.transmon_levels != 2:
        raise DimensionError("blockade frame assumes a two-level transmon")
    ee = _excited_projector(layout)
    eye = np.eye(layout.total_dim)
    numbers = [mode_op(layout, m, number_op(d)) for m, d in enumerate(layout.mode_dims)]
    shift = sum(params.chi_m[m] * n_op for m, n_op in enumerate(numbers))
    delta_b = spec.resolved_detuning(params.chi_m)
    drift = (shift - delta_b * eye) @ ee + _kerr_terms(params, layout, numbers)
    drift = drift + spec.omega * _sigma_x(layout)
    if cavity_detunings is not None:
        for m, det in enumerate(cavity_detunings):
            drift = drift - det * numbers[m]
    gens = [quadrature_generators(layout, m) for m in spec.target_modes]
    return drift, gens


def blockade_detuning(chis: Sequence[float], total_photons: int, mode_subset: Sequence[int]) -> float:
    """Mean of sum_m n_m chi_m over all ways to place N photons in the subset."""
    subset = list(mode_subset)
    if not subset:
        raise ValueError("mode subset is empty")
    if total_photons < 1:
        raise ValueError("total photon number must be >= 1")
    shifts = [
        sum(chis[subset[i]] for i in combo)
        for combo in itertools.combinations_with_replacement(range(len(subset)), total_photons)
    ]
    return float(np.mean(shifts))


def stark_shift(n: int, n0: int, chi: float, omega: float, order: str = "leading") -> float:
    """Blockade-induced shift of the |g,n> level.

    ``leading`` is -omega^2 / (4 chi (n - n0)).  ``exact`` is the dressed-ground
    eigenvalue of [[0, omega], [omega, chi (n - n0)]] relative to its omega=0
    value.  Note the two do not share a normalisation of omega: for the same
    omega the exact value is four times the leading expression.
    """
    delta = chi * (n - n0)
    if order == "leading":
        if n == n0:
            raise ZeroDivisionError("n == n0 is the resonant pair (split by +-omega), not a Stark shift")
        return -omega**2 / (4 * delta)
    if order == "exact":
        if delta == 0:
            return -abs(omega)
        # rationalised form of delta/2 - sign(delta) sqrt(delta^2/4 + omega^2)
        return -np.sign(delta) * omega**2 / (abs(delta) / 2 + np.sqrt(delta**2 / 4 + omega**2))
    raise ValueError(f"unknown order {order!r}")


def reduced_blockade_hamiltonian(
    params: DeviceParams,
    spec: BlockadeSpec,
    mode: int,
    stark: str = "leading",
    include_kerr: bool = False,
    dressed_couplings: bool = False,
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Qudit model on the dressed ground states |0>..|n0-1>.

    The drift is diagonal with the Stark shifts of each level (``stark``
    selects the leading-order or exact two-level expression); the blockaded
    level and everything above it are dropped.  ``include_kerr`` adds the
    mode self-Kerr.

    With ``dressed_couplings`` the drive matrix elements are taken between
    the dressed ground states c_n|g,n> + s_n|e,n> of each two-level block,
    sqrt(n) (c_{n-1} c_n + s_{n-1} s_n), instead of the bare sqrt(n).
    """
    if spec.n0 < 2:
        raise ValueError("reduced model needs n0 >= 2 to leave at least a qubit")
    chi = params.chi_m[mode]
    n = np.arange(spec.n0)
    diag = np.array([stark_shift(k, spec.n0, chi, spec.omega, stark) for k in n])
    if include_kerr:
        diag = diag + 0.5 * params.kerr_m[mode] * n * (n - 1)
    a = annihilation_op(spec.n0)
    if dressed_couplings:
        mix = []
        for k in n:
            _, vecs = np.linalg.eigh([[0.0, spec.omega], [spec.omega, chi * (k - spec.n0)]])
            v = vecs[:, np.argmax(np.abs(vecs[0]))]
            mix.append(v * np.sign(v[0]))
        overlap = np.array([mix[k - 1] @ mix[k] for k in n[1:]])
        a = np.diag(np.sqrt(n[1:]) * overlap, 1)
    return np.diag(diag).astype(complex), [(a + a.T, -1j * (a - a.T))]


def dressed_energies(drift: np.ndarray, layout: SystemLayout) -> dict:
    """Map each bare label (transmon level, occupations) to the eigenvalue of
    the eigenvector with the largest overlap on it."""
    vals, vecs = np.linalg.eigh(drift)
    out = {}
    for idx in range(layout.total_dim):
        out[layout.occupations_of(idx)] = vals[np.argmax(np.abs(vecs[idx, :]))]
    return out


def dressed_single_photon_shifts(drift: np.ndarray, layout: SystemLayout) -> list[float]:
    """Dressed |g,0..1_m..0> - |g,0..0> energy for each mode.

    Used to put each cavity drive on its Stark-shifted single-photon line.
    """
    energies = dressed_energies(drift, layout)
    vac = (0,) * layout.n_modes
    out = []
    for m in range(layout.n_modes):
        occ = tuple(1 if k == m else 0 for k in range(layout.n_modes))
        out.append(float(energies[(0, occ)] - energies[(0, vac)]))
    return out


def photon_number_projector(layout: SystemLayout, min_total: int, modes: Sequence[int] | None = None) -> np.ndarray:
    """Projector on all basis states whose photon count in ``modes`` is >= min_total.

    Because the drift is block diagonal in photon number, this is also the
    projector on the dressed eigenstates at and above the blockaded level.
    """
    modes = range(layout.n_modes) if modes is None else list(modes)
    diag = np.zeros(layout.total_dim)
    for idx in range(layout.total_dim):
        _, occ = layout.occupations_of(idx)
        if sum(occ[m] for m in modes) >= min_total:
            diag[idx] = 1.0
    return np.diag(diag).astype(complex)
