"""Truncated Fock-space operator algebra.

Subsystem order is (transmon, mode 0, mode 1, ...) and the last subsystem
varies fastest in the flattened index, i.e. the usual ``np.kron`` order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12


class DimensionError(ValueError):
    """Invalid dimension or mismatched operator shape."""


@dataclass(frozen=True)
class SystemLayout:
    """Shape of the truncated Hilbert space.

    Attributes:
        transmon_levels: number of transmon levels kept (2 for g/e).
        mode_dims: Fock truncation of each cavity mode.
    """

    transmon_levels: int
    mode_dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "mode_dims", tuple(int(d) for d in self.mode_dims))
        if self.transmon_levels < 1 or any(d < 1 for d in self.mode_dims):
            raise DimensionError(f"all subsystem dims must be >= 1, got {self.dims}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.transmon_levels,) + self.mode_dims

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index_of(self, transmon_level: int, occupations: Sequence[int]) -> int:
        occ = tuple(occupations)
        if len(occ) != self.n_modes:
            raise DimensionError(f"expected {self.n_modes} occupations, got {len(occ)}")
        if not 0 <= transmon_level < self.transmon_levels:
            raise IndexError(f"transmon level {transmon_level} out of range")
        for n, d in zip(occ, self.mode_dims):
            if not 0 <= n < d:
                raise IndexError(f"occupation {n} outside truncation {d}")
        return int(np.ravel_multi_index((transmon_level,) + occ, self.dims))

    def occupations_of(self, index: int) -> tuple[int, tuple[int, ...]]:
        """Inverse of :meth:`index_of`: returns (transmon_level, occupations)."""
        if not 0 <= index < self.total_dim:
            raise IndexError(f"index {index} outside [0, {self.total_dim})")
        levels = np.unravel_index(index, self.dims)
        return int(levels[0]), tuple(int(x) for x in levels[1:])


def _check_dim(dim: int) -> int:
    if int(dim) != dim or dim < 1:
        raise DimensionError(f"dimension must be a positive integer, got {dim}")
    return int(dim)


def annihilation_op(dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def creation_op(dim: int) -> np.ndarray:
    return annihilation_op(dim).T.copy()


def number_op(dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def displacement_op(dim: int, alpha: complex) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha^* a) on the truncated space.

    Accurate while |alpha|^2 is well below dim/4; this is not enforced since
    point-set searches probe that boundary on purpose.
    """
    dim = _check_dim(dim)
    alpha = complex(alpha)
    if not np.isfinite(alpha):
        raise ValueError(f"displacement amplitude must be finite, got {alpha}")
    if alpha == 0:
        return np.eye(dim, dtype=complex)
    a = annihilation_op(dim)
    return scipy.linalg.expm(alpha * a.T - np.conj(alpha) * a)


def projector(dim: int, n: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[n, n] = 1.0
    return p


def embed_operator(layout: SystemLayout, site: int, op: np.ndarray) -> np.ndarray:
    """Lift ``op`` acting on subsystem ``site`` into the full tensor space.

    Site 0 is the transmon, site m+1 is cavity mode m.
    """
    dims = layout.dims
    if not 0 <= site < len(dims):
        raise DimensionError(f"site {site} outside 0..{len(dims) - 1}")
    op = np.asarray(op, dtype=complex)
    if op.shape != (dims[site], dims[site]):
        raise DimensionError(f"operator shape {op.shape} does not match site dim {dims[site]}")
    left = int(np.prod(dims[:site]))
    right = int(np.prod(dims[site + 1:]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def mode_op(layout: SystemLayout, mode: int, op: np.ndarray) -> np.ndarray:
    """Shorthand for embedding an operator on cavity mode ``mode``."""
    return embed_operator(layout, mode + 1, op)


def transmon_op(layout: SystemLayout, op: np.ndarray) -> np.ndarray:
    return embed_operator(layout, 0, op)


def tensor(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops)


def fock_state(layout: SystemLayout, transmon_level: int, occupations: Sequence[int]) -> np.ndarray:
    psi = np.zeros(layout.total_dim, dtype=complex)
    psi[layout.index_of(transmon_level, occupations)] = 1.0
    return psi


def ket2dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.shape[0] == a.shape[1] and float(np.max(np.abs(a - a.conj().T), initial=0.0)) < tol


def is_unitary(a: np.ndarray, tol: float = 1e-10) -> bool:
    a = np.asarray(a)
    if a.shape[0] != a.shape[1]:
        return False
    return float(np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0])))) < tol


def is_physical(rho: np.ndarray, tol: float = 1e-10) -> bool:
    """Hermitian, unit trace and eigenvalues above ``-tol``."""
    rho = np.asarray(rho)
    if not is_hermitian(rho, 1e-10):
        return False
    if abs(np.trace(rho) - 1) > 1e-12 + tol:
        return False
    return bool(np.min(np.linalg.eigvalsh(rho)) >= -tol)


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on the subsystems listed in ``keep``."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    r = np.asarray(rho).reshape(dims + dims)
    # trace out from the highest index down so axis numbers stay valid
    for count, i in enumerate(sorted(traced, reverse=True)):
        remaining = n - count
        r = np.trace(r, axis1=i, axis2=i + remaining)
    d = int(np.prod([dims[i] for i in keep]))
    return r.reshape(d, d)


def cavity_state(rho: np.ndarray, layout: SystemLayout) -> np.ndarray:
    """Trace out the transmon."""
    if np.ndim(rho) == 1:
        rho = ket2dm(rho)
    return partial_trace(rho, layout.dims, range(1, len(layout.dims)))


def truncate_modes(rho: np.ndarray, mode_dims: Sequence[int], keep_dims: Sequence[int]) -> np.ndarray:
    """Restrict a multimode operator to the lowest ``keep_dims`` Fock levels per mode."""
    mode_dims = list(mode_dims)
    grids = np.meshgrid(*[np.arange(k) for k in keep_dims], indexing="ij")
    idx = np.ravel_multi_index(tuple(g.ravel() for g in grids), mode_dims)
    return np.asarray(rho)[np.ix_(idx, idx)]


# --- plain-text matrix format: header "rows cols", then "re im" pairs row-major ---

def format_matrix(a: np.ndarray) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    rows, cols = a.shape
    lines = [f"{rows} {cols}"]
    for row in a:
        lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError("matrix text is missing the 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = np.array(tokens[2:], dtype=float)
    if values.size != 2 * rows * cols:
        raise ValueError(f"expected {2 * rows * cols} numbers after header, found {values.size}")
    return (values[0::2] + 1j * values[1::2]).reshape(rows, cols)


def save_matrix(path: str | Path, a: np.ndarray) -> None:
    Path(path).write_text(format_matrix(a))


def load_matrix(path: str | Path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())
