"""Generalized Wigner tomography of one or several cavity modes.

A setting is a tuple of per-mode displacements and Ramsey angles.  The
measured operator is ``D cos(sum_m theta_m N_m) D^dag`` with
``D = prod_m D(alpha_m)``; the product form ``prod_m D cos(theta_m N_m) D^dag``
is available with ``form="product"``.

Reconstruction works in the real orthonormal basis of Hermitian matrices

    E_jj,  (E_jk + E_kj)/sqrt2,  i(E_jk - E_kj)/sqrt2   (j < k)

so the measurement matrix and the bordered least-squares system are real.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize
from scipy.special import logsumexp

from .operators import annihilation_op, displacement_op, is_hermitian, tensor

SINGULAR_TOL = 1e-12


class UninvertiblePointSetError(ValueError):
    """The point set does not determine the state."""


class CalibrationError(ValueError):
    pass


# --- measurement operators -------------------------------------------------

def _work_dim(d: int, alpha: complex) -> int:
    # enough headroom that D(alpha) acting on |n < d> is not clipped by truncation
    return int(d + 24 + np.ceil(6 * abs(alpha) ** 2))


@lru_cache(maxsize=65536)
def _mode_block(d: int, alpha: complex, theta: float, kind: str) -> np.ndarray:
    """P D(alpha) f(theta N) D(alpha)^dag P on the lowest d levels.

    ``kind`` is "exp" for f = exp(i theta N) or "cos" for f = cos(theta N).
    """
    n = _work_dim(d, alpha)
    disp = displacement_op(n, alpha)
    phase = np.exp(1j * theta * np.arange(n))
    if kind == "cos":
        phase = phase.real.astype(complex)
    block = (disp[:d, :] * phase) @ disp[:d, :].conj().T
    block.setflags(write=False)
    return block


def restricted_wigner_operator(
    dims: Sequence[int],
    displacements: Sequence[complex],
    angles: Sequence[float],
    form: str = "joint",
) -> np.ndarray:
    """Generalized Wigner operator compressed onto the lowest ``dims`` levels of each mode.

    The operator is built in a larger truncation per mode before the
    compression, so the result is the exact matrix block of the
    infinite-dimensional operator.
    """
    dims, displacements, angles = _check_setting(dims, displacements, angles)
    keys = [(int(d), complex(a), float(t)) for d, a, t in zip(dims, displacements, angles)]
    if form == "product":
        return tensor(*[_mode_block(d, a, t, "cos") for d, a, t in keys])
    if form != "joint":
        raise ValueError(f"unknown operator form {form!r}")
    ex = tensor(*[_mode_block(d, a, t, "exp") for d, a, t in keys])
    return 0.5 * (ex + ex.conj().T)


def generalized_wigner_operator(
    mode_dims: Sequence[int],
    displacements: Sequence[complex],
    angles: Sequence[float],
    form: str = "joint",
) -> np.ndarray:
    """D cos(sum theta_m N_m) D^dag computed directly in the given truncation."""
    mode_dims, displacements, angles = _check_setting(mode_dims, displacements, angles)
    disp = tensor(*[displacement_op(d, a) for d, a in zip(mode_dims, displacements)])
    grids = np.meshgrid(*[np.arange(d) for d in mode_dims], indexing="ij")
    if form == "joint":
        diag = np.cos(sum(t * g for t, g in zip(angles, grids))).ravel()
    elif form == "product":
        diag = np.prod([np.cos(t * g) for t, g in zip(angles, grids)], axis=0).ravel()
    else:
        raise ValueError(f"unknown operator form {form!r}")
    return (disp * diag) @ disp.conj().T


def _check_setting(dims, displacements, angles):
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    displacements = tuple(complex(a) for a in np.atleast_1d(displacements))
    angles = tuple(float(t) for t in np.atleast_1d(angles))
    if not len(dims) == len(displacements) == len(angles):
        raise ValueError("need one displacement and one angle per mode")
    return dims, displacements, angles


# --- real Hermitian basis ----------------------------------------------------

def hermitian_to_real(a: np.ndarray) -> np.ndarray:
    """Coordinates Tr(a B_k) in the real Hermitian basis."""
    a = np.asarray(a)
    iu = np.triu_indices(a.shape[0], 1)
    upper = a[iu]
    return np.concatenate([np.diag(a).real, np.sqrt(2) * upper.real, np.sqrt(2) * upper.imag])


def real_to_hermitian(r: np.ndarray, dim: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    iu = np.triu_indices(dim, 1)
    m = len(iu[0])
    out = np.diag(r[:dim]).astype(complex)
    out[iu] = (r[dim:dim + m] + 1j * r[dim + m:]) / np.sqrt(2)
    out[(iu[1], iu[0])] = np.conj(out[iu])
    return out


def _trace_vector(dim: int) -> np.ndarray:
    t = np.zeros(dim * dim)
    t[:dim] = 1.0
    return t


# --- point sets ----------------------------------------------------------------

@dataclass
class WignerPointSet:
    """Tomography settings.

    ``settings`` is a list of (displacements, angles) with one entry per mode;
    ``dims`` is the reconstruction truncation of each mode.
    """

    dims: tuple[int, ...]
    settings: list[tuple[tuple[complex, ...], tuple[float, ...]]]
    form: str = "joint"
    condition_number: float | None = None

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.settings = [
            (tuple(complex(a) for a in alphas), tuple(float(t) for t in thetas)) for alphas, thetas in self.settings
        ]
        for alphas, thetas in self.settings:
            if len(alphas) != len(self.dims) or len(thetas) != len(self.dims):
                raise ValueError("every setting needs one displacement and one angle per mode")
            if any(not 0 < t < 2 * np.pi for t in thetas):
                raise ValueError(f"Ramsey angles must lie in (0, 2pi), got {thetas}")

    @property
    def n_settings(self) -> int:
        return len(self.settings)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def to_csv(self) -> str:
        buf = io.StringIO()
        kappa = "nan" if self.condition_number is None else repr(float(self.condition_number))
        buf.write(f"# kappa = {kappa}\n")
        buf.write(f"# dims = {' '.join(str(d) for d in self.dims)}\n")
        buf.write(f"# form = {self.form}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "re_alpha", "im_alpha", "setting_id", "theta"])
        for sid, (alphas, thetas) in enumerate(self.settings):
            for m, (a, t) in enumerate(zip(alphas, thetas)):
                w.writerow([m, repr(float(a.real)), repr(float(a.imag)), sid, repr(float(t))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "WignerPointSet":
        meta = {}
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
            elif line.strip():
                body.append(line)
        rows = list(csv.DictReader(body))
        if "dims" not in meta:
            raise ValueError("point-set file lacks the '# dims = ...' line")
        dims = tuple(int(x) for x in meta["dims"].split())
        grouped: dict[int, dict[int, tuple[complex, float]]] = {}
        for row in rows:
            sid, mode = int(row["setting_id"]), int(row["mode"])
            grouped.setdefault(sid, {})[mode] = (
                complex(float(row["re_alpha"]), float(row["im_alpha"])),
                float(row["theta"]),
            )
        settings = []
        for sid in sorted(grouped):
            per = grouped[sid]
            settings.append((tuple(per[m][0] for m in range(len(dims))), tuple(per[m][1] for m in range(len(dims)))))
        kappa = meta.get("kappa", "nan")
        return cls(dims, settings, meta.get("form", "joint"), None if kappa == "nan" else float(kappa))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> "WignerPointSet":
        return cls.from_csv(Path(path).read_text())


def single_mode_point_set(d: int, points: Sequence[complex], angles: Sequence[float] = (np.pi,)) -> WignerPointSet:
    """Every displacement measured at every Ramsey angle."""
    settings = [((complex(a),), (float(t),)) for t in angles for a in points]
    return WignerPointSet((d,), settings)


def product_point_set(
    dims: Sequence[int],
    per_mode_points: Sequence[Sequence[complex]],
    angle_sets: Sequence[Sequence[float]],
    form: str = "joint",
) -> WignerPointSet:
    """All combinations of per-mode displacements, repeated for each angle tuple."""
    settings = [
        (tuple(combo), tuple(angles))
        for angles in angle_sets
        for combo in itertools.product(*per_mode_points)
    ]
    return WignerPointSet(tuple(dims), settings, form)


def build_measurement_matrix(point_set: WignerPointSet) -> tuple[np.ndarray, float]:
    """Real matrix M with rows Tr(W_i B_k) and its condition number."""
    rows = [
        hermitian_to_real(restricted_wigner_operator(point_set.dims, alphas, thetas, point_set.form))
        for alphas, thetas in point_set.settings
    ]
    m = np.array(rows)
    kappa = condition_number(m)
    point_set.condition_number = kappa
    return m, kappa


def condition_number(m: np.ndarray) -> float:
    if m.shape[0] < m.shape[1]:
        raise UninvertiblePointSetError(f"{m.shape[0]} settings cannot fix {m.shape[1]} parameters")
    s = np.linalg.svd(m, compute_uv=False)
    if s[-1] < SINGULAR_TOL * max(1.0, s[0]):
        raise UninvertiblePointSetError(f"measurement matrix is rank deficient (sigma_min = {s[-1]:.3e})")
    return float(s[0] / s[-1])


class _RowModel:
    """Measurement rows of single-mode settings and their displacement derivatives.

    Uses a fixed working truncation and the eigendecomposition of a^dag - a,
    so D(alpha) restricted to the first d rows costs one d x n x n product.
    """

    def __init__(self, d: int, theta: float, max_abs_alpha: float):
        self.d = d
        n = int(d + 16 + np.ceil(4 * max_abs_alpha**2))
        self.n = n
        a = annihilation_op(n)
        ad = a.T
        lam, vecs = np.linalg.eigh(1j * (ad - a))
        self.lam, self.vecs = lam, vecs
        x = np.diag(np.cos(theta * np.arange(n))).astype(complex)
        self.gens = [x, (ad - a) @ x - x @ (ad - a), 1j * ((ad + a) @ x - x @ (ad + a))]

    def rows(self, alpha: complex, with_derivatives: bool = True):
        r, phi = abs(alpha), np.angle(alpha)
        ph = np.exp(1j * phi * np.arange(self.n))
        top = (ph[: self.d, None] * self.vecs[: self.d]) * np.exp(-1j * r * self.lam)
        dd = (top @ self.vecs.conj().T) * ph.conj()[None, :]
        gens = self.gens if with_derivatives else self.gens[:1]
        return [hermitian_to_real(dd @ g @ dd.conj().T) for g in gens]


def _surrogate(points: np.ndarray, models, p):
    """Smooth stand-in for log(kappa) and its gradient in (Re alpha, Im alpha)."""
    rows = [[m.rows(a) for m in models] for a in points]
    mat = np.array([r[0] for pr in rows for r in pr])
    d_re = np.array([r[1] for pr in rows for r in pr])
    d_im = np.array([r[2] for pr in rows for r in pr])
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    # floor keeps degenerate starting sets finite
    s = np.maximum(s, 1e-8 * s[0])
    if p is None:
        # frame potential Tr(A^-1) Tr(A) / n^2 with A = M^T M, minimal when A is proportional to I
        n = len(s)
        ta, tai = np.sum(s**2), np.sum(s**-2.0)
        val = np.log(ta * tai / n**2)
        grad_m = (u * (2 * s / ta - 2 * s**-3.0 / tai)) @ vt
    else:
        ls = np.log(s)
        l1, l2 = logsumexp(p * ls), logsumexp(-p * ls)
        val = (l1 + l2) / p
        grad_m = (u * ((np.exp(p * ls - l1) - np.exp(-p * ls - l2)) / s)) @ vt
    per_row_re = (grad_m * d_re).sum(1).reshape(len(points), -1).sum(1)
    per_row_im = (grad_m * d_im).sum(1).reshape(len(points), -1).sum(1)
    return val, np.concatenate([per_row_re, per_row_im])


def optimize_point_set(
    d: int,
    n_points: int,
    angles: Sequence[float] = (np.pi,),
    seed: int = 0,
    proposals: int = 2000,
    radius: float | None = None,
    relax: bool = True,
) -> WignerPointSet:
    """Search single-mode displacements for a small condition number.

    Points start uniformly in a disc of ``radius`` (default 0.95 sqrt(d)).
    With ``relax`` a smooth surrogate of log(kappa) is first minimised by
    L-BFGS inside the box |Re|, |Im| <= radius, sharpening the surrogate in
    stages.  A seeded random descent then kicks one point at a time and keeps
    the move only if kappa itself drops.
    """
    if n_points * len(angles) < d * d:
        raise UninvertiblePointSetError(f"{n_points} points x {len(angles)} angles < {d * d} parameters")
    rng = np.random.default_rng(seed)
    radius = 0.95 * float(np.sqrt(d)) if radius is None else float(radius)
    models = [_RowModel(d, float(t), np.sqrt(2) * radius + 0.5) for t in angles]
    pts = radius * np.sqrt(rng.uniform(0, 1, n_points)) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_points))

    if relax:
        x = np.concatenate([pts.real, pts.imag])
        bounds = [(-radius, radius)] * (2 * n_points)
        for p in (None, 4, 16, 64):
            res = scipy.optimize.minimize(
                lambda v: _surrogate(v[:n_points] + 1j * v[n_points:], models, p),
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 200},
            )
            x = res.x
        pts = x[:n_points] + 1j * x[n_points:]

    def rows_for(a):
        return [m.rows(a, with_derivatives=False)[0] for m in models]

    rows = np.array([rows_for(a) for a in pts])
    shape = (n_points * len(angles), d * d)

    def kappa_of(rs):
        s = np.linalg.svd(rs.reshape(shape), compute_uv=False)
        return s[0] / s[-1] if s[-1] > SINGULAR_TOL else np.inf

    best = kappa_of(rows)
    base = 0.05 * radius if relax else 0.3 * radius
    for k in range(proposals):
        scale = base * (1 - k / proposals) + 0.01
        i = rng.integers(n_points)
        cand = pts[i] + scale * (rng.normal() + 1j * rng.normal())
        if max(abs(cand.real), abs(cand.imag)) > radius:
            continue
        trial = rows.copy()
        trial[i] = rows_for(cand)
        kap = kappa_of(trial)
        if kap < best:
            best, rows, pts[i] = kap, trial, cand
    ps = single_mode_point_set(d, pts, angles)
    build_measurement_matrix(ps)
    return ps


def _cos_block(d: int, alpha: complex, theta: float) -> np.ndarray:
    ex = _mode_block(d, complex(alpha), float(theta), "exp")
    return 0.5 * (ex + ex.conj().T)


def per_mode_condition_numbers(point_set: WignerPointSet, per_mode_points: Sequence[Sequence[complex]],
                               dims: Sequence[int] | None = None) -> list[float]:
    """Condition number of each mode's own point list at that mode's angles."""
    dims = point_set.dims if dims is None else tuple(dims)
    angle_sets = sorted({thetas for _, thetas in point_set.settings})
    out = []
    for m, pts in enumerate(per_mode_points):
        single = single_mode_point_set(dims[m], pts, sorted({a[m] for a in angle_sets}))
        out.append(build_measurement_matrix(single)[1])
    return out


# --- records -------------------------------------------------------------------

@dataclass
class MeasurementRecord:
    values: np.ndarray
    sigma: np.ndarray | None = None
    noise_allowance: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.sigma is not None:
            self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), self.values.shape).copy()
        lim = 1.0 + self.noise_allowance + 1e-9
        if np.any(np.abs(self.values) > lim):
            raise ValueError(f"measurement values exceed [-{lim}, {lim}]")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting_id", "value", "sigma"])
        sig = self.sigma if self.sigma is not None else np.zeros_like(self.values)
        for i, (v, s) in enumerate(zip(self.values, sig)):
            w.writerow([i, repr(float(v)), repr(float(s))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementRecord":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("record file has no measurements")
        rows.sort(key=lambda r: int(r["setting_id"]))
        vals = np.array([float(r["value"]) for r in rows])
        sig = np.array([float(r["sigma"]) for r in rows])
        allowance = 6 * float(sig.max()) if sig.size else 0.0
        return cls(vals, sig, noise_allowance=allowance)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> "MeasurementRecord":
        return cls.from_csv(Path(path).read_text())


def simulate_measurements(
    rho_true: np.ndarray,
    point_set: WignerPointSet,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    state_dims: Sequence[int] | None = None,
    transmon_levels: int = 0,
) -> MeasurementRecord:
    """Ideal expectation values Tr[W_i rho] plus seeded gaussian noise.

    ``state_dims`` gives the per-mode truncation of ``rho_true`` (defaults to
    the point-set dims).  With ``transmon_levels = 2`` the state carries a
    leading transmon factor and the Ramsey readout measures
    ``Z_q (x) W_i``: a transmon left in |e> before the sequence flips the sign
    of the signal.
    """
    dims = point_set.dims if state_dims is None else tuple(int(d) for d in state_dims)
    rho = np.asarray(rho_true, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    cav = int(np.prod(dims))
    if transmon_levels:
        if rho.shape != (transmon_levels * cav,) * 2:
            raise ValueError(f"state shape {rho.shape} does not match transmon x modes {transmon_levels}x{cav}")
        blocks = rho.reshape(transmon_levels, cav, transmon_levels, cav)
        signs = np.where(np.arange(transmon_levels) == 0, 1.0, -1.0)
        rho = np.einsum("i,iaib->ab", signs, blocks)
    elif rho.shape != (cav, cav):
        raise ValueError(f"state shape {rho.shape} does not match mode dims {dims}")
    vals = np.array([
        np.einsum("ij,ji->", restricted_wigner_operator(dims, alphas, thetas, point_set.form), rho).real
        for alphas, thetas in point_set.settings
    ])
    sigma = None
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        vals = vals + rng.normal(0.0, noise_sigma, vals.shape)
        sigma = np.full(vals.shape, float(noise_sigma))
    return MeasurementRecord(vals, sigma, noise_allowance=6 * noise_sigma)


def contrast_correction(values, c1, c2) -> np.ndarray:
    """Map measured bounds (c1, c2) onto (1, 0), point by point."""
    values = np.asarray(values, dtype=float)
    c1 = np.broadcast_to(np.asarray(c1, dtype=float), values.shape)
    c2 = np.broadcast_to(np.asarray(c2, dtype=float), values.shape)
    if np.any(c1 <= c2):
        raise CalibrationError("contrast calibration needs c1 > c2 at every point")
    return (values - c2) / (c1 - c2)


# --- reconstruction -----------------------------------------------------------

@dataclass
class ReconstructionResult:
    rho: np.ndarray
    condition_number: float
    residual: float
    psd_adjustment: float
    trace_before_projection: float
    raw_rho: np.ndarray = field(repr=False, default=None)
    fidelity: float | None = None

    def report(self) -> str:
        lines = [
            f"condition_number = {float(self.condition_number)!r}",
            f"residual = {float(self.residual)!r}",
            f"psd_adjustment = {float(self.psd_adjustment)!r}",
            f"trace_before_projection = {float(self.trace_before_projection)!r}",
        ]
        if self.fidelity is not None:
            lines.append(f"fidelity = {float(self.fidelity)!r}")
        return "\n".join(lines) + "\n"


def smolin_project(rho_raw: np.ndarray) -> np.ndarray:
    """Nearest-in-spectrum PSD matrix: zero negative eigenvalues and spread their mass.

    Each round zeroes every negative eigenvalue and subtracts the removed
    (negative) mass equally from the eigenvalues still in play, until none is
    negative.  Eigenvectors are kept.
    """
    rho_raw = np.asarray(rho_raw, dtype=complex)
    if not is_hermitian(rho_raw, 1e-8):
        raise ValueError("input must be Hermitian")
    vals, vecs = np.linalg.eigh(0.5 * (rho_raw + rho_raw.conj().T))
    if np.all(vals <= 0):
        raise ValueError("no positive eigenvalue to redistribute onto")
    if np.all(vals >= 0):
        return rho_raw.copy()
    lam = vals.copy()
    active = np.ones(lam.size, dtype=bool)
    while True:
        neg = active & (lam < 0)
        if not neg.any():
            break
        mass = lam[neg].sum()
        lam[neg] = 0.0
        active &= ~neg
        if not active.any():
            raise ValueError("eigenvalue redistribution exhausted all levels")
        lam[active] += mass / active.sum()
    return (vecs * lam) @ vecs.conj().T


def reconstruct(
    point_set: WignerPointSet,
    record: MeasurementRecord,
    target: np.ndarray | None = None,
    matrix: np.ndarray | None = None,
) -> ReconstructionResult:
    """Trace-constrained least squares via the bordered normal equations, then PSD projection."""
    if matrix is None:
        m, kappa = build_measurement_matrix(point_set)
    else:
        m, kappa = matrix, condition_number(matrix)
    x = record.values
    if x.shape[0] != m.shape[0]:
        raise ValueError(f"{x.shape[0]} values for {m.shape[0]} settings")
    dim = point_set.total_dim
    t = _trace_vector(dim)
    n = m.shape[1]
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = m.T @ m
    kkt[:n, n] = t
    kkt[n, :n] = t
    rhs = np.concatenate([m.T @ x, [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise UninvertiblePointSetError("bordered system is singular") from exc
    r = sol[:n]
    raw = real_to_hermitian(r, dim)
    raw = 0.5 * (raw + raw.conj().T)
    trace_raw = float(np.trace(raw).real)
    rho = smolin_project(raw)
    adjustment = float(np.sum(np.abs(np.linalg.eigvalsh(rho) - np.linalg.eigvalsh(raw))) / 2)
    residual = float(np.linalg.norm(m @ r - x))
    fid = None
    if target is not None:
        from .analysis import state_fidelity

        fid = state_fidelity(rho, target)
    return ReconstructionResult(rho, kappa, residual, adjustment, trace_raw, raw, fid)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b)))))


def noise_error_budget(kappa: float, sigma: float, n_settings: int) -> float:
    """kappa * sigma * sqrt(n_settings): the noise vector norm amplified by kappa."""
    return float(kappa * sigma * np.sqrt(n_settings))
