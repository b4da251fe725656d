"""Time the compiled RK4 kernel against the numpy/scipy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--steps N]

Each case integrates the Liouvillian of a shipped-style system with both
backends from the same initial state and reports wall time per step and
the largest difference between the two final states.
"""

import argparse
import time

import numpy as np

from blockade_lab import lindblad
from blockade_lab._kernels import _rk4_py
from blockade_lab.hamiltonian import TWO_PI, BlockadeSpec, DeviceParams, build_multimode_blockade_hamiltonian
from blockade_lab.operators import SystemLayout, fock_state, ket2dm

try:
    from blockade_lab._kernels._rk4 import rk4_csr as rk4_cython
except ImportError:
    rk4_cython = None


def device(n_modes):
    chis = (-1.244e6, -1.136e6, -0.955e6)[:n_modes]
    return DeviceParams(
        omega_q=TWO_PI * 4.99e9,
        omega_m=tuple(TWO_PI * (6.223e9 + 0.25e9 * k) for k in range(n_modes)),
        chi_m=tuple(TWO_PI * c for c in chis),
        kerr_m=(TWO_PI * -9e3,) * n_modes,
        cross_kerr=None,
        T1_q=86e-6,
        T2_q=58e-6,
        nth_q=0.012,
        T1_m=(2e-3,) * n_modes,
    )


def case(n_modes, dim):
    params = device(n_modes)
    layout = SystemLayout(2, (dim,) * n_modes)
    spec = BlockadeSpec(tuple(range(n_modes)), 2, TWO_PI * 200e3)
    drift, gens = build_multimode_blockade_hamiltonian(params, layout, spec)
    liou = lindblad._Liouvillian(drift, gens, lindblad.standard_channels(params, layout))
    coeffs = np.full(2 * len(gens), TWO_PI * 10e3)
    data = liou.generator(coeffs)
    rho0 = ket2dm(fock_state(layout, 0, (0,) * n_modes)).ravel()
    h = 1.0 / (50 * np.abs(drift).sum(axis=1).max())
    return f"{n_modes} mode(s), d={dim}, N={layout.total_dim}", data, liou, rho0, h


def timed(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args()
    print(f"{'case':<28}{'python us/step':>16}{'cython us/step':>16}{'speedup':>10}{'max diff':>12}")
    for n_modes, dim in ((1, 6), (1, 10), (2, 3), (3, 3)):
        label, data, liou, rho0, h = case(n_modes, dim)
        kargs = (data, liou.indices, liou.indptr, rho0, h, args.steps)
        t_py, y_py = timed(_rk4_py.rk4_csr, kargs, args.repeats)
        if rk4_cython is None:
            print(f"{label:<28}{1e6 * t_py / args.steps:>16.1f}{'n/a':>16}")
            continue
        t_cy, y_cy = timed(rk4_cython, kargs, args.repeats)
        diff = float(np.max(np.abs(y_py - y_cy)))
        print(f"{label:<28}{1e6 * t_py / args.steps:>16.1f}{1e6 * t_cy / args.steps:>16.1f}"
              f"{t_py / t_cy:>10.2f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
