"""Regenerate the synthetic calibration datasets in scenarios/data/.

The files are noise free so that fits can be checked against the injected
parameters; run from the repository root.
"""

import csv
from pathlib import Path

import numpy as np

from blockade_lab.analysis import cavity_ramsey_signal

TWO_PI = 2 * np.pi
OUT = Path("scenarios/data")


def write(path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    # cavity Ramsey: 50 kHz detuning, self-Kerr -9 kHz, displacements 0.3..1.5
    t = np.linspace(0, 60e-6, 121)
    rows = []
    for alpha in np.linspace(0.3, 1.5, 5):
        y = cavity_ramsey_signal(t, alpha, TWO_PI * 50e3, TWO_PI * -9e3)
        rows += [(ti, alpha, yi) for ti, yi in zip(t, y)]
    write(OUT / "cavity_ramsey_kerr.csv", ["t_s", "alpha", "y"], rows)
    # transmon Ramsey: 200 kHz fringe, T2 = 58 us
    t = np.linspace(0, 40e-6, 401)
    y = 0.5 + 0.5 * np.cos(TWO_PI * 200e3 * t) * np.exp(-t / 58e-6)
    write(OUT / "qubit_ramsey.csv", ["t_s", "y"], zip(t, y))


if __name__ == "__main__":
    main()
