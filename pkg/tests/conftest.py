import time
from pathlib import Path

import numpy as np
import pytest

from blockade_lab import cli
from blockade_lab.config import load_device

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# command sequence for every shipped scenario
PIPELINES = {
    "blockade_rabi": [["simulate"]],
    "zero_drive": [["simulate"]],
    "w2_prep": [["simulate"]],
    "w3_prep": [["simulate"]],
    "fock1_blockade3": [["grape"]],
    "fock2_blockade3": [["grape"]],
    "tomo_single_mode": [["tomo", "design"], ["tomo", "simulate"], ["tomo", "reconstruct"]],
    "tomo_vacuum": [["tomo", "design"], ["tomo", "simulate"], ["tomo", "reconstruct"]],
    "tomo_w3": [["tomo", "design"], ["tomo", "simulate"], ["tomo", "reconstruct"]],
    "tomo_w3_witness": [["tomo", "design"], ["tomo", "simulate"], ["tomo", "reconstruct"]],
    "fit_kerr": [["fit"]],
    "fit_ramsey": [["fit"]],
}

ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    print(ACCEPTANCE[-1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def run_pipeline(name: str, out: Path) -> float:
    """Run every command of a shipped scenario into ``out``; returns wall seconds."""
    start = time.perf_counter()
    for cmd in PIPELINES[name]:
        code = cli.main(cmd + ["--scenario", str(SCENARIOS / f"{name}.cfg"), "--out", str(out)])
        assert code == 0, f"{name} {cmd} exited with {code}"
    return time.perf_counter() - start


def read_summary(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out.setdefault(k, v)
    return out


@pytest.fixture(scope="session")
def scenario_runs(tmp_path_factory):
    """Each shipped scenario run twice into separate directories.

    Maps name -> (first_dir, second_dir, seconds of the first run).
    """
    base = tmp_path_factory.mktemp("scenarios")
    runs = {}
    for name in PIPELINES:
        a, b = base / "run1" / name, base / "run2" / name
        secs = run_pipeline(name, a)
        run_pipeline(name, b)
        runs[name] = (a, b, secs)
    return runs


@pytest.fixture(scope="session")
def device():
    return load_device(SCENARIOS / "device.cfg")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
