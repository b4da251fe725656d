"""Checks on the outputs of the shipped scenarios (shared session run)."""

import numpy as np
import pytest

from blockade_lab.tomography import WignerPointSet

from conftest import read_summary


def out(runs, name, file):
    return runs[name][0] / file


def test_blockade_rabi_summary(scenario_runs):
    s = read_summary(out(scenario_runs, "blockade_rabi", "summary.txt"))
    assert float(s["peak_P1"]) > 0.95
    assert abs(float(s["peak_P1_time_s"]) - 25e-6) < 2e-6


def test_zero_drive_stays_in_vacuum(scenario_runs):
    s = read_summary(out(scenario_runs, "zero_drive", "summary.txt"))
    assert float(s["fidelity"]) == pytest.approx(1.0, abs=1e-12)


def test_w2_fidelity_window(scenario_runs):
    assert 0.90 <= float(read_summary(out(scenario_runs, "w2_prep", "summary.txt"))["fidelity"]) <= 0.94


def test_grape_fock1_closed_fidelity(scenario_runs):
    s = read_summary(out(scenario_runs, "fock1_blockade3", "summary.txt"))
    assert float(s["closed_fidelity"]) >= 0.99
    log = out(scenario_runs, "fock1_blockade3", "grape_log.csv").read_text().splitlines()
    assert len(log) > 2


def test_single_mode_design_header(scenario_runs):
    text = out(scenario_runs, "tomo_single_mode", "point_set.csv").read_text()
    kappa = float(text.splitlines()[0].split("=")[1])
    assert kappa <= 2.5
    ps = WignerPointSet.from_csv(text)
    assert ps.dims == (8,) and ps.n_settings == 75
    assert np.isclose(ps.condition_number, kappa)


def test_vacuum_round_trip(scenario_runs):
    assert float(read_summary(out(scenario_runs, "tomo_vacuum", "report.txt"))["fidelity"]) > 0.9999


def test_w3_round_trip(scenario_runs):
    rep = read_summary(out(scenario_runs, "tomo_w3", "report.txt"))
    assert float(rep["fidelity"]) > 0.97
    design = read_summary(out(scenario_runs, "tomo_w3", "design_summary.txt"))
    assert all(float(k) <= 2.0 for k in design["per_mode_condition_numbers"].split())


def test_fit_scenarios(scenario_runs):
    kerr = read_summary(out(scenario_runs, "fit_kerr", "fit_report.txt"))
    assert abs(float(kerr["kerr_hz"]) / -9e3 - 1) < 0.01
    ramsey = read_summary(out(scenario_runs, "fit_ramsey", "fit_report.txt"))
    assert abs(float(ramsey["frequency_hz"]) / 200e3 - 1) < 1e-4
