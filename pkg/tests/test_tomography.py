import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockade_lab.analysis import state_fidelity
from blockade_lab.tomography import (
    CalibrationError,
    MeasurementRecord,
    UninvertiblePointSetError,
    WignerPointSet,
    build_measurement_matrix,
    contrast_correction,
    generalized_wigner_operator,
    hermitian_to_real,
    optimize_point_set,
    per_mode_condition_numbers,
    product_point_set,
    real_to_hermitian,
    reconstruct,
    restricted_wigner_operator,
    simulate_measurements,
    single_mode_point_set,
    smolin_project,
    trace_distance,
)


def random_state(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_wigner_examples():
    vac = np.eye(20)[0]
    w = generalized_wigner_operator((20,), (0,), (np.pi,))
    assert np.isclose(np.vdot(vac, w @ vac).real, 1)
    w1 = generalized_wigner_operator((20,), (1.0,), (np.pi,))
    assert abs(np.vdot(vac, w1 @ vac).real - np.exp(-2)) < 1e-3
    r1 = restricted_wigner_operator((2,), (1.0,), (np.pi,))
    assert abs(r1[0, 0].real - np.exp(-2)) < 1e-12
    for theta in (0.3, 1.7, np.pi, 4.0):
        w = restricted_wigner_operator((3,), (0,), (theta,))
        assert np.isclose(w[1, 1].real, np.cos(theta))


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.1, 2 * np.pi - 0.1), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_wigner_operator_hermitian_and_bounded(re, im, theta, d):
    w = restricted_wigner_operator((d,), (complex(re, im),), (theta,))
    assert np.max(np.abs(w - w.conj().T)) < 1e-12
    vals = np.linalg.eigvalsh(w)
    assert vals.min() >= -1 - 1e-10 and vals.max() <= 1 + 1e-10


def test_joint_parity_equals_product_of_parities():
    dims = (3, 4)
    parity = np.diag([(-1.0) ** (a + b) for a in range(3) for b in range(4)])
    assert np.array_equal(generalized_wigner_operator(dims, (0, 0), (np.pi, np.pi)), parity)
    alphas = (0.4 - 0.2j, -0.7j)
    joint = generalized_wigner_operator(dims, alphas, (np.pi, np.pi), form="joint")
    prod = generalized_wigner_operator(dims, alphas, (np.pi, np.pi), form="product")
    assert np.max(np.abs(joint - prod)) < 1e-12
    rj = restricted_wigner_operator(dims, alphas, (np.pi, np.pi), form="joint")
    rp = restricted_wigner_operator(dims, alphas, (np.pi, np.pi), form="product")
    assert np.max(np.abs(rj - rp)) < 1e-12


def test_joint_and_product_differ_off_pi():
    rj = restricted_wigner_operator((2, 2), (0, 0), (1.0, 2.0), form="joint")
    rp = restricted_wigner_operator((2, 2), (0, 0), (1.0, 2.0), form="product")
    assert not np.allclose(rj, rp)


def test_small_set_full_rank():
    ps = single_mode_point_set(2, [0, 0.9, 0.9j, -0.6])
    m, kappa = build_measurement_matrix(ps)
    assert m.shape == (4, 4) and np.linalg.matrix_rank(m) == 4
    assert 1 <= kappa < np.inf


def test_duplicated_settings():
    pts = [0, 0.9, 0.9j, -0.6, 0.5 + 0.5j]
    _, k = build_measurement_matrix(single_mode_point_set(2, pts))
    _, k_all = build_measurement_matrix(single_mode_point_set(2, pts + pts))
    assert np.isclose(k, k_all, rtol=1e-12)
    _, k_one = build_measurement_matrix(single_mode_point_set(2, pts + [pts[1]]))
    assert k / np.sqrt(2) - 1e-12 <= k_one <= k * np.sqrt(2) + 1e-12


@given(st.lists(st.complex_numbers(max_magnitude=2.0), min_size=4, max_size=8))
@settings(max_examples=30, deadline=None)
def test_kappa_at_least_one(points):
    try:
        _, k = build_measurement_matrix(single_mode_point_set(2, points))
    except UninvertiblePointSetError:
        return
    assert k >= 1


def test_too_few_settings_uninvertible():
    with pytest.raises(UninvertiblePointSetError):
        build_measurement_matrix(single_mode_point_set(3, [0, 1, 1j]))
    with pytest.raises(UninvertiblePointSetError):
        build_measurement_matrix(single_mode_point_set(2, [0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(UninvertiblePointSetError):
        optimize_point_set(3, 4)


def test_optimizer_small_case():
    ps = optimize_point_set(2, 4, seed=0, proposals=500)
    assert ps.condition_number <= 2


def test_more_points_do_not_hurt():
    small = [optimize_point_set(3, 9, seed=s, proposals=200).condition_number for s in range(10)]
    large = [optimize_point_set(3, 14, seed=s, proposals=200).condition_number for s in range(10)]
    assert np.mean(large) <= np.mean(small)
    assert min(large) <= min(small)


def test_reported_multimode_angles_per_mode_kappa():
    angles = (3.44, np.pi, 2.64)
    per_mode = [list(optimize_point_set(3, 18, angles=(a,), seed=m, proposals=300).settings)
                for m, a in enumerate(angles)]
    pts = [[s[0][0] for s in settings_] for settings_ in per_mode]
    ps = product_point_set((3, 3, 3), pts, [angles])
    kappas = per_mode_condition_numbers(ps, pts)
    assert max(kappas) <= 2.5


def test_simulate_examples(rng):
    ps = single_mode_point_set(4, [r * np.exp(1j * (0.7 * k + r)) for k in range(5) for r in (0.4, 0.8, 1.2, 1.6)])
    vac = np.zeros((4, 4))
    vac[0, 0] = 1
    assert simulate_measurements(vac, single_mode_point_set(4, [0])).values[0] == pytest.approx(1.0)
    rho = random_state(rng, 4)
    rec = simulate_measurements(rho, ps)
    m, _ = build_measurement_matrix(ps)
    assert np.allclose(rec.values, m @ hermitian_to_real(rho), atol=1e-13)


def test_noise_level():
    ps = single_mode_point_set(2, [0.3] * 1000)
    rho = np.diag([0.7, 0.3])
    clean = simulate_measurements(rho, single_mode_point_set(2, [0.3])).values[0]
    rec = simulate_measurements(rho, ps, 0.05, seed=4)
    assert abs(np.std(rec.values - clean) / 0.05 - 1) < 0.1
    again = simulate_measurements(rho, ps, 0.05, seed=4)
    assert np.array_equal(rec.values, again.values)


def test_transmon_sign_readout():
    ps = single_mode_point_set(2, [0])
    psi_e0 = np.kron([0, 1], [1, 0])
    rec = simulate_measurements(psi_e0, ps, transmon_levels=2)
    assert rec.values[0] == pytest.approx(-1.0)


def test_reconstruct_vacuum_and_pure(rng):
    ps = optimize_point_set(4, 20, seed=1, proposals=300)
    vac = np.zeros((4, 4), dtype=complex)
    vac[0, 0] = 1
    res = reconstruct(ps, simulate_measurements(vac, ps), target=vac)
    assert res.fidelity > 0.9999
    psi = random_pure(rng, 4)
    res = reconstruct(ps, simulate_measurements(psi, ps), target=psi)
    assert res.fidelity > 0.999
    assert abs(res.trace_before_projection - 1) < 1e-10


@given(st.integers(0, 2**31 - 1), st.integers(2, 8))
@settings(max_examples=15, deadline=None)
def test_round_trip_single_mode(seed, d):
    rng = np.random.default_rng(seed)
    pts = [r * np.exp(1j * t) for r, t in zip(np.sqrt(rng.uniform(0, d, 2 * d * d)), rng.uniform(0, 2 * np.pi, 2 * d * d))]
    ps = single_mode_point_set(d, pts)
    rho = random_state(rng, d)
    res = reconstruct(ps, simulate_measurements(rho, ps))
    assert state_fidelity(res.rho, rho, "uhlmann") > 0.999
    assert abs(np.trace(res.raw_rho).real - 1) < 1e-10


def test_round_trip_three_modes(rng):
    per_mode = [[0, 0.9, 0.9j, -0.6], [0, 0.8, -0.8j, 0.5 + 0.4j], [0, -0.9, 0.7j, 0.6 - 0.3j]]
    ps = product_point_set((2, 2, 2), per_mode, [(np.pi, np.pi, np.pi)])
    for _ in range(3):
        rho = random_state(rng, 8, rank=2)
        res = reconstruct(ps, simulate_measurements(rho, ps))
        assert state_fidelity(res.rho, rho, "uhlmann") > 0.999


def test_noise_budget_over_seeds(rng):
    ps = optimize_point_set(4, 20, seed=2, proposals=300)
    m, kappa = build_measurement_matrix(ps)
    sigma = 0.01
    budget = kappa * sigma * np.sqrt(ps.n_settings)
    rho = random_state(rng, 4)
    errs = [trace_distance(reconstruct(ps, simulate_measurements(rho, ps, sigma, seed=s), matrix=m).rho, rho)
            for s in range(100)]
    assert max(errs) <= budget


def test_smolin_examples(rng):
    out = smolin_project(np.diag([0.5, 0.6, -0.1]))
    assert np.allclose(out, np.diag([0.45, 0.55, 0.0]), atol=1e-15, rtol=0)
    mixed = np.eye(4) / 4
    assert np.array_equal(smolin_project(mixed), mixed)
    rho = random_state(rng, 5)
    assert np.max(np.abs(smolin_project(rho) - rho)) < 1e-12
    with pytest.raises(ValueError):
        smolin_project(np.array([[0, 1], [0, 0]]))


@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
@settings(max_examples=100, deadline=None)
def test_smolin_idempotent_trace_preserving(seed, d):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = h + h.conj().T
    h = h - (np.trace(h).real - 1) / d * np.eye(d)
    if np.all(np.linalg.eigvalsh(h) <= 0):
        return
    once = smolin_project(h)
    assert abs(np.trace(once).real - 1) < 1e-10
    assert np.min(np.linalg.eigvalsh(once)) > -1e-12
    assert np.max(np.abs(smolin_project(once) - once)) < 1e-12


def test_contrast_correction():
    x = np.array([0.2, 0.5, 0.9])
    assert np.array_equal(contrast_correction(x, 1, 0), x)
    assert contrast_correction([0.5], 0.9, 0.1)[0] == pytest.approx(0.5)
    assert np.allclose(contrast_correction([0.9, 0.1], 0.9, 0.1), [1, 0])
    with pytest.raises(CalibrationError):
        contrast_correction(x, 0.1, 0.9)


def test_file_round_trips(tmp_path, rng):
    ps = product_point_set((2, 3), [[0, 0.5j], [0.1 - 0.2j, 1.0, -1]], [(np.pi, 2.0), (1.0, np.pi)])
    ps.save(tmp_path / "ps.csv")
    back = WignerPointSet.load(tmp_path / "ps.csv")
    assert back.dims == ps.dims and back.settings == ps.settings and back.form == ps.form
    rec = MeasurementRecord(rng.uniform(-1, 1, 7), np.full(7, 0.01), 0.06)
    rec.save(tmp_path / "rec.csv")
    again = MeasurementRecord.load(tmp_path / "rec.csv")
    assert np.array_equal(again.values, rec.values)


def test_real_parametrisation_round_trip(rng):
    rho = random_state(rng, 5)
    assert np.allclose(real_to_hermitian(hermitian_to_real(rho), 5), rho, atol=1e-15)
