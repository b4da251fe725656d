import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockade_lab.operators import (
    DimensionError,
    SystemLayout,
    annihilation_op,
    creation_op,
    displacement_op,
    embed_operator,
    fock_state,
    format_matrix,
    is_hermitian,
    is_physical,
    is_unitary,
    mode_op,
    number_op,
    parse_matrix,
    partial_trace,
    tensor,
    truncate_modes,
)

layouts = st.builds(
    SystemLayout,
    st.integers(1, 3),
    st.lists(st.integers(1, 5), min_size=0, max_size=3).map(tuple),
)


def test_annihilation_dim3():
    a = annihilation_op(3)
    expected = np.zeros((3, 3))
    expected[0, 1] = 1
    expected[1, 2] = np.sqrt(2)
    assert np.array_equal(a, expected)


def test_annihilation_dim1_is_zero():
    assert annihilation_op(1).shape == (1, 1)
    assert annihilation_op(1)[0, 0] == 0


def test_commutator_truncation_artifact():
    a = annihilation_op(10)
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(np.diag(comm)[:9], 1)
    assert np.isclose(comm[9, 9], -9)
    assert np.allclose(comm - np.diag(np.diag(comm)), 0)


def test_number_op():
    assert np.array_equal(np.diag(number_op(4)).real, [0, 1, 2, 3])
    ket = np.zeros(4)
    ket[2] = 1
    assert np.allclose(number_op(4) @ ket, 2 * ket)
    assert np.allclose(number_op(6), creation_op(6) @ annihilation_op(6), atol=1e-12)


def test_bad_dims_rejected():
    for bad in (0, -1, 2.5):
        with pytest.raises(DimensionError):
            annihilation_op(bad)


def test_displacement_examples():
    assert np.array_equal(displacement_op(5, 0), np.eye(5))
    assert abs(abs(displacement_op(24, 1.0)[0, 0]) - np.exp(-0.5)) < 1e-4
    for alpha in (0.5, 1.3j, -2.0, 1.2 - 1.2j):
        prod = displacement_op(30, alpha) @ displacement_op(30, -alpha)
        assert np.allclose(prod, np.eye(30), atol=1e-8)


def test_displacement_rejects_nonfinite():
    with pytest.raises(ValueError):
        displacement_op(4, complex(np.nan, 0))


def test_displacement_unitary_and_truncation_monotone():
    dim = 16
    devs = []
    for r in np.linspace(0.0, 2.0, 9):
        assert is_unitary(displacement_op(dim, r), tol=1e-8)
    # truncation error in the vacuum column grows with |alpha|
    for r in np.linspace(0.5, 3.5, 7):
        col = displacement_op(dim, r)[:, 0]
        exact = np.exp(-r * r / 2) * np.array([r**n / np.sqrt(float(np.prod(np.arange(1, n + 1)))) for n in range(dim)])
        devs.append(np.max(np.abs(col - exact)))
    assert all(b >= a for a, b in zip(devs, devs[1:]))


def test_embed_examples():
    layout = SystemLayout(2, (4, 4))
    assert np.array_equal(embed_operator(layout, 1, np.eye(4)), np.eye(32))
    a0 = mode_op(layout, 0, annihilation_op(4))
    a1 = mode_op(layout, 1, annihilation_op(4))
    assert np.max(np.abs(a0 @ a1 - a1 @ a0)) < 1e-12
    n0 = mode_op(layout, 0, number_op(4))
    idx = layout.index_of(0, (1, 0))
    assert n0[idx, idx] == 1
    psi = fock_state(layout, 0, (1, 0))
    assert np.isclose(np.vdot(psi, n0 @ psi), 1)


def test_embed_shape_mismatch():
    with pytest.raises(DimensionError):
        embed_operator(SystemLayout(2, (3,)), 1, np.eye(4))


def test_layout_order_last_fastest():
    layout = SystemLayout(2, (3, 4))
    assert layout.index_of(0, (0, 1)) == 1
    assert layout.index_of(0, (1, 0)) == 4
    assert layout.index_of(1, (0, 0)) == 12
    assert layout.total_dim == 24


def test_fock_state_vacuum_is_index_zero():
    layout = SystemLayout(2, (3, 3))
    psi = fock_state(layout, 0, (0, 0))
    assert psi[0] == 1 and np.linalg.norm(psi) == 1


def test_fock_state_out_of_range():
    with pytest.raises(IndexError):
        fock_state(SystemLayout(2, (3,)), 0, (3,))


@given(layouts)
def test_index_round_trip_exhaustive(layout):
    for idx in range(layout.total_dim):
        q, occ = layout.occupations_of(idx)
        assert layout.index_of(q, occ) == idx


@given(st.integers(1, 64))
@settings(max_examples=30)
def test_ladder_matrix_elements(dim):
    a = annihilation_op(dim)
    m, n = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    expected = np.where(m == n - 1, np.sqrt(n), 0.0)
    assert np.array_equal(a.real, expected)
    assert np.array_equal(creation_op(dim), a.T)


@given(st.integers(4, 30), st.floats(0, 1), st.floats(0, 2 * np.pi))
@settings(max_examples=30, deadline=None)
def test_displacement_unitary_inside_guard(dim, frac, phase):
    r = frac * np.sqrt(dim / 4)
    assert is_unitary(displacement_op(dim, r * np.exp(1j * phase)), tol=1e-8)


@given(st.integers(0, 2), st.integers(0, 2**31 - 1))
@settings(max_examples=25)
def test_embed_preserves_hermitian_and_unitary(site, seed):
    layout = SystemLayout(2, (3, 2))
    d = layout.dims[site]
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = x + x.conj().T
    u = np.linalg.qr(x)[0]
    assert is_hermitian(embed_operator(layout, site, h))
    assert is_unitary(embed_operator(layout, site, u))


def test_checks():
    assert is_hermitian(np.array([[1, 1j], [-1j, 2]]))
    assert not is_hermitian(np.array([[0, 1], [0, 0]]))
    assert is_physical(np.eye(3) / 3)
    assert not is_physical(np.diag([1.1, -0.1]))


def test_partial_trace_and_truncate():
    a = np.diag([0.25, 0.75])
    b = np.diag([0.5, 0.3, 0.2])
    rho = tensor(a, b)
    assert np.allclose(partial_trace(rho, (2, 3), [1]), b)
    assert np.allclose(partial_trace(rho, (2, 3), [0]), a)
    small = truncate_modes(rho, (2, 3), (2, 2))
    assert small.shape == (4, 4)


def test_matrix_text_round_trip(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.array_equal(parse_matrix(format_matrix(m)), m)
