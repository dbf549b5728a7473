import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsawtooth.analysis import participation_ratio
from qsawtooth.state import (
    ANGLE,
    MOMENTUM,
    BasisError,
    ExactPropagator,
    QuantumRegister,
    SawtoothParams,
    dense_map_matrix,
    exact_map_inverse,
    exact_map_iteration,
    init_momentum_eigenstate,
    inner_product,
    momentum_values,
    norm,
    random_register,
    transform_to_angle,
    transform_to_momentum,
)


def test_params_derived_quantities():
    p = SawtoothParams(7, K=-0.1)
    assert p.N == 128
    assert p.T == 2 * math.pi / 128
    assert abs(p.k * p.T - p.K) < 1e-15


@pytest.mark.parametrize("n_q, n0, m", [(6, 24, 56), (9, 194, 450)])
def test_default_initial_momentum(n_q, n0, m):
    p = SawtoothParams(n_q)
    assert p.n0 == n0
    reg = init_momentum_eigenstate(p)
    assert reg.amplitudes[m] == 1.0
    assert np.count_nonzero(reg.amplitudes) == 1


def test_centre_eigenstate():
    p = SawtoothParams(5, n0=0)
    reg = init_momentum_eigenstate(p)
    assert reg.amplitudes[16] == 1.0
    assert norm(reg) == 1.0


@pytest.mark.parametrize("n0", [-9, 8, 100])
def test_initial_momentum_out_of_band(n0):
    with pytest.raises(ValueError):
        SawtoothParams(4, n0=n0)


def test_register_rejects_wrong_length():
    with pytest.raises(ValueError):
        QuantumRegister(3, np.zeros(7))


def test_zero_momentum_is_flat_in_angle():
    reg = init_momentum_eigenstate(SawtoothParams(5, n0=0))
    psi = transform_to_angle(reg).amplitudes
    assert np.allclose(psi, np.full(32, 1 / math.sqrt(32)), atol=1e-15)


def test_angle_transform_against_dense_matrix():
    # n_q = 2, m = 3 carries n = 1
    amps = np.zeros(4, complex)
    amps[3] = 1
    psi = transform_to_angle(QuantumRegister(2, amps)).amplitudes
    theta = np.array([0, math.pi / 2, math.pi, 3 * math.pi / 2])
    assert np.allclose(psi, 0.5 * np.exp(1j * theta), atol=1e-15)


def test_angle_transform_general_formula():
    reg = random_register(5, 3)
    n = momentum_values(5)
    theta = 2 * np.pi * np.arange(32) / 32
    direct = np.exp(1j * np.outer(theta, n)) @ reg.amplitudes / math.sqrt(32)
    assert np.allclose(transform_to_angle(reg).amplitudes, direct, atol=1e-13)


@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_transform_round_trip(n_q, seed):
    reg = random_register(n_q, seed)
    back = transform_to_momentum(transform_to_angle(reg))
    assert back.basis == MOMENTUM
    assert np.max(np.abs(back.amplitudes - reg.amplitudes)) < 1e-12


def test_basis_mismatch_raises():
    reg = random_register(3, 0)
    with pytest.raises(BasisError):
        transform_to_momentum(reg)
    with pytest.raises(BasisError):
        exact_map_iteration(transform_to_angle(reg), SawtoothParams(3))


def test_zero_kick_is_pure_rotation():
    p = SawtoothParams(6, K=0.0)
    reg = init_momentum_eigenstate(p)
    out = exact_map_iteration(reg, p)
    expected = np.exp(-0.5j * p.T * p.n0**2)
    m = p.n0 + p.N // 2
    assert abs(out.amplitudes[m] - expected) < 1e-14
    assert np.allclose(np.abs(out.amplitudes) ** 2, np.abs(reg.amplitudes) ** 2, atol=1e-15)


@pytest.mark.parametrize("n_q", [2, 3, 5])
def test_one_step_matches_dense_matrices(n_q):
    p = SawtoothParams(n_q, K=-0.1)
    reg = random_register(n_q, 11)
    out = exact_map_iteration(reg, p)
    assert np.allclose(out.amplitudes, dense_map_matrix(p) @ reg.amplitudes, atol=1e-13)


def test_two_qubit_step_from_zero_momentum():
    # explicit 4x4 construction: U_T . F^dagger . U_k . F
    p = SawtoothParams(2, K=-0.1, n0=0)
    n = np.array([-2, -1, 0, 1])
    theta = np.pi / 2 * np.arange(4)
    F = np.exp(1j * np.outer(theta, n)) / 2
    U_k = np.diag(np.exp(0.5j * p.k * (theta - np.pi) ** 2))
    U_T = np.diag(np.exp(-0.5j * p.T * n**2))
    psi0 = np.array([0, 0, 1, 0], complex)
    out = exact_map_iteration(init_momentum_eigenstate(p), p)
    assert np.allclose(out.amplitudes, U_T @ F.conj().T @ U_k @ F @ psi0, atol=1e-14)


def test_inner_product_and_norm():
    p = SawtoothParams(4)
    a = init_momentum_eigenstate(p, 1)
    b = init_momentum_eigenstate(p, 2)
    assert inner_product(a, a) == 1
    assert inner_product(a, b) == 0
    with pytest.raises(ValueError):
        inner_product(a, random_register(3, 0))


def test_forward_backward_round_trip_with_zero_kick():
    p = SawtoothParams(6, K=0.0)
    reg = random_register(6, 5)
    back = exact_map_inverse(exact_map_iteration(reg, p), p)
    assert abs(abs(inner_product(reg, back)) - 1) < 1e-10


def test_time_reversal_after_100_steps():
    p = SawtoothParams(8, K=-0.1)
    reg = random_register(8, 9)
    back = exact_map_inverse(exact_map_iteration(reg, p, 100), p, 100)
    assert np.max(np.abs(back.amplitudes - reg.amplitudes)) < 1e-9


def test_unitarity_over_1000_steps():
    p = SawtoothParams(16, K=-0.1)
    prop = ExactPropagator(p)
    psi = init_momentum_eigenstate(p).amplitudes
    # a few hundred steps at n_q = 16 are enough to expose drift, the full 10**3 runs at n_q = 10
    for _ in range(200):
        psi = prop.step(psi)
    assert abs(np.linalg.norm(psi) - 1) < 1e-10
    p = SawtoothParams(10, K=-0.1)
    psi = ExactPropagator(p).evolve(init_momentum_eigenstate(p).amplitudes, 1000)
    assert abs(np.linalg.norm(psi) - 1) < 1e-10


def test_zero_kick_conserves_momentum_distribution():
    p = SawtoothParams(7, K=0.0)
    reg = random_register(7, 2)
    n = momentum_values(7)
    before = np.abs(reg.amplitudes) ** 2 @ n
    after = np.abs(exact_map_iteration(reg, p, 25).amplitudes) ** 2 @ n
    assert abs(before - after) < 1e-12


def test_localization_after_1000_steps():
    p = SawtoothParams(6, K=-0.1)
    out = exact_map_iteration(init_momentum_eigenstate(p), p, 1000)
    assert participation_ratio(out) < p.N / 4


def test_transform_tags():
    reg = random_register(3, 1)
    assert transform_to_angle(reg).basis == ANGLE
