import math
from functools import reduce

import numpy as np
import pytest

from qsawtooth.circuit import build_map_circuit
from qsawtooth.hardware import (
    NOISY_DETUNING,
    STATIC,
    DisorderRealization,
    ErrorMode,
    FreeEvolution,
    ImperfectEngine,
    _random_rotation_matrices,
    _xx_edges,
    _xx_edges_numpy,
    chaotic_time_scale,
    free_evolution_step,
    run_imperfect_evolution,
    sample_static,
)
from qsawtooth.lattice import LatticeLayout, route
from qsawtooth.state import ExactPropagator, SawtoothParams, init_momentum_eigenstate, random_register

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], complex)
Z = np.diag([1.0, -1.0])


def site_op(op, q, n_q):
    # qubit q is bit q of the index, i.e. the rightmost kron factor is qubit 0
    factors = [op if k == q else I2 for k in reversed(range(n_q))]
    return reduce(np.kron, factors)


def dense_hamiltonian(d: DisorderRealization):
    n_q = d.n_q
    H = sum(dq * site_op(Z, q, n_q) for q, dq in enumerate(d.delta_i)).astype(complex)
    for (i, j), J in zip(d.edges, d.couplings):
        H = H + J * site_op(X, i, n_q) @ site_op(X, j, n_q)
    return H


def expm_hermitian(H, t):
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def routed(n_q, K=-0.1):
    p = SawtoothParams(n_q, K)
    L = LatticeLayout.for_qubits(n_q)
    return p, L, route(build_map_circuit(p), L)


def test_zero_realization():
    d = sample_static(0.0, 0.0, LatticeLayout.for_qubits(4), seed=1)
    assert not d.delta_i.any() and not d.couplings.any()
    reg = random_register(4, 0)
    out = free_evolution_step(reg, d)
    assert np.max(np.abs(out.amplitudes - reg.amplitudes)) < 1e-15


def test_detuning_statistics():
    L = LatticeLayout.for_qubits(9)
    draws = np.array([sample_static(1.0, 0.0, L, seed=s).delta_i for s in range(10_000)])
    assert np.all(np.abs(draws) <= 0.5)
    assert np.all(np.abs(draws.mean(axis=0)) < 0.02)


def test_coupling_bounds_and_edges():
    L = LatticeLayout.for_qubits(9)
    d = sample_static(0.3, 0.7, L, seed=4)
    assert len(d.edges) == 12 and len(d.couplings) == 12
    assert np.all(np.abs(d.couplings) <= 0.7)
    assert np.all(np.abs(d.delta_i) <= 0.15)
    assert all(L.adjacent(i, j) for i, j in d.edges)


def test_sampling_is_deterministic():
    L = LatticeLayout.for_qubits(6)
    a = sample_static(0.1, 0.1, L, seed=99)
    b = sample_static(0.1, 0.1, L, seed=99)
    assert np.array_equal(a.delta_i, b.delta_i) and np.array_equal(a.couplings, b.couplings)
    with pytest.raises(ValueError):
        sample_static(-1.0, 0.0, L)


def test_detuning_only_step_is_closed_form():
    d = sample_static(0.4, 0.0, LatticeLayout.for_qubits(5), seed=2, tau_g=0.5)
    reg = random_register(5, 3)
    out = free_evolution_step(reg, d)
    bits = (np.arange(32)[:, None] >> np.arange(5)) & 1
    energy = (1 - 2 * bits) @ d.delta_i
    assert np.max(np.abs(out.amplitudes - np.exp(-0.5j * energy) * reg.amplitudes)) < 1e-14


@pytest.mark.parametrize("n_q", [2, 3, 4, 5, 6])
def test_step_against_dense_exponential(n_q):
    d = sample_static(1e-3, 1e-3, LatticeLayout.for_qubits(n_q), seed=n_q)
    reg = random_register(n_q, 7)
    out = free_evolution_step(reg, d, 1.0)
    ref = expm_hermitian(dense_hamiltonian(d), 1.0) @ reg.amplitudes
    assert np.linalg.norm(out.amplitudes - ref) < 1e-8


def test_single_edge_step_is_exact():
    d = DisorderRealization(np.array([0.3, -0.2]), ((0, 1),), np.array([0.5]), 1.0)
    reg = random_register(2, 1)
    ref = expm_hermitian(dense_hamiltonian(DisorderRealization(np.zeros(2), ((0, 1),), np.array([0.5]))), 1.0)
    only_xx = free_evolution_step(reg, DisorderRealization(np.zeros(2), ((0, 1),), np.array([0.5])))
    assert np.max(np.abs(only_xx.amplitudes - ref @ reg.amplitudes)) < 1e-14
    # with detunings the split is only second-order accurate
    full = free_evolution_step(reg, d)
    assert np.linalg.norm(full.amplitudes - expm_hermitian(dense_hamiltonian(d), 1.0) @ reg.amplitudes) < 0.05


def test_splitting_error_is_third_order_in_interval():
    d = sample_static(0.05, 0.05, LatticeLayout.for_qubits(4), seed=12)
    H = dense_hamiltonian(d)
    reg = random_register(4, 5)
    errors = []
    for tau in (0.4, 0.2, 0.1, 0.05):
        out = free_evolution_step(reg, d, tau)
        errors.append(np.linalg.norm(out.amplitudes - expm_hermitian(H, tau) @ reg.amplitudes))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all(np.abs(ratios - 8) < 0.5)


def test_interval_enters_only_through_products():
    L = LatticeLayout.for_qubits(4)
    base = sample_static(1.0, 1.0, L, seed=3)
    reg = random_register(4, 8)
    outs = []
    for tau in (1e-3, 2e-3, 4e-3):
        scaled = DisorderRealization(base.delta_i * 1e-3 / tau, base.edges, base.couplings * 1e-3 / tau, tau)
        outs.append(free_evolution_step(reg, scaled).amplitudes)
    assert np.max(np.abs(outs[0] - outs[1])) < 1e-15
    assert np.max(np.abs(outs[0] - outs[2])) < 1e-15


def test_compiled_and_numpy_edge_kernels_agree():
    rng = np.random.default_rng(0)
    psi = rng.normal(size=(64, 3)) + 1j * rng.normal(size=(64, 3))
    masks = np.array([0b11, 0b110, 0b100100], dtype=np.int64)
    c, s = np.cos([0.1, 0.2, 0.3]), np.sin([0.1, 0.2, 0.3])
    a, b = psi.copy(), psi.copy()
    _xx_edges(a, masks, c, s)
    _xx_edges_numpy(b, masks, c, s)
    assert np.max(np.abs(a - b)) < 1e-15


def test_realization_mismatch():
    d = sample_static(0.1, 0.1, LatticeLayout.for_qubits(4), seed=0)
    with pytest.raises(ValueError):
        FreeEvolution(d, 5)


def test_error_mode_validation():
    with pytest.raises(ValueError):
        ErrorMode("thermal", 0.1)
    with pytest.raises(ValueError):
        ErrorMode(STATIC, -1.0)
    with pytest.raises(ValueError):
        ErrorMode(NOISY_DETUNING, 0.1, coupling=1.0)
    m = ErrorMode.static(2e-4, coupling=1.0, tau_g=2.0)
    assert m.delta == 1e-4 and m.J == 1e-4


def test_no_error_mode_reproduces_ideal_evolution():
    p, L, c = routed(6)
    res = run_imperfect_evolution(p, c, ErrorMode(), 30, layout=L, dense=False)
    assert np.all(np.abs(res.trace.f - 1) < 1e-12)
    ref = ExactPropagator(p).evolve(init_momentum_eigenstate(p).amplitudes, 30)
    assert abs(abs(np.vdot(res.state.amplitudes, ref)) - 1) < 1e-12


@pytest.mark.parametrize(
    "mode",
    [
        ErrorMode.static(1e-2, 1.0),
        ErrorMode.static(1e-2, 0.0),
        ErrorMode.noisy_detuning(1e-2),
        ErrorMode.random_rotation(1e-2),
        ErrorMode.random_rotation(1e-2, all_qubits=True),
    ],
    ids=lambda m: f"{m.kind}-{m.coupling}-{m.all_qubits}",
)
def test_norm_drift_over_thousand_iterations(mode):
    p, L, c = routed(4)
    res = run_imperfect_evolution(p, c, mode, 1000, seed=1, layout=L, dense=False)
    assert abs(np.linalg.norm(res.state.amplitudes) - 1) < 1e-9
    assert np.all(res.trace.f <= 1 + 1e-12) and np.all(res.trace.f >= 0)


def test_static_mode_is_reproducible_and_frozen():
    p, L, c = routed(5)
    mode = ErrorMode.static(1e-3, 1.0)
    a = run_imperfect_evolution(p, c, mode, 40, seed=17, layout=L)
    b = run_imperfect_evolution(p, c, mode, 40, seed=17, layout=L)
    assert np.array_equal(a.trace.f, b.trace.f)
    assert np.array_equal(a.disorder.delta_i, b.disorder.delta_i)
    engine = ImperfectEngine(p, c, mode, seed=17, layout=L)
    frozen = engine.disorder.delta_i.copy()
    engine.period(init_momentum_eigenstate(p).amplitudes.copy())
    assert np.array_equal(engine.disorder.delta_i, frozen)


def test_noisy_detuning_redraws_once_per_gate():
    p, L, c = routed(4)
    res = run_imperfect_evolution(p, c, ErrorMode.noisy_detuning(1e-3), 7, seed=0, layout=L)
    assert res.extras["redraws"] == 7 * c.gate_count
    assert res.gate_intervals == c.gate_count


def test_random_rotation_matrices():
    rng = np.random.default_rng(0)
    mats = _random_rotation_matrices(rng, 500, 0.3)
    eye = np.eye(2)
    for m in mats:
        assert np.allclose(m.conj().T @ m, eye, atol=1e-14)
    # rotation angle a from the trace 2 cos(a/2)
    angles = 2 * np.arccos(np.clip(np.real(np.trace(mats, axis1=1, axis2=2)) / 2, -1, 1))
    assert np.all(angles <= 0.3 + 1e-12)


def test_random_rotation_targets():
    p, L, c = routed(4)
    ops = ImperfectEngine(p, c, ErrorMode.random_rotation(1e-3), seed=0, layout=L)
    every = ImperfectEngine(p, c, ErrorMode.random_rotation(1e-3, all_qubits=True), seed=0, layout=L)
    assert ops._n_kicks == sum(len(g.qubits) for g in c.gates if g.takes_time)
    assert every._n_kicks == 4 * c.gate_count


@pytest.mark.parametrize("coupling", [0.0, 1.0])
def test_dense_period_matches_gate_by_gate(coupling):
    p, L, c = routed(5)
    mode = ErrorMode.static(1e-3, coupling)
    a = run_imperfect_evolution(p, c, mode, 60, seed=3, layout=L, dense=False)
    b = run_imperfect_evolution(p, c, mode, 60, seed=3, layout=L, dense=True)
    auto = run_imperfect_evolution(p, c, mode, 60, seed=3, layout=L)
    assert np.max(np.abs(a.trace.f - b.trace.f)) < 1e-12
    assert np.max(np.abs(a.trace.f - auto.trace.f)) < 1e-12
    with pytest.raises(ValueError):
        run_imperfect_evolution(p, c, ErrorMode.noisy_detuning(1e-3), 5, layout=L, dense=True)


def test_fidelity_recovers_as_epsilon_shrinks():
    p, L, c = routed(6)
    fs = []
    for eps in (1e-2, 1e-3, 1e-4, 1e-5):
        res = run_imperfect_evolution(p, c, ErrorMode.static(eps, 1.0), 50, seed=5, layout=L)
        fs.append(res.trace.f[50])
    assert all(a < b for a, b in zip(fs, fs[1:]))
    # perturbative regime: infidelity scales as epsilon**2
    ratio = (1 - fs[-2]) / (1 - fs[-1])
    assert 80 < ratio < 120


def test_observers_called_every_iteration():
    p, L, c = routed(4)
    seen = []
    run_imperfect_evolution(p, c, ErrorMode.static(1e-3), 5, seed=0, layout=L, observers=[lambda t, a, b: seen.append(t)])
    assert seen == list(range(6))


def test_stop_below():
    p, L, c = routed(5)
    res = run_imperfect_evolution(p, c, ErrorMode.static(3e-2, 0.0), 10_000, seed=0, layout=L, stop_below=0.9)
    assert res.trace.f[-1] < 0.9 and np.all(res.trace.f[:-1] >= 0.9)


def test_chaotic_time_scale():
    tau = chaotic_time_scale(1e-4, 9)
    assert 2000 < tau < 5000
    assert math.isinf(chaotic_time_scale(0.0, 9))
