import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flawsim.errors import DimensionError
from flawsim.model import BathParams, build_cnot_schedule, sample_realization, static_hamiltonian
from flawsim.pauli import OperatorSum, PauliTerm
from flawsim.propagate import PropagationProblem, evolve, evolve_expm_oracle, sample_grid
from oracles import dense_sum, expm_hermitian, random_state


def random_hamiltonian(rng, n, nterms, real=False):
    alphabet = "IXZ" if real else "IXYZ"
    terms = [PauliTerm(rng.uniform(-1, 1), "".join(rng.choice(list(alphabet), n))) for _ in range(nterms)]
    return OperatorSum(n, terms)


def random_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    segs = [(float(rng.uniform(0.2, 2.0)), random_hamiltonian(rng, n, 4)) for _ in range(int(rng.integers(1, 4)))]
    static = random_hamiltonian(rng, n, 6)
    return segs, static, random_state(rng, 1 << n)


def dense_reference(segs, static, v):
    hs = dense_sum(static)
    for d, h in segs:
        v = expm_hermitian(dense_sum(h) + hs, d) @ v
    return v


def test_sample_grid_counts():
    b = [0.0, 1.0, 3.0]
    g = sample_grid(b, 4)
    assert len(g) == 9 and g[0] == 0 and g[-1] == 3.0 and 1.0 in g
    np.testing.assert_array_equal(sample_grid(b, 0), b)
    assert len(sample_grid(build_cnot_schedule().boundaries)) == 361


@pytest.mark.parametrize("method", ["rk", "chebyshev"])
@pytest.mark.parametrize("seed", range(8))
def test_integrators_match_dense_exponentiation(method, seed):
    segs, static, v = random_problem(seed)
    traj = evolve(PropagationProblem(segs, static, v), method=method)
    assert np.linalg.norm(traj.samples[-1] - dense_reference(segs, static, v)) < 1e-8
    assert traj.max_norm_drift < 1e-9


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_chebyshev_agrees_with_oracle_at_every_sample(seed):
    rng = np.random.default_rng(seed)
    n = 3
    h = random_hamiltonian(rng, n, 5, real=bool(seed % 2))
    v = np.stack([random_state(rng, 8), random_state(rng, 8)], axis=1)
    times = np.linspace(0, 2.5, 6)
    traj = evolve(PropagationProblem([(2.5, OperatorSum(n, []))], h, v, sample_times=times), method="chebyshev")
    for t, y in zip(traj.times, traj.samples):
        np.testing.assert_allclose(y, evolve_expm_oracle(v, h, t), atol=1e-11)


def test_block_columns_propagate_independently():
    rng = np.random.default_rng(4)
    segs, static, _ = random_problem(4)
    n = static.nqubits
    block = np.stack([random_state(rng, 1 << n) for _ in range(3)], axis=1)
    y = evolve(PropagationProblem(segs, static, block), method="chebyshev").samples[-1]
    for k in range(3):
        np.testing.assert_allclose(y[:, k], dense_reference(segs, static, block[:, k]), atol=1e-10)


def test_gate_schedule_with_bath_rk_vs_chebyshev():
    r = sample_realization(BathParams(N=3, J=0.5, lam=0.1, seed=8))
    static = static_hamiltonian(r, "bitflip")
    sched = build_cnot_schedule()
    v = random_state(np.random.default_rng(1), 32)
    times = sample_grid(sched.boundaries, 3)
    a = evolve(PropagationProblem(sched, static, v, sample_times=times), method="rk")
    b = evolve(PropagationProblem(sched, static, v, sample_times=times), method="chebyshev")
    assert len(a.samples) == len(times)
    for ya, yb in zip(a.samples, b.samples):
        assert np.linalg.norm(ya - yb) < 1e-8


def test_observer_replaces_samples():
    segs, static, v = random_problem(2)
    traj = evolve(PropagationProblem(segs, static, v), method="chebyshev", observer=lambda t, y: float(t))
    np.testing.assert_array_equal(traj.samples, traj.times)


def test_problem_validation():
    static = OperatorSum.from_dict(2, {"ZZ": 1.0})
    with pytest.raises(DimensionError):
        PropagationProblem([(1.0, static)], static, np.ones(8) / np.sqrt(8))
    with pytest.raises(DimensionError):
        PropagationProblem([(1.0, static)], static, np.ones(4))
    with pytest.raises(ValueError):
        evolve(PropagationProblem([(1.0, static)], static, np.eye(4)[0]), method="euler")


def test_zero_hamiltonian_keeps_state():
    v = random_state(np.random.default_rng(0), 8)
    zero = OperatorSum(3, [])
    for method in ("rk", "chebyshev"):
        traj = evolve(PropagationProblem([(1.5, zero)], zero, v, sample_times=np.linspace(0, 1.5, 4)), method=method)
        for y in traj.samples:
            np.testing.assert_allclose(y, v, atol=1e-14)


@pytest.mark.parametrize("method", ["rk", "chebyshev"])
def test_full_rabi_flip(method):
    b = 1.3
    h = OperatorSum.from_dict(1, {"X": -0.5 * b})
    v = np.array([1, 0], dtype=complex)
    y = evolve(PropagationProblem([(np.pi / b, h)], OperatorSum(1, []), v), method=method).samples[-1]
    assert abs(abs(y[1]) - 1) < 1e-9


def test_oracle_special_cases():
    rng = np.random.default_rng(9)
    v = random_state(rng, 8)
    h = OperatorSum.from_dict(3, {"ZII": 0.3, "IZZ": -0.8, "ZIZ": 0.1})
    np.testing.assert_array_equal(evolve_expm_oracle(v, h, 0.0), v)
    energies = np.real(np.diag(dense_sum(h)))
    np.testing.assert_allclose(evolve_expm_oracle(v, h, 0.9), np.exp(-1j * energies * 0.9) * v, atol=1e-14)
    h5 = random_hamiltonian(rng, 5, 8)
    v5 = random_state(rng, 32)
    traj = evolve(PropagationProblem([(0.7, OperatorSum(5, []))], h5, v5), method="rk")
    assert np.linalg.norm(traj.samples[-1] - evolve_expm_oracle(v5, h5, 0.7)) < 1e-8


def test_large_norm_drift_is_an_error(monkeypatch):
    from flawsim import propagate
    from flawsim.errors import IntegrationError

    monkeypatch.setattr(propagate, "_rk_segment", lambda hop, y0, d, taus, r, a: np.stack([1.01 * y0] * len(taus)))
    h = OperatorSum.from_dict(1, {"X": 1.0})
    with pytest.raises(IntegrationError):
        evolve(PropagationProblem([(1.0, h)], OperatorSum(1, []), np.array([1, 0j])), method="rk")


def test_null_coupling_system_factor_follows_bare_schedule():
    from flawsim.model import build_bath_hamiltonian
    from flawsim.observables import fidelity, partial_trace_bath
    from flawsim.spectral import diagonalize

    r = sample_realization(BathParams(N=10, lam=0.0, seed=1))
    phi = diagonalize(build_bath_hamiltonian(r), k=1, method="lanczos").eigenvectors[:, 0]
    psi = np.array([0, 1, 0, 0], dtype=complex)
    sched = build_cnot_schedule()
    traj = evolve(PropagationProblem(sched, static_hamiltonian(r, "phase"), np.kron(phi, psi),
                                     sample_times=sched.boundaries), method="chebyshev")
    target = np.zeros((4, 4))
    target[3, 3] = 1
    assert fidelity(partial_trace_bath(traj.samples[-1]), target) > 1 - 1e-8
