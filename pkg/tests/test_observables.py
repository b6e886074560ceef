import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flawsim.errors import DimensionError, DomainError
from flawsim.model import build_cnot_schedule
from flawsim.observables import (
    PURITY_FLOOR,
    InitialStateSet,
    accumulate_thermal,
    average_over_set,
    basis_index,
    check_density,
    density_from_gram,
    fidelity,
    ideal_propagators,
    ideal_trajectory,
    partial_trace_bath,
    purity,
    thermal_gram,
)
from oracles import outer_partial_trace, random_state


@given(st.integers(0, 2**32 - 1), st.integers(3, 7))
@settings(max_examples=60, deadline=None)
def test_partial_trace_matches_outer_product(seed, n):
    v = random_state(np.random.default_rng(seed), 1 << n)
    rho = partial_trace_bath(v)
    np.testing.assert_allclose(rho, outer_partial_trace(v), atol=1e-12)
    check_density(rho)
    assert PURITY_FLOOR - 1e-12 <= purity(rho) <= 1 + 1e-12


def test_partial_trace_of_block_stacks():
    rng = np.random.default_rng(1)
    block = np.stack([random_state(rng, 32) for _ in range(4)], axis=1)
    rhos = partial_trace_bath(block)
    assert rhos.shape == (4, 4, 4)
    for k in range(4):
        np.testing.assert_allclose(rhos[k], outer_partial_trace(block[:, k]), atol=1e-13)


def test_product_state_reduces_to_system_state():
    rng = np.random.default_rng(2)
    psi, phi = random_state(rng, 4), random_state(rng, 8)
    rho = partial_trace_bath(np.kron(phi, psi))
    np.testing.assert_allclose(rho, np.outer(psi, psi.conj()), atol=1e-14)
    assert purity(rho) == pytest.approx(1.0)


def test_gram_reproduces_explicit_thermal_mixture():
    rng = np.random.default_rng(3)
    m, db = 3, 8
    w = rng.uniform(size=m)
    w /= w.sum()
    block = np.stack([random_state(rng, 4 * db) for _ in range(4 * m)], axis=1)
    gram = thermal_gram(block, w)
    for psi in list(InitialStateSet.STANDARD.states().values()) + list(InitialStateSet.BELL.states().values()):
        explicit = accumulate_thermal(
            (w[n], outer_partial_trace(block[:, 4 * n:4 * n + 4] @ psi)) for n in range(m)
        )
        np.testing.assert_allclose(density_from_gram(gram, psi), explicit, atol=1e-13)


def test_state_sets():
    assert basis_index("10") == 1 and basis_index("01") == 2
    for s in InitialStateSet:
        vs = np.array(list(s.states().values()))
        np.testing.assert_allclose(vs @ vs.conj().T, np.eye(4), atol=1e-15)
    bell = InitialStateSet.parse("Bell").states()
    assert list(bell) == ["phi+", "phi-", "psi+", "psi-"]
    assert np.isclose(bell["psi-"][basis_index("10")], -1 / np.sqrt(2))


def test_purity_and_fidelity_values():
    mixed = np.eye(4) / 4
    assert purity(mixed) == pytest.approx(0.25)
    pure = np.zeros((4, 4))
    pure[0, 0] = 1
    assert fidelity(mixed, pure) == pytest.approx(0.25)
    assert fidelity(pure, pure) == pytest.approx(1.0)


def test_check_density_rejects():
    with pytest.raises(DomainError):
        check_density(np.diag([1.0, 0.1, 0, 0]))
    with pytest.raises(DomainError):
        check_density(np.diag([1.2, -0.2, 0, 0]))
    bad = np.eye(4) / 4
    bad[0, 1] = 0.1
    with pytest.raises(DomainError):
        check_density(bad)
    with pytest.raises(DimensionError):
        check_density(np.eye(2) / 2)
    with pytest.raises(DimensionError):
        partial_trace_bath(np.ones(4))


def test_ideal_propagators_match_direct_evaluation():
    sched = build_cnot_schedule()
    times = np.linspace(0, sched.total_duration, 23)
    us = ideal_propagators(sched, times)
    psi = InitialStateSet.BELL.states()["phi+"]
    traj = ideal_trajectory(sched, psi, times)
    for t, u, rho in zip(times, us, traj):
        np.testing.assert_allclose(u, sched.propagator(t), atol=1e-12)
        phi = u @ psi
        np.testing.assert_allclose(rho, np.outer(phi, phi.conj()), atol=1e-12)


def test_average_over_set():
    t = np.arange(3.0)
    data = {lab: (t, np.full(3, i), np.full(3, 2 * i)) for i, lab in enumerate(["00", "01", "10", "11"])}
    s = average_over_set("standard", data)
    np.testing.assert_allclose(s.avg_purity, 1.5)
    np.testing.assert_allclose(s.avg_fidelity, 3.0)
    data["11"] = (t + 1, data["11"][1], data["11"][2])
    with pytest.raises(DimensionError):
        average_over_set("standard", data)
    del data["11"]
    with pytest.raises(DimensionError):
        average_over_set("standard", data)


def test_maximal_system_bath_entanglement():
    v = np.zeros(16, dtype=complex)
    for s in range(4):
        v[s + 4 * s] = 0.5
    rho = partial_trace_bath(v)
    np.testing.assert_allclose(rho, np.eye(4) / 4, atol=1e-15)
    assert purity(rho) == pytest.approx(0.25)


def test_mixtures():
    pure = np.diag([1.0, 0, 0, 0]).astype(complex)
    np.testing.assert_array_equal(accumulate_thermal([(1.0, pure)]), pure)
    other = np.diag([0, 1.0, 0, 0]).astype(complex)
    mix = accumulate_thermal([(0.5, pure), (0.5, other)])
    assert np.linalg.matrix_rank(mix) == 2 and purity(mix) == pytest.approx(0.5)
    assert fidelity(pure, pure) == 1.0 and fidelity(pure, other) == 0.0


def test_ideal_trajectory_end_points_and_purity():
    sched = build_cnot_schedule()
    e = np.eye(4, dtype=complex)
    ket10, ket11 = e[1], e[3]
    traj = ideal_trajectory(sched, ket10, np.linspace(0, sched.total_duration, 9))
    np.testing.assert_allclose(traj[0], np.outer(ket10, ket10))
    assert fidelity(traj[-1], np.outer(ket11, ket11)) > 1 - 1e-12
    assert all(abs(purity(r) - 1) < 1e-12 for r in traj)


def test_average_bounds_and_identity():
    t = np.arange(4.0)
    same = {lab: (t, np.full(4, 0.7), np.full(4, 0.6)) for lab in ["phi+", "phi-", "psi+", "psi-"]}
    s = average_over_set("bell", same)
    np.testing.assert_allclose(s.avg_purity, 0.7)
    rng = np.random.default_rng(0)
    mixed = {lab: (t, rng.uniform(size=4), rng.uniform(size=4)) for lab in same}
    s = average_over_set("bell", mixed)
    stack = np.array([mixed[lab][1] for lab in same])
    assert np.all(s.avg_purity >= stack.min(axis=0)) and np.all(s.avg_purity <= stack.max(axis=0))
