"""Acceptance criteria, each reported as one PASS/FAIL line on the terminal.

The heavy gate sweep (criteria 6 and 7) runs the full 12-qubit register for
10 realizations x 2 J values x 2 couplings x 3 coupling strengths and takes
over an hour on one core.
"""

import numpy as np
import pytest

from flawsim.experiment import (
    RunConfig,
    run_gate_experiment,
    run_shift_scan,
    run_spectrum_scan,
    validate_gate,
)
from flawsim.model import bath_coupling_operator, build_bath_hamiltonian
from flawsim.observables import check_density, partial_trace_bath
from flawsim.pauli import OperatorSum, PauliTerm
from flawsim.propagate import PropagationProblem, evolve
from flawsim.spectral import canonical_average, diagonalize, thermal_ensemble
from oracles import dense_sum, expm_hermitian, outer_partial_trace, random_state

LAMBDAS = (0.02, 0.05, 0.1)
SWEEP = [0.05, 0.25, 0.5, 1.0, 2.0]


@pytest.fixture
def report(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(number, name, ok, detail):
        with capman.global_and_fixture_disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {name}: {detail}", flush=True)
        assert ok, detail

    return emit


def test_criterion_1_gate_protocol(report):
    rep = validate_gate(RunConfig(N=2))
    ok = rep["cnot_max_deviation"] < 1e-10 and abs(rep["gate_time_seconds"] - 1.129e-9) / 1.129e-9 < 1e-3
    report(1, "gate protocol", ok,
           f"CNOT deviation {rep['cnot_max_deviation']:.2e}, gate time {rep['gate_time_seconds']:.6e} s "
           f"({rep['gate_time_hbar_over_eps']:.4f} hbar/eps)")


@pytest.mark.slow
def test_criterion_2_null_coupling(report, tmp_path):
    cfg = RunConfig(N=10, lam=0.0, J=[0.05], realizations=1, sets=["standard", "bell"])
    run = run_gate_experiment(cfg, tmp_path)
    worst = 0.0
    for s in run.cells[0].series.values():
        worst = max(worst, np.max(np.abs(s.avg_purity - 1)), np.max(np.abs(s.avg_fidelity - 1)),
                    np.max(np.abs(s.purity - 1)), np.max(np.abs(s.fidelity - 1)))
    n_times = len(run.cells[0].series["standard"].times)
    report(2, "null coupling", not run.failures and worst < 1e-8,
           f"max |1 - metric| {worst:.2e} over 8 states x {n_times} samples, "
           f"{run.cells[0].info.get('thermal_members')} thermal members")


def _random_problem(rng):
    n = int(rng.integers(2, 7))
    def ham(k):
        return OperatorSum(n, [PauliTerm(rng.uniform(-1, 1), "".join(rng.choice(list("IXYZ"), n))) for _ in range(k)])
    segs = [(float(rng.uniform(0.2, 2.0)), ham(4)) for _ in range(int(rng.integers(1, 4)))]
    return segs, ham(6), random_state(rng, 1 << n)


def test_criterion_3_propagator_oracle(report):
    rng = np.random.default_rng(20240603)
    worst_err = worst_drift = 0.0
    for _ in range(24):
        segs, static, v = _random_problem(rng)
        traj = evolve(PropagationProblem(segs, static, v), method="rk")
        ref = v
        for d, h in segs:
            ref = expm_hermitian(dense_sum(h) + dense_sum(static), d) @ ref
        worst_err = max(worst_err, np.linalg.norm(traj.samples[-1] - ref))
        worst_drift = max(worst_drift, traj.max_norm_drift)
    report(3, "propagator oracle", worst_err < 1e-8 and worst_drift < 1e-9,
           f"24 problems, max distance {worst_err:.2e}, max norm drift {worst_drift:.2e}")


def test_criterion_4_partial_trace_oracle(report):
    rng = np.random.default_rng(77)
    worst = 0.0
    valid = True
    for _ in range(120):
        v = random_state(rng, 32)
        rho = partial_trace_bath(v)
        worst = max(worst, np.max(np.abs(rho - outer_partial_trace(v))))
        try:
            check_density(rho, tol=1e-10)
        except ValueError:
            valid = False
    report(4, "partial trace oracle", worst < 1e-12 and valid,
           f"120 states, max deviation {worst:.2e}, all densities valid: {valid}")


@pytest.mark.slow
def test_criterion_5_chaos_crossover(report, tmp_path):
    run = run_spectrum_scan(RunConfig(N=10, delta=0.4, J=SWEEP, realizations=10), tmp_path)
    means = [run.ensemble_mean(J) for J in SWEEP]
    low_ok = means[0] < 0.45
    high_ok = all(m > 0.50 for m in means[1:])
    mono = all(b >= a for a, b in zip(means, means[1:]))
    detail = ", ".join(f"r({J:g})={m:.4f}" for J, m in zip(SWEEP, means))
    report(5, "chaos crossover", low_ok and high_ok and mono,
           f"{detail}; J=0.05 below 0.45: {low_ok}, J>=0.25 above 0.50: {high_ok}, non-decreasing: {mono}")


@pytest.fixture(scope="module")
def gate_sweep(tmp_path_factory):
    """Endpoint-only gate runs shared by the suppression and shift-dominance criteria."""
    runs = {}
    for lam in LAMBDAS:
        cfg = RunConfig(N=10, J=[0.05, 2.0], lam=lam, realizations=10, samples_per_segment=0)
        runs[lam] = run_gate_experiment(cfg, tmp_path_factory.mktemp(f"gate_lam{lam:g}"))
    return runs


@pytest.mark.slow
def test_criterion_6_decoherence_suppression(report, gate_sweep):
    ok = True
    parts = []
    for lam, run in gate_sweep.items():
        ok &= not run.failures
        for coupling in ("bitflip", "phase"):
            for set_name in ("standard", "bell"):
                weak = 1 - run.final(0.05, coupling, set_name)[0]
                strong = 1 - run.final(2.0, coupling, set_name)[0]
                ok &= strong < weak
                parts.append(f"lam={lam:g} {coupling}/{set_name}: {weak:.3e} -> {strong:.3e}")
    report(6, "decoherence suppression", ok, "purity deficit J=0.05 -> J=2.0; " + "; ".join(parts))


@pytest.mark.slow
def test_criterion_7_shift_dominance(report, gate_sweep):
    ok = True
    parts = []
    for lam, run in gate_sweep.items():
        ok &= not run.failures
        for J in (0.05, 2.0):
            for coupling in ("bitflip", "phase"):
                for set_name in ("standard", "bell"):
                    p, f = run.final(J, coupling, set_name)
                    ratio = (1 - f) / (1 - p) if p < 1 else np.inf
                    ok &= (1 - f) >= 5 * (1 - p)
                    parts.append(f"lam={lam:g} J={J:g} {coupling}/{set_name}: {ratio:.2f}")
    report(7, "shift dominance", ok, "fidelity/purity deficit ratio; " + "; ".join(parts))


@pytest.mark.slow
def test_criterion_8_canonical_average_trends(report, tmp_path):
    run = run_shift_scan(RunConfig(N=10, J=[0.05, 2.0], realizations=100), tmp_path)
    z_weak, z_strong = run.mean_abs(0.05, "phase"), run.mean_abs(2.0, "phase")
    x_weak, x_strong = run.mean_abs(0.05, "bitflip"), run.mean_abs(2.0, "bitflip")
    trend_ok = z_strong < z_weak and x_strong >= 0.9 * x_weak

    cfg = RunConfig(N=10, J=[0.0])
    worst = 0.0
    for rid in range(3):
        r = cfg.realization(0.0, rid)
        ens = thermal_ensemble(diagonalize(build_bath_hamiltonian(r)), cfg.kT, 1e-15)
        field = np.hypot(r.Bx, r.Bz)
        analytic = np.sum(r.lam_z * r.Bz / field * np.tanh(field / (2 * cfg.kT)))
        worst = max(worst, abs(canonical_average(bath_coupling_operator(r, "phase"), ens) - analytic))
    report(8, "canonical-average trends", trend_ok and worst < 1e-10,
           f"|Sz| {z_weak:.4e} -> {z_strong:.4e}, |Sx| {x_weak:.4e} -> {x_strong:.4e} "
           f"(100 realizations), J=0 analytic deviation {worst:.2e}")


def test_criterion_9_determinism(report, tmp_path):
    cfg = RunConfig(N=4, J=[0.05, 2.0], realizations=2, samples_per_segment=4)
    names = ("gate_metrics.csv", "spectrum.csv", "level_stats.csv", "ratio_histogram.csv", "shift.csv")
    for d in ("first", "second"):
        run_gate_experiment(cfg, tmp_path / d)
        run_spectrum_scan(cfg, tmp_path / d)
        run_shift_scan(cfg, tmp_path / d)
    same = {n: (tmp_path / "first" / n).read_bytes() == (tmp_path / "second" / n).read_bytes() for n in names}
    report(9, "determinism", all(same.values()), ", ".join(f"{n}: {'identical' if s else 'DIFFERS'}" for n, s in same.items()))
