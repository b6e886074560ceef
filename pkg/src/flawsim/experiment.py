"""End-to-end runs: gate metrics, level statistics, canonical-average shifts and
protocol validation, with realization files, CSV outputs and run manifests."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import CapacityError, ConfigError, FlawSimError
from .model import (
    N_SYSTEM,
    TIME_UNIT_SECONDS,
    BathParams,
    CouplingType,
    Realization,
    bath_coupling_operator,
    build_bath_hamiltonian,
    build_cnot_schedule,
    ideal_cnot,
    max_deviation_up_to_phase,
    sample_realization,
    static_hamiltonian,
    to_seconds,
)
from .observables import (
    InitialStateSet,
    MetricsSeries,
    check_density,
    density_from_gram,
    fidelity,
    ideal_propagators,
    purity,
    thermal_gram,
)
from .propagate import PropagationProblem, evolve, sample_grid
from .spectral import (
    canonical_average,
    diagonalize,
    r_statistic,
    ratio_histogram,
    thermal_ensemble,
)

log = logging.getLogger(__name__)

MAX_REGISTER_QUBITS = 14
REFERENCE_GATE_TIME_S = 1.129e-9
DEFAULT_J_SWEEP = (0.05, 0.25, 0.50, 1.00, 2.00)

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


@dataclass
class RunConfig:
    """Every knob of a run.  Energies in epsilon, times in hbar/epsilon."""

    # gate
    Bx: float = 1.0
    Bz: float = 1.0
    Jx_gate: float = 0.05
    # bath
    N: int = 10
    B0x: float = 1.0
    B0z: float = 1.0
    delta: float = 0.4
    J: list = field(default_factory=lambda: list(DEFAULT_J_SWEEP))
    lam: float = 0.05
    kT: float = 0.25
    connectivity: str = "all"
    # what to run
    coupling: list = field(default_factory=lambda: ["bitflip", "phase"])
    sets: list = field(default_factory=lambda: ["standard", "bell"])
    seed: int = 0
    realizations: int = 10
    # numerics
    integrator: str = "chebyshev"
    rtol: float = 1e-9
    atol: float = 1e-11
    weight_cut: float = 1e-6
    samples_per_segment: int = 40
    memory_mb: int = 512
    # execution
    output_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> "RunConfig":
        for name in ("Bx", "Bz", "Jx_gate", "kT"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("delta", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if isinstance(self.J, (int, float)):
            self.J = [self.J]
        self.J = [float(j) for j in self.J]
        if not self.J or any(j < 0 for j in self.J):
            raise ConfigError("J must be a non-empty list of non-negative couplings")
        if isinstance(self.coupling, str):
            self.coupling = [self.coupling]
        if isinstance(self.sets, str):
            self.sets = [self.sets]
        try:
            self.coupling = [CouplingType.parse(c).value for c in self.coupling]
            self.sets = [InitialStateSet.parse(s).value for s in self.sets]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.coupling or not self.sets:
            raise ConfigError("coupling and sets must be non-empty")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if self.integrator not in ("rk", "chebyshev"):
            raise ConfigError("integrator must be 'rk' or 'chebyshev'")
        if not 0 < self.weight_cut < 1:
            raise ConfigError("weight_cut must lie in (0, 1)")
        if self.samples_per_segment < 0:
            raise ConfigError("samples_per_segment must be >= 0")
        if self.connectivity not in ("all", "ring"):
            raise ConfigError("connectivity must be 'all' or 'ring'")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def check_capacity(self):
        if N_SYSTEM + self.N > MAX_REGISTER_QUBITS:
            raise CapacityError(
                f"register of {N_SYSTEM + self.N} qubits exceeds the {MAX_REGISTER_QUBITS}-qubit guard"
            )

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            default = known[key].default
            if isinstance(default, bool) or default is dataclasses.MISSING:
                kwargs[key] = value
            elif isinstance(default, int) and not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            elif isinstance(default, float):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{key} must be a number, got {value!r}")
                kwargs[key] = float(value)
            elif isinstance(default, str) and not isinstance(value, str):
                raise ConfigError(f"{key} must be a string, got {value!r}")
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            if path.suffix == ".json":
                data = json.loads(path.read_text())
            else:
                data = tomllib.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def bath_params(self, J: float, realization_id: int) -> BathParams:
        return BathParams(
            N=self.N, B0x=self.B0x, B0z=self.B0z, delta=self.delta, J=float(J),
            lam=self.lam, seed=realization_seed(self.seed, realization_id),
            connectivity=self.connectivity,
        )

    def realization(self, J: float, realization_id: int) -> Realization:
        return sample_realization(self.bath_params(J, realization_id), realization_id)


def realization_seed(base_seed: int, realization_id: int) -> int:
    """Per-realization 64-bit seed, independent of the J value."""
    ss = np.random.SeedSequence([int(base_seed), int(realization_id)])
    return int(ss.generate_state(1, np.uint64)[0])


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path.write_bytes(buf.getvalue().encode())
    return path


def _realization_path(out: Path, r: Realization) -> Path:
    return out / "realizations" / f"realization_{r.realization_id:03d}_J{r.params.J:g}.json"


def _save_realization(out: Path, r: Realization) -> str:
    path = _realization_path(out, r)
    path.parent.mkdir(parents=True, exist_ok=True)
    r.save(path)
    return str(path.relative_to(out))


def _write_manifest(out: Path, kind: str, cfg: RunConfig, started: float, extra: dict) -> Path:
    manifest = {
        "kind": kind,
        "software": {"flawsim": __version__, "python": sys.version.split()[0],
                     "numpy": np.__version__, "platform": platform.platform()},
        "config": cfg.to_dict(),
        "started_unix": started,
        "wall_seconds": time.time() - started,
        **extra,
    }
    path = out / f"manifest_{kind}.json"
    path.write_text(json.dumps(manifest, indent=1, default=str) + "\n")
    return path


def _prepare_out(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- gate runs

@dataclass
class CellResult:
    realization_id: int
    J: float
    coupling: str
    series: dict[str, MetricsSeries] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)
    error: str | None = None


def simulate_cell(cfg: RunConfig, realization: Realization, coupling: str) -> CellResult:
    """Full thermal-ensemble gate simulation for one (realization, J, coupling) cell.

    Only the four standard system states are propagated per thermal member;
    densities for every initial state (Bell states included) follow from the
    weighted system Gram tensor by linearity.
    """
    ct = CouplingType.parse(coupling)
    sched = build_cnot_schedule(cfg.Bx, cfg.Bz, cfg.Jx_gate)
    times = sample_grid(sched.boundaries, cfg.samples_per_segment)
    spec = diagonalize(build_bath_hamiltonian(realization))
    ens = thermal_ensemble(spec, cfg.kT, cfg.weight_cut)
    static = static_hamiltonian(realization, ct)
    n_members = len(ens)
    log.info("realization %d J=%g %s: %d thermal members (raw weight %.9f)",
             realization.realization_id, realization.params.J, ct.value, n_members, ens.cumulative_weight)

    ds = 1 << N_SYSTEM
    dim = 1 << (N_SYSTEM + realization.N)
    per_seg = max(cfg.samples_per_segment, 1)
    bytes_per_member = (per_seg + 4) * dim * ds * 16
    chunk = max(1, min(n_members, int(cfg.memory_mb * 2**20 // bytes_per_member)))

    grams = np.zeros((len(times), ds, ds, ds, ds), dtype=complex)
    drift = 0.0
    eye = np.eye(ds)
    for start in range(0, n_members, chunk):
        sl = slice(start, min(start + chunk, n_members))
        phis = ens.states[:, sl]
        # column order member * 4 + s0, full index = s + 4 * b
        block = np.einsum("bn,sa->bsna", phis, eye).reshape(dim, -1)
        weights = ens.weights[sl]
        prob = PropagationProblem(sched, static, block, rtol=cfg.rtol, atol=cfg.atol, sample_times=times)
        traj = evolve(prob, method=cfg.integrator, observer=lambda _t, y, w=weights: thermal_gram(y, w))
        grams += np.array(traj.samples)
        drift = max(drift, traj.max_norm_drift)

    ideal_u = ideal_propagators(sched, times)
    result = CellResult(realization.realization_id, realization.params.J, ct.value)
    for set_name in cfg.sets:
        states = InitialStateSet(set_name).states()
        pur = np.empty((4, len(times)))
        fid = np.empty((4, len(times)))
        for i, psi in enumerate(states.values()):
            rhos = np.einsum("a,b,ksatb->kst", psi, psi.conj(), grams)
            check_density(rhos)
            phi = ideal_u @ psi
            ideal = np.einsum("ks,kt->kst", phi, phi.conj())
            pur[i] = [purity(r) for r in rhos]
            fid[i] = [fidelity(r, q) for r, q in zip(rhos, ideal)]
        result.series[set_name] = MetricsSeries(set_name, times, list(states), pur, fid)
    result.info = {
        "thermal_members": n_members,
        "retained_raw_weight": ens.cumulative_weight,
        "max_norm_drift": drift,
        "ground_energy": float(spec.eigenvalues[0]),
    }
    return result


def _cell_task(args) -> CellResult:
    cfg_dict, rid, J, coupling = args
    cfg = RunConfig.from_mapping(cfg_dict)
    r = cfg.realization(J, rid)
    try:
        return simulate_cell(cfg, r, coupling)
    except (FlawSimError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
        log.error("cell realization=%d J=%g %s failed: %s", rid, J, coupling, exc)
        return CellResult(rid, J, coupling, error=f"{type(exc).__name__}: {exc}")


def _map(tasks, fn, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


GATE_COLUMNS = [
    "time_hbar_over_eps", "time_seconds", "state_label", "purity", "fidelity",
    "avg_purity", "avg_fidelity", "set_name", "coupling_type", "J", "realization_id",
]


def _series_rows(s: MetricsSeries, coupling: str, J: float, rid) -> list:
    rows = []
    for k, t in enumerate(s.times):
        for i, lab in enumerate(s.labels):
            rows.append([t, to_seconds(t), lab, s.purity[i, k], s.fidelity[i, k],
                         s.avg_purity[k], s.avg_fidelity[k], s.set_name, coupling, J, rid])
    return rows


@dataclass
class GateRun:
    cells: list[CellResult]
    means: dict[tuple[float, str, str], MetricsSeries]
    paths: dict[str, str]

    def final(self, J: float, coupling: str, set_name: str) -> tuple[float, float]:
        """Ensemble-mean (purity, fidelity) at the end of the gate."""
        s = self.means[float(J), CouplingType.parse(coupling).value, set_name]
        return float(s.avg_purity[-1]), float(s.avg_fidelity[-1])

    @property
    def failures(self) -> list[CellResult]:
        return [c for c in self.cells if c.error]


def run_gate_experiment(cfg: RunConfig, out_dir=None) -> GateRun:
    """Purity and fidelity versus time for every realization x J x coupling x set."""
    cfg.check_capacity()
    started = time.time()
    out = _prepare_out(cfg, out_dir)
    real_files = {}
    tasks = []
    for rid in range(cfg.realizations):
        for J in cfg.J:
            real_files[f"{rid}:{J:g}"] = _save_realization(out, cfg.realization(J, rid))
            for coupling in cfg.coupling:
                tasks.append((cfg.to_dict(), rid, J, coupling))
    cells = _map(tasks, _cell_task, cfg.threads)

    rows = []
    means: dict[tuple[float, str, str], MetricsSeries] = {}
    for J in cfg.J:
        for coupling in cfg.coupling:
            ok = [c for c in cells if c.J == J and c.coupling == coupling and not c.error]
            for set_name in cfg.sets:
                if not ok:
                    continue
                members = [c.series[set_name] for c in ok]
                mean = MetricsSeries(
                    set_name, members[0].times, members[0].labels,
                    np.mean([m.purity for m in members], axis=0),
                    np.mean([m.fidelity for m in members], axis=0),
                )
                means[J, coupling, set_name] = mean
    for c in cells:
        if c.error:
            continue
        for set_name in cfg.sets:
            rows.extend(_series_rows(c.series[set_name], c.coupling, c.J, c.realization_id))
    for (J, coupling, set_name), s in means.items():
        rows.extend(_series_rows(s, coupling, J, "mean"))
    metrics = _write_csv(out / "gate_metrics.csv", GATE_COLUMNS, rows)

    cell_info = [
        {"realization_id": c.realization_id, "J": c.J, "coupling": c.coupling,
         "realization_file": real_files[f"{c.realization_id}:{c.J:g}"],
         "status": "failed" if c.error else "ok", "error": c.error, **c.info}
        for c in cells
    ]
    manifest = _write_manifest(out, "gate", cfg, started, {
        "outputs": {"metrics": metrics.name},
        "realization_files": sorted(set(real_files.values())),
        "cells": cell_info,
    })
    return GateRun(cells, means, {"metrics": str(metrics), "manifest": str(manifest)})


# ------------------------------------------------------------ spectral scan

@dataclass
class SpectrumRun:
    mean_r: dict[float, list[float]]
    paths: dict[str, str]

    def ensemble_mean(self, J: float) -> float:
        return float(np.mean(self.mean_r[float(J)]))


def run_spectrum_scan(cfg: RunConfig, out_dir=None, histogram_bins: int = 20) -> SpectrumRun:
    """Gap-ratio statistic of the bath spectrum per (J, realization)."""
    started = time.time()
    out = _prepare_out(cfg, out_dir)
    spec_rows, stat_rows, hist_rows = [], [], []
    mean_r: dict[float, list[float]] = {}
    failures = []
    files = []
    for J in cfg.J:
        pooled = []
        mean_r[J] = []
        for rid in range(cfg.realizations):
            r = cfg.realization(J, rid)
            files.append(_save_realization(out, r))
            try:
                e = diagonalize(build_bath_hamiltonian(r)).eigenvalues
                stats = r_statistic(e)
            except FlawSimError as exc:
                log.error("spectrum realization=%d J=%g failed: %s", rid, J, exc)
                failures.append({"realization_id": rid, "J": J, "error": str(exc)})
                continue
            spec_rows.extend([rid, J, i, float(x)] for i, x in enumerate(e))
            stat_rows.append([J, rid, stats.mean_r, stats.retained_levels])
            mean_r[J].append(stats.mean_r)
            pooled.append(stats.ratios)
        if mean_r[J]:
            stat_rows.append([J, "mean", float(np.mean(mean_r[J])), ""])
            lo, hi, dens, poi, goe = ratio_histogram(np.concatenate(pooled), histogram_bins)
            hist_rows.extend([J, *row] for row in zip(lo, hi, dens, poi, goe))
    p1 = _write_csv(out / "spectrum.csv", ["realization_id", "J", "index", "eigenvalue"], spec_rows)
    p2 = _write_csv(out / "level_stats.csv", ["J", "realization_id", "mean_r", "retained_levels"], stat_rows)
    p3 = _write_csv(out / "ratio_histogram.csv",
                    ["J", "bin_left", "bin_right", "density", "poisson", "goe"], hist_rows)
    m = _write_manifest(out, "spectrum", cfg, started, {
        "outputs": {"spectrum": p1.name, "level_stats": p2.name, "ratio_histogram": p3.name},
        "realization_files": sorted(set(files)), "failures": failures,
    })
    return SpectrumRun(mean_r, {"spectrum": str(p1), "level_stats": str(p2),
                                "ratio_histogram": str(p3), "manifest": str(m)})


# --------------------------------------------------------------- shift scan

@dataclass
class ShiftRun:
    sigma: dict[tuple[float, str], list[float]]
    paths: dict[str, str]

    def mean_abs(self, J: float, coupling: str) -> float:
        key = (float(J), CouplingType.parse(coupling).value)
        return float(np.mean(np.abs(self.sigma[key])))


def run_shift_scan(cfg: RunConfig, out_dir=None) -> ShiftRun:
    """Canonical averages of both bath coupling operators per (J, realization)."""
    started = time.time()
    out = _prepare_out(cfg, out_dir)
    rows = []
    sigma: dict[tuple[float, str], list[float]] = {}
    files, failures = [], []
    for J in cfg.J:
        sigma[J, "bitflip"] = []
        sigma[J, "phase"] = []
        for rid in range(cfg.realizations):
            r = cfg.realization(J, rid)
            files.append(_save_realization(out, r))
            try:
                ens = thermal_ensemble(diagonalize(build_bath_hamiltonian(r)), cfg.kT, cfg.weight_cut)
                sx = canonical_average(bath_coupling_operator(r, "bitflip"), ens)
                sz = canonical_average(bath_coupling_operator(r, "phase"), ens)
            except FlawSimError as exc:
                log.error("shift realization=%d J=%g failed: %s", rid, J, exc)
                failures.append({"realization_id": rid, "J": J, "error": str(exc)})
                continue
            sigma[J, "bitflip"].append(sx)
            sigma[J, "phase"].append(sz)
            rows.append([J, rid, sx, sz, abs(sx), abs(sz)])
        if sigma[J, "bitflip"]:
            sx, sz = np.array(sigma[J, "bitflip"]), np.array(sigma[J, "phase"])
            rows.append([J, "mean", float(sx.mean()), float(sz.mean()),
                         float(np.abs(sx).mean()), float(np.abs(sz).mean())])
    p = _write_csv(out / "shift.csv",
                   ["J", "realization_id", "sigma_x", "sigma_z", "abs_sigma_x", "abs_sigma_z"], rows)
    m = _write_manifest(out, "shift", cfg, started, {
        "outputs": {"shift": p.name}, "realization_files": sorted(set(files)), "failures": failures,
    })
    return ShiftRun(sigma, {"shift": str(p), "manifest": str(m)})


# --------------------------------------------------------------- validation

def validate_gate(cfg: RunConfig, out_dir=None, bath_members: int = 1) -> dict:
    """Protocol check: composed bare propagator, gate time, and coupling-free fidelities.

    The coupling-free check runs the full register (``cfg.N`` bath qubits,
    first J value, lam = 0) from the ``bath_members`` lowest bath eigenstates.
    """
    sched = build_cnot_schedule(cfg.Bx, cfg.Bz, cfg.Jx_gate)
    dev = max_deviation_up_to_phase(sched.propagator(), ideal_cnot())
    total = sched.total_duration
    seconds = to_seconds(total)
    report: dict[str, Any] = {
        "cnot_max_deviation": dev,
        "cnot_ok": dev < 1e-10,
        "gate_time_hbar_over_eps": total,
        "gate_time_seconds": seconds,
        "time_unit_seconds": TIME_UNIT_SECONDS,
        "gate_time_relative_error": abs(seconds - REFERENCE_GATE_TIME_S) / REFERENCE_GATE_TIME_S,
    }
    report["gate_time_ok"] = report["gate_time_relative_error"] < 1e-3
    try:
        cfg.check_capacity()
        null = dataclasses.replace(cfg, lam=0.0, J=[cfg.J[0]], samples_per_segment=0)
        r = null.realization(null.J[0], 0)
        spec = diagonalize(build_bath_hamiltonian(r), k=bath_members)
        static = static_hamiltonian(r, "bitflip")
        dim = 1 << (N_SYSTEM + r.N)
        block = np.einsum("bn,sa->bsna", spec.eigenvectors, np.eye(4)).reshape(dim, -1)
        w = np.full(bath_members, 1.0 / bath_members)
        prob = PropagationProblem(sched, static, block, sample_times=sched.boundaries)
        gram = thermal_gram(evolve(prob, method=cfg.integrator).samples[-1], w)
        fids = {}
        u = ideal_cnot()
        for set_name in ("standard", "bell"):
            for lab, psi in InitialStateSet(set_name).states().items():
                phi = u @ psi
                fids[lab] = fidelity(density_from_gram(gram, psi), np.outer(phi, phi.conj()))
        report["null_coupling_fidelity"] = fids
        report["null_coupling_ok"] = all(f >= 1 - 1e-8 for f in fids.values())
    except FlawSimError as exc:
        report["null_coupling_error"] = f"{type(exc).__name__}: {exc}"
        report["null_coupling_ok"] = False
    report["ok"] = bool(report["cnot_ok"] and report["gate_time_ok"] and report["null_coupling_ok"])
    if out_dir is not None:
        out = _prepare_out(cfg, out_dir)
        (out / "validation.json").write_text(json.dumps(report, indent=1) + "\n")
    return report
