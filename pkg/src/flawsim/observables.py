"""Two-qubit reduced densities, purity, fidelity and set averages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, DomainError
from .model import ControlSchedule, N_SYSTEM

DENSITY_TOL = 1e-10
SYSTEM_DIM = 1 << N_SYSTEM
PURITY_FLOOR = 1.0 / SYSTEM_DIM

_R2 = 1 / np.sqrt(2)


def basis_index(label: str) -> int:
    """Index of ``|q1 q2>`` given as the string ``"q1q2"``; qubit 1 is bit 0."""
    q1, q2 = int(label[0]), int(label[1])
    return q1 + 2 * q2


def _ket(*pairs) -> np.ndarray:
    v = np.zeros(SYSTEM_DIM, dtype=complex)
    for amp, label in pairs:
        v[basis_index(label)] += amp
    return v


class InitialStateSet(str, enum.Enum):
    STANDARD = "standard"
    BELL = "bell"

    def states(self) -> dict[str, np.ndarray]:
        """Label -> normalized two-qubit state vector, in a fixed order."""
        if self is InitialStateSet.STANDARD:
            return {s: _ket((1.0, s)) for s in ("00", "01", "10", "11")}
        return {
            "phi+": _ket((_R2, "00"), (_R2, "11")),
            "phi-": _ket((_R2, "00"), (-_R2, "11")),
            "psi+": _ket((_R2, "01"), (_R2, "10")),
            "psi-": _ket((_R2, "01"), (-_R2, "10")),
        }

    @classmethod
    def parse(cls, value) -> "InitialStateSet":
        return value if isinstance(value, cls) else cls(str(value).strip().lower())


def check_density(rho: np.ndarray, tol: float = DENSITY_TOL) -> np.ndarray:
    """Raise :class:`DomainError` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (SYSTEM_DIM, SYSTEM_DIM):
        raise DimensionError(f"expected 4x4 density, got shape {rho.shape}")
    herm = np.max(np.abs(rho - np.swapaxes(rho.conj(), -1, -2)))
    if herm > tol:
        raise DomainError(f"density not Hermitian (deviation {herm:.2e})")
    tr = np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1))
    if tr > tol:
        raise DomainError(f"density trace deviates from 1 by {tr:.2e}")
    lo = np.min(np.linalg.eigvalsh(0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))))
    if lo < -tol:
        raise DomainError(f"density has negative eigenvalue {lo:.2e}")
    return rho


def partial_trace_bath(v: np.ndarray, n_system: int = N_SYSTEM) -> np.ndarray:
    """Reduced density of the system bits of ``v``, tracing out everything above them.

    ``rho[s, s'] = sum_b v[s + 2**n_system * b] * conj(v[s' + 2**n_system * b])``.
    A block ``(2**n, k)`` gives ``k`` densities stacked as ``(k, 4, 4)``.
    """
    v = np.asarray(v)
    ds = 1 << n_system
    dim = v.shape[0]
    if dim < 2 * ds or dim & (dim - 1):
        raise DimensionError(f"state of length {dim} is not a register larger than the system")
    if v.ndim == 1:
        a = v.reshape(dim // ds, ds)
        return a.T @ a.conj()
    a = v.reshape(dim // ds, ds, v.shape[1])
    return np.einsum("bsk,btk->kst", a, a.conj())


def accumulate_thermal(contributions: Iterable[tuple[float, np.ndarray]]) -> np.ndarray:
    """Weighted sum of reduced densities, folded in the given order."""
    total = np.zeros((SYSTEM_DIM, SYSTEM_DIM), dtype=complex)
    for w, rho in contributions:
        total = total + w * np.asarray(rho)
    return total


def purity(rho: np.ndarray) -> float:
    """``Tr(rho^2)``."""
    rho = np.asarray(rho)
    return float(np.real(np.einsum("ij,ji->", rho, rho)))


def fidelity(rho: np.ndarray, ideal: np.ndarray) -> float:
    """``Tr(rho rho_ideal)`` against a pure ideal density."""
    return float(np.real(np.einsum("ij,ji->", np.asarray(rho), np.asarray(ideal))))


def thermal_gram(block: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted system Gram tensor of a block of propagated states.

    ``block`` has columns ordered ``member * 4 + s0``: the bath member ``n``
    paired with standard system state ``s0``.  Returns ``G[s, s0, t, t0] =
    sum_n w_n sum_b Psi_{n,s0}[s, b] conj(Psi_{n,t0}[t, b])``, from which the
    thermal reduced density of any initial superposition follows by linearity
    (see :func:`density_from_gram`).
    """
    weights = np.asarray(weights, dtype=float)
    m = len(weights)
    dim = block.shape[0]
    if block.shape[1] != m * SYSTEM_DIM:
        raise DimensionError("block must have 4 columns per thermal member")
    y = block.reshape(dim // SYSTEM_DIM, SYSTEM_DIM, m, SYSTEM_DIM)  # [b, s, n, s0]
    y = y * np.sqrt(weights)[None, None, :, None]
    z = np.ascontiguousarray(y.transpose(1, 3, 0, 2)).reshape(SYSTEM_DIM * SYSTEM_DIM, -1)
    g = z @ z.conj().T
    return g.reshape(SYSTEM_DIM, SYSTEM_DIM, SYSTEM_DIM, SYSTEM_DIM)


def density_from_gram(gram: np.ndarray, psi0: np.ndarray) -> np.ndarray:
    """Reduced density for initial system state ``psi0 = sum c_s0 |s0>``."""
    c = np.asarray(psi0)
    return np.einsum("a,b,satb->st", c, c.conj(), gram)


def ideal_trajectory(schedule: ControlSchedule, psi0: np.ndarray, sample_times: Sequence[float]) -> list[np.ndarray]:
    """Pure densities of the bare (bath-free) evolution of ``psi0`` on ``sample_times``."""
    psi0 = np.asarray(psi0, dtype=complex)
    out = []
    for t in sample_times:
        phi = schedule.propagator(float(t)) @ psi0
        out.append(np.outer(phi, phi.conj()))
    return out


def ideal_propagators(schedule: ControlSchedule, sample_times: Sequence[float]) -> np.ndarray:
    """Bare 4x4 propagators at each sample time (stacked), built incrementally."""
    times = np.asarray(sample_times, dtype=float)
    bounds = schedule.boundaries
    out = np.empty((len(times), SYSTEM_DIM, SYSTEM_DIM), dtype=complex)
    seg_start = np.eye(SYSTEM_DIM, dtype=complex)
    k = 0
    for j, t in enumerate(times):
        while k < len(schedule.segments) and t > bounds[k + 1]:
            seg_start = schedule.segments[k].unitary() @ seg_start
            k += 1
        if k == len(schedule.segments):
            out[j] = seg_start
        else:
            out[j] = schedule.segments[k].unitary(t - bounds[k]) @ seg_start
    return out


@dataclass
class MetricsSeries:
    """Per-state and set-averaged purity and fidelity on a shared time grid."""

    set_name: str
    times: np.ndarray
    labels: list[str]
    purity: np.ndarray  # (n_states, n_times)
    fidelity: np.ndarray
    avg_purity: np.ndarray = field(init=False)
    avg_fidelity: np.ndarray = field(init=False)

    def __post_init__(self):
        self.purity = np.asarray(self.purity, dtype=float)
        self.fidelity = np.asarray(self.fidelity, dtype=float)
        self.avg_purity = self.purity.mean(axis=0)
        self.avg_fidelity = self.fidelity.mean(axis=0)


def average_over_set(
    state_set: InitialStateSet,
    per_state_series: Mapping[str, tuple[Sequence[float], np.ndarray, np.ndarray]],
) -> MetricsSeries:
    """Pointwise mean over the four members of ``state_set``.

    ``per_state_series`` maps each label to ``(times, purity, fidelity)``; all
    four must share one time grid.
    """
    state_set = InitialStateSet.parse(state_set)
    labels = list(state_set.states())
    missing = set(labels) - set(per_state_series)
    if missing:
        raise DimensionError(f"missing series for {sorted(missing)}")
    times = np.asarray(per_state_series[labels[0]][0], dtype=float)
    pur, fid = [], []
    for lab in labels:
        t, p, f = per_state_series[lab]
        if len(t) != len(times) or np.any(np.asarray(t, dtype=float) != times):
            raise DimensionError(f"time grid of {lab!r} differs from {labels[0]!r}")
        pur.append(p)
        fid.append(f)
    return MetricsSeries(state_set.value, times, labels, np.array(pur), np.array(fid))
