"""Time propagation through a piecewise-constant Hamiltonian.

Two integrators share one interface:

* ``"rk"`` - adaptive Dormand-Prince 8(5,3) with error control (``rtol``/``atol``).
* ``"chebyshev"`` - Chebyshev expansion of ``exp(-i H dt)`` per segment,
  accurate to round-off, with every sample time of a segment accumulated in a
  single recurrence.  Much cheaper for the 12-qubit gate runs.

States may be a single vector ``(2**n,)`` or a block of columns ``(2**n, k)``;
columns are propagated independently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.special import jv

from .errors import CapacityError, DimensionError, IntegrationError, StiffnessError
from .model import ControlSchedule
from .pauli import MAX_DENSE_QUBITS, OperatorSum, PauliTerm, SparseOperator, to_dense

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-11
NORM_FAIL_TOL = 1e-6
NORM_TOL = 1e-9
SAMPLES_PER_SEGMENT = 40
_CHEB_TAIL = 1e-16


def sample_grid(boundaries: Sequence[float], per_segment: int = SAMPLES_PER_SEGMENT) -> np.ndarray:
    """``per_segment`` uniform intervals inside each segment, boundaries included once."""
    b = np.asarray(boundaries, dtype=float)
    if per_segment < 1:
        return b.copy()
    pts = [np.linspace(b[i], b[i + 1], per_segment + 1)[:-1] for i in range(len(b) - 1)]
    return np.concatenate(pts + [b[-1:]])


@dataclass
class PropagationProblem:
    """Initial state(s) evolved under ``schedule`` plus an always-on ``static`` term.

    ``schedule`` is either a :class:`ControlSchedule` (two-qubit segments
    embedded on bits 0-1) or a sequence of ``(duration, OperatorSum)`` pairs on
    the full register.
    """

    schedule: ControlSchedule | Sequence[tuple[float, OperatorSum]]
    static: OperatorSum
    initial: np.ndarray
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    sample_times: np.ndarray | None = None

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.complex128)
        n = self.static.nqubits
        if self.initial.ndim not in (1, 2) or self.initial.shape[0] != 1 << n:
            raise DimensionError(f"initial state shape {self.initial.shape} does not fit {n} qubits")
        norms = np.linalg.norm(self.initial, axis=0)
        if np.any(np.abs(norms - 1) > NORM_TOL):
            raise DimensionError("initial state(s) must be normalized")
        bounds = self.boundaries
        if self.sample_times is None:
            times = sample_grid(bounds)
        else:
            times = np.asarray(self.sample_times, dtype=float)
            if np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > bounds[-1] * (1 + 1e-14):
                raise ValueError("sample_times must be ascending within [0, total duration]")
            times = np.union1d(times, bounds)
        self.sample_times = times

    @property
    def nqubits(self) -> int:
        return self.static.nqubits

    def parts(self) -> list[tuple[float, OperatorSum]]:
        """``(duration, control term)`` per segment, controls on the full register."""
        n = self.nqubits
        if isinstance(self.schedule, ControlSchedule):
            return [(s.duration, s.hamiltonian.embed(n, 0)) for s in self.schedule.segments]
        out = []
        for d, h in self.schedule:
            if h.nqubits != n:
                h = h.embed(n, 0)
            out.append((float(d), h))
        return out

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([d for d, _ in self.parts()])])


@dataclass
class Trajectory:
    times: np.ndarray
    samples: list = field(default_factory=list)
    max_norm_drift: float = 0.0
    method: str = "rk"


def _spectral_bounds(op: OperatorSum) -> tuple[float, float]:
    if len(op) == 0:
        return 0.0, 0.0
    if op.nqubits <= 10:
        w = np.linalg.eigvalsh(op.to_sparse().toarray())
        return float(w[0]), float(w[-1])
    m = op.to_sparse()
    v0 = np.random.default_rng(2024).standard_normal(m.shape[0])
    lo = spla.eigsh(m, k=1, which="SA", v0=v0, tol=1e-8, return_eigenvectors=False)[0]
    hi = spla.eigsh(m, k=1, which="LA", v0=v0, tol=1e-8, return_eigenvectors=False)[0]
    return float(lo), float(hi)


def _control_bounds(op: OperatorSum) -> tuple[float, float]:
    # Controls touch only a few qubits; their spectrum is that of the reduced operator.
    touched = sorted({i for t in op.terms for i, c in enumerate(t.letters) if c != "I"})
    if not touched:
        c = sum(t.coefficient.real for t in op.terms)
        return c, c
    if len(touched) > 10:
        return _spectral_bounds(op)
    small = OperatorSum(
        len(touched),
        [PauliTerm(t.coefficient, "".join(t.letters[i] for i in touched)) for t in op.terms],
    )
    w = np.linalg.eigvalsh(small.to_sparse().toarray())
    return float(w[0]), float(w[-1])


def _chebyshev_segment(hop: SparseOperator, lo: float, hi: float, y0: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """``exp(-i H tau) y0`` for every ``tau`` in ``taus``; returns ``(len(taus),) + y0.shape``."""
    centre = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    half = half * 1.01 + 1e-3  # margin keeps the spectrum strictly inside [-1, 1]
    x = half * taus
    kmax = int(x.max() + 12 * np.cbrt(x.max()) + 40)
    ks = np.arange(kmax + 1)
    bess = jv(ks[:, None], x[None, :])  # (k, tau)
    big = np.nonzero(np.max(np.abs(bess), axis=1) > _CHEB_TAIL)[0]
    nterms = int(big[-1]) + 2 if len(big) else 1
    phase = (-1j) ** (ks[:nterms] % 4)
    coef = bess[:nterms] * phase[:, None]
    coef[1:] *= 2.0
    coef = coef * np.exp(-1j * centre * taus)[None, :]

    out = np.empty((len(taus),) + y0.shape, dtype=np.complex128)
    prev = np.ascontiguousarray(y0, dtype=np.complex128).copy()
    for j in range(len(taus)):
        out[j] = coef[0, j] * prev
    if nterms == 1:
        return out
    cur = np.zeros_like(prev)
    hop.recurrence_step(prev, cur, 1.0 / half, centre / half)
    for j in range(len(taus)):
        out[j] += coef[1, j] * cur
    for k in range(2, nterms):
        # T_{k} = 2 H~ T_{k-1} - T_{k-2}, written over the T_{k-2} buffer
        hop.recurrence_step(cur, prev, 2.0 / half, 2.0 * centre / half)
        prev, cur = cur, prev
        ck = coef[k]
        for j in np.nonzero(np.abs(ck) > 0)[0]:
            out[j] += ck[j] * cur
    return out


def _rk_segment(hop: SparseOperator, y0: np.ndarray, d: float, taus: np.ndarray, rtol, atol) -> np.ndarray:
    shape = y0.shape

    def rhs(_t, y):
        return (-1j * (hop @ y.reshape(shape))).ravel()

    # scipy measures error as an RMS over components; dividing by sqrt(dim)
    # turns rtol/atol into bounds on the Euclidean error of each state.
    scale = np.sqrt(shape[0])
    sol = solve_ivp(rhs, (0.0, d), y0.ravel(), method="DOP853", t_eval=taus,
                    rtol=rtol / scale, atol=atol / scale)
    if sol.status != 0:
        raise StiffnessError(f"adaptive integration failed at t={sol.t[-1] if len(sol.t) else 0.0}: {sol.message}")
    return sol.y.T.reshape((len(taus),) + shape)


def evolve(
    problem: PropagationProblem,
    method: str = "rk",
    observer: Callable[[float, np.ndarray], object] | None = None,
) -> Trajectory:
    """Propagate ``problem.initial`` and record every sample time.

    Without an ``observer`` each sample is a copy of the state (block);
    otherwise the sample is ``observer(t, state)``, which avoids keeping
    full-register states in memory.  Norm drift above 1e-6 raises
    :class:`IntegrationError`; states are never renormalized.
    """
    if method not in ("rk", "chebyshev"):
        raise ValueError(f"unknown method {method!r}")
    record = observer or (lambda _t, y: y.copy())
    times = problem.sample_times
    bounds = problem.boundaries
    parts = problem.parts()
    y = problem.initial.copy()
    norm0 = np.linalg.norm(y, axis=0)
    traj = Trajectory(times=times, method=method)
    traj.samples.append(record(float(times[0]), y))

    static_lo = static_hi = None
    if method == "chebyshev":
        static_lo, static_hi = _spectral_bounds(problem.static)

    for i, (d, control) in enumerate(parts):
        t0, t1 = bounds[i], bounds[i + 1]
        sel = np.nonzero((times > t0) & (times <= t1))[0]
        taus = times[sel] - t0
        taus[-1] = d  # the end of the segment is exactly its duration
        h = control + problem.static
        hop = SparseOperator(h)
        if method == "rk":
            ys = _rk_segment(hop, y, d, taus, problem.rtol, problem.atol)
        else:
            clo, chi = _control_bounds(control)
            ys = _chebyshev_segment(hop, static_lo + clo, static_hi + chi, y, taus)
        for j, idx in enumerate(sel):
            drift = float(np.max(np.abs(np.linalg.norm(ys[j], axis=0) - norm0)))
            traj.max_norm_drift = max(traj.max_norm_drift, drift)
            if drift > NORM_FAIL_TOL:
                raise IntegrationError(f"norm drift {drift:.3e} at t={times[idx]:.6g}")
            traj.samples.append(record(float(times[idx]), ys[j]))
        y = ys[-1].copy()
    return traj


def evolve_expm_oracle(v: np.ndarray, H: OperatorSum, dt: float, max_qubits: int = MAX_DENSE_QUBITS) -> np.ndarray:
    """Exact ``exp(-i H dt) v`` from a dense eigendecomposition."""
    if H.nqubits > max_qubits:
        raise CapacityError(f"dense exponential of {H.nqubits} qubits exceeds the guard")
    v = np.asarray(v, dtype=np.complex128)
    if v.shape[0] != 1 << H.nqubits:
        raise DimensionError("state and operator sizes differ")
    if dt == 0:
        return v.copy()
    w, u = np.linalg.eigh(to_dense(H, max_qubits))
    return u @ (np.exp(-1j * w * dt)[:, None] * (u.conj().T @ v.reshape(len(v), -1))).reshape(v.shape)
