"""Flawed-QC model: CNOT pulse schedule, idle-qubit bath and its coupling.

Register layout for a full simulation: bits 0 and 1 are the two active
(system) qubits 1 and 2; bits ``2 .. N+1`` are bath qubits ``3 .. N+2``.
Bath-only operators live on an ``N``-qubit register whose bit ``j`` is bath
qubit ``j + 3``; :func:`static_hamiltonian` embeds them at offset 2.

Energies are in units of epsilon (k_B * 200 mK) and times in hbar/epsilon.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import constants

from .errors import DimensionError, DomainError
from .pauli import OperatorSum, PauliTerm

ENERGY_UNIT_KELVIN = 0.2
TIME_UNIT_SECONDS = constants.hbar / (constants.k * ENERGY_UNIT_KELVIN)

N_SYSTEM = 2
REALIZATION_FORMAT = "flawsim-realization/1"


def to_seconds(t):
    """Convert a time in hbar/epsilon to seconds."""
    return t * TIME_UNIT_SECONDS


class CouplingType(str, enum.Enum):
    """Which Pauli component couples system and bath."""

    BIT_FLIP = "bitflip"
    PHASE = "phase"

    @property
    def letter(self) -> str:
        return "X" if self is CouplingType.BIT_FLIP else "Z"

    @classmethod
    def parse(cls, value) -> "CouplingType":
        if isinstance(value, cls):
            return value
        aliases = {"x": cls.BIT_FLIP, "bit-flip": cls.BIT_FLIP, "z": cls.PHASE}
        key = str(value).strip().lower()
        return aliases.get(key) or cls(key)


def _system_op(coeffs: dict[str, float]) -> OperatorSum:
    return OperatorSum.from_dict(N_SYSTEM, coeffs)


@dataclass(frozen=True)
class ScheduleSegment:
    duration: float
    hamiltonian: OperatorSum
    label: str = ""

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError(f"segment duration must be positive, got {self.duration}")
        if not self.hamiltonian.is_hermitian:
            raise DomainError("segment Hamiltonian must be Hermitian")

    def unitary(self, t: float | None = None) -> np.ndarray:
        """``exp(-i H t)`` on the two system qubits (``t`` defaults to the full duration)."""
        return hermitian_expm(self.hamiltonian.to_sparse().toarray(), self.duration if t is None else t)


def hermitian_expm(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@dataclass(frozen=True)
class ControlSchedule:
    """Ordered, gap-free piecewise-constant control segments."""

    segments: tuple[ScheduleSegment, ...]
    Bx: float
    Bz: float
    Jx_gate: float

    @property
    def boundaries(self) -> np.ndarray:
        """Segment start/end times ``[tau_0 = 0, tau_1, ..., tau_9]``."""
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    @property
    def total_duration(self) -> float:
        return float(self.boundaries[-1])

    def propagator(self, t: float | None = None) -> np.ndarray:
        """Bare time-ordered 4x4 propagator from 0 to ``t`` (default: the full gate)."""
        t = self.total_duration if t is None else t
        u = np.eye(4, dtype=complex)
        for start, seg in zip(self.boundaries[:-1], self.segments):
            if t <= start:
                break
            u = seg.unitary(min(seg.duration, t - start)) @ u
        return u


def build_cnot_schedule(Bx: float = 1.0, Bz: float = 1.0, Jx_gate: float = 0.05) -> ControlSchedule:
    """The nine-step CNOT protocol with fast Hadamard-like steps.

    Steps 4 and 6 rotate both qubits about (x+z)/sqrt(2), step 5 is the
    entangling xx evolution, and the surrounding steps act on qubit 2 only.
    """
    for name, val in (("Bx", Bx), ("Bz", Bz), ("Jx_gate", Jx_gate)):
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val}")
    pi, r2 = math.pi, math.sqrt(2.0)
    hz = 0.5 * Bz
    hx = 0.5 * Bx
    both = {"ZI": hz, "XI": hz, "IZ": hz, "IX": hz}
    rows = [
        ({"IZ": -hz}, pi / (2 * Bz), "-Bz/2 Z2"),
        ({"IX": -hx}, pi / (2 * Bx), "-Bx/2 X2"),
        ({"IZ": +hz}, pi / (2 * Bz), "+Bz/2 Z2"),
        ({k: -v for k, v in both.items()}, r2 * pi / (2 * Bz), "-Bz/2 sum(Z+X)"),
        ({"XI": -Jx_gate, "IX": -Jx_gate, "XX": Jx_gate}, pi / (4 * Jx_gate), "Jx(-X1-X2+X1X2)"),
        (dict(both), r2 * pi / (2 * Bz), "+Bz/2 sum(Z+X)"),
        ({"IZ": -hz}, pi / (2 * Bz), "-Bz/2 Z2"),
        ({"IX": +hx}, pi / (2 * Bx), "+Bx/2 X2"),
        ({"IZ": +hz}, pi / (2 * Bz), "+Bz/2 Z2"),
    ]
    segs = tuple(ScheduleSegment(d, _system_op(h), label) for h, d, label in rows)
    return ControlSchedule(segs, float(Bx), float(Bz), float(Jx_gate))


def ideal_cnot() -> np.ndarray:
    """CNOT with qubit 1 as control and qubit 2 as target.

    Basis index is ``q1 + 2*q2``, so ``|q1 q2> = |10>`` is index 1 and maps to
    ``|11>`` (index 3).
    """
    return np.eye(4, dtype=complex)[[0, 3, 2, 1]]


def max_deviation_up_to_phase(u: np.ndarray, target: np.ndarray) -> float:
    """Largest entrywise ``|u - e^{i phi} target|`` with the best global phase."""
    overlap = np.vdot(target, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(u - phase * target)))


@dataclass(frozen=True)
class BathParams:
    """Sampling parameters for the idle-qubit imperfections.

    ``connectivity`` selects which bath pairs carry an xx coupling: ``"all"``
    (every pair i<j) or ``"ring"`` (nearest neighbours on a closed chain,
    which is the perimeter of a 3x4 grid with the two central qubits active).
    """

    N: int = 10
    B0x: float = 1.0
    B0z: float = 1.0
    delta: float = 0.4
    J: float = 0.05
    lam: float = 0.05
    seed: int = 0
    connectivity: str = "all"

    def __post_init__(self):
        if self.N < 1:
            raise DomainError("N must be at least 1")
        for name in ("delta", "J", "lam"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.connectivity not in ("all", "ring"):
            raise DomainError(f"unknown connectivity {self.connectivity!r}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """All bath pairs ``(i, j)``, i<j, 0-based, in lexicographic order."""
        return list(itertools.combinations(range(self.N), 2))

    def coupled(self, i: int, j: int) -> bool:
        if self.connectivity == "all":
            return True
        return (j - i) == 1 or (self.N > 2 and (i, j) == (0, self.N - 1))


@dataclass(frozen=True)
class Realization:
    """One concrete draw of every random imperfection parameter."""

    params: BathParams
    Bx: np.ndarray
    Bz: np.ndarray
    Jij: np.ndarray
    lam_x: np.ndarray
    lam_z: np.ndarray
    realization_id: int = 0
    pairs: list[tuple[int, int]] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pairs", self.params.pairs)
        n = self.params.N
        for name, size in (("Bx", n), ("Bz", n), ("Jij", n * (n - 1) // 2), ("lam_x", n), ("lam_z", n)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise DimensionError(f"{name} must have shape ({size},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.params.N

    def with_J(self, J: float) -> "Realization":
        """Same draw re-sampled at a different coupling bound (same seed, so couplings scale)."""
        return sample_realization(replace(self.params, J=J), self.realization_id)

    def to_dict(self) -> dict:
        return {
            "format": REALIZATION_FORMAT,
            "realization_id": self.realization_id,
            "params": asdict(self.params),
            "rng": "numpy.random.PCG64",
            "draw_order": ["Bx", "Bz", "Jij", "lam_x", "lam_z"],
            "pairs": [list(p) for p in self.pairs],
            "Bx": self.Bx.tolist(),
            "Bz": self.Bz.tolist(),
            "Jij": self.Jij.tolist(),
            "lam_x": self.lam_x.tolist(),
            "lam_z": self.lam_z.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Realization":
        if data.get("format") != REALIZATION_FORMAT:
            raise ValueError(f"not a realization record: format={data.get('format')!r}")
        params = BathParams(**data["params"])
        return cls(
            params,
            np.array(data["Bx"], dtype=float),
            np.array(data["Bz"], dtype=float),
            np.array(data["Jij"], dtype=float),
            np.array(data["lam_x"], dtype=float),
            np.array(data["lam_z"], dtype=float),
            realization_id=int(data.get("realization_id", 0)),
        )

    def to_json(self) -> str:
        # json writes floats with repr, which round-trips exactly.
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Realization":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Realization":
        return cls.from_json(Path(path).read_text())

    def __eq__(self, other):
        if not isinstance(other, Realization):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def sample_realization(params: BathParams, realization_id: int = 0) -> Realization:
    """Draw one realization from ``PCG64(params.seed)``.

    Draw order: Bx for bath qubits in index order, then Bz, then one xx
    coupling per pair in lexicographic order, then lam_x, then lam_z.  Pairs
    excluded by the connectivity still consume their draw and are set to 0,
    so the same seed gives the same fields under either connectivity.
    Couplings are ``J * (2u - 1)`` in effect, so a J sweep at fixed seed
    rescales one coupling pattern.
    """
    rng = np.random.Generator(np.random.PCG64(params.seed))
    n, half = params.N, params.delta / 2
    bx = rng.uniform(params.B0x - half, params.B0x + half, n)
    bz = rng.uniform(params.B0z - half, params.B0z + half, n)
    jij = rng.uniform(-params.J, params.J, n * (n - 1) // 2)
    lam_x = rng.uniform(-params.lam, params.lam, n)
    lam_z = rng.uniform(-params.lam, params.lam, n)
    if params.connectivity != "all":
        mask = np.array([params.coupled(i, j) for i, j in params.pairs], dtype=bool)
        jij = np.where(mask, jij, 0.0)
    return Realization(params, bx, bz, jij, lam_x, lam_z, realization_id=realization_id)


def build_bath_hamiltonian(r: Realization) -> OperatorSum:
    """Idle-qubit Hamiltonian on the N-qubit bath register."""
    n = r.N
    terms = []
    for i in range(n):
        terms.append(PauliTerm.from_sites(n, {i: "X"}, -0.5 * r.Bx[i]))
        terms.append(PauliTerm.from_sites(n, {i: "Z"}, -0.5 * r.Bz[i]))
    for (i, j), c in zip(r.pairs, r.Jij):
        terms.append(PauliTerm.from_sites(n, {i: "X", j: "X"}, c))
    return OperatorSum(n, terms)


def bath_coupling_operator(r: Realization, ct: CouplingType) -> OperatorSum:
    """``sum_i lam_alpha^i sigma_alpha^i`` on the bath register."""
    ct = CouplingType.parse(ct)
    lam = r.lam_x if ct is CouplingType.BIT_FLIP else r.lam_z
    return OperatorSum(r.N, (PauliTerm.from_sites(r.N, {i: ct.letter}, c) for i, c in enumerate(lam)))


def build_interaction(r: Realization, ct: CouplingType) -> OperatorSum:
    """``(sigma_alpha^1 + sigma_alpha^2) * Sigma_alpha`` on the full 2+N register."""
    ct = CouplingType.parse(ct)
    n = N_SYSTEM + r.N
    lam = r.lam_x if ct is CouplingType.BIT_FLIP else r.lam_z
    a = ct.letter
    terms = []
    for i, c in enumerate(lam):
        for s in range(N_SYSTEM):
            terms.append(PauliTerm.from_sites(n, {s: a, N_SYSTEM + i: a}, c))
    return OperatorSum(n, terms)


def static_hamiltonian(r: Realization, ct: CouplingType) -> OperatorSum:
    """Always-on part ``H_SB + H_B`` on the full register."""
    hb = build_bath_hamiltonian(r).embed(N_SYSTEM + r.N, offset=N_SYSTEM)
    return hb + build_interaction(r, ct)
