"""Sparse Pauli-string operators and their action on state vectors.

Basis convention used everywhere in the package: qubit ``k`` (1-based, as in
the physics labels) is bit ``k - 1`` of the basis index, and bit value 0 is
the +1 eigenstate of sigma_z.  A Pauli string is written left to right
starting from bit 0, so ``"XZ"`` is X on bit 0 and Z on bit 1.

State vectors are plain complex numpy arrays of shape ``(2**n,)``; a block
of column vectors of shape ``(2**n, k)`` is accepted wherever a state is.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from ._kernels import cheb_step
from .errors import CapacityError, DimensionError

PAULI_LETTERS = "IXYZ"

# (a, b) -> (phase, letter) with a . b = phase * letter
_PRODUCT_TABLE = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}

MAX_DENSE_QUBITS = 12
HERMITIAN_ATOL = 1e-12


def _parity(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    shift = 32
    while shift:
        a ^= a >> shift
        shift //= 2
    return a & 1


def _check_state(v: np.ndarray, nqubits: int) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim not in (1, 2) or v.shape[0] != 1 << nqubits:
        raise DimensionError(
            f"state of shape {v.shape} does not match a {nqubits}-qubit operator"
        )
    return v


@dataclass(frozen=True)
class PauliTerm:
    """A coefficient times a tensor product of single-qubit Paulis."""

    coefficient: complex
    letters: str

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or any(c not in PAULI_LETTERS for c in letters):
            raise ValueError(f"invalid Pauli string {self.letters!r}")
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @classmethod
    def from_sites(cls, nqubits: int, sites: Mapping[int, str], coefficient: complex = 1.0):
        """Build a term from ``{bit_position: letter}`` with identity elsewhere."""
        letters = ["I"] * nqubits
        for pos, letter in sites.items():
            if not 0 <= pos < nqubits:
                raise DimensionError(f"site {pos} outside a {nqubits}-qubit register")
            letters[pos] = letter
        return cls(coefficient, "".join(letters))

    @property
    def nqubits(self) -> int:
        return len(self.letters)

    @cached_property
    def masks(self) -> tuple[int, int, int]:
        """``(x_mask, z_mask, number_of_Y)`` of the string."""
        xm = zm = ny = 0
        for pos, c in enumerate(self.letters):
            if c in "XY":
                xm |= 1 << pos
            if c in "ZY":
                zm |= 1 << pos
            ny += c == "Y"
        return xm, zm, ny

    def __mul__(self, other):
        if isinstance(other, PauliTerm):
            return multiply_terms(self, other)
        return PauliTerm(self.coefficient * other, self.letters)

    def __rmul__(self, scalar):
        return PauliTerm(self.coefficient * scalar, self.letters)

    def __str__(self):
        return f"({self.coefficient:g})*{self.letters}"


def multiply_terms(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Operator product ``a @ b`` with the accumulated phase, e.g. X.Z = -iY."""
    if a.nqubits != b.nqubits:
        raise DimensionError(f"cannot multiply {a.nqubits}- and {b.nqubits}-qubit terms")
    phase = 1
    out = []
    for x, y in zip(a.letters, b.letters):
        p, letter = _PRODUCT_TABLE[x, y]
        phase *= p
        out.append(letter)
    return PauliTerm(a.coefficient * b.coefficient * phase, "".join(out))


def _term_diagonal(term: PauliTerm, idx: np.ndarray) -> np.ndarray:
    # Row-wise weights d with (P v)[c] = d[c] * v[c ^ x_mask].
    xm, zm, ny = term.masks
    sign = 1 - 2 * _parity((idx ^ xm) & zm)
    return term.coefficient * (1j**ny) * sign


def apply_term(term: PauliTerm, v: np.ndarray) -> np.ndarray:
    """Return ``term @ v`` without forming a matrix."""
    v = _check_state(v, term.nqubits)
    idx = np.arange(v.shape[0])
    xm = term.masks[0]
    d = _term_diagonal(term, idx)
    src = v[idx ^ xm]
    return d[:, None] * src if v.ndim == 2 else d * src


class OperatorSum:
    """A sum of Pauli terms on ``nqubits`` qubits, kept in merged canonical form.

    Terms with identical strings are combined on construction and exact zeros
    are dropped, so two sums representing the same operator compare equal.
    """

    def __init__(self, nqubits: int, terms: Iterable[PauliTerm] = ()):
        if nqubits < 1:
            raise DimensionError("nqubits must be positive")
        self.nqubits = int(nqubits)
        merged: dict[str, complex] = {}
        for t in terms:
            if t.nqubits != self.nqubits:
                raise DimensionError(
                    f"term {t.letters!r} has {t.nqubits} qubits, expected {self.nqubits}"
                )
            merged[t.letters] = merged.get(t.letters, 0j) + t.coefficient
        self._terms = {k: c for k, c in sorted(merged.items()) if c != 0}

    @classmethod
    def from_dict(cls, nqubits: int, coeffs: Mapping[str, complex]) -> "OperatorSum":
        return cls(nqubits, (PauliTerm(c, s) for s, c in coeffs.items()))

    @classmethod
    def identity(cls, nqubits: int, coefficient: complex = 1.0) -> "OperatorSum":
        return cls(nqubits, [PauliTerm(coefficient, "I" * nqubits)])

    @property
    def terms(self) -> tuple[PauliTerm, ...]:
        return tuple(PauliTerm(c, s) for s, c in self._terms.items())

    def coefficients(self) -> dict[str, complex]:
        return dict(self._terms)

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self.terms)

    def __eq__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.nqubits == other.nqubits and self._terms == other._terms

    def __hash__(self):
        return hash((self.nqubits, tuple(self._terms.items())))

    def __repr__(self):
        body = " + ".join(str(t) for t in self.terms) or "0"
        return f"OperatorSum({self.nqubits}, {body})"

    def __add__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        if other.nqubits != self.nqubits:
            raise DimensionError("cannot add operators on different registers")
        return OperatorSum(self.nqubits, self.terms + other.terms)

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, OperatorSum):
            if scalar.nqubits != self.nqubits:
                raise DimensionError("cannot multiply operators on different registers")
            return OperatorSum(
                self.nqubits, (multiply_terms(a, b) for a in self.terms for b in scalar.terms)
            )
        return OperatorSum(self.nqubits, (t * scalar for t in self.terms))

    __rmul__ = __mul__

    @property
    def is_hermitian(self) -> bool:
        return all(abs(c.imag) <= HERMITIAN_ATOL for c in self._terms.values())

    @property
    def is_real(self) -> bool:
        """True when the matrix is real: real coefficients and an even number of Y per term."""
        return all(
            (c.imag == 0 if s.count("Y") % 2 == 0 else c.real == 0)
            for s, c in self._terms.items()
        )

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm (sum of absolute coefficients)."""
        return float(sum(abs(c) for c in self._terms.values()))

    def embed(self, nqubits: int, offset: int = 0) -> "OperatorSum":
        """Pad every string with identities to act on bits ``offset..offset+n-1`` of a larger register."""
        if offset < 0 or offset + self.nqubits > nqubits:
            raise DimensionError(
                f"cannot place {self.nqubits} qubits at offset {offset} in {nqubits}"
            )
        pre, post = "I" * offset, "I" * (nqubits - offset - self.nqubits)
        return OperatorSum(nqubits, (PauliTerm(c, pre + s + post) for s, c in self._terms.items()))

    @cached_property
    def _groups(self) -> list[tuple[int, np.ndarray]]:
        # Terms sharing an x-mask hit the same permuted entries; fuse their weights.
        idx = np.arange(1 << self.nqubits)
        groups: dict[int, np.ndarray] = {}
        for t in self.terms:
            d = _term_diagonal(t, idx)
            xm = t.masks[0]
            if xm in groups:
                groups[xm] = groups[xm] + d
            else:
                groups[xm] = d
        return sorted(groups.items())

    def to_sparse(self) -> sp.csr_matrix:
        """CSR matrix of the operator; real dtype when the matrix is real."""
        dim = 1 << self.nqubits
        dtype = np.float64 if self.is_real else np.complex128
        if not self._terms:
            return sp.csr_matrix((dim, dim), dtype=dtype)
        idx = np.arange(dim)
        rows = np.concatenate([idx for _ in self._groups])
        cols = np.concatenate([idx ^ xm for xm, _ in self._groups])
        data = np.concatenate([d for _, d in self._groups])
        if dtype is np.float64:
            data = data.real
        m = sp.csr_matrix((data, (rows, cols)), shape=(dim, dim), dtype=dtype)
        m.eliminate_zeros()
        return m


def apply_sum(op: OperatorSum, v: np.ndarray) -> np.ndarray:
    """Return ``op @ v``; an empty sum gives the zero vector."""
    v = _check_state(v, op.nqubits)
    out = np.zeros(v.shape, dtype=np.result_type(v.dtype, np.complex128))
    idx = np.arange(v.shape[0])
    for xm, d in op._groups:
        src = v[idx ^ xm]
        out += d[:, None] * src if v.ndim == 2 else d * src
    return out


def to_dense(op: OperatorSum, max_qubits: int = MAX_DENSE_QUBITS) -> np.ndarray:
    """Dense ``2**n x 2**n`` complex matrix of ``op``."""
    if op.nqubits > max_qubits:
        raise CapacityError(
            f"dense matrix of {op.nqubits} qubits exceeds the {max_qubits}-qubit guard"
        )
    return op.to_sparse().toarray().astype(np.complex128)


def expectation(op: OperatorSum, v: np.ndarray) -> complex:
    """``<v|op|v>`` for a single state vector."""
    v = _check_state(v, op.nqubits)
    if v.ndim != 1:
        raise DimensionError("expectation expects a single state vector")
    return complex(np.vdot(v, apply_sum(op, v)))


class SparseOperator:
    """Matrix-free ``H @ Y`` for a fixed operator, tuned for blocks of states.

    Real operators multiply the real and imaginary parts of a complex block in
    a single real sparse product by viewing the block as interleaved floats.
    """

    def __init__(self, op: OperatorSum):
        self.nqubits = op.nqubits
        self.dim = 1 << op.nqubits
        self.matrix = op.to_sparse()
        self.real = self.matrix.dtype == np.float64
        if self.real and len(op):
            self._masks = np.array([xm for xm, _ in op._groups], dtype=np.int64)
            self._diag = np.ascontiguousarray([d.real for _, d in op._groups])
        else:
            self._masks = None

    def recurrence_step(self, cur: np.ndarray, prev: np.ndarray, alpha: float, beta: float) -> None:
        """In place: ``prev <- alpha * (H @ cur) - beta * cur - prev``."""
        if self._masks is not None and cur.dtype == prev.dtype == np.complex128 \
                and cur.flags.c_contiguous and prev.flags.c_contiguous:
            c2 = cur.reshape(self.dim, -1).view(np.float64)
            p2 = prev.reshape(self.dim, -1).view(np.float64)
            cheb_step(self._masks, self._diag, c2, p2, float(alpha), float(beta))
            return
        nxt = alpha * (self @ cur) - beta * cur - prev
        prev[...] = nxt

    def __matmul__(self, y: np.ndarray) -> np.ndarray:
        if self.real and y.dtype == np.complex128:
            flat = y.reshape(self.dim, -1)
            if not flat.flags.c_contiguous:
                flat = np.ascontiguousarray(flat)
            out = self.matrix @ flat.view(np.float64)
            return out.view(np.complex128).reshape(y.shape)
        return self.matrix @ y
