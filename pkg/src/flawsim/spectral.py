"""Bath diagonalization, truncated thermal ensembles, canonical averages and
level-spacing statistics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import CapacityError, DimensionError, DomainError
from .pauli import MAX_DENSE_QUBITS, OperatorSum, SparseOperator, apply_sum

log = logging.getLogger(__name__)

POISSON_MEAN_R = 2 * math.log(2) - 1
GOE_MEAN_R = 0.5307  # large-dimension numerical value
DEFAULT_WEIGHT_CUT = 1e-6


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, shape (2**n, k)
    nqubits: int
    complete: bool = True

    def __len__(self):
        return len(self.eigenvalues)

    def residuals(self, H: OperatorSum) -> np.ndarray:
        """``||H v_k - E_k v_k||`` for every retained pair."""
        hv = apply_sum(H, self.eigenvectors)
        return np.linalg.norm(hv - self.eigenvectors * self.eigenvalues, axis=0)


def diagonalize(H: OperatorSum, k: int | None = None, method: str = "dense") -> SpectralDecomposition:
    """Eigenpairs of a Hermitian operator in ascending order.

    ``method="dense"`` returns the full spectrum (``k`` lowest if given);
    ``method="lanczos"`` uses implicitly restarted Lanczos (ARPACK) for the
    ``k`` lowest pairs only.
    """
    if not H.is_hermitian:
        raise DomainError("diagonalize requires a Hermitian operator")
    dim = 1 << H.nqubits
    if method == "dense":
        if H.nqubits > MAX_DENSE_QUBITS:
            raise CapacityError(
                f"dense diagonalization of {H.nqubits} qubits exceeds the guard; use method='lanczos'"
            )
        m = H.to_sparse().toarray()
        w, v = np.linalg.eigh(m)
        if k is not None:
            w, v = w[:k], v[:, :k]
        return SpectralDecomposition(w, v.astype(np.complex128), H.nqubits, complete=k is None or k >= dim)
    if method == "lanczos":
        if k is None:
            raise ValueError("method='lanczos' needs k")
        if k >= dim - 1:
            return diagonalize(H, k=k, method="dense")
        m = H.to_sparse()
        # Fixed start vector keeps repeated runs identical.
        v0 = np.random.default_rng(12345).standard_normal(dim)
        w, v = spla.eigsh(m, k=k, which="SA", v0=v0, tol=1e-13)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        v, _ = np.linalg.qr(v)
        return SpectralDecomposition(w, v.astype(np.complex128), H.nqubits, complete=False)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class ThermalEnsemble:
    """Boltzmann-weighted bath eigenstates, heaviest first."""

    energies: np.ndarray
    states: np.ndarray  # columns
    weights: np.ndarray
    kT: float
    cumulative_weight: float
    indices: np.ndarray

    def __len__(self):
        return len(self.weights)

    @property
    def nqubits(self) -> int:
        return int(self.states.shape[0]).bit_length() - 1


def thermal_ensemble(spec: SpectralDecomposition, kT: float, weight_cut: float = DEFAULT_WEIGHT_CUT) -> ThermalEnsemble:
    """Smallest set of eigenstates holding ``1 - weight_cut`` of the Boltzmann weight.

    Weights are ``exp(-E_n/kT)`` normalized over the retained states only.
    When ``spec`` is a partial (lowest-k) spectrum the raw weight fraction is
    measured relative to the available states.
    """
    if not kT > 0:
        raise DomainError("kT must be positive")
    if not 0 < weight_cut < 1:
        raise DomainError("weight_cut must lie in (0, 1)")
    if len(spec) == 0:
        raise DimensionError("empty spectrum")
    e = np.asarray(spec.eigenvalues, dtype=float)
    raw = np.exp(-(e - e.min()) / kT)
    order = np.argsort(-raw, kind="stable")
    frac = np.cumsum(raw[order]) / raw.sum()
    hits = np.nonzero(frac >= 1.0 - weight_cut)[0]
    m = int(hits[0]) + 1 if len(hits) else len(order)
    keep = order[:m]
    w = raw[keep] / raw[keep].sum()
    return ThermalEnsemble(
        energies=e[keep],
        states=spec.eigenvectors[:, keep],
        weights=w,
        kT=float(kT),
        cumulative_weight=float(frac[m - 1]),
        indices=keep,
    )


def canonical_average(op: OperatorSum, ens: ThermalEnsemble) -> float:
    """``sum_n w_n <phi_n|op|phi_n>`` for a Hermitian bath operator."""
    if op.nqubits != ens.nqubits:
        raise DimensionError(f"operator on {op.nqubits} qubits, ensemble on {ens.nqubits}")
    if not op.is_hermitian:
        raise DomainError("canonical_average requires a Hermitian operator")
    if len(op) == 0:
        return 0.0
    hv = SparseOperator(op) @ ens.states
    diag = np.einsum("ij,ij->j", ens.states.conj(), hv).real
    return float(diag @ ens.weights)


@dataclass(frozen=True)
class LevelStats:
    mean_r: float
    ratios: np.ndarray
    retained_levels: int
    dropped_gaps: int


def r_statistic(eigenvalues, trim: float = 0.1, degenerate_tol: float = 1e-12) -> LevelStats:
    """Mean consecutive-gap ratio ``min(s_k, s_k+1) / max(s_k, s_k+1)``.

    A fraction ``trim`` of levels is removed at each band edge; gaps below
    ``degenerate_tol`` are dropped and counted.  Poisson spectra give about
    0.386 and GOE spectra about 0.531.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if len(e) < 3:
        raise DimensionError("r_statistic needs at least three levels")
    lo = int(math.floor(trim * len(e)))
    core = e[lo:len(e) - lo]
    if len(core) < 3:
        raise DimensionError("too few levels left after edge trimming")
    gaps = np.diff(core)
    keep = gaps >= degenerate_tol
    gaps = gaps[keep]
    if len(gaps) < 2:
        raise DimensionError("fewer than two non-degenerate gaps")
    s0, s1 = gaps[:-1], gaps[1:]
    ratios = np.minimum(s0, s1) / np.maximum(s0, s1)
    return LevelStats(float(ratios.mean()), ratios, len(core), int((~keep).sum()))


def poisson_ratio_density(r):
    """Density of min/max gap ratios for uncorrelated (Poisson) levels."""
    r = np.asarray(r, dtype=float)
    return 2.0 / (1.0 + r) ** 2


def goe_ratio_density(r):
    """Wigner-like surmise for the GOE gap-ratio density on [0, 1]."""
    r = np.asarray(r, dtype=float)
    return 2 * (27 / 8) * (r + r**2) / (1 + r + r**2) ** 2.5


def ratio_histogram(ratios, bins: int = 20):
    """Normalized histogram of gap ratios with Poisson and GOE reference curves.

    Returns ``(left_edges, right_edges, density, poisson, goe)``; the reference
    columns are the densities evaluated at bin centres.
    """
    density, edges = np.histogram(np.asarray(ratios), bins=bins, range=(0.0, 1.0), density=True)
    centres = 0.5 * (edges[:-1] + edges[1:])
    return edges[:-1], edges[1:], density, poisson_ratio_density(centres), goe_ratio_density(centres)
