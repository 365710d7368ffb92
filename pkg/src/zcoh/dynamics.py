"""Sector propagators and their composition with the receiver-side unitary.

Each excitation sector evolves independently under its Hamiltonian block, so
V^(k)(t) = exp(-i H^(k) t) is computed from one Hermitian eigendecomposition
per (chain, k) and then costs O(D_k^2) per time point.  Time scans over
thousands of points reuse the cached spectrum and touch only the needed
matrix elements, chunked to bound memory for the larger two-excitation
sectors.

The extended-receiver unitary is defined on the last n_er sites; embedding it
into a chain sector groups the sector basis by the occupation pattern outside
the extended receiver.  Within each group the inside excitation count j is
constant and the sector-j unitary block applies; across groups the embedding
is the identity.  That is the unique excitation-conserving embedding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from .basis import occupation_groups, sector_basis
from .chain import ChainSpec, hamiltonian_block
from .unitary import ReceiverUnitaryParams, build_unitary_block

__all__ = [
    "SpectralCache",
    "eigensystem",
    "propagator_block",
    "propagator_columns",
    "propagator_element_scan",
    "propagator_submatrix_scan",
    "two_excitation_transfer_amplitude",
    "embed_extended_unitary",
    "apply_extended_unitary",
    "combined_block",
    "evolve_block",
]

# chunk scans so each temporary stays near 16 MB regardless of sector size
_SCAN_CHUNK_COMPLEX = 1 << 21


@dataclass(eq=False)
class SpectralCache:
    """Lazily diagonalized Hamiltonian sectors of one chain.

    Sectors 0..max_excitation are admissible; each is diagonalized on first
    use and kept.  The Hamiltonian blocks are real symmetric, so eigenvector
    matrices are stored real.
    """

    chain: ChainSpec
    max_excitation: int
    _sectors: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self) -> None:
        if not 0 <= self.max_excitation <= self.chain.n_sites:
            raise ValueError(
                f"max_excitation must lie in [0, {self.chain.n_sites}], "
                f"got {self.max_excitation}"
            )

    @property
    def n_sites(self) -> int:
        return self.chain.n_sites

    @property
    def fingerprint(self) -> tuple:
        return (self.chain.n_sites, self.chain.coupling_mode.value)

    def _ensure(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        if not 0 <= k <= self.max_excitation:
            raise ValueError(
                f"sector {k} outside cached range [0, {self.max_excitation}]"
            )
        entry = self._sectors.get(k)
        if entry is None:
            h = hamiltonian_block(self.chain, k)
            evals, vecs = np.linalg.eigh(h)
            entry = (evals, vecs)
            self._sectors[k] = entry
        return entry


def eigensystem(cache: SpectralCache, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and orthonormal (real) eigenvectors of sector k."""
    return cache._ensure(k)


def _check_time(t: float) -> float:
    t = float(t)
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return t


def propagator_block(cache: SpectralCache, k: int, t: float) -> np.ndarray:
    """V^(k)(t) = Q diag(e^{-i lam t}) Q^T as a dense complex matrix."""
    t = _check_time(t)
    evals, vecs = cache._ensure(k)
    phase = np.exp(-1j * evals * t)
    return (vecs * phase) @ vecs.T


def propagator_columns(
    cache: SpectralCache, k: int, t: float, cols: Sequence[int]
) -> np.ndarray:
    """Selected columns of V^(k)(t), shape (D_k, len(cols))."""
    t = _check_time(t)
    evals, vecs = cache._ensure(k)
    phase = np.exp(-1j * evals * t)
    return vecs @ (phase[:, None] * vecs[np.asarray(cols, dtype=int), :].T)


def propagator_element_scan(
    cache: SpectralCache, k: int, row: int, col: int, times: np.ndarray
) -> np.ndarray:
    """V^(k)(t)[row, col] over an array of times, chunked over t."""
    evals, vecs = cache._ensure(k)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size and times.min() < 0:
        raise ValueError("times must be nonnegative")
    weights = vecs[row, :] * vecs[col, :]
    out = np.empty(times.shape, dtype=complex)
    chunk = max(1, _SCAN_CHUNK_COMPLEX // max(evals.size, 1))
    for start in range(0, times.size, chunk):
        ts = times[start : start + chunk]
        out[start : start + chunk] = np.exp(-1j * np.outer(ts, evals)) @ weights
    return out


def propagator_submatrix_scan(
    cache: SpectralCache,
    k: int,
    rows: Sequence[int],
    cols: Sequence[int],
    times: np.ndarray,
) -> np.ndarray:
    """V^(k)(t)[rows][:, cols] over times, shape (T, len(rows), len(cols))."""
    evals, vecs = cache._ensure(k)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size and times.min() < 0:
        raise ValueError("times must be nonnegative")
    a = vecs[np.asarray(rows, dtype=int), :]
    b = vecs[np.asarray(cols, dtype=int), :]
    out = np.empty((times.size, a.shape[0], b.shape[0]), dtype=complex)
    chunk = max(1, _SCAN_CHUNK_COMPLEX // max(evals.size, 1))
    for start in range(0, times.size, chunk):
        ts = times[start : start + chunk]
        phase = np.exp(-1j * np.outer(ts, evals))
        out[start : start + chunk] = np.einsum(
            "rd,td,cd->trc", a, phase, b, optimize=True
        )
    return out


def two_excitation_transfer_amplitude(cache: SpectralCache, t: float) -> complex:
    """V^(2)(t) element from sender pair {1,2} to receiver pair {N-1,N}.

    Its squared modulus is the two-excitation transfer probability whose
    maximum over a time window defines the registration time for the
    complete-space protocol with a two-site sender.
    """
    n = cache.n_sites
    if n < 4:
        raise ValueError(f"need at least 4 sites for disjoint site pairs, got {n}")
    basis = sector_basis(n, 2)
    row = basis.index((n - 1, n))
    col = basis.index((1, 2))
    return complex(propagator_element_scan(cache, 2, row, col, np.array([t]))[0])


def embed_extended_unitary(
    params: ReceiverUnitaryParams, n_sites: int, k: int
) -> np.ndarray:
    """Chain sector-k matrix of the extended-receiver unitary.

    Block-diagonal over groups of chain states sharing the occupation pattern
    on sites 1..n_sites-n_er; each group carries the sector-j unitary block,
    j the excitation count inside the extended receiver.
    """
    if params.n_er_sites > n_sites:
        raise ValueError(
            f"extended receiver ({params.n_er_sites} sites) exceeds chain ({n_sites})"
        )
    dim = sector_basis(n_sites, k).dim
    out = np.zeros((dim, dim), dtype=complex)
    for group in occupation_groups(n_sites, k, n_sites - params.n_er_sites):
        block = build_unitary_block(params, group.inside_k)
        out[np.ix_(group.rows, group.rows)] = block
    return out


def apply_extended_unitary(
    params: ReceiverUnitaryParams, n_sites: int, k: int, matrix: np.ndarray
) -> np.ndarray:
    """E_k(U) @ matrix without forming E_k: per-group row mixing."""
    out = np.array(matrix, dtype=complex, copy=True)
    blocks: Dict[int, np.ndarray] = {}
    for group in occupation_groups(n_sites, k, n_sites - params.n_er_sites):
        j = group.inside_k
        if j not in blocks:
            blocks[j] = build_unitary_block(params, j)
        out[group.rows] = blocks[j] @ matrix[group.rows]
    return out


def combined_block(
    cache: SpectralCache, params: ReceiverUnitaryParams, k: int, t: float
) -> np.ndarray:
    """W^(k)(t, phi) = E_k(U) V^(k)(t): evolve, then rotate the receiver side."""
    v = propagator_block(cache, k, t)
    return apply_extended_unitary(params, cache.n_sites, k, v)


def evolve_block(
    cache: SpectralCache, k: int, t: float, matrix: np.ndarray
) -> np.ndarray:
    """V^(k)(t) matrix V^(k)(t)^dagger for a sector-k density block."""
    v = propagator_block(cache, k, t)
    return v @ np.asarray(matrix, dtype=complex) @ v.conj().T
