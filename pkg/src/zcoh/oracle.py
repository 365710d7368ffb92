"""Brute-force full-Hilbert-space reference for validating the block pipeline.

Everything here works with dense 2^N matrices and deliberately avoids the
sector machinery: the Hamiltonian is a Kronecker sum of spin operators, the
propagator comes from scipy's expm, the receiver-side unitary is rebuilt by
exponentiating dense generators, and the partial trace sums explicit bit
indices.  Capped at N = 10 so the code stays small enough to audit by eye;
speed is a non-goal.

Site-ordering convention matches the sector basis: site s carries bit weight
2^(N-s), so site 1 is the most significant bit and the all-ground state is
index 0.
"""
from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .basis import sector_basis
from .chain import ChainSpec, coupling_matrix
from .states import ZeroCoherenceState
from .unitary import ReceiverUnitaryParams, generator_pairs

__all__ = [
    "MAX_ORACLE_SITES",
    "basis_index",
    "full_hamiltonian",
    "full_propagator",
    "full_iz",
    "full_er_unitary",
    "full_exchange_unitary",
    "embed_full_sender",
    "partial_trace_keep_last",
    "dense_to_blocks",
    "blocks_to_dense",
    "offsector_norm",
    "oracle_pipeline",
]

MAX_ORACLE_SITES = 10

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _check_size(n: int) -> None:
    if n > MAX_ORACLE_SITES:
        raise ValueError(f"oracle capped at {MAX_ORACLE_SITES} sites, got {n}")


def basis_index(pattern: Sequence[int], n: int) -> int:
    """Dense index of the product state with up spins at the given sites."""
    return sum(1 << (n - s) for s in pattern)


def _site_operator(op: np.ndarray, site: int, n: int) -> np.ndarray:
    mats = [np.eye(2, dtype=complex)] * n
    mats[site - 1] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def full_hamiltonian(spec: ChainSpec) -> np.ndarray:
    """Dense 2^N x 2^N flip-flop Hamiltonian built from spin-operator products."""
    n = spec.n_sites
    _check_size(n)
    cpl = coupling_matrix(spec)
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(1, n + 1):
        ix_i = 0.5 * _site_operator(_SX, i, n)
        iy_i = 0.5 * _site_operator(_SY, i, n)
        for j in range(i + 1, n + 1):
            ix_j = 0.5 * _site_operator(_SX, j, n)
            iy_j = 0.5 * _site_operator(_SY, j, n)
            h += cpl[i - 1, j - 1] * (ix_i @ ix_j + iy_i @ iy_j)
    return h


def full_iz(n: int) -> np.ndarray:
    """Total z-projection operator, the conserved charge."""
    _check_size(n)
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(1, n + 1):
        out += 0.5 * _site_operator(_SZ, i, n)
    return out


def full_propagator(h: np.ndarray, t: float) -> np.ndarray:
    return expm(-1j * h * t)


def full_er_unitary(params: ReceiverUnitaryParams) -> np.ndarray:
    """Receiver-side unitary as a dense 2^n_er matrix, from first principles.

    Rebuilds the chart by exponentiating dense two-level generators placed on
    the excitation-sector basis states, never touching the column-rotation
    construction it is meant to check.
    """
    n_er = params.n_er_sites
    _check_size(n_er)
    dim = 1 << n_er
    u = np.eye(dim, dtype=complex)
    for k in sorted(params.angles):
        basis = sector_basis(n_er, k)
        idx = [basis_index(p, n_er) for p in basis.states]
        pairs = generator_pairs(basis.dim)
        vec = params.angles[k]
        half = len(vec) // 2
        for (row, col), phi in zip(pairs, vec[:half]):
            g = np.zeros((dim, dim), dtype=complex)
            g[idx[row - 1], idx[col - 1]] = 1.0
            g[idx[col - 1], idx[row - 1]] = 1.0
            u = u @ expm(1j * phi * g)
        for (row, col), phi in zip(pairs, vec[half:]):
            g = np.zeros((dim, dim), dtype=complex)
            g[idx[row - 1], idx[col - 1]] = -1j
            g[idx[col - 1], idx[row - 1]] = 1j
            u = u @ expm(1j * phi * g)
    return u


def full_exchange_unitary(n: int, pattern: Sequence[int]) -> np.ndarray:
    """Permutation matrix swapping the ground state with one product state."""
    _check_size(n)
    dim = 1 << n
    u = np.eye(dim, dtype=complex)
    a = basis_index(pattern, n)
    u[0, 0] = u[a, a] = 0.0
    u[0, a] = u[a, 0] = 1.0
    return u


def embed_full_sender(sender: ZeroCoherenceState, n: int) -> np.ndarray:
    """rho(0) = rho_sender (x) ground projector of the remaining sites."""
    _check_size(n)
    ns = sender.n_sites
    rho_s = blocks_to_dense(sender)
    rest = np.zeros((1 << (n - ns), 1 << (n - ns)), dtype=complex)
    rest[0, 0] = 1.0
    return np.kron(rho_s, rest)


def partial_trace_keep_last(rho: np.ndarray, n: int, n_keep: int) -> np.ndarray:
    """Trace out the first n - n_keep sites by explicit index summation."""
    dim_keep = 1 << n_keep
    dim_out = 1 << (n - n_keep)
    out = np.zeros((dim_keep, dim_keep), dtype=complex)
    for p in range(dim_out):
        base = p * dim_keep
        out += rho[base : base + dim_keep, base : base + dim_keep]
    return out


def dense_to_blocks(
    rho: np.ndarray, n: int, max_excitation: Optional[int] = None
) -> ZeroCoherenceState:
    """Read the 0-order coherence blocks out of a dense density matrix."""
    k_max = n if max_excitation is None else max_excitation
    blocks = []
    for k in range(k_max + 1):
        basis = sector_basis(n, k)
        idx = [basis_index(p, n) for p in basis.states]
        blocks.append(rho[np.ix_(idx, idx)])
    return ZeroCoherenceState(n, tuple(blocks))


def blocks_to_dense(state: ZeroCoherenceState) -> np.ndarray:
    """Scatter sector blocks into the dense matrix, zeros elsewhere."""
    n = state.n_sites
    _check_size(n)
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for k, block in enumerate(state.blocks):
        basis = sector_basis(n, k)
        idx = [basis_index(p, n) for p in basis.states]
        out[np.ix_(idx, idx)] = block
    return out


def offsector_norm(rho: np.ndarray, n: int) -> float:
    """Largest entry magnitude outside the 0-order coherence blocks."""
    rest = np.array(rho, copy=True)
    for k in range(n + 1):
        basis = sector_basis(n, k)
        idx = [basis_index(p, n) for p in basis.states]
        rest[np.ix_(idx, idx)] = 0.0
    return float(np.max(np.abs(rest))) if rest.size else 0.0


def oracle_pipeline(
    spec: ChainSpec,
    sender: ZeroCoherenceState,
    t: float,
    params: Optional[ReceiverUnitaryParams] = None,
    n_receiver: Optional[int] = None,
) -> np.ndarray:
    """Literal full-space protocol run, returning the dense receiver state.

    Embeds the sender, applies (I (x) U) exp(-iHt), traces the leading sites.
    """
    n = spec.n_sites
    _check_size(n)
    nr = sender.n_sites if n_receiver is None else n_receiver
    rho0 = embed_full_sender(sender, n)
    w = full_propagator(full_hamiltonian(spec), t)
    if params is not None:
        u = np.kron(np.eye(1 << (n - params.n_er_sites), dtype=complex),
                    full_er_unitary(params))
        w = u @ w
    rho_t = w @ rho0 @ w.conj().T
    return partial_trace_keep_last(rho_t, n, nr)
