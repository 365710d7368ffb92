"""Effective sender-to-receiver transfer structures.

The one-excitation content of the combined evolution is a small complex
matrix w mapping sender-site amplitudes to receiver-site amplitudes,
r^(1) = w s^(1) w^dagger.  Because w is a submatrix of a unitary its singular
values never exceed 1.  For a fixed time the map factorizes as
w = u_rows @ v_restriction with u_rows the receiver-local rows of the
one-excitation unitary block, which is the hot path for optimizing angles at
fixed t: the chain propagator restriction is computed once.

The k-excitation generalization is a four-index tensor assembled by probing
the full embed/evolve/trace pipeline with elementary sender matrices; for
k = 1 it must reproduce the outer-product formula from w exactly, and tests
hold it to that.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .basis import sector_dim, subsystem_embedding
from .dynamics import (
    SpectralCache,
    apply_extended_unitary,
    combined_block,
    propagator_columns,
)
from .states import partial_trace_to_receiver
from .unitary import ReceiverUnitaryParams, build_unitary_block

__all__ = [
    "OneExcitationMap",
    "FixedTimeRestriction",
    "TransferTensor",
    "TransferProtocol",
    "ScaleFactors",
    "SizeBoundCheck",
    "extract_one_excitation_map",
    "one_excitation_map",
    "fixed_time_restriction",
    "transfer_tensor",
    "one_excitation_tensor_formula",
    "scale_factors",
    "check_size_bounds",
]


@dataclass(frozen=True, eq=False)
class OneExcitationMap:
    """w: receiver-site rows x sender-site columns, at one (t, angles)."""

    matrix: np.ndarray
    t: float
    params: Optional[ReceiverUnitaryParams] = None

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)

    @property
    def n_receiver(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_sender(self) -> int:
        return self.matrix.shape[1]

    def validate(self, atol: float = 1e-12) -> None:
        """Contraction checks: singular values and Frobenius norm bounds."""
        smax = float(np.linalg.svd(self.matrix, compute_uv=False).max())
        if smax > 1 + atol:
            raise ValueError(f"singular value {smax} exceeds 1 beyond {atol}")
        cap = np.sqrt(min(self.matrix.shape))
        fro = float(np.linalg.norm(self.matrix))
        if fro > cap + atol:
            raise ValueError(f"Frobenius norm {fro} exceeds {cap}")

    def apply(self, sender_block: np.ndarray) -> np.ndarray:
        """r^(1) = w s^(1) w^dagger."""
        return self.matrix @ np.asarray(sender_block, dtype=complex) @ self.matrix.conj().T

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def offdiagonal_norm(self) -> float:
        """sqrt of the total weight off the main diagonal."""
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(np.linalg.norm(off))


def extract_one_excitation_map(
    w1: np.ndarray,
    n_sites: int,
    n_sender: int,
    n_receiver: int,
    t: float = 0.0,
    params: Optional[ReceiverUnitaryParams] = None,
) -> OneExcitationMap:
    """Read w out of the combined one-excitation block.

    w[i, j] is the W^(1) element between the chain state with one excitation
    at receiver site i and the one with one excitation at sender site j.
    """
    if w1.shape != (n_sites, n_sites):
        raise ValueError(f"expected {n_sites}x{n_sites} sector-1 block, got {w1.shape}")
    recv = subsystem_embedding(n_sites, 1, tuple(range(n_sites - n_receiver + 1, n_sites + 1)))
    send = subsystem_embedding(n_sites, 1, tuple(range(1, n_sender + 1)))
    return OneExcitationMap(w1[np.ix_(recv.rows, send.rows)], t, params)


def one_excitation_map(
    cache: SpectralCache,
    params: ReceiverUnitaryParams,
    t: float,
    n_sender: int,
    n_receiver: int,
) -> OneExcitationMap:
    """Build W^(1)(t, angles) and extract the sender-to-receiver submatrix."""
    w1 = combined_block(cache, params, 1, t)
    return extract_one_excitation_map(w1, cache.n_sites, n_sender, n_receiver, t, params)


@dataclass(frozen=True, eq=False)
class FixedTimeRestriction:
    """Precomputed v-restriction for fast per-angle map rebuilds at fixed t.

    v_tilde = V^(1)(t)[extended-receiver site rows, sender site columns], so
    each candidate angle vector costs one small matrix product:
    w = U^(1)[last n_receiver rows, :] @ v_tilde.
    """

    v_tilde: np.ndarray
    t: float
    n_er_sites: int
    n_sender: int
    n_receiver: int

    def map_for(self, params: ReceiverUnitaryParams) -> OneExcitationMap:
        if params.n_er_sites != self.n_er_sites:
            raise ValueError(
                f"restriction built for {self.n_er_sites} extended-receiver sites, "
                f"got parameters for {params.n_er_sites}"
            )
        u1 = build_unitary_block(params, 1)
        w = u1[self.n_er_sites - self.n_receiver :, :] @ self.v_tilde
        return OneExcitationMap(w, self.t, params)


def fixed_time_restriction(
    cache: SpectralCache,
    t: float,
    n_sender: int,
    n_receiver: int,
    n_er_sites: int,
) -> FixedTimeRestriction:
    n = cache.n_sites
    if not n_receiver <= n_er_sites <= n:
        raise ValueError(
            f"need n_receiver <= n_er_sites <= n_sites, got "
            f"{n_receiver}, {n_er_sites}, {n}"
        )
    sender_cols = list(range(n_sender))
    cols = propagator_columns(cache, 1, t, sender_cols)
    return FixedTimeRestriction(
        cols[n - n_er_sites :, :], t, n_er_sites, n_sender, n_receiver
    )


@dataclass(frozen=True, eq=False)
class TransferTensor:
    """T^(k): receiver pair (i,j) x sender pair (n,m), r = T . s entrywise."""

    k: int
    n_sender: int
    n_receiver: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        ds = sector_dim(self.n_sender, self.k)
        dr = sector_dim(self.n_receiver, self.k)
        e = np.asarray(self.entries, dtype=complex)
        if e.shape != (dr, dr, ds, ds):
            raise ValueError(
                f"tensor must have shape {(dr, dr, ds, ds)}, got {e.shape}"
            )
        object.__setattr__(self, "entries", e)

    def apply(self, sender_block: np.ndarray) -> np.ndarray:
        return np.einsum("ijnm,nm->ij", self.entries, sender_block)

    def hermitian_symmetry_defect(self) -> float:
        """max |T_{ij;nm} - conj(T_{ji;mn})|, zero for a physical tensor."""
        swapped = np.conj(np.transpose(self.entries, (1, 0, 3, 2)))
        return float(np.max(np.abs(self.entries - swapped)))


def transfer_tensor(
    cache: SpectralCache,
    params: ReceiverUnitaryParams,
    k: int,
    t: float,
    n_sender: int,
    n_receiver: int,
) -> TransferTensor:
    """Assemble T^(k) by probing the pipeline with elementary sender matrices.

    Linearity lets a single set of propagated sender columns serve all probes:
    evolving the elementary matrix E_nm gives the outer product of propagated
    columns n and m, and the top-order receiver block is read off through the
    partial trace.
    """
    n = cache.n_sites
    emb = subsystem_embedding(n, k, tuple(range(1, n_sender + 1)))
    cols = propagator_columns(cache, k, t, emb.rows)
    cols = apply_extended_unitary(params, n, k, cols)
    ds = emb.dim
    dr = sector_dim(n_receiver, k)
    entries = np.empty((dr, dr, ds, ds), dtype=complex)
    for a in range(ds):
        for b in range(ds):
            evolved = np.outer(cols[:, a], cols[:, b].conj())
            receiver = partial_trace_to_receiver({k: evolved}, n, n_receiver)
            entries[:, :, a, b] = receiver.blocks[k]
    return TransferTensor(k, n_sender, n_receiver, entries)


def one_excitation_tensor_formula(map_: OneExcitationMap) -> TransferTensor:
    """T^(1)_{ij;nm} = w_in conj(w_jm), the closed form the probe must match."""
    w = map_.matrix
    entries = np.einsum("in,jm->ijnm", w, w.conj())
    return TransferTensor(1, map_.n_sender, map_.n_receiver, entries)


@dataclass(frozen=True)
class ScaleFactors:
    """lam_ij = w_ii conj(w_jj) and the minima used as optimization targets."""

    matrix: np.ndarray
    lam_opt: float
    lam_opt_offdiag: float


def scale_factors(map_: OneExcitationMap) -> ScaleFactors:
    w = map_.matrix
    if w.shape[0] != w.shape[1]:
        raise ValueError(f"scale factors need a square map, got {w.shape}")
    diag = np.diag(w)
    lam = np.outer(diag, diag.conj())
    mags = np.abs(lam)
    lam_opt = float(mags.min())
    if w.shape[0] < 2:
        off_min = lam_opt
    else:
        off = mags + np.diag(np.full(w.shape[0], np.inf))
        off_min = float(off.min())
    return ScaleFactors(lam, lam_opt, off_min)


class TransferProtocol(str, Enum):
    PTZ_RESTRICTED = "ptz-restricted"
    ARBITRARY_PARAMETER = "arbitrary-parameter"


@dataclass(frozen=True)
class SizeBoundCheck:
    satisfied: bool
    minimum_er_sites: int
    explanation: str


def check_size_bounds(
    n_sender: int, n_er_sites: int, protocol: TransferProtocol
) -> SizeBoundCheck:
    """Necessary extended-receiver sizes for the two structured protocols.

    Zeroing the first w row while keeping full rank needs one extra site;
    diagonalizing w entirely needs n_er >= 2 n_sender - 1.  Violations are
    reported, not fatal: the bounds are necessary-condition arguments, and
    solvers warn and proceed to exhibit the infeasibility numerically.
    """
    protocol = TransferProtocol(protocol)
    if protocol is TransferProtocol.PTZ_RESTRICTED:
        minimum = n_sender + 1
    else:
        minimum = 2 * n_sender - 1
    ok = n_er_sites >= minimum
    explanation = (
        f"{protocol.value} with a {n_sender}-site sender needs an extended "
        f"receiver of at least {minimum} sites; got {n_er_sites} "
        f"({'satisfied' if ok else 'violated'})"
    )
    return SizeBoundCheck(ok, minimum, explanation)
