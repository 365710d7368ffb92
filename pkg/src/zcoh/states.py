"""Zero-order coherence states and the operations the protocols need.

A density matrix commuting with total Iz splits into sector blocks
s^(0)..s^(K); that block list is the whole state here.  Blocks stay separate
throughout: embedding the sender into the chain, unitary sector evolution,
and the partial trace to the receiver never mix sectors, so nothing is ever
represented in the full 2^n space (the oracle module does that once, on small
chains, to certify these code paths).

Sites are counted 1-based along the chain; the sender occupies the first
n_sender sites and the receiver the last n_receiver.  Within a block, basis
ordinals follow the lexicographic site-pattern order of the basis module.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .basis import occupation_groups, sector_basis, sector_dim, subsystem_embedding

__all__ = [
    "ZeroCoherenceState",
    "AsymptoticVariant",
    "AsymptoticPTZ",
    "ExchangePreconditionError",
    "embed_initial_state",
    "partial_trace_to_receiver",
    "apply_exchange_unitary",
    "deviation",
    "block_distance",
    "random_state",
]

HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-12
POSITIVITY_FLOOR = -1e-10


class ExchangePreconditionError(ValueError):
    """Target row/column of the exchange carries off-diagonal weight."""


@dataclass(frozen=True, eq=False)
class ZeroCoherenceState:
    """Block-diagonal state diag(s^(0), ..., s^(K)) over n_sites spins.

    blocks[k] is the k-excitation component, a D_k x D_k complex matrix with
    D_k = C(n_sites, k).  The blocks jointly carry unit trace.
    """

    n_sites: int
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ValueError("need at least the 0-excitation block")
        if len(self.blocks) - 1 > self.n_sites:
            raise ValueError(
                f"{len(self.blocks) - 1} excitations do not fit on {self.n_sites} sites"
            )
        frozen = []
        for k, block in enumerate(self.blocks):
            block = np.asarray(block, dtype=complex)
            d = sector_dim(self.n_sites, k)
            if block.shape != (d, d):
                raise ValueError(
                    f"block {k} must be {d}x{d} for {self.n_sites} sites, "
                    f"got {block.shape}"
                )
            block = block.copy()
            block.flags.writeable = False
            frozen.append(block)
        object.__setattr__(self, "blocks", tuple(frozen))

    @property
    def max_excitation(self) -> int:
        return len(self.blocks) - 1

    @property
    def trace(self) -> float:
        return float(sum(np.trace(b).real for b in self.blocks))

    def validate(
        self,
        hermiticity_atol: float = HERMITICITY_ATOL,
        trace_atol: float = TRACE_ATOL,
        positivity_floor: float = POSITIVITY_FLOOR,
    ) -> None:
        """Raise unless Hermitian blocks, unit trace, and PSD spectrum hold."""
        for k, block in enumerate(self.blocks):
            herm = np.max(np.abs(block - block.conj().T)) if block.size else 0.0
            if herm > hermiticity_atol:
                raise ValueError(f"block {k} not Hermitian: max deviation {herm:.3e}")
        total = sum(np.trace(b) for b in self.blocks)
        if abs(total - 1.0) > trace_atol:
            raise ValueError(f"trace {total} differs from 1 beyond {trace_atol}")
        for k, block in enumerate(self.blocks):
            if block.size:
                lo = float(np.linalg.eigvalsh(0.5 * (block + block.conj().T)).min())
                if lo < positivity_floor:
                    raise ValueError(f"block {k} has eigenvalue {lo:.3e} below floor")

    @classmethod
    def vacuum(cls, n_sites: int, max_excitation: int = 0) -> "ZeroCoherenceState":
        blocks = [np.ones((1, 1), dtype=complex)]
        for k in range(1, max_excitation + 1):
            d = sector_dim(n_sites, k)
            blocks.append(np.zeros((d, d), dtype=complex))
        return cls(n_sites, tuple(blocks))

    @classmethod
    def from_blocks(
        cls, n_sites: int, blocks: Sequence[np.ndarray]
    ) -> "ZeroCoherenceState":
        return cls(n_sites, tuple(np.asarray(b, dtype=complex) for b in blocks))

    def to_json_dict(self) -> dict:
        """Row-major blocks with entries as [re, im] pairs."""
        return {
            "n_sites": self.n_sites,
            "max_excitation": self.max_excitation,
            "blocks": [
                [[[float(z.real), float(z.imag)] for z in row] for row in block]
                for block in self.blocks
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ZeroCoherenceState":
        n_sites = int(data["n_sites"])
        declared = int(data["max_excitation"])
        raw = data["blocks"]
        if len(raw) != declared + 1:
            raise ValueError(
                f"declared max_excitation {declared} but {len(raw)} blocks present"
            )
        blocks = []
        for entry in raw:
            block = np.array(
                [[complex(re, im) for re, im in row] for row in entry], dtype=complex
            )
            if block.size == 0:
                block = block.reshape(0, 0)
            blocks.append(block)
        return cls(n_sites, tuple(blocks))

    def dumps(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def loads(cls, text: str) -> "ZeroCoherenceState":
        return cls.from_json_dict(json.loads(text))


class AsymptoticVariant(str, Enum):
    """Where the unit weight of the long-protocol reference sits."""

    VACUUM = "vacuum-concentrated"
    SWAPPED = "swapped-concentrated"


@dataclass(frozen=True, eq=False)
class AsymptoticPTZ:
    """Rank-one diagonal reference the solved states are compared against.

    vacuum-concentrated puts the unit on the 0-excitation scalar;
    swapped-concentrated puts it on the diagonal element addressed by
    swap_target = (block, ordinal), the element the exchange unitary maps to
    the vacuum slot.
    """

    variant: AsymptoticVariant
    n_sites: int
    max_excitation: int
    swap_target: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        variant = AsymptoticVariant(self.variant)
        object.__setattr__(self, "variant", variant)
        if variant is AsymptoticVariant.SWAPPED:
            if self.swap_target is None:
                raise ValueError("swapped-concentrated reference needs swap_target")
            k, a = self.swap_target
            if not 1 <= k <= self.max_excitation:
                raise ValueError(f"swap target block {k} outside [1, {self.max_excitation}]")
            if not 0 <= a < sector_dim(self.n_sites, k):
                raise ValueError(f"swap target ordinal {a} outside block {k}")

    def materialize(self) -> ZeroCoherenceState:
        state = ZeroCoherenceState.vacuum(self.n_sites, self.max_excitation)
        if self.variant is AsymptoticVariant.VACUUM:
            return state
        k, a = self.swap_target
        blocks = [np.array(b) for b in state.blocks]
        blocks[0][0, 0] = 0.0
        blocks[k][a, a] = 1.0
        return ZeroCoherenceState(self.n_sites, tuple(blocks))


def embed_initial_state(
    sender: ZeroCoherenceState, n_chain: int
) -> Dict[int, np.ndarray]:
    """Sender state on the first sites, everything else in the ground state.

    Returns chain sector matrices keyed by excitation count; sector k carries
    s^(k) on the rows of the sender-local patterns and zeros elsewhere.
    """
    if sender.n_sites > n_chain:
        raise ValueError(
            f"sender of {sender.n_sites} sites does not fit a {n_chain}-site chain"
        )
    chain_blocks: Dict[int, np.ndarray] = {}
    for k in range(sender.max_excitation + 1):
        d = sector_dim(n_chain, k)
        mat = np.zeros((d, d), dtype=complex)
        if k == 0:
            mat[0, 0] = sender.blocks[0][0, 0]
        else:
            emb = subsystem_embedding(n_chain, k, tuple(range(1, sender.n_sites + 1)))
            mat[np.ix_(emb.rows, emb.rows)] = sender.blocks[k]
        chain_blocks[k] = mat
    return chain_blocks


def partial_trace_to_receiver(
    chain_state: Dict[int, np.ndarray], n_sites: int, n_receiver: int
) -> ZeroCoherenceState:
    """Trace out everything but the last n_receiver sites, sector by sector.

    Chain sector i contributes to receiver block l = i - k_out for every
    occupation pattern of the traced sites with k_out excitations; within one
    pattern the receiver-local sub-block is read off directly because group
    rows are aligned with the receiver sector basis.
    """
    if not 1 <= n_receiver <= n_sites:
        raise ValueError(f"receiver size {n_receiver} outside [1, {n_sites}]")
    k_max = min(max(chain_state), n_receiver)
    out = [
        np.zeros((sector_dim(n_receiver, l), sector_dim(n_receiver, l)), dtype=complex)
        for l in range(k_max + 1)
    ]
    n_outside = n_sites - n_receiver
    for i, mat in chain_state.items():
        d = sector_dim(n_sites, i)
        if mat.shape != (d, d):
            raise ValueError(f"sector {i} matrix must be {d}x{d}, got {mat.shape}")
        for group in occupation_groups(n_sites, i, n_outside):
            l = group.inside_k
            out[l] += mat[np.ix_(group.rows, group.rows)]
    return ZeroCoherenceState(n_receiver, tuple(out))


def apply_exchange_unitary(
    state: ZeroCoherenceState,
    target: Tuple[int, int],
    tol: float = 1e-8,
) -> ZeroCoherenceState:
    """Swap the vacuum scalar with the targeted diagonal element.

    Valid only when the target's row and column are otherwise zero; then the
    two-element exchange is the full action of the corresponding unitary on
    the block-diagonal representation, leaving every other element in place.
    """
    k, a = target
    if not 1 <= k <= state.max_excitation:
        raise ValueError(f"target block {k} outside [1, {state.max_excitation}]")
    block = state.blocks[k]
    if not 0 <= a < block.shape[0]:
        raise ValueError(f"target ordinal {a} outside block {k}")
    row = np.delete(block[a, :], a)
    col = np.delete(block[:, a], a)
    worst = max(
        float(np.max(np.abs(row))) if row.size else 0.0,
        float(np.max(np.abs(col))) if col.size else 0.0,
    )
    if worst > tol:
        raise ExchangePreconditionError(
            f"off-diagonal weight {worst:.3e} in target row/column exceeds {tol:.1e}; "
            "the element exchange would create spurious coherences"
        )
    blocks = [np.array(b) for b in state.blocks]
    blocks[0][0, 0], blocks[k][a, a] = blocks[k][a, a], blocks[0][0, 0]
    return ZeroCoherenceState(state.n_sites, tuple(blocks))


def block_distance(a: ZeroCoherenceState, b: ZeroCoherenceState) -> float:
    """Frobenius norm of the block-diagonal difference."""
    if a.n_sites != b.n_sites or a.max_excitation != b.max_excitation:
        raise ValueError(
            f"layout mismatch: ({a.n_sites}, K={a.max_excitation}) vs "
            f"({b.n_sites}, K={b.max_excitation})"
        )
    total = 0.0
    for x, y in zip(a.blocks, b.blocks):
        total += float(np.sum(np.abs(x - y) ** 2))
    return float(np.sqrt(total))


def deviation(state: ZeroCoherenceState, reference: AsymptoticPTZ) -> float:
    """Frobenius distance from the asymptotic reference."""
    return block_distance(state, reference.materialize())


def random_state(
    n_sites: int,
    max_excitation: int,
    rng: np.random.Generator,
    vacuum_weight: Optional[float] = None,
) -> ZeroCoherenceState:
    """Random valid state: Wishart blocks with a random trace split."""
    weights = rng.dirichlet(np.ones(max_excitation + 1))
    if vacuum_weight is not None:
        weights = np.concatenate(
            [[vacuum_weight], (1 - vacuum_weight) * rng.dirichlet(np.ones(max_excitation))]
        )
    blocks = [np.array([[weights[0]]], dtype=complex)]
    for k in range(1, max_excitation + 1):
        d = sector_dim(n_sites, k)
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        w = g @ g.conj().T
        blocks.append(weights[k] * w / np.trace(w))
    return ZeroCoherenceState(n_sites, tuple(blocks))
