"""Excitation-sector bases for spin-1/2 chains.

Dynamics that conserve the number of excited spins never mix states with
different excitation counts, so every operator in this package is stored per
sector.  A sector basis enumerates the C(n, k) placements of k excitations on
n sites in lexicographic order of the sorted site tuples; for n = 4, k = 2:

    (1,2) (1,3) (1,4) (2,3) (2,4) (3,4)

Sites are numbered 1..n.  Basis ordinals are 0-based, so the "first" element
of a block is ordinal 0.  The lexicographic convention is load-bearing: it
defines which element solvers call "(1,1)" and must not change.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from math import comb
from typing import Iterable, Tuple

import numpy as np

__all__ = [
    "Pattern",
    "ExcitationBasis",
    "SubsystemEmbedding",
    "OccupationGroup",
    "sector_basis",
    "sector_dim",
    "subsystem_embedding",
    "occupation_groups",
]

#: Excited-site indices of one basis state, strictly increasing, 1-based.
Pattern = Tuple[int, ...]


def sector_dim(n_sites: int, k: int) -> int:
    """Dimension C(n_sites, k) of the k-excitation sector."""
    return comb(n_sites, k)


@dataclass(frozen=True)
class ExcitationBasis:
    """Ordered basis of the k-excitation sector of an n-site chain.

    Attributes
    ----------
    n_sites : int
        Chain length.
    k_excitations : int
        Number of excited sites in every state.
    states : tuple of Pattern
        All C(n_sites, k) patterns in lexicographic order.
    """

    n_sites: int
    k_excitations: int
    states: tuple[Pattern, ...]

    @property
    def dim(self) -> int:
        return len(self.states)

    @cached_property
    def _ordinal(self) -> dict[Pattern, int]:
        return {state: i for i, state in enumerate(self.states)}

    def index(self, pattern: Iterable[int]) -> int:
        """Ordinal of ``pattern`` in this basis.

        Raises KeyError if the pattern does not belong to the sector.
        """
        pattern = tuple(pattern)
        try:
            return self._ordinal[pattern]
        except KeyError:
            raise KeyError(
                f"{pattern} is not a {self.k_excitations}-excitation pattern "
                f"on {self.n_sites} sites"
            ) from None


@lru_cache(maxsize=None)
def sector_basis(n_sites: int, k_excitations: int) -> ExcitationBasis:
    """Build (and cache) the k-excitation basis on ``n_sites`` sites."""
    if n_sites < 0:
        raise ValueError(f"n_sites must be nonnegative, got {n_sites}")
    if not 0 <= k_excitations <= n_sites:
        raise ValueError(
            f"k_excitations must lie in [0, {n_sites}], got {k_excitations}"
        )
    states = tuple(combinations(range(1, n_sites + 1), k_excitations))
    return ExcitationBasis(n_sites, k_excitations, states)


@dataclass(frozen=True, eq=False)
class SubsystemEmbedding:
    """Chain-sector rows carried by states supported on a contiguous site block.

    ``rows[j]`` is the parent ordinal of the chain state whose excited sites
    are the j-th local pattern shifted onto ``sites``; all other chain sites
    are unexcited.  ``local`` uses local numbering 1..len(sites).
    """

    parent: ExcitationBasis
    sites: tuple[int, ...]
    local: ExcitationBasis
    rows: np.ndarray

    @property
    def dim(self) -> int:
        return self.local.dim


def subsystem_embedding(n_sites: int, k: int, sites: Iterable[int]) -> SubsystemEmbedding:
    """Embed the k-excitation sector of a contiguous site block into the chain sector.

    Parameters
    ----------
    n_sites, k : int
        Chain length and excitation number of the parent sector.
    sites : iterable of int
        Contiguous ascending chain site numbers, e.g. ``range(1, 3)`` for a
        two-site block at the head of the chain.
    """
    sites = tuple(sites)
    if not sites:
        raise ValueError("sites must be nonempty")
    if any(b - a != 1 for a, b in zip(sites, sites[1:])):
        raise ValueError(f"sites must be contiguous ascending, got {sites}")
    if sites[0] < 1 or sites[-1] > n_sites:
        raise ValueError(f"sites {sites} outside chain 1..{n_sites}")
    if k > len(sites):
        raise ValueError(
            f"cannot place {k} excitations on {len(sites)} sites"
        )
    parent = sector_basis(n_sites, k)
    local = sector_basis(len(sites), k)
    offset = sites[0] - 1
    rows = np.fromiter(
        (parent.index(tuple(p + offset for p in pat)) for pat in local.states),
        dtype=np.intp,
        count=local.dim,
    )
    rows.flags.writeable = False
    return SubsystemEmbedding(parent, sites, local, rows)


@dataclass(frozen=True, eq=False)
class OccupationGroup:
    """Chain-sector rows sharing one excitation pattern on the leading sites.

    ``rows[j]`` is the parent ordinal of the state combining ``outside_pattern``
    (on sites 1..n_outside) with the j-th state of the inside sector basis
    (``sector_basis(n_inside, inside_k)``, sites numbered locally); the
    alignment with inside ordinals is what makes these groups usable as
    Kraus-map row selectors and unitary-embedding row blocks.
    """

    outside_pattern: Pattern
    inside_k: int
    rows: np.ndarray


@lru_cache(maxsize=None)
def occupation_groups(n_sites: int, k: int, n_outside: int) -> tuple[OccupationGroup, ...]:
    """Partition the sector-k basis by the excitation pattern on sites 1..n_outside.

    Every chain state splits uniquely into a configuration on the leading
    ``n_outside`` sites and one on the trailing sites; states sharing the
    leading configuration form one group, and within a group the trailing
    configurations run over the complete inside sector in basis order.
    """
    if not 0 <= n_outside <= n_sites:
        raise ValueError(f"n_outside must lie in [0, {n_sites}], got {n_outside}")
    parent = sector_basis(n_sites, k)
    n_inside = n_sites - n_outside
    groups = []
    for k_out in range(max(0, k - n_inside), min(k, n_outside) + 1):
        k_in = k - k_out
        inside = sector_basis(n_inside, k_in)
        for out in combinations(range(1, n_outside + 1), k_out):
            rows = np.fromiter(
                (
                    parent.index(out + tuple(p + n_outside for p in pat))
                    for pat in inside.states
                ),
                dtype=np.intp,
                count=inside.dim,
            )
            rows.flags.writeable = False
            groups.append(OccupationGroup(out, k_in, rows))
    return tuple(groups)
