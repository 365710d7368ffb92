"""Parametrized unitary control on the extended receiver.

The control unitary acts on the last ``n_er_sites`` chain sites and conserves
excitation number, so it is a direct sum of independent blocks, one per
extended-receiver sector.  Each D-dimensional block is charted by
F = D(D - 1) real angles through an ordered product of two-level rotations:

    U = [prod_n exp(i phi_x[n] Gx_n)] [prod_n exp(i phi_y[n] Gy_n)]

where the pair index n enumerates upper-triangular positions (row, col) in
row-major order, Gx has ones at (row, col) and (col, row), and Gy has -i at
(row, col), +i at (col, row).  All angles zero gives the identity.  The chart
is not surjective onto U(D) (diagonal phases are not generated); that is
intentional, only the off-diagonal action matters downstream.

Angle vectors store the F/2 x-angles first, then the F/2 y-angles, each in
ascending pair index.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = [
    "ReceiverUnitaryParams",
    "generator_index",
    "generator_pairs",
    "block_dim",
    "angle_count",
    "build_unitary_block",
    "effective_parameter_count",
    "sectors_with_parameters",
]


def block_dim(n_er_sites: int, k: int) -> int:
    """Dimension of the k-excitation sector of the extended receiver."""
    return comb(n_er_sites, k)


def angle_count(n_er_sites: int, k: int) -> int:
    """Number of real angles F = D(D-1) charting one sector block."""
    d = block_dim(n_er_sites, k)
    return d * (d - 1)


def generator_index(row: int, col: int, dim: int) -> int:
    """1-based pair index n of the upper-triangular position (row, col).

    Pairs are ordered row-major: (1,2), (1,3), ..., (1,D), (2,3), ...
    """
    if not 1 <= row < col <= dim:
        raise ValueError(f"need 1 <= row < col <= {dim}, got ({row}, {col})")
    return sum(dim - m for m in range(1, row)) + (col - row)


def generator_pairs(dim: int) -> list[tuple[int, int]]:
    """All (row, col) pairs with row < col, in ascending pair index (1-based)."""
    return [(r, c) for r in range(1, dim) for c in range(r + 1, dim + 1)]


def effective_parameter_count(n_er_sites: int, max_excitation: int) -> int:
    """Total angle count over sectors 1..max_excitation."""
    if not 1 <= max_excitation <= n_er_sites:
        raise ValueError(
            f"max_excitation must lie in [1, {n_er_sites}], got {max_excitation}"
        )
    return sum(angle_count(n_er_sites, k) for k in range(1, max_excitation + 1))


def sectors_with_parameters(n_er_sites: int, max_excitation: int) -> list[int]:
    """Sectors k <= max_excitation whose block has any free angle (D >= 2)."""
    return [
        k
        for k in range(1, min(max_excitation, n_er_sites) + 1)
        if angle_count(n_er_sites, k) > 0
    ]


@dataclass(frozen=True, eq=False)
class ReceiverUnitaryParams:
    """Angle vectors of the extended-receiver unitary, one per active sector.

    ``angles[k]`` has length ``angle_count(n_er_sites, k)``; sectors absent
    from the mapping act as the identity.
    """

    n_er_sites: int
    angles: dict[int, np.ndarray]

    def __post_init__(self) -> None:
        for k, vec in self.angles.items():
            expected = angle_count(self.n_er_sites, k)
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (expected,):
                raise ValueError(
                    f"sector {k} needs {expected} angles, got shape {vec.shape}"
                )
            self.angles[k] = vec

    @classmethod
    def zeros(cls, n_er_sites: int, sectors: list[int]) -> "ReceiverUnitaryParams":
        return cls(
            n_er_sites,
            {k: np.zeros(angle_count(n_er_sites, k)) for k in sectors},
        )

    @classmethod
    def from_flat(
        cls, n_er_sites: int, sectors: list[int], flat: np.ndarray
    ) -> "ReceiverUnitaryParams":
        """Split one flat vector into per-sector angle vectors (ascending k)."""
        flat = np.asarray(flat, dtype=float)
        angles = {}
        pos = 0
        for k in sorted(sectors):
            count = angle_count(n_er_sites, k)
            angles[k] = flat[pos : pos + count].copy()
            pos += count
        if pos != flat.size:
            raise ValueError(f"expected {pos} angles for sectors {sectors}, got {flat.size}")
        return cls(n_er_sites, angles)

    def to_flat(self) -> np.ndarray:
        """Concatenate per-sector angle vectors in ascending sector order."""
        if not self.angles:
            return np.zeros(0)
        return np.concatenate([self.angles[k] for k in sorted(self.angles)])

    @property
    def n_parameters(self) -> int:
        return sum(vec.size for vec in self.angles.values())

    def wrapped(self) -> "ReceiverUnitaryParams":
        """Angles reported modulo 2*pi, wrapped into [-pi, pi)."""
        wrap = lambda v: np.mod(v + np.pi, 2 * np.pi) - np.pi
        return ReceiverUnitaryParams(
            self.n_er_sites, {k: wrap(v) for k, v in self.angles.items()}
        )


def build_unitary_block(params: ReceiverUnitaryParams, k: int) -> np.ndarray:
    """Unitary block of sector k: ordered x-rotations, then y-rotations.

    Builds the product by right-multiplication, so each two-level factor is
    O(D) column updates rather than a matrix product.
    """
    if not 0 <= k <= params.n_er_sites:
        raise ValueError(
            f"sector must lie in [0, {params.n_er_sites}], got {k}"
        )
    dim = block_dim(params.n_er_sites, k)
    u = np.eye(dim, dtype=complex)
    vec = params.angles.get(k)
    if vec is None or dim < 2:
        return u
    pairs = generator_pairs(dim)
    half = len(vec) // 2
    for (row, col), phi in zip(pairs, vec[:half]):
        r, c = row - 1, col - 1
        cos, sin = np.cos(phi), np.sin(phi)
        ur, uc = u[:, r].copy(), u[:, c]
        u[:, r] = cos * ur + 1j * sin * uc
        u[:, c] = 1j * sin * ur + cos * uc
    for (row, col), phi in zip(pairs, vec[half:]):
        r, c = row - 1, col - 1
        cos, sin = np.cos(phi), np.sin(phi)
        ur, uc = u[:, r].copy(), u[:, c]
        u[:, r] = cos * ur - sin * uc
        u[:, c] = sin * ur + cos * uc
    return u
