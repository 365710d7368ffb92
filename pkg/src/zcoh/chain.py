"""Chain geometry: couplings and excitation-sector Hamiltonians.

A homogeneous open chain of spin-1/2 sites with XX-type exchange conserves the
number of excited spins, so the Hamiltonian splits into independent sector
blocks.  Within the k-excitation sector it is a hopping matrix: moving one
excitation from site i to an empty site j carries amplitude D_ij / 2 and the
diagonal vanishes (there is no Ising part).

Couplings are dimensionless.  Adjacent sites sit at unit distance and couple
with strength 1; time is measured in inverse nearest-neighbor-coupling units.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .basis import ExcitationBasis, sector_basis

__all__ = [
    "CouplingMode",
    "DEFAULT_COUPLING_MODE",
    "ChainSpec",
    "BlockOperator",
    "coupling_matrix",
    "hamiltonian_block",
    "build_hamiltonian",
]


class CouplingMode(str, enum.Enum):
    """How the pair coupling D_ij falls off with site distance."""

    #: D_ij = 1 / |i-j|**3 for every pair (dipolar decay).
    DIPOLAR = "full-dipolar"
    #: D_ij = 1 for |i-j| = 1, zero otherwise.
    NEAREST_NEIGHBOR = "nearest-neighbor"


#: Mode reproducing the reference registration-time tables, selected by the
#: calibration run (see ``zcoh.solvers.calibrate_coupling_mode`` and the
#: calibration test); the nearest-neighbor mode misses those times by O(1).
DEFAULT_COUPLING_MODE = CouplingMode.DIPOLAR


@dataclass(frozen=True)
class ChainSpec:
    """Immutable chain description: length and coupling law."""

    n_sites: int
    coupling_mode: CouplingMode = DEFAULT_COUPLING_MODE

    def __post_init__(self) -> None:
        if self.n_sites < 2:
            raise ValueError(f"chain needs at least 2 sites, got {self.n_sites}")
        # Accept plain strings in configs and normalize to the enum.
        object.__setattr__(self, "coupling_mode", CouplingMode(self.coupling_mode))


def coupling_matrix(spec: ChainSpec) -> np.ndarray:
    """Symmetric N x N coupling strengths D_ij, zero diagonal."""
    n = spec.n_sites
    dist = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
    if spec.coupling_mode is CouplingMode.NEAREST_NEIGHBOR:
        return np.where(dist == 1.0, 1.0, 0.0)
    return np.where(dist > 0.0, 1.0 / np.maximum(dist, 1.0) ** 3, 0.0)


def hamiltonian_block(spec: ChainSpec, sector: int | ExcitationBasis) -> np.ndarray:
    """Real symmetric hopping matrix of one excitation sector.

    Element (a, b) equals D_ij / 2 exactly when state b is state a with one
    excitation moved from site i to site j; every diagonal element is zero.

    Parameters
    ----------
    spec : ChainSpec
    sector : int or ExcitationBasis
        Excitation number, or a prebuilt basis (must match ``spec.n_sites``).
    """
    if isinstance(sector, ExcitationBasis):
        basis = sector
        if basis.n_sites != spec.n_sites:
            raise ValueError(
                f"basis is for {basis.n_sites} sites, chain has {spec.n_sites}"
            )
    else:
        basis = sector_basis(spec.n_sites, sector)
    cpl = coupling_matrix(spec)
    h = np.zeros((basis.dim, basis.dim))
    for a, pattern in enumerate(basis.states):
        occupied = set(pattern)
        for i in pattern:
            rest = occupied - {i}
            for j in range(1, spec.n_sites + 1):
                if j in occupied:
                    continue
                b = basis.index(tuple(sorted(rest | {j})))
                # Each unordered state pair differs by exactly one move, so
                # visiting b > a once covers the matrix.
                if b > a:
                    h[a, b] = h[b, a] = 0.5 * cpl[i - 1, j - 1]
    return h


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Excitation-conserving operator stored as per-sector blocks.

    ``kind`` records what the blocks are supposed to be so that ``validate``
    can check the right structural property (Hermitian for Hamiltonians,
    unitary for propagators and control unitaries).
    """

    n_sites: int
    sector_blocks: dict[int, np.ndarray]
    kind: str = "generic"

    _KINDS = ("hamiltonian", "propagator", "unitary", "generic")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")
        for k, block in self.sector_blocks.items():
            dim = sector_basis(self.n_sites, k).dim
            if block.shape != (dim, dim):
                raise ValueError(
                    f"sector {k} block has shape {block.shape}, expected {(dim, dim)}"
                )

    def block(self, k: int) -> np.ndarray:
        try:
            return self.sector_blocks[k]
        except KeyError:
            raise KeyError(f"sector {k} not built") from None

    def validate(self, atol: float = 1e-12) -> None:
        """Check the structural invariant implied by ``kind``."""
        for k, block in self.sector_blocks.items():
            if self.kind == "hamiltonian":
                defect = np.abs(block - block.conj().T).max()
                if defect > atol:
                    raise ValueError(f"sector {k} not Hermitian: defect {defect:.3e}")
            elif self.kind in ("propagator", "unitary"):
                eye = np.eye(block.shape[0])
                defect = np.abs(block @ block.conj().T - eye).max()
                if defect > atol:
                    raise ValueError(f"sector {k} not unitary: defect {defect:.3e}")


def build_hamiltonian(spec: ChainSpec, max_excitation: int) -> BlockOperator:
    """Hamiltonian blocks for sectors 0..max_excitation."""
    blocks = {k: hamiltonian_block(spec, k) for k in range(max_excitation + 1)}
    return BlockOperator(spec.n_sites, blocks, kind="hamiltonian")
