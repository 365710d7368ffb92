"""Shared fixtures and the acceptance-criteria report hook."""
import numpy as np
import pytest

from zcoh.chain import ChainSpec, CouplingMode
from zcoh.dynamics import SpectralCache

_ACCEPTANCE = []


def record_acceptance(number: int, slug: str, passed: bool, details: str = ""):
    """Log one acceptance-criterion verdict for the terminal summary.

    Call before asserting so a FAIL still shows up in the report.
    """
    _ACCEPTANCE.append((number, slug, bool(passed), details))


def check_acceptance(number: int, slug: str, passed: bool, details: str = ""):
    record_acceptance(number, slug, passed, details)
    assert passed, f"acceptance {number} {slug}: {details}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, slug, passed, details in sorted(_ACCEPTANCE):
        verdict = "PASS" if passed else "FAIL"
        suffix = f" ({details})" if details else ""
        terminalreporter.write_line(f"[acceptance] {number:02d} {slug}: {verdict}{suffix}")


@pytest.fixture(scope="session")
def cache_factory():
    """Memoized spectral caches so heavy eigendecompositions run once."""
    store = {}

    def get(n: int, k: int, mode: CouplingMode = CouplingMode.DIPOLAR) -> SpectralCache:
        key = (n, mode)
        cached = store.get(key)
        if cached is None:
            cached = SpectralCache(ChainSpec(n, mode), k)
            store[key] = cached
        elif cached.max_excitation < k:
            # sectors are diagonalized lazily; raising the bound keeps them
            cached.max_excitation = k
        return cached

    return get


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240817))
