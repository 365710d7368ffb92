"""Named configurations reproducing the reference tables and curves."""
from __future__ import annotations

from typing import Any, Dict

__all__ = ["PRESETS", "preset_config"]

# Registration-time tables: chain lengths 10..100 in steps of 5.
_TABLE_N = {"start": 10, "stop": 100, "step": 5}

PRESETS: Dict[str, Dict[str, Any]] = {
    # Two-site sender, two-excitation transfer-probability criterion.
    "table1": {
        "protocol": "registration-time",
        "n": dict(_TABLE_N),
        "n_sender": 2,
        "criterion": "max-two-excitation-probability",
    },
    # Three- and four-site senders, one-excitation map Frobenius criterion.
    "table2-s3": {
        "protocol": "registration-time",
        "n": dict(_TABLE_N),
        "n_sender": 3,
        "criterion": "max-frobenius-w",
    },
    "table2-s4": {
        "protocol": "registration-time",
        "n": dict(_TABLE_N),
        "n_sender": 4,
        "criterion": "max-frobenius-w",
    },
    # Deviation of the complete-space fixed point versus chain length.
    "fig1": {
        "protocol": "ptz-complete",
        "n": [10, 20, 30, 40, 50, 60],
        "n_sender": 2,
    },
    # Maximal deviation of the restricted fixed point versus ancilla count.
    "fig2-s3": {
        "protocol": "ptz-restricted",
        "n": [20],
        "n_sender": 3,
        "n_ancilla": [1, 2, 3],
    },
    "fig2-s4": {
        "protocol": "ptz-restricted",
        "n": [20],
        "n_sender": 4,
        "n_ancilla": [1, 2, 3],
    },
    # Worst scale factor versus readout time at fixed chain length.
    "fig3": {
        "protocol": "arbitrary-parameter",
        "n": [10],
        "n_sender": 2,
        "n_er": 3,
    },
    # Optimal readout time and scale factor versus chain length.
    "fig4": {
        "protocol": "arbitrary-parameter",
        "n": {"start": 10, "stop": 100, "step": 10},
        "n_sender": 2,
        "n_er": 3,
    },
}


def preset_config(name: str) -> Dict[str, Any]:
    try:
        base = PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise KeyError(f"unknown preset {name!r}; available: {known}")
    import json

    return json.loads(json.dumps(base))
