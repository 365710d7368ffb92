"""Experiment configuration: JSON documents checked against a shipped schema.

A configuration is resolved in two steps: schema validation (types, enums,
ranges; defaults documented in the schema file), then structural resolution
(N range expansion, extended-receiver size rules, profile-based optimizer
construction).  Both raise ConfigError carrying the offending field path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Any, Dict, Mapping, Optional, Tuple

import jsonschema
import numpy as np

from .chain import ChainSpec, CouplingMode
from .optimize import DEConfig, ObjectiveSpec
from .solvers import RegistrationCriterion

__all__ = [
    "PROTOCOLS",
    "ConfigError",
    "ExperimentConfig",
    "load_schema",
    "validate_config",
    "resolve_config",
    "load_config_file",
]

PROTOCOLS = (
    "registration-time",
    "ptz-complete",
    "ptz-restricted",
    "arbitrary-parameter",
    "oracle-check",
)


class ConfigError(ValueError):
    """Invalid experiment configuration, with the offending field path."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


def load_schema() -> Dict[str, Any]:
    text = resources.files("zcoh.schemas").joinpath("experiment.schema.json").read_text()
    return json.loads(text)


def validate_config(raw: Mapping[str, Any]) -> None:
    """Schema-check a raw config dict; ConfigError names the failing field."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "$" + "".join(
            f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path
        )
        raise ConfigError(err.message, path)


def _apply_defaults(raw: Mapping[str, Any], schema: Mapping[str, Any]) -> Dict[str, Any]:
    """Fill in schema-documented defaults so outputs embed a complete config."""
    out = dict(raw)
    for name, sub in schema.get("properties", {}).items():
        if name not in out and "default" in sub:
            out[name] = json.loads(json.dumps(sub["default"]))
        if name in out and isinstance(out[name], dict) and sub.get("type") == "object":
            out[name] = _apply_defaults(out[name], sub)
    return out


def _resolve_n(node: Any) -> Tuple[int, ...]:
    if isinstance(node, list):
        return tuple(int(v) for v in node)
    start, stop = node["start"], node["stop"]
    step = node.get("step", 1)
    values = tuple(range(start, stop + 1, step))
    if not values:
        raise ConfigError(f"range {start}..{stop} step {step} is empty", "$.n")
    return values


def _resolve_er(raw: Mapping[str, Any], n_sender: int) -> Tuple[int, ...]:
    n_er, n_anc = raw.get("n_er"), raw.get("n_ancilla")
    if n_er is not None and n_anc is not None:
        raise ConfigError("give n_er or n_ancilla, not both", "$.n_er")
    if n_er is not None:
        values = n_er if isinstance(n_er, list) else [n_er]
        return tuple(int(v) for v in values)
    if n_anc is not None:
        values = n_anc if isinstance(n_anc, list) else [n_anc]
        return tuple(n_sender + int(v) for v in values)
    return ()


@dataclass(frozen=True)
class ExperimentConfig:
    """A schema-validated, fully resolved experiment description."""

    protocol: str
    n_values: Tuple[int, ...]
    n_sender: int
    n_receiver: int
    er_sizes: Tuple[int, ...]  # empty means: apply the protocol default rule
    coupling_mode: CouplingMode
    criterion: Optional[RegistrationCriterion]
    optimizer: Mapping[str, Any]
    objective: ObjectiveSpec
    window: Optional[Tuple[float, float]]
    grid_step: Optional[float]
    output_dir: str
    seed: int
    n_trials: int
    resolved: Mapping[str, Any]  # defaults-filled raw dict, embedded in outputs

    def chain_spec(self, n: int) -> ChainSpec:
        return ChainSpec(n, self.coupling_mode)

    def default_er(self) -> int:
        """Protocol rule used when no extended-receiver size is configured."""
        if self.protocol == "arbitrary-parameter":
            return 2 * self.n_sender - 1
        return self.n_sender + 1

    def er_list(self) -> Tuple[int, ...]:
        return self.er_sizes if self.er_sizes else (self.default_er(),)

    def criterion_or_rule(self) -> RegistrationCriterion:
        if self.criterion is not None:
            return self.criterion
        if self.n_sender == 2 and self.protocol in ("registration-time", "ptz-complete"):
            return RegistrationCriterion.TWO_EXCITATION_PROBABILITY
        return RegistrationCriterion.FROBENIUS_W

    def registration_grid_step(self) -> float:
        return self.grid_step if self.grid_step is not None else 0.01

    def scan_grid_step(self) -> float:
        return self.grid_step if self.grid_step is not None else 0.05

    def de_config(self, seed: int, max_generations: Optional[int] = None) -> DEConfig:
        opt = self.optimizer
        gens = max_generations if max_generations is not None else opt["max_generations"]
        kwargs: Dict[str, Any] = {"spread_tol": opt["spread_tol"]}
        if opt.get("crossover_probability") is not None:
            kwargs["crossover_probability"] = opt["crossover_probability"]
        if opt.get("mutation_range") is not None:
            kwargs["mutation_range"] = tuple(opt["mutation_range"])
        factory = DEConfig.stress if opt["profile"] == "stress" else DEConfig.standard
        if opt.get("population_size") is not None:
            base = factory(self.n_sender, gens, seed=seed, **kwargs)
            return DEConfig(
                population_size=opt["population_size"],
                max_generations=gens,
                crossover_probability=base.crossover_probability,
                mutation_range=base.mutation_range,
                spread_tol=base.spread_tol,
                seed=seed,
            )
        return factory(self.n_sender, gens, seed=seed, **kwargs)

    def point_seed(self, index: int) -> int:
        """Independent per-point seed stream, stable under worker count."""
        return int(np.random.SeedSequence([self.seed, index]).generate_state(1)[0])


def resolve_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a raw dict and resolve it into an ExperimentConfig."""
    validate_config(raw)
    filled = _apply_defaults(raw, load_schema())
    n_values = _resolve_n(filled["n"])
    n_sender = int(filled["n_sender"])
    n_receiver = int(filled["n_receiver"]) if filled.get("n_receiver") else n_sender
    er_sizes = _resolve_er(filled, n_sender)
    criterion = (
        RegistrationCriterion(filled["criterion"]) if filled.get("criterion") else None
    )
    protocol = filled["protocol"]
    for n in n_values:
        if n < n_sender + n_receiver and protocol != "oracle-check":
            raise ConfigError(
                f"chain length {n} cannot hold {n_sender} sender and "
                f"{n_receiver} receiver sites",
                "$.n",
            )
    for er in er_sizes:
        if er < n_receiver:
            raise ConfigError(
                f"extended receiver ({er} sites) smaller than the receiver "
                f"({n_receiver} sites)",
                "$.n_er",
            )
    window = tuple(float(v) for v in filled["window"]) if filled.get("window") else None
    if window is not None and not window[0] < window[1]:
        raise ConfigError(f"window {list(window)} must be increasing", "$.window")
    objective = ObjectiveSpec(
        residual_form=filled["objective"]["residual_form"],
        w1=filled["objective"]["w1"],
        w2=filled["objective"]["w2"],
    )
    if protocol == "oracle-check":
        for n in n_values:
            if n > 10:
                raise ConfigError(
                    f"oracle-check is capped at 10 sites, got {n}", "$.n"
                )
    return ExperimentConfig(
        protocol=protocol,
        n_values=n_values,
        n_sender=n_sender,
        n_receiver=n_receiver,
        er_sizes=er_sizes,
        coupling_mode=CouplingMode(filled["coupling_mode"]),
        criterion=criterion,
        optimizer=filled["optimizer"],
        objective=objective,
        window=window,
        grid_step=filled.get("grid_step"),
        output_dir=filled["output_dir"],
        seed=int(filled["seed"]),
        n_trials=int(filled["n_trials"]),
        resolved=filled,
    )


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}", path)
