"""Declarative run configuration: loading, schema validation, resolution.

Configs are TOML (human-authored) or JSON (machine-generated). Unknown keys
are rejected outright; values are re-validated by the dataclasses they feed.
The fully resolved config is hashed and echoed into every output file so
identical hashes reproduce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .backends.base import BackendPair
from .backends.external import external_backend
from .backends.ngram import NGramPairConfig, train_ngram
from .backends.synthetic import (
    DirichletPairModel,
    PlantedLinearConfig,
    PlantedLinearPairModel,
    SyntheticPairConfig,
)
from .channel import ChannelParams
from .engine import EngineConfig, LatencyModel, Method
from .errors import ConfigError
from .uncertainty import PerturbationConfig

_SCHEMA: dict[str, Any] = {
    "run": {
        "method", "rounds", "seed", "seeds", "u_th", "rand_skip_prob", "oracle",
        "prompt", "prompt_tokens", "payload_vocab_size", "calibration",
    },
    "backend": {
        "kind": None,
        "synthetic": {
            "vocab_size", "eos_id", "dirichlet_alpha", "coupling",
            "planted_rejection_mean", "seed", "tuning_pairs", "tuning_tolerance",
        },
        "planted": {
            "slope", "intercept", "vocab_size", "k_perturb", "theta_min",
            "theta_max", "seed",
        },
        "ngram": {
            "corpus_path", "order_slm", "order_llm", "smoothing_epsilon",
            "vocab_size", "eos_id",
        },
        "external": {"endpoint", "timeout_s"},
    },
    "channel": {"W_hz", "p_dbm", "N_dbm", "alpha", "rho_m", "b_prob", "fading", "sync_bits"},
    "latency": {"tau_slm_s", "tau_llm_s"},
    "perturbation": {"K", "theta_max", "theta_min", "perturbation_cost"},
    "sweep": {"u_th", "rho_m", "p_dbm", "methods", "seeds"},
    "calibration": {"rounds", "out"},
}

BACKEND_KINDS = ("synthetic", "planted", "ngram", "external")


def load_config(path: str | Path) -> dict:
    """Parse a TOML or JSON config file and validate its key structure."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        try:
            doc = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    validate_schema(doc)
    return doc


def validate_schema(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    _check_keys(doc, set(_SCHEMA), "config")
    for section, allowed in _SCHEMA.items():
        if section not in doc:
            continue
        value = doc[section]
        if not isinstance(value, dict):
            raise ConfigError(f"section [{section}] must be a table")
        if isinstance(allowed, set):
            _check_keys(value, allowed, section)
        else:  # nested: backend
            _check_keys(value, set(allowed), section)
            for sub, sub_allowed in allowed.items():
                if sub_allowed is not None and sub in value:
                    if not isinstance(value[sub], dict):
                        raise ConfigError(f"section [{section}.{sub}] must be a table")
                    _check_keys(value[sub], sub_allowed, f"{section}.{sub}")


def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def resolved_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def build_backend_pair(doc: dict, base_dir: Path | None = None) -> BackendPair:
    """Construct the configured backend pair."""
    backend = doc.get("backend", {})
    kind = backend.get("kind", "synthetic")
    if kind not in BACKEND_KINDS:
        raise ConfigError(f"backend kind must be one of {BACKEND_KINDS}, got {kind!r}")
    section = backend.get(kind, {})
    if kind == "synthetic":
        return DirichletPairModel(SyntheticPairConfig(**section)).as_pair()
    if kind == "planted":
        return PlantedLinearPairModel(PlantedLinearConfig(**section)).as_pair()
    if kind == "ngram":
        if "corpus_path" not in section:
            raise ConfigError("backend.ngram requires corpus_path")
        section = dict(section)
        corpus = Path(section.pop("corpus_path"))
        if base_dir is not None and not corpus.is_absolute():
            corpus = base_dir / corpus
        return train_ngram(NGramPairConfig(corpus_path=corpus, **section))
    if "endpoint" not in section:
        raise ConfigError("backend.external requires endpoint")
    return external_backend(section["endpoint"], section.get("timeout_s", 60.0))


def resolve_prompt(doc: dict) -> list[int]:
    run = doc.get("run", {})
    if "prompt_tokens" in run:
        return [int(t) for t in run["prompt_tokens"]]
    if "prompt" in run:
        return list(str(run["prompt"]).encode("utf-8"))
    return []


def engine_config(
    doc: dict,
    method: Method,
    seed: int,
    u_th: float | None = None,
    rand_skip_prob: float | None = None,
    oracle: bool | None = None,
    channel_overrides: dict | None = None,
) -> EngineConfig:
    run = doc.get("run", {})
    chan = dict(doc.get("channel", {}))
    if channel_overrides:
        chan.update(channel_overrides)
    return EngineConfig(
        method=method,
        r_max=int(run.get("rounds", 100)),
        seed=seed,
        u_th=u_th if u_th is not None else run.get("u_th"),
        rand_skip_prob=(
            rand_skip_prob if rand_skip_prob is not None else run.get("rand_skip_prob")
        ),
        oracle_mode=bool(run.get("oracle", False)) if oracle is None else oracle,
        prompt=resolve_prompt(doc),
        perturbation=PerturbationConfig(**doc.get("perturbation", {})),
        latency=LatencyModel(**doc.get("latency", {})),
        channel=ChannelParams(**chan),
        payload_vocab_size=run.get("payload_vocab_size"),
    )
