"""Runtime configuration: defaults, config-file parsing, env overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .client import HttpChatClient, RecordingClient, ScriptedChatClient
from .errors import ConfigError
from .learning import AlignmentConfig

ENV_API_BASE = "CAMA_API_BASE"
ENV_API_KEY = "CAMA_API_KEY"
ENV_MODEL = "CAMA_MODEL"

MODES = ("live", "record", "replay")


@dataclass(frozen=True)
class Config:
    api_base: str = ""
    model: str = ""
    api_key_env: str = ENV_API_KEY
    granularity: int = 3
    alpha: float = 0.05
    temperature: float = 0.6
    in_flight_limit: int = 4
    max_cond_size: int = 8
    repetitions: int = 1
    seed: int = 0
    run_dir: Path = Path("cama_run")
    transcript_mode: str = "live"
    transcript_path: Path | None = None
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)

    def __post_init__(self):
        if self.granularity < 1:
            raise ConfigError("lambda (granularity) must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.in_flight_limit < 1:
            raise ConfigError("in_flight_limit must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.transcript_mode not in MODES:
            raise ConfigError(
                f"mode must be one of {MODES}, got {self.transcript_mode!r}"
            )


_SCALAR_KEYS = {
    "api_base": str,
    "model": str,
    "api_key_env": str,
    "lambda": int,
    "alpha": float,
    "temperature": float,
    "in_flight_limit": int,
    "max_cond_size": int,
    "repetitions": int,
    "seed": int,
    "run_dir": str,
    "mode": str,
    "transcript": str,
}
_ALIGN_KEYS = {"m": int, "s_b": int, "n_e": int, "r": int, "c_stop": int, "seed": int}


def _coerce(key: str, raw: str, kind):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        raw = raw[1:-1]
    try:
        return kind(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from e


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` document with # comments; dotted alignment keys."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno} is not 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key.startswith("alignment."):
            sub = key.split(".", 1)[1]
            if sub not in _ALIGN_KEYS:
                raise ConfigError(f"unknown config key {key!r} (line {lineno})")
            values.setdefault("alignment", {})[sub] = _coerce(key, raw, _ALIGN_KEYS[sub])
        elif key in _SCALAR_KEYS:
            values[key] = _coerce(key, raw, _SCALAR_KEYS[key])
        else:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
    return values


def load_config(path: str | Path | None = None, **overrides) -> Config:
    """Assemble a Config from file, environment, and explicit overrides.

    Precedence: explicit overrides > environment > file > defaults.
    Overrides with value None are ignored.
    """
    values: dict = {}
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise ConfigError(f"config file not found: {file_path}")
        values = parse_config_text(file_path.read_text(encoding="utf-8"))

    if os.environ.get(ENV_API_BASE):
        values["api_base"] = os.environ[ENV_API_BASE]
    if os.environ.get(ENV_MODEL):
        values["model"] = os.environ[ENV_MODEL]

    for key, value in overrides.items():
        if value is not None:
            values[key] = value

    align_values = values.pop("alignment", {})
    if not isinstance(align_values, dict):
        raise ConfigError("alignment override must be a mapping")
    if isinstance(values.get("seed"), int):
        align_values.setdefault("seed", values["seed"])
    try:
        alignment = AlignmentConfig(**align_values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad alignment settings: {e}") from e

    kwargs = {
        "api_base": values.get("api_base", ""),
        "model": values.get("model", ""),
        "api_key_env": values.get("api_key_env", ENV_API_KEY),
        "granularity": values.get("lambda", 3),
        "alpha": values.get("alpha", 0.05),
        "temperature": values.get("temperature", 0.6),
        "in_flight_limit": values.get("in_flight_limit", 4),
        "max_cond_size": values.get("max_cond_size", 8),
        "repetitions": values.get("repetitions", 1),
        "seed": values.get("seed", 0),
        "run_dir": Path(values.get("run_dir", "cama_run")),
        "transcript_mode": values.get("mode", "live"),
        "transcript_path": Path(values["transcript"]) if values.get("transcript") else None,
        "alignment": alignment,
    }
    return Config(**kwargs)


def default_transcript_path(cfg: Config) -> Path:
    return cfg.transcript_path or (cfg.run_dir / "transcript.jsonl")


def build_client(cfg: Config):
    """Construct the chat client for the configured mode.

    Replay never touches the network; record wraps the remote client with
    a transcript writer.
    """
    if cfg.transcript_mode == "replay":
        path = default_transcript_path(cfg)
        if not path.is_file():
            raise ConfigError(f"replay mode requires an existing transcript: {path}")
        return ScriptedChatClient.from_file(path)

    if not cfg.api_base:
        raise ConfigError(
            f"{cfg.transcript_mode} mode requires an API base URL "
            f"(set {ENV_API_BASE} or api_base in the config file)"
        )
    if not cfg.model:
        raise ConfigError(
            f"{cfg.transcript_mode} mode requires a model name "
            f"(set {ENV_MODEL} or model in the config file)"
        )
    api_key = os.environ.get(cfg.api_key_env, "")
    if not api_key:
        raise ConfigError(
            f"{cfg.transcript_mode} mode requires a credential in ${cfg.api_key_env}"
        )
    client = HttpChatClient(
        api_base=cfg.api_base,
        model=cfg.model,
        api_key=api_key,
        in_flight_limit=cfg.in_flight_limit,
    )
    if cfg.transcript_mode == "record":
        path = default_transcript_path(cfg)
        path.parent.mkdir(parents=True, exist_ok=True)
        return RecordingClient(client, path)
    return client
