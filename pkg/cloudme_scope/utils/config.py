import copy
import logging
import os
import yaml
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

CONFIG_ENV = "CLOUDME_SCOPE_CONFIG"
PROFILE_DIR_ENV = "CLOUDME_SCOPE_PROFILE_DIR"

DEFAULTS: Dict[str, Any] = {
    "logging": {"level": "INFO", "json": True},
    "locator": {"workers": 4, "profile_dir": None},
    "carver": {
        "context_window": 128,
        "backward_bound": 64,
        "chunk_size": 4 * 1024 * 1024,
        "min_confidence": 1.0,
    },
    "case": {"workers": 4, "reveal_secrets": False},
}

_config: Optional[Dict[str, Any]] = None


def _expand(value: Any) -> Any:
    # ${NAME} placeholders left unresolved (unset variables) become None
    if isinstance(value, dict):
        return {k: _expand(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_expand(v) for v in value]
    if isinstance(value, str):
        expanded = os.path.expandvars(value)
        if "${" in expanded or expanded == "":
            return None
        return expanded
    return value


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _candidate_file(path: Optional[str]) -> Optional[Path]:
    if path:
        return Path(path)
    env_path = os.environ.get(CONFIG_ENV)
    if env_path:
        return Path(env_path)
    local = Path.cwd() / "config.yaml"
    return local if local.exists() else None


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    config_file = _candidate_file(path)
    data: Dict[str, Any] = {}

    if config_file is not None:
        if not config_file.exists():
            raise FileNotFoundError(f"Config file not found at: {config_file}")
        with open(config_file, "r") as f:
            data = _expand(yaml.safe_load(f) or {})
        logger.info(f"configuration loaded from: {config_file}")

    config = _merge(DEFAULTS, data)
    profile_dir = os.environ.get(PROFILE_DIR_ENV)
    if profile_dir:
        config["locator"]["profile_dir"] = profile_dir
    return config


def get_config() -> Dict[str, Any]:
    global _config
    if _config is None:
        _config = load_config()
    return _config


def set_config(config: Dict[str, Any]) -> None:
    global _config
    _config = config


def reset_config() -> None:
    global _config
    _config = None
