"""
Configuration loading.

Defaults live in config/default.yaml; a user file is deep-merged on top.
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / 'config' / 'default.yaml'


def _deep_merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the default configuration, optionally overridden by a user file.

    Args:
        path: Optional path to a YAML file with overrides

    Returns:
        Nested configuration dictionary
    """
    with open(DEFAULT_CONFIG_PATH, 'r') as f:
        config = yaml.safe_load(f) or {}

    if path:
        if not Path(path).exists():
            logger.error(f"Config file not found: {path}")
            raise FileNotFoundError(f"Config file not found: {path}")
        logger.info(f"Loading config overrides from: {path}")
        with open(path, 'r') as f:
            overrides = yaml.safe_load(f) or {}
        config = _deep_merge(config, overrides)

    return config


def config_value(config: Dict[str, Any], dotted_key: str, default: Any = None) -> Any:
    """
    Look up a nested value with a dotted key such as 'monitor.raise'.

    Args:
        config: Configuration dictionary
        dotted_key: Dot-separated path
        default: Value returned when any part of the path is missing

    Returns:
        The configured value or default
    """
    node: Any = config
    for part in dotted_key.split('.'):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def resolve(cli_value: Any, config: Dict[str, Any], dotted_key: str) -> Any:
    """Command-line value if given, otherwise the configured one."""
    return cli_value if cli_value is not None else config_value(config, dotted_key)


def classifier_settings(config: Dict[str, Any], **overrides: Any) -> Dict[str, Any]:
    """
    Classifier section of the config with command-line overrides applied.

    Args:
        config: Configuration dictionary
        **overrides: Hyperparameter values; None means "use the config"

    Returns:
        Dictionary accepted by Hyperparams.from_dict
    """
    settings = dict(config_value(config, 'classifier', {}) or {})
    settings.update({key: value for key, value in overrides.items() if value is not None})
    return settings
