from __future__ import annotations

import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger("survnet.configs")


class SettingsRepo:
    """Central repository for analysis settings with per-environment overrides."""

    def __init__(self, env: Optional[str] = None, *, root: Optional[Path] = None) -> None:
        self._root = root or Path(__file__).resolve().parent
        self.env = env or os.getenv("SURVNET_ENV", "dev")
        self._env_overrides = self._load_json(f"env.{self.env}.json").get("overrides", {})
        self._settings = self._merge_dicts(self._load_json("defaults.json"), self._env_overrides)

    def get_setting(self, *keys: str, default: Any = None) -> Any:
        return get_config_value(self._settings, *keys, default=default)

    def get_section(self, name: str) -> Dict[str, Any]:
        section = self._settings.get(name, {})
        return dict(section) if isinstance(section, dict) else {}

    def as_dict(self) -> Dict[str, Any]:
        return self._merge_dicts(self._settings, {})

    def threads(self) -> int:
        """Worker cap: SURVNET_THREADS wins over the settings file; 0 means one per CPU."""
        raw = os.getenv("SURVNET_THREADS")
        if raw is not None and raw.strip():
            try:
                value = int(raw)
            except ValueError:
                logger.warning("Ignoring non-integer SURVNET_THREADS=%r", raw)
            else:
                if value >= 0:
                    return value
                logger.warning("Ignoring negative SURVNET_THREADS=%r", raw)
        return int(self.get_setting("scenario", "threads", default=0))

    @lru_cache(maxsize=None)
    def _load_json(self, relative_path: str) -> Dict[str, Any]:
        path = self._root / relative_path
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return json.load(handle)
        except FileNotFoundError:
            logger.warning("Config file missing: %s", path)
        except json.JSONDecodeError as exc:
            logger.warning("Invalid JSON in %s: %s", path, exc)
        return {}

    @staticmethod
    def _merge_dicts(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        if not override:
            return dict(base)
        merged = dict(base)
        for key, value in override.items():
            if (
                key in merged
                and isinstance(merged[key], dict)
                and isinstance(value, dict)
            ):
                merged[key] = SettingsRepo._merge_dicts(merged[key], value)
            else:
                merged[key] = value
        return merged


def get_config_value(config: Dict[str, Any], *keys: str, default: Optional[Any] = None) -> Any:
    node: Any = config
    for key in keys:
        if not isinstance(node, dict):
            return default
        node = node.get(key)
    return node if node is not None else default
