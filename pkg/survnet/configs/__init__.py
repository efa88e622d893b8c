"""Configuration package for survnet."""

from .settings_repo import SettingsRepo, get_config_value  # noqa: F401
