from __future__ import annotations

import importlib
import logging
import os
import sys
from dataclasses import dataclass, replace
from types import ModuleType
from typing import Any

from genext import settings as default_settings
from genext.errors import ConfigurationError
from genext.fingerprint import parse_modulus

logger = logging.getLogger(__name__)

ENVIRONMENT_VARIABLE = "GENEXT_SETTINGS_MODULE"

_settings: Settings | None = None


@dataclass(frozen=True)
class Settings:
    page_words: int
    max_pages: int
    modulus: int
    max_states: int
    block_fuel: int
    run_fuel: int
    cow_enabled: bool
    fingerprint_enabled: bool
    equivalence_samples: int
    seed: int
    log_level: str
    settings_module: str | None = None

    @property
    def page_bits(self) -> int:
        return self.page_words * 64

    def override(self, **changes: Any) -> Settings:
        return _validated(replace(self, **changes))


def _import_settings_module(settings_module: str) -> ModuleType:
    # settings modules may live in the working directory
    project_dir = os.getcwd()
    if project_dir not in sys.path:
        sys.path.insert(0, project_dir)
    try:
        return importlib.import_module(settings_module)
    except ImportError as e:
        raise ConfigurationError(
            f"Settings module '{settings_module}' could not be imported: {e}"
        ) from e


def _read(module: ModuleType | None, name: str) -> Any:
    if module is not None and hasattr(module, name):
        return getattr(module, name)
    return getattr(default_settings, name)


def _validated(s: Settings) -> Settings:
    for name in ("max_states", "block_fuel", "run_fuel", "equivalence_samples", "max_pages"):
        if getattr(s, name) <= 0:
            raise ConfigurationError(f"{name.upper()} must be positive, got {getattr(s, name)}")
    if s.page_words <= 0 or s.page_words & (s.page_words - 1):
        raise ConfigurationError(f"PAGE_WORDS must be a power of two, got {s.page_words}")
    if s.log_level.upper() not in logging.getLevelNamesMapping():
        raise ConfigurationError(f"Unknown LOG_LEVEL '{s.log_level}'")
    return s


def configure(settings_module: str | None = None) -> Settings:
    """
    Load settings from the defaults plus an optional override module.

    Args:
        settings_module: Dotted module path; falls back to GENEXT_SETTINGS_MODULE.

    Returns:
        The validated settings, which also become the process-wide settings.
    """
    global _settings

    if settings_module is None:
        settings_module = os.environ.get(ENVIRONMENT_VARIABLE) or None

    module = _import_settings_module(settings_module) if settings_module else None
    if settings_module:
        logger.info("Using settings module %s", settings_module)

    modulus = _read(module, "MODULUS")
    try:
        modulus_value = parse_modulus(modulus) if isinstance(modulus, str) else int(modulus)
    except ValueError as e:
        raise ConfigurationError(f"Invalid MODULUS {modulus!r}: {e}") from e

    _settings = _validated(
        Settings(
            page_words=int(_read(module, "PAGE_WORDS")),
            max_pages=int(_read(module, "MAX_PAGES")),
            modulus=modulus_value,
            max_states=int(_read(module, "MAX_STATES")),
            block_fuel=int(_read(module, "BLOCK_FUEL")),
            run_fuel=int(_read(module, "RUN_FUEL")),
            cow_enabled=bool(_read(module, "COW_ENABLED")),
            fingerprint_enabled=bool(_read(module, "FINGERPRINT_ENABLED")),
            equivalence_samples=int(_read(module, "EQUIVALENCE_SAMPLES")),
            seed=int(_read(module, "SEED")),
            log_level=str(_read(module, "LOG_LEVEL")),
            settings_module=settings_module,
        )
    )
    return _settings


def get_settings() -> Settings:
    """Return the active settings, configuring from the environment on first use."""
    if _settings is None:
        return configure()
    return _settings
