"""Configuration management for kerr_stability."""

import logging
import os
from pathlib import Path

import numpy as np
import yaml
from numpy.typing import NDArray
from pydantic import ValidationError

from .config_models import AppConfig
from .config_models import EvolutionSection
from .config_models import GeometryMapConfig
from .config_models import PencilConfig
from .config_models import StabilityConfig
from .evolution import EvolutionConfig
from .exceptions import ConfigError
from .kerr_geometry import KerrParams
from .kerr_geometry import ModeSpec
from .rkg_discretization import Grid

logger = logging.getLogger(__name__)


def get_default_config_path() -> Path:
    """Get the default configuration file path following platform conventions.

    Returns:
        Path to the default configuration file in the appropriate config directory
    """
    if os.name == "nt":  # Windows
        config_dir = (
            Path(os.environ.get("APPDATA", Path.home() / "AppData" / "Roaming"))
            / "kerr-stability"
        )
    elif os.environ.get("XDG_CONFIG_HOME"):
        config_dir = Path(os.environ["XDG_CONFIG_HOME"]) / "kerr-stability"
    else:
        config_dir = Path.home() / ".config" / "kerr-stability"

    return config_dir / "settings.yml"


class Config:
    """Configuration manager for kerr_stability.

    An explicitly given path must exist. Without a path the platform default
    is read when present, and built-in defaults are used otherwise.
    """

    def __init__(self, config_path: str | Path | None = None):
        """Initialize configuration manager.

        Args:
            config_path: Path to the configuration YAML file. If None, uses platform-specific default.
        """
        self.explicit = config_path is not None
        self.config_file = Path(config_path) if config_path else get_default_config_path()
        self.app_config: AppConfig | None = None
        self._load_config()

    def _load_config(self) -> None:
        """Load and validate configuration from YAML file."""
        try:
            if not self.config_file.exists():
                if self.explicit:
                    raise FileNotFoundError(
                        f"Configuration file not found: {self.config_file}"
                    )
                logger.debug(f"No configuration at {self.config_file}, using defaults")
                self.app_config = AppConfig()
                return

            with open(self.config_file) as f:
                raw_config = yaml.safe_load(f) or {}

            if not isinstance(raw_config, dict):
                raise ConfigError("Invalid configuration: top level must be a mapping")
            self.app_config = AppConfig.model_validate(raw_config)

        except ValidationError as e:
            logger.error(f"Configuration validation failed: {e}")
            raise ConfigError(f"Invalid configuration: {e}") from e
        except yaml.YAMLError as e:
            logger.error(f"Configuration is not valid YAML: {e}")
            raise ConfigError(f"Invalid configuration: {e}") from e
        except Exception as e:
            logger.error(f"Failed to load configuration from {self.config_file}: {e}")
            raise

    @property
    def app(self) -> AppConfig:
        if not self.app_config:
            raise RuntimeError("Configuration not loaded")
        return self.app_config

    def get_kerr_params(self) -> KerrParams:
        """Get the validated Kerr parameters."""
        kerr = self.app.kerr
        return KerrParams(M=kerr.M, a=kerr.a)

    def get_mode(self) -> ModeSpec:
        """Get the configured mode."""
        return ModeSpec(m=self.app.mode.m, mu=self.app.mode.mu)

    def get_grid(self, p: KerrParams | None = None) -> Grid:
        """Get the discretization grid for ``p`` (the configured parameters by default)."""
        params = p if p is not None else self.get_kerr_params()
        grid = self.app.grid
        try:
            return Grid.for_params(params, grid.Nr, grid.Ntheta, grid.eps_h, grid.r_max)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    def get_evolution_section(self) -> EvolutionSection:
        return self.app.evolution

    def get_evolution_config(self) -> EvolutionConfig:
        """Get step size, horizon and recording options."""
        ev = self.app.evolution
        return EvolutionConfig(dt=ev.dt, T=ev.T, record_every=ev.record_every, s_list=ev.s_list)

    def get_stability_config(self) -> StabilityConfig:
        return self.app.stability

    def get_s_grid(self) -> NDArray[np.float64]:
        """Get the shifts scanned by the stability search."""
        st = self.app.stability
        return np.linspace(st.s_min, st.s_max, st.s_points)

    def get_geometry_map_config(self) -> GeometryMapConfig:
        return self.app.geometry_map

    def get_pencil_config(self) -> PencilConfig:
        return self.app.pencil

    def get_output_dir(self) -> Path:
        """Get output directory."""
        return Path(self.app.output.directory)

    def get_seed(self) -> int:
        return self.app.seed

    def get_threads(self) -> int:
        return self.app.threads
