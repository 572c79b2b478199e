"""Pydantic models for configuration validation."""

import math
from typing import Literal

from pydantic import BaseModel
from pydantic import Field
from pydantic import field_validator
from pydantic import model_validator


class KerrConfig(BaseModel):
    """Black-hole parameters."""

    M: float = Field(default=1.0, gt=0, description="Mass")
    a: float = Field(default=0.5, ge=0, description="Spin parameter, 0 <= a <= M")

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_spin(self) -> "KerrConfig":
        """Reject super-extremal spins."""
        if self.a > self.M:
            raise ValueError(f"Spin a={self.a} must not exceed mass M={self.M}")
        return self


class ModeConfig(BaseModel):
    """Azimuthal mode and field mass of the reduced equation."""

    m: int = Field(default=1, description="Azimuthal separation integer")
    mu: float = Field(default=0.0, ge=0, description="Field mass")

    model_config = {"extra": "forbid"}


class GridConfig(BaseModel):
    """Truncated (r, theta) grid, with radii in units of M."""

    Nr: int = Field(default=40, description="Interior radial nodes")
    Ntheta: int = Field(default=20, description="Polar nodes")
    eps_h: float = Field(default=1e-3, gt=0, description="Horizon offset of r_min")
    r_max: float = Field(default=20.0, description="Outer cutoff radius")

    model_config = {"extra": "forbid"}

    @field_validator("Nr", "Ntheta")
    @classmethod
    def validate_nodes(cls, v: int) -> int:
        """Validate node counts."""
        if not 3 <= v <= 2000:
            raise ValueError("Node counts must be between 3 and 2000")
        return v

    @field_validator("r_max")
    @classmethod
    def validate_r_max(cls, v: float) -> float:
        """The outer cutoff must lie beyond any horizon (r_plus <= 2M)."""
        if not math.isfinite(v) or v <= 2.0:
            raise ValueError("r_max must be a finite multiple of M greater than 2")
        return v


class EvolutionSection(BaseModel):
    """Time integration options for the evolve subcommand."""

    system: Literal["example_stable", "example_unstable", "discretized", "files"] = Field(
        default="example_stable", description="Which operator pair to evolve"
    )
    atil_file: str | None = Field(default=None, description="Atil matrix file for system 'files'")
    b_file: str | None = Field(default=None, description="B matrix file for system 'files'")
    u0: list[float] | None = Field(default=None, description="Initial u (random if omitted)")
    du0: list[float] | None = Field(default=None, description="Initial u' (zero if omitted)")
    dt: float = Field(default=1e-3, gt=0, description="Time step")
    T: float = Field(default=10.0, gt=0, description="Final time")
    record_every: int = Field(default=10, ge=1, description="Record every k-th step")
    s_list: list[float] = Field(default_factory=list, description="Tracked shifts")

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_files(self) -> "EvolutionSection":
        """File-based systems need both matrices and a step no longer than T."""
        if self.system == "files" and not (self.atil_file and self.b_file):
            raise ValueError("system 'files' requires atil_file and b_file")
        if self.dt > self.T:
            raise ValueError(f"dt={self.dt} must not exceed T={self.T}")
        if self.u0 is not None and self.du0 is not None and len(self.u0) != len(self.du0):
            raise ValueError("u0 and du0 must have the same length")
        return self


class StabilityConfig(BaseModel):
    """Shift scan and mass-bound sweep options."""

    s_min: float = Field(default=-1.0, description="Smallest shift of the scan")
    s_max: float = Field(default=1.0, description="Largest shift of the scan")
    s_points: int = Field(default=41, ge=1, description="Number of scanned shifts")
    sweep_a: list[float] = Field(default_factory=list, description="Spins of the mass-bound sweep")
    sweep_m: list[int] = Field(default_factory=list, description="Modes of the mass-bound sweep")
    threshold: bool = Field(default=False, description="Also locate the discrete mass threshold")

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_range(self) -> "StabilityConfig":
        """Validate the scan interval."""
        if self.s_min > self.s_max:
            raise ValueError("s_min must not exceed s_max")
        return self


class GeometryMapConfig(BaseModel):
    """Lattice of the geometry map, radii in units of M."""

    nr: int = Field(default=50, ge=1, description="Radial lattice points")
    ntheta: int = Field(default=25, ge=1, description="Polar lattice points")
    r_max: float = Field(default=10.0, gt=0, description="Largest lattice radius")
    s: float | None = Field(default=None, description="Killing shift (special value if omitted)")
    samples: int = Field(default=0, ge=0, description="Random points for identity checks")

    model_config = {"extra": "forbid"}

    @field_validator("r_max")
    @classmethod
    def validate_r_max(cls, v: float) -> float:
        """The lattice must reach beyond the horizon (r_plus <= 2M)."""
        if not math.isfinite(v) or v <= 2.0:
            raise ValueError("r_max must be a finite multiple of M greater than 2")
        return v


class PencilConfig(BaseModel):
    """Matrix input of the pencil subcommand."""

    example: Literal["stable", "unstable"] | None = Field(
        default="stable", description="Built-in example used when no files are given"
    )
    atil_file: str | None = Field(default=None, description="Atil matrix file")
    b_file: str | None = Field(default=None, description="B matrix file")

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def validate_source(self) -> "PencilConfig":
        """Either both files or a built-in example."""
        if (self.atil_file is None) != (self.b_file is None):
            raise ValueError("atil_file and b_file must be given together")
        if self.atil_file is None and self.example is None:
            raise ValueError("Either matrix files or an example must be selected")
        return self


class OutputConfig(BaseModel):
    """Output location."""

    directory: str = Field(default="kerr_stability_output", description="Output directory")

    model_config = {"extra": "forbid"}


class AppConfig(BaseModel):
    """Main application configuration."""

    kerr: KerrConfig = Field(default_factory=KerrConfig, description="Kerr parameters")
    mode: ModeConfig = Field(default_factory=ModeConfig, description="Mode selection")
    grid: GridConfig = Field(default_factory=GridConfig, description="Discretization grid")
    evolution: EvolutionSection = Field(
        default_factory=EvolutionSection, description="Evolution options"
    )
    stability: StabilityConfig = Field(
        default_factory=StabilityConfig, description="Stability options"
    )
    geometry_map: GeometryMapConfig = Field(
        default_factory=GeometryMapConfig, description="Geometry map options"
    )
    pencil: PencilConfig = Field(default_factory=PencilConfig, description="Pencil input")
    output: OutputConfig = Field(default_factory=OutputConfig, description="Output options")
    seed: int = Field(default=0, ge=0, description="Seed of the random samplers")
    threads: int = Field(default=1, description="Worker threads for parameter sweeps")

    model_config = {"extra": "forbid"}

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v: int) -> int:
        """Validate thread count range."""
        if not 1 <= v <= 64:
            raise ValueError("threads must be between 1 and 64")
        return v

    @field_validator("stability")
    @classmethod
    def validate_sweep_spins(cls, v: StabilityConfig) -> StabilityConfig:
        """Sweep spins must be admissible for unit mass ratios."""
        for a in v.sweep_a:
            if a < 0:
                raise ValueError(f"Sweep spin {a} must be nonnegative")
        return v

    @model_validator(mode="after")
    def validate_sweep_against_mass(self) -> "AppConfig":
        """Sweep spins share the configured mass."""
        for a in self.stability.sweep_a:
            if a > self.kerr.M:
                raise ValueError(f"Sweep spin {a} exceeds mass M={self.kerr.M}")
        return self
