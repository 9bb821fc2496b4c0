"""Request/response models for the task endpoints.

Requests carry file contents as text (the client reads files, the service
never touches the filesystem); responses carry both structured values and
the rendered output documents, so a thin client writes bytes verbatim and
byte-determinism survives remote use. Timestamps appear nowhere here; they
belong to the client-side manifest.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class SweepWindow(BaseModel):
    start_volts: float
    stop_volts: float
    points: int = Field(ge=2)


class FreqsRequest(BaseModel):
    trap_toml: str
    dc_overrides: dict[str, float] = {}
    v_rf: float | None = None
    sweep: SweepWindow | None = None
    allow_unstable: bool = False


class FreqsResponse(BaseModel):
    frequencies_mhz: list[float]
    q: list[float]
    rotation_angle_deg: float | None
    principal_axes: list[list[float]]
    unstable: bool
    report_text: str
    sweep_csv: str | None = None


class TrapSource(BaseModel):
    """Either a full trap file or bare secular frequencies."""

    trap_toml: str | None = None
    dc_overrides: dict[str, float] = {}
    v_rf: float | None = None
    freqs_mhz: list[float] | None = None
    mass_amu: float | None = None


class EquilibriumRequest(BaseModel):
    source: TrapSource
    n_ions: int = Field(ge=1)
    seed: int = 0
    restarts: int = Field(default=8, ge=1)
    force_tol: float | None = None
    planar: bool = False
    workers: int = Field(default=1, ge=1)


class EquilibriumResponse(BaseModel):
    converged: bool
    energy_joules: float
    max_force_newtons: float
    dimensionality: str
    frequencies_mhz: list[float]
    positions_um: list[list[float]]
    geometry_csv: str
    geometry_json: str
    summary_text: str


class ModesRequest(BaseModel):
    source: TrapSource
    geometry_csv: str | None = None
    n_ions: int | None = Field(default=None, ge=1)
    seed: int = 0
    workers: int = Field(default=1, ge=1)


class ModesResponse(BaseModel):
    frequencies_mhz: list[float]
    soft: list[bool]
    participation: list[list[float]]
    transverse_band_mhz: list[float] | None
    modes_csv: str
    summary_text: str


class ScanRequest(BaseModel):
    scan_toml: str
    trap_toml: str | None = None
    mass_amu: float | None = None


class ScanResponse(BaseModel):
    scan_csv: str
    soft_csv: str | None
    transitions: list[list[str]]
    hysteresis: bool
    all_converged: bool
    summary_text: str


class CalibrateRequest(BaseModel):
    trap_toml: str
    calibration_csv: str


class CalibrateResponse(BaseModel):
    etas: dict[str, dict[str, float]]
    report_json: str
    corrected_trap_toml: str
    summary_text: str


class SpectrumRequest(BaseModel):
    source: TrapSource
    probe_toml: str
    geometry_csv: str | None = None
    n_ions: int | None = Field(default=None, ge=1)
    seed: int = 0
    workers: int = Field(default=1, ge=1)


class SpectrumResponse(BaseModel):
    spectrum_csv: str
    peak_mhz: list[float]
    summary_text: str


class MicromotionRequest(BaseModel):
    trap_toml: str
    delta_k: list[float]
    geometry_csv: str | None = None
    compare: bool = False


class MicromotionResponse(BaseModel):
    betas: list[float]
    beta_min: float
    beta_max: float
    sideband_ratios: list[float]
    micromotion_csv: str
    summary_text: str


class ErrorResponse(BaseModel):
    error: str
    detail: str
