"""Simulation and analysis toolkit for two-dimensional ion crystals in a
linear Paul trap: electrode potential bases and secular frequencies,
N-ion equilibria and normal modes, structural-transition scans, electrode
imperfection calibration, and sideband/micromotion observables."""

from .calibration import (
    CalibrationFit,
    CalibrationRecord,
    RadialEtaPair,
    apply_correction,
    correct_configuration,
    fit_eta,
    radial_eta_pair,
    records_from_rows,
    simulate_counterpart,
)
from .crystal import (
    CrystalConfigurationResult,
    DimensionClass,
    HarmonicTrap,
    ParameterSweep,
    StructureScanResult,
    characteristic_length,
    classify_dimension,
    crystal_extent,
    nearest_neighbor_distances,
    planar_equilibrium,
    potential_energy,
    potential_gradient,
    scan_structure,
    solve_equilibrium,
)
from .errors import (
    AxesNotAligned,
    CoincidentIons,
    CutoffTooLow,
    DegenerateAxes,
    FitDiverged,
    IndeterminateRatio,
    InputError,
    InsufficientVariation,
    LambDickeValidity,
    MixedConditions,
    NoSolution,
    NotAtEquilibrium,
    NotConverged,
    NotPlanar,
    PlanartrapError,
    RankDeficient,
    RotationDrift,
    TrapFileError,
    UnknownElectrode,
    UnstableAxis,
)
from .modes import (
    ModeSpectrum,
    SoftModeScanResult,
    hessian,
    mode_spectrum,
    soft_mode_scan,
    transverse_band,
    transverse_block,
)
from .reference import build_reference_trap, bundled_trap_text
from .spectroscopy import (
    RamanProbe,
    SpectrumCurve,
    ThermalState,
    axis_misalignment_bound,
    crystal_modulation_indices,
    fit_rabi,
    lamb_dicke,
    lamb_dicke_matrix,
    modulation_index,
    rabi_signal,
    sideband_ratio,
    simulate_spectrum,
)
from .trap import (
    ElectrodeBasis,
    FrequencyDifference,
    IonSpecies,
    QuadraticFit,
    RfDrive,
    SecularFrequencies,
    TrapConfiguration,
    axis_rotation_angle,
    fit_quadratic_basis,
    frequency_difference,
    planarity_from_bound,
    rf_field_at,
    rf_null,
    secular_frequencies,
    solve_rotation_ratio,
    stability_bound,
)
from .trapfile import load_trap, parse_trap_toml, render_trap_toml

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ElectrodeBasis", "RfDrive", "IonSpecies", "TrapConfiguration",
    "SecularFrequencies", "FrequencyDifference", "QuadraticFit",
    "secular_frequencies", "frequency_difference", "solve_rotation_ratio",
    "axis_rotation_angle", "stability_bound", "planarity_from_bound",
    "rf_field_at", "rf_null", "fit_quadratic_basis",
    "HarmonicTrap", "CrystalConfigurationResult", "DimensionClass",
    "ParameterSweep", "StructureScanResult", "characteristic_length",
    "solve_equilibrium", "planar_equilibrium", "potential_energy",
    "potential_gradient", "crystal_extent", "classify_dimension",
    "nearest_neighbor_distances", "scan_structure",
    "ModeSpectrum", "SoftModeScanResult", "hessian", "mode_spectrum",
    "transverse_band", "transverse_block", "soft_mode_scan",
    "CalibrationRecord", "CalibrationFit", "RadialEtaPair",
    "records_from_rows", "simulate_counterpart", "fit_eta",
    "radial_eta_pair", "apply_correction", "correct_configuration",
    "RamanProbe", "ThermalState", "SpectrumCurve", "lamb_dicke",
    "lamb_dicke_matrix", "simulate_spectrum", "rabi_signal", "fit_rabi",
    "modulation_index", "crystal_modulation_indices", "sideband_ratio",
    "axis_misalignment_bound",
    "build_reference_trap", "bundled_trap_text", "load_trap", "parse_trap_toml",
    "render_trap_toml",
    "PlanartrapError", "InputError", "TrapFileError", "UnknownElectrode",
    "UnstableAxis", "AxesNotAligned", "NoSolution", "IndeterminateRatio",
    "DegenerateAxes", "RankDeficient", "NotConverged", "CoincidentIons",
    "NotPlanar", "InsufficientVariation", "MixedConditions",
    "RotationDrift", "CutoffTooLow", "FitDiverged", "NotAtEquilibrium",
    "LambDickeValidity",
]
