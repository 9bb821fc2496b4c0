"""Imperfection-coefficient calibration.

Measured secular frequencies differ from the ones simulated from electrode
bases; the discrepancy per electrode group and axis is captured by a single
multiplicative coefficient eta on the curvature, fitted as the slope of
measured omega^2 against simulated omega^2 while one group's voltage is
stepped. (Some write-ups print the regression with the measured value on
both sides; the regressor here is the simulated value, which is the only
reading consistent with extracting a real-to-simulated ratio.)

Corrected bases scale the axial entry by eta_axial and the y-z block by the
averaged radial eta. Anisotropic scaling violates the Laplace trace
constraint, so the residual trace (eta_axial - eta_radial) * c_xx is removed
symmetrically from the y-z diagonal. This keeps the axial entry and the y-z
anisotropy exactly at their scaled values; the price is a common y-z offset,
reported by correction_offset, which shifts a subsequent radial re-fit away
from slope 1 by a computable factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateAxes,
    InputError,
    InsufficientVariation,
    MixedConditions,
    RotationDrift,
    UnknownElectrode,
    UnstableAxis,
)
from .trap import (
    AXIS_INDEX,
    ElectrodeBasis,
    TrapConfiguration,
    axis_rotation_angle,
    secular_frequencies,
)

VOLTAGE_MATCH_TOL = 1e-6  # volts; "fixed" voltages must agree to this
MAX_ROTATION_DEG = 2.0  # radial fits assume near-aligned principal axes


@dataclass
class CalibrationRecord:
    """One measured secular frequency at a full set of electrode voltages."""

    voltages: dict
    measured_frequency: float
    axis: str
    sigma: float | None = None

    def __post_init__(self):
        if self.axis not in AXIS_INDEX:
            raise InputError(f"axis must be x, y, or z, got {self.axis!r}")
        if self.measured_frequency <= 0:
            raise InputError("measured_frequency must be > 0")
        if self.sigma is not None and self.sigma <= 0:
            raise InputError("sigma must be > 0 when given")


def records_from_rows(rows, template: TrapConfiguration) -> list:
    """Expand calibration CSV rows to records with full voltage maps.

    Each row names the stepped electrode group; every other group sits at
    the template's voltage.
    """
    base = {label: template.voltage_of(label) for label in template.dc_labels}
    records = []
    for row in rows:
        group = row["electrode_group"]
        if group not in base:
            raise UnknownElectrode(
                f"electrode group {group!r} not in trap (has {sorted(base)})"
            )
        volts = dict(base)
        volts[group] = row["voltage"]
        records.append(
            CalibrationRecord(
                voltages=volts,
                measured_frequency=row["measured_frequency"],
                axis=row["axis"],
                sigma=row.get("sigma"),
            )
        )
    return records


def _config_for(record: CalibrationRecord, template: TrapConfiguration):
    missing = set(template.dc_labels) - set(record.voltages)
    extra = set(record.voltages) - set(template.dc_labels)
    if extra:
        raise UnknownElectrode(f"record names unknown electrodes {sorted(extra)}")
    if missing:
        raise UnknownElectrode(f"record is missing voltages for {sorted(missing)}")
    return template.with_voltages(record.voltages)


def _simulated_omega_sq(record: CalibrationRecord, template: TrapConfiguration):
    sec = secular_frequencies(_config_for(record, template), allow_unstable=True)
    return float(sec.omega_squared[AXIS_INDEX[record.axis]])


def simulate_counterpart(
    record: CalibrationRecord, template: TrapConfiguration
) -> float:
    """Uncorrected-model secular frequency along the record's axis, rad/s."""
    w2 = _simulated_omega_sq(record, template)
    if w2 < 0:
        raise UnstableAxis(record.axis, w2)
    return math.sqrt(w2)


@dataclass(frozen=True)
class CalibrationFit:
    """Weighted least-squares slope of measured vs simulated omega^2."""

    eta: float
    intercept: float
    r_squared: float
    n_points: int
    electrode: str
    axis: str
    residuals: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_points < 2:
            raise InputError("a calibration fit needs >= 2 points")
        if not 0.0 <= self.r_squared <= 1.0:
            raise InputError(f"r_squared {self.r_squared} outside [0, 1]")


def _discover_varied(records) -> str:
    labels = sorted(records[0].voltages)
    for rec in records[1:]:
        if sorted(rec.voltages) != labels:
            raise MixedConditions("records name different electrode sets")
    varied = []
    for label in labels:
        values = [rec.voltages[label] for rec in records]
        if max(values) - min(values) > VOLTAGE_MATCH_TOL:
            varied.append(label)
    if not varied:
        raise InsufficientVariation(
            f"no electrode voltage varies by more than {VOLTAGE_MATCH_TOL} V"
        )
    if len(varied) > 1:
        raise MixedConditions(
            f"voltages vary on {varied}; exactly one group may be stepped"
        )
    return varied[0]


def fit_eta(records, template: TrapConfiguration) -> CalibrationFit:
    """Fit eta for the one stepped electrode group.

    measured omega^2 = eta * simulated omega^2 + b, ordinary least squares;
    if every record carries a frequency uncertainty, weights 1/(2 omega
    sigma)^2 apply (the omega^2 variance to first order). The stepped group
    is discovered from the records, not passed in.
    """
    records = list(records)
    if len(records) < 2:
        raise InsufficientVariation("need >= 2 calibration records")
    axes = {rec.axis for rec in records}
    if len(axes) != 1:
        raise InputError(f"records mix axes {sorted(axes)}; fit one axis at a time")
    axis = records[0].axis
    electrode = _discover_varied(records)

    x = np.array([_simulated_omega_sq(rec, template) for rec in records])
    y = np.array([rec.measured_frequency**2 for rec in records])
    if x.max() - x.min() <= 0.0:
        raise InsufficientVariation(
            "simulated omega^2 is constant across records; nothing to fit"
        )
    if all(rec.sigma is not None for rec in records):
        w = np.array(
            [1.0 / (2.0 * rec.measured_frequency * rec.sigma) ** 2 for rec in records]
        )
    else:
        w = np.ones(len(records))

    design = np.stack([x, np.ones_like(x)], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    eta, intercept = float(coef[0]), float(coef[1])
    resid = y - (eta * x + intercept)
    ss_res = float(w @ resid**2)
    ybar = float(w @ y / w.sum())
    ss_tot = float(w @ (y - ybar) ** 2)
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res <= 1e-20 * float(w @ y**2 + 1e-300) else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    return CalibrationFit(
        eta=eta,
        intercept=intercept,
        r_squared=r2,
        n_points=len(records),
        electrode=electrode,
        axis=axis,
        residuals=tuple(float(r) for r in resid),
    )


class RadialEtaPair(NamedTuple):
    eta_y: float
    eta_z: float
    eta_avg: float


def radial_eta_pair(
    records_y,
    records_z,
    template: TrapConfiguration,
    max_rotation_deg: float = MAX_ROTATION_DEG,
) -> RadialEtaPair:
    """Per-axis radial etas and their arithmetic mean.

    A single in-plane coefficient only makes sense while the principal axes
    stay near y and z, so every record's configuration must keep the
    rotation angle below max_rotation_deg (RotationDrift otherwise;
    degenerate y-z curvature counts as zero rotation).
    """
    records_y = list(records_y)
    records_z = list(records_z)
    for rec, want in [(r, "y") for r in records_y] + [(r, "z") for r in records_z]:
        if rec.axis != want:
            raise InputError(f"record with axis {rec.axis!r} in the {want} dataset")
    for rec in records_y + records_z:
        try:
            angle = axis_rotation_angle(_config_for(rec, template))
        except DegenerateAxes:
            angle = 0.0
        if abs(angle) > max_rotation_deg:
            raise RotationDrift(
                f"principal axes rotated {angle:.3f} deg at voltages "
                f"{rec.voltages} (limit {max_rotation_deg} deg)"
            )
    fit_y = fit_eta(records_y, template)
    fit_z = fit_eta(records_z, template)
    return RadialEtaPair(
        eta_y=fit_y.eta,
        eta_z=fit_z.eta,
        eta_avg=0.5 * (fit_y.eta + fit_z.eta),
    )


def correction_offset(basis: ElectrodeBasis, eta_axial: float, eta_radial: float):
    """The common y-z diagonal shift that restores tracelessness:
    -(eta_axial - eta_radial) * c_xx / 2 on each of yy and zz."""
    return -0.5 * (eta_axial - eta_radial) * float(basis.curvature[0, 0])


def apply_correction(
    basis: ElectrodeBasis, eta_axial: float, eta_radial_avg: float
) -> ElectrodeBasis:
    """Scale a basis by fitted etas and restore the Laplace constraint.

    The axial (xx) entry is scaled by exactly eta_axial; yy, zz, and yz by
    eta_radial_avg; xy and xz are left alone. The trace deficit is removed
    from yy and zz equally, so the y-z anisotropy (yy - zz, yz) and the
    axial entry keep their exact scaled values. eta = 1 everywhere is the
    identity.
    """
    if eta_axial <= 0 or eta_radial_avg <= 0:
        raise InputError("eta values must be > 0")
    c = basis.curvature
    out = c.copy()
    shift = correction_offset(basis, eta_axial, eta_radial_avg)
    out[0, 0] = eta_axial * c[0, 0]
    out[1, 1] = eta_radial_avg * c[1, 1] + shift
    out[2, 2] = eta_radial_avg * c[2, 2] + shift
    out[1, 2] = out[2, 1] = eta_radial_avg * c[1, 2]
    return ElectrodeBasis(
        label=basis.label, curvature=out, linear_field=basis.linear_field.copy()
    )


def correct_configuration(
    template: TrapConfiguration, etas: dict
) -> TrapConfiguration:
    """Apply per-group (eta_axial, eta_radial) pairs to a configuration.

    ``etas`` maps electrode label to the pair; groups not named keep their
    bases. The RF basis is never corrected (the calibration probes static
    curvatures).
    """
    unknown = set(etas) - set(template.dc_labels)
    if unknown:
        raise UnknownElectrode(f"etas name unknown electrodes {sorted(unknown)}")
    new_dc = []
    for basis, voltage in template.dc_electrodes:
        if basis.label in etas:
            ax, rad = etas[basis.label]
            basis = apply_correction(basis, ax, rad)
        new_dc.append((basis, voltage))
    return TrapConfiguration(
        species=template.species,
        dc_electrodes=tuple(new_dc),
        rf_basis=template.rf_basis,
        rf_drive=template.rf_drive,
    )
