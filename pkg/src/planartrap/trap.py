"""Electrode-basis trap model: curvatures, secular frequencies, axis rotation.

The trap is represented by per-electrode quadratic potential bases instead of
boundary-element field maps. Each basis stores, per applied volt, the Hessian
of the electrode's potential (``curvature``, V/m^2) and the potential gradient
at the origin (``linear_field``, V/m), so the per-volt potential is

    phi_E(r) = 0.5 * r.T @ curvature @ r + linear_field . r  (+ const).

The same convention holds for the RF basis; the drive potential is
``v_rf * cos(omega_rf t) * phi_rf(r)``. Lowest-order Mathieu theory then gives
per principal axis

    omega_i^2 = e*kappa_i/m + e^2 v_rf^2 kappa'_i^2 / (2 m^2 omega_rf^2),
    q_i = 2 e v_rf kappa'_i / (m omega_rf^2),

with kappa (static) and kappa' (RF) the curvature diagonals in that frame.
Higher-order Mathieu corrections are out of scope; q is reported so users can
judge validity (a warning is emitted above Q_WARN_LEVEL).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import ECHARGE, AMU, PLANAR_BOUND_COEFF
from .errors import (
    AxesNotAligned,
    DegenerateAxes,
    IndeterminateRatio,
    InputError,
    NoSolution,
    RankDeficient,
    UnknownElectrode,
    UnstableAxis,
)

AXIS_NAMES = ("x", "y", "z")
AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

# Mathieu stability parameter above which the lowest-order solution is dubious
Q_WARN_LEVEL = 0.3

# relative tolerances from the type invariants
TRACE_RTOL = 1e-9
SYMMETRY_RTOL = 1e-12


def _as_matrix(curvature) -> np.ndarray:
    c = np.array(curvature, dtype=float)
    if c.shape != (3, 3):
        raise InputError(f"curvature must be 3x3, got shape {c.shape}")
    return c


@dataclass(frozen=True)
class ElectrodeBasis:
    """Quadratic potential basis of one electrode, per applied volt.

    Parameters
    ----------
    label : str
        Electrode identifier, unique within a configuration.
    curvature : (3, 3) array
        Hessian of the per-volt potential, V/m^2. Symmetric and traceless
        (Laplace) within the stored tolerances.
    linear_field : (3,) array
        Gradient of the per-volt potential at the origin, V/m.
    """

    label: str
    curvature: np.ndarray
    linear_field: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        c = _as_matrix(self.curvature)
        scale = np.abs(c).max()
        if scale > 0.0:
            asym = np.abs(c - c.T).max()
            if asym >= SYMMETRY_RTOL * scale:
                raise InputError(
                    f"electrode {self.label!r}: curvature asymmetry "
                    f"{asym:.3e} exceeds {SYMMETRY_RTOL:.0e} * max|c|"
                )
            norm = np.linalg.norm(c)
            tr = abs(np.trace(c))
            if tr >= TRACE_RTOL * norm:
                raise InputError(
                    f"electrode {self.label!r}: |trace| = {tr:.3e} violates the "
                    f"Laplace constraint (>= {TRACE_RTOL:.0e} * ||c||)"
                )
        f = np.array(self.linear_field, dtype=float)
        if f.shape != (3,):
            raise InputError("linear_field must be a 3-vector")
        c.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "curvature", c)
        object.__setattr__(self, "linear_field", f)


@dataclass(frozen=True)
class RfDrive:
    """RF drive parameters: voltage (volts) and angular frequency (rad/s)."""

    v_rf: float
    omega_rf: float

    def __post_init__(self):
        if self.v_rf < 0:
            raise InputError("v_rf must be >= 0")
        if self.omega_rf <= 0:
            raise InputError("omega_rf must be > 0")


@dataclass(frozen=True)
class IonSpecies:
    """Ion mass (kg) and charge (C)."""

    mass: float
    charge: float = ECHARGE

    def __post_init__(self):
        if self.mass <= 0:
            raise InputError("mass must be > 0")
        if self.charge == 0:
            raise InputError("charge must be nonzero")

    @classmethod
    def from_amu(cls, mass_amu: float, charge_e: float = 1.0) -> "IonSpecies":
        return cls(mass=mass_amu * AMU, charge=charge_e * ECHARGE)

    @property
    def mass_amu(self) -> float:
        return self.mass / AMU

    @property
    def charge_e(self) -> float:
        return self.charge / ECHARGE


@dataclass(frozen=True)
class TrapConfiguration:
    """Ion species + DC electrodes with voltages + RF basis and drive."""

    species: IonSpecies
    dc_electrodes: tuple  # of (ElectrodeBasis, voltage: float)
    rf_basis: ElectrodeBasis
    rf_drive: RfDrive

    def __post_init__(self):
        dc = tuple((b, float(v)) for b, v in self.dc_electrodes)
        if not dc:
            raise InputError("at least one DC electrode is required")
        labels = [b.label for b, _ in dc]
        if len(set(labels)) != len(labels):
            raise InputError(f"duplicate electrode labels: {labels}")
        object.__setattr__(self, "dc_electrodes", dc)

    @property
    def dc_labels(self) -> tuple:
        return tuple(b.label for b, _ in self.dc_electrodes)

    def voltage_of(self, label: str) -> float:
        for b, v in self.dc_electrodes:
            if b.label == label:
                return v
        raise UnknownElectrode(f"no electrode labeled {label!r}")

    def basis_of(self, label: str) -> ElectrodeBasis:
        for b, _ in self.dc_electrodes:
            if b.label == label:
                return b
        raise UnknownElectrode(f"no electrode labeled {label!r}")

    def with_voltages(self, updates: dict) -> "TrapConfiguration":
        """New configuration with some DC voltages replaced (by label)."""
        unknown = set(updates) - set(self.dc_labels)
        if unknown:
            raise UnknownElectrode(f"no electrode labeled {sorted(unknown)}")
        dc = tuple(
            (b, float(updates.get(b.label, v))) for b, v in self.dc_electrodes
        )
        return TrapConfiguration(self.species, dc, self.rf_basis, self.rf_drive)

    def with_rf_voltage(self, v_rf: float) -> "TrapConfiguration":
        return TrapConfiguration(
            self.species,
            self.dc_electrodes,
            self.rf_basis,
            RfDrive(v_rf=float(v_rf), omega_rf=self.rf_drive.omega_rf),
        )


@dataclass(frozen=True)
class SecularFrequencies:
    """Secular frequencies by lab axis label, with the principal frame.

    ``principal_axes`` columns are the principal directions assigned to
    (x, y, z) by largest overlap, so frequencies are sorted by declared axis,
    not by magnitude. ``q`` holds the per-axis Mathieu stability parameters.
    """

    omega_x: float
    omega_y: float
    omega_z: float
    principal_axes: np.ndarray
    q: np.ndarray
    omega_squared: np.ndarray
    unstable: tuple = ()

    @property
    def omega(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.omega_z])


def total_static_curvature(config: TrapConfiguration) -> np.ndarray:
    """Sum of V_E * curvature_E over DC electrodes (V/m^2). Traceless."""
    total = np.zeros((3, 3))
    for basis, volts in config.dc_electrodes:
        total += volts * basis.curvature
    return total


def static_linear_field(config: TrapConfiguration) -> np.ndarray:
    """Sum of V_E * linear_field_E over DC electrodes (V/m)."""
    total = np.zeros(3)
    for basis, volts in config.dc_electrodes:
        total += volts * basis.linear_field
    return total


def _omega_sq_matrix(config: TrapConfiguration) -> np.ndarray:
    """W = (e/m) K_static + e^2 v^2 K_rf^2 / (2 m^2 omega_rf^2), in (rad/s)^2.

    Eigenvalues of W are the squared secular frequencies; in a frame where
    both curvatures are diagonal this is exactly the per-axis Mathieu result.
    """
    e = abs(config.species.charge)
    m = config.species.mass
    krf = config.rf_basis.curvature
    v = config.rf_drive.v_rf
    om = config.rf_drive.omega_rf
    static = (e / m) * total_static_curvature(config)
    pseudo = (e * v / m) ** 2 / (2.0 * om**2) * (krf @ krf)
    return static + pseudo


def _assign_axes(vecs: np.ndarray) -> np.ndarray:
    """Permutation assigning eigenvector columns to lab axes by max overlap."""
    cost = -np.abs(vecs)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(3, dtype=int)
    perm[rows] = cols
    return perm


def secular_frequencies(
    config: TrapConfiguration, allow_unstable: bool = False
) -> SecularFrequencies:
    """Secular frequencies and principal axes of the combined potential.

    Raises UnstableAxis when any squared frequency is negative, unless
    ``allow_unstable`` is set, in which case the magnitude is kept and the
    axis is listed in ``unstable``.
    """
    w = _omega_sq_matrix(config)
    scale = np.abs(w).max()
    offdiag = np.abs(w - np.diag(np.diag(w))).max()
    if scale == 0.0 or offdiag == 0.0:
        # already diagonal in the lab frame; identity rotation (this is also
        # the documented choice for degenerate y-z blocks)
        lam = np.diag(w).copy()
        axes = np.eye(3)
    else:
        lam_raw, vecs = np.linalg.eigh(w)
        perm = _assign_axes(vecs)
        lam = lam_raw[perm]
        axes = vecs[:, perm]
        # sign convention: dominant component positive
        for i in range(3):
            if axes[i, i] < 0:
                axes[:, i] = -axes[:, i]

    e = abs(config.species.charge)
    m = config.species.mass
    kprime = axes.T @ config.rf_basis.curvature @ axes
    q = 2.0 * e * config.rf_drive.v_rf * np.abs(np.diag(kprime)) / (
        m * config.rf_drive.omega_rf**2
    )
    if q.max() > Q_WARN_LEVEL:
        warnings.warn(
            f"Mathieu q = {q.max():.3f} exceeds {Q_WARN_LEVEL}; lowest-order "
            "secular frequencies are unreliable",
            stacklevel=2,
        )

    unstable = tuple(AXIS_NAMES[i] for i in range(3) if lam[i] < 0)
    if unstable and not allow_unstable:
        i = int(np.argmin(lam))
        raise UnstableAxis(AXIS_NAMES[i], lam[i], all_omega_squared=lam.copy())

    omega = np.sqrt(np.abs(lam))
    return SecularFrequencies(
        omega_x=float(omega[0]),
        omega_y=float(omega[1]),
        omega_z=float(omega[2]),
        principal_axes=axes,
        q=q,
        omega_squared=lam,
        unstable=unstable,
    )


class FrequencyDifference(tuple):
    """(difference, coefficient) with named access."""

    def __new__(cls, difference: float, coefficient: float):
        return super().__new__(cls, (difference, coefficient))

    @property
    def difference(self) -> float:
        return self[0]

    @property
    def coefficient(self) -> float:
        return self[1]


def frequency_difference(
    config: TrapConfiguration,
    nc_label: str = "NC",
    align_rtol: float = 1e-8,
) -> FrequencyDifference:
    """omega_y^2 - omega_z^2 and the coefficient C with difference = C * V_NC.

    C = (e/m) * sum_E (c_yy,E - c_zz,E) * V_E / V_NC over DC electrodes; it is
    independent of the RF drive whenever the RF basis has |kappa'_y| =
    |kappa'_z| (the y-z-symmetric quadrupole case). Requires principal axes
    aligned with the lab frame.
    """
    w = _omega_sq_matrix(config)
    scale = max(np.abs(w).max(), 1e-300)
    cross = max(abs(w[0, 1]), abs(w[0, 2]), abs(w[1, 2]))
    if cross > align_rtol * scale:
        raise AxesNotAligned(
            f"cross curvature {cross:.3e} exceeds {align_rtol:.0e} of scale"
        )
    difference = float(w[1, 1] - w[2, 2])

    e = abs(config.species.charge)
    m = config.species.mass
    static_diff = sum(
        v * (b.curvature[1, 1] - b.curvature[2, 2])
        for b, v in config.dc_electrodes
    )
    v_nc = config.voltage_of(nc_label)
    if v_nc == 0.0:
        if any(v != 0.0 for _, v in config.dc_electrodes):
            raise InputError(
                f"coefficient undefined: {nc_label!r} voltage is zero while "
                "other DC voltages are not"
            )
        return FrequencyDifference(difference, 0.0)
    return FrequencyDifference(difference, (e / m) * static_diff / v_nc)


def solve_rotation_ratio(
    config: TrapConfiguration, c_electrode_set, nc_electrode_set
) -> float:
    """Voltage ratio V_NC/V_C = -c_C/c_NC nulling the y-z cross curvature.

    Each set is assumed driven at a common voltage; c_X is the y-z cross term
    of the set's unit-voltage curvature sum. Electrodes outside both sets are
    not compensated by this ratio.
    """
    def cross_of(labels) -> float:
        labels = [labels] if isinstance(labels, str) else list(labels)
        if not labels:
            raise InputError("electrode set is empty")
        return sum(config.basis_of(lb).curvature[1, 2] for lb in labels)

    c_c = cross_of(c_electrode_set)
    c_nc = cross_of(nc_electrode_set)
    scale = max(
        np.abs(config.basis_of(lb).curvature).max()
        for lb in (
            ([c_electrode_set] if isinstance(c_electrode_set, str) else list(c_electrode_set))
            + ([nc_electrode_set] if isinstance(nc_electrode_set, str) else list(nc_electrode_set))
        )
    )
    tiny = 1e-14 * max(scale, 1e-300)
    if abs(c_nc) <= tiny and abs(c_c) <= tiny:
        raise IndeterminateRatio("both sets have zero y-z cross curvature")
    if abs(c_nc) <= tiny:
        raise NoSolution("second set has zero y-z cross curvature")
    return -c_c / c_nc


def axis_rotation_angle(
    config: TrapConfiguration, degeneracy_rtol: float = 1e-12
) -> float:
    """Angle (degrees) of the principal axis closest to z, from the static
    y-z curvature block.

    Signed convention: positive when the axis tilts from +z toward +y
    (clockwise as seen looking along +x with y right, z up). The static block
    determines the full-potential rotation whenever the RF y-z block is
    isotropic, which holds for any y-z-antisymmetric RF quadrupole.
    """
    s = total_static_curvature(config)
    block = s[1:, 1:]
    a, b, c = block[0, 0], block[1, 1], block[0, 1]
    radius = np.hypot(0.5 * (a - b), c)
    scale = max(np.abs(s).max(), np.abs(block).max())
    if radius <= degeneracy_rtol * max(scale, 1e-300):
        raise DegenerateAxes("y-z static block is proportional to identity")
    _, vecs = np.linalg.eigh(block)
    best = None
    for k in range(2):
        vy, vz = vecs[0, k], vecs[1, k]
        ang = np.degrees(np.arctan2(vy, vz))
        if ang > 90.0:
            ang -= 180.0
        elif ang <= -90.0:
            ang += 180.0
        if best is None or abs(ang) < abs(best):
            best = ang
    return float(best)


def stability_bound(n_ions: int, omega_y: float) -> float:
    """omega_y / (2.264 N)^(1/4): in-plane frequencies below this guarantee a
    planar crystal in x-z."""
    if n_ions < 1:
        raise InputError("n_ions must be >= 1")
    if omega_y <= 0:
        raise InputError("omega_y must be > 0")
    return omega_y / (PLANAR_BOUND_COEFF * n_ions) ** 0.25


def planarity_from_bound(
    n_ions: int, omega_x: float, omega_y: float, omega_z: float
) -> str:
    """Classify by the sufficient bound alone.

    Both in-plane frequencies below the bound -> "planar"; both above ->
    "three_dimensional"; otherwise "indeterminate" (the bound alone cannot
    decide; solve the equilibrium to resolve).
    """
    bound = stability_bound(n_ions, omega_y)
    below = [omega_x < bound, omega_z < bound]
    if all(below):
        return "planar"
    if not any(below):
        return "three_dimensional"
    return "indeterminate"


def rf_field_at(config: TrapConfiguration, position) -> np.ndarray:
    """Amplitude vector (V/m) of the field oscillating at omega_rf.

    E(r) = v_rf * (curvature_rf @ r + linear_field_rf). Valid within the
    harmonic model's range; no bound is enforced.
    """
    r = np.asarray(position, dtype=float)
    return config.rf_drive.v_rf * (
        config.rf_basis.curvature @ r + config.rf_basis.linear_field
    )


def rf_null(config: TrapConfiguration) -> np.ndarray:
    """Least-squares solution of curvature_rf @ r = -linear_field_rf.

    For singular RF curvature (e.g. a pure y-z quadrupole) the null is a line
    or plane; the minimum-norm point is returned.
    """
    sol, *_ = np.linalg.lstsq(
        config.rf_basis.curvature, -config.rf_basis.linear_field, rcond=None
    )
    return sol


class QuadraticFit(tuple):
    """(basis, rms_residual) with named access."""

    def __new__(cls, basis: ElectrodeBasis, rms_residual: float):
        return super().__new__(cls, (basis, rms_residual))

    @property
    def basis(self) -> ElectrodeBasis:
        return self[0]

    @property
    def rms_residual(self) -> float:
        return self[1]


def fit_quadratic_basis(samples, label: str = "fit") -> QuadraticFit:
    """Least-squares quadratic basis from (position, potential) samples.

    The Laplace constraint is imposed exactly by reparameterization: the
    curvature is expanded in traceless forms only. Needs >= 10 samples in
    general position; raises RankDeficient otherwise. Returns the basis and
    the RMS potential residual (volts).
    """
    pts = np.array([p for p, _ in samples], dtype=float)
    vals = np.array([v for _, v in samples], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InputError("sample positions must be 3-vectors")
    if len(pts) < 10:
        raise InputError(f"need >= 10 samples, got {len(pts)}")
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    # phi = c0 + f.r + k1 (x^2-z^2)/2 + k2 (y^2-z^2)/2 + k4 xy + k5 xz + k6 yz
    cols = np.column_stack(
        [
            np.ones_like(x),
            x,
            y,
            z,
            0.5 * (x**2 - z**2),
            0.5 * (y**2 - z**2),
            x * y,
            x * z,
            y * z,
        ]
    )
    coef, _, rank, _ = np.linalg.lstsq(cols, vals, rcond=None)
    if rank < 9:
        raise RankDeficient(
            f"sample geometry determines only {rank}/9 coefficients"
        )
    _, fx, fy, fz, k1, k2, k4, k5, k6 = coef
    curv = np.array(
        [
            [k1, k4, k5],
            [k4, k2, k6],
            [k5, k6, -k1 - k2],
        ]
    )
    rms = float(np.sqrt(np.mean((cols @ coef - vals) ** 2)))
    return QuadraticFit(
        ElectrodeBasis(label=label, curvature=curv, linear_field=np.array([fx, fy, fz])),
        rms,
    )
