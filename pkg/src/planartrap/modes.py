"""Normal modes of an ion crystal: mass-weighted Hessian, mode spectra,
transverse bands, and the soft-mode route to the 2D-to-3D transition.

For a crystal lying exactly in the x-z plane the y displacements decouple
from the in-plane block, so the N transverse modes come from an N x N
sub-block. The soft-mode scan exploits this: equilibria are solved with y
constrained to 0, and the transition shows up as the smallest y-block
eigenvalue crossing zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .crystal import (
    FORCE_TOL,
    PLANARITY_THRESHOLD,
    HarmonicTrap,
    ParameterSweep,
    characteristic_length,
    classify_dimension,
    planar_equilibrium,
    potential_gradient,
    _hessian_scaled,
)
from .errors import InputError, NotAtEquilibrium, NotPlanar

SOFT_MODE_LEVEL = 1e-6  # of max eigenvalue; below -that counts unstable
Y_PARTICIPATION_HIGH = 0.999
Y_PARTICIPATION_LOW = 0.001


def hessian(positions, trap: HarmonicTrap) -> np.ndarray:
    """Mass-weighted Hessian (1/m) d2U/dr2 at ``positions``, 3N x 3N (rad/s)^2.

    Symmetric by construction. Warns NotAtEquilibrium when the max per-ion
    force exceeds ten times the default force tolerance, since the
    small-oscillation expansion assumes a stationary point.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    g = potential_gradient(p, trap)
    fmax = float(np.sqrt((g**2).sum(axis=1)).max())
    if fmax > 10.0 * FORCE_TOL:
        warnings.warn(
            f"max per-ion force {fmax:.3e} N; positions are not an equilibrium",
            NotAtEquilibrium,
        )
    ell = characteristic_length(trap.species, trap.omega_x)
    w2 = (trap.omega / trap.omega_x) ** 2
    return trap.omega_x**2 * _hessian_scaled(p / ell, w2)


@dataclass(frozen=True)
class ModeSpectrum:
    """Normal modes sorted by ascending eigenvalue.

    frequencies[k] = sqrt(|eigenvalues[k]|); soft[k] marks eigenvalues below
    -SOFT_MODE_LEVEL times the top eigenvalue (imaginary frequency, i.e. an
    unstable direction). participation[k] holds the squared eigenvector
    weight on x, y, z. Columns of ``eigenvectors`` are the mass-weighted
    displacement patterns.
    """

    eigenvalues: np.ndarray
    frequencies: np.ndarray
    eigenvectors: np.ndarray
    participation: np.ndarray
    soft: np.ndarray
    trap: HarmonicTrap

    def __post_init__(self):
        for name in ("eigenvalues", "frequencies", "eigenvectors", "participation", "soft"):
            a = np.array(getattr(self, name))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)


def _participation(vecs: np.ndarray) -> np.ndarray:
    n3, nm = vecs.shape
    per_axis = vecs.reshape(n3 // 3, 3, nm) ** 2
    return per_axis.sum(axis=0).T  # (n_modes, 3)


def mode_spectrum(positions, trap: HarmonicTrap) -> ModeSpectrum:
    """Eigen-decomposition of the mass-weighted Hessian.

    Negative eigenvalues are kept (reported via |lambda|^(1/2) plus the soft
    flag) rather than clipped, so scans can watch a mode go unstable.
    """
    h = hessian(positions, trap)
    vals, vecs = np.linalg.eigh(h)
    # deterministic eigenvector signs: largest-magnitude component positive
    for k in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[j, k] < 0:
            vecs[:, k] = -vecs[:, k]
    top = float(np.abs(vals).max()) if len(vals) else 0.0
    soft = vals < -SOFT_MODE_LEVEL * top
    return ModeSpectrum(
        eigenvalues=vals,
        frequencies=np.sqrt(np.abs(vals)),
        eigenvectors=vecs,
        participation=_participation(vecs),
        soft=soft,
        trap=trap,
    )


def transverse_band(positions, trap: HarmonicTrap) -> np.ndarray:
    """The N y-character mode frequencies of a planar x-z crystal, descending.

    Requires every mode to have y-participation above 0.999 or below 0.001;
    anything in between means the crystal is not planar enough for the
    transverse block to decouple, and NotPlanar is raised. The top of the
    band is the center-of-mass mode at omega_y.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    dim = classify_dimension(p)
    if dim.label == "3D" or (dim.detail and "y" in dim.detail):
        raise NotPlanar(f"crystal is {dim}, not 2D in x-z")
    spec = mode_spectrum(p, trap)
    y_frac = spec.participation[:, 1]
    ambiguous = (y_frac < Y_PARTICIPATION_HIGH) & (y_frac > Y_PARTICIPATION_LOW)
    if np.any(ambiguous):
        raise NotPlanar(
            f"{int(ambiguous.sum())} modes have mixed y-participation; "
            "transverse block does not decouple"
        )
    y_modes = spec.frequencies[y_frac > Y_PARTICIPATION_HIGH]
    if len(y_modes) != len(p):
        raise NotPlanar(
            f"expected {len(p)} transverse modes, found {len(y_modes)}"
        )
    return np.sort(y_modes)[::-1]


def transverse_block(positions, trap: HarmonicTrap) -> np.ndarray:
    """N x N y-displacement block of the mass-weighted Hessian.

    Exact for configurations with all y = 0 (the y axis then decouples by
    symmetry). Used by the soft-mode scan on planar-constrained equilibria,
    where the full crystal may already prefer 3D and the smallest eigenvalue
    of this block goes negative.
    """
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    h = hessian(p, trap)
    return h[1::3, 1::3]


@dataclass(frozen=True)
class SoftModeScanResult:
    """Smallest transverse eigenvalue along an in-plane confinement sweep.

    min_eigenvalue is in (rad/s)^2 and goes negative past the 2D-to-3D
    transition; min_frequency = sqrt(max(min_eigenvalue, 0)). ``transition``
    is the linearly interpolated parameter value of the first sign change
    (None if the sweep never crosses), ``transition_index`` the grid index
    just before it.
    """

    parameters: np.ndarray
    min_eigenvalue: np.ndarray
    min_frequency: np.ndarray
    band: np.ndarray
    converged: np.ndarray
    transition: float | None
    transition_index: int | None


def soft_mode_scan(
    template: HarmonicTrap,
    sweep: ParameterSweep,
    n_ions: int,
    seed: int = 0,
    restarts: int = 4,
    force_tol: float = FORCE_TOL,
) -> SoftModeScanResult:
    """Track the softest transverse mode while squeezing the plane.

    Equilibria are planar-constrained (y frozen at 0) so the transverse
    block stays meaningful on both sides of the transition; each grid point
    warm-starts from the previous one. Non-convergence at a point is
    recorded and the scan continues.
    """
    if sweep.kind != "omega_x":
        raise InputError("soft_mode_scan sweeps omega_x (in-plane confinement)")
    if sweep.values[1] < sweep.values[0]:
        raise InputError("soft-mode sweep must increase omega_x")
    npts = len(sweep.values)
    min_eig = np.zeros(npts)
    band = np.zeros((npts, n_ions))
    converged = np.zeros(npts, dtype=bool)
    prev = None
    for i, val in enumerate(sweep.values):
        oz = sweep.z_to_x * val if sweep.z_to_x else template.omega_z
        trap_i = HarmonicTrap(val, template.omega_y, oz, template.species)
        res = planar_equilibrium(
            trap_i,
            n_ions,
            seed=seed + i,
            restarts=restarts + (1 if prev is not None else 0),
            force_tol=force_tol,
            initial=prev,
        )
        prev = res.positions
        converged[i] = res.converged
        block = transverse_block(res.positions, trap_i)
        vals = np.linalg.eigvalsh(block)
        min_eig[i] = vals[0]
        band[i] = vals
    transition = None
    t_index = None
    for i in range(npts - 1):
        if min_eig[i] > 0 >= min_eig[i + 1]:
            t = min_eig[i] / (min_eig[i] - min_eig[i + 1])
            transition = float(
                sweep.values[i] + t * (sweep.values[i + 1] - sweep.values[i])
            )
            t_index = i
            break
    return SoftModeScanResult(
        parameters=np.array(sweep.values, dtype=float),
        min_eigenvalue=min_eig,
        min_frequency=np.sqrt(np.clip(min_eig, 0.0, None)),
        band=band,
        converged=converged,
        transition=transition,
        transition_index=t_index,
    )
