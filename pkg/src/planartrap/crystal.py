"""N-ion equilibrium geometries in a 3D harmonic trap, and structure scans.

The solver works in dimensionless units (lengths in l with
l^3 = e^2/(4 pi eps0 m omega_ref^2), omega_ref = omega_x; energies in
m omega_ref^2 l^2) for conditioning, converting at the boundaries. Each
restart runs BFGS and is then polished with exact-Hessian Newton steps on the
gradient, which reaches machine-level force residuals; a damped
gradient-descent pass catches the rare BFGS stall far from the minimum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .constants import KCOUL
from .errors import CoincidentIons, InputError
from .trap import AXIS_NAMES, IonSpecies

FORCE_TOL = 1e-18  # N, max per-ion force at a converged equilibrium
PLANARITY_THRESHOLD = 1e-8  # m, extent below which an axis counts collapsed
DEFAULT_RESTARTS = 8
COINCIDENCE_GUARD = 1e-12  # m


@dataclass(frozen=True)
class HarmonicTrap:
    """Three secular frequencies (rad/s, all > 0) and the ion species."""

    omega_x: float
    omega_y: float
    omega_z: float
    species: IonSpecies

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be > 0 (crystals need 3D confinement)")

    @property
    def omega(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.omega_z])

    def with_omega(self, omega) -> "HarmonicTrap":
        ox, oy, oz = (float(v) for v in omega)
        return HarmonicTrap(ox, oy, oz, self.species)


def characteristic_length(species: IonSpecies, omega: float) -> float:
    """l with l^3 = q^2/(4 pi eps0 m omega^2): the Coulomb-vs-trap scale."""
    if omega <= 0:
        raise InputError("characteristic_length needs omega > 0")
    return (KCOUL * species.charge**2 / (species.mass * omega**2)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class CrystalConfigurationResult:
    """Equilibrium positions (N x 3, meters) with convergence metadata.

    ``gradient_norm`` is the max per-ion force magnitude in newtons;
    ``energy_trace`` lists the energy (joules) at the accepted minimizer
    iterations of the winning restart.
    """

    positions: np.ndarray
    energy: float
    gradient_norm: float
    converged: bool
    restarts_used: int
    seed: int
    energy_trace: tuple = ()

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        p.flags.writeable = False
        object.__setattr__(self, "positions", p)


# ---------------------------------------------------------------- scaled core


def _pair_distances(u: np.ndarray) -> np.ndarray:
    diff = u[:, None, :] - u[None, :, :]
    r = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(r, np.inf)
    return r


def _energy_scaled(u: np.ndarray, w2: np.ndarray) -> float:
    r = _pair_distances(u)
    coulomb = 0.5 * (1.0 / r).sum()
    return 0.5 * float((w2 * u**2).sum()) + float(coulomb)


def _gradient_scaled(u: np.ndarray, w2: np.ndarray) -> np.ndarray:
    diff = u[:, None, :] - u[None, :, :]
    r = _pair_distances(u)
    inv3 = r**-3
    g = w2 * u - (diff * inv3[:, :, None]).sum(axis=1)
    return g


def _hessian_scaled(u: np.ndarray, w2: np.ndarray) -> np.ndarray:
    n, d = u.shape
    diff = u[:, None, :] - u[None, :, :]
    r = _pair_distances(u)
    inv3 = r**-3
    inv5 = r**-5
    # blocks[i, j] = (3 s s^T - r^2 I)/r^5 with s = u_i - u_j; zero at i == j
    blocks = 3.0 * diff[:, :, :, None] * diff[:, :, None, :] * inv5[:, :, None, None]
    blocks -= np.eye(d) * inv3[:, :, None, None]
    idx = np.arange(n)
    h = np.zeros((n, d, n, d))
    h[idx, :, idx, :] = np.diag(w2) + blocks.sum(axis=1)
    h -= blocks.transpose(0, 2, 1, 3)
    return h.reshape(n * d, n * d)


def _max_ion_force(g: np.ndarray) -> float:
    return float(np.sqrt((g**2).sum(axis=1)).max())


def _newton_polish(u, w2, max_steps=40):
    """Newton iterations on the gradient; accepts only force-norm decreases."""
    n, d = u.shape
    g = _gradient_scaled(u, w2)
    gn = _max_ion_force(g)
    energies = []
    for _ in range(max_steps):
        if gn == 0.0:
            break
        h = _hessian_scaled(u, w2)
        try:
            step = np.linalg.solve(h, -g.ravel()).reshape(n, d)
        except np.linalg.LinAlgError:
            step = -g
        accepted = False
        t = 1.0
        for _ in range(25):
            trial = u + t * step
            gt = _gradient_scaled(trial, w2)
            gtn = _max_ion_force(gt)
            if gtn < gn:
                u, g, gn = trial, gt, gtn
                energies.append(_energy_scaled(u, w2))
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        if gn < 1e-15:
            break
    return u, gn, energies


def _descent_rescue(u, w2, max_steps=500):
    """Damped gradient descent with backtracking, for stalled line searches."""
    e = _energy_scaled(u, w2)
    step = 1e-2
    for _ in range(max_steps):
        g = _gradient_scaled(u, w2)
        gn = _max_ion_force(g)
        if gn < 1e-6:
            break
        accepted = False
        t = step
        for _ in range(30):
            trial = u - t * g
            et = _energy_scaled(trial, w2)
            if et < e:
                u, e = trial, et
                step = min(t * 2.0, 1.0)
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return u


def _minimize_one(u0: np.ndarray, w2: np.ndarray, max_iter: int):
    """One restart: BFGS, rescue if stalled, Newton polish.

    Returns (u, energy, max_ion_force, energy_trace) in scaled units.
    """
    n, d = u0.shape
    trace = [_energy_scaled(u0, w2)]

    def fun(x):
        return _energy_scaled(x.reshape(n, d), w2)

    def jac(x):
        return _gradient_scaled(x.reshape(n, d), w2).ravel()

    def record(xk):
        trace.append(fun(xk))

    res = minimize(
        fun,
        u0.ravel(),
        jac=jac,
        method="BFGS",
        callback=record,
        options={"gtol": 1e-10, "maxiter": max_iter},
    )
    u = res.x.reshape(n, d)
    if _max_ion_force(_gradient_scaled(u, w2)) > 1e-3:
        u = _descent_rescue(u, w2)
        res2 = minimize(
            fun,
            u.ravel(),
            jac=jac,
            method="BFGS",
            callback=record,
            options={"gtol": 1e-10, "maxiter": max_iter},
        )
        u = res2.x.reshape(n, d)
        trace.append(fun(res2.x))
    u, gn, polish_energies = _newton_polish(u, w2)
    trace.extend(polish_energies)
    return u, _energy_scaled(u, w2), gn, trace


# ------------------------------------------------------------------ SI surface


def _check_coincident(positions: np.ndarray):
    if len(positions) < 2:
        return
    r = _pair_distances(positions)
    dmin = float(r.min())
    if dmin <= COINCIDENCE_GUARD:
        raise CoincidentIons(f"minimum pair distance {dmin:.3e} m")


def potential_energy(positions, trap: HarmonicTrap) -> float:
    """U = sum_i (m/2)(wx^2 x^2 + wy^2 y^2 + wz^2 z^2) + pairwise Coulomb, J."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    _check_coincident(p)
    m = trap.species.mass
    harm = 0.5 * m * float((trap.omega**2 * p**2).sum())
    if len(p) > 1:
        r = _pair_distances(p)
        harm += 0.5 * KCOUL * trap.species.charge**2 * float((1.0 / r).sum())
    return harm


def potential_gradient(positions, trap: HarmonicTrap) -> np.ndarray:
    """Analytic gradient of potential_energy, N x 3 newtons."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    _check_coincident(p)
    m = trap.species.mass
    g = m * trap.omega**2 * p
    if len(p) > 1:
        diff = p[:, None, :] - p[None, :, :]
        r = _pair_distances(p)
        g -= KCOUL * trap.species.charge**2 * (diff * (r**-3)[:, :, None]).sum(axis=1)
    return g


def _draw_cloud(rng, n_ions, radius, d=3):
    for _ in range(100):
        u = rng.normal(scale=0.5 * radius, size=(n_ions, d))
        if n_ions < 2 or _pair_distances(u).min() > 1e-3 * radius:
            return u
    return u


def solve_equilibrium(
    trap: HarmonicTrap,
    n_ions: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    force_tol: float = FORCE_TOL,
    initial=None,
    workers: int = 1,
    max_iter: int = 4000,
) -> CrystalConfigurationResult:
    """Lowest-energy converged equilibrium across seeded random restarts.

    Deterministic for fixed (seed, restarts). Initial clouds have
    characteristic size l_min * N^(1/3) with l_min taken at the softest axis.
    When ``initial`` (N x 3, meters) is given it becomes restart 0 (warm
    start) and the remaining restarts stay random. Degenerate crystal
    orientations can differ between seeds; the global minimum is not
    guaranteed.

    Returns converged=False (never raises) when no restart meets force_tol;
    the best candidate is still returned.
    """
    if n_ions < 1:
        raise InputError("n_ions must be >= 1")
    if restarts < 1:
        raise InputError("restarts must be >= 1")
    m = trap.species.mass
    omega = trap.omega
    ell_ref = characteristic_length(trap.species, trap.omega_x)
    w2 = (omega / trap.omega_x) ** 2
    force_scale = m * trap.omega_x**2 * ell_ref
    energy_scale = m * trap.omega_x**2 * ell_ref**2

    rng = np.random.default_rng(seed)
    cloud = (
        characteristic_length(trap.species, omega.min())
        / ell_ref
        * n_ions ** (1.0 / 3.0)
    )
    starts = []
    if initial is not None:
        init = np.asarray(initial, dtype=float).reshape(n_ions, 3)
        starts.append(init / ell_ref)
    while len(starts) < restarts:
        starts.append(_draw_cloud(rng, n_ions, cloud))

    def run(u0):
        return _minimize_one(u0, w2, max_iter)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, starts))
    else:
        outcomes = [run(u0) for u0 in starts]

    tol_scaled = force_tol / force_scale
    best = None
    best_key = None
    for idx, (u, e, gn, trace) in enumerate(outcomes):
        ok = gn < tol_scaled
        key = (not ok, e, idx)  # converged first, then energy, then order
        if best_key is None or key < best_key:
            best, best_key = (u, e, gn, trace, ok), key

    u, e, gn, trace, ok = best
    return CrystalConfigurationResult(
        positions=u * ell_ref,
        energy=e * energy_scale,
        gradient_norm=gn * force_scale,
        converged=bool(ok),
        restarts_used=len(starts),
        seed=seed,
        energy_trace=tuple(t * energy_scale for t in trace),
    )


def planar_equilibrium(
    trap: HarmonicTrap,
    n_ions: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    force_tol: float = FORCE_TOL,
    initial=None,
    max_iter: int = 4000,
) -> CrystalConfigurationResult:
    """Equilibrium constrained to the x-z plane (y frozen at 0).

    Used by the soft-mode scan: past the 2D->3D transition the constrained
    configuration is a saddle of the full problem, and its transverse Hessian
    block carries the negative eigenvalue that signals the transition.
    """
    if n_ions < 1:
        raise InputError("n_ions must be >= 1")
    m = trap.species.mass
    ell_ref = characteristic_length(trap.species, trap.omega_x)
    w2 = np.array([1.0, (trap.omega_z / trap.omega_x) ** 2])
    force_scale = m * trap.omega_x**2 * ell_ref
    energy_scale = m * trap.omega_x**2 * ell_ref**2

    rng = np.random.default_rng(seed)
    in_plane = np.array([trap.omega_x, trap.omega_z])
    cloud = (
        characteristic_length(trap.species, in_plane.min())
        / ell_ref
        * n_ions ** (1.0 / 3.0)
    )
    starts = []
    if initial is not None:
        init = np.asarray(initial, dtype=float).reshape(n_ions, 3)
        starts.append(init[:, (0, 2)] / ell_ref)
    while len(starts) < restarts:
        starts.append(_draw_cloud(rng, n_ions, cloud, d=2))

    outcomes = [_minimize_one(u0, w2, max_iter) for u0 in starts]
    tol_scaled = force_tol / force_scale
    best = None
    best_key = None
    for idx, (u, e, gn, trace) in enumerate(outcomes):
        ok = gn < tol_scaled
        key = (not ok, e, idx)
        if best_key is None or key < best_key:
            best, best_key = (u, e, gn, trace, ok), key
    u, e, gn, trace, ok = best
    pos = np.zeros((n_ions, 3))
    pos[:, 0] = u[:, 0] * ell_ref
    pos[:, 2] = u[:, 1] * ell_ref
    return CrystalConfigurationResult(
        positions=pos,
        energy=e * energy_scale,
        gradient_norm=gn * force_scale,
        converged=bool(ok),
        restarts_used=len(starts),
        seed=seed,
        energy_trace=tuple(t * energy_scale for t in trace),
    )


# ------------------------------------------------------------- classification


def crystal_extent(positions) -> np.ndarray:
    """Per-axis max minus min coordinate, meters."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    return p.max(axis=0) - p.min(axis=0)


class DimensionClass(tuple):
    """(label, detail): label in {0D,1D,2D,3D}; detail names the plane/axis."""

    def __new__(cls, label: str, detail: str = ""):
        return super().__new__(cls, (label, detail))

    @property
    def label(self) -> str:
        return self[0]

    @property
    def detail(self) -> str:
        return self[1]

    def __str__(self) -> str:
        return f"{self.label}({self.detail})" if self.detail else self.label


def classify_dimension(
    positions, threshold: float = PLANARITY_THRESHOLD
) -> DimensionClass:
    """Collapse axes with extent < threshold; classify by how many remain."""
    if threshold <= 0:
        raise InputError("threshold must be > 0")
    extent = crystal_extent(positions)
    open_axes = [AXIS_NAMES[i] for i in range(3) if extent[i] >= threshold]
    n_open = len(open_axes)
    if n_open == 3:
        return DimensionClass("3D")
    if n_open == 2:
        return DimensionClass("2D", "".join(open_axes))
    if n_open == 1:
        return DimensionClass("1D", open_axes[0])
    return DimensionClass("0D")


def nearest_neighbor_distances(positions) -> np.ndarray:
    """Per-ion distance to its nearest neighbor, meters."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(p) < 2:
        return np.zeros(len(p))
    return _pair_distances(p).min(axis=1)


# --------------------------------------------------------------------- scans


@dataclass(frozen=True)
class ParameterSweep:
    """Monotone grid for scan_structure / soft_mode_scan.

    kind "omega_x": values are omega_x in rad/s; omega_z follows as
    z_to_x * omega_x when z_to_x is given, else stays at the template's.
    kind "v_rf": values are RF voltages; a TrapConfiguration template maps
    each voltage to secular frequencies.
    """

    kind: str
    values: np.ndarray
    z_to_x: float | None = None

    def __post_init__(self):
        if self.kind not in ("omega_x", "v_rf"):
            raise InputError(f"unknown sweep kind {self.kind!r}")
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise InputError("sweep needs at least 2 grid values")
        dv = np.diff(v)
        if not (np.all(dv > 0) or np.all(dv < 0)):
            raise InputError("sweep grid must be strictly monotone")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def trap_grid(template, sweep: ParameterSweep) -> list:
    """Materialize the HarmonicTrap at every grid value."""
    # import here: trap_model -> crystal stays one-way
    from .trap import TrapConfiguration, secular_frequencies

    traps = []
    if sweep.kind == "omega_x":
        if not isinstance(template, HarmonicTrap):
            raise InputError("omega_x sweeps need a HarmonicTrap template")
        for val in sweep.values:
            oz = sweep.z_to_x * val if sweep.z_to_x else template.omega_z
            traps.append(HarmonicTrap(val, template.omega_y, oz, template.species))
    else:
        if not isinstance(template, TrapConfiguration):
            raise InputError("v_rf sweeps need a TrapConfiguration template")
        for val in sweep.values:
            sec = secular_frequencies(template.with_rf_voltage(val))
            traps.append(
                HarmonicTrap(sec.omega_x, sec.omega_y, sec.omega_z, template.species)
            )
    return traps


@dataclass(frozen=True)
class StructureScanResult:
    """Per-grid-point crystal extents, energy, convergence, dimensionality.

    Rows follow the grid order of ``parameters``. ``transitions`` lists
    (index, label_before, label_after) for every dimensionality change
    between adjacent points; ``jumps`` lists indices whose extent changes
    discontinuously (first-order transition candidates). When a reverse-
    direction pass found different transition points, it is kept in
    ``reverse`` and ``hysteresis`` is set.
    """

    parameters: np.ndarray
    sizes: np.ndarray
    energies: np.ndarray
    converged: np.ndarray
    dimensions: tuple
    transitions: tuple
    jumps: tuple
    reverse: "StructureScanResult | None" = None
    hysteresis: bool = False

    def first_departure(self, axis: int = 1, threshold: float = PLANARITY_THRESHOLD):
        """Index of the first grid point whose extent on ``axis`` exceeds
        threshold, or None."""
        above = np.nonzero(self.sizes[:, axis] >= threshold)[0]
        return int(above[0]) if len(above) else None


def _scan_pass(
    traps, values, n_ions, seed, restarts, warm_start, force_tol, threshold
):
    sizes = np.zeros((len(traps), 3))
    energies = np.zeros(len(traps))
    converged = np.zeros(len(traps), dtype=bool)
    dims = []
    prev = None
    for i, trap in enumerate(traps):
        res = solve_equilibrium(
            trap,
            n_ions,
            seed=seed + i,
            restarts=restarts + (1 if (warm_start and prev is not None) else 0),
            force_tol=force_tol,
            initial=prev if warm_start else None,
        )
        prev = res.positions
        sizes[i] = crystal_extent(res.positions)
        energies[i] = res.energy
        converged[i] = res.converged
        dims.append(classify_dimension(res.positions, threshold))
    transitions = tuple(
        (i, dims[i].label, dims[i + 1].label)
        for i in range(len(dims) - 1)
        if dims[i].label != dims[i + 1].label
    )
    jumps = []
    for i in range(len(traps) - 1):
        ref = np.maximum(sizes[i], sizes[i + 1]).max()
        if ref > 0 and np.abs(sizes[i + 1] - sizes[i]).max() > 0.5 * ref:
            jumps.append(i)
    return StructureScanResult(
        parameters=np.array(values, dtype=float),
        sizes=sizes,
        energies=energies,
        converged=converged,
        dimensions=tuple(dims),
        transitions=transitions,
        jumps=tuple(jumps),
    )


def scan_structure(
    template,
    sweep: ParameterSweep,
    n_ions: int,
    seed: int = 0,
    restarts_per_point: int = 3,
    warm_start: bool = True,
    bidirectional: bool = True,
    force_tol: float = FORCE_TOL,
    threshold: float = PLANARITY_THRESHOLD,
) -> StructureScanResult:
    """Equilibrium structure along a parameter grid.

    Each point warm-starts from the previous solution plus fresh seeded
    restarts. With ``bidirectional`` the grid is also swept in reverse; the
    reverse pass is recorded (and ``hysteresis`` set) only when its
    dimensionality transitions land on different grid points. Per-point
    non-convergence is recorded, never raised.
    """
    traps = trap_grid(template, sweep)
    forward = _scan_pass(
        traps, sweep.values, n_ions, seed, restarts_per_point, warm_start, force_tol, threshold
    )
    if not bidirectional:
        return forward
    rev = _scan_pass(
        traps[::-1],
        sweep.values[::-1],
        n_ions,
        seed,
        restarts_per_point,
        warm_start,
        force_tol,
        threshold,
    )
    # re-expressed in forward grid order
    n = len(sweep.values)
    rev_fwd = StructureScanResult(
        parameters=rev.parameters[::-1].copy(),
        sizes=rev.sizes[::-1].copy(),
        energies=rev.energies[::-1].copy(),
        converged=rev.converged[::-1].copy(),
        dimensions=tuple(reversed(rev.dimensions)),
        transitions=tuple(
            (n - 2 - i, after, before) for i, before, after in reversed(rev.transitions)
        ),
        jumps=tuple(sorted(n - 2 - i for i in rev.jumps)),
    )
    differs = {t[0] for t in forward.transitions} != {t[0] for t in rev_fwd.transitions}
    if differs:
        return StructureScanResult(
            parameters=forward.parameters,
            sizes=forward.sizes,
            energies=forward.energies,
            converged=forward.converged,
            dimensions=forward.dimensions,
            transitions=forward.transitions,
            jumps=forward.jumps,
            reverse=rev_fwd,
            hysteresis=True,
        )
    return forward
