"""Raman sideband spectra, Rabi flopping, and micromotion observables.

Spectra are synthesized in the time domain: for each detuning, every
transition channel (carrier, first red and blue sideband of every mode)
evolves as an independent two-level system for the probe duration, averaged
over a thermal Fock distribution, and the channels are combined as
1 - prod(1 - P_c). The product form keeps the result a probability for any
channel set; it agrees with the plain sum to first order in the individual
excitations. Second-order sidebands and cross-mode processes are omitted
(Lamb-Dicke regime; a warning fires when eta * sqrt(nbar + 1) >= 0.3).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.special import j0, j1

from .constants import HBAR, YB171_QUBIT_SPLITTING
from .errors import CutoffTooLow, FitDiverged, InputError, LambDickeValidity
from .modes import ModeSpectrum
from .trap import IonSpecies, TrapConfiguration, rf_field_at

THERMAL_TAIL_LIMIT = 1e-6  # truncated probability mass allowed in averages
LAMB_DICKE_LIMIT = 0.3  # eta*sqrt(nbar+1) above this voids the expansion
FIT_RESIDUAL_LIMIT = 0.05  # of signal range; worse fits count as diverged


@dataclass(frozen=True)
class RamanProbe:
    """Two-photon probe: net wavevector, carrier Rabi rate, pulse length.

    carrier_rabi may be a scalar (uniform illumination) or one rate per ion.
    The qubit splitting is carried for documentation and unit conversions;
    detunings in this module are already relative to the carrier.
    """

    delta_k: np.ndarray
    carrier_rabi: float | np.ndarray
    probe_duration: float
    qubit_splitting: float = YB171_QUBIT_SPLITTING

    def __post_init__(self):
        dk = np.array(self.delta_k, dtype=float)
        if dk.shape != (3,) or not np.linalg.norm(dk) > 0:
            raise InputError("delta_k must be a nonzero 3-vector (rad/m)")
        if self.probe_duration <= 0:
            raise InputError("probe_duration must be > 0")
        rabi = np.atleast_1d(np.array(self.carrier_rabi, dtype=float))
        if np.any(rabi < 0):
            raise InputError("carrier_rabi must be >= 0")
        dk.flags.writeable = False
        object.__setattr__(self, "delta_k", dk)

    def rabi_for(self, n_ions: int) -> np.ndarray:
        rabi = np.atleast_1d(np.array(self.carrier_rabi, dtype=float))
        if len(rabi) == 1:
            return np.full(n_ions, rabi[0])
        if len(rabi) != n_ions:
            raise InputError(
                f"carrier_rabi has {len(rabi)} entries for {n_ions} ions"
            )
        return rabi


@dataclass(frozen=True)
class ThermalState:
    """Thermal phonon occupation, identical nbar for every mode.

    The Fock-space cutoff must clear 10*nbar + 20; with the default
    (fock_cutoff=None) it is chosen so the truncated tail also stays below
    THERMAL_TAIL_LIMIT.
    """

    nbar: float
    fock_cutoff: int | None = None

    def __post_init__(self):
        if self.nbar < 0:
            raise InputError("nbar must be >= 0")
        cutoff = self.fock_cutoff
        if cutoff is None:
            cutoff = int(math.ceil(10.0 * self.nbar + 20.0)) + 1
            while self._tail(cutoff) > THERMAL_TAIL_LIMIT:
                cutoff *= 2
        elif cutoff <= 10.0 * self.nbar + 20.0:
            raise InputError(
                f"fock_cutoff {cutoff} too small: must exceed 10*nbar + 20 "
                f"= {10.0 * self.nbar + 20.0:.1f}"
            )
        object.__setattr__(self, "fock_cutoff", int(cutoff))

    def _tail(self, cutoff: int) -> float:
        if self.nbar == 0:
            return 0.0
        ratio = self.nbar / (self.nbar + 1.0)
        return ratio ** (cutoff + 1)

    @property
    def tail_mass(self) -> float:
        """Probability mass beyond the cutoff: (nbar/(nbar+1))^(cutoff+1)."""
        return self._tail(self.fock_cutoff)

    def populations(self) -> np.ndarray:
        n = np.arange(self.fock_cutoff + 1)
        if self.nbar == 0:
            p = np.zeros(len(n))
            p[0] = 1.0
            return p
        ratio = self.nbar / (self.nbar + 1.0)
        return ratio**n / (self.nbar + 1.0)


@dataclass(frozen=True)
class SpectrumCurve:
    """Excitation probability vs detuning from the carrier."""

    detunings: np.ndarray
    excitation: np.ndarray

    def __post_init__(self):
        d = np.array(self.detunings, dtype=float)
        e = np.array(self.excitation, dtype=float)
        if d.shape != e.shape:
            raise InputError("detunings and excitation must have equal shape")
        if np.any(e < -1e-12) or np.any(e > 1.0 + 1e-12):
            raise InputError("excitation outside [0, 1]")
        d.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "excitation", e)


def lamb_dicke(
    delta_k, eigenvector, frequency: float, ion_index: int, species: IonSpecies
) -> float:
    """eta_{i,m} = (delta_k . b_{i,m}) sqrt(hbar / (2 m omega_m)).

    b_{i,m} is ion i's 3-component slice of the (mass-weighted, unit-norm)
    mode eigenvector, so a COM mode of N ions gives the single-ion eta over
    sqrt(N).
    """
    if frequency <= 0:
        raise InputError("mode frequency must be > 0 for a Lamb-Dicke factor")
    dk = np.asarray(delta_k, dtype=float)
    vec = np.asarray(eigenvector, dtype=float).ravel()
    b = vec[3 * ion_index : 3 * ion_index + 3]
    if b.shape != (3,):
        raise InputError(f"ion_index {ion_index} outside eigenvector of {len(vec)//3}")
    return float(dk @ b) * math.sqrt(HBAR / (2.0 * species.mass * frequency))


def lamb_dicke_matrix(
    delta_k, modes: ModeSpectrum, species: IonSpecies
) -> np.ndarray:
    """(n_ions, n_modes) matrix of eta factors; soft modes raise InputError."""
    if np.any(modes.soft):
        raise InputError("mode spectrum contains unstable modes")
    n_ions = modes.eigenvectors.shape[0] // 3
    out = np.zeros((n_ions, modes.n_modes))
    for m in range(modes.n_modes):
        for i in range(n_ions):
            out[i, m] = lamb_dicke(
                delta_k, modes.eigenvectors[:, m], modes.frequencies[m], i, species
            )
    return out


def _channel_probability(rabi_n, populations, offset, detunings, duration):
    """Thermal average of generalized Rabi excitation for one channel.

    rabi_n: per-Fock-level Rabi rate (same length as populations); offset:
    the channel's resonance detuning.
    """
    delta = detunings - offset
    x = rabi_n[:, None] ** 2 + delta[None, :] ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(x > 0, rabi_n[:, None] ** 2 / np.where(x > 0, x, 1.0), 0.0)
    p_n = frac * np.sin(0.5 * np.sqrt(x) * duration) ** 2
    return populations @ p_n


def simulate_spectrum(
    probe: RamanProbe,
    modes: ModeSpectrum,
    thermal: ThermalState,
    detunings,
) -> SpectrumCurve:
    """Sideband spectrum over a detuning grid, averaged over the crystal.

    Channels per ion: the carrier at zero detuning, and for every mode a red
    sideband at -omega_m with rate Omega*eta*sqrt(n) and a blue sideband at
    +omega_m with rate Omega*eta*sqrt(n+1). Per-ion channel excitations are
    combined as 1 - prod(1 - P) and the ions averaged with equal weight.
    """
    det = np.asarray(detunings, dtype=float).ravel()
    if np.any(modes.soft):
        raise InputError("spectrum of an unstable configuration is undefined")
    if thermal.tail_mass > THERMAL_TAIL_LIMIT:
        raise CutoffTooLow(
            f"thermal tail beyond fock_cutoff={thermal.fock_cutoff} holds "
            f"{thermal.tail_mass:.2e} probability (> {THERMAL_TAIL_LIMIT})"
        )
    n_ions = modes.eigenvectors.shape[0] // 3
    eta = lamb_dicke_matrix(probe.delta_k, modes, modes.trap.species)
    worst = float(np.abs(eta).max()) * math.sqrt(thermal.nbar + 1.0)
    if worst >= LAMB_DICKE_LIMIT:
        warnings.warn(
            f"max eta*sqrt(nbar+1) = {worst:.3f} >= {LAMB_DICKE_LIMIT}; "
            "first-order sideband model is marginal",
            LambDickeValidity,
        )
    pops = thermal.populations()
    n = np.arange(thermal.fock_cutoff + 1, dtype=float)
    rabi = probe.rabi_for(n_ions)
    t = probe.probe_duration
    total = np.zeros(len(det))
    for i in range(n_ions):
        survival = np.ones(len(det))
        carrier = _channel_probability(
            np.full(1, rabi[i]), np.ones(1), 0.0, det, t
        )
        survival *= 1.0 - carrier
        for m in range(modes.n_modes):
            base = rabi[i] * abs(eta[i, m])
            red = _channel_probability(
                base * np.sqrt(n), pops, -modes.frequencies[m], det, t
            )
            blue = _channel_probability(
                base * np.sqrt(n + 1.0), pops, +modes.frequencies[m], det, t
            )
            survival *= (1.0 - red) * (1.0 - blue)
        total += 1.0 - survival
    return SpectrumCurve(detunings=det, excitation=total / n_ions)


def rabi_signal(rabi_rates, times, weights=None) -> np.ndarray:
    """Summed flopping signal S(t) = sum_i w_i sin^2(Omega_i t / 2).

    Weights default to 1 per ion (photon-count sum over the crystal); no
    decay model.
    """
    rates = np.atleast_1d(np.asarray(rabi_rates, dtype=float))
    if np.any(rates < 0):
        raise InputError("rabi rates must be >= 0")
    t = np.asarray(times, dtype=float)
    if weights is None:
        w = np.ones(len(rates))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != rates.shape:
            raise InputError("weights must match rabi_rates in length")
    return (w[:, None] * np.sin(0.5 * rates[:, None] * t[None, :]) ** 2).sum(axis=0)


def _fft_guesses(t, s, n_components) -> np.ndarray:
    dt = float(t[1] - t[0])
    pad = max(len(t), 8 * len(t))
    spec = np.abs(np.fft.rfft(s - s.mean(), n=pad))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(pad, d=dt)
    df = freqs[1] - freqs[0]
    order = np.argsort(spec[1:])[::-1] + 1  # skip DC
    picks = []
    for idx in order:
        w = freqs[idx]
        if all(abs(w - p) > 4.0 * df for p in picks):
            picks.append(w)
        if len(picks) == n_components:
            break
    while len(picks) < n_components:
        picks.append((picks[-1] if picks else freqs[1]) * 1.05)
    return np.array(picks)


def _rate_guesses(times, signal, n_components) -> np.ndarray:
    """Initial rates for the cosine frequencies hiding in the signal.

    S(t) = n/2 - (1/2) sum cos(Omega t) on noise-free data. On a uniform
    grid, a sum of n cosines plus DC obeys a linear recurrence whose
    characteristic roots are exp(+-i Omega dt) and 1 (Prony), which
    separates rates far closer than the FFT resolution limit; the FFT peak
    picker is the fallback for short or non-uniform grids and for data the
    recurrence fit cannot explain.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    dt = np.diff(t)
    if len(t) < 4:
        span = t[-1] - t[0]
        return 2.0 * math.pi / span * np.arange(1, n_components + 1)
    if not np.allclose(dt, dt[0], rtol=1e-6):
        span = t[-1] - t[0]
        base = 2.0 * math.pi / span
        return base * np.arange(1, n_components + 1) * len(t) / (2.0 * n_components)
    order = 2 * n_components + 1  # +-Omega pairs plus the DC root
    if len(s) >= 2 * order + 2:
        rows = len(s) - order
        hank = np.stack([s[i : i + order] for i in range(rows)])
        rhs = s[order : order + rows]
        coef, *_ = np.linalg.lstsq(hank, rhs, rcond=None)
        poly = np.concatenate([[1.0], -coef[::-1]])
        roots = np.roots(poly)
        near_unit = roots[np.abs(np.abs(roots) - 1.0) < 0.05]
        angles = np.sort(np.angle(near_unit))
        angles = angles[angles > 1e-6]
        rates = angles / float(dt[0])
        if len(rates) >= n_components:
            return rates[:n_components]
    return _fft_guesses(t, s, n_components)


def fit_rabi(times, signal, n_components: int, guesses=None) -> np.ndarray:
    """Recover component Rabi rates from a summed flopping signal.

    Nonlinear least squares with all amplitudes fixed at 1 (the equal-weight
    photon-sum model); rates returned sorted ascending. Deterministic for
    given guesses; without guesses the starting point comes from the
    signal's discrete spectrum. FitDiverged carries the RMS residual when
    the optimizer fails or the relative residual exceeds 5% of the signal
    range.
    """
    if n_components < 1:
        raise InputError("n_components must be >= 1")
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    if len(t) != len(s):
        raise InputError("times and signal must have equal length")
    if len(t) < 4 * n_components:
        raise InputError(
            f"signal of {len(t)} samples cannot constrain {n_components} rates"
        )
    if guesses is not None:
        starts = [np.abs(np.asarray(guesses, dtype=float))]
        if len(starts[0]) != n_components:
            raise InputError(f"need {n_components} guesses, got {len(starts[0])}")
    else:
        starts = [_rate_guesses(t, s, n_components)]
        fallback = _fft_guesses(t, s, n_components)
        if not np.allclose(fallback, starts[0]):
            starts.append(fallback)

    def resid(rates):
        return rabi_signal(np.abs(rates), t) - s

    span = float(s.max() - s.min())
    rms = math.inf
    for x0 in starts:
        out = least_squares(resid, x0, method="lm", max_nfev=20000)
        rms = float(np.sqrt(np.mean(out.fun**2)))
        if out.success and (span == 0 or rms <= FIT_RESIDUAL_LIMIT * span):
            return np.sort(np.abs(out.x))
    raise FitDiverged(
        f"rabi fit residual rms {rms:.3e} over signal range {span:.3e}",
        residual_rms=rms,
    )


def modulation_index(config: TrapConfiguration, position, delta_k) -> float:
    """beta = delta_k . u with u = e E_rf(position) / (m Omega_rf^2).

    u is the driven micromotion amplitude in the quadratic field model;
    beta is signed (the sideband/carrier ratio uses |beta|). Linear in the
    displacement from the RF null.
    """
    e_field = rf_field_at(config, position)
    u = (
        abs(config.species.charge)
        * e_field
        / (config.species.mass * config.rf_drive.omega_rf**2)
    )
    return float(np.asarray(delta_k, dtype=float) @ u)


def crystal_modulation_indices(
    config: TrapConfiguration, positions, delta_k
) -> np.ndarray:
    """Per-ion beta at each equilibrium position (report max/min downstream)."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    return np.array([modulation_index(config, row, delta_k) for row in p])


def sideband_ratio(beta: float) -> float:
    """Micromotion-sideband to carrier Rabi ratio J1(beta)/J0(beta).

    Approximately beta/2 for small beta (within 1% up to beta = 0.2).
    """
    denom = j0(beta)
    if abs(denom) < 1e-12:
        raise InputError(f"carrier Bessel zero at beta = {beta}")
    return float(j1(beta) / denom)


def axis_misalignment_bound(
    residual_peak_ratio: float, omega_y: float, omega_z: float
) -> float:
    """Upper bound (degrees) on principal-axis tilt from a residual z-peak.

    With the probe along y, a tilt theta couples the z mode as eta_z^2
    proportional to sin^2(theta)/omega_z against eta_y^2 proportional to
    cos^2(theta)/omega_y, so ratio = tan^2(theta) * omega_y/omega_z and
    theta <= arcsin(sqrt(ratio * omega_z / omega_y)). A bound, not an
    estimate: equality only as cos(theta) -> 1.
    """
    if not 0.0 <= residual_peak_ratio <= 1.0:
        raise InputError("residual_peak_ratio must be in [0, 1]")
    if omega_y <= 0 or omega_z <= 0:
        raise InputError("frequencies must be > 0")
    arg = residual_peak_ratio * omega_z / omega_y
    if arg > 1.0:
        arg = 1.0
    return math.degrees(math.asin(math.sqrt(arg)))
