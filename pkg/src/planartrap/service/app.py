"""Task endpoints. Each wraps one toolkit workflow; all computation happens
here so clients stay thin. Domain errors map to 422 with a typed payload;
non-convergence is not an error (the result travels back flagged and the
client decides the exit code)."""

from __future__ import annotations

import json
import warnings

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..calibration import (
    correct_configuration,
    fit_eta,
    radial_eta_pair,
    records_from_rows,
)
from ..constants import (
    REFERENCE_MODULATION_RANGE,
    TWO_PI,
    YB171_MASS_AMU,
    mhz_to_rad,
    rad_to_mhz,
)
from ..crystal import (
    FORCE_TOL,
    HarmonicTrap,
    ParameterSweep,
    classify_dimension,
    crystal_extent,
    planar_equilibrium,
    scan_structure,
    solve_equilibrium,
)
from ..errors import (
    DegenerateAxes,
    FitDiverged,
    InputError,
    LambDickeValidity,
    NotPlanar,
    PlanartrapError,
    UnstableAxis,
)
from ..modes import mode_spectrum, soft_mode_scan, transverse_band
from ..spectroscopy import (
    RamanProbe,
    ThermalState,
    crystal_modulation_indices,
    sideband_ratio,
    simulate_spectrum,
)
from ..trap import (
    IonSpecies,
    axis_rotation_angle,
    rf_null,
    secular_frequencies,
)
from ..trapfile import (
    parse_calibration_csv,
    parse_geometry_csv,
    parse_probe_toml,
    parse_scan_toml,
    parse_trap_toml,
    render_freqs_sweep_csv,
    render_geometry_csv,
    render_geometry_json,
    render_modes_csv,
    render_scan_csv,
    render_soft_mode_csv,
    render_trap_toml,
    _csv_text,
)
from . import schemas


def _fail(exc: PlanartrapError):
    raise HTTPException(
        status_code=422,
        detail={"error": type(exc).__name__, "detail": str(exc)},
    )


def _kv(name, value) -> str:
    if isinstance(value, bool):
        return f"{name} = {'true' if value else 'false'}"
    if isinstance(value, (float, np.floating)):
        return f"{name} = {float(value)!r}"
    return f"{name} = {value}"


def _config_from(req: schemas.FreqsRequest | schemas.TrapSource):
    config = parse_trap_toml(req.trap_toml, source="trap")
    if req.dc_overrides:
        config = config.with_voltages(req.dc_overrides)
    if req.v_rf is not None:
        config = config.with_rf_voltage(req.v_rf)
    return config


def _trap_from_source(source: schemas.TrapSource) -> HarmonicTrap:
    if source.trap_toml is not None:
        config = _config_from(source)
        sec = secular_frequencies(config)
        return HarmonicTrap(sec.omega_x, sec.omega_y, sec.omega_z, config.species)
    if source.freqs_mhz is None:
        raise InputError("source needs either trap_toml or freqs_mhz")
    if len(source.freqs_mhz) != 3:
        raise InputError("freqs_mhz must list three values (x, y, z)")
    mass = source.mass_amu if source.mass_amu else YB171_MASS_AMU
    ox, oy, oz = (mhz_to_rad(f) for f in source.freqs_mhz)
    return HarmonicTrap(ox, oy, oz, IonSpecies.from_amu(mass))


def _positions_for(source, geometry_csv, n_ions, seed, workers, planar=False):
    trap = _trap_from_source(source)
    if geometry_csv is not None:
        return trap, parse_geometry_csv(geometry_csv, source="geometry"), None
    if n_ions is None:
        raise InputError("give either geometry_csv or n_ions")
    solver = planar_equilibrium if planar else solve_equilibrium
    kwargs = {} if planar else {"workers": workers}
    res = solver(trap, n_ions, seed=seed, **kwargs)
    return trap, res.positions, res


def create_app() -> FastAPI:
    app = FastAPI(title="planartrap service", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/version")
    def version():
        return {"version": __version__, "trap_schema": 1}

    @app.post("/run/freqs", response_model=schemas.FreqsResponse)
    def run_freqs(req: schemas.FreqsRequest):
        try:
            config = _config_from(req)
            sec = secular_frequencies(config, allow_unstable=req.allow_unstable)
            try:
                angle = axis_rotation_angle(config)
            except DegenerateAxes:
                angle = None
            lines = []
            for name, w in zip(("x", "y", "z"), sec.omega):
                lines.append(_kv(f"omega_{name}_MHz", rad_to_mhz(w)))
            for name, q in zip(("x", "y", "z"), sec.q):
                lines.append(_kv(f"q_{name}", float(q)))
            lines.append(
                _kv(
                    "rotation_angle_deg",
                    float(angle) if angle is not None else "degenerate",
                )
            )
            lines.append(_kv("stable", not sec.unstable))
            sweep_csv = None
            if req.sweep is not None:
                volts = np.linspace(
                    req.sweep.start_volts, req.sweep.stop_volts, req.sweep.points
                )
                table = []
                for v in volts:
                    s = secular_frequencies(
                        config.with_rf_voltage(float(v)),
                        allow_unstable=req.allow_unstable,
                    )
                    table.append(s.omega)
                sweep_csv = render_freqs_sweep_csv(volts, table)
            return schemas.FreqsResponse(
                frequencies_mhz=[rad_to_mhz(w) for w in sec.omega],
                q=[float(v) for v in sec.q],
                rotation_angle_deg=angle,
                principal_axes=[[float(v) for v in row] for row in sec.principal_axes],
                unstable=bool(sec.unstable),
                report_text="\n".join(lines) + "\n",
                sweep_csv=sweep_csv,
            )
        except PlanartrapError as exc:
            _fail(exc)

    @app.post("/run/equilibrium", response_model=schemas.EquilibriumResponse)
    def run_equilibrium(req: schemas.EquilibriumRequest):
        try:
            trap = _trap_from_source(req.source)
            force_tol = req.force_tol if req.force_tol else FORCE_TOL
            solver = planar_equilibrium if req.planar else solve_equilibrium
            kwargs = dict(
                seed=req.seed, restarts=req.restarts, force_tol=force_tol
            )
            if not req.planar:
                kwargs["workers"] = req.workers
            res = solver(trap, req.n_ions, **kwargs)
            dim = classify_dimension(res.positions)
            extent = crystal_extent(res.positions)
            lines = [
                _kv("n_ions", req.n_ions),
                _kv("converged", res.converged),
                _kv("dimensionality", str(dim)),
                _kv("energy_joules", float(res.energy)),
                _kv("max_force_newtons", float(res.gradient_norm)),
            ]
            for name, s in zip(("x", "y", "z"), extent):
                lines.append(_kv(f"size_{name}_um", float(s) * 1e6))
            return schemas.EquilibriumResponse(
                converged=bool(res.converged),
                energy_joules=float(res.energy),
                max_force_newtons=float(res.gradient_norm),
                dimensionality=str(dim),
                frequencies_mhz=[rad_to_mhz(w) for w in trap.omega],
                positions_um=[
                    [float(v) for v in row] for row in res.positions * 1e6
                ],
                geometry_csv=render_geometry_csv(res.positions),
                geometry_json=render_geometry_json(res, trap, dim),
                summary_text="\n".join(lines) + "\n",
            )
        except PlanartrapError as exc:
            _fail(exc)

    @app.post("/run/modes", response_model=schemas.ModesResponse)
    def run_modes(req: schemas.ModesRequest):
        try:
            trap, positions, res = _positions_for(
                req.source, req.geometry_csv, req.n_ions, req.seed, req.workers
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                spec = mode_spectrum(positions, trap)
            try:
                band = transverse_band(positions, trap)
                band_out = [float(rad_to_mhz(w)) for w in band]
            except NotPlanar:
                band_out = None
            lines = [
                _kv("n_modes", spec.n_modes),
                _kv("soft_modes", int(spec.soft.sum())),
                _kv(
                    "transverse_band_MHz",
                    " ".join(repr(v) for v in band_out)
                    if band_out is not None
                    else "not planar",
                ),
            ]
            if res is not None and not res.converged:
                lines.append(_kv("equilibrium_converged", False))
            return schemas.ModesResponse(
                frequencies_mhz=[rad_to_mhz(w) for w in spec.frequencies],
                soft=[bool(s) for s in spec.soft],
                participation=[
                    [float(v) for v in row] for row in spec.participation
                ],
                transverse_band_mhz=band_out,
                modes_csv=render_modes_csv(spec),
                summary_text="\n".join(lines) + "\n",
            )
        except PlanartrapError as exc:
            _fail(exc)

    @app.post("/run/scan", response_model=schemas.ScanResponse)
    def run_scan(req: schemas.ScanRequest):
        try:
            spec = parse_scan_toml(req.scan_toml, source="scan")
            if spec.kind == "omega_x":
                mass = req.mass_amu if req.mass_amu else YB171_MASS_AMU
                species = IonSpecies.from_amu(mass)
                omega_y = mhz_to_rad(spec.omega_y_mhz)
                start = mhz_to_rad(spec.start)
                template = HarmonicTrap(
                    start, omega_y, spec.z_to_x * start, species
                )
                sweep = ParameterSweep(
                    "omega_x", spec.values, z_to_x=spec.z_to_x
                )
            else:
                if req.trap_toml is None:
                    raise InputError(
                        "v_rf scans need the trap file named by the spec"
                    )
                template = parse_trap_toml(req.trap_toml, source="trap")
                sweep = ParameterSweep("v_rf", spec.values)
            soft_csv = None
            scan = scan_structure(template, sweep, spec.n_ions, seed=spec.seed)
            if spec.soft_modes:
                soft = soft_mode_scan(template, sweep, spec.n_ions, seed=spec.seed)
                soft_csv = render_soft_mode_csv(soft)
            transitions = [
                [str(i), before, after] for i, before, after in scan.transitions
            ]
            lines = [
                _kv("points", len(scan.parameters)),
                _kv("transitions", len(transitions)),
                _kv("hysteresis", scan.hysteresis),
                _kv("all_converged", bool(scan.converged.all())),
            ]
            return schemas.ScanResponse(
                scan_csv=render_scan_csv(scan, spec.kind),
                soft_csv=soft_csv,
                transitions=transitions,
                hysteresis=bool(scan.hysteresis),
                all_converged=bool(scan.converged.all()),
                summary_text="\n".join(lines) + "\n",
            )
        except PlanartrapError as exc:
            _fail(exc)

    @app.post("/run/calibrate", response_model=schemas.CalibrateResponse)
    def run_calibrate(req: schemas.CalibrateRequest):
        try:
            template = parse_trap_toml(req.trap_toml, source="trap")
            rows = parse_calibration_csv(req.calibration_csv, source="records")
            groups = sorted({r["electrode_group"] for r in rows})
            etas = {}
            report = {}
            for group in groups:
                by_axis = {
                    axis: [r for r in rows if r["electrode_group"] == group and r["axis"] == axis]
                    for axis in ("x", "y", "z")
                }
                entry = {}
                fits = {}
                if by_axis["x"]:
                    fit = fit_eta(records_from_rows(by_axis["x"], template), template)
                    entry["axial"] = fit.eta
                    fits["x"] = fit
                else:
                    entry["axial"] = 1.0
                has_y, has_z = bool(by_axis["y"]), bool(by_axis["z"])
                if has_y != has_z:
                    raise InputError(
                        f"group {group!r}: radial calibration needs both y and z "
                        "records"
                    )
                if has_y:
                    pair = radial_eta_pair(
                        records_from_rows(by_axis["y"], template),
                        records_from_rows(by_axis["z"], template),
                        template,
                    )
                    entry["radial_y"] = pair.eta_y
                    entry["radial_z"] = pair.eta_z
                    entry["radial_avg"] = pair.eta_avg
                else:
                    entry["radial_avg"] = 1.0
                etas[group] = entry
                report[group] = {
                    axis: {
                        "eta": fit.eta,
                        "intercept": fit.intercept,
                        "r_squared": fit.r_squared,
                        "n_points": fit.n_points,
                        "residuals": list(fit.residuals),
                    }
                    for axis, fit in fits.items()
                }
                if has_y:
                    for axis, recs in (("y", by_axis["y"]), ("z", by_axis["z"])):
                        fit = fit_eta(records_from_rows(recs, template), template)
                        report[group][axis] = {
                            "eta": fit.eta,
                            "intercept": fit.intercept,
                            "r_squared": fit.r_squared,
                            "n_points": fit.n_points,
                            "residuals": list(fit.residuals),
                        }
            corrected = correct_configuration(
                template,
                {g: (e["axial"], e["radial_avg"]) for g, e in etas.items()},
            )
            corrected_toml = render_trap_toml(
                corrected,
                "calibrated trap",
                "Bases scaled by fitted eta coefficients; Laplace re-projected.",
            )
            report_json = json.dumps(
                {"etas": etas, "fits": report}, indent=2, sort_keys=True
            ) + "\n"
            lines = []
            for group in groups:
                e = etas[group]
                lines.append(
                    f"{group}: eta_axial = {e['axial']!r}, "
                    f"eta_radial_avg = {e['radial_avg']!r}"
                )
            return schemas.CalibrateResponse(
                etas=etas,
                report_json=report_json,
                corrected_trap_toml=corrected_toml,
                summary_text="\n".join(lines) + "\n",
            )
        except PlanartrapError as exc:
            _fail(exc)

    @app.post("/run/spectrum", response_model=schemas.SpectrumResponse)
    def run_spectrum(req: schemas.SpectrumRequest):
        try:
            probe_spec = parse_probe_toml(req.probe_toml, source="probe")
            trap, positions, _res = _positions_for(
                req.source, req.geometry_csv, req.n_ions, req.seed, req.workers
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                spec = mode_spectrum(positions, trap)
            probe = RamanProbe(
                delta_k=probe_spec.delta_k,
                carrier_rabi=TWO_PI * 1e3 * probe_spec.rabi_khz,
                probe_duration=probe_spec.duration_us * 1e-6,
            )
            thermal = ThermalState(
                nbar=probe_spec.nbar, fock_cutoff=probe_spec.fock_cutoff
            )
            detunings = mhz_to_rad(
                np.linspace(
                    probe_spec.detuning_start_mhz,
                    probe_spec.detuning_stop_mhz,
                    probe_spec.points,
                )
            )
            notes = []
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                curve = simulate_spectrum(probe, spec, thermal, detunings)
            for w in caught:
                if issubclass(w.category, LambDickeValidity):
                    notes.append(_kv("lamb_dicke_warning", str(w.message)))
            peaks = _local_peaks(curve.detunings, curve.excitation)
            lines = [
                _kv("points", len(curve.detunings)),
                _kv("max_excitation", float(curve.excitation.max())),
                _kv("peaks_MHz", " ".join(repr(p) for p in peaks)),
            ] + notes
            csv_text = _csv_text(
                ["detuning_MHz", "excitation"],
                [
                    [rad_to_mhz(d), float(e)]
                    for d, e in zip(curve.detunings, curve.excitation)
                ],
            )
            return schemas.SpectrumResponse(
                spectrum_csv=csv_text,
                peak_mhz=peaks,
                summary_text="\n".join(lines) + "\n",
            )
        except PlanartrapError as exc:
            _fail(exc)

    @app.post("/run/micromotion", response_model=schemas.MicromotionResponse)
    def run_micromotion(req: schemas.MicromotionRequest):
        try:
            config = parse_trap_toml(req.trap_toml, source="trap")
            if len(req.delta_k) != 3:
                raise InputError("delta_k must list three components (rad/m)")
            if req.geometry_csv is not None:
                positions = parse_geometry_csv(req.geometry_csv, source="geometry")
            else:
                positions = rf_null(config).reshape(1, 3)
            betas = crystal_modulation_indices(config, positions, req.delta_k)
            ratios = [sideband_ratio(b) for b in betas]
            rows = []
            for i, (pos, b, r) in enumerate(zip(positions, betas, ratios)):
                rows.append(
                    [i, pos[0] * 1e6, pos[1] * 1e6, pos[2] * 1e6, float(b), float(r)]
                )
            csv_text = _csv_text(
                ["ion", "x_um", "y_um", "z_um", "beta", "sideband_ratio"], rows
            )
            lines = [
                _kv("beta_min", float(betas.min())),
                _kv("beta_max", float(betas.max())),
            ]
            if req.compare:
                lo, hi = REFERENCE_MODULATION_RANGE
                lines.append(_kv("reference_beta_half_range", f"{lo!r} {hi!r}"))
                inside = [
                    bool(lo <= abs(b) / 2.0 <= hi) for b in betas
                ]
                lines.append(
                    _kv("beta_half_within_reference", " ".join(str(v).lower() for v in inside))
                )
            return schemas.MicromotionResponse(
                betas=[float(b) for b in betas],
                beta_min=float(betas.min()),
                beta_max=float(betas.max()),
                sideband_ratios=[float(r) for r in ratios],
                micromotion_csv=csv_text,
                summary_text="\n".join(lines) + "\n",
            )
        except PlanartrapError as exc:
            _fail(exc)

    return app


def _local_peaks(detunings, excitation, rel_height=0.05) -> list:
    """Detunings (MHz) of local maxima above rel_height of the global max."""
    e = np.asarray(excitation)
    if len(e) < 3 or e.max() <= 0:
        return []
    floor = rel_height * e.max()
    idx = [
        i
        for i in range(1, len(e) - 1)
        if e[i] >= e[i - 1] and e[i] > e[i + 1] and e[i] >= floor
    ]
    return [float(rad_to_mhz(detunings[i])) for i in idx]
