"""File formats: trap basis TOML, scan and probe specs, calibration CSV,
and the CSV/JSON emitters shared by the CLI and service.

Readers validate schema before any physics runs; errors carry the file path
and, for TOML syntax problems, the parser's line/column message. Writers are
hand-rolled so output is deterministic byte for byte: floats are rendered
with repr (shortest round-trip form), keys in fixed order, newline = "\\n".
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
import tomli

from .constants import TWO_PI, mhz_to_rad, rad_to_mhz
from .errors import InputError, TrapFileError
from .trap import AXIS_NAMES, ElectrodeBasis, IonSpecies, RfDrive, TrapConfiguration

TRAP_SCHEMA_VERSION = 1
ZZ_RECONSTRUCTION_RTOL = 1e-9
CURVATURE_KEYS = ("xx", "yy", "zz", "xy", "xz", "yz")
CALIBRATION_COLUMNS = ("electrode_group", "voltage_V", "axis", "measured_freq_MHz")


# ------------------------------------------------------------------- reading


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise TrapFileError(f"{where}: missing required key {key!r}")
    return table[key]


def _number(table: dict, key: str, where: str) -> float:
    v = _require(table, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TrapFileError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _curvature_from_table(table: dict, where: str) -> np.ndarray:
    for key in ("xx", "yy", "xy", "xz", "yz"):
        if key not in table:
            raise TrapFileError(f"{where}: missing curvature entry {key!r}")
    unknown = set(table) - set(CURVATURE_KEYS)
    if unknown:
        raise TrapFileError(f"{where}: unknown curvature keys {sorted(unknown)}")
    xx = _number(table, "xx", where)
    yy = _number(table, "yy", where)
    zz = -(xx + yy)  # Laplace closes the diagonal
    if "zz" in table:
        given = _number(table, "zz", where)
        scale = max(abs(xx), abs(yy), abs(given), 1e-30)
        if abs(given - zz) > ZZ_RECONSTRUCTION_RTOL * scale:
            raise TrapFileError(
                f"{where}: zz = {given!r} violates xx + yy + zz = 0 "
                f"(expected {zz!r})"
            )
        zz = given
    xy = _number(table, "xy", where)
    xz = _number(table, "xz", where)
    yz = _number(table, "yz", where)
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def _field_from_table(table: dict, where: str) -> np.ndarray:
    unknown = set(table) - set(AXIS_NAMES)
    if unknown:
        raise TrapFileError(f"{where}: unknown field keys {sorted(unknown)}")
    return np.array([_number(table, k, where) for k in AXIS_NAMES])


def parse_trap_toml(text: str, source: str = "<string>") -> TrapConfiguration:
    """Parse a trap basis document; see render_trap_toml for the schema."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise TrapFileError(f"{source}: TOML syntax error: {exc}") from exc

    meta = _require(doc, "meta", source)
    schema = _require(meta, "schema", f"{source}: [meta]")
    if schema != TRAP_SCHEMA_VERSION:
        raise TrapFileError(
            f"{source}: unsupported schema {schema!r} "
            f"(this build reads schema = {TRAP_SCHEMA_VERSION})"
        )

    ion = _require(doc, "ion", source)
    mass_amu = _number(ion, "mass_amu", f"{source}: [ion]")
    charge_e = _number(ion, "charge_e", f"{source}: [ion]")
    if mass_amu <= 0 or charge_e == 0:
        raise TrapFileError(f"{source}: [ion] needs mass_amu > 0 and charge_e != 0")
    species = IonSpecies.from_amu(mass_amu, charge_e)

    rf = _require(doc, "rf", source)
    v_rf = _number(rf, "voltage_volts", f"{source}: [rf]")
    f_rf = _number(rf, "frequency_mhz", f"{source}: [rf]")
    if f_rf <= 0:
        raise TrapFileError(f"{source}: [rf] frequency_mhz must be > 0")
    rf_curv = _curvature_from_table(
        _require(rf, "curvature", f"{source}: [rf]"), f"{source}: [rf.curvature]"
    )
    rf_field = (
        _field_from_table(rf["field"], f"{source}: [rf.field]")
        if "field" in rf
        else np.zeros(3)
    )

    dc_tables = doc.get("dc", [])
    if not isinstance(dc_tables, list) or not dc_tables:
        raise TrapFileError(f"{source}: at least one [[dc]] electrode is required")
    dc = []
    for i, tbl in enumerate(dc_tables):
        where = f"{source}: [[dc]] #{i + 1}"
        label = _require(tbl, "label", where)
        if not isinstance(label, str) or not label:
            raise TrapFileError(f"{where}: label must be a non-empty string")
        voltage = _number(tbl, "voltage_volts", where)
        curv = _curvature_from_table(
            _require(tbl, "curvature", where), f"{where} curvature"
        )
        fld = (
            _field_from_table(tbl["field"], f"{where} field")
            if "field" in tbl
            else np.zeros(3)
        )
        try:
            basis = ElectrodeBasis(label=label, curvature=curv, linear_field=fld)
        except InputError as exc:
            raise TrapFileError(f"{where}: {exc}") from exc
        dc.append((basis, voltage))

    try:
        rf_basis = ElectrodeBasis(label="RF", curvature=rf_curv, linear_field=rf_field)
        return TrapConfiguration(
            species=species,
            dc_electrodes=tuple(dc),
            rf_basis=rf_basis,
            rf_drive=RfDrive(v_rf=v_rf, omega_rf=mhz_to_rad(f_rf)),
        )
    except InputError as exc:
        raise TrapFileError(f"{source}: {exc}") from exc


def load_trap(path) -> TrapConfiguration:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise TrapFileError(f"cannot read trap file {path}: {exc}") from exc
    return parse_trap_toml(text, source=str(path))


# ------------------------------------------------------------------- writing


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v != v or v in (float("inf"), float("-inf")):
            raise InputError(f"cannot serialize non-finite value {v}")
        text = repr(v)
        # TOML floats need a dot or exponent
        return text if ("." in text or "e" in text or "E" in text) else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    raise InputError(f"cannot serialize {type(value).__name__} to TOML")


def _curvature_lines(header: str, c: np.ndarray) -> list:
    entries = {
        "xx": c[0, 0], "yy": c[1, 1], "zz": c[2, 2],
        "xy": c[0, 1], "xz": c[0, 2], "yz": c[1, 2],
    }
    lines = [f"[{header}]"]
    lines += [f"{k} = {_fmt(v)}" for k, v in entries.items()]
    return lines


def render_trap_toml(
    config: TrapConfiguration, name: str, notes: str = ""
) -> str:
    """Serialize a configuration to the trap basis schema.

    Schema (all numeric values SI except the marked units):

        [meta]            schema = 1, name, notes
        [ion]             mass_amu, charge_e
        [rf]              voltage_volts, frequency_mhz
        [rf.curvature]    xx yy zz xy xz yz   (V/m^2 per volt; zz optional
                          on input, reconstructed from -(xx+yy))
        [rf.field]        x y z               (V/m per volt, optional)
        [[dc]]            label, voltage_volts, plus curvature/field tables

    Round-trips through parse_trap_toml bit exactly: floats are written in
    shortest repr form.
    """
    lines = ["[meta]", f"schema = {TRAP_SCHEMA_VERSION}", f"name = {_fmt(name)}"]
    if notes:
        lines.append(f"notes = {_fmt(notes)}")
    lines += [
        "",
        "[ion]",
        f"mass_amu = {_fmt(config.species.mass_amu)}",
        f"charge_e = {_fmt(config.species.charge_e)}",
        "",
        "[rf]",
        f"voltage_volts = {_fmt(config.rf_drive.v_rf)}",
        f"frequency_mhz = {_fmt(rad_to_mhz(config.rf_drive.omega_rf))}",
        "",
    ]
    lines += _curvature_lines("rf.curvature", config.rf_basis.curvature)
    if np.any(config.rf_basis.linear_field != 0.0):
        lines += ["", "[rf.field]"]
        lines += [
            f"{k} = {_fmt(v)}"
            for k, v in zip(AXIS_NAMES, config.rf_basis.linear_field)
        ]
    for basis, voltage in config.dc_electrodes:
        lines += [
            "",
            "[[dc]]",
            f"label = {_fmt(basis.label)}",
            f"voltage_volts = {_fmt(voltage)}",
            "",
        ]
        lines += _curvature_lines("dc.curvature", basis.curvature)
        if np.any(basis.linear_field != 0.0):
            lines += ["", "[dc.field]"]
            lines += [
                f"{k} = {_fmt(v)}" for k, v in zip(AXIS_NAMES, basis.linear_field)
            ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- scan specs


@dataclass(frozen=True)
class ScanSpec:
    """Parsed structure-scan request.

    kind "omega_x": sweep omega_x/2pi over [start, stop] MHz at fixed
    omega_y and omega_z = z_to_x * omega_x. kind "v_rf": sweep the RF
    voltage over [start, stop] volts on the trap file named by trap_file.
    """

    kind: str
    start: float
    stop: float
    points: int
    n_ions: int
    seed: int
    omega_y_mhz: float | None = None
    z_to_x: float | None = None
    trap_file: str | None = None
    soft_modes: bool = False

    @property
    def values(self) -> np.ndarray:
        grid = np.linspace(self.start, self.stop, self.points)
        return mhz_to_rad(grid) if self.kind == "omega_x" else grid


def parse_scan_toml(text: str, source: str = "<string>") -> ScanSpec:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise TrapFileError(f"{source}: TOML syntax error: {exc}") from exc
    scan = _require(doc, "scan", source)
    where = f"{source}: [scan]"
    kind = _require(scan, "kind", where)
    if kind not in ("omega_x", "v_rf"):
        raise TrapFileError(f"{where}: kind must be 'omega_x' or 'v_rf'")
    n_ions = _require(scan, "n_ions", where)
    if not isinstance(n_ions, int) or n_ions < 1:
        raise TrapFileError(f"{where}: n_ions must be a positive integer")
    points = _require(scan, "points", where)
    if not isinstance(points, int) or points < 2:
        raise TrapFileError(f"{where}: points must be an integer >= 2")
    seed = scan.get("seed", 0)
    if not isinstance(seed, int):
        raise TrapFileError(f"{where}: seed must be an integer")
    soft = scan.get("soft_modes", False)
    if not isinstance(soft, bool):
        raise TrapFileError(f"{where}: soft_modes must be a boolean")
    if kind == "omega_x":
        start = _number(scan, "start_mhz", where)
        stop = _number(scan, "stop_mhz", where)
        spec = ScanSpec(
            kind=kind,
            start=start,
            stop=stop,
            points=points,
            n_ions=n_ions,
            seed=seed,
            omega_y_mhz=_number(scan, "omega_y_mhz", where),
            z_to_x=_number(scan, "z_to_x", where),
            soft_modes=soft,
        )
    else:
        if soft:
            raise TrapFileError(f"{where}: soft_modes requires kind = 'omega_x'")
        trap_file = _require(scan, "trap_file", where)
        if not isinstance(trap_file, str):
            raise TrapFileError(f"{where}: trap_file must be a string path")
        spec = ScanSpec(
            kind=kind,
            start=_number(scan, "start_volts", where),
            stop=_number(scan, "stop_volts", where),
            points=points,
            n_ions=n_ions,
            seed=seed,
            trap_file=trap_file,
        )
    if spec.stop == spec.start:
        raise TrapFileError(f"{where}: start and stop must differ")
    return spec


def load_scan_spec(path) -> ScanSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise TrapFileError(f"cannot read scan spec {path}: {exc}") from exc
    return parse_scan_toml(text, source=str(path))


# --------------------------------------------------------------- probe specs


@dataclass(frozen=True)
class ProbeSpec:
    """Parsed Raman-probe request for spectrum synthesis.

    delta_k in rad/m (lab frame), carrier Rabi rate as a 2pi x kHz value,
    probe duration in microseconds, detuning window in MHz around the
    carrier, nbar and Fock cutoff for the thermal average.
    """

    delta_k: np.ndarray
    rabi_khz: float
    duration_us: float
    nbar: float
    detuning_start_mhz: float
    detuning_stop_mhz: float
    points: int
    fock_cutoff: int | None = None


def parse_probe_toml(text: str, source: str = "<string>") -> ProbeSpec:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise TrapFileError(f"{source}: TOML syntax error: {exc}") from exc
    probe = _require(doc, "probe", source)
    where = f"{source}: [probe]"
    dk = _require(probe, "delta_k", where)
    if not isinstance(dk, list) or len(dk) != 3:
        raise TrapFileError(f"{where}: delta_k must be a 3-element list (rad/m)")
    points = _require(probe, "points", where)
    if not isinstance(points, int) or points < 2:
        raise TrapFileError(f"{where}: points must be an integer >= 2")
    cutoff = probe.get("fock_cutoff")
    if cutoff is not None and not isinstance(cutoff, int):
        raise TrapFileError(f"{where}: fock_cutoff must be an integer")
    return ProbeSpec(
        delta_k=np.array([float(v) for v in dk]),
        rabi_khz=_number(probe, "rabi_khz", where),
        duration_us=_number(probe, "duration_us", where),
        nbar=_number(probe, "nbar", where),
        detuning_start_mhz=_number(probe, "detuning_start_mhz", where),
        detuning_stop_mhz=_number(probe, "detuning_stop_mhz", where),
        points=points,
        fock_cutoff=cutoff,
    )


def load_probe_spec(path) -> ProbeSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise TrapFileError(f"cannot read probe spec {path}: {exc}") from exc
    return parse_probe_toml(text, source=str(path))


# ----------------------------------------------------------- calibration CSV


def parse_calibration_csv(text: str, source: str = "<string>") -> list:
    """Rows of (electrode_group, voltage_V, axis, measured_freq_MHz[, sigma_MHz]).

    Returned as dicts with SI frequency values (rad/s); building full
    CalibrationRecord voltage maps needs a trap template and happens in the
    calibration module.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise TrapFileError(f"{source}: empty calibration file")
    fields = [f.strip() for f in reader.fieldnames]
    missing = [c for c in CALIBRATION_COLUMNS if c not in fields]
    if missing:
        raise TrapFileError(f"{source}: missing columns {missing}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        row = {k.strip(): (v.strip() if v is not None else "") for k, v in row.items()}
        group = row["electrode_group"]
        axis = row["axis"]
        if axis not in AXIS_NAMES:
            raise TrapFileError(f"{source}:{lineno}: axis must be x, y, or z")
        try:
            voltage = float(row["voltage_V"])
            freq_mhz = float(row["measured_freq_MHz"])
        except ValueError as exc:
            raise TrapFileError(f"{source}:{lineno}: {exc}") from exc
        if freq_mhz <= 0:
            raise TrapFileError(f"{source}:{lineno}: measured_freq_MHz must be > 0")
        sigma = None
        if row.get("sigma_MHz"):
            try:
                sigma = mhz_to_rad(float(row["sigma_MHz"]))
            except ValueError as exc:
                raise TrapFileError(f"{source}:{lineno}: {exc}") from exc
        rows.append(
            {
                "electrode_group": group,
                "voltage": voltage,
                "axis": axis,
                "measured_frequency": mhz_to_rad(freq_mhz),
                "sigma": sigma,
            }
        )
    if not rows:
        raise TrapFileError(f"{source}: no data rows")
    return rows


def load_calibration_csv(path) -> list:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise TrapFileError(f"cannot read calibration file {path}: {exc}") from exc
    return parse_calibration_csv(text, source=str(path))


# ------------------------------------------------------------- CSV emitters


def _csv_text(header: list, rows: list) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(_cell(v) for v in row))
    return "\n".join(out) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_geometry_csv(positions) -> str:
    """Columns: ion, x_um, y_um, z_um."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3) * 1e6
    rows = [[i, p[i, 0], p[i, 1], p[i, 2]] for i in range(len(p))]
    return _csv_text(["ion", "x_um", "y_um", "z_um"], rows)


def parse_geometry_csv(text: str, source: str = "<string>") -> np.ndarray:
    reader = csv.DictReader(io.StringIO(text))
    need = ["ion", "x_um", "y_um", "z_um"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != need:
        raise TrapFileError(f"{source}: geometry CSV needs columns {need}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rows.append([float(row[k]) for k in need[1:]])
        except (TypeError, ValueError) as exc:
            raise TrapFileError(f"{source}:{lineno}: {exc}") from exc
    if not rows:
        raise TrapFileError(f"{source}: no ions in geometry file")
    return np.array(rows) * 1e-6


def load_geometry_csv(path) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise TrapFileError(f"cannot read geometry file {path}: {exc}") from exc
    return parse_geometry_csv(text, source=str(path))


def render_geometry_json(result, trap, dimension) -> str:
    """Geometry with metadata: frequencies, seed, tolerances, convergence."""
    doc = {
        "frequencies_mhz": [rad_to_mhz(w) for w in trap.omega],
        "mass_amu": trap.species.mass_amu,
        "n_ions": int(len(result.positions)),
        "seed": int(result.seed),
        "restarts": int(result.restarts_used),
        "converged": bool(result.converged),
        "energy_joules": float(result.energy),
        "max_force_newtons": float(result.gradient_norm),
        "dimensionality": str(dimension),
        "positions_um": [
            [float(v) for v in row] for row in result.positions * 1e6
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_modes_csv(spectrum) -> str:
    """Columns: mode, frequency_MHz, soft, participation x/y/z."""
    rows = []
    for k in range(spectrum.n_modes):
        rows.append(
            [
                k,
                rad_to_mhz(spectrum.frequencies[k]),
                bool(spectrum.soft[k]),
                spectrum.participation[k, 0],
                spectrum.participation[k, 1],
                spectrum.participation[k, 2],
            ]
        )
    return _csv_text(
        ["mode", "frequency_MHz", "soft", "participation_x", "participation_y", "participation_z"],
        rows,
    )


def render_scan_csv(scan, kind: str) -> str:
    """Columns: parameter, size_x/y/z um, energy, converged, dimensionality."""
    param_header = "omega_x_MHz" if kind == "omega_x" else "v_rf_volts"
    params = (
        rad_to_mhz(scan.parameters) if kind == "omega_x" else scan.parameters
    )
    rows = []
    for i in range(len(params)):
        rows.append(
            [
                params[i],
                scan.sizes[i, 0] * 1e6,
                scan.sizes[i, 1] * 1e6,
                scan.sizes[i, 2] * 1e6,
                scan.energies[i],
                bool(scan.converged[i]),
                str(scan.dimensions[i]),
            ]
        )
    return _csv_text(
        [param_header, "size_x_um", "size_y_um", "size_z_um", "energy_J", "converged", "dimensionality"],
        rows,
    )


def render_soft_mode_csv(result) -> str:
    """Columns: omega_x_MHz, min_eigenvalue, min_frequency_MHz, converged."""
    rows = []
    for i in range(len(result.parameters)):
        rows.append(
            [
                rad_to_mhz(result.parameters[i]),
                result.min_eigenvalue[i],
                rad_to_mhz(result.min_frequency[i]),
                bool(result.converged[i]),
            ]
        )
    return _csv_text(
        ["omega_x_MHz", "min_eigenvalue_rad2", "min_frequency_MHz", "converged"], rows
    )


def render_curve_csv(x, y, x_name: str, y_name: str) -> str:
    rows = [[float(a), float(b)] for a, b in zip(x, y)]
    return _csv_text([x_name, y_name], rows)


def render_freqs_sweep_csv(voltages, freq_table) -> str:
    """Columns: v_rf_volts, omega_x/y/z_MHz (one row per RF voltage)."""
    rows = []
    for v, freqs in zip(voltages, freq_table):
        rows.append([float(v)] + [rad_to_mhz(w) for w in freqs])
    return _csv_text(
        ["v_rf_volts", "omega_x_MHz", "omega_y_MHz", "omega_z_MHz"], rows
    )
