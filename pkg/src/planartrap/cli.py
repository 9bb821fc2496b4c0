"""Command-line surface. Every command is a thin client of the task
service: inputs are read and validated locally for existence, file contents
travel to the service (in-process unless --server points elsewhere), and the
rendered documents come back as text written verbatim. Identical inputs and
seeds therefore produce byte-identical outputs; timestamps exist only in the
sidecar manifests.

Exit codes: 0 success, 2 invalid input, 3 solver non-convergence (outputs
are still written, flagged as unconverged).
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .client import ServiceClient
from .errors import PlanartrapError

EXIT_INVALID = 2
EXIT_UNCONVERGED = 3


def _die(message: str, code: int = EXIT_INVALID):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _die(f"cannot read {path}: {exc}")


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Outputs:
    """Collects rendered documents, then writes everything atomically.

    Nothing touches disk until the service call has succeeded, so invalid
    input can never leave partial files behind. Each file gets a sidecar
    <name>.manifest.json recording the command, input digests, parameters,
    and the output digest; the timestamp lives only there.
    """

    def __init__(self, out_dir: str, command: str, inputs: dict, parameters: dict):
        self.dir = Path(out_dir)
        self.command = command
        self.inputs = {name: _sha256(text) for name, text in inputs.items()}
        self.parameters = parameters
        self.files: dict = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def write(self) -> list:
        self.dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.files.items():
            target = self.dir / name
            tmp = self.dir / (name + ".tmp")
            tmp.write_bytes(text.encode("utf-8"))
            os.replace(tmp, target)
            manifest = {
                "command": self.command,
                "tool_version": __version__,
                "inputs_sha256": self.inputs,
                "parameters": self.parameters,
                "output": name,
                "output_sha256": _sha256(text),
                "written_at_utc": datetime.now(timezone.utc).isoformat(),
            }
            mpath = self.dir / (name + ".manifest.json")
            mtmp = self.dir / (name + ".manifest.json.tmp")
            mtmp.write_bytes(
                (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
            )
            os.replace(mtmp, mpath)
            written.append(str(target))
        return written


def _client(ctx) -> ServiceClient:
    return ServiceClient(base_url=ctx.obj["server"])


def _source_options(fn):
    fn = click.option(
        "--trap", "trap_path", type=click.Path(exists=True, dir_okay=False),
        default=None, help="Trap basis TOML file.",
    )(fn)
    fn = click.option(
        "--freqs", "freqs_mhz", type=float, nargs=3, default=None,
        help="Secular frequencies omega/2pi in MHz (x y z), instead of --trap.",
    )(fn)
    fn = click.option(
        "--mass-amu", type=float, default=None,
        help="Ion mass in amu for --freqs (default 171Yb+).",
    )(fn)
    fn = click.option(
        "--set", "overrides", multiple=True, metavar="LABEL=VOLTS",
        help="Override a DC electrode voltage (repeatable; --trap only).",
    )(fn)
    fn = click.option(
        "--v-rf", type=float, default=None, help="Override the RF voltage."
    )(fn)
    return fn


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            _die(f"--set expects LABEL=VOLTS, got {pair!r}")
        label, _, value = pair.partition("=")
        try:
            out[label] = float(value)
        except ValueError:
            _die(f"--set {pair!r}: voltage is not a number")
    return out


def _source_payload(trap_path, freqs_mhz, mass_amu, overrides, v_rf) -> tuple:
    """Returns (source dict, inputs dict for the manifest)."""
    if (trap_path is None) == (not freqs_mhz):
        _die("give exactly one of --trap or --freqs")
    if trap_path is not None:
        text = _read_text(trap_path)
        source = {
            "trap_toml": text,
            "dc_overrides": _parse_overrides(overrides),
            "v_rf": v_rf,
        }
        return source, {trap_path: text}
    if overrides or v_rf is not None:
        _die("--set/--v-rf require --trap")
    return {"freqs_mhz": list(freqs_mhz), "mass_amu": mass_amu}, {}


@click.group()
@click.version_option(version=__version__, prog_name="planartrap")
@click.option(
    "--server", default=None, envvar="PLANARTRAP_SERVER",
    help="Run against a remote service instead of in-process.",
)
@click.option(
    "--out-dir", default=".", envvar="PLANARTRAP_OUT_DIR",
    type=click.Path(file_okay=False),
    help="Directory for output files (env PLANARTRAP_OUT_DIR).",
)
@click.option(
    "--threads", default=1, envvar="PLANARTRAP_THREADS", type=click.IntRange(1),
    help="Worker threads for restart batches (env PLANARTRAP_THREADS).",
)
@click.pass_context
def main(ctx, server, out_dir, threads):
    """Simulate and analyze 2D ion crystals in a linear Paul trap."""
    ctx.ensure_object(dict)
    ctx.obj.update(server=server, out_dir=out_dir, threads=threads)


@main.command()
@click.argument("trap_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--set", "overrides", multiple=True, metavar="LABEL=VOLTS",
              help="Override a DC electrode voltage (repeatable).")
@click.option("--v-rf", type=float, default=None, help="Override the RF voltage.")
@click.option("--allow-unstable", is_flag=True,
              help="Report magnitudes instead of failing on unstable axes.")
@click.option("--sweep-v-rf", type=float, nargs=3, default=None,
              metavar="START STOP POINTS",
              help="Also emit a CSV of frequencies over an RF-voltage sweep.")
@click.option("-o", "--output", default=None,
              help="CSV filename for --sweep-v-rf (default freqs_sweep.csv).")
@click.pass_context
def freqs(ctx, trap_file, overrides, v_rf, allow_unstable, sweep_v_rf, output):
    """Secular frequencies, Mathieu q, and axis rotation for a trap file."""
    text = _read_text(trap_file)
    payload = {
        "trap_toml": text,
        "dc_overrides": _parse_overrides(overrides),
        "v_rf": v_rf,
        "allow_unstable": allow_unstable,
    }
    if sweep_v_rf is not None:
        start, stop, points = sweep_v_rf
        payload["sweep"] = {
            "start_volts": start, "stop_volts": stop, "points": int(points),
        }
    try:
        result = _client(ctx).freqs(payload)
    except PlanartrapError as exc:
        _die(str(exc))
    click.echo(result["report_text"], nl=False)
    if result.get("sweep_csv"):
        outs = Outputs(
            ctx.obj["out_dir"], "freqs", {trap_file: text},
            {"overrides": _parse_overrides(overrides), "v_rf": v_rf},
        )
        outs.add(output or "freqs_sweep.csv", result["sweep_csv"])
        for path in outs.write():
            click.echo(f"wrote {path}")


@main.command()
@_source_options
@click.option("--n-ions", "-n", type=click.IntRange(1), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--restarts", type=click.IntRange(1), default=8, show_default=True)
@click.option("--force-tol", type=float, default=None,
              help="Convergence force tolerance in newtons (default 1e-18).")
@click.option("--planar", is_flag=True, help="Constrain the crystal to y = 0.")
@click.option("-o", "--output", default="crystal", show_default=True,
              help="Basename for <name>.csv and <name>.json.")
@click.pass_context
def equilibrium(ctx, trap_path, freqs_mhz, mass_amu, overrides, v_rf,
                n_ions, seed, restarts, force_tol, planar, output):
    """Solve an N-ion equilibrium and write geometry files."""
    source, inputs = _source_payload(trap_path, freqs_mhz, mass_amu, overrides, v_rf)
    payload = {
        "source": source, "n_ions": n_ions, "seed": seed,
        "restarts": restarts, "force_tol": force_tol, "planar": planar,
        "workers": ctx.obj["threads"],
    }
    try:
        result = _client(ctx).equilibrium(payload)
    except PlanartrapError as exc:
        _die(str(exc))
    outs = Outputs(
        ctx.obj["out_dir"], "equilibrium", inputs,
        {"n_ions": n_ions, "seed": seed, "restarts": restarts,
         "force_tol": force_tol, "planar": planar},
    )
    outs.add(f"{output}.csv", result["geometry_csv"])
    outs.add(f"{output}.json", result["geometry_json"])
    written = outs.write()
    click.echo(result["summary_text"], nl=False)
    for path in written:
        click.echo(f"wrote {path}")
    if not result["converged"]:
        click.echo("warning: equilibrium did not converge", err=True)
        sys.exit(EXIT_UNCONVERGED)


@main.command()
@_source_options
@click.option("--geometry", "geometry_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="Geometry CSV (ion,x_um,y_um,z_um); else solve --n-ions.")
@click.option("--n-ions", "-n", type=click.IntRange(1), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", default="modes.csv", show_default=True)
@click.pass_context
def modes(ctx, trap_path, freqs_mhz, mass_amu, overrides, v_rf,
          geometry_path, n_ions, seed, output):
    """Normal-mode table for a crystal (solved or loaded)."""
    source, inputs = _source_payload(trap_path, freqs_mhz, mass_amu, overrides, v_rf)
    geometry_csv = None
    if geometry_path is not None:
        geometry_csv = _read_text(geometry_path)
        inputs[geometry_path] = geometry_csv
    payload = {
        "source": source, "geometry_csv": geometry_csv,
        "n_ions": n_ions, "seed": seed, "workers": ctx.obj["threads"],
    }
    try:
        result = _client(ctx).modes(payload)
    except PlanartrapError as exc:
        _die(str(exc))
    outs = Outputs(ctx.obj["out_dir"], "modes", inputs,
                   {"n_ions": n_ions, "seed": seed})
    outs.add(output, result["modes_csv"])
    written = outs.write()
    click.echo(result["summary_text"], nl=False)
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--mass-amu", type=float, default=None,
              help="Ion mass in amu for omega_x scans (default 171Yb+).")
@click.option("-o", "--output", default="scan", show_default=True,
              help="Basename for <name>.csv (and <name>_soft.csv).")
@click.pass_context
def scan(ctx, spec_file, mass_amu, output):
    """Structure scan over a parameter grid from a scan spec file."""
    spec_text = _read_text(spec_file)
    inputs = {spec_file: spec_text}
    payload = {"scan_toml": spec_text, "mass_amu": mass_amu}
    # v_rf scans name a trap file, resolved relative to the scan file
    try:
        import tomli
        doc = tomli.loads(spec_text)
        trap_name = doc.get("scan", {}).get("trap_file")
    except Exception:
        trap_name = None
    if trap_name:
        trap_path = Path(spec_file).parent / trap_name
        if not trap_path.is_file():
            _die(f"scan spec names missing trap file {trap_path}")
        trap_text = _read_text(str(trap_path))
        payload["trap_toml"] = trap_text
        inputs[str(trap_path)] = trap_text
    try:
        result = _client(ctx).scan(payload)
    except PlanartrapError as exc:
        _die(str(exc))
    outs = Outputs(ctx.obj["out_dir"], "scan", inputs, {"mass_amu": mass_amu})
    outs.add(f"{output}.csv", result["scan_csv"])
    if result.get("soft_csv"):
        outs.add(f"{output}_soft.csv", result["soft_csv"])
    written = outs.write()
    click.echo(result["summary_text"], nl=False)
    for path in written:
        click.echo(f"wrote {path}")
    if not result["all_converged"]:
        click.echo("warning: some scan points did not converge", err=True)
        sys.exit(EXIT_UNCONVERGED)


@main.command()
@click.argument("records_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--trap", "trap_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", default="calibration", show_default=True,
              help="Basename for <name>_report.json and <name>_trap.toml.")
@click.pass_context
def calibrate(ctx, records_file, trap_path, output):
    """Fit eta coefficients from measured frequencies; emit corrected trap."""
    records_text = _read_text(records_file)
    trap_text = _read_text(trap_path)
    try:
        result = _client(ctx).calibrate(
            {"trap_toml": trap_text, "calibration_csv": records_text}
        )
    except PlanartrapError as exc:
        _die(str(exc))
    outs = Outputs(
        ctx.obj["out_dir"], "calibrate",
        {records_file: records_text, trap_path: trap_text}, {},
    )
    outs.add(f"{output}_report.json", result["report_json"])
    outs.add(f"{output}_trap.toml", result["corrected_trap_toml"])
    written = outs.write()
    click.echo(result["summary_text"], nl=False)
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@_source_options
@click.option("--probe", "probe_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Probe spec TOML.")
@click.option("--geometry", "geometry_path",
              type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--n-ions", "-n", type=click.IntRange(1), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", default="spectrum.csv", show_default=True)
@click.pass_context
def spectrum(ctx, trap_path, freqs_mhz, mass_amu, overrides, v_rf,
             probe_path, geometry_path, n_ions, seed, output):
    """Synthesize a Raman sideband spectrum over a detuning grid."""
    source, inputs = _source_payload(trap_path, freqs_mhz, mass_amu, overrides, v_rf)
    probe_text = _read_text(probe_path)
    inputs[probe_path] = probe_text
    geometry_csv = None
    if geometry_path is not None:
        geometry_csv = _read_text(geometry_path)
        inputs[geometry_path] = geometry_csv
    payload = {
        "source": source, "probe_toml": probe_text,
        "geometry_csv": geometry_csv, "n_ions": n_ions, "seed": seed,
        "workers": ctx.obj["threads"],
    }
    try:
        result = _client(ctx).spectrum(payload)
    except PlanartrapError as exc:
        _die(str(exc))
    outs = Outputs(ctx.obj["out_dir"], "spectrum", inputs,
                   {"n_ions": n_ions, "seed": seed})
    outs.add(output, result["spectrum_csv"])
    written = outs.write()
    click.echo(result["summary_text"], nl=False)
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.option("--trap", "trap_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--delta-k", type=float, nargs=3, required=True,
              help="Probe wavevector components in rad/m.")
@click.option("--geometry", "geometry_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="Per-ion positions; default is the RF null.")
@click.option("--compare", is_flag=True,
              help="Report the documented reference beta/2 range alongside.")
@click.option("-o", "--output", default="micromotion.csv", show_default=True)
@click.pass_context
def micromotion(ctx, trap_path, delta_k, geometry_path, compare, output):
    """Micromotion modulation index beta per ion position."""
    trap_text = _read_text(trap_path)
    inputs = {trap_path: trap_text}
    geometry_csv = None
    if geometry_path is not None:
        geometry_csv = _read_text(geometry_path)
        inputs[geometry_path] = geometry_csv
    payload = {
        "trap_toml": trap_text, "delta_k": list(delta_k),
        "geometry_csv": geometry_csv, "compare": compare,
    }
    try:
        result = _client(ctx).micromotion(payload)
    except PlanartrapError as exc:
        _die(str(exc))
    outs = Outputs(ctx.obj["out_dir"], "micromotion", inputs,
                   {"delta_k": list(delta_k), "compare": compare})
    outs.add(output, result["micromotion_csv"])
    written = outs.write()
    click.echo(result["summary_text"], nl=False)
    for path in written:
        click.echo(f"wrote {path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8410, show_default=True, type=int)
def serve(host, port):
    """Run the task service over HTTP."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
