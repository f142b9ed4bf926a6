"""Command-line front end: ``wavekit <subcommand> [--config FILE] ...``.

Every subcommand reads an optional INI-style config file whose section is
named after the subcommand.  Unknown sections or keys are rejected before
any computation.  Outputs are CSV files with fixed 12-significant-digit
floats, plus a minimal SVG line plot for the main series.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure.  Errors go to standard error as ``ERROR:<module>:<kind>: message``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import os
import sys
import traceback
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bohm, classical_slit, debroglie, schrodinger2d, uncertainty
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    InvalidEnsembleError,
    NumericalFailure,
    WavekitError,
)
from .grid import SampledField, fmt, make_grid, read_field_csv, set_fft_workers, write_field_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


# --- strict config schema ----------------------------------------------------------


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _segments(text: str) -> tuple[tuple[float, float], ...]:
    vals = _floats(text.replace(";", " "))
    if len(vals) % 2:
        raise ValueError("segments need an even number of endpoints")
    return tuple(zip(vals[::2], vals[1::2]))


def _shutter(text: str) -> str:
    t = text.strip().lower()
    if t not in ("open", "closed"):
        raise ValueError(f"shutter must be 'open' or 'closed', got {text!r}")
    return t


SCHEMA: dict[str, dict[str, tuple[Callable, object]]] = {
    "ur-check": {
        "input": (str, None),
    },
    "packet": {
        "s": (float, 1.0),
        "velocity": (_floats, (1.0, 0.0, 0.0)),
        "points": (int, 64),
        "spacing": (float, 0.3),
        "t_start": (float, 0.0),
        "t_stop": (float, 1.0),
        "n_times": (int, 11),
        "residual_time": (float, 0.3),
        "dt": (float, 1e-4),
    },
    "twoslit": {
        "points": (_floats, (1024.0, 512.0)),
        "extent": (_floats, (80.0, 64.0)),
        "center": (_floats, (6.0, 0.0)),
        "packet_center": (_floats, (-17.0, 0.0)),
        "velocity": (_floats, (10.0, 0.0)),
        "width": (float, 1.5),
        "screen_x": (float, 0.0),
        "slit_centers": (_floats, (-2.0, 2.0)),
        "slit_width": (float, 1.0),
        "thickness": (float, 1.0),
        "barrier_height": (float, 250.0),
        "shutter": (_shutter, "open"),
        "observe_x": (float, 40.0),
        "dt": (float, 2e-3),
        "duration": (float, 7.0),
        "absorber_width": (float, 4.0),
        "snapshot_every": (int, 0),
    },
    "bohm": {
        "mode": (str, "free"),
        "n": (int, 10000),
        "points": (int, 1024),
        "extent": (float, 40.0),
        "sigma": (float, 1.0),
        "t_end": (float, 1.0),
        "dt": (float, 0.01),
        "summary_every": (int, 10),
        "output_trajectories": (int, 20),
        "bin_width": (float, 1.0),
    },
    "classical": {
        "segments": (_segments, None),
        "separation": (float, 4.0),
        "slit_width": (float, 1.0),
        "outer_extent": (float, 20.0),
        "shutter": (_shutter, "open"),
        "position": (_floats, (-20.0, 2.0)),
        "velocity": (_floats, (2.0, 0.0)),
        "q": (float, 1.0),
        "m": (float, 1.0),
        "dt": (float, 0.05),
        "n_steps": (int, 1000000),
        "panels": (int, 64),
        "safety": (float, 0.002),
        "exit_x": (float, None),
        "output_dt": (float, 0.05),
        "convergence": (_bool, False),
    },
}


def load_config(path: str | None, section: str) -> dict:
    """Defaults for ``section`` overridden by the file; unknown names are errors."""
    schema = SCHEMA[section]
    values = {k: default for k, (_, default) in schema.items()}
    if path is None:
        return values
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    extra = [s for s in parser.sections() if s != section]
    if extra:
        raise ConfigurationError(f"{path}: unknown section(s) {extra}; expected [{section}]")
    if parser.has_section(section):
        for key, text in parser.items(section):
            if key not in schema:
                raise ConfigurationError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[key] = schema[key][0](text)
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad value for {key}: {exc}") from None
    return values


# --- output helpers --------------------------------------------------------------------


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def _svg(xs: np.ndarray, ys: np.ndarray, width: int = 800, height: int = 600, margin: int = 40) -> str:
    def scale(v, lo, hi, a, b):
        return a + (v - lo) / (hi - lo) * (b - a) if hi > lo else np.full_like(v, (a + b) / 2)

    px = scale(xs, xs.min(), xs.max(), margin, width - margin)
    py = scale(ys, ys.min(), ys.max(), height - margin, margin)
    points = " ".join(f"{fmt(a)},{fmt(b)}" for a, b in zip(px, py))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" height="{height - 2 * margin}" '
        'fill="none" stroke="black"/>\n'
        f'<polyline fill="none" stroke="black" points="{points}"/>\n'
        "</svg>\n"
    )


def emit_plot_data(series, path, header: Sequence[str] | None = None, x_col: int = 0, y_col: int = 1) -> None:
    """Write ``series`` (rows of numbers) to ``path`` as CSV and ``path`` with ``.svg`` as a line plot."""
    rows = np.asarray(series, dtype=float)
    if rows.size == 0:
        raise DegenerateInputError("cannot plot an empty series")
    if rows.ndim != 2 or rows.shape[1] < 2:
        raise DegenerateInputError("plot data needs at least two columns")
    path = Path(path)
    header = header or [f"c{i}" for i in range(rows.shape[1])]
    svg = _svg(rows[:, x_col], rows[:, y_col])
    write_csv(path, header, rows)
    with open(path.with_suffix(".svg"), "w") as fh:
        fh.write(svg)


# --- subcommands -------------------------------------------------------------------------


def run_ur_check(args, out: Path | None) -> int:
    cfg = load_config(args.config, "ur-check")
    source = args.input or cfg["input"]
    if source is None:
        raise ConfigurationError("ur-check needs --input (a SampledField CSV)")
    report = uncertainty.ur_product(read_field_csv(source))
    header = ",".join(uncertainty.REPORT_COLUMNS)
    sys.stdout.write(header + "\n" + report.csv_row() + "\n")
    if out is not None:
        with open(out / "ur_report.csv", "w") as fh:
            fh.write(header + "\n" + report.csv_row() + "\n")
    return EXIT_OK


def run_packet(args, out: Path) -> int:
    cfg = load_config(args.config, "packet")
    params = debroglie.make_packet(cfg["s"], cfg["velocity"])
    grid = debroglie.default_grid(cfg["points"], cfg["spacing"])
    times = np.linspace(cfg["t_start"], cfg["t_stop"], cfg["n_times"])
    traj = debroglie.peak_trajectory(params, times, grid)
    rows = [(t, *pos) for t, pos in traj]
    emit_plot_data(rows, out / "packet_trajectory.csv", ["t", "x", "y", "z"])
    slope = debroglie.fitted_velocity(traj)
    r1 = debroglie.schrodinger_residual(params, grid, cfg["residual_time"], cfg["dt"])
    r2 = debroglie.schrodinger_residual(params, grid, cfg["residual_time"], cfg["dt"] / 2)
    write_csv(out / "packet_summary.csv", ["fit_vx", "fit_vy", "fit_vz", "residual", "residual_half_dt"],
              [(*slope, r1, r2)])
    return EXIT_OK


def _two_slit_setup(cfg: dict, shutter: str | None) -> schrodinger2d.TwoSlitSetup:
    shutter = shutter or cfg["shutter"]
    centers = cfg["slit_centers"]
    # a closed shutter blocks the upper slit
    flags = tuple(not (shutter == "closed" and i == len(centers) - 1) for i in range(len(centers)))
    screen = schrodinger2d.SlitScreen(
        cfg["screen_x"], centers, cfg["slit_width"], flags, cfg["thickness"], cfg["barrier_height"]
    )
    pts = tuple(int(p) for p in cfg["points"])
    for key, val in (("points", pts), ("extent", cfg["extent"]), ("center", cfg["center"]),
                     ("packet_center", cfg["packet_center"]), ("velocity", cfg["velocity"])):
        if len(val) != 2:
            raise ConfigurationError(f"{key} needs two values")
    return schrodinger2d.TwoSlitSetup(
        pts, tuple(cfg["extent"]), tuple(cfg["center"]), tuple(cfg["packet_center"]), tuple(cfg["velocity"]),
        cfg["width"], screen, cfg["observe_x"], cfg["dt"], cfg["duration"], cfg["absorber_width"],
    )


def run_twoslit(args, out: Path) -> int:
    cfg = load_config(args.config, "twoslit")
    setup = _two_slit_setup(cfg, args.shutter)
    callbacks = []
    every = cfg["snapshot_every"]
    if every > 0:
        grid = setup.grid()
        counter = {"n": 0}

        def dump(t, vals):
            counter["n"] += 1
            if counter["n"] % every == 0:
                write_field_csv(SampledField(grid, vals.copy()), out / f"snapshot_{counter['n']:06d}.csv")

        callbacks.append(dump)
    result = schrodinger2d.run_two_slit(setup, callbacks)
    emit_plot_data(result.profile, out / "profile.csv", ["y", "intensity"])
    maxima = schrodinger2d.find_maxima(result.profile)
    try:
        spacing = schrodinger2d.fringe_spacing(result.profile)
    except WavekitError:
        spacing = math.nan
    write_csv(out / "twoslit_summary.csv", ["shutter", "maxima", "fringe_spacing", "fraunhofer_spacing"],
              [(args.shutter or cfg["shutter"], str(len(maxima)), spacing, setup.fraunhofer_spacing())])
    return EXIT_OK


def _bohm_series(cfg: dict):
    grid = make_grid(1, cfg["points"], cfg["extent"])
    x = grid.axis(0)
    sigma = cfg["sigma"]
    if cfg["mode"] == "free":
        def psi(t):
            tau = 1 + 1j * t / (2 * sigma**2)
            return SampledField(grid, (2 * np.pi * sigma**2) ** -0.25 / np.sqrt(tau)
                                * np.exp(-(x**2) / (4 * sigma**2 * tau)))
    elif cfg["mode"] == "harmonic":
        def psi(t):
            return SampledField(grid, np.pi**-0.25 * np.exp(-(x**2) / 2 - 0.5j * t))
    else:
        raise ConfigurationError(f"unknown bohm mode {cfg['mode']!r}; use free, harmonic or twoslit")
    n = int(round(cfg["t_end"] / cfg["dt"]))
    return [(k * cfg["dt"], psi(k * cfg["dt"])) for k in range(n + 1)]


def run_bohm(args, out: Path) -> int:
    cfg = load_config(args.config, "bohm")
    seed = args.seed
    if cfg["mode"] == "twoslit":
        return _run_bohm_twoslit(args, cfg, out)
    series = _bohm_series(cfg)
    x0 = bohm.sample_positions(series[0][1], cfg["n"], seed)
    frames = [bohm.VelocityFrame(f) for _, f in series]
    ens = bohm.Ensemble(x0, frames[0], series[0][0])
    keep = min(cfg["output_trajectories"], cfg["n"])
    traj_rows = []
    summary = [(series[0][0], bohm.ks_distance(ens.x[:, 0], series[0][1]))]

    def record(t):
        for i in range(keep):
            if ens.alive[i]:
                traj_rows.append((str(i), t, ens.x[i, 0], 0.0, ens.v[i, 0], 0.0))

    record(series[0][0])
    for k, ((t, psi), frame) in enumerate(zip(series[1:], frames[1:]), start=1):
        ens.advance(frame, t)
        record(t)
        if k % cfg["summary_every"] == 0 or k == len(series) - 1:
            summary.append((t, bohm.ks_distance(ens.x[ens.alive, 0], psi)))
    bohm.require_intact(ens)
    write_csv(out / "bohm_trajectories.csv", ["trajectory_id", "t", "x", "y", "vx", "vy"], traj_rows)
    emit_plot_data(summary, out / "bohm_summary.csv", ["t", "KS_distance"])
    return EXIT_OK


def _run_bohm_twoslit(args, cfg: dict, out: Path) -> int:
    setup = schrodinger2d.TwoSlitSetup()
    psi0 = schrodinger2d.initial_packet_2d(setup.grid(), setup.packet_center, setup.packet_velocity,
                                           setup.packet_width)
    stream = bohm.StreamingEnsemble(psi0, bohm.sample_positions(psi0, cfg["n"], args.seed), setup.dt,
                                    plane_x=setup.observe_x)
    result = schrodinger2d.run_two_slit(setup, [stream])
    half = setup.extent[1] / 2
    edges = np.arange(-half, half + cfg["bin_width"] / 2, cfg["bin_width"])
    emit_plot_data(bohm.crossing_histogram(stream.crossings(), edges), out / "bohm_crossings.csv",
                   ["y", "density"])
    emit_plot_data(result.profile, out / "profile.csv", ["y", "intensity"])
    return EXIT_OK


def run_classical(args, out: Path) -> int:
    cfg = load_config(args.config, "classical")
    shutter = args.shutter or cfg["shutter"]
    if cfg["segments"] is not None:
        geometry = classical_slit.ScreenGeometry2D(cfg["segments"], cfg["outer_extent"])
    else:
        geometry = classical_slit.two_slit_geometry(cfg["separation"], cfg["slit_width"], cfg["outer_extent"])
    if len(cfg["position"]) != 2 or len(cfg["velocity"]) != 2:
        raise ConfigurationError("position and velocity need two values")
    start = classical_slit.ChargeState(tuple(cfg["position"]), tuple(cfg["velocity"]), cfg["q"], cfg["m"])
    closed = shutter == "closed"

    def run(n, dt, safety):
        return classical_slit.deflection_experiment(
            geometry, closed, start, dt, cfg["n_steps"], n, safety, cfg["exit_x"]
        )

    res = run(cfg["panels"], cfg["dt"], cfg["safety"])
    traj = res.trajectory
    emit_plot_data(traj.resample(cfg["output_dt"]), out / "classical_trajectory.csv",
                   ["t", "x", "y", "vx", "vy", "energy"], x_col=1, y_col=2)
    speed = float(np.hypot(*start.velocity)) * start.m
    write_csv(
        out / "classical_summary.csv",
        ["variant", "exit_angle", "panel_count", "dt", "transmitted", "energy_drift", "quantization_length"],
        [(shutter, res.angle, str(cfg["panels"]), cfg["dt"], str(res.transmitted).lower(),
          traj.energy_drift, classical_slit.quantization_length(speed))],
    )
    if cfg["convergence"]:
        rows = [("base", str(cfg["panels"]), cfg["dt"], cfg["safety"], res.angle)]
        fine = run(2 * cfg["panels"], cfg["dt"], cfg["safety"])
        rows.append(("panels_doubled", str(2 * cfg["panels"]), cfg["dt"], cfg["safety"], fine.angle))
        half = run(cfg["panels"], cfg["dt"] / 2, cfg["safety"] / 2)
        rows.append(("dt_halved", str(cfg["panels"]), cfg["dt"] / 2, cfg["safety"] / 2, half.angle))
        write_csv(out / "classical_convergence.csv", ["variant", "panel_count", "dt", "safety", "exit_angle"], rows)
    if not res.transmitted:
        sys.stderr.write("WARNING:classical_slit:no-transmission: charge did not pass the screen\n")
    return EXIT_OK


COMMANDS = {
    "ur-check": run_ur_check,
    "packet": run_packet,
    "twoslit": run_twoslit,
    "bohm": run_bohm,
    "classical": run_classical,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with a [%s] section" % name)
        p.add_argument("--output-dir", default=".", help="directory for CSV/SVG outputs (default: .)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        if name == "ur-check":
            p.add_argument("--input", help="SampledField CSV")
        if name in ("twoslit", "classical"):
            p.add_argument("--shutter", choices=("open", "closed"))
    return parser


def _origin_module(exc: BaseException) -> str:
    module = "cli"
    tb = exc.__traceback__
    pkg = os.path.dirname(__file__)
    while tb is not None:
        fname = tb.tb_frame.f_code.co_filename
        if os.path.dirname(fname) == pkg:
            module = Path(fname).stem
        tb = tb.tb_next
    return "cli" if module == "grid" and isinstance(exc, ConfigurationError) else module


def _report(module: str, kind: str, message: str) -> None:
    sys.stderr.write(f"ERROR:{module}:{kind}: {message}\n")


def _prepare(args) -> Path | None:
    if args.config is not None and not os.path.isfile(args.config):
        raise ConfigurationError(f"config file not found: {args.config}")
    if getattr(args, "input", None) is not None and not os.path.isfile(args.input):
        raise ConfigurationError(f"input file not found: {args.input}")
    if args.threads < 1:
        raise ConfigurationError("--threads must be at least 1")
    # validate the config before touching the file system or computing
    load_config(args.config, args.command)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory not writable: {out}")
    return out


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = _prepare(args)
        set_fft_workers(args.threads)
        return COMMANDS[args.command](args, out)
    except (NumericalFailure, InvalidEnsembleError) as exc:
        _report(_origin_module(exc), exc.kind, str(exc))
        return EXIT_NUMERICAL
    except WavekitError as exc:
        _report(_origin_module(exc), exc.kind, str(exc))
        return EXIT_INVALID
    except OSError as exc:
        _report("cli", "io", str(exc))
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - unexpected failures are bugs
        traceback.print_exc()
        _report(_origin_module(exc), "internal", repr(exc))
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
