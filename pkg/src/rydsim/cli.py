"""Command-line front end.

Every command writes plain data files (CSV/JSON) plus ``<out>.manifest.json``.
Failures print one JSON object on stderr and exit with a command-independent
code (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .analysis import fit_scaling, t2_from_curve
from .dressed import performance_index, scan_landscape
from .grape import (
    GrapeConfig,
    PulseSchedule,
    default_t_final,
    gap_scan,
    grape_optimize,
    initial_pulses,
    pulse_spectrum,
    read_pulses,
    write_pulses,
)
from .hilbert import dimension_table
from .model import ConfigError, NoiseParams, PhysicalParams, dump_config, load_params, load_presets, mhz, to_mhz
from .noise import coherence_decay_scan, run_ensemble

CONFIG_ENV = "RYDSIM_CONFIG"
BUDGET_ENV = "RYDSIM_MEMORY_BUDGET_MB"
DEFAULT_BUDGET_MB = 1024.0

EXIT_CODES = {"usage": 2, "config": 3, "size": 4, "input": 5, "numerical": 6}


class CliError(Exception):
    def __init__(self, kind: str, message: str, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


@dataclass
class RunManifest:
    command: list[str]
    config: str
    seed: int | None
    version: str
    outputs: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0

    def write(self, path: Path) -> None:
        data = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
            "outputs": self.outputs,
            "wall_time_s": self.wall_time_s,
        }
        path.write_text(json.dumps(data, indent=2) + "\n")


def full_model_bytes(n_atoms: int, krylov_dim: int = 30) -> float:
    """Rough peak memory of one full-model trajectory."""
    dim = 3**n_atoms
    vectors = dim * 16 * (krylov_dim + 8)
    sparse = dim * (2 * n_atoms + 1) * 12 * 3
    return float(vectors + sparse)


def guard_full_size(n_atoms: int, budget_mb: float | None = None) -> None:
    budget = budget_mb if budget_mb is not None else float(os.environ.get(BUDGET_ENV, DEFAULT_BUDGET_MB))
    need = full_model_bytes(n_atoms) / 2**20
    if need > budget:
        raise CliError(
            "size",
            f"full model for N={n_atoms} needs ~{need:.0f} MB (budget {budget:.0f} MB); "
            "use 'rydsim optimize' for restricted-space results",
            n_atoms=n_atoms,
        )


def _read_config(path: str | None):
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return load_params(""), "<defaults>"
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("input", f"cannot read config {path}: {exc.strerror}") from None
    try:
        return load_params(text), text
    except ConfigError as exc:
        raise CliError("config", str(exc), key=exc.key) from None


def _load_pulses(path: str, cap=None) -> PulseSchedule:
    try:
        with open(path) as fh:
            return read_pulses(fh, cap)
    except OSError as exc:
        raise CliError("input", f"cannot read pulses {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError("input", f"bad pulse file {path}: {exc}") from None


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else (str(r) if isinstance(r, (int, np.integer)) else _fmt(r)) for r in row])


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _require_out(args) -> Path:
    if not args.out:
        raise CliError("usage", f"{args.command} requires --out")
    return Path(args.out)


def cmd_basis(args, ctx):
    out = _require_out(args)
    fib = [0, 1]
    while len(fib) < args.n_max + 3:
        fib.append(fib[-1] + fib[-2])
    rows = [(n, full, two, r, fib[n + 2]) for n, full, two, r in dimension_table(args.n_max, args.n_min)]
    _write_csv(out, ["n_atoms", "full_dim", "two_level_dim", "restricted_dim", "fibonacci_n_plus_2"], rows)
    return [out]


def cmd_landscape(args, ctx):
    out = _require_out(args)
    cfg, _ = ctx["config"]
    omega = mhz(args.omega) if args.omega is not None else cfg.params.omega
    d = np.linspace(mhz(args.delta_min), mhz(args.delta_max), args.n_delta)
    v = np.linspace(mhz(args.v_min), mhz(args.v_max), args.n_v)
    land = scan_landscape(d, v, omega)
    rows = [(to_mhz(dd), to_mhz(vv), to_mhz(j), p) for dd, vv, j, p in land.rows()]
    _write_csv(out, ["delta_mhz", "v_mhz", "j_mhz", "p_r"], rows)
    outputs = [out]
    if args.performance_out:
        pr = np.linspace(0.02, 0.48, 47)
        curve = performance_index(pr, omega, cfg.params.v_nn)
        perf = Path(args.performance_out)
        _write_csv(
            perf,
            ["p_r", "delta_mhz", "j_mhz", "bw_j_mhz", "t2_proxy", "performance"],
            [(a, to_mhz(b), to_mhz(c), to_mhz(e), f, g) for a, b, c, e, f, g in zip(
                curve.p_r, curve.delta, curve.j, curve.bw_j, curve.t2_proxy, curve.performance)],
        )
        outputs.append(perf)
    return outputs


def cmd_optimize(args, ctx):
    out = _require_out(args)
    cfg, _ = ctx["config"]
    tf = args.tf if args.tf is not None else default_t_final(args.n, reference=True)
    cap = mhz(args.omega_mw_max) if args.omega_mw_max is not None else cfg.preset.omega_mw_max
    gcfg = GrapeConfig(
        epsilon_h=args.epsilon,
        n_slices=args.slices,
        t_final=tf,
        fidelity_target=args.target,
        max_iterations=args.max_iter,
        omega_mw_cap=cap,
        optimize_amplitude=args.optimize_amplitude,
        safeguard=args.safeguard,
        gradient=args.gradient,
    )
    trace = grape_optimize(initial_pulses(args.n, gcfg), config=gcfg)
    with open(out, "w") as fh:
        write_pulses(trace.schedule, fh)
    summary = out.with_suffix(out.suffix + ".trace.csv")
    _write_csv(summary, ["iteration", "fidelity"], list(enumerate(trace.fidelities)))
    print(json.dumps({"n_atoms": args.n, "t_final_us": tf, "iterations": trace.iterations,
                      "fidelity": trace.final_fidelity, "converged": trace.converged, "backend": kernels.BACKEND}))
    return [out, summary]


def cmd_simulate(args, ctx):
    if not args.pulses:
        raise CliError("usage", "simulate requires --pulses (a pulse file from 'rydsim optimize')", flag="--pulses")
    out = _require_out(args)
    cfg, _ = ctx["config"]
    pulses = _load_pulses(args.pulses)
    params = cfg.params
    if args.n is not None and args.n != pulses.n_atoms:
        raise CliError("usage", f"--n {args.n} does not match the pulse file ({pulses.n_atoms} atoms)")
    if params.n_atoms != pulses.n_atoms:
        params = PhysicalParams(pulses.n_atoms, params.omega, params.delta, params.c6, params.r0, params.interaction_range)
    guard_full_size(params.n_atoms)
    noise = cfg.noise
    if args.no_position_noise:
        noise = NoiseParams(0.0, noise.temperature, noise.atom_mass, noise.k_eff)
    if args.no_doppler:
        noise = NoiseParams(noise.sigma_pos, 0.0, noise.atom_mass, noise.k_eff)
    ens = run_ensemble(params, noise, pulses, args.shots, ctx["seed"], threads=args.threads)
    data = {
        "params": {
            "n_atoms": params.n_atoms,
            "omega_mhz": to_mhz(params.omega),
            "delta_mhz": to_mhz(params.delta),
            "v_nn_mhz": to_mhz(params.v_nn),
            "r0_um": params.r0,
            "interaction_range": params.interaction_range,
            "sigma_pos_um": noise.sigma_pos,
            "temperature_uk": noise.temperature,
            "sigma_doppler_khz": to_mhz(noise.sigma_doppler) * 1e3,
            "t_final_us": pulses.grid.t_final,
            "slices": pulses.n_slices,
        },
        "seed": ctx["seed"],
        "shots": [
            {"shot_index": int(i), "fidelity": None if math.isnan(f) else float(f),
             "projection_ratio": None if math.isnan(p) else float(p)}
            for i, f, p in zip(ens.shot_indices, ens.fidelities, ens.projections)
        ],
        "failures": {str(k): v for k, v in ens.failures.items()},
        "statistics": {
            "n_shots": int(len(ens.fidelities)),
            "n_ok": ens.n_ok,
            "mean_fidelity": ens.mean,
            "std_fidelity": ens.std,
            "stderr_fidelity": ens.stderr,
            "mean_projection_ratio": ens.mean_projection,
        },
    }
    _dump_json(out, data)
    return [out]


def cmd_t2(args, ctx):
    out = _require_out(args)
    cfg, _ = ctx["config"]
    p = cfg.params
    params = PhysicalParams(args.n, p.omega, p.delta, p.c6, p.r0, p.interaction_range)
    guard_full_size(args.n)
    tau = np.linspace(0.0, args.tau_max, args.n_tau)
    scan = coherence_decay_scan(params, cfg.noise, args.shots, tau, args.mode, ctx["seed"], threads=args.threads)
    curve = scan.mean_coherence
    _write_csv(out, ["tau_us", "coherence"], zip(tau, curve))
    est = t2_from_curve(tau, curve)
    fit_path = out.with_suffix(out.suffix + ".fit.json")
    _dump_json(fit_path, {"n_atoms": args.n, "drive_mode": args.mode, "t2_fit_us": est.t2_fit,
                          "t2_crossing_us": est.t2_crossing, "residual": est.residual,
                          "extrapolated": est.extrapolated, "shots": args.shots})
    print(fit_path.read_text(), end="")
    return [out, fit_path]


def cmd_sweep_temperature(args, ctx):
    out = _require_out(args)
    cfg, _ = ctx["config"]
    base = cfg.params
    guard_full_size(args.n)
    tf = args.tf if args.tf is not None else default_t_final(args.n, reference=True)
    rows = []
    for preset in load_presets():
        params = PhysicalParams(args.n, base.omega, preset.delta, preset.v * base.r0**6, base.r0, base.interaction_range)
        gcfg = GrapeConfig(t_final=tf, omega_mw_cap=preset.omega_mw_max, max_iterations=args.max_iter)
        trace = grape_optimize(initial_pulses(args.n, gcfg), config=gcfg)
        t = preset.temperature
        noise = NoiseParams(sigma_pos=args.sigma_ref * math.sqrt(t / 10.0), temperature=t)
        ens = run_ensemble(params, noise, trace.schedule, args.shots, ctx["seed"], threads=args.threads)
        rows.append((t, to_mhz(preset.v), to_mhz(preset.delta), to_mhz(preset.omega_mw_max), noise.sigma_pos,
                     trace.final_fidelity, ens.mean, ens.std if ens.std is not None else math.nan, ens.n_ok))
    _write_csv(out, ["temperature_uk", "v_mhz", "delta_mhz", "omega_mw_max_mhz", "sigma_pos_um",
                     "restricted_fidelity", "mean_fidelity", "std_fidelity", "n_ok"], rows)
    return [out]


def cmd_spectrum(args, ctx):
    out = _require_out(args)
    sched = _load_pulses(args.pulsefile)
    spec = pulse_spectrum(sched, pad_factor=args.pad)
    _write_csv(out, ["freq_mhz"] + [f"{lab}_magnitude" for lab in spec.labels],
               (np.column_stack([spec.freq_mhz, spec.magnitude.T])).tolist())
    widths = out.with_suffix(out.suffix + ".widths.json")
    _dump_json(widths, {lab: float(w) for lab, w in zip(spec.labels, spec.widths_mhz)})
    return [out, widths]


def _fit_points(paths, points):
    xs, ys = [], []
    for item in points or []:
        x, y = item.split(":")
        xs.append(float(x))
        ys.append(float(y))
    for path in paths or []:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise CliError("input", f"cannot read {path}: {exc}") from None
        if "points" in data:
            for x, y in data["points"]:
                xs.append(float(x))
                ys.append(float(y))
        elif "statistics" in data:
            xs.append(float(data["params"]["n_atoms"]))
            ys.append(float(data["statistics"]["mean_fidelity"]))
        elif "t2_fit_us" in data:
            xs.append(float(data["n_atoms"]))
            ys.append(float(data["t2_crossing_us"] or data["t2_fit_us"]))
        else:
            raise CliError("input", f"{path}: no 'points', simulate statistics or t2 fit found")
    if len(xs) < 2:
        raise CliError("input", "fit needs at least two points (--in files and/or --points x:y)")
    return xs, ys


def cmd_fit(args, ctx):
    xs, ys = _fit_points(args.inputs, args.points)
    try:
        res = fit_scaling(xs, ys, args.law)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    data = {"law": res.transform.value, "slope": res.slope, "intercept": res.intercept,
            "r_squared": res.r_squared, "slope_stderr": res.slope_stderr,
            "intercept_stderr": res.intercept_stderr, "excluded_x": list(res.excluded),
            "points": [[float(x), float(y)] for x, y in zip(res.xs, res.ys)]}
    if args.predict is not None:
        data["prediction"] = {"x": args.predict, "y": float(res.predict(args.predict))}
    text = json.dumps(data, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
        return [Path(args.out)]
    return []


def cmd_gapscan(args, ctx):
    out = _require_out(args)
    grid = np.linspace(mhz(args.min), mhz(args.max), args.points)
    scan = gap_scan(args.n, grid, mhz(args.omega_mw), mhz(args.offset))
    dim = scan.energies.shape[1]
    rows = [
        [to_mhz(md), to_mhz(gs), to_mhz(gf)] + [to_mhz(e) for e in es]
        for md, gs, gf, es in zip(scan.minus_delta, scan.gaps("symmetric"), scan.gaps("full"), scan.energies)
    ]
    _write_csv(out, ["minus_delta_mhz", "gap_symmetric_mhz", "gap_full_mhz"] + [f"e{k}_mhz" for k in range(dim)], rows)
    size, where = scan.min_gap("symmetric")
    print(json.dumps({"min_gap_mhz": to_mhz(size), "at_minus_delta_mhz": to_mhz(where),
                      "ground_multiplicity_start": scan.ground_multiplicity(0, sector="symmetric"),
                      "ground_multiplicity_end": scan.ground_multiplicity(-1, sector="symmetric"),
                      "ground_multiplicity_end_full": scan.ground_multiplicity(-1, sector="full")}))
    return [out]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help=f"config file (default: ${CONFIG_ENV} or built-in defaults)")
    common.add_argument("--seed", type=int, help="master seed (default: config seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo shots")
    common.add_argument("--out", help="output file")

    parser = _Parser(prog="rydsim", description="Rydberg-dressed GHZ preparation toolkit")
    parser.add_argument("--version", action="version", version=f"rydsim {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("basis", parents=[common], help="Hilbert-space dimensions per N")
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--n-min", type=int, default=1)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("landscape", parents=[common], help="dressed interaction J over (Delta, V)")
    p.add_argument("--omega", type=float, help="Rabi frequency / 2pi, MHz (default: config)")
    p.add_argument("--delta-min", type=float, default=-20.0)
    p.add_argument("--delta-max", type=float, default=-0.5)
    p.add_argument("--n-delta", type=int, default=79)
    p.add_argument("--v-min", type=float, default=1.0)
    p.add_argument("--v-max", type=float, default=60.0)
    p.add_argument("--n-v", type=int, default=60)
    p.add_argument("--performance-out", help="also write the performance index vs P_r")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("optimize", parents=[common], help="GRAPE in the restricted subspace")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tf", type=float, help="t_f in us (default: reference table, else N/2)")
    p.add_argument("--slices", type=int, default=200)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--target", type=float, default=0.99)
    p.add_argument("--epsilon", type=float, help="step epsilon_h (default: omega_mw_max / (2 dt))")
    p.add_argument("--omega-mw-max", type=float, help="microwave cap / 2pi, MHz (default: config)")
    p.add_argument("--optimize-amplitude", action="store_true")
    p.add_argument("--safeguard", action="store_true", help="halve the step after two fidelity drops")
    p.add_argument("--gradient", choices=["exact", "first_order"], default="exact")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", parents=[common], help="noisy full-model ensemble of a pulse file")
    p.add_argument("--pulses", help="pulse CSV from 'rydsim optimize'")
    p.add_argument("--n", type=int)
    p.add_argument("--shots", type=int, default=200)
    p.add_argument("--no-position-noise", action="store_true")
    p.add_argument("--no-doppler", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("t2", parents=[common], help="GHZ coherence decay and T2")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tau-max", type=float, default=30.0)
    p.add_argument("--n-tau", type=int, default=61)
    p.add_argument("--shots", type=int, default=200)
    p.add_argument("--mode", choices=["dressing_on_mw_off", "all_off"], default="dressing_on_mw_off")
    p.set_defaults(func=cmd_t2)

    p = sub.add_parser("sweep-temperature", parents=[common], help="fidelity for each temperature preset")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--tf", type=float)
    p.add_argument("--shots", type=int, default=200)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--sigma-ref", type=float, default=0.1, help="position spread at 10 uK, um")
    p.set_defaults(func=cmd_sweep_temperature)

    p = sub.add_parser("spectrum", parents=[common], help="DFT magnitude of pulse controls")
    p.add_argument("pulsefile")
    p.add_argument("--pad", type=int, default=8)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("fit", parents=[common], help="scaling-law regression")
    p.add_argument("--law", choices=["sqrtN", "sqrtT", "inv_sqrtN", "linear"], default="sqrtN")
    p.add_argument("--in", dest="inputs", nargs="*", help="JSON inputs (simulate results, t2 fits, or {'points': ...})")
    p.add_argument("--points", nargs="*", help="x:y pairs")
    p.add_argument("--predict", type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("gapscan", parents=[common], help="restricted spectrum along the adiabatic sweep")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--omega-mw", type=float, default=0.2, help="MHz")
    p.add_argument("--offset", type=float, default=0.5, help="edge offset, MHz")
    p.add_argument("--min", type=float, default=-2.0, help="-delta start, MHz")
    p.add_argument("--max", type=float, default=2.0, help="-delta end, MHz")
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_gapscan)
    return parser


def _emit_error(kind: str, message: str, extra=None) -> int:
    code = EXIT_CODES[kind]
    payload = {"error": kind, "message": message, "exit_code": code}
    payload.update(extra or {})
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    start = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("usage", "a command is required; see 'rydsim --help'")
        cfg, text = _read_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        ctx = {"config": (cfg, text), "seed": seed}
        outputs = args.func(args, ctx)
    except CliError as exc:
        return _emit_error(exc.kind, str(exc), exc.extra)
    except ConfigError as exc:
        return _emit_error("config", str(exc), {"key": exc.key})
    except (ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return _emit_error("numerical", f"{type(exc).__name__}: {exc}")
    if outputs:
        manifest = RunManifest(
            ["rydsim"] + argv,
            dump_config(cfg),
            seed,
            f"rydsim {__version__} ({kernels.BACKEND})",
            [str(o) for o in outputs],
            time.perf_counter() - start,
        )
        manifest.write(Path(str(outputs[0]) + ".manifest.json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
