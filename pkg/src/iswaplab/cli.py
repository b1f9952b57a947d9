"""Command-line front end: spectroscopy | calibrate | demo-phase | rb | tomo.

Every command is deterministic given (config file, master seed): re-running
writes byte-identical data files.  The calibration record additionally
carries a timestamp, taken from SOURCE_DATE_EPOCH when set (the
reproducible-builds convention) so record files can be made byte-identical
too.  Exit codes: 0 success, 2 configuration/usage error, 3 calibration
stage failure, 4 fit failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import os
import sys

import numpy as np

from . import calibration as cal
from . import clifford, rb, tomography
from .circuits import PREP_GATES, iswap, prep_state_ideal
from .config import ConfigError, load_config
from .device import DeviceConfig, qubit_response, resonator_response
from .io import ensure_dir, write_csv, write_json, write_meta
from .quantum import apply, iswap_family, state_fidelity
from .seeds import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_FIT = 4

OUTPUT_DIR_ENV = "ISWAPLAB_OUT"


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        dt = datetime.datetime.fromtimestamp(int(epoch), datetime.timezone.utc)
    else:
        dt = datetime.datetime.now(datetime.timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _out_dir(args, cfg) -> str:
    out = args.out or os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir
    return ensure_dir(out)


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _record_path(args, out):
    return args.record or os.path.join(out, "calibration_record.json")


def _load_record(args, out) -> cal.CalibrationRecord:
    path = _record_path(args, out)
    if not os.path.exists(path):
        raise ConfigError(path, "calibration record not found; run `iswaplab calibrate` first")
    return cal.CalibrationRecord.load(path)


def _normalized(grid: np.ndarray) -> np.ndarray:
    lo, hi = float(grid.min()), float(grid.max())
    if hi - lo < 1e-30:
        return np.zeros_like(grid)
    return (grid - lo) / (hi - lo)


# --- commands --------------------------------------------------------------------------

def cmd_spectroscopy(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    sp = cfg.spectroscopy
    v_values = np.linspace(sp.v_min, sp.v_max, sp.v_steps)
    jobs = [
        ("resonator_sweep.csv", resonator_response,
         np.linspace(sp.resonator_f_min, sp.resonator_f_max, sp.resonator_f_steps),
         "readout-resonator spectroscopy vs coupler DC bias"),
        ("two_tone.csv", qubit_response,
         np.linspace(sp.qubit_f_min, sp.qubit_f_max, sp.qubit_f_steps),
         "two-tone qubit spectroscopy vs coupler DC bias"),
    ]
    for name, fn, f_values, description in jobs:
        grid = np.array([[fn(cfg.device, f, v) for f in f_values] for v in v_values])
        grid = _normalized(grid)
        rows = [(v, f, grid[i, j]) for i, v in enumerate(v_values) for j, f in enumerate(f_values)]
        path = os.path.join(out, name)
        write_csv(path, ["v_dc", "f_hz", "response"], rows)
        write_meta(path + ".meta", description, [
            ("v_dc", "coupler DC bias in volts"),
            ("f_hz", "probe frequency in Hz"),
            ("response", "magnitude normalized to the sweep min/max"),
        ])
    return EXIT_OK


def _write_sweep_csv(path, sweep: cal.SweepResult2D, description: str) -> None:
    rows = [(sweep.axis1[i], sweep.axis2[j], sweep.pop_q1[i, j], sweep.pop_q2[i, j])
            for i in range(len(sweep.axis1)) for j in range(len(sweep.axis2))]
    write_csv(path, ["axis1", "axis2", "pop_q1", "pop_q2"], rows)
    write_meta(path + ".meta", description, [
        ("axis1", sweep.axis1_label),
        ("axis2", sweep.axis2_label),
        ("pop_q1", "excited-state population of qubit 1"),
        ("pop_q2", "excited-state population of qubit 2"),
    ])


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    try:
        record, artifacts = cal.full_pipeline(cfg.device, cfg.engine, cfg.calibration,
                                              seed=derive_seed(cfg.seed, "calibration"),
                                              config_hash=cfg.hash(), timestamp=_timestamp(),
                                              jobs=args.jobs)
    except cal.CalibrationError as exc:
        print(f"calibration failed at stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    record.save(os.path.join(out, "calibration_record.json"))
    v_values, criterion = artifacts["dc_bias"]
    path = os.path.join(out, "dc_bias_scan.csv")
    write_csv(path, ["v_dc", "min_detuning_hz"], list(zip(v_values, criterion)))
    write_meta(path + ".meta", "DC bias selection criterion", [
        ("v_dc", "coupler DC bias in volts"),
        ("min_detuning_hz", "minimum coupler detuning to any fixed mode"),
    ])
    _write_sweep_csv(os.path.join(out, "amp_freq_sweep.csv"), artifacts["amp_freq"],
                     "population vs coupler drive amplitude and frequency (fixed 2 us drive)")
    _write_sweep_csv(os.path.join(out, "duration_freq_sweep.csv"), artifacts["duration_freq"],
                     "population vs coupler drive duration and frequency")
    candidates, scores = artifacts["eta_scan"]
    path = os.path.join(out, "eta_scan.csv")
    write_csv(path, ["phase_rad", "mean_fidelity"], list(zip(candidates, scores)))
    write_meta(path + ".meta", "coupler drive phase scan", [
        ("phase_rad", "candidate drive phase in radians"),
        ("mean_fidelity", "mean tomography fidelity to the ideal swap outputs"),
    ])
    print(f"calibration complete: amplitude={record.amplitude:.9g} "
          f"frequency={record.drive_frequency:.9g} Hz duration={record.duration} ns "
          f"eta={record.eta:.9g} rad vz=({record.vz_q1:.9g}, {record.vz_q2:.9g}) rad")
    return EXIT_OK


def cmd_demo_phase(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    record = _load_record(args, out)
    regimes = {"true": (True,), "false": (False,), "both": (True, False)}[args.commensurate]
    rows = []
    for prep in cal.DEMO_PREPS:
        for commensurate in regimes:
            rho, bloch, ideal = cal.phase_average_demo(
                cfg.device, cfg.engine, record, prep, commensurate,
                repetitions=cfg.demo.repetitions,
                seed=derive_seed(cfg.seed, "demo", int(commensurate)),
                noise=cfg.demo.noise, nco_offset_hz=cfg.demo.nco_offset_hz)
            fid = state_fidelity(rho, ideal)
            for qubit in (1, 2):
                b = bloch[qubit]
                rows.append((prep, int(commensurate), qubit, b.x, b.y, b.z, b.norm, fid))
    path = os.path.join(out, "bloch_vectors.csv")
    write_csv(path, ["prep", "commensurate", "qubit", "x", "y", "z", "norm", "fidelity"], rows)
    write_meta(path + ".meta",
               "repetition-averaged post-gate Bloch vectors per phase regime", [
                   ("prep", "prepared state label"),
                   ("commensurate", "1 when every NCO is commensurate with the repetition rate"),
                   ("qubit", "qubit index"),
                   ("x", "Bloch x"), ("y", "Bloch y"), ("z", "Bloch z"),
                   ("norm", "Bloch vector length"),
                   ("fidelity", "fidelity of the averaged state to the ideal output"),
               ])
    return EXIT_OK


def cmd_rb(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    record = _load_record(args, out)
    group = clifford.load_or_build(os.path.join(out, "clifford_group.bin"))
    rb_cfg = dataclasses.replace(cfg.rb, interleave=(args.interleave == "iswap"),
                                 seed=derive_seed(cfg.seed, "rb"))
    try:
        result = rb.run_rb(rb_cfg, cfg.device, group,
                           iswap_duration_ns=record.duration, jobs=args.jobs)
    except rb.FitError as exc:
        print(f"decay fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    path = os.path.join(out, "rb_data.csv")
    write_csv(path, ["depth", "realization", "pop_q1", "pop_q2", "interleaved"],
              result.rows)
    write_meta(path + ".meta", "randomized benchmarking ground-state populations", [
        ("depth", "number of Clifford gates"),
        ("realization", "random sequence index"),
        ("pop_q1", "qubit 1 ground-state fraction"),
        ("pop_q2", "qubit 2 ground-state fraction"),
        ("interleaved", "1 when the target gate is interleaved"),
    ])
    fit_obj = {"dimension": result.dimension, "curves": {}, "gate_error": {}}
    for (curve, qubit), fr in result.fits.items():
        fit_obj["curves"][f"{curve}_q{qubit}"] = {
            "A": fr.a, "B": fr.b, "p": fr.p,
            "A_err": fr.a_err, "B_err": fr.b_err, "p_err": fr.p_err,
            "means": list(result.means[(curve, qubit)]),
            "depths": list(result.depths),
        }
    for qubit in (1, 2):
        err = result.gate_error[qubit]
        fit_obj["gate_error"][f"q{qubit}"] = err
        if err is not None and err < 0:
            fit_obj["gate_error"][f"q{qubit}_flag"] = "negative estimate: below measurement floor"
    write_json(os.path.join(out, "fit.json"), fit_obj)
    if rb_cfg.interleave:
        print(f"gate error: q1 = {result.gate_error[1]:.4f}, q2 = {result.gate_error[2]:.4f}")
    return EXIT_OK


def cmd_tomo(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    record = _load_record(args, out)
    if args.prep not in PREP_GATES:
        raise ConfigError("--prep", f"unknown preparation {args.prep!r}; "
                                    f"choose from {sorted(PREP_GATES)}")
    gates = PREP_GATES[args.prep]
    ideal = prep_state_ideal(args.prep).density()
    if args.apply_gate:
        gates = gates + (iswap(),)
        ideal = apply(iswap_family(np.pi, 0.0), prep_state_ideal(args.prep)).density()
    settings = tomography.all_settings(shots=cfg.tomo.shots,
                                       seed=derive_seed(cfg.seed, "tomo"))
    if cfg.tomo.shots > 0:
        counts = tomography.run_settings(cfg.device, cfg.engine, record.gate_params(),
                                         gates, settings, noise=cfg.tomo.noise)
        exps = tomography.expectations_from_counts(settings, counts)
    else:
        probs = tomography.setting_probabilities(cfg.device, cfg.engine, record.gate_params(),
                                                 gates, settings, noise=cfg.tomo.noise)[0]
        exps = tomography.expectations_from_probabilities(settings, probs)
    rho = tomography.reconstruct_from_expectations(exps)
    blochs = {f"q{q}": dataclasses.asdict(tomography.bloch_vector(rho, q)) for q in (1, 2)}
    obj = {
        "prep": args.prep,
        "gate_applied": bool(args.apply_gate),
        "pauli_expectations": {k: exps[k] for k in sorted(exps)},
        "density_matrix": {
            "re": [[float(v.real) for v in row] for row in rho.matrix],
            "im": [[float(v.imag) for v in row] for row in rho.matrix],
        },
        "bloch_vectors": blochs,
        "fidelity_to_ideal": state_fidelity(rho, ideal),
    }
    write_json(os.path.join(out, f"tomography_{args.prep}.json"), obj)
    print(f"prep {args.prep}: fidelity to ideal = {obj['fidelity_to_ideal']:.4f}")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iswaplab",
        description="Phase-coherent two-qubit swap-gate experiment in software")
    parser.add_argument("--config", required=True, help="TOML or JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps/realizations")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUTPUT_DIR_ENV} or config output_dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("spectroscopy", help="emit resonator and two-tone sweep data")
    sub.add_parser("calibrate", help="run the full gate calibration pipeline")

    demo = sub.add_parser("demo-phase", help="repetition-averaged Bloch vectors per phase regime")
    demo.add_argument("--commensurate", choices=("true", "false", "both"), default="both")
    demo.add_argument("--record", default=None, help="path to calibration_record.json")

    rb_cmd = sub.add_parser("rb", help="randomized benchmarking")
    rb_cmd.add_argument("--interleave", choices=("iswap", "none"), default="iswap")
    rb_cmd.add_argument("--record", default=None)

    tomo = sub.add_parser("tomo", help="state tomography of a labeled preparation")
    tomo.add_argument("--prep", required=True)
    tomo.add_argument("--apply-gate", action="store_true")
    tomo.add_argument("--record", default=None)
    return parser


_COMMANDS = {
    "spectroscopy": cmd_spectroscopy,
    "calibrate": cmd_calibrate,
    "demo-phase": cmd_demo_phase,
    "rb": cmd_rb,
    "tomo": cmd_tomo,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
