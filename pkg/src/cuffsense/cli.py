"""Command-line entry point: simulate | calibrate | process | correlate | report."""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import session_io as sio
from .config import ToolkitConfig, load_config, load_session_spec
from .errors import ConfigError, ParseError, ToolkitError
from .fx29 import STANDARD_WEIGHTS_KG, CalibrationRecord, Condition, LoadCellConfig, run_verification
from .metrics import correlate_all, format_report_table, load_fixture, reports_from_csv, reports_to_csv
from .pipeline import process_streams
from .segmentation import CycleEnsemble, SessionCondition, ensemble_mean
from .synth import EMG_RATE_HZ, EXO_RATE_HZ, generate_session, static_weight_bench

log = logging.getLogger("cuffsense")

# Fig. 5 panels: (file stem, ensemble key, label)
PANELS = (("panel_a_ra", "ra", "robot assistance"),
          ("panel_b_if", "if", "interface force"),
          ("panel_c_esl", "esl", "ESL EMG"))


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_simulate(spec_path, cfg: ToolkitConfig, out, seed=None) -> Path:
    spec = load_session_spec(spec_path, seed)
    if cfg.daq.poll_rate_hz != EXO_RATE_HZ or cfg.signal.emg_rate_hz != EMG_RATE_HZ:
        raise ConfigError(f"synthetic sessions run at {EXO_RATE_HZ} Hz poll / {EMG_RATE_HZ} Hz EMG",
                          field="daq.poll_rate_hz")
    out = _out_dir(out)
    session = generate_session(spec, cfg.daq.cell("left"), cfg.daq.cell("right"))
    poll = session.poll(cfg.daq.topology())
    log.info("polled %d records (%d gaps)", len(poll.records), poll.gaps)
    sio.write_serial_log(out / sio.SERIAL_LOG, poll.records, cfg.daq.poll_rate_hz, cfg.daq.serial_baud)
    sio.write_emg_csv(out / sio.EMG_CSV, session.emg_times, {**session.emg, **session.box_accel})
    sio.write_text(out / sio.TRUTH, sio.dump_json(session.ground_truth().to_dict()))
    files = {name: sio.sha256(out / name) for name in (sio.SERIAL_LOG, sio.EMG_CSV, sio.TRUTH)}
    sio.write_text(out / sio.MANIFEST, sio.dump_json(sio.manifest_for(spec, cfg, files)))
    return out


def _raw_csv_source(path: Path):
    """Calibration samples from ``load_kg,trial,counts`` rows."""
    table: dict[tuple[float, int], list[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["load_kg", "trial", "counts"]:
            raise ParseError("expected header load_kg,trial,counts", path, 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                load, trial, counts = float(row[0]), int(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise ParseError(f"bad row {row!r}", path, lineno) from None
            table.setdefault((load, trial), []).append(counts)
    return lambda mass, trial: table.get((float(mass), trial), [])


def cmd_calibrate(weights, trials, trial_s, cfg: ToolkitConfig, out, source="synthetic",
                  sigma=0.0, condition="bare", seed=0, side="left") -> Path:
    out = _out_dir(out)
    cell = cfg.daq.cell(side)
    cell = LoadCellConfig(cell.full_scale_lbf, cell.zero_offset_counts, cell.counts_span, Condition(condition))
    rate = cfg.daq.poll_rate_hz
    if source == "synthetic":
        src = static_weight_bench(cell, sigma, seed, rate, trial_s)
    else:
        src = _raw_csv_source(Path(source))
    record = run_verification(list(weights), trials, trial_s, cell, src, rate)
    path = out / "calibration.csv"
    sio.write_text(path, record.to_csv())
    return path


def cmd_process(session_dir, cfg: ToolkitConfig, out=None, jobs=1) -> Path:
    session_dir = Path(session_dir)
    out = _out_dir(out or session_dir)
    manifest = sio.read_json(session_dir / sio.MANIFEST)
    spec = manifest.get("spec", {})
    condition = SessionCondition(str(spec.get("subject", "")), float(spec.get("load_kg", 0)) > 0)
    records = sio.read_serial_log(session_dir / sio.SERIAL_LOG)
    emg, box = sio.read_emg_csv(session_dir / sio.EMG_CSV, cfg.signal.emg_rate_hz)
    truth_path = session_dir / sio.TRUTH
    assistance = None
    if truth_path.exists():
        assistance = sio.assistance_from_truth(sio.read_json(truth_path), truth_path)
    result = process_streams(records, emg, box, assistance, cfg, condition, jobs)
    sio.write_text(out / sio.ENSEMBLE_CSV, result.ensemble.to_csv())
    meta = {
        "condition": sio.condition_to_dict(condition),
        "peaks_s": result.peaks_s.tolist(),
        "impacts_s": result.impacts_s.tolist(),
        "cycle_spans_us": [list(c.source_span) for c in result.ensemble.cycles],
        "cycle_impacts_pct": [list(c.impacts_pct) for c in result.ensemble.cycles],
        "config": cfg.to_dict(),
    }
    sio.write_text(out / sio.ENSEMBLE_META, sio.dump_json(meta))
    return out / sio.ENSEMBLE_CSV


def _load_ensemble(path: Path) -> CycleEnsemble:
    meta_path = path.with_name(sio.ENSEMBLE_META)
    cond = SessionCondition()
    if meta_path.exists():
        cond = sio.condition_from_dict(sio.read_json(meta_path).get("condition", {}))
    return CycleEnsemble.from_csv(path.read_text(), cond, path=path)


def cmd_correlate(ensemble_csv, out=None) -> Path:
    path = Path(ensemble_csv)
    out = _out_dir(out or path.parent)
    reports = correlate_all(_load_ensemble(path))
    target = out / sio.REPORT_CSV
    sio.write_text(target, reports_to_csv(reports))
    return target


def _panel_csv(grid, mean, std) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("grid_pct", "mean", "std"))
    for row in zip(grid, mean, std):
        w.writerow([f"{row[0]:g}", repr(float(row[1])), repr(float(row[2]))])
    return buf.getvalue()


def cmd_report(report_csvs=(), out=".", ensembles=(), fixtures=()) -> tuple[str, list[Path]]:
    out = _out_dir(out)
    reports = []
    for name in fixtures:
        reports.extend(load_fixture(name))
    for p in report_csvs:
        p = Path(p)
        reports.extend(reports_from_csv(p.read_text(), path=p))
    table = format_report_table(reports)
    written = [out / "report.txt"]
    sio.write_text(written[0], table)
    for i, ens_path in enumerate(ensembles):
        ens = _load_ensemble(Path(ens_path))
        mean, std = ensemble_mean(ens)
        suffix = "" if len(ensembles) == 1 else f"_{i}"
        for stem, key, _label in PANELS:
            if key not in mean.profiles:
                continue
            target = out / f"{stem}{suffix}.csv"
            sio.write_text(target, _panel_csv(mean.grid, mean.profiles[key], std[key]))
            written.append(target)
    return table, written


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="toolkit config file")
    common.add_argument("--seed", type=int, help="override the random seed")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for per-channel DSP")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cuffsense", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic session directory")
    p.add_argument("spec", type=Path, nargs="?", help="session spec file ([session] section)")

    p = sub.add_parser("calibrate", parents=[common], help="static-weight load cell verification")
    p.add_argument("--weights", type=float, nargs="+", default=list(STANDARD_WEIGHTS_KG))
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--trial-s", type=float, default=10.0)
    p.add_argument("--source", default="synthetic", help="'synthetic' or a load_kg,trial,counts CSV")
    p.add_argument("--sigma", type=float, default=0.0, help="synthetic noise in counts")
    p.add_argument("--condition", choices=[c.value for c in Condition], default="bare")
    p.add_argument("--side", choices=("left", "right"), default="left")

    p = sub.add_parser("process", parents=[common], help="session directory -> cycle ensemble CSV")
    p.add_argument("session", type=Path)

    p = sub.add_parser("correlate", parents=[common], help="ensemble CSV -> correlation report CSV")
    p.add_argument("ensemble", type=Path)

    p = sub.add_parser("report", parents=[common], help="text table and plot-data CSVs")
    p.add_argument("reports", type=Path, nargs="*")
    p.add_argument("--ensemble", type=Path, action="append", default=[])
    p.add_argument("--fixture", choices=("published_if_ra", "published_if_emg"), action="append", default=[])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or Path(cfg.output.dir)
        if args.command == "simulate":
            print(cmd_simulate(args.spec, cfg, out, args.seed))
        elif args.command == "calibrate":
            print(cmd_calibrate(args.weights, args.trials, args.trial_s, cfg, out, args.source,
                                args.sigma, args.condition, args.seed or 0, args.side))
        elif args.command == "process":
            print(cmd_process(args.session, cfg, args.out, args.jobs))
        elif args.command == "correlate":
            print(cmd_correlate(args.ensemble, args.out))
        elif args.command == "report":
            if not args.reports and not args.fixture:
                raise ConfigError("give report CSVs or --fixture")
            table, _ = cmd_report(args.reports, out, args.ensemble, args.fixture)
            sys.stdout.write(table)
    except (ToolkitError, OSError) as exc:
        print(f"cuffsense: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
