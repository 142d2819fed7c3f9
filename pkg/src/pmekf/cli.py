"""Command-line entry points binding the pipeline together.

Subcommands: estimate, simulate, observability, evaluate, preprocess.
Outputs are plain CSV/text with fixed float formatting so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io_csv
from .config import load_all
from .ekf import constant_hr_mode
from .evaluation import (ActivitySegment, SubjectData, iaa_windows,
                         loso_harness, violation_rate, window_last,
                         window_means)
from .errors import NumericalFailure
from .io_csv import FLOAT_FMT, write_channel, write_filter_output, write_segments
from .observability import trajectory_report
from .session import estimate_session, load_session, reference_paee, session_inputs
from .signals import ImuTriplet, butterworth_lowpass, hr_to_input, remove_gravity
from .simulator import (Scenario, parse_scenario, simulate_forward,
                        synthesize_measurements)
from .timeseries import TimeSeries

STATE_LABELS = ("P_A_O2", "P_A_CO2", "C_v_O2", "C_v_CO2", "VT_A")


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_estimate(args) -> int:
    params, cfg, subject = load_all(args.params)
    if args.constant_hr:
        cfg = constant_hr_mode(cfg)
    bundle = load_session(args.session, subject)
    out, report = estimate_session(bundle, params, cfg)
    out_dir = _out_dir(args)
    write_filter_output(out_dir / "states_paee.csv", out)
    if report is not None and not args.no_reference:
        _write_eval_report(out_dir / "report", {"pmekf": report})
    elif not args.no_reference and bundle.reference_gas is None \
            and bundle.truth is None:
        print("estimate: no reference channels found; metrics skipped",
              file=sys.stderr)
    print(f"estimate: wrote {out_dir / 'states_paee.csv'}")
    if report is not None:
        print(f"estimate: R^2 = {report.r2_overall:.4f}, "
              f"violation rate = {report.violation_rate:.4%}")
    return 0


def cmd_simulate(args) -> int:
    params, _, _ = load_all(args.params)
    scenario = parse_scenario(Path(args.scenario).read_text(),
                              noise_sigma_frac=args.noise_frac, seed=args.seed)
    result = simulate_forward(scenario, params)
    noisy = synthesize_measurements(result.proxies_clean,
                                    scenario.noise_sigma_frac, scenario.seed)
    out_dir = _out_dir(args)
    n = len(result.times)
    write_channel(out_dir / "hr.csv",
                  TimeSeries(0.0, 1.0, 60.0 * result.hr_bps, "bpm"))
    write_channel(out_dir / "proxies.csv", TimeSeries(0.0, 1.0, noisy, "L/s"))
    _write_truth(out_dir / "truth.csv", result)
    segments = []
    t = 0.0
    for seg in scenario.segments:
        intensity = "low" if seg.intensity == "rest" else seg.intensity
        segments.append(ActivitySegment(seg.intensity, intensity,
                                        t, t + seg.duration_s))
        t += seg.duration_s
    write_segments(out_dir / "segments.csv", segments)
    print(f"simulate: wrote hr.csv, proxies.csv, truth.csv, segments.csv "
          f"to {out_dir}")
    return 0


def _write_truth(path: Path, result) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("t,x1,x2,x3,x4,x5,paee_kcals\n")
        for k in range(len(result.times)):
            row = ([_fmt(result.times[k])]
                   + [_fmt(v) for v in result.states[k]]
                   + [_fmt(result.paee_true[k])])
            fh.write(",".join(row) + "\n")


def cmd_observability(args) -> int:
    params, cfg, subject = load_all(args.params)
    target = Path(args.target)
    if target.is_dir():
        bundle = load_session(target, subject)
        params_subj = params.with_subject(bundle.subject)
        u, z = session_inputs(bundle, rq=params_subj.rq)
        from .ekf import run_filter
        out = run_filter(u, z, cfg, params_subj, bundle.subject)
        states, u_series = out.states, u
        params = params_subj
    else:
        data = io_csv.read_filter_output(target)
        states = data["states"]
        hr_path = target.parent / "hr.csv"
        if hr_path.exists():
            u_series = hr_to_input(io_csv.read_channel(hr_path)).values
            u_series = u_series[:len(states)]
        else:
            u_series = np.full(len(states), params.u_basal)
    if args.zero_input:
        u_series = np.zeros(len(states))
    report = trajectory_report(states, u_series, params, order=args.order)

    out_dir = _out_dir(args)
    with (out_dir / "observability.csv").open("w") as fh:
        fh.write("state,score,mean_rank\n")
        for name, score in zip(STATE_LABELS, report.per_state_scores):
            fh.write(f"{name},{_fmt(score)},{_fmt(report.mean_rank)}\n")
    full = np.mean(report.rank_per_step == 5)
    lines = ["local observability along the trajectory",
             f"  evaluation points: {len(report.rank_per_step)}",
             f"  mean rank: {report.mean_rank:.3f} "
             f"(full rank at {full:.1%} of points)",
             "  normalized per-state scores:"]
    for name, score in zip(STATE_LABELS, report.per_state_scores):
        lines.append(f"    {name:<8s} {score:.3f}")
    text = "\n".join(lines)
    (out_dir / "observability.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_preprocess(args) -> int:
    params, _, subject = load_all(args.params)
    bundle = load_session(args.session, subject)
    u, z = session_inputs(bundle, rq=params.rq)
    out_dir = _out_dir(args)
    write_channel(out_dir / "proxies.csv", TimeSeries(0.0, 1.0, z, "L/s"))
    print(f"preprocess: wrote {out_dir / 'proxies.csv'} ({len(z)} samples)")
    return 0


def _subject_data(subject_id: str, bundle, params, cfg) -> SubjectData:
    out, _ = estimate_session(bundle, params, cfg)
    ref = reference_paee(bundle)
    if ref is None:
        raise FileNotFoundError("no reference channels")
    n = min(len(ref), len(out.paee.values))
    u, z = session_inputs(bundle, rq=params.rq)

    if bundle.imu is not None:
        free = [butterworth_lowpass(remove_gravity(ch)).values
                for ch in bundle.imu.channels()]
        feats = iaa_windows(free, bundle.imu.pelvis.rate)
    else:
        # proxy sessions: windowed proxy integrals as activity features
        feats = iaa_windows([z[:, 0], z[:, 1]], 1.0)
    n_win = min(len(feats), len(ref) // 30, len(u) // 30)
    feats = feats[:n_win]
    hr_w = window_last(u * 60.0, 1.0, n_win=n_win)
    y_w = window_means(ref, 1.0, n_win=n_win)
    return SubjectData(subject_id, feats, hr_w, y_w,
                       out.paee.values[:n], ref[:n], bundle.segments)


def cmd_evaluate(args) -> int:
    params, cfg, subject = load_all(args.params)
    root = Path(args.dataset)
    subject_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(subject_dirs) < 2:
        raise ValueError("evaluate needs at least 2 subject directories")

    loaded, skipped = [], []
    for d in subject_dirs:
        try:
            bundle = load_session(d, subject)
            loaded.append((d.name, bundle))
        except (FileNotFoundError, ValueError) as exc:
            skipped.append((d.name, str(exc)))

    modes = [("hr", cfg, True)]
    if not args.no_hr_only:
        modes.append(("no_hr", constant_hr_mode(cfg), False))
    rows = {}
    for mode_name, mode_cfg, include_hr in modes:
        subjects = [_subject_data(name, b, params, mode_cfg)
                    for name, b in loaded]
        folds = loso_harness(subjects, include_hr=include_hr)
        rows[mode_name] = folds

    out_dir = _out_dir(args)
    _write_evaluate_report(out_dir, rows, skipped)
    print((out_dir / "report.txt").read_text())
    return 0


def _median_minmax(vals):
    return (float(np.median(vals)), float(np.min(vals)), float(np.max(vals)))


def _write_evaluate_report(out_dir: Path, rows, skipped) -> None:
    models = ("pmekf", "lr")
    lines = ["PAEE estimation with and without heart rate", ""]
    csv_lines = ["metric,intensity,model,mode,median,min,max"]
    for mode_name, folds in rows.items():
        lines.append(f"[{mode_name}]")
        for model in models:
            r2 = _median_minmax([f.r2[model] for f in folds])
            viol = float(np.mean([f.violation[model] for f in folds]))
            lines.append(f"  {model:6s} R^2 median {r2[0]:.3f} "
                         f"(min {r2[1]:.3f}, max {r2[2]:.3f}); "
                         f"violation rate {viol:.2%}")
            csv_lines.append(f"r2,overall,{model},{mode_name},"
                             f"{_fmt(r2[0])},{_fmt(r2[1])},{_fmt(r2[2])}")
            csv_lines.append(f"violation,overall,{model},{mode_name},"
                             f"{_fmt(viol)},{_fmt(viol)},{_fmt(viol)}")
            per_int: dict[str, list[float]] = {}
            for f in folds:
                for intensity, (med, _, _) in f.nrmse.get(model, {}).items():
                    per_int.setdefault(intensity, []).append(med)
            for intensity in ("low", "moderate", "moderate-high"):
                if intensity in per_int:
                    m = _median_minmax(per_int[intensity])
                    lines.append(f"         NRMSE[{intensity}] median {m[0]:.3f} "
                                 f"(min {m[1]:.3f}, max {m[2]:.3f})")
                    csv_lines.append(f"nrmse,{intensity},{model},{mode_name},"
                                     f"{_fmt(m[0])},{_fmt(m[1])},{_fmt(m[2])}")
        lines.append("")
    for name, reason in skipped:
        lines.append(f"skipped subject {name}: {reason}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    (out_dir / "report.csv").write_text("\n".join(csv_lines) + "\n")


def _write_eval_report(stem: Path, reports) -> None:
    lines = []
    csv_lines = ["model,metric,intensity,value"]
    for model, rep in reports.items():
        lines.append(f"{model}: R^2 {rep.r2_overall:.4f}, "
                     f"violation rate {rep.violation_rate:.2%}")
        csv_lines.append(f"{model},r2,overall,{_fmt(rep.r2_overall)}")
        csv_lines.append(f"{model},violation,overall,{_fmt(rep.violation_rate)}")
        for intensity, (med, lo, hi) in rep.nrmse_by_intensity.items():
            lines.append(f"  NRMSE[{intensity}]: median {med:.3f} "
                         f"({lo:.3f}-{hi:.3f})")
            csv_lines.append(f"{model},nrmse_median,{intensity},{_fmt(med)}")
    Path(str(stem) + ".txt").write_text("\n".join(lines) + "\n")
    Path(str(stem) + ".csv").write_text("\n".join(csv_lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmekf",
        description="Physiological-model EKF for activity energy expenditure")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run the filter on a session directory")
    p.add_argument("session", type=Path)
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--constant-hr", action="store_true",
                   help="replace measured HR with a fixed 70 bpm input")
    p.add_argument("--no-reference", action="store_true",
                   help="skip metric computation even when references exist")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate a synthetic session")
    p.add_argument("scenario", type=Path)
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("observability",
                       help="local observability report for a session or "
                            "states CSV")
    p.add_argument("target", type=Path)
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--zero-input", action="store_true",
                   help="evaluate with zero heart-rate input")
    p.set_defaults(func=cmd_observability)

    p = sub.add_parser("evaluate", help="leave-one-subject-out comparison")
    p.add_argument("dataset", type=Path)
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--no-hr-only", action="store_true",
                   help="skip the constant-HR / no-HR comparison pass")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("preprocess", help="IMU and HR channels to 1 Hz proxies")
    p.add_argument("session", type=Path)
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_preprocess)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"pmekf {args.command}: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"pmekf {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
