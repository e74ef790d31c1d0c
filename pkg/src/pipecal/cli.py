"""Experiment harness.

Subcommands reproduce the reference experiments and write CSV files only
(plotting is left to external tools):

* ``convergence`` -- parameter error norm over time for a list of step sizes
  (``convergence.csv``: mu,k,error_norm).
* ``inl`` -- INL before/after calibration (``inl.csv``:
  code,inl_true,inl_est,inl_residual, plus ``inl_correction.csv`` with the
  raw per-code correction).
* ``bound`` -- analytic and empirical step-size stability bounds.
* ``twophase`` -- initial projection pass then background LMS, with optional
  mid-run profile drift (``twophase.csv``: phase,k,error_norm).

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from pathlib import Path

import numpy as np

from . import adc_model, calibration, config, correction, metrics

__all__ = ["main", "cmd_convergence", "cmd_inl", "cmd_bound", "cmd_twophase"]


def _fmt(value: float) -> str:
    return format(value, ".9g")


def _write_csv(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _setup(cfg):
    spec = config.build_spec(cfg)
    profile = config.build_profile(cfg, spec)
    layout = config.build_correction_layout(cfg, spec)
    return spec, profile, layout


def _stream(cfg, spec, profile, layout, role="signal"):
    source = config.build_source(cfg, role)
    return correction.delta_stream(source, spec, profile, layout)


def _oracle(cfg, spec, profile, layout, role="oracle"):
    samples = itertools.islice(
        _stream(cfg, spec, profile, layout, role), cfg.calibration_oracle_pairs
    )
    return calibration.mmse_solve(samples, layout)


def cmd_convergence(cfg: config.ExperimentConfig) -> int:
    """Step-size sweep; one error-norm trace per configured mu."""
    started = time.perf_counter()
    spec, profile, layout = _setup(cfg)
    oracle = _oracle(cfg, spec, profile, layout)
    rows = []
    for mu in cfg.calibration_mu_list:
        est = calibration.Estimator(layout, mu, cfg.calibration_alpha)
        _, trace = calibration.run_calibration(
            _stream(cfg, spec, profile, layout),
            est,
            steps=cfg.calibration_steps,
            oracle=oracle,
            stride=cfg.calibration_stride,
        )
        for k, err in zip(trace.steps(), trace.error_norms):
            rows.append((_fmt(mu), str(k), _fmt(err)))
        print(f"mu={mu:g}: final error norm {trace.error_norms[-1]:.6g}")
    out = Path(cfg.outputs_dir) / "convergence.csv"
    _write_csv(out, "mu,k,error_norm", rows)
    print(f"wrote {out} ({time.perf_counter() - started:.1f}s)")
    return 0


def _calibrate(cfg, spec, profile, layout):
    est = calibration.Estimator(layout, cfg.calibration_mu, cfg.calibration_alpha)
    if cfg.calibration_estimator == "two-phase":
        calibration.run_two_phase(
            _stream(cfg, spec, profile, layout),
            _stream(cfg, spec, profile, layout, role="application"),
            est,
            phase1_steps=cfg.twophase_phase1_steps,
            phase2_steps=cfg.twophase_phase2_steps,
            duty=cfg.calibration_duty,
            stride=cfg.calibration_stride,
        )
    else:
        kind = "kaczmarz" if cfg.calibration_estimator == "als" else "lms"
        calibration.run_calibration(
            _stream(cfg, spec, profile, layout),
            est,
            steps=cfg.calibration_steps,
            stride=cfg.calibration_stride,
            step_kind=kind,
        )
    return est


def cmd_inl(cfg: config.ExperimentConfig) -> int:
    """Calibrate, then compare true, estimated and residual INL."""
    started = time.perf_counter()
    spec, profile, layout = _setup(cfg)
    est = _calibrate(cfg, spec, profile, layout)
    theta = est.parameters()

    true_raw = metrics.compute_inl(spec, profile, None, cfg.inl_grid_points)
    corr_raw = metrics.compute_inl(spec, profile, theta, cfg.inl_grid_points)
    true_curve = metrics.remove_overall_gain(true_raw)
    corr_curve = metrics.remove_overall_gain(corr_raw)
    est_curve = metrics.residual_inl(true_curve, corr_curve)
    resid_curve = metrics.residual_inl(true_curve, est_curve)

    rows = (
        (str(c), _fmt(t), _fmt(e), _fmt(r))
        for c, t, e, r in zip(
            true_curve.codes, true_curve.inl_lsb, est_curve.inl_lsb, resid_curve.inl_lsb
        )
    )
    out = Path(cfg.outputs_dir) / "inl.csv"
    _write_csv(out, "code,inl_true,inl_est,inl_residual", rows)

    correction_lsb = corr_raw.inl_lsb - true_raw.inl_lsb
    _write_csv(
        Path(cfg.outputs_dir) / "inl_correction.csv",
        "code,correction_lsb",
        ((str(c), _fmt(v)) for c, v in zip(true_curve.codes, correction_lsb)),
    )

    max_resid = resid_curve.max_abs()
    unexercised = int(np.sum(true_curve.hits == 0))
    print(f"max |residual INL| = {max_resid:.6g} LSB")
    if unexercised:
        print(f"codes never exercised by the ramp: {unexercised}")
    if not np.all(np.isfinite(est.theta)) or not (max_resid <= 1.0):
        print(
            "warning: calibration did not converge "
            f"(residual {max_resid:.3g} LSB; check mu against the bound command)"
        )
    print(f"wrote {out} ({time.perf_counter() - started:.1f}s)")
    return 0


def cmd_bound(cfg: config.ExperimentConfig) -> int:
    """Report step-size stability bounds for the configured model."""
    spec, profile, layout = _setup(cfg)
    if layout.extended:
        print("analytic bound: unavailable (replaced selection entries are signal-dependent)")
    else:
        analytic = calibration.step_size_bound(cfg.calibration_q, cfg.calibration_alpha)
        print(f"analytic bound: {_fmt(analytic)}")
    samples = itertools.islice(
        _stream(cfg, spec, profile, layout), cfg.calibration_bound_scan
    )
    empirical = calibration.empirical_step_size_bound(samples)
    print(f"empirical bound over {cfg.calibration_bound_scan} samples: {_fmt(empirical)}")
    print(f"configured mu: {_fmt(cfg.calibration_mu)}")
    return 0


def cmd_twophase(cfg: config.ExperimentConfig) -> int:
    """Projection start-up on the generator signal, background LMS after,
    with an optional DAC drift step partway through phase 2."""
    started = time.perf_counter()
    spec, profile, layout = _setup(cfg)
    est = calibration.Estimator(layout, cfg.calibration_mu, cfg.calibration_alpha)
    stride = cfg.calibration_stride

    drift = cfg.twophase_drift_lsb != 0.0
    steps2 = cfg.twophase_phase2_steps
    steps2a = int(round(steps2 * cfg.twophase_drift_at)) if drift else steps2

    oracle = _oracle(cfg, spec, profile, layout, role="application-oracle")
    _, trace = calibration.run_two_phase(
        _stream(cfg, spec, profile, layout),
        _stream(cfg, spec, profile, layout, role="application"),
        est,
        phase1_steps=cfg.twophase_phase1_steps,
        phase2_steps=steps2a,
        duty=cfg.calibration_duty,
        oracle=oracle,
        stride=stride,
    )
    rows = [
        (str(p), str(k), _fmt(err))
        for p, k, err in zip(trace.phases, trace.steps(), trace.error_norms)
    ]

    if drift:
        drifted = adc_model.with_dac_step(
            profile,
            cfg.twophase_drift_stage,
            cfg.twophase_drift_level,
            cfg.twophase_drift_lsb * spec.lsb,
        )
        oracle2 = _oracle(cfg, spec, drifted, layout, role="application-oracle")
        base = cfg.twophase_phase1_steps + steps2a
        _, trace2 = calibration.run_calibration(
            _stream(cfg, spec, drifted, layout, role="application-drifted"),
            est,
            steps=steps2 - steps2a,
            oracle=oracle2,
            stride=stride,
        )
        rows += [
            ("2", str(base + k), _fmt(err))
            for k, err in zip(trace2.steps(), trace2.error_norms)
        ]
        print(
            f"drift applied after {base} samples: "
            f"{cfg.twophase_drift_lsb:g} LSB on stage "
            f"{cfg.twophase_drift_stage} level {cfg.twophase_drift_level}"
        )

    out = Path(cfg.outputs_dir) / "twophase.csv"
    _write_csv(out, "phase,k,error_norm", rows)
    print(f"final error norm: {float(rows[-1][2]):.6g}")
    print(f"wrote {out} ({time.perf_counter() - started:.1f}s)")
    return 0


_COMMANDS = {
    "convergence": cmd_convergence,
    "inl": cmd_inl,
    "bound": cmd_bound,
    "twophase": cmd_twophase,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipecal",
        description="Pipelined-ADC calibration experiments (CSV outputs).",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0].lower())
        p.add_argument("--config", default=None, help="key-value config file")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.outputs_dir = args.out
        config.validate_config(cfg)
    except (config.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.cmd](cfg)
    except Exception as exc:  # noqa: BLE001 - contract: runtime failures exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
