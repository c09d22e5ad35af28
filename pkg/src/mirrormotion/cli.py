"""Batch harness: config files, amplitude sweeps, bound curves, diagnostics.

Config files are flat `section.key = value` text; `write-config` emits the
canonical example with every key at its reference value.  Results are plain
CSV so any plotting tool can consume them.  All commands are deterministic for
a given config and seed, independent of the worker count.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.fft

from . import est, sim
from .model import (
    ForceParams,
    MirrorParams,
    PriorModel,
    TransferFunction,
)
from .probe import (
    ProbeState,
    SqueezingBandwidth,
    attainability_gap,
    effective_squeezing_factor,
    validate_broadband,
)

SWEEP_COLUMNS = ("var", "probe", "alpha_sq", "mse_emp", "mse_stderr", "mmse", "qcrb_coh", "qcrb_sq")
BOUNDS_COLUMNS = ("var", "alpha_sq", "mmse_coh", "mmse_sq", "qcrb_coh", "qcrb_sq")
PROBE_KINDS = ("coherent", "squeezed")


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch experiment: system model, probe family, and run settings."""

    mirror: MirrorParams
    force: ForceParams
    simulation: sim.SimConfig
    squeezing_db: float
    antisqueezing_db: float
    eta_det: float
    bandwidth: float
    alpha_sqs: tuple
    tf_source: str = "nominal"
    out_dir: str = "results"

    def __post_init__(self):
        if len(self.alpha_sqs) == 0:
            raise ValueError("need at least one probe amplitude")
        if any(a <= 0 for a in self.alpha_sqs):
            raise ValueError("probe amplitudes must be positive")
        if self.tf_source != "nominal" and not Path(self.tf_source).exists():
            raise ValueError(f"transfer-function file not found: {self.tf_source}")

    def transfer_function(self) -> TransferFunction:
        if self.tf_source == "nominal":
            return TransferFunction.nominal(self.mirror)
        return TransferFunction.from_csv(self.tf_source)

    def priors(self) -> PriorModel:
        return PriorModel(self.mirror, self.force, self.transfer_function())

    def probe_template(self, kind: str, alpha_sq: float) -> ProbeState:
        """Probe with sigma_phi_sq = 0; calibrate before using S_z."""
        if kind == "coherent":
            return ProbeState.coherent(alpha_sq, eta_det=self.eta_det)
        if kind == "squeezed":
            return ProbeState.from_db(
                alpha_sq, self.squeezing_db, self.antisqueezing_db, eta_det=self.eta_det
            )
        raise ValueError(f"unknown probe kind {kind!r}")

    def squeezing_bandwidth(self, probe: ProbeState) -> SqueezingBandwidth:
        return SqueezingBandwidth.standard(probe, self.bandwidth)


def reference_config() -> ExperimentConfig:
    """Canonical operating point: the 860 nm probe on the 0.59 g PZT-mounted
    mirror driven by an Ornstein-Uhlenbeck force."""
    mirror = MirrorParams(
        m=5.88e-4,
        Omega=1.76e5,
        gamma=7.66e3,
        k0=2.0 * math.pi / 860e-9,
        theta=math.pi / 4.0,
        G=6.96e7,
        beta=2.04e-1,
    )
    force = ForceParams(lam=5.84e4, kappa=1.67e3)
    simulation = sim.SimConfig(
        dt=1e-7,
        n_samples=10_000,
        n_trials=300,
        seed=424242,
        mode=sim.MODE_LINEARIZED,
        feedback_delay_samples=4,
        edge_discard=1e-4,
    )
    return ExperimentConfig(
        mirror=mirror,
        force=force,
        simulation=simulation,
        squeezing_db=3.62,
        antisqueezing_db=6.00,
        eta_det=0.871,
        bandwidth=1.76e6,
        alpha_sqs=(1.02e6, 1.88e6, 2.87e6, 6.24e6),
        tf_source="nominal",
        out_dir="results",
    )


# ---------------------------------------------------------------------------
# config file round trip


def write_config(config: ExperimentConfig, path) -> None:
    m, f, s = config.mirror, config.force, config.simulation
    lines = [
        "# mirror-motion estimation experiment configuration",
        f"mirror.mass = {m.m!r}",
        f"mirror.resonance = {m.Omega!r}",
        f"mirror.damping = {m.gamma!r}",
        f"mirror.wavenumber = {m.k0!r}",
        f"mirror.angle = {m.theta!r}",
        f"mirror.sensitivity = {m.G!r}",
        f"mirror.force_per_volt = {m.beta!r}",
        f"force.cutoff = {f.lam!r}",
        f"force.intensity = {f.kappa!r}",
        f"probe.squeezing_db = {config.squeezing_db!r}",
        f"probe.antisqueezing_db = {config.antisqueezing_db!r}",
        f"probe.efficiency = {config.eta_det!r}",
        f"probe.bandwidth = {config.bandwidth!r}",
        f"sim.dt = {s.dt!r}",
        f"sim.samples = {s.n_samples}",
        f"sim.trials = {s.n_trials}",
        f"sim.seed = {s.seed}",
        f"sim.mode = {s.mode}",
        f"sim.delay_samples = {s.feedback_delay_samples}",
        f"sim.edge_discard = {s.edge_discard!r}",
        "sweep.alpha_sq = " + ", ".join(repr(a) for a in config.alpha_sqs),
        f"transfer.source = {config.tf_source}",
        f"out.dir = {config.out_dir}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    known = {
        "mirror.mass", "mirror.resonance", "mirror.damping", "mirror.wavenumber",
        "mirror.angle", "mirror.sensitivity", "mirror.force_per_volt",
        "force.cutoff", "force.intensity",
        "probe.squeezing_db", "probe.antisqueezing_db", "probe.efficiency", "probe.bandwidth",
        "sim.dt", "sim.samples", "sim.trials", "sim.seed", "sim.mode",
        "sim.delay_samples", "sim.edge_discard",
        "sweep.alpha_sq", "transfer.source", "out.dir",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {sorted(unknown)}")

    base = reference_config()

    def get(key, cast, fallback):
        return cast(raw[key]) if key in raw else fallback

    mirror = MirrorParams(
        m=get("mirror.mass", float, base.mirror.m),
        Omega=get("mirror.resonance", float, base.mirror.Omega),
        gamma=get("mirror.damping", float, base.mirror.gamma),
        k0=get("mirror.wavenumber", float, base.mirror.k0),
        theta=get("mirror.angle", float, base.mirror.theta),
        G=get("mirror.sensitivity", float, base.mirror.G),
        beta=get("mirror.force_per_volt", float, base.mirror.beta),
    )
    force = ForceParams(
        lam=get("force.cutoff", float, base.force.lam),
        kappa=get("force.intensity", float, base.force.kappa),
    )
    simulation = sim.SimConfig(
        dt=get("sim.dt", float, base.simulation.dt),
        n_samples=get("sim.samples", int, base.simulation.n_samples),
        n_trials=get("sim.trials", int, base.simulation.n_trials),
        seed=get("sim.seed", int, base.simulation.seed),
        mode=get("sim.mode", str, base.simulation.mode),
        feedback_delay_samples=get("sim.delay_samples", int, base.simulation.feedback_delay_samples),
        edge_discard=get("sim.edge_discard", float, base.simulation.edge_discard),
    )
    alphas = tuple(
        float(a) for a in raw["sweep.alpha_sq"].split(",")
    ) if "sweep.alpha_sq" in raw else base.alpha_sqs
    return ExperimentConfig(
        mirror=mirror,
        force=force,
        simulation=simulation,
        squeezing_db=get("probe.squeezing_db", float, base.squeezing_db),
        antisqueezing_db=get("probe.antisqueezing_db", float, base.antisqueezing_db),
        eta_det=get("probe.efficiency", float, base.eta_det),
        bandwidth=get("probe.bandwidth", float, base.bandwidth),
        alpha_sqs=alphas,
        tf_source=get("transfer.source", str, base.tf_source),
        out_dir=get("out.dir", str, base.out_dir),
    )


# ---------------------------------------------------------------------------
# sweep


def _score_trials(priors, probe, tracker, bank, cfg, trial_indices):
    """Run trials; returns {index: payload} with None marking diverged trials."""
    results = {}
    for idx in trial_indices:
        traj = sim.simulate_trial(priors, probe, tracker, cfg, sim.trial_rng(cfg.seed, idx))
        if traj.diverged:
            results[idx] = None
            continue
        window = traj.data_slice
        payload = {"sigma_phi_sq": traj.sigma_phi_sq}
        for x, truth in (("q", traj.q), ("p", traj.p), ("f", traj.f)):
            payload[x] = (est.smooth(traj.y, x, bank, cfg)[window], truth[window])
        results[idx] = payload
    return results


@dataclass
class SweepPoint:
    """Scored results for one (probe kind, amplitude) cell."""

    kind: str
    alpha_sq: float
    probe: ProbeState
    mse: dict
    stderr: dict
    mmse: dict
    qcrb_coh: dict
    qcrb_sq: dict
    sigma_phi_sq: float
    sigma_phi_sq_emp: float = float("nan")
    n_diverged: int = 0


def run_sweep_point(
    config: ExperimentConfig,
    kind: str,
    alpha_sq: float,
    grid: est.SpectralGrid | None = None,
    workers: int = 1,
) -> SweepPoint:
    priors = config.priors()
    cfg = config.simulation
    if grid is None:
        grid = est.SpectralGrid.build(priors)

    probe = sim.calibrate_tracking(
        config.probe_template(kind, alpha_sq), config.force, config.mirror, cfg
    )
    tracker = sim.KalmanTracker(probe, config.force, config.mirror, cfg)
    n_margin = sim.margin_samples(config.force, config.mirror, cfg)
    n_total = scipy.fft.next_fast_len(cfg.n_samples + 2 * n_margin)
    bank = est.FilterBank.build(n_total, cfg.dt, priors, probe)

    indices = list(range(cfg.n_trials))
    if workers > 1:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    _score_chunk,
                    [(priors, probe, tracker, bank, cfg, chunk) for chunk in chunks],
                )
            )
        results = {}
        for part in parts:
            results.update(part)
    else:
        results = _score_trials(priors, probe, tracker, bank, cfg, indices)

    # reduction keyed by trial index, so the outcome is pool-size independent
    kept = [results[i] for i in sorted(results) if results[i] is not None]
    n_diverged = sum(1 for v in results.values() if v is None)
    sigma_emp = [payload["sigma_phi_sq"] for payload in kept]
    mse, stderr = {}, {}
    for x in ("q", "p", "f"):
        estimates = [payload[x][0] for payload in kept]
        truths = [payload[x][1] for payload in kept]
        mse[x], stderr[x] = est.empirical_mse(estimates, truths, cfg)

    coh = config.probe_template("coherent", alpha_sq)
    sq = config.probe_template("squeezed", alpha_sq)
    return SweepPoint(
        kind=kind,
        alpha_sq=alpha_sq,
        probe=probe,
        mse=mse,
        stderr=stderr,
        mmse={x: est.analytic_mmse(x, priors, probe, grid) for x in ("q", "p", "f")},
        qcrb_coh={x: est.qcrb(x, priors, coh, grid) for x in ("q", "p", "f")},
        qcrb_sq={x: est.qcrb(x, priors, sq, grid) for x in ("q", "p", "f")},
        sigma_phi_sq=probe.sigma_phi_sq,
        sigma_phi_sq_emp=float(np.mean(sigma_emp)) if sigma_emp else float("nan"),
        n_diverged=n_diverged,
    )


def _score_chunk(args):
    return _score_trials(*args)


def cmd_sweep(config: ExperimentConfig, out_path=None, workers: int = 1) -> list[dict]:
    """Full amplitude sweep; one CSV row per (variable, probe kind, amplitude)."""
    out_path = Path(out_path) if out_path else Path(config.out_dir) / "sweep.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    priors = config.priors()
    grid = est.SpectralGrid.build(priors)

    rows = []
    with open(out_path, "w") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for alpha_sq in config.alpha_sqs:
            for kind in PROBE_KINDS:
                try:
                    point = run_sweep_point(config, kind, alpha_sq, grid=grid, workers=workers)
                except Exception as exc:  # abort the row, keep the partial CSV
                    print(
                        f"sweep point (kind={kind}, alpha_sq={alpha_sq:g}) failed: {exc}",
                        file=sys.stderr,
                    )
                    continue
                for x in ("q", "p", "f"):
                    row = {
                        "var": x,
                        "probe": kind,
                        "alpha_sq": alpha_sq,
                        "mse_emp": point.mse[x],
                        "mse_stderr": point.stderr[x],
                        "mmse": point.mmse[x],
                        "qcrb_coh": point.qcrb_coh[x],
                        "qcrb_sq": point.qcrb_sq[x],
                    }
                    rows.append(row)
                    fh.write(_format_row(row, SWEEP_COLUMNS) + "\n")
                    fh.flush()
    return rows


def _format_row(row: dict, columns) -> str:
    out = []
    for col in columns:
        v = row[col]
        out.append(repr(v) if isinstance(v, float) else str(v))
    return ",".join(out)


# ---------------------------------------------------------------------------
# bounds and diagnostics


def cmd_bounds(config: ExperimentConfig, out_path=None, n_points: int = 25) -> list[dict]:
    """Analytic prediction curves and bounds on a dense amplitude grid (no
    simulation).  The grid always contains the configured sweep amplitudes."""
    out_path = Path(out_path) if out_path else Path(config.out_dir) / "bounds.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    priors = config.priors()
    grid = est.SpectralGrid.build(priors)
    lo, hi = min(config.alpha_sqs), max(config.alpha_sqs)
    alphas = sorted(set(np.geomspace(lo, hi, n_points)) | set(config.alpha_sqs))

    rows = []
    with open(out_path, "w") as fh:
        fh.write(",".join(BOUNDS_COLUMNS) + "\n")
        for alpha_sq in alphas:
            try:
                coh = sim.calibrate_tracking(
                    config.probe_template("coherent", alpha_sq),
                    config.force, config.mirror, config.simulation,
                )
                sq = sim.calibrate_tracking(
                    config.probe_template("squeezed", alpha_sq),
                    config.force, config.mirror, config.simulation,
                )
                for x in ("q", "p", "f"):
                    row = {
                        "var": x,
                        "alpha_sq": float(alpha_sq),
                        "mmse_coh": est.analytic_mmse(x, priors, coh, grid),
                        "mmse_sq": est.analytic_mmse(x, priors, sq, grid),
                        "qcrb_coh": est.qcrb(x, priors, coh, grid),
                        "qcrb_sq": est.qcrb(x, priors, sq, grid),
                    }
                    rows.append(row)
                    fh.write(_format_row(row, BOUNDS_COLUMNS) + "\n")
            except Exception as exc:
                print(f"bounds point alpha_sq={alpha_sq:g} failed: {exc}", file=sys.stderr)
    return rows


@dataclass
class DiagnosticsPoint:
    alpha_sq: float
    sigma_phi_sq: float
    r_sq_eff: float
    r_sq_eff_db: float
    r_sq_detected: float
    attainability_coherent: float
    attainability_squeezed: float
    linearization_check: float
    broadband: object


def diagnose_point(config: ExperimentConfig, alpha_sq: float) -> DiagnosticsPoint:
    cfg = config.simulation
    squeezed = sim.calibrate_tracking(
        config.probe_template("squeezed", alpha_sq), config.force, config.mirror, cfg
    )
    coherent = sim.calibrate_tracking(
        config.probe_template("coherent", alpha_sq), config.force, config.mirror, cfg
    )
    # beam-level quantities (effective factor, attainability) use the beam
    # moments before detection loss
    lossless = replace(squeezed, eta_det=1.0)
    r_eff = effective_squeezing_factor(lossless)
    bw = config.squeezing_bandwidth(squeezed)
    return DiagnosticsPoint(
        alpha_sq=alpha_sq,
        sigma_phi_sq=squeezed.sigma_phi_sq,
        r_sq_eff=r_eff,
        r_sq_eff_db=10.0 * math.log10(r_eff),
        r_sq_detected=effective_squeezing_factor(squeezed),
        attainability_coherent=attainability_gap(replace(coherent, eta_det=1.0)),
        attainability_squeezed=attainability_gap(lossless),
        linearization_check=squeezed.sigma_phi_sq * math.exp(2.0 * squeezed.r_p),
        broadband=validate_broadband(bw, config.mirror.Omega, config.force.lam, squeezed),
    )


def cmd_diagnose(config: ExperimentConfig) -> str:
    lines = ["operating-point diagnostics", "=" * 60]
    for alpha_sq in config.alpha_sqs:
        d = diagnose_point(config, alpha_sq)
        b = d.broadband
        lines += [
            f"alpha_sq = {alpha_sq:.3e} /s",
            f"  riccati sigma_phi^2        = {d.sigma_phi_sq:.4e} rad^2",
            f"  effective R_sq (beam)      = {d.r_sq_eff:.4f} ({d.r_sq_eff_db:+.2f} dB)",
            f"  effective R_sq (detected)  = {d.r_sq_detected:.4f}",
            f"  attainability gap coherent = {d.attainability_coherent:.6f}",
            f"  attainability gap squeezed = {d.attainability_squeezed:.4f}",
            f"  linearization sigma^2 e^2rp = {d.linearization_check:.4e} (<< 1 required)",
            f"  broadband: bandwidth ratio {b.bandwidth_ratio:.2f} [{b.bandwidth_status}], "
            f"flux ratio {b.flux_ratio:.3f} [{b.flux_status}] -> {b.status}",
        ]
    return "\n".join(lines)


def cmd_simulate(
    config: ExperimentConfig,
    kind: str,
    alpha_sq: float,
    out_dir=None,
    dump_trajectories: bool = False,
) -> SweepPoint:
    """Run the Monte Carlo trials of one sweep cell, optionally dumping each
    trajectory as CSV."""
    point = run_sweep_point(config, kind, alpha_sq)
    if dump_trajectories:
        out_dir = Path(out_dir or config.out_dir) / f"trajectories_{kind}_{alpha_sq:.3e}"
        out_dir.mkdir(parents=True, exist_ok=True)
        priors = config.priors()
        cfg = config.simulation
        tracker = sim.KalmanTracker(point.probe, config.force, config.mirror, cfg)
        for idx in range(cfg.n_trials):
            traj = sim.simulate_trial(priors, point.probe, tracker, cfg, sim.trial_rng(cfg.seed, idx))
            traj.to_csv(out_dir / f"trial_{idx:04d}.csv")
    return point


# ---------------------------------------------------------------------------
# entry point


def _load_config(args) -> ExperimentConfig:
    config = read_config(args.config) if args.config else reference_config()
    s = config.simulation
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    if args.trials is not None:
        s = replace(s, n_trials=args.trials)
    config = replace(config, simulation=s)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mirrormotion",
        description="Quantum-limited mirror-motion estimation toolkit",
    )
    parser.add_argument("--config", help="configuration file (default: built-in reference values)")
    parser.add_argument("--seed", type=int, help="override the RNG seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument("--workers", type=int, default=1, help="worker processes for trials")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("sweep", help="Monte Carlo amplitude sweep against the bounds")
    sub.add_parser("bounds", help="analytic bound curves on a dense amplitude grid")
    sub.add_parser("diagnose", help="operating-point diagnostics report")
    p_sim = sub.add_parser("simulate", help="run one sweep cell")
    p_sim.add_argument("--kind", choices=PROBE_KINDS, default="squeezed")
    p_sim.add_argument("--alpha-sq", type=float, default=None)
    p_sim.add_argument("--dump-trajectories", action="store_true")
    p_cfg = sub.add_parser("write-config", help="write the canonical default config file")
    p_cfg.add_argument("path")

    args = parser.parse_args(argv)

    if args.command == "write-config":
        write_config(reference_config(), args.path)
        print(f"wrote {args.path}")
        return 0

    config = _load_config(args)
    if args.command == "sweep":
        rows = cmd_sweep(config, workers=args.workers)
        print(f"wrote {len(rows)} rows to {Path(config.out_dir) / 'sweep.csv'}")
    elif args.command == "bounds":
        rows = cmd_bounds(config)
        print(f"wrote {len(rows)} rows to {Path(config.out_dir) / 'bounds.csv'}")
    elif args.command == "diagnose":
        print(cmd_diagnose(config))
    elif args.command == "simulate":
        alpha_sq = args.alpha_sq if args.alpha_sq is not None else config.alpha_sqs[-1]
        point = cmd_simulate(
            config, args.kind, alpha_sq, dump_trajectories=args.dump_trajectories
        )
        for x in ("q", "p", "f"):
            print(
                f"{x}: mse = {point.mse[x]:.4e} +- {point.stderr[x]:.1e}, "
                f"mmse = {point.mmse[x]:.4e}, qcrb(coh) = {point.qcrb_coh[x]:.4e}, "
                f"qcrb(sq) = {point.qcrb_sq[x]:.4e}"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
