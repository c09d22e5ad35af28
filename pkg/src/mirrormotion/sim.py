"""Time-domain Monte Carlo engine.

A trial lives on an extended grid: the scored data window plus stationary
force-bearing margins of PAD_CORRELATION_TIMES times the longest correlation
time of the problem (max of the force time 1/lam and the mechanical ringdown
2/gamma) on each side.  The margins serve three purposes at once: they give
the smoother real two-sided data around every scored sample, they let the
feedback tracker converge before the data window starts, and they push FFT
wrap-around effects exp(-PAD_CORRELATION_TIMES) below the Monte Carlo noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.signal

from .errors import RiccatiError
from .model import ForceParams, MirrorParams, PriorModel, TransferFunction
from .probe import ProbeState, measurement_noise_psd

MODE_LINEARIZED = "linearized"
MODE_NONLINEAR = "nonlinear"

#: Margin/padding length in units of the longest correlation time.
PAD_CORRELATION_TIMES = 10.0


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    `n_samples` counts only the scored data window; margins are added
    internally.  `edge_discard` seconds are trimmed from each end of the data
    window before scoring.
    """

    dt: float = 1e-7
    n_samples: int = 10_000
    n_trials: int = 300
    seed: int = 424242
    mode: str = MODE_LINEARIZED
    feedback_delay_samples: int = 4
    edge_discard: float = 1e-4

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("sample period must be positive")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")
        if self.n_trials < 1:
            raise ValueError("need at least one trial")
        if self.mode not in (MODE_LINEARIZED, MODE_NONLINEAR):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.feedback_delay_samples < 0:
            raise ValueError("feedback delay must be nonnegative")
        if self.edge_discard < 0:
            raise ValueError("edge discard must be nonnegative")
        if 2.0 * self.edge_discard >= self.n_samples * self.dt:
            raise ValueError("edge discard leaves no scoring window")

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    def validate_against(self, force: ForceParams) -> None:
        """Traces must span at least 10 force correlation times."""
        if self.duration < 10.0 / force.lam:
            raise ValueError(
                f"trace length {self.duration:g} s is shorter than ten force "
                f"correlation times ({10.0 / force.lam:g} s)"
            )


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one trial (stable in trial count)."""
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(trial_index + 1)[-1])


def margin_samples(force: ForceParams, params: MirrorParams, cfg: SimConfig) -> int:
    tau = max(1.0 / force.lam, 2.0 / params.gamma if params.gamma > 0 else 0.0)
    return int(math.ceil(PAD_CORRELATION_TIMES * tau / cfg.dt))


# ---------------------------------------------------------------------------
# signal generation


def simulate_ou(
    force: ForceParams, cfg: SimConfig, rng: np.random.Generator, n: int | None = None
) -> np.ndarray:
    """Exact-discretization Ornstein-Uhlenbeck force samples.

    f[k+1] = e^{-lam dt} f[k] + eps[k] with Var(eps) = kappa(1-e^{-2 lam dt})/(2 lam)
    and f[0] drawn from the stationary distribution, so every sample is exactly
    stationary at any step size.
    """
    n = cfg.n_samples if n is None else n
    a = math.exp(-force.lam * cfg.dt)
    innovation_std = math.sqrt(force.stationary_variance * (1.0 - a * a))
    drive = rng.normal(0.0, innovation_std, n)
    drive[0] = rng.normal(0.0, math.sqrt(force.stationary_variance))
    return scipy.signal.lfilter([1.0], [1.0, -a], drive)


def mirror_response(
    f: np.ndarray,
    tf: TransferFunction,
    params: MirrorParams,
    cfg: SimConfig,
    pad_time: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mechanical response (q, p, phi) to a force record via FFT convolution.

    The transform grid is zero-padded by `pad_time` (default ten mechanical
    ringdown times 2/gamma) so the circular wrap-around of the response kernel
    is suppressed; the returned arrays match the input length.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    if pad_time is None:
        pad_time = PAD_CORRELATION_TIMES * (2.0 / params.gamma) if params.gamma > 0 else 0.0
    n_fft = scipy.fft.next_fast_len(n + int(math.ceil(pad_time / cfg.dt)))
    omega = 2.0 * np.pi * np.fft.rfftfreq(n_fft, cfg.dt)
    g = np.asarray(tf(omega), dtype=complex)
    spectrum = g * scipy.fft.rfft(f, n_fft, axis=-1)
    q = scipy.fft.irfft(spectrum, n_fft, axis=-1)[..., :n]
    p = scipy.fft.irfft(1j * params.m * omega * spectrum, n_fft, axis=-1)[..., :n]
    return q, p, params.phase_gain * q


# ---------------------------------------------------------------------------
# real-time phase tracking


def _discretize(a_c: np.ndarray, q_c: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact (Van Loan) discretization of dx = A x dt + noise with intensity Q."""
    n = a_c.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -a_c
    blk[:n, n:] = q_c
    blk[n:, n:] = a_c.T
    e = scipy.linalg.expm(blk * dt)
    a_d = e[n:, n:].T
    q_d = a_d @ e[:n, n:]
    return a_d, 0.5 * (q_d + q_d.T)


class KalmanTracker:
    """Steady-state Kalman predictor of the optical phase for feedback.

    The internal model is the nominal mass-spring-damper system with state
    (q, p, f), the force an Ornstein-Uhlenbeck process, and the measurement
    y = 2 k0 cos(theta) q + noise of per-sample variance S_z/dt.  The gain is
    the stationary discrete Riccati solution; the y -> phase-prediction map is
    then a fixed third-order IIR filter.
    """

    def __init__(
        self, probe: ProbeState, force: ForceParams, params: MirrorParams, cfg: SimConfig
    ):
        self.params = params
        self.force = force
        self.cfg = cfg
        m, lam = params.m, force.lam
        a_c = np.array(
            [
                [0.0, 1.0 / m, 0.0],
                [-m * params.Omega**2, -params.gamma, 1.0],
                [0.0, 0.0, -lam],
            ]
        )
        q_c = np.diag([0.0, 0.0, force.kappa])
        self.a_d, self.q_d = _discretize(a_c, q_c, cfg.dt)
        self.c_vec = np.array([params.phase_gain, 0.0, 0.0])
        self.r = measurement_noise_psd(probe) / cfg.dt

        try:
            self.p_pred = scipy.linalg.solve_discrete_are(
                self.a_d.T, self.c_vec[:, None], self.q_d, np.array([[self.r]])
            )
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RiccatiError(f"steady-state Riccati solve failed: {exc}") from exc
        s = float(self.c_vec @ self.p_pred @ self.c_vec) + self.r
        self.gain = self.p_pred @ self.c_vec / s
        self.p_post = self.p_pred - np.outer(self.gain, self.c_vec @ self.p_pred)
        a_cl = self.a_d @ (np.eye(3) - np.outer(self.gain, self.c_vec))
        rho = float(np.max(np.abs(np.linalg.eigvals(a_cl))))
        if rho >= 1.0:
            raise RiccatiError(f"closed-loop tracker is unstable (spectral radius {rho:.6f})")
        self._rho = rho
        num, den = scipy.signal.ss2tf(
            a_cl, (self.a_d @ self.gain)[:, None], self.c_vec[None, :], np.zeros((1, 1))
        )
        self._num, self._den = num[0], den

    @property
    def sigma_phi_sq_posterior(self) -> float:
        """Steady-state posterior phase MSE, c^2 P_post[q, q]."""
        return float(self.c_vec @ self.p_post @ self.c_vec)

    @property
    def sigma_phi_sq_prediction(self) -> float:
        """One-step-prediction phase MSE, c^2 P_pred[q, q]."""
        return float(self.c_vec @ self.p_pred @ self.c_vec)

    def sigma_phi_sq_feedback(self, delay: int | None = None) -> float:
        """Phase MSE of the feedback signal, a one-step prediction applied
        `delay` samples late: E[(phi_k - phihat_{k-d})^2]."""
        d = self.cfg.feedback_delay_samples if delay is None else delay
        sigma_x = scipy.linalg.solve_discrete_lyapunov(self.a_d, self.q_d)
        a_pow = np.linalg.matrix_power(self.a_d, d)
        drift = a_pow - np.eye(3)
        cov = a_pow @ self.p_pred @ a_pow.T + drift @ (sigma_x - self.p_pred) @ drift.T
        step = np.eye(3)
        for _ in range(d):
            cov = cov + step @ self.q_d @ step.T
            step = step @ self.a_d
        return float(self.c_vec @ cov @ self.c_vec)

    @property
    def settle_samples(self) -> int:
        """Samples until the slowest closed-loop transient has decayed by e^-8."""
        return int(math.ceil(8.0 / -math.log(self._rho)))

    def predict_series(self, y: np.ndarray) -> np.ndarray:
        """Causal one-step phase predictions phihat_k from a measurement record."""
        return scipy.signal.lfilter(self._num, self._den, y)


def riccati_sigma_phi(
    probe: ProbeState, force: ForceParams, params: MirrorParams, cfg: SimConfig
) -> float:
    """Steady-state tracking MSE sigma_phi^2 from the Riccati solution."""
    return KalmanTracker(probe, force, params, cfg).sigma_phi_sq_posterior


def calibrate_tracking(
    probe: ProbeState,
    force: ForceParams,
    params: MirrorParams,
    cfg: SimConfig,
    rtol: float = 1e-10,
    max_iter: int = 60,
) -> ProbeState:
    """Self-consistent operating point: sigma_phi^2 feeds the effective
    squeezing factor, which sets S_z, which feeds the Riccati solution back.

    The map is a mild contraction (the factor depends weakly on sigma_phi^2),
    so plain fixed-point iteration converges in a few steps.
    """
    state = replace(probe, sigma_phi_sq=0.0)
    value = 0.0
    for _ in range(max_iter):
        new = riccati_sigma_phi(state, force, params, cfg)
        state = replace(state, sigma_phi_sq=new)
        if abs(new - value) <= rtol * max(new, 1e-30):
            return state
        value = new
    raise RiccatiError("tracking operating point did not converge")


@dataclass
class TrackingResult:
    y: np.ndarray
    phi_fb: np.ndarray
    sigma_phi_sq: float
    diverged: bool = False


def _delayed(series: np.ndarray, d: int) -> np.ndarray:
    if d == 0:
        return series
    out = np.empty_like(series)
    out[:d] = series[0]
    out[d:] = series[:-d]
    return out


def run_tracking(
    phi: np.ndarray,
    probe: ProbeState,
    tracker: KalmanTracker,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> TrackingResult:
    """Synthesize the homodyne record and the real-time feedback phase.

    Linearized mode: y = phi + z with z white of per-sample variance S_z/dt.
    Nonlinear mode: the normalized homodyne output sin(phi - phi') plus
    phase-dependent quadrature noise, offset back by the feedback phase; a
    trial is flagged diverged when |phi - phi'| exceeds pi/2.

    The empirical sigma_phi^2 is averaged over the steady-state region (after
    the closed-loop transient has settled).
    """
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[0]
    d = cfg.feedback_delay_samples
    diverged = False

    if cfg.mode == MODE_LINEARIZED:
        z = rng.normal(0.0, math.sqrt(measurement_noise_psd(probe) / cfg.dt), n)
        y = phi + z
        phi_fb = _delayed(tracker.predict_series(y), d)
    else:
        ep, em = probe.detected_moments()
        noise_scale = rng.normal(0.0, 1.0, n) / (
            2.0 * math.sqrt(probe.eta_det * probe.alpha_sq * cfg.dt)
        )
        y = np.empty(n)
        phi_hat = np.empty(n)
        a = tracker.a_d
        a00, a01, a02 = a[0]
        a10, a11, a12 = a[1]
        a20, a21, a22 = a[2]
        k0, k1, k2 = tracker.gain
        c = tracker.c_vec[0]
        x0 = x1 = x2 = 0.0
        half_pi = 0.5 * math.pi
        for i in range(n):
            ph = c * x0
            phi_hat[i] = ph
            fb = phi_hat[i - d] if i >= d else 0.0
            delta = phi[i] - fb
            if abs(delta) > half_pi:
                diverged = True
            s = math.sin(delta)
            co = math.cos(delta)
            yk = s + noise_scale[i] * math.sqrt(s * s * ep + co * co * em) + fb
            y[i] = yk
            innov = yk - ph
            x0p = x0 + k0 * innov
            x1p = x1 + k1 * innov
            x2p = x2 + k2 * innov
            x0 = a00 * x0p + a01 * x1p + a02 * x2p
            x1 = a10 * x0p + a11 * x1p + a12 * x2p
            x2 = a20 * x0p + a21 * x1p + a22 * x2p
        phi_fb = _delayed(phi_hat, d)

    start = min(tracker.settle_samples, n // 2)
    err = phi[start:] - phi_fb[start:]
    return TrackingResult(
        y=y, phi_fb=phi_fb, sigma_phi_sq=float(np.mean(err**2)), diverged=diverged
    )


# ---------------------------------------------------------------------------
# full trials


@dataclass
class Trajectory:
    """One simulated trial on the extended grid.

    t = 0 marks the start of the scored data window; the margins carry real
    (stationary) force so every scored sample sees stationary statistics.
    """

    t: np.ndarray
    f: np.ndarray
    q: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    phi_fb: np.ndarray
    y: np.ndarray
    data_start: int
    n_data: int
    dt: float
    sigma_phi_sq: float = float("nan")
    diverged: bool = False

    @property
    def data_slice(self) -> slice:
        return slice(self.data_start, self.data_start + self.n_data)

    def to_csv(self, path) -> None:
        header = "t,f,q,p,phi,phi_fb,y"
        table = np.column_stack([self.t, self.f, self.q, self.p, self.phi, self.phi_fb, self.y])
        np.savetxt(path, table, delimiter=",", header=header, comments="")


def simulate_trial(
    priors: PriorModel,
    probe: ProbeState,
    tracker: KalmanTracker,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> Trajectory:
    """Generate one force/motion/measurement trial on the extended grid."""
    cfg.validate_against(priors.force)
    n_margin = margin_samples(priors.force, priors.params, cfg)
    n_total = scipy.fft.next_fast_len(cfg.n_samples + 2 * n_margin)
    pad_time = PAD_CORRELATION_TIMES * max(
        priors.force.correlation_time,
        2.0 / priors.params.gamma if priors.params.gamma > 0 else 0.0,
    )
    f = simulate_ou(priors.force, cfg, rng, n=n_total)
    q, p, phi = mirror_response(f, priors.tf, priors.params, cfg, pad_time=pad_time)
    tracked = run_tracking(phi, probe, tracker, cfg, rng)
    t = (np.arange(n_total) - n_margin) * cfg.dt
    return Trajectory(
        t=t,
        f=f,
        q=q,
        p=p,
        phi=phi,
        phi_fb=tracked.phi_fb,
        y=tracked.y,
        data_start=n_margin,
        n_data=cfg.n_samples,
        dt=cfg.dt,
        sigma_phi_sq=tracked.sigma_phi_sq,
        diverged=tracked.diverged,
    )
