"""Mirror/PZT physical model: parameters, motion transfer functions, prior spectra.

All frequencies are angular (rad/s) and all spectral densities are two-sided,
defined as S_x(w) = Integral <x(t)x(t+tau)> e^{i w tau} dtau.  The sign
conventions match the numpy FFT pair, so d/dt maps to +i*w on the half-spectrum
returned by rfft.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SingularityError

#: Variables connected by the motion functions g_ij(w).
VAR_TAGS = ("phi", "q", "p", "f")

#: Variables with a stationary prior spectrum.
PRIOR_TAGS = ("f", "q", "p")


def effective_mass(m_mirror: float, m_pzt: float) -> float:
    """Effective moving mass of a mirror glued on a PZT stack.

    The PZT stretches proportionally along its length, so only one third of
    its mass moves coherently with the mirror face: m = m_mirror + m_pzt/3.
    """
    if m_mirror <= 0 or m_pzt < 0:
        raise ValueError("masses must be positive (PZT mass may be zero)")
    return m_mirror + m_pzt / 3.0


@dataclass(frozen=True)
class MirrorParams:
    """Physical constants of the PZT-mounted mirror and its readout.

    Attributes
    ----------
    m : float
        Effective moving mass [kg].
    Omega : float
        Mechanical resonance [rad/s].
    gamma : float
        Velocity damping coefficient [rad/s].
    k0 : float
        Optical wavenumber of the probe beam [rad/m].
    theta : float
        Reflection angle off the mirror [rad]; the phase shift per unit
        displacement is 2*k0*cos(theta).
    G : float
        Position detector sensitivity [V/m], kept for replaying
        voltage-recorded data.  The simulator itself works in SI units.
    beta : float
        Drive calibration [N/V], same remark as for G.
    """

    m: float
    Omega: float
    gamma: float
    k0: float
    theta: float
    G: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.Omega <= 0:
            raise ValueError("resonance frequency must be positive")
        if self.gamma < 0:
            raise ValueError("damping must be nonnegative")
        if self.k0 <= 0:
            raise ValueError("wavenumber must be positive")
        if not 0.0 <= self.theta < np.pi / 2:
            raise ValueError("reflection angle must lie in [0, pi/2)")
        if self.G <= 0 or self.beta <= 0:
            raise ValueError("calibration gains must be positive")

    @property
    def phase_gain(self) -> float:
        """Optical phase shift per unit mirror displacement, 2*k0*cos(theta) [rad/m]."""
        return 2.0 * self.k0 * np.cos(self.theta)


@dataclass(frozen=True)
class ForceParams:
    """Ornstein-Uhlenbeck model of the external force.

    df/dt = -lam*f + w(t) with <w(t)w(t')> = kappa*delta(t-t'), so the force
    spectrum is S_f(w) = kappa/(w^2 + lam^2).
    """

    lam: float
    kappa: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("cutoff frequency must be positive")
        if self.kappa <= 0:
            raise ValueError("noise intensity must be positive")

    @property
    def stationary_variance(self) -> float:
        """Stationary force variance kappa/(2*lam) [N^2]."""
        return self.kappa / (2.0 * self.lam)

    @property
    def correlation_time(self) -> float:
        return 1.0 / self.lam


class TransferFunction:
    """Force-to-position response g_qf(w) [m/N].

    Concrete variants: :class:`NominalTransferFunction` (mass-spring-damper)
    and :class:`TabulatedTransferFunction` (measured samples).  Both are
    Hermitian, g_qf(-w) = conj(g_qf(w)), so time-domain responses are real.
    """

    def __call__(self, omega):
        raise NotImplementedError

    @staticmethod
    def nominal(params: MirrorParams) -> "NominalTransferFunction":
        return NominalTransferFunction(params)

    @staticmethod
    def from_csv(path) -> "TabulatedTransferFunction":
        return TabulatedTransferFunction.from_csv(path)


class NominalTransferFunction(TransferFunction):
    """Mass-spring-damper response g_qf(w) = 1/(m*(Omega^2 - w^2 + i*gamma*w)).

    The DC response is 1/(m*Omega^2); the displacement normalization absorbs
    the detector/drive gains so the model works directly in force units.
    """

    def __init__(self, params: MirrorParams):
        self.params = params

    def __call__(self, omega):
        p = self.params
        w = np.asarray(omega, dtype=float)
        out = 1.0 / (p.m * (p.Omega**2 - w**2 + 1j * p.gamma * w))
        return out if out.ndim else complex(out)

    def __repr__(self):
        p = self.params
        return f"NominalTransferFunction(m={p.m:g}, Omega={p.Omega:g}, gamma={p.gamma:g})"


class TabulatedTransferFunction(TransferFunction):
    """Measured g_qf samples on an ascending positive-frequency grid.

    Negative frequencies follow from conjugate symmetry.  Queries outside the
    tabulated range clamp to the nearest endpoint and emit a warning: measured
    data is never extrapolated silently.
    """

    def __init__(self, freqs, values):
        freqs = np.asarray(freqs, dtype=float)
        values = np.asarray(values, dtype=complex)
        if freqs.ndim != 1 or freqs.size < 2:
            raise ValueError("need at least two tabulated frequencies")
        if freqs.shape != values.shape:
            raise ValueError("frequency and value arrays must match")
        if np.any(freqs <= 0):
            raise ValueError("tabulated frequencies must be positive")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("tabulated frequencies must be strictly ascending")
        self.freqs = freqs
        self.values = values

    @classmethod
    def from_csv(cls, path) -> "TabulatedTransferFunction":
        """Load `freq_hz,gqf_real,gqf_imag` rows (positive frequencies, m/N)."""
        freqs, values = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                freqs.append(2.0 * np.pi * float(row["freq_hz"]))
                values.append(float(row["gqf_real"]) + 1j * float(row["gqf_imag"]))
        return cls(np.array(freqs), np.array(values))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["freq_hz", "gqf_real", "gqf_imag"])
            for w, v in zip(self.freqs, self.values):
                writer.writerow(
                    [repr(float(w) / (2.0 * np.pi)), repr(float(v.real)), repr(float(v.imag))]
                )

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        aw = np.abs(w)
        if np.any(aw > self.freqs[-1]) or np.any(aw < self.freqs[0]):
            warnings.warn(
                "query outside tabulated transfer-function range; clamping to "
                f"[{self.freqs[0]:g}, {self.freqs[-1]:g}] rad/s",
                stacklevel=2,
            )
        aw = np.clip(aw, self.freqs[0], self.freqs[-1])
        re = np.interp(aw, self.freqs, self.values.real)
        im = np.interp(aw, self.freqs, self.values.imag)
        out = re + 1j * np.where(w >= 0, im, -im)
        return out if out.ndim else complex(out)


def _chain_gain(tag: str, omega, tf: TransferFunction, params: MirrorParams):
    """Transfer from force to `tag`, i.e. g_{tag,f}(w)."""
    w = np.asarray(omega, dtype=float)
    if tag == "f":
        return np.ones_like(w, dtype=complex)
    g = np.asarray(tf(w), dtype=complex)
    if tag == "q":
        return g
    if tag == "p":
        # p = m dq/dt, hence g_pf = i*m*w*g_qf in the rfft convention
        return 1j * params.m * w * g
    if tag == "phi":
        return params.phase_gain * g
    raise ValueError(f"unknown variable tag {tag!r}, expected one of {VAR_TAGS}")


def motion_function(i: str, j: str, omega, tf: TransferFunction, params: MirrorParams):
    """Mirror-motion function g_ij(w) relating x_i~(w) = g_ij(w) x_j~(w).

    Built from the force-referred chain g_ij = g_if / g_jf, so the composition
    rules g_ij*g_jk = g_ik and g_ji = 1/g_ij hold by construction.  Requesting
    a value at a pole (e.g. g_qp at w = 0) raises SingularityError; quantities
    whose poles cancel must use the factored spectral operations instead.
    """
    num = _chain_gain(i, omega, tf, params)
    den = _chain_gain(j, omega, tf, params)
    if np.any(den == 0):
        raise SingularityError(f"g_{i}{j} has a pole at one of the requested frequencies")
    out = num / den
    return out if out.ndim else complex(out)


def prior_psd(x: str, omega, force: ForceParams, tf: TransferFunction, params: MirrorParams):
    """Prior spectral density S_x(w) for x in {f, q, p}.

    S_f = kappa/(w^2 + lam^2), S_q = |g_qf|^2 S_f, S_p = (m*w)^2 |g_qf|^2 S_f.
    The momentum spectrum is evaluated in this factored form so S_p(0) = 0
    exactly, with no intermediate division by w.
    """
    w = np.asarray(omega, dtype=float)
    sf = force.kappa / (w**2 + force.lam**2)
    if x == "f":
        out = sf
    elif x == "q":
        out = np.abs(np.asarray(tf(w), dtype=complex)) ** 2 * sf
    elif x == "p":
        out = (params.m * w) ** 2 * np.abs(np.asarray(tf(w), dtype=complex)) ** 2 * sf
    else:
        raise ValueError(f"unknown prior tag {x!r}, expected one of {PRIOR_TAGS}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PriorModel:
    """Bundle of the mirror parameters, transfer function and force prior."""

    params: MirrorParams
    force: ForceParams
    tf: TransferFunction

    def psd(self, x: str, omega):
        return prior_psd(x, omega, self.force, self.tf, self.params)

    def g(self, i: str, j: str, omega):
        return motion_function(i, j, omega, self.tf, self.params)

    def information_kernel(self, omega):
        """|g_phi-f(w)|^2 S_f(w) = c^2 |g_qf|^2 S_f, shared by all MSE integrands."""
        w = np.asarray(omega, dtype=float)
        c = self.params.phase_gain
        return c * c * np.abs(np.asarray(self.tf(w), dtype=complex)) ** 2 * self.psd("f", w)
