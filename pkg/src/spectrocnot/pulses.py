"""Control program: linear flux ramps, shaped DRAG drive and virtual z turns.

Time runs in ns, frequencies in GHz (schedules) or rad/ns (drive amplitudes).
The schedule is three segments: ramp in, drive, ramp out.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Mapping

import numpy as np
from scipy.special import erf

from .model import TWO_PI, ConfigError, DriveSample, N3, I3, angular, drive_coefficient, strict_keys

SQRT2 = math.sqrt(2.0)


class DomainError(ValueError):
    """Time argument outside the segment where the quantity is defined."""


def _check_window(t, lo: float, hi: float, what: str, slack: float = 1e-12):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < lo - slack) or np.any(arr > hi + slack):
        raise DomainError(f"{what}: t outside [{lo}, {hi}] ns")
    return arr


@dataclass(frozen=True)
class DragPulse:
    """Shifted-Gaussian rotation with the 5th-order DRAG correction families.

    ``omega_c`` and ``delta_anh`` are angular (rad/ns).  ``scale3``, ``scale5``
    and ``scale_det`` multiply the cubic amplitude, quintic amplitude and
    carrier-shift corrections.  ``corrections=False`` leaves the bare Gaussian
    on the in-phase channel at fixed carrier.
    """

    theta: float
    t_g: float
    omega_c: float
    delta_anh: float
    lam: float = SQRT2
    sigma_frac: float = 1.0 / 6.0
    scale3: float = 1.0
    scale5: float = 1.0
    scale_det: float = 1.0
    corrections: bool = True

    def __post_init__(self):
        if not self.t_g > 0:
            raise ValueError("t_g must be > 0")
        if not 0 < self.sigma_frac < 0.5:
            raise ValueError("sigma_frac must lie in (0, 0.5)")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")

    @property
    def sigma(self) -> float:
        return self.sigma_frac * self.t_g

    @property
    def amplitude(self) -> float:
        """Prefactor fixing the envelope area to ``theta``."""
        s, tg = self.sigma, self.t_g
        area = s * math.sqrt(2.0 * math.pi) * erf(tg / (2.0 * SQRT2 * s)) - tg * math.exp(-tg**2 / (8.0 * s**2))
        return self.theta / area


def _gauss(pulse: DragPulse, t: np.ndarray):
    s = pulse.sigma
    x = t - pulse.t_g / 2.0
    return np.exp(-(x**2) / (2.0 * s**2)), x / s**2


def envelope(pulse: DragPulse, t):
    """Envelope ``f(t)`` in rad/ns on ``[0, t_g]``; zero at both ends."""
    t = _check_window(t, 0.0, pulse.t_g, "envelope")
    gauss, _ = _gauss(pulse, t)
    floor = math.exp(-pulse.t_g**2 / (8.0 * pulse.sigma**2))
    return pulse.amplitude * (gauss - floor)


def envelope_derivative(pulse: DragPulse, t):
    """Analytic time derivative of :func:`envelope` (rad/ns^2)."""
    t = _check_window(t, 0.0, pulse.t_g, "envelope_derivative")
    gauss, slope = _gauss(pulse, t)
    return -pulse.amplitude * slope * gauss


def drag_coefficients(lam: float) -> dict[str, float]:
    """Rational prefactors of the correction terms for a given ``lam``."""
    l2 = lam * lam
    # undo rounding so that lam = sqrt(2) squares to exactly 2
    if abs(l2 - round(l2)) <= 8.0 * np.finfo(float).eps * max(l2, 1.0):
        l2 = float(round(l2))
    return {
        "x3": (l2 - 4.0) / 8.0,
        "x5": (13.0 * l2 * l2 - 76.0 * l2 + 112.0) / 128.0,
        "y3": 33.0 * (l2 - 2.0) / 24.0,
        "det2": (l2 - 4.0) / 4.0,
        "det4": (l2 * l2 - 7.0 * l2 + 12.0) / 16.0,
    }


def drag_quadratures(pulse: DragPulse, t):
    """In-phase, quadrature amplitude and instantaneous carrier (all rad/ns)."""
    if pulse.delta_anh == 0:
        raise ValueError("delta_anh must be non-zero")
    f = envelope(pulse, t)
    if not pulse.corrections:
        return f, np.zeros_like(f), np.full_like(f, pulse.omega_c)
    fdot = envelope_derivative(pulse, t)
    c = drag_coefficients(pulse.lam)
    d = pulse.delta_anh
    omega_x = f + pulse.scale3 * c["x3"] * f**3 / d**2 - pulse.scale5 * c["x5"] * f**5 / d**4
    omega_y = -fdot / d + c["y3"] * f**2 * fdot / d**3
    omega_rf = pulse.omega_c + pulse.scale_det * (c["det2"] * f**2 / d - c["det4"] * f**4 / d**3)
    return omega_x, omega_y, omega_rf


@dataclass(frozen=True)
class GateSchedule:
    """Ramp in, drive, ramp out; virtual z turns wrap the whole sequence."""

    t_gate: float
    t_ramp: float
    epsilon_park: float
    epsilon_drive: float
    drive: DragPulse
    theta_pre: float = 0.0
    theta_post: float = 0.0
    dt: float = 0.005

    def __post_init__(self):
        if not self.t_ramp > 0:
            raise ValueError("t_ramp must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.dt > self.t_ramp / 50.0 + 1e-15:
            raise ValueError("dt must be <= t_ramp/50")
        if abs(self.t_gate - (2.0 * self.t_ramp + self.drive.t_g)) > 1e-9:
            raise ValueError("t_gate must equal 2*t_ramp + drive.t_g")

    @property
    def drive_start(self) -> float:
        return self.t_ramp

    @property
    def drive_stop(self) -> float:
        return self.t_ramp + self.drive.t_g

    def with_(self, **changes) -> "GateSchedule":
        return replace(self, **changes)

    _KEYS = {"t_gate_ns", "t_ramp_ns", "epsilon_park_ghz", "epsilon_drive_ghz", "theta",
             "sigma_frac", "omega_c_ghz", "scale3", "scale5", "scale_det", "theta_pre",
             "theta_post", "dt_ns"}
    _OPTIONAL = {"delta_anh_ghz", "lambda", "corrections"}

    def to_dict(self) -> dict[str, Any]:
        d = self.drive
        return {
            "t_gate_ns": self.t_gate, "t_ramp_ns": self.t_ramp,
            "epsilon_park_ghz": self.epsilon_park, "epsilon_drive_ghz": self.epsilon_drive,
            "theta": d.theta, "sigma_frac": d.sigma_frac, "omega_c_ghz": d.omega_c / TWO_PI,
            "scale3": d.scale3, "scale5": d.scale5, "scale_det": d.scale_det,
            "theta_pre": self.theta_pre, "theta_post": self.theta_post, "dt_ns": self.dt,
            "delta_anh_ghz": d.delta_anh / TWO_PI, "lambda": d.lam, "corrections": d.corrections,
        }

    @classmethod
    def from_dict(cls, block: Mapping[str, Any], delta_anh_ghz: float | None = None,
                  where: str = "schedule") -> "GateSchedule":
        """Parse a schedule block.

        ``delta_anh_ghz`` in the block wins; otherwise the caller's value is used
        (normally the device anharmonicity).
        """
        strict_keys(block, cls._KEYS, cls._OPTIONAL, where=where)
        try:
            anh = block.get("delta_anh_ghz", delta_anh_ghz)
            if anh is None:
                raise ConfigError(f"{where}: delta_anh_ghz not given and no device default")
            t_gate, t_ramp = float(block["t_gate_ns"]), float(block["t_ramp_ns"])
            drive = DragPulse(
                theta=float(block["theta"]), t_g=t_gate - 2.0 * t_ramp,
                omega_c=angular(float(block["omega_c_ghz"])), delta_anh=angular(float(anh)),
                lam=float(block.get("lambda", SQRT2)), sigma_frac=float(block["sigma_frac"]),
                scale3=float(block["scale3"]), scale5=float(block["scale5"]),
                scale_det=float(block["scale_det"]), corrections=bool(block.get("corrections", True)),
            )
            return cls(t_gate=t_gate, t_ramp=t_ramp, epsilon_park=float(block["epsilon_park_ghz"]),
                       epsilon_drive=float(block["epsilon_drive_ghz"]), drive=drive,
                       theta_pre=float(block["theta_pre"]), theta_post=float(block["theta_post"]),
                       dt=float(block["dt_ns"]))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str, delta_anh_ghz: float | None = None) -> "GateSchedule":
        return cls.from_dict(json.loads(text), delta_anh_ghz)


def epsilon_of_t(schedule: GateSchedule, t):
    """Qubit frequency (GHz): linear ramp, plateau, linear ramp back."""
    t = _check_window(t, 0.0, schedule.t_gate, "epsilon_of_t")
    park, drive, tr = schedule.epsilon_park, schedule.epsilon_drive, schedule.t_ramp
    up = park + (drive - park) * np.clip(t / tr, 0.0, 1.0)
    down = park + (drive - park) * np.clip((schedule.t_gate - t) / tr, 0.0, 1.0)
    out = np.where(t <= schedule.t_gate - tr, up, down)
    return out if out.ndim else float(out)


def epsilon_integral(schedule: GateSchedule, t: float) -> float:
    """Exact ``int_0^t epsilon dt'`` in GHz*ns for the piecewise-linear profile."""
    park, drive, tr, tgate = schedule.epsilon_park, schedule.epsilon_drive, schedule.t_ramp, schedule.t_gate
    t = float(_check_window(t, 0.0, tgate, "epsilon_integral"))
    slope = (drive - park) / tr
    a = min(t, tr)
    total = park * a + 0.5 * slope * a * a
    if t > tr:
        total += drive * (min(t, tgate - tr) - tr)
    if t > tgate - tr:
        b = t - (tgate - tr)
        total += drive * b - 0.5 * slope * b * b
    return total


def envelope_power_integral(pulse: DragPulse, tau, n: int):
    """Closed form of ``int_0^tau f(t)^n dt``.

    ``f^n`` expands binomially into powers of the Gaussian, each of which
    integrates to an error function.
    """
    tau = np.asarray(tau, dtype=float)
    s, half = pulse.sigma, pulse.t_g / 2.0
    floor = math.exp(-pulse.t_g**2 / (8.0 * s**2))
    total = np.zeros_like(tau)
    for j in range(n + 1):
        weight = math.comb(n, j) * (-floor) ** (n - j)
        if j == 0:
            part = tau
        else:
            k = math.sqrt(j) / (SQRT2 * s)
            part = s * math.sqrt(math.pi / (2.0 * j)) * (erf(k * (tau - half)) + erf(k * half))
        total = total + weight * part
    return pulse.amplitude**n * total


def carrier_phase(schedule: GateSchedule, t):
    """Accumulated carrier phase ``int omega_rf dt'`` since drive start (rad)."""
    pulse = schedule.drive
    t = _check_window(t, schedule.drive_start, schedule.drive_stop, "carrier_phase")
    tau = t - schedule.drive_start
    phase = pulse.omega_c * tau
    if pulse.corrections and pulse.scale_det != 0.0:
        c = drag_coefficients(pulse.lam)
        d = pulse.delta_anh
        shift = (c["det2"] / d) * envelope_power_integral(pulse, tau, 2) \
            - (c["det4"] / d**3) * envelope_power_integral(pulse, tau, 4)
        phase = phase + pulse.scale_det * shift
    return phase


def drive_sample(schedule: GateSchedule, t: float, accumulated_phase: float) -> DriveSample:
    """Drive quadratures at ``t`` against the caller-tracked carrier phase."""
    t = float(_check_window(t, schedule.drive_start, schedule.drive_stop, "drive_sample"))
    ox, oy, _ = drag_quadratures(schedule.drive, t - schedule.drive_start)
    return DriveSample(float(ox), float(oy), float(accumulated_phase))


def drive_coefficients(schedule: GateSchedule, t: np.ndarray) -> np.ndarray:
    """Vectorized real drive coefficient at times ``t`` (zero off the drive window)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    on = (t >= schedule.drive_start) & (t <= schedule.drive_stop)
    if np.any(on):
        ton = np.clip(t[on], schedule.drive_start, schedule.drive_stop)
        ox, oy, _ = drag_quadratures(schedule.drive, ton - schedule.drive_start)
        out[on] = drive_coefficient(ox, oy, carrier_phase(schedule, ton))
    return out


def z_rotation(theta: float) -> np.ndarray:
    """Virtual qubit z turn ``exp(-i theta n_q) (x) I`` as a 9x9 diagonal."""
    phases = np.exp(-1j * theta * np.diag(N3))
    return np.diag(np.kron(phases, np.ones(I3.shape[0]))).astype(complex)


def trapezoid_schedule(t_gate: float, t_ramp: float, epsilon_park: float, epsilon_drive: float,
                       omega_c: float, delta_anh: float, theta: float = math.pi, **kw) -> GateSchedule:
    """Convenience constructor taking the drive duration from the gate time."""
    drive_keys = {"lam", "sigma_frac", "scale3", "scale5", "scale_det", "corrections"}
    drive_kw = {k: kw.pop(k) for k in list(kw) if k in drive_keys}
    pulse = DragPulse(theta=theta, t_g=t_gate - 2.0 * t_ramp, omega_c=omega_c,
                      delta_anh=delta_anh, **drive_kw)
    return GateSchedule(t_gate=t_gate, t_ramp=t_ramp, epsilon_park=epsilon_park,
                        epsilon_drive=epsilon_drive, drive=pulse, **kw)

