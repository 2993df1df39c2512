"""Device parameters and the static/drive/coupling Hamiltonian terms.

Frequencies are stored as linear GHz (the ``g/h = 115 MHz`` convention) and
converted once to angular frequency in rad/ns when matrices are built, so
``hbar = 1`` and ``2*pi*GHz*ns`` is a dimensionless phase.

Basis ordering is ``|q r>`` with index ``3*q + r``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

import numpy as np

TWO_PI = 2.0 * math.pi
LEVELS = 3
DIM = LEVELS * LEVELS

SQRT2 = math.sqrt(2.0)

#: qubit-local drive coupling (X-type) with the harmonic sqrt(2) 1-2 element
X3 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, SQRT2], [0.0, SQRT2, 0.0]])
#: capacitive coupling operator (Y-type) used on both devices
Y3 = np.array([[0.0, -1.0j, 0.0], [1.0j, 0.0, -SQRT2 * 1.0j], [0.0, SQRT2 * 1.0j, 0.0]])
#: number operator of a 3-level truncation
N3 = np.diag([0.0, 1.0, 2.0])
I3 = np.eye(LEVELS)


class ConfigError(ValueError):
    """Raised on malformed or unit-ambiguous configuration input."""


def basis_index(q: int, r: int) -> int:
    return LEVELS * q + r


def angular(f_ghz: float) -> float:
    """Linear frequency in GHz to angular frequency in rad/ns."""
    return TWO_PI * f_ghz


def strict_keys(block: Mapping[str, Any], required: set[str], optional: set[str] = frozenset(),
                where: str = "config") -> None:
    """Reject unknown keys and report missing ones by name."""
    if not isinstance(block, Mapping):
        raise ConfigError(f"{where}: expected an object, got {type(block).__name__}")
    unknown = set(block) - required - set(optional)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {sorted(missing)}")


@dataclass(frozen=True)
class DeviceParams:
    """Static device frequencies in linear GHz.

    ``epsilon`` is the qubit 0-1 frequency, ``omega`` the resonator frequency,
    ``delta`` the qubit anharmonicity and ``g`` the qubit-resonator coupling.
    """

    epsilon: float
    omega: float
    delta: float
    g: float

    def __post_init__(self):
        for name in ("epsilon", "omega", "delta", "g"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.omega <= 0:
            raise ValueError("omega must be > 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")

    @property
    def detuning(self) -> float:
        return self.epsilon - self.omega

    def with_(self, **changes) -> "DeviceParams":
        return replace(self, **changes)

    _KEYS = {"epsilon_ghz": "epsilon", "omega_ghz": "omega", "delta_ghz": "delta", "g_ghz": "g"}

    @classmethod
    def from_dict(cls, block: Mapping[str, Any], where: str = "device") -> "DeviceParams":
        strict_keys(block, set(cls._KEYS), where=where)
        try:
            values = {attr: float(block[key]) for key, attr in cls._KEYS.items()}
            return cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def to_dict(self) -> dict[str, float]:
        return {key: getattr(self, attr) for key, attr in self._KEYS.items()}

    @classmethod
    def from_json(cls, text: str) -> "DeviceParams":
        return cls.from_dict(json.loads(text))


#: device used throughout the reference design (qubit parked at 215 MHz detuning)
PAPER_DEVICE = DeviceParams(epsilon=6.715, omega=6.5, delta=0.2, g=0.115)


@dataclass(frozen=True)
class DriveSample:
    """Drive quadratures (rad/ns) and the accumulated carrier phase (rad)."""

    amplitude_x: float
    amplitude_y: float
    carrier_phase: float

    def __post_init__(self):
        if not (math.isfinite(self.amplitude_x) and math.isfinite(self.amplitude_y)):
            raise ValueError("drive amplitudes must be finite")

    @property
    def coefficient(self) -> float:
        """Real coefficient multiplying the drive operator."""
        return drive_coefficient(self.amplitude_x, self.amplitude_y, self.carrier_phase)


def drive_coefficient(ax, ay, phase):
    # Omega*cos(phase + phi) with Omega*cos(phi) = ax, Omega*sin(phi) = ay
    return ax * np.cos(phase) - ay * np.sin(phase)


def qubit_diagonal(epsilon: float, delta: float) -> np.ndarray:
    return np.array([0.0, epsilon, 2.0 * epsilon - delta])


def resonator_diagonal(omega: float) -> np.ndarray:
    return np.array([0.0, omega, 2.0 * omega])


def h0_diagonal(epsilon, omega: float, delta: float) -> np.ndarray:
    """Diagonal of the bare Hamiltonian in rad/ns; vectorized over ``epsilon``.

    Returns shape ``(..., 9)``.
    """
    eps = np.asarray(epsilon, dtype=float)[..., None]
    hq = np.concatenate([np.zeros_like(eps), eps, 2.0 * eps - delta], axis=-1)
    hr = resonator_diagonal(omega)
    return TWO_PI * (hq[..., :, None] + hr[None, :]).reshape(*eps.shape[:-1], DIM)


def build_h0(params: DeviceParams) -> np.ndarray:
    """Bare qubit + resonator Hamiltonian, 9x9 diagonal, rad/ns."""
    return np.diag(h0_diagonal(params.epsilon, params.omega, params.delta)).astype(complex)


def build_drive_operator() -> np.ndarray:
    """Qubit drive operator ``X_q (x) I_r`` (unit amplitude)."""
    return np.kron(X3, I3).astype(complex)


def build_hint(params: DeviceParams) -> np.ndarray:
    """Qubit-resonator coupling ``2*pi*g * Y_q (x) Y_r`` in rad/ns."""
    return angular(params.g) * np.kron(Y3, Y3)


def build_static(params: DeviceParams) -> np.ndarray:
    """``H0 + H_int`` for a fixed qubit frequency."""
    return build_h0(params) + build_hint(params)


def number_operator_qubit() -> np.ndarray:
    return np.kron(N3, I3)


def number_operator_resonator() -> np.ndarray:
    return np.kron(I3, N3)
