"""Target gate and the state / trace process fidelities.

The target is a CNOT with the resonator as control and the qubit as target,
written in ``|q r>`` order (``SWAP @ CNOT @ SWAP``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .propagator import COMPUTATIONAL

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

#: qubit excitation of each computational basis state |00>, |01>, |10>, |11>
_QUBIT_LEVEL = np.array([0, 0, 1, 1])


@dataclass(frozen=True)
class TargetGate:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError("target must be 4x4")
        if not np.allclose(m.conj().T @ m, np.eye(4), atol=1e-12):
            raise ValueError("target must be unitary")
        object.__setattr__(self, "matrix", m)


CNOT_TARGET = TargetGate(SWAP @ CNOT @ SWAP)


def _matrix(target) -> np.ndarray:
    return target.matrix if isinstance(target, TargetGate) else np.asarray(target, dtype=complex)


def state_fidelity(u: np.ndarray, target=CNOT_TARGET, psi=None) -> float:
    """``|<psi| U_target^dagger U |psi>|^2`` for a normalized 4-vector."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
        raise ValueError("psi must be normalized")
    amp = psi.conj() @ _matrix(target).conj().T @ np.asarray(u) @ psi
    return float(abs(amp) ** 2)


def trace_fidelity(u: np.ndarray, target=CNOT_TARGET) -> float:
    """Hilbert-space averaged state fidelity via ``(Tr UU^+ + |Tr T^+U|^2)/20``.

    ``u`` may be a non-unitary projection of a larger propagator.
    """
    u = np.asarray(u, dtype=complex)
    t = _matrix(target)
    d = t.shape[0]
    return float((np.trace(u @ u.conj().T).real + abs(np.trace(t.conj().T @ u)) ** 2) / (d * (d + 1)))


def _phase_sums(u_comp: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Sums of ``conj(T_ij) U_ij`` grouped by (qubit level out, qubit level in)."""
    prod = t.conj() * u_comp
    sums = np.zeros((2, 2), dtype=complex)
    for a in (0, 1):
        for b in (0, 1):
            sums[a, b] = prod[np.ix_(_QUBIT_LEVEL == a, _QUBIT_LEVEL == b)].sum()
    return sums


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def optimize_z_angles(u_frame: np.ndarray, target=CNOT_TARGET, grid: int = 64):
    """Best virtual z angles around a frame propagator.

    Returns ``(theta_pre, theta_post, fidelity)`` with angles in ``[-pi, pi)``.
    The trace overlap is a trigonometric polynomial in the two angles, so a
    64x64 scan followed by simplex refinement finds the global optimum.
    """
    u_comp = np.asarray(u_frame)[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    t = _matrix(target)
    d = t.shape[0]
    norm = np.trace(u_comp @ u_comp.conj().T).real
    s = _phase_sums(u_comp, t)

    def overlap(pre, post):
        return np.abs(s[0, 0] + s[0, 1] * np.exp(-1j * pre) + s[1, 0] * np.exp(-1j * post)
                      + s[1, 1] * np.exp(-1j * (pre + post))) ** 2

    axis = -math.pi + 2.0 * math.pi * np.arange(grid) / grid
    pre, post = np.meshgrid(axis, axis, indexing="ij")
    scan = overlap(pre, post)
    i, j = np.unravel_index(np.argmax(scan), scan.shape)
    res = minimize(lambda x: -overlap(x[0], x[1]), x0=[axis[i], axis[j]], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 2000})
    best = res.x if -res.fun >= scan[i, j] else np.array([axis[i], axis[j]])
    theta_pre, theta_post = _wrap(float(best[0])), _wrap(float(best[1]))
    fid = (norm + overlap(theta_pre, theta_post)) / (d * (d + 1))
    return theta_pre, theta_post, float(fid)
