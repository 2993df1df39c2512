"""Lab-frame time evolution of the 9-level system over a gate schedule.

The cosine drive and the counter-rotating parts of the coupling are kept; no
rotating-wave approximation is made.  Each step is the exact exponential of a
sixth-order Magnus generator built from the Hamiltonian at three
Gauss-Legendre nodes, so every step is unitary to rounding.  The rotating
frame (qubit at its instantaneous frequency, resonator at ``omega``) enters
only through the boundary transformation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import DIM, TWO_PI, DeviceParams, X3, Y3, I3, N3, basis_index, h0_diagonal
from .pulses import GateSchedule, drive_coefficients, epsilon_integral, epsilon_of_t, z_rotation

COMPUTATIONAL = np.array([basis_index(q, r) for q, r in ((0, 0), (0, 1), (1, 0), (1, 1))])
CHUNK = 4096
#: integrator step used while searching; reported numbers use the schedule's own dt
COARSE_DT = 0.02

_DRIVE = np.kron(X3, I3)
_YY = np.kron(Y3, Y3).real
_NQ = np.diag(np.kron(N3, I3)).copy()
_NR = np.diag(np.kron(I3, N3)).copy()
_GAUSS = math.sqrt(15.0) / 10.0

HamiltonianFn = Callable[[np.ndarray], np.ndarray]


class StepTooCoarse(RuntimeError):
    """Halving the integrator step moved the projected propagator too much."""


@dataclass(frozen=True)
class EvolutionResult:
    u_full: np.ndarray
    u_frame: np.ndarray
    u_comp: np.ndarray
    steps: int

    @property
    def unitarity_error(self) -> float:
        return float(np.abs(self.u_full.conj().T @ self.u_full - np.eye(DIM)).max())


def time_grid(schedule: GateSchedule, dt: float | None = None) -> np.ndarray:
    """Step edges (ns); every segment boundary is an edge."""
    dt = schedule.dt if dt is None else dt
    bounds = [0.0, schedule.drive_start, schedule.drive_stop, schedule.t_gate]
    pieces = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        n = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    return np.concatenate(pieces + [np.array([schedule.t_gate])])


def hamiltonian(schedule: GateSchedule, params: DeviceParams, t) -> np.ndarray:
    """Real symmetric ``H(t)`` stacked over times, shape ``(n, 9, 9)``, rad/ns.

    ``params.epsilon`` is ignored; the schedule supplies the qubit frequency.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    eps = epsilon_of_t(schedule, t)
    coeff = drive_coefficients(schedule, t)
    hs = coeff[:, None, None] * _DRIVE + TWO_PI * params.g * _YY
    idx = np.arange(DIM)
    hs[:, idx, idx] += h0_diagonal(eps, params.omega, params.delta)
    return hs


def _comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def magnus_generators(ham: HamiltonianFn, edges: np.ndarray) -> np.ndarray:
    """Hermitian ``G_k`` with step propagator ``exp(-i G_k)``."""
    h = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    off = _GAUSS * h
    hh = h[:, None, None]
    a1 = -1j * hh * ham(mid - off)
    a2 = -1j * hh * ham(mid)
    a3 = -1j * hh * ham(mid + off)
    b1 = a2
    b2 = (math.sqrt(15.0) / 3.0) * (a3 - a1)
    b3 = (10.0 / 3.0) * (a3 - 2.0 * a2 + a1)
    c1 = _comm(b1, b2)
    c2 = -_comm(b1, 2.0 * b3 + c1) / 60.0
    omega = b1 + b3 / 12.0 + _comm(-20.0 * b1 - b3 + c1, b2 + c2) / 240.0
    gen = 1j * omega
    return 0.5 * (gen + gen.conj().transpose(0, 2, 1))


def step_propagators(generators: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(generators)
    return (v * np.exp(-1j * w)[:, None, :]) @ v.conj().transpose(0, 2, 1)


def chain(us: np.ndarray) -> np.ndarray:
    """Time-ordered product ``us[-1] @ ... @ us[0]`` by pairwise reduction."""
    us = np.asarray(us)
    if us.shape[0] == 0:
        return np.eye(us.shape[-1], dtype=complex)
    while us.shape[0] > 1:
        n = us.shape[0] // 2 * 2
        paired = us[1:n:2] @ us[0:n:2]
        us = np.concatenate([paired, us[n:]]) if n < us.shape[0] else paired
    return us[0]


def evolve(ham: HamiltonianFn, edges: np.ndarray) -> np.ndarray:
    """Propagator from ``edges[0]`` to ``edges[-1]`` for ``H(t) = ham(t)``."""
    u = np.eye(DIM, dtype=complex)
    for start in range(0, len(edges) - 1, CHUNK):
        sub = edges[start:start + CHUNK + 1]
        u = chain(step_propagators(magnus_generators(ham, sub))) @ u
    return u


def frame_rotation(schedule: GateSchedule, params: DeviceParams, t: float) -> np.ndarray:
    """Diagonal of ``R(t)`` for the qubit/resonator rotating frame.

    The qubit part follows the accumulated ``epsilon`` and includes the
    anharmonic shift of ``|2>`` so that the uncoupled, undriven evolution is
    exactly the identity; the computational block is unaffected by the latter.
    """
    phase_q = TWO_PI * epsilon_integral(schedule, t)
    phase_r = TWO_PI * params.omega * t
    phase_anh = -TWO_PI * params.delta * t * (_NQ == 2)
    return np.exp(-1j * (phase_q * _NQ + phase_r * _NR + phase_anh))


def frame_transform(u_lab: np.ndarray, schedule: GateSchedule, params: DeviceParams) -> np.ndarray:
    """``R(t_gate)^dagger u_lab R(0)``; ``R(0)`` is the identity."""
    r_end = frame_rotation(schedule, params, schedule.t_gate)
    r_start = frame_rotation(schedule, params, 0.0)
    return (r_end.conj()[:, None] * u_lab) * r_start[None, :]


def project_computational(u_frame: np.ndarray, theta_pre: float, theta_post: float) -> np.ndarray:
    """4x4 block on ``|00>, |01>, |10>, |11>`` after the virtual z turns."""
    wrapped = z_rotation(theta_post) @ u_frame @ z_rotation(theta_pre)
    return wrapped[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]


def lab_propagator(schedule: GateSchedule, params: DeviceParams, dt: float | None = None) -> np.ndarray:
    edges = time_grid(schedule, dt)
    return evolve(lambda t: hamiltonian(schedule, params, t), edges)


def propagate(schedule: GateSchedule, params: DeviceParams, dt: float | None = None,
              check_convergence: bool = False, tolerance: float = 1e-6) -> EvolutionResult:
    """Evolve over the schedule and project onto the computational subspace.

    With ``check_convergence`` the run is repeated at half the step and
    :class:`StepTooCoarse` is raised if any projected entry moves by more than
    ``tolerance``.
    """
    dt = schedule.dt if dt is None else dt
    u_full = lab_propagator(schedule, params, dt)
    u_frame = frame_transform(u_full, schedule, params)
    u_comp = project_computational(u_frame, schedule.theta_pre, schedule.theta_post)
    if check_convergence:
        fine = frame_transform(lab_propagator(schedule, params, dt / 2.0), schedule, params)
        fine_comp = project_computational(fine, schedule.theta_pre, schedule.theta_post)
        change = float(np.abs(fine_comp - u_comp).max())
        if change > tolerance:
            raise StepTooCoarse(f"halving dt={dt} ns changed u_comp by {change:.3e}")
    return EvolutionResult(u_full, u_frame, u_comp, len(time_grid(schedule, dt)) - 1)


def population_trace(schedule: GateSchedule, params: DeviceParams, initial: int,
                     dt: float | None = None, stride: int = 1):
    """Rows ``(t, p00, p01, p10, p11, leak)`` for a bare initial basis state."""
    edges = time_grid(schedule, dt)
    psi = np.zeros(DIM, dtype=complex)
    psi[initial] = 1.0
    rows = [(0.0, *_pops(psi))]
    ham = lambda t: hamiltonian(schedule, params, t)  # noqa: E731
    for start in range(0, len(edges) - 1, CHUNK):
        us = step_propagators(magnus_generators(ham, edges[start:start + CHUNK + 1]))
        for k, u in enumerate(us):
            psi = u @ psi
            n = start + k + 1
            if n % stride == 0 or n == len(edges) - 1:
                rows.append((float(edges[n]), *_pops(psi)))
    return rows


def _pops(psi: np.ndarray):
    p = np.abs(psi) ** 2
    comp = p[COMPUTATIONAL]
    return (*comp.tolist(), float(1.0 - comp.sum()))
