"""Eight-parameter search for the spectroscopic CNOT and the fidelity curve.

Search coordinates, in order:

``g`` (GHz), ``detuning`` of the driven point from the resonator (GHz),
``omega_c_frac`` (carrier offset from ``omega_on`` in units of the
conditional sensitivity, so the window ``[-0.5, 0.5]`` spans
``omega_on +/- S_c/2``), ``theta`` (rad), ``t_ramp`` (ns) and the three DRAG
correction multipliers ``scale3``, ``scale5``, ``scale_det``.

``theta`` is the rotation angle on the driven dressed transition
``|01> -> |11>``.  Hybridization with the resonator shrinks the drive matrix
element of that transition below one, so the envelope area handed to the
pulse is ``theta / m`` with ``m = |<11|X|01>|`` in the dressed basis.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .fidelity import CNOT_TARGET, optimize_z_angles
from .model import I3, X3, DeviceParams, basis_index
from .propagator import COARSE_DT, EvolutionResult, propagate
from .pulses import DragPulse, GateSchedule
from .spectrum import AssignmentAmbiguous, labeled_spectrum, sweep_coupling, sweep_detuning, transition_frequencies

log = logging.getLogger(__name__)

PARAM_NAMES = ("g", "detuning", "omega_c_frac", "theta", "t_ramp", "scale3", "scale5", "scale_det")
PENALTY = 1.0

_DRIVE = np.kron(X3, I3)


@dataclass(frozen=True)
class GateContext:
    """Everything held fixed while the eight controls vary."""

    omega: float = 6.5
    delta: float = 0.2
    park_detuning: float = 1.0
    sigma_frac: float = 0.45
    dt_search: float = COARSE_DT
    dt_final: float = 0.005

    @property
    def epsilon_park(self) -> float:
        return self.omega + self.park_detuning

    def device(self, g: float, detuning: float) -> DeviceParams:
        return DeviceParams(epsilon=self.omega + detuning, omega=self.omega, delta=self.delta, g=g)

    @classmethod
    def from_device(cls, device: DeviceParams, **kw) -> "GateContext":
        return cls(omega=device.omega, delta=device.delta, **kw)


@dataclass(frozen=True)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray
    budget: int = 2000
    restarts: int = 4
    seed: int = 0
    #: points per axis of the (g, detuning) screening grid; 0 disables it
    screen: int = 6

    def __post_init__(self):
        lo, hi, x0 = (np.asarray(a, dtype=float) for a in (self.lower, self.upper, self.x0))
        for a in (lo, hi, x0):
            if a.shape != (len(PARAM_NAMES),):
                raise ValueError(f"search space needs exactly {len(PARAM_NAMES)} dimensions")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ValueError("bounds must be finite with lower < upper")
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("initial guess outside bounds")
        if self.budget < 1 or self.restarts < 0 or self.screen < 0:
            raise ValueError("budget must be >= 1, restarts and screen >= 0")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "x0", x0)

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def with_(self, **changes) -> "SearchSpace":
        return replace(self, **changes)


GUESS_DETUNING = (0.200, 0.250)
GUESS_COUPLING = (0.100, 0.125)
DEFAULT_LOWER = np.array([0.08, 0.17, -0.5, 0.5 * math.pi, 4.0, -2.0, -2.0, -2.0])
DEFAULT_UPPER = np.array([0.15, 0.28, 0.5, 1.5 * math.pi, 12.0, 4.0, 4.0, 4.0])


@dataclass
class Evaluation:
    fidelity: float
    schedule: GateSchedule | None
    result: EvolutionResult | None = None


@dataclass
class OptimizationRecord:
    t_gate: float
    params: np.ndarray
    theta_pre: float
    theta_post: float
    fidelity: float
    evaluations: int
    converged: bool
    budget_exhausted: bool = False
    search_fidelity: float = math.nan
    max_unitarity_error: float = 0.0
    schedule: GateSchedule | None = None
    history: list[float] = field(default_factory=list, repr=False)
    error: str | None = None

    @property
    def named(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, (float(v) for v in self.params)))

    def to_dict(self) -> dict:
        out = {
            "t_gate_ns": self.t_gate,
            "params": self.named,
            "theta_pre": self.theta_pre,
            "theta_post": self.theta_post,
            "fidelity": self.fidelity,
            "search_fidelity": self.search_fidelity,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "budget_exhausted": self.budget_exhausted,
            "max_unitarity_error": self.max_unitarity_error,
        }
        if self.schedule is not None:
            out["schedule"] = self.schedule.to_dict()
        if self.error is not None:
            out["error"] = self.error
        return out


def operating_point(g: float, detuning: float, ctx: GateContext):
    """``(omega_on, s_c, anharmonicity, m)`` for the driven ladder, rad/ns.

    The anharmonicity is the signed ``(E11-E01) - (E21-E11)``: positive for a
    qubit-like ladder whose upper transition sits lower.  ``m`` is the
    dressed drive matrix element of ``|01> -> |11>``.
    """
    spec = labeled_spectrum(ctx.device(g, detuning))
    omega_on, omega_off = transition_frequencies(spec)
    anh = omega_on - (spec[2, 1] - spec[1, 1])
    v = spec.vectors
    m = abs(v[:, basis_index(1, 1)].conj() @ _DRIVE @ v[:, basis_index(0, 1)])
    return omega_on, abs(omega_on - omega_off), anh, float(m)


def build_schedule(x, t_gate: float, ctx: GateContext, theta_pre: float = 0.0,
                   theta_post: float = 0.0, dt: float | None = None) -> GateSchedule:
    g, det, frac, theta, t_ramp, s3, s5, sdet = (float(v) for v in x)
    t_g = t_gate - 2.0 * t_ramp
    if t_g <= 0:
        raise ValueError(f"ramps of {t_ramp} ns leave no drive time in {t_gate} ns")
    omega_on, s_c, anh, m = operating_point(g, det, ctx)
    pulse = DragPulse(theta=theta / m, t_g=t_g, omega_c=omega_on + frac * s_c, delta_anh=anh,
                      sigma_frac=ctx.sigma_frac, scale3=s3, scale5=s5, scale_det=sdet)
    return GateSchedule(t_gate=t_gate, t_ramp=t_ramp, epsilon_park=ctx.epsilon_park,
                        epsilon_drive=ctx.omega + det, drive=pulse, theta_pre=theta_pre,
                        theta_post=theta_post, dt=ctx.dt_final if dt is None else dt)


def evaluate(x, t_gate: float, ctx: GateContext, dt: float | None = None) -> Evaluation:
    """Propagate one control vector and fit the virtual z angles."""
    try:
        sched = build_schedule(x, t_gate, ctx, dt=dt)
    except (ValueError, AssignmentAmbiguous) as exc:
        log.debug("infeasible point %s: %s", x, exc)
        return Evaluation(0.0, None)
    params = ctx.device(float(x[0]), float(x[1]))
    result = propagate(sched, params)
    pre, post, fid = optimize_z_angles(result.u_frame, CNOT_TARGET)
    return Evaluation(fid, sched.with_(theta_pre=pre, theta_post=post), result)


def objective(x, t_gate: float, ctx: GateContext, dt: float | None = None) -> float:
    """``1 - F`` after z-angle fitting; ``PENALTY`` for infeasible geometry."""
    ev = evaluate(x, t_gate, ctx, dt=ctx.dt_search if dt is None else dt)
    if ev.schedule is None:
        return PENALTY
    return float(min(max(1.0 - ev.fidelity, 0.0), 1.0))


class _BudgetSpent(Exception):
    pass


class _Tracker:
    """Counts evaluations, clamps candidates and keeps the best point."""

    def __init__(self, fn, space: SearchSpace, budget: int):
        self.fn, self.space, self.budget = fn, space, budget
        self.count = 0
        self.best_x: np.ndarray | None = None
        self.best_f = math.inf
        self.history: list[float] = []
        self.max_unitarity = 0.0

    def __call__(self, x):
        if self.count >= self.budget:
            raise _BudgetSpent
        x = self.space.clip(x)
        self.count += 1
        f, unit = self.fn(x)
        self.max_unitarity = max(self.max_unitarity, unit)
        if f < self.best_f:
            self.best_f, self.best_x = f, x.copy()
        self.history.append(self.best_f)
        return f


def _simplex(center: np.ndarray, space: SearchSpace, scale: float, rng: np.random.Generator | None):
    width = space.upper - space.lower
    n = center.size
    steps = np.diag(scale * width)
    if rng is not None:
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        steps = np.array([scale * width * q[:, k] for k in range(n)])
    pts = [center]
    for k in range(n):
        p = center + steps[k]
        # reflect into the box so the simplex stays non-degenerate
        p = np.where(p > space.upper, center - steps[k], p)
        p = np.where(p < space.lower, center - steps[k], p)
        pts.append(space.clip(p))
    return np.array(pts)


def minimize_bounded(fn, space: SearchSpace, *, evaluation=None, candidates=None, starts: int = 3):
    """Nelder-Mead with box clamping, multi-start and restarts from the incumbent.

    ``fn(x) -> float`` or ``evaluation(x) -> (float, unitarity_error)``.
    ``candidates`` are screened first (each costs one evaluation); the best
    ``starts`` distinct ones seed the first runs, later runs restart from the
    incumbent with a rotated simplex.  Returns the tracker holding the best
    point, count and history.
    """
    call = evaluation if evaluation is not None else (lambda x: (fn(x), 0.0))
    tracker = _Tracker(call, space, space.budget)
    rng = np.random.default_rng(space.seed)
    runs = space.restarts + 1
    try:
        tracker(space.x0)
        scored = [(tracker.history[0], 0, space.x0)]
        for k, x in enumerate(candidates if candidates is not None else ()):
            scored.append((tracker(x), k + 1, space.clip(x)))
        scored.sort(key=lambda item: (item[0], item[1]))
        seeds = [x for _, _, x in scored[:max(1, min(starts, runs))]]
        share = max(1, (space.budget - tracker.count) // runs)
        for run in range(runs):
            limit = space.budget if run == runs - 1 else min(space.budget, tracker.count + share)
            fresh = run < len(seeds)
            start = seeds[run] if fresh else tracker.best_x
            scale = 0.1 if fresh else 0.1 * 0.5 ** ((run - len(seeds)) % 3)
            sim = _simplex(start, space, scale, None if fresh else rng)
            remaining = limit - tracker.count
            if remaining <= 0:
                continue
            minimize(tracker, start, method="Nelder-Mead", bounds=list(zip(space.lower, space.upper)),
                     options={"initial_simplex": sim, "maxfev": remaining, "xatol": 1e-7,
                              "fatol": 1e-9, "adaptive": True})
    except _BudgetSpent:
        pass
    return tracker


def screening_points(space: SearchSpace) -> list[np.ndarray]:
    """The guess window on a ``screen x screen`` grid, other controls at ``x0``."""
    if space.screen == 0:
        return []
    pts = []
    for g in np.linspace(*GUESS_COUPLING, space.screen):
        for det in np.linspace(*GUESS_DETUNING, space.screen):
            x = space.x0.copy()
            x[0], x[1] = g, det
            pts.append(space.clip(x))
    return pts


def seed_from_sensitivity(params: DeviceParams,
                          detuning_range=GUESS_DETUNING, coupling_range=GUESS_COUPLING) -> np.ndarray:
    """Initial guess inside the recommended detuning and coupling windows.

    The detuning maximizing ``min(S_c, S_l)`` is taken from a sweep at the
    lower coupling bound, then the coupling maximizing the same score at that
    detuning.  The carrier sits on ``omega_on``, the rotation is a pi pulse and
    all correction multipliers are one.
    """
    dets = np.linspace(*detuning_range, 51)
    base = params.with_(g=coupling_range[0])
    rows = sweep_detuning(base, dets)
    score = [min(r.s_c, r.s_l) if r.error is None else -1.0 for r in rows]
    det = float(dets[int(np.argmax(score))])
    gs = np.linspace(*coupling_range, 26)
    rows = sweep_coupling(params, gs, detuning=det)
    score = [min(r.s_c, r.s_l) if r.error is None else -1.0 for r in rows]
    g = float(gs[int(np.argmax(score))])
    return np.array([g, det, 0.0, math.pi, 7.5, 1.0, 1.0, 1.0])


def default_space(device: DeviceParams, budget: int = 2000, restarts: int = 4, seed: int = 0) -> SearchSpace:
    x0 = seed_from_sensitivity(device)
    return SearchSpace(DEFAULT_LOWER.copy(), DEFAULT_UPPER.copy(), x0, budget, restarts, seed)


def optimize_gate(t_gate: float, space: SearchSpace, ctx: GateContext = GateContext()) -> OptimizationRecord:
    """Maximize the trace fidelity at fixed gate time.

    The search propagates at ``ctx.dt_search``; the returned fidelity is a
    verification run at ``ctx.dt_final`` of the best point.
    """
    x0 = space.x0.copy()
    if x0[4] * 2.0 >= t_gate:
        x0[4] = min(max(space.lower[4], 0.2 * t_gate), space.upper[4])
        space = space.with_(x0=x0)

    def call(x):
        ev = evaluate(x, t_gate, ctx, dt=ctx.dt_search)
        if ev.schedule is None:
            return PENALTY, 0.0
        return min(max(1.0 - ev.fidelity, 0.0), 1.0), ev.result.unitarity_error

    tracker = minimize_bounded(None, space, evaluation=call, candidates=screening_points(space))
    best_x = tracker.best_x
    initial_f = tracker.history[0]
    final = evaluate(best_x, t_gate, ctx, dt=ctx.dt_final)
    if final.schedule is None:
        return OptimizationRecord(t_gate, best_x, 0.0, 0.0, 0.0, tracker.count, False, True,
                                  history=tracker.history, error="no feasible point found")
    unit = max(tracker.max_unitarity, final.result.unitarity_error)
    return OptimizationRecord(
        t_gate=t_gate, params=best_x, theta_pre=final.schedule.theta_pre,
        theta_post=final.schedule.theta_post, fidelity=min(max(final.fidelity, 0.0), 1.0),
        evaluations=tracker.count, converged=tracker.count < space.budget,
        budget_exhausted=not tracker.best_f < initial_f, search_fidelity=1.0 - tracker.best_f,
        max_unitarity_error=unit, schedule=final.schedule.with_(dt=ctx.dt_final),
        history=tracker.history,
    )


def _curve_point(args):
    t_gate, space, ctx = args
    try:
        return optimize_gate(t_gate, space, ctx)
    except Exception as exc:  # recorded in-row so one bad point does not sink the curve
        log.exception("optimization failed at %s ns", t_gate)
        return OptimizationRecord(t_gate, space.x0, 0.0, 0.0, math.nan, 0, False, True, error=repr(exc))


def fidelity_curve(t_gate_list: Sequence[float], space: SearchSpace, ctx: GateContext = GateContext(),
                   workers: int = 1) -> list[OptimizationRecord]:
    """One independent :func:`optimize_gate` per gate time."""
    if len(t_gate_list) == 0:
        raise ValueError("gate time list must be non-empty")
    jobs = [(float(t), space, ctx) for t in t_gate_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_curve_point, jobs))
    return [_curve_point(j) for j in jobs]
