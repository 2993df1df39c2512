"""Dressed spectrum, bare-state labelling and the sensitivity landscapes.

Labels are defined by adiabatic continuation from the parking side: the qubit
is taken far above the resonator (above every bare crossing, which all lie in
``omega <= epsilon <= omega + delta``), labelled there by maximum overlap
with the bare product states, and then followed down in ``epsilon`` by
maximum overlap with the previous eigenvectors.  This is the labelling seen by
the gate protocol, which ramps the qubit in from above.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import (
    DIM, LEVELS, TWO_PI, DeviceParams, X3, Y3, basis_index, h0_diagonal,
)

LABELS: tuple[tuple[int, int], ...] = tuple(itertools.product(range(LEVELS), repeat=2))
#: levels reported for figure reproduction
CURVE_LABELS = ((0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0), (2, 1))

#: mesh spacing in GHz used for continuation along epsilon
TRACK_STEP = 0.0025
#: distance above ``omega + delta`` where the continuation is seeded
SEED_MARGIN = 1.0


class AssignmentAmbiguous(ArithmeticError):
    """Dressed states cannot be labelled uniquely (exact degeneracy)."""


@dataclass(frozen=True)
class LabeledSpectrum:
    """Eigenvalues (rad/ns) indexed by bare label, with bare-state overlaps."""

    labels: tuple[tuple[int, int], ...]
    energies: np.ndarray
    overlaps: np.ndarray
    vectors: np.ndarray = field(repr=False)

    def energy(self, q: int, r: int) -> float:
        return float(self.energies[self.labels.index((q, r))])

    def __getitem__(self, label: tuple[int, int]) -> float:
        return self.energy(*label)


@dataclass(frozen=True)
class SensitivityPoint:
    """Sensitivities in linear GHz at one (detuning, coupling) point."""

    detuning: float
    coupling: float
    s_c: float
    s_l: float
    error: str | None = None


def static_hamiltonians(epsilons, omega: float, delta: float, g: float) -> np.ndarray:
    """Real symmetric ``H0 + H_int`` stack for an array of qubit frequencies."""
    eps = np.atleast_1d(np.asarray(epsilons, dtype=float))
    hint = (TWO_PI * g * np.kron(Y3, Y3)).real
    hs = np.broadcast_to(hint, (eps.size, DIM, DIM)).copy()
    idx = np.arange(DIM)
    hs[:, idx, idx] += h0_diagonal(eps, omega, delta)
    return hs


def _assign(overlap: np.ndarray) -> tuple[np.ndarray, bool]:
    """Maximum-total-overlap assignment ``label -> eigenvector column``.

    Returns the column permutation and whether a competing assignment (any
    transposition of the optimum) ties within 1e-9 while the optimum has an
    overlap of at most 0.5.
    """
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    perm = cols[np.argsort(rows)]
    chosen = overlap[np.arange(DIM), perm]
    ambiguous = False
    if chosen.min() <= 0.5 + 1e-9:
        total = chosen.sum()
        for a, b in itertools.combinations(range(DIM), 2):
            alt = total - chosen[a] - chosen[b] + overlap[a, perm[b]] + overlap[b, perm[a]]
            if total - alt < 1e-9 and min(chosen[a], chosen[b]) <= 0.5 + 1e-9:
                ambiguous = True
                break
    return perm, ambiguous


def _continue(energies: np.ndarray, vectors: np.ndarray, seed: np.ndarray | None = None):
    """Follow eigenvectors along a path; returns label-ordered stacks.

    ``seed`` is the label-ordered basis at the first path point; the bare basis
    when omitted.  Raises :class:`AssignmentAmbiguous` on a tie.
    """
    n = energies.shape[0]
    out_e = np.empty_like(energies)
    out_v = np.empty_like(vectors)
    ref = np.eye(DIM) if seed is None else seed
    for k in range(n):
        ov = np.abs(ref.conj().T @ vectors[k]) ** 2
        perm = np.argmax(ov, axis=1)
        if len(set(perm.tolist())) != DIM or ov[np.arange(DIM), perm].min() < 0.5:
            perm, ambiguous = _assign(ov)
            if ambiguous:
                raise AssignmentAmbiguous(f"degenerate dressed states at path point {k}")
        out_e[k] = energies[k, perm]
        out_v[k] = vectors[k][:, perm]
        ref = out_v[k]
    return out_e, out_v


def _seed_epsilon(params: DeviceParams) -> float:
    return params.omega + params.delta + max(SEED_MARGIN, 20.0 * params.g)


def _mesh(targets: np.ndarray, top: float) -> np.ndarray:
    """Descending path from ``top`` through every target on a fixed mesh."""
    low = float(targets.min())
    n = int(math.ceil((top - low) / TRACK_STEP))
    mesh = top - TRACK_STEP * np.arange(n + 1)
    path = np.union1d(mesh, targets)
    return path[::-1]


def _tracked(params: DeviceParams, epsilons: np.ndarray):
    top = _seed_epsilon(params)
    if epsilons.max() > top:
        top = float(epsilons.max())
    path = _mesh(epsilons, top)
    hs = static_hamiltonians(path, params.omega, params.delta, params.g)
    w, v = np.linalg.eigh(hs)
    e, vecs = _continue(w, v.astype(complex))
    where = np.searchsorted(-path, -epsilons)
    return e[where], vecs[where]


def _build(energies: np.ndarray, vectors: np.ndarray) -> LabeledSpectrum:
    overlaps = np.abs(vectors[np.arange(DIM), np.arange(DIM)]) ** 2
    return LabeledSpectrum(LABELS, energies.copy(), overlaps, vectors.copy())


def bare_assignment(params: DeviceParams) -> LabeledSpectrum:
    """Label by maximum total overlap with bare states at this point only."""
    h = static_hamiltonians(params.epsilon, params.omega, params.delta, params.g)[0]
    w, v = np.linalg.eigh(h)
    perm, ambiguous = _assign(np.abs(v) ** 2)
    if ambiguous:
        raise AssignmentAmbiguous(f"labels undetermined at epsilon={params.epsilon} GHz")
    return _build(w[perm], v[:, perm].astype(complex))


def labeled_spectrum(params: DeviceParams) -> LabeledSpectrum:
    """Diagonalize ``H0 + H_int`` and attach parking-side adiabatic labels."""
    e, v = _tracked(params, np.array([params.epsilon]))
    return _build(e[0], v[0])


def transition_frequencies(spec: LabeledSpectrum) -> tuple[float, float]:
    """``(omega_on, omega_off)`` in rad/ns."""
    omega_on = spec[1, 1] - spec[0, 1]
    omega_off = spec[1, 0] - spec[0, 0]
    return omega_on, omega_off


def _sens_from(spec_energy, detuning: float, coupling: float) -> SensitivityPoint:
    e = spec_energy
    s_c = abs((e(1, 1) - e(0, 1)) - (e(1, 0) - e(0, 0)))
    s_l = abs((e(2, 1) - e(1, 1)) - (e(1, 1) - e(0, 1)))
    return SensitivityPoint(float(detuning), float(coupling), float(s_c / TWO_PI), float(s_l / TWO_PI))


def sensitivities(params: DeviceParams) -> SensitivityPoint:
    """Conditional-control and leakage sensitivities (GHz) at one point."""
    spec = labeled_spectrum(params)
    return _sens_from(spec.energy, params.detuning, params.g)


def _energy_table(row: np.ndarray):
    return lambda q, r: row[basis_index(q, r)]


def sweep_detuning(base: DeviceParams, detuning_grid: Sequence[float]) -> list[SensitivityPoint]:
    """Sensitivities along ``epsilon = omega + detuning`` (GHz grid)."""
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ValueError("detuning grid must be non-empty and finite")
    try:
        energies, _ = _tracked(base, base.omega + grid)
    except AssignmentAmbiguous as exc:
        return [SensitivityPoint(float(d), base.g, math.nan, math.nan, str(exc)) for d in grid]
    return [_sens_from(_energy_table(row), float(d), base.g) for d, row in zip(grid, energies)]


def sweep_coupling(base: DeviceParams, coupling_grid: Sequence[float],
                   detuning: float = 0.215) -> list[SensitivityPoint]:
    """Sensitivities versus coupling at fixed detuning (GHz)."""
    grid = np.asarray(coupling_grid, dtype=float)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ValueError("coupling grid must be non-empty and finite")
    out = []
    for g in grid:
        p = base.with_(g=float(g), epsilon=base.omega + detuning)
        try:
            out.append(replace(sensitivities(p), detuning=float(detuning)))
        except (AssignmentAmbiguous, ValueError) as exc:
            out.append(SensitivityPoint(detuning, float(g), math.nan, math.nan, str(exc)))
    return out


def spectrum_curve(base: DeviceParams, epsilon_grid: Sequence[float],
                   labels=CURVE_LABELS) -> np.ndarray:
    """Labelled dressed energies in linear GHz, one row per grid point.

    Columns follow ``labels``; raises :class:`AssignmentAmbiguous` when a point
    cannot be labelled.
    """
    grid = np.asarray(epsilon_grid, dtype=float)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ValueError("epsilon grid must be non-empty and finite")
    energies, _ = _tracked(base, grid)
    cols = [basis_index(q, r) for q, r in labels]
    return energies[:, cols] / TWO_PI


def one_excitation_gap(g: float) -> float:
    """Splitting (rad/ns) of the ``|01>, |10>`` pair at resonance, 2x2 block only."""
    return 2.0 * TWO_PI * g


__all__ = [
    "AssignmentAmbiguous", "LabeledSpectrum", "SensitivityPoint", "labeled_spectrum",
    "bare_assignment", "transition_frequencies", "sensitivities", "sweep_detuning",
    "sweep_coupling", "spectrum_curve", "static_hamiltonians",
]
