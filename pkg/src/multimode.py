"""Two cavity modes on a square occupation lattice (n1, n2), each 0..n_max."""

import logging
from typing import Optional

import numpy as np

import utils
from datastructures import LatticePhases, TwinStatistics, TwoModeWaveFunction
from engines.ladder_engine import expm_structured
from observables import statistics_from_distribution
from utils import BasisMismatchError, ResonantReductionError, TruncationOverflowError

logger = logging.getLogger(__name__)


def initial_lattice_state(n_max: int, initial_fock: tuple[int, int] = (0, 0)) -> TwoModeWaveFunction:
    amplitudes = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    amplitudes[initial_fock] = 1.0
    return TwoModeWaveFunction(amplitudes, tuple(initial_fock))


def lattice_generator(phases: LatticePhases, couplings: tuple[float, float]) -> np.ndarray:
    """Dense autonomized generator over the flattened lattice, index n1 * (n_max + 1) + n2.

    Emission into mode j from a node holding n photons there couples with
    g_j sqrt(n + 1): +g on the row of the node with fewer photons, -g on the other.
    """
    side = phases.n_max + 1
    index = np.arange(side * side).reshape(side, side)
    generator = np.diag(1j * phases.phiL.ravel()).astype(complex)
    n = np.arange(side - 1)
    for mode, g in enumerate(couplings):
        if g == 0:
            continue
        if mode == 0:
            fewer, more = index[:-1, :], index[1:, :]
            amplitude = g * np.sqrt(n + 1)[:, None] * np.ones((1, side))
        else:
            fewer, more = index[:, :-1], index[:, 1:]
            amplitude = g * np.ones((side, 1)) * np.sqrt(n + 1)[None, :]
        generator[fewer.ravel(), more.ravel()] = amplitude.ravel()
        generator[more.ravel(), fewer.ravel()] = -amplitude.ravel()
    return generator


def shell_population(probabilities: np.ndarray) -> float:
    """Population on the outer shell where either mode sits at n_max."""
    return float(probabilities[-1, :].sum() + probabilities[:-1, -1].sum())


def evolve_two_mode(
    phases: LatticePhases,
    couplings: tuple[float, float],
    init: TwoModeWaveFunction,
    *,
    check_truncation: bool = True,
) -> TwoModeWaveFunction:
    """C(1) = exp(-i phiL) * exp(S) C(0) on the lattice."""
    if init.amplitudes.shape != phases.shape:
        raise BasisMismatchError(
            f"Initial lattice {init.amplitudes.shape} differs from the phase lattice {phases.shape}"
        )
    start = init.amplitudes.ravel().astype(complex)
    if not any(couplings):
        final = start
    else:
        propagator = expm_structured(lattice_generator(phases, couplings))
        final = np.exp(-1j * phases.phiL.ravel()) * propagator.apply(start)
    amplitudes = final.reshape(phases.shape)
    probabilities = np.abs(amplitudes) ** 2
    norm_drift = abs(float(probabilities.sum()) - float(np.sum(np.abs(start) ** 2)))
    logger.debug(f"Lattice of {phases.shape} evolved, norm drift {norm_drift:.3e}")

    shell = shell_population(probabilities)
    if check_truncation and shell > utils.OVERFLOW_THRESHOLD:
        raise TruncationOverflowError(shell, utils.OVERFLOW_THRESHOLD, "increase truncation_n_max")
    return TwoModeWaveFunction(amplitudes, init.initial_fock, norm_drift)


def marginal_distributions(state: TwoModeWaveFunction) -> tuple[np.ndarray, np.ndarray]:
    probabilities = state.probabilities
    return probabilities.sum(axis=1), probabilities.sum(axis=0)


def diagonal_tail_ratio(diagonal: np.ndarray, floor: float = 1e-12) -> Optional[float]:
    """Geometric ratio of P(n, n) from a log-linear fit over the populated diagonal."""
    populated = np.nonzero(diagonal > floor)[0]
    if len(populated) < 2:
        return None
    slope, _ = np.polyfit(populated, np.log(diagonal[populated]), 1)
    return float(np.exp(slope))


def twin_statistics(state: TwoModeWaveFunction) -> TwinStatistics:
    first, second = marginal_distributions(state)
    diagonal = np.diagonal(state.probabilities).copy()
    return TwinStatistics(
        marginals=(statistics_from_distribution(first), statistics_from_distribution(second)),
        diagonal=diagonal,
        diagonal_weight=float(diagonal.sum()),
        tail_ratio=diagonal_tail_ratio(diagonal),
    )


def two_mode_pair_coupling(
    couplings: tuple[float, float], one_photon_mismatch_phases: tuple[float, float]
) -> float:
    """Effective coupling of the matched pair transition, summed over both emission orders."""
    g1, g2 = couplings
    phi1, phi2 = one_photon_mismatch_phases
    if phi1 == 0 or phi2 == 0:
        raise ResonantReductionError(
            "Pair reduction needs both one-photon transitions mismatched"
        )
    return g1 * g2 * (1 / (-phi1) + 1 / (-phi2))
