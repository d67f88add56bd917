"""Photon statistics, electron spectra and reference-state fidelities."""

import logging
import math
from typing import Optional, Union

import numpy as np
from scipy import optimize, signal
from scipy.special import gammaln

import utils
from datastructures import (
    ElectronSpectrum,
    PhotonStatistics,
    ReferenceKind,
    ReferenceState,
    TwoModeWaveFunction,
    WaveFunction,
)
from utils import BasisMismatchError, DomainError, ResonantReductionError

logger = logging.getLogger(__name__)

AnyState = Union[WaveFunction, TwoModeWaveFunction]

LADDER_KINDS = (
    ReferenceKind.BELL,
    ReferenceKind.NOON2,
    ReferenceKind.SQUEEZED_VACUUM,
    ReferenceKind.WEAK_COHERENT,
)
LATTICE_KINDS = (ReferenceKind.GHZ, ReferenceKind.TWIN_BEAM)


def statistics_from_distribution(probabilities: np.ndarray) -> PhotonStatistics:
    probabilities = np.asarray(probabilities, dtype=float)
    n = np.arange(len(probabilities))
    mean = float(np.sum(n * probabilities))
    if mean < utils.G2_UNDEFINED_BELOW:
        logger.warning(f"g2 undefined for mean photon number {mean:.3e}")
        return PhotonStatistics(probabilities, mean, None)
    g2 = float(np.sum(n * (n - 1) * probabilities)) / mean**2
    return PhotonStatistics(probabilities, mean, g2)


def photon_statistics(state: WaveFunction, initial_fock: Optional[int] = None) -> PhotonStatistics:
    """P(n) with n = initial_fock - m read off the entangled ladder."""
    if initial_fock is None:
        initial_fock = state.initial_fock
    if initial_fock is None:
        raise BasisMismatchError("The classical ladder carries no photon numbers")
    photons = initial_fock - state.levels
    if np.any(photons < 0):
        raise BasisMismatchError(
            f"Ladder top {state.m_max} exceeds the initial cavity occupation {initial_fock}"
        )
    distribution = np.zeros(int(photons.max()) + 1)
    distribution[photons] = state.probabilities
    return statistics_from_distribution(distribution)


def squeezed_vacuum_g2_reference(mean: float) -> float:
    if not mean > 0:
        raise DomainError(f"Squeezed vacuum reference needs a positive mean, got {mean}")
    return 3 + 1 / mean


def poisson_distribution(mean: float, size: int) -> np.ndarray:
    n = np.arange(size)
    if mean == 0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(mean) - mean - gammaln(n + 1))


def _ladder_vector(m_min: int, m_max: int, entries: dict[int, complex]) -> np.ndarray:
    amplitudes = np.zeros(m_max - m_min + 1, dtype=complex)
    for m, value in entries.items():
        if not m_min <= m <= m_max:
            raise BasisMismatchError(f"Reference level {m} outside [{m_min}, {m_max}]")
        amplitudes[m - m_min] = value
    return amplitudes


def _normalized(amplitudes: np.ndarray) -> np.ndarray:
    return amplitudes / np.linalg.norm(amplitudes)


def bell_state(m_min: int, m_max: int, phase: float = 0.0) -> ReferenceState:
    """(|0> + e^{i phase} |-1>) / sqrt(2); the emitting level plays the logical |1>."""
    entries = {0: 1 / math.sqrt(2), -1: np.exp(1j * phase) / math.sqrt(2)}
    return ReferenceState(ReferenceKind.BELL, _ladder_vector(m_min, m_max, entries), m_min, phase=phase)


def noon2_state(m_min: int, m_max: int, phase: float = 0.0) -> ReferenceState:
    entries = {0: 1 / math.sqrt(2), -2: np.exp(1j * phase) / math.sqrt(2)}
    return ReferenceState(ReferenceKind.NOON2, _ladder_vector(m_min, m_max, entries), m_min, phase=phase)


def ghz_state(n_max: int, phase: float = 0.0) -> ReferenceState:
    amplitudes = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    amplitudes[0, 0] = 1 / math.sqrt(2)
    amplitudes[1, 1] = np.exp(1j * phase) / math.sqrt(2)
    return ReferenceState(ReferenceKind.GHZ, amplitudes, None, phase=phase)


def _squeezing_ratio(r: float, phase: float) -> complex:
    return -np.exp(1j * phase) * math.tanh(r)


def squeezed_vacuum_state(m_min: int, m_max: int, r: float, phase: float = 0.0) -> ReferenceState:
    """Squeezed vacuum on the pair levels m = -2n, renormalized to the ladder."""
    if r < 0:
        raise DomainError(f"Squeezing parameter must be non-negative, got {r}")
    pairs = np.arange(0, (m_max - m_min) // 2 + 1)
    pairs = pairs[-2 * pairs >= m_min]
    # sqrt((2n)!) / (2^n n!) through log-gamma
    log_weight = 0.5 * gammaln(2 * pairs + 1) - pairs * math.log(2) - gammaln(pairs + 1)
    values = np.exp(log_weight) * _squeezing_ratio(r, phase) ** pairs / math.sqrt(math.cosh(r))
    entries = {int(-2 * n): v for n, v in zip(pairs, values)}
    amplitudes = _normalized(_ladder_vector(m_min, m_max, entries))
    return ReferenceState(ReferenceKind.SQUEEZED_VACUUM, amplitudes, m_min, r=r, phase=phase)


def twin_beam_state(n_max: int, r: float, phase: float = 0.0) -> ReferenceState:
    """Two-mode squeezed vacuum on the diagonal |n, n>, renormalized to the lattice."""
    if r < 0:
        raise DomainError(f"Squeezing parameter must be non-negative, got {r}")
    n = np.arange(n_max + 1)
    amplitudes = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    amplitudes[n, n] = _squeezing_ratio(r, phase) ** n / math.cosh(r)
    return ReferenceState(ReferenceKind.TWIN_BEAM, _normalized(amplitudes), None, r=r, phase=phase)


def weak_coherent_state(m_min: int, m_max: int, alpha: complex) -> ReferenceState:
    """Coherent photon state e^{-|a|^2/2} a^n / sqrt(n!) on the emission levels m = -n."""
    n = np.arange(0, -m_min + 1)
    magnitude = abs(alpha)
    if magnitude == 0:
        values = (n == 0).astype(complex)
    else:
        log_magnitude = n * math.log(magnitude) - magnitude**2 / 2 - 0.5 * gammaln(n + 1)
        values = np.exp(log_magnitude) * np.exp(1j * np.angle(alpha) * n)
    entries = {int(-k): v for k, v in zip(n, values)}
    amplitudes = _normalized(_ladder_vector(m_min, m_max, entries))
    return ReferenceState(
        ReferenceKind.WEAK_COHERENT, amplitudes, m_min, phase=float(np.angle(alpha)), alpha=complex(alpha)
    )


def fidelity(state: AnyState, reference: ReferenceState) -> float:
    """|<reference|state>|^2 on a shared basis."""
    if isinstance(state, WaveFunction):
        if reference.m_min is None:
            raise BasisMismatchError(f"{reference.kind.value} reference lives on the two-mode lattice")
        if reference.m_min != state.m_min or len(reference.amplitudes) != len(state.amplitudes):
            raise BasisMismatchError(
                f"Reference spans [{reference.m_min}, {reference.m_min + len(reference.amplitudes) - 1}] "
                f"but the state spans [{state.m_min}, {state.m_max}]"
            )
    elif reference.amplitudes.shape != state.amplitudes.shape:
        raise BasisMismatchError(
            f"Reference lattice {reference.amplitudes.shape} differs from {state.amplitudes.shape}"
        )
    overlap = np.vdot(reference.amplitudes, state.amplitudes)
    return float(min(1.0, abs(overlap) ** 2))


def _mean_photons(state: AnyState) -> float:
    if isinstance(state, WaveFunction):
        return photon_statistics(state).mean_photons
    n = np.arange(state.n_max + 1)
    # Per mode
    return float(np.sum(state.probabilities.sum(axis=1) * n))


def _reference_builder(kind: ReferenceKind, state: AnyState, mean: Optional[float]):
    if kind in LATTICE_KINDS and not isinstance(state, TwoModeWaveFunction):
        raise BasisMismatchError(f"{kind.value} reference needs a two-mode state")
    if kind in LADDER_KINDS and not isinstance(state, WaveFunction):
        raise BasisMismatchError(f"{kind.value} reference needs a single-mode state")

    if mean is None and kind in (
        ReferenceKind.SQUEEZED_VACUUM,
        ReferenceKind.TWIN_BEAM,
        ReferenceKind.WEAK_COHERENT,
    ):
        mean = _mean_photons(state)
    match kind:
        case ReferenceKind.BELL:
            return lambda phase: bell_state(state.m_min, state.m_max, phase)
        case ReferenceKind.NOON2:
            return lambda phase: noon2_state(state.m_min, state.m_max, phase)
        case ReferenceKind.GHZ:
            return lambda phase: ghz_state(state.n_max, phase)
        case ReferenceKind.SQUEEZED_VACUUM:
            r = math.asinh(math.sqrt(mean))
            return lambda phase: squeezed_vacuum_state(state.m_min, state.m_max, r, phase)
        case ReferenceKind.TWIN_BEAM:
            r = math.asinh(math.sqrt(mean))
            return lambda phase: twin_beam_state(state.n_max, r, phase)
        case ReferenceKind.WEAK_COHERENT:
            magnitude = math.sqrt(mean)
            return lambda phase: weak_coherent_state(
                state.m_min, state.m_max, magnitude * np.exp(1j * phase)
            )


def best_fidelity(
    state: AnyState, kind: ReferenceKind | str, mean: Optional[float] = None
) -> tuple[float, ReferenceState]:
    """Fidelity maximized over the free phase of the reference family.

    Squeezed and coherent references take their amplitude from the state's own
    mean photon number unless mean is given.
    """
    kind = ReferenceKind(kind)
    build = _reference_builder(kind, state, mean)

    def infidelity(phase: float) -> float:
        return 1.0 - fidelity(state, build(phase))

    grid = np.linspace(0, 2 * np.pi, utils.PHASE_GRID_POINTS, endpoint=False)
    losses = [infidelity(p) for p in grid]
    best = int(np.argmin(losses))
    step = grid[1] - grid[0]
    result = optimize.minimize_scalar(
        infidelity,
        bounds=(grid[best] - step, grid[best] + step),
        method="bounded",
        options={"xatol": utils.PHASE_XATOL},
    )
    phase = float(result.x) if result.fun < losses[best] else float(grid[best])
    phase = phase % (2 * np.pi)
    reference = build(phase)
    return fidelity(state, reference), reference


def sv_reference_from_mean(mean: float, state: Optional[WaveFunction] = None, m_min: Optional[int] = None) -> ReferenceState:
    """Squeezed vacuum with sinh^2 r = mean; the phase is fitted when a state is given."""
    if not mean >= 0:
        raise DomainError(f"Mean photon number must be non-negative, got {mean}")
    if state is not None:
        return best_fidelity(state, ReferenceKind.SQUEEZED_VACUUM, mean=mean)[1]
    if m_min is None:
        raise BasisMismatchError("Either a state or a ladder depth is needed")
    return squeezed_vacuum_state(m_min, 0, math.asinh(math.sqrt(mean)))


def two_photon_g_eff(g_qu: float, one_photon_mismatch_phase: float) -> float:
    if one_photon_mismatch_phase == 0:
        raise ResonantReductionError(
            "Two-photon reduction needs a mismatched one-photon transition"
        )
    return g_qu**2 / (-one_photon_mismatch_phase)


def coupling_for_g_eff(g_eff: float, one_photon_mismatch_phase: float) -> float:
    """Inverse of two_photon_g_eff, returning a non-negative g_qu."""
    if one_photon_mismatch_phase == 0:
        raise ResonantReductionError(
            "Two-photon reduction needs a mismatched one-photon transition"
        )
    return math.sqrt(abs(g_eff * one_photon_mismatch_phase))


def three_level_contrast() -> float:
    """Peak pair-level population of the single-mode three-level ladder.

    The pair couples with sqrt(2) g_eff while the light shifts leave a detuning
    g_eff, so the peak is 4 * 2 / (4 * 2 + 1).
    """
    return 8 / 9


def three_level_rabi_angle(g_eff: float) -> float:
    """Generalized Rabi angle; the pair population is 8/9 sin^2 of it."""
    return 1.5 * abs(g_eff)


def electron_spectrum(
    state: AnyState,
    broadening_sigma: float = 0.0,
    step: float = utils.DEFAULT_BROADENING_STEP,
) -> ElectronSpectrum:
    levels, probabilities = state.electron_levels()
    if broadening_sigma < 0:
        raise DomainError(f"Broadening must be non-negative, got {broadening_sigma}")
    if broadening_sigma == 0:
        return ElectronSpectrum(levels, probabilities)

    margin = 4 * broadening_sigma
    grid = np.arange(levels[0] - margin, levels[-1] + margin + step / 2, step)
    kernel = np.exp(-((grid[:, None] - levels[None, :]) ** 2) / (2 * broadening_sigma**2))
    density = kernel @ probabilities / (math.sqrt(2 * math.pi) * broadening_sigma)
    return ElectronSpectrum(levels, probabilities, grid, density)


def cutoff_position(
    stats: PhotonStatistics, drop_factor: float = utils.DEFAULT_CUTOFF_DROP
) -> Optional[int]:
    """Smallest n after which every P(k > n) stays below P(n) / drop_factor."""
    if not drop_factor > 1:
        raise DomainError(f"Drop factor must exceed 1, got {drop_factor}")
    p = stats.probabilities
    # Running maximum of the tail beyond each n; nothing lives past the ladder top
    tail_max = np.append(np.maximum.accumulate(p[::-1])[::-1], 0.0)
    for n in range(len(p)):
        if p[n] > utils.OVERFLOW_THRESHOLD and tail_max[n + 1] < p[n] / drop_factor:
            return n
    return None


def superbunching_peaks(
    g_grid: np.ndarray,
    g2_trace: np.ndarray,
    p0_trace: np.ndarray,
    prominence: float = utils.DEFAULT_REVIVAL_PROMINENCE,
    tolerance: Optional[float] = None,
) -> list[tuple[float, bool]]:
    """Maxima of g2 along a coupling scan, each flagged when it sits on a zero-level revival."""
    g_grid = np.asarray(g_grid, dtype=float)
    g2_trace = np.nan_to_num(np.asarray(g2_trace, dtype=float), nan=0.0)
    if tolerance is None:
        tolerance = 2 * float(np.mean(np.diff(g_grid)))

    g2_peaks, _ = signal.find_peaks(g2_trace, prominence=prominence * max(1.0, float(np.max(g2_trace))))
    revivals, _ = signal.find_peaks(np.asarray(p0_trace, dtype=float), prominence=prominence)
    revival_positions = g_grid[revivals]
    peaks = []
    for i in g2_peaks:
        g = float(g_grid[i])
        on_revival = bool(len(revival_positions)) and bool(
            np.min(np.abs(revival_positions - g)) <= tolerance
        )
        peaks.append((g, on_revival))
    return peaks
