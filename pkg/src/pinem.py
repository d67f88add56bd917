"""Stimulated interaction with an undepleted classical field.

The quantized generator is reused with every sqrt(n) replaced by 1, on a ladder
symmetric around the initial electron energy.
"""

import dataclasses
import logging
import math
from typing import Optional

import numpy as np
from scipy import signal
from scipy.special import jv

import ladder
import utils
from datastructures import (
    ElectronSpectrum,
    LadderPhases,
    MatchedTransition,
    PhysicalConfig,
    PinemConfig,
    PinemSetup,
)
from engines.exact_engine import ExactEngine
from engines.ladder_engine import initial_state
from utils import ConfigError

logger = logging.getLogger(__name__)


def default_sideband_cap(sigma: float, g: float) -> int:
    # Without recoil the walk width only scales with g
    sigma_eff = 0.0 if math.isinf(sigma) else sigma
    return max(math.ceil(8 * (sigma_eff + g)), utils.MIN_SIDEBAND_CAP)


def pinem_config(setup: PinemSetup, g: Optional[float] = None) -> PinemConfig:
    """Symmetric reduced ladder for one coupling value."""
    g = setup.classical_coupling_g if g is None else g
    cap = setup.sideband_cap or default_sideband_cap(setup.sigma, g)
    phases = ladder.reduced_phase_law(
        setup.sigma, setup.matched_order, setup.one_photon_mismatch_phase, -cap, cap
    )
    return PinemConfig(g, phases, setup.matched_order)


def physical_pinem_config(config: PhysicalConfig, g: float, sideband_cap: int) -> PinemConfig:
    phases = ladder.physical_phase_ladder(config, -sideband_cap, sideband_cap)
    if phases.truncated:
        raise ConfigError("Sideband cap reaches below the electron rest energy", ["sideband_cap"])
    order = 2 if config.matched_transition is MatchedTransition.TWO_PHOTON_EMISSION else 1
    return PinemConfig(g, phases, order)


def _evolve(config: PinemConfig) -> ElectronSpectrum:
    engine = ExactEngine()
    init = initial_state(config.phases, None)
    state = engine.evolve(config.phases, config.classical_coupling_g, init, unit_ladder=True)
    return ElectronSpectrum(state.levels, state.probabilities)


def pinem_evolve(config: PinemConfig) -> ElectronSpectrum:
    return _evolve(config)


def _odd_level_offset(phases: LadderPhases) -> float:
    """Phase of level -1 above the mean of its even neighbours."""
    if phases.m_min > -2:
        raise ConfigError("Two-photon PINEM needs at least two sidebands per side", ["sideband_cap"])
    return phases.phase(-1) - 0.5 * (phases.phase(-2) + phases.phase(0))


def two_photon_pinem_evolve(config: PinemConfig) -> ElectronSpectrum:
    if config.matched_order != 2:
        raise ConfigError("Two-photon PINEM needs matched_order = 2", ["matched_order"])
    if _odd_level_offset(config.phases) == 0:
        raise ConfigError(
            "Two-photon PINEM needs mismatched odd levels", ["one_photon_mismatch_phase"]
        )
    return _evolve(config)


def pinem_spectrum(setup: PinemSetup, g: Optional[float] = None) -> ElectronSpectrum:
    config = pinem_config(setup, g)
    if setup.matched_order == 2:
        return two_photon_pinem_evolve(config)
    return pinem_evolve(config)


def bessel_spectrum(g: float, levels: np.ndarray) -> np.ndarray:
    """Recoil-free sideband weights J_m(2g)^2."""
    return jv(levels, 2 * g) ** 2


def spectral_width(spectrum: ElectronSpectrum) -> float:
    mean = float(np.sum(spectrum.levels * spectrum.probabilities))
    return math.sqrt(float(np.sum((spectrum.levels - mean) ** 2 * spectrum.probabilities)))


def coupling_grid(start: float, stop: float, count: int) -> np.ndarray:
    if count < 1:
        raise ConfigError("Coupling grid needs at least one point", ["count"])
    if not 0 <= start <= stop:
        raise ConfigError("Coupling grid must be ordered and non-negative", ["start", "stop"])
    return np.linspace(start, stop, count)


def stepped_coupling_grid(start: float, stop: float, step: float = utils.DEFAULT_G_STEP) -> np.ndarray:
    """Uniform grid from start to stop whose spacing is at most step."""
    utils.require_positive(step=step)
    return coupling_grid(start, stop, math.ceil(round((stop - start) / step, 9)) + 1)


def pinem_scan(
    setup: PinemSetup, g_grid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Sideband populations over a coupling grid on one shared ladder.

    Returns the levels and a (len(g_grid), levels) probability matrix.
    """
    g_grid = np.asarray(g_grid, dtype=float)
    if len(g_grid) == 0:
        raise ConfigError("Empty coupling grid", ["g_grid"])
    cap = setup.sideband_cap or default_sideband_cap(setup.sigma, float(g_grid.max()))
    config = pinem_config(dataclasses.replace(setup, sideband_cap=cap))
    rows = []
    for g in g_grid:
        spectrum = _evolve(PinemConfig(float(g), config.phases, config.matched_order))
        rows.append(spectrum.probabilities)
    logger.debug(f"Scanned {len(g_grid)} couplings on {2 * cap + 1} sidebands")
    return config.phases.levels, np.vstack(rows)


def zero_level_trace(
    levels: np.ndarray, rows: np.ndarray, resolution: float = utils.REVIVAL_RESOLUTION
) -> np.ndarray:
    """Population seen near zero energy loss through a Gaussian window, width in photon energies."""
    utils.require_positive(resolution=resolution)
    window = np.exp(-(np.asarray(levels, dtype=float) ** 2) / (2 * resolution**2))
    return np.asarray(rows, dtype=float) @ window


def detect_revivals(
    g_grid: np.ndarray,
    population_trace: np.ndarray,
    prominence: float = utils.DEFAULT_REVIVAL_PROMINENCE,
) -> list[float]:
    """Couplings of the trace maxima standing out by at least prominence.

    Meant for zero_level_trace output; a bare level-0 column also peaks on Bessel lobes.
    """
    utils.require_positive(prominence=prominence)
    g_grid = np.asarray(g_grid, dtype=float)
    population_trace = np.asarray(population_trace, dtype=float)
    if len(g_grid) != len(population_trace):
        raise ConfigError("Trace and coupling grid differ in length", ["population_trace"])
    if len(g_grid) > 2:
        steps = np.diff(g_grid)
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12):
            raise ConfigError("Revival detection needs a uniform coupling grid", ["g_grid"])
    peaks, _ = signal.find_peaks(population_trace, prominence=prominence)
    return [float(g) for g in g_grid[peaks]]


def first_revival_estimate(sigma: float) -> float:
    return 0.84 * sigma + 1.66


def second_revival_estimate(sigma: float) -> float:
    return 3.28 * sigma + 1.95
