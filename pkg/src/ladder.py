"""Level structure of the electron-photon ladder.

Energies are in keV (electron) and eV (photon), lengths in μm and wavenumbers
in rad/μm. Phases are stored multiplied by the interaction length, so every
downstream quantity depends only on the dimensionless products.
"""

import logging
import math

import numpy as np
from scipy import optimize

import utils
from datastructures import (
    LadderPhases,
    LatticePhases,
    MatchedTransition,
    PhysicalConfig,
    ReducedConfig,
    SigmaEstimate,
    TwoModeReducedConfig,
)
from utils import ConfigError, DomainError, InfeasiblePhaseMatchingError

logger = logging.getLogger(__name__)


def electron_wavenumber(total_energy: float) -> float:
    """Relativistic k(E) = sqrt(E² - E0²) / ħc in rad/μm for a total energy in keV."""
    if not total_energy >= utils.ELECTRON_REST_ENERGY:
        raise DomainError(
            f"Total energy {total_energy} keV is below the electron rest energy "
            f"{utils.ELECTRON_REST_ENERGY} keV"
        )
    kinetic = total_energy - utils.ELECTRON_REST_ENERGY
    return math.sqrt(kinetic * (total_energy + utils.ELECTRON_REST_ENERGY)) / utils.HBAR_C


def kinetic_energy_from_wavenumber(k: float) -> float:
    if not k >= 0:
        raise DomainError(f"Wavenumber must be non-negative, got {k}")
    pc = utils.HBAR_C * k
    e0 = utils.ELECTRON_REST_ENERGY
    # E - E0 = (pc)² / (E + E0) keeps precision at low kinetic energy
    return pc * pc / (math.sqrt(pc * pc + e0 * e0) + e0)


def wavenumber_difference(e_high, e_low):
    """k(e_high) - k(e_low) without cancelling the two ~1e5 rad/μm wavenumbers."""
    e0 = utils.ELECTRON_REST_ENERGY
    e_high = np.asarray(e_high, dtype=float)
    e_low = np.asarray(e_low, dtype=float)
    # Clamped so a level sitting on the rest energy does not round below it
    p_high = np.sqrt(np.maximum((e_high - e0) * (e_high + e0), 0.0))
    p_low = np.sqrt(np.maximum((e_low - e0) * (e_low + e0), 0.0))
    denominator = p_high + p_low
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = (e_high - e_low) * (e_high + e_low) / (utils.HBAR_C * denominator)
    return np.where(denominator > 0, diff, 0.0)


def wavelength_to_photon_energy(wavelength_nm: float) -> float:
    utils.require_positive(wavelength_nm=wavelength_nm)
    return utils.PHOTON_ENERGY_WAVELENGTH_PRODUCT / wavelength_nm


def sigma_full(kinetic: float, photon: float, length: float) -> float:
    utils.require_positive(kinetic=kinetic, photon=photon, length=length)
    e0 = utils.ELECTRON_REST_ENERGY
    momentum_sq = kinetic * (kinetic + 2 * e0)
    return utils.SIGMA_FULL_PREFACTOR * momentum_sq**1.5 / (photon**2 * length)


def sigma_simple(kinetic: float, photon: float, length: float) -> SigmaEstimate:
    utils.require_positive(kinetic=kinetic, photon=photon, length=length)
    value = utils.SIGMA_SIMPLE_PREFACTOR * kinetic**1.5 / (photon**2 * length)
    valid = kinetic < utils.SIGMA_SIMPLE_MAX_KINETIC
    if not valid:
        logger.warning(
            f"Simplified recoil parameter used at {kinetic} keV, outside its "
            f"validity range (< {utils.SIGMA_SIMPLE_MAX_KINETIC} keV)"
        )
    return SigmaEstimate(value, valid)


def n_eff(sigma: float) -> float:
    utils.require_positive(sigma=sigma)
    return sigma + 1 if sigma >= 1 else 2.0


def sigma_first_zero(kinetic: float, photon: float, length: float) -> float:
    """Continuous emitted-photon count x at which the next transition's
    mismatch reaches Δk L / 2 = π, first emission matched."""
    utils.require_positive(kinetic=kinetic, photon=photon, length=length)
    e_total = utils.ELECTRON_REST_ENERGY + kinetic
    omega = photon * 1e-3
    kappa = float(wavenumber_difference(e_total, e_total - omega))

    def half_phase_minus_pi(x: float) -> float:
        e_high = e_total - x * omega
        step = float(wavenumber_difference(e_high, e_high - omega))
        return (step - kappa) * length / 2 - math.pi

    upper = 1.0
    max_photons = kinetic / omega - 1
    while half_phase_minus_pi(upper) < 0:
        upper *= 2
        if upper > max_photons:
            raise DomainError("Recoil never closes the phase-matching window")
    return optimize.brentq(half_phase_minus_pi, 0.0, upper, xtol=1e-12, rtol=1e-14)


def _mode_energies_kev(config: PhysicalConfig) -> np.ndarray:
    return np.asarray(config.photon_energy_per_mode, dtype=float) * 1e-3


def solve_photon_momenta(config: PhysicalConfig) -> tuple[float, ...]:
    """Photon momentum per mode closing the selected transition's mismatch."""
    if config.matched_transition is MatchedTransition.CUSTOM:
        raise ConfigError(
            "Custom transitions carry their photon momentum explicitly",
            ["matched_transition"],
        )
    e_total = utils.ELECTRON_REST_ENERGY + config.electron_kinetic_energy
    omegas = _mode_energies_kev(config)
    gratings = np.asarray(config.grating_wavenumber, dtype=float)

    if config.mode_count == 1:
        omega = omegas[0]
        if config.matched_transition is MatchedTransition.ONE_PHOTON_EMISSION:
            momenta = [float(wavenumber_difference(e_total, e_total - omega)) - gratings[0]]
        else:
            pair = float(wavenumber_difference(e_total, e_total - 2 * omega))
            momenta = [pair / 2 - gratings[0]]
    elif config.matched_transition is MatchedTransition.TWO_PHOTON_EMISSION:
        # One photon into each mode; split the pair momentum by photon energy
        pair = float(wavenumber_difference(e_total, e_total - omegas.sum()))
        momenta = list(pair * omegas / omegas.sum() - gratings)
    else:
        momenta = [
            float(wavenumber_difference(e_total, e_total - omega)) - grating
            for omega, grating in zip(omegas, gratings)
        ]

    if any(not kappa > 0 for kappa in momenta):
        raise InfeasiblePhaseMatchingError(
            f"Phase matching needs photon momenta {momenta} rad/μm, which are not "
            f"positive; reduce the grating wavenumber {tuple(gratings)}"
        )
    logger.debug(f"Photon momenta {momenta} rad/μm")
    return tuple(momenta)


def solve_photon_momentum(config: PhysicalConfig) -> float:
    return solve_photon_momenta(config)[0]


def _photon_momenta(config: PhysicalConfig) -> tuple[float, ...]:
    if config.matched_transition is MatchedTransition.CUSTOM:
        assert config.photon_momentum is not None
        return config.photon_momentum
    return solve_photon_momenta(config)


def phases_from_mismatches(delta_kL: np.ndarray, m_min: int) -> np.ndarray:
    """Cumulative level phases with φ0 = 0 and φ_{m+1} - φ_m = Δ_m."""
    delta_kL = np.asarray(delta_kL, dtype=float)
    anchor = -m_min
    phiL = np.zeros(len(delta_kL) + 1)
    phiL[anchor + 1 :] = np.cumsum(delta_kL[anchor:])
    phiL[:anchor] = -np.cumsum(delta_kL[:anchor][::-1])[::-1]
    return phiL


def ladder_from_phases(phiL: np.ndarray, m_min: int, truncated: bool = False) -> LadderPhases:
    phiL = np.asarray(phiL, dtype=float)
    return LadderPhases(
        m_min=m_min,
        m_max=m_min + len(phiL) - 1,
        delta_kL=np.diff(phiL),
        phiL=phiL,
        truncated=truncated,
    )


def physical_phase_ladder(config: PhysicalConfig, m_min: int, m_max: int) -> LadderPhases:
    """Exact-dispersion phases of mode 0 over [m_min, m_max], clipped at the rest energy."""
    omega = _mode_energies_kev(config)[0]
    kappa = _photon_momenta(config)[0]
    grating = config.grating_wavenumber[0]

    truncated = False
    deepest = -math.floor(config.electron_kinetic_energy / omega)
    if m_min < deepest:
        logger.warning(
            f"Ladder clipped at level {deepest}: deeper levels would fall below "
            f"the electron rest energy"
        )
        m_min = deepest
        truncated = True

    e_total = utils.ELECTRON_REST_ENERGY + config.electron_kinetic_energy
    energies = e_total + omega * np.arange(m_min, m_max + 1)
    delta_k = wavenumber_difference(energies[1:], energies[:-1]) - kappa - grating
    delta_kL = delta_k * config.interaction_length
    return LadderPhases(
        m_min=m_min,
        m_max=m_max,
        delta_kL=delta_kL,
        phiL=phases_from_mismatches(delta_kL, m_min),
        truncated=truncated,
    )


def mismatch_phases_physical(config: PhysicalConfig) -> LadderPhases:
    if config.mode_count != 1:
        raise ConfigError(
            "Two-mode configurations live on the occupation lattice", ["photon_energy_per_mode"]
        )
    n0 = config.initial_cavity_fock[0]
    return physical_phase_ladder(config, -config.truncation_n_max, n0)


def _two_photon_law(m: np.ndarray, curvature: float, offset: float) -> np.ndarray:
    m = np.asarray(m)

    def even(k):
        return -curvature * (k * k + 2 * k)

    odd_value = 0.5 * (even(m - 1) + even(m + 1)) + offset
    return np.where(m % 2 == 0, even(m), odd_value)


def reduced_phase_law(
    sigma: float,
    matched_order: int,
    one_photon_mismatch_phase: float,
    m_min: int,
    m_max: int,
) -> LadderPhases:
    """Quadratic-recoil phases over [m_min, m_max].

    Order 1: φ_m L = -π m (m + 1) / σ, so φ_{-m} L = -π m (m - 1) / σ on the
    emission side. Order 2: even levels follow -π (m² + 2m) / σ (φ_{-2} L = 0),
    odd levels sit at the mean of their even neighbours plus the one-photon
    offset.
    """
    utils.require_positive(sigma=sigma)
    curvature = math.pi / sigma
    m = np.arange(m_min, m_max + 1)
    if matched_order == 1:
        phiL = -curvature * m * (m + 1)
    elif matched_order == 2:
        phiL = _two_photon_law(m, curvature, one_photon_mismatch_phase)
    else:
        raise ConfigError(f"Unsupported matched order {matched_order}", ["matched_order"])
    phiL = np.asarray(phiL, dtype=float)
    phiL[-m_min] = 0.0
    return ladder_from_phases(phiL, m_min)


def mismatch_phases_reduced(config: ReducedConfig, m_min: int | None = None) -> LadderPhases:
    if m_min is None:
        m_min = -config.truncation_n_max
    return reduced_phase_law(
        config.sigma,
        config.matched_order,
        config.one_photon_mismatch_phase,
        m_min,
        config.initial_cavity_fock,
    )


def mismatch_phases(config: PhysicalConfig | ReducedConfig) -> LadderPhases:
    if isinstance(config, PhysicalConfig):
        return mismatch_phases_physical(config)
    return mismatch_phases_reduced(config)


def _anchored_cumsum(steps: np.ndarray, anchor: int, axis: int) -> np.ndarray:
    """Values v along axis with v[anchor] = 0 and v[i + 1] - v[i] = steps[i]."""
    steps = np.moveaxis(steps, axis, -1)
    out = np.zeros(steps.shape[:-1] + (steps.shape[-1] + 1,))
    out[..., anchor + 1 :] = np.cumsum(steps[..., anchor:], axis=-1)
    out[..., :anchor] = -np.cumsum(steps[..., :anchor][..., ::-1], axis=-1)[..., ::-1]
    return np.moveaxis(out, -1, axis)


def _check_closure(
    phiL: np.ndarray, delta_kL: tuple[np.ndarray, np.ndarray], anchor: tuple[int, int], scale: float
) -> None:
    a1, a2 = anchor
    # Path A: along mode 1 first, then mode 2
    row = _anchored_cumsum(-delta_kL[0][:, a2], a1, axis=0)
    path_a = row[:, None] + _anchored_cumsum(-delta_kL[1], a2, axis=1)
    # Path B: along mode 2 first, then mode 1
    column = _anchored_cumsum(-delta_kL[1][a1, :], a2, axis=0)
    path_b = column[None, :] + _anchored_cumsum(-delta_kL[0], a1, axis=0)

    tolerance = utils.CLOSURE_TOLERANCE * max(1.0, scale)
    closure = max(np.max(np.abs(path_a - phiL)), np.max(np.abs(path_b - phiL)))
    if closure > tolerance:
        raise utils.NumericError(
            f"Lattice phases are path dependent: closure error {closure:.3e} > {tolerance:.3e}"
        )
    logger.debug(f"Lattice closure error {closure:.3e}")


def _lattice_mismatches(phiL: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return (phiL[:-1, :] - phiL[1:, :], phiL[:, :-1] - phiL[:, 1:])


def lattice_phases_physical(config: PhysicalConfig) -> LatticePhases:
    if config.mode_count != 2:
        raise ConfigError("Two-mode lattice needs two photon energies", ["photon_energy_per_mode"])
    n_max = config.truncation_n_max
    a1, a2 = config.initial_cavity_fock
    if a1 > n_max or a2 > n_max:
        raise ConfigError("Initial Fock state outside the lattice", ["truncation_n_max"])

    omegas = _mode_energies_kev(config)
    offsets = np.asarray(_photon_momenta(config)) + np.asarray(config.grating_wavenumber)
    length = config.interaction_length

    e_total = utils.ELECTRON_REST_ENERGY + config.electron_kinetic_energy
    d1 = np.arange(n_max + 1)[:, None] - a1
    d2 = np.arange(n_max + 1)[None, :] - a2
    energies = e_total - d1 * omegas[0] - d2 * omegas[1]
    if np.any(energies < utils.ELECTRON_REST_ENERGY):
        raise DomainError("Lattice reaches electron energies below the rest energy")

    phiL = length * (-wavenumber_difference(e_total, energies) + d1 * offsets[0] + d2 * offsets[1])
    phiL = np.asarray(phiL, dtype=float)
    phiL[a1, a2] = 0.0

    # Mismatches straight from the dispersion; the node phases must telescope them
    delta_kL = (
        length
        * (wavenumber_difference(energies[:-1, :], energies[1:, :]) - offsets[0]),
        length
        * (wavenumber_difference(energies[:, :-1], energies[:, 1:]) - offsets[1]),
    )
    scale = length * float(np.sum(offsets)) * 2 * n_max
    _check_closure(phiL, delta_kL, (a1, a2), scale)
    return LatticePhases(n_max, (a1, a2), phiL, delta_kL)


def lattice_phases_reduced(config: TwoModeReducedConfig) -> LatticePhases:
    """Node phase = (unpaired photons) x (offset of the leading mode) + pair law of
    the total emitted photon number."""
    n_max = config.truncation_n_max
    a1, a2 = config.initial_cavity_fock
    phi1, phi2 = config.one_photon_mismatch_phases
    d1 = np.arange(n_max + 1)[:, None] - a1
    d2 = np.arange(n_max + 1)[None, :] - a2
    excess = d1 - d2
    unpaired = np.where(excess > 0, excess * phi1, -excess * phi2)
    pair = _two_photon_law(-(d1 + d2), math.pi / config.sigma, 0.0)
    phiL = np.asarray(unpaired + pair, dtype=float)
    phiL[a1, a2] = 0.0

    delta_kL = _lattice_mismatches(phiL)
    _check_closure(phiL, delta_kL, (a1, a2), float(np.max(np.abs(phiL))))
    return LatticePhases(n_max, (a1, a2), phiL, delta_kL)


def lattice_phases(config: PhysicalConfig | TwoModeReducedConfig) -> LatticePhases:
    if isinstance(config, PhysicalConfig):
        return lattice_phases_physical(config)
    return lattice_phases_reduced(config)
