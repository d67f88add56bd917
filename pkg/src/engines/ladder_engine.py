"""Shared machinery of the ladder backends.

Every backend works in the dimensionless evolution variable s in [0, 1] with
phases phiL * s and coupling g_qu. The autonomized generator S has diagonal
i phiL and real off-diagonals: S[m, m - 1] = +g sqrt(n), S[m - 1, m] = -g sqrt(n),
where n is the photon number of the lower electron level m - 1.
"""

import dataclasses
import logging
import math
from abc import ABC, abstractmethod
from typing import Optional, Union

import numpy as np
import scipy.linalg

import ladder
import utils
from datastructures import (
    LadderPhases,
    PhysicalConfig,
    Propagator,
    ReducedConfig,
    TruncationResult,
    WaveFunction,
)
from utils import (
    BasisMismatchError,
    DomainError,
    NonConvergenceError,
    NumericError,
    SidebandOverflowError,
    TruncationOverflowError,
)

logger = logging.getLogger(__name__)

# Taylor order of the oracle; the remainder at norm 1/4 is far below 1e-16
ORACLE_TAYLOR_ORDER = 24
ORACLE_SCALED_NORM = 0.25
ORACLE_MAX_SQUARINGS = 64


@dataclasses.dataclass(frozen=True, eq=False)
class TridiagonalGenerator:
    diagonal: np.ndarray
    # lower[i] = M[i + 1, i], upper[i] = M[i, i + 1]
    lower: np.ndarray
    upper: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diagonal)

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal.astype(complex))
            + np.diag(self.lower.astype(complex), -1)
            + np.diag(self.upper.astype(complex), 1)
        )


def ladder_couplings(
    phases: LadderPhases, g_qu: float, initial_fock: Optional[int], unit_ladder: bool = False
) -> np.ndarray:
    """Coupling of each adjacent-level transition, g sqrt(n) or g for the unit ladder."""
    if unit_ladder:
        return np.full(phases.size - 1, float(g_qu))
    assert initial_fock is not None
    # Photon number of the lower level of each transition m_min + i <-> m_min + i + 1
    photons = initial_fock - phases.levels[:-1]
    if np.any(photons < 1):
        raise BasisMismatchError(
            f"Ladder top {phases.m_max} exceeds the initial cavity occupation {initial_fock}"
        )
    return g_qu * np.sqrt(photons)


def coupled_generator(phases: LadderPhases, couplings: np.ndarray) -> TridiagonalGenerator:
    """S with diagonal i phiL, S[m, m-1] = +coupling and S[m-1, m] = -coupling."""
    return TridiagonalGenerator(
        diagonal=1j * phases.phiL,
        lower=couplings.astype(complex),
        upper=-couplings.astype(complex),
    )


def ladder_generator(
    phases: LadderPhases,
    g_qu: float,
    initial_fock: Optional[int] = 0,
    unit_ladder: bool = False,
) -> TridiagonalGenerator:
    return coupled_generator(phases, ladder_couplings(phases, g_qu, initial_fock, unit_ladder))


def _bands(matrix: np.ndarray) -> Optional[TridiagonalGenerator]:
    if np.any(np.triu(matrix, 2)) or np.any(np.tril(matrix, -2)):
        return None
    return TridiagonalGenerator(
        np.diag(matrix).copy(), np.diag(matrix, -1).copy(), np.diag(matrix, 1).copy()
    )


def _check_anti_hermitian(generator: TridiagonalGenerator) -> None:
    scale = max(1.0, float(np.max(np.abs(generator.diagonal), initial=0.0)))
    residual = max(
        float(np.max(np.abs(generator.diagonal.real), initial=0.0)),
        float(np.max(np.abs(generator.upper + np.conj(generator.lower)), initial=0.0)),
    )
    if residual > 1e-12 * scale:
        raise DomainError(f"Generator is not anti-Hermitian (residual {residual:.3e})")


def _expm_tridiagonal(generator: TridiagonalGenerator, scale: float) -> np.ndarray:
    # H = i M is Hermitian tridiagonal; a diagonal unitary gauge makes its
    # off-diagonal real so the real symmetric solver applies.
    h_diagonal = -generator.diagonal.imag
    h_lower = 1j * generator.lower
    magnitude = np.abs(h_lower)
    unit_phase = np.ones_like(h_lower)
    nonzero = magnitude > 0
    unit_phase[nonzero] = h_lower[nonzero] / magnitude[nonzero]
    gauge = np.concatenate(([1.0 + 0j], np.cumprod(unit_phase)))

    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh_tridiagonal(h_diagonal, magnitude)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise NumericError(
            f"Tridiagonal eigensolver failed on a {generator.size}x{generator.size} "
            f"generator (max |diag| {np.max(np.abs(h_diagonal)):.3e}, "
            f"max |offdiag| {np.max(magnitude, initial=0.0):.3e}): {e}"
        ) from e
    real_unitary = (eigenvectors * np.exp(-1j * eigenvalues * scale)) @ eigenvectors.T
    return gauge[:, None] * real_unitary * np.conj(gauge)[None, :]


def _expm_dense(matrix: np.ndarray, scale: float) -> np.ndarray:
    hermitian = 1j * matrix
    residual = float(np.max(np.abs(hermitian - hermitian.conj().T)))
    if residual > 1e-12 * max(1.0, float(np.max(np.abs(hermitian)))):
        raise DomainError(f"Generator is not anti-Hermitian (residual {residual:.3e})")
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(hermitian)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise NumericError(
            f"Hermitian eigensolver failed on a {matrix.shape[0]}x{matrix.shape[0]} "
            f"generator (norm {np.linalg.norm(matrix):.3e}): {e}"
        ) from e
    return (eigenvectors * np.exp(-1j * eigenvalues * scale)) @ eigenvectors.conj().T


def expm_structured(
    matrix: Union[TridiagonalGenerator, np.ndarray], scale: float = 1.0
) -> Propagator:
    """exp(matrix * scale) for an anti-Hermitian generator via a Hermitian eigendecomposition.

    Tridiagonal input (given as bands or as a dense array with no other entries)
    uses the banded solver; anything else falls back to the dense one.
    """
    if isinstance(matrix, np.ndarray):
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DomainError(f"Expected a square generator, got shape {matrix.shape}")
        bands = _bands(matrix)
        if bands is None:
            return Propagator(_expm_dense(matrix.astype(complex), scale), scale)
        matrix = bands

    _check_anti_hermitian(matrix)
    if matrix.size == 1:
        unitary = np.exp(matrix.diagonal * scale).reshape(1, 1).astype(complex)
    else:
        unitary = _expm_tridiagonal(matrix, scale)
    return Propagator(unitary, scale)


def oracle_expm(matrix: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Scaling and squaring around a fixed-order Taylor polynomial; test oracle only."""
    scaled = np.asarray(matrix, dtype=complex) * scale
    size = scaled.shape[0]
    norm = float(np.linalg.norm(scaled, 1))
    squarings = 0 if norm <= ORACLE_SCALED_NORM else math.ceil(math.log2(norm / ORACLE_SCALED_NORM))
    if squarings > ORACLE_MAX_SQUARINGS:
        raise NumericError(
            f"Matrix norm {norm:.3e} needs {squarings} squarings, "
            f"more than the oracle limit of {ORACLE_MAX_SQUARINGS}"
        )
    scaled = scaled / 2.0**squarings

    coefficients = np.ones(ORACLE_TAYLOR_ORDER + 1)
    for i in range(ORACLE_TAYLOR_ORDER):
        coefficients[i + 1] = coefficients[i] / (i + 1)

    identity = np.identity(size, dtype=complex)
    result = identity * coefficients[ORACLE_TAYLOR_ORDER]
    for i in range(ORACLE_TAYLOR_ORDER - 1, -1, -1):
        result = scaled @ result + identity * coefficients[i]
    for _ in range(squarings):
        result = result @ result
    return result


def initial_state(phases: LadderPhases, initial_fock: Optional[int] = 0) -> WaveFunction:
    """Electron at level 0 with the cavity in the Fock state initial_fock."""
    amplitudes = np.zeros(phases.size, dtype=complex)
    amplitudes[phases.index(0)] = 1.0
    return WaveFunction(amplitudes, phases.m_min, initial_fock)


def boundary_population(
    probabilities: np.ndarray, phases: LadderPhases, unit_ladder: bool
) -> np.ndarray:
    """Population on the open ends of the ladder; works on the last axis."""
    lower = 0.0 if phases.truncated else probabilities[..., 0]
    if unit_ladder:
        return lower + probabilities[..., -1]
    return lower + np.zeros(probabilities.shape[:-1])


class LadderEngine(ABC):
    name: str

    def evolve(
        self,
        phases: LadderPhases,
        g_qu: float,
        init: WaveFunction,
        *,
        unit_ladder: bool = False,
        check_truncation: bool = True,
    ) -> WaveFunction:
        if init.m_min != phases.m_min or len(init.amplitudes) != phases.size:
            raise BasisMismatchError(
                f"Initial state spans [{init.m_min}, {init.m_max}] but the ladder spans "
                f"[{phases.m_min}, {phases.m_max}]"
            )
        if not unit_ladder and init.initial_fock is None:
            raise BasisMismatchError("Quantized evolution needs the initial cavity occupation")

        couplings = ladder_couplings(phases, g_qu, init.initial_fock, unit_ladder)
        amplitudes, boundary = self._propagate(phases, couplings, init.amplitudes, unit_ladder)

        norm_drift = abs(
            float(np.sum(np.abs(amplitudes) ** 2)) - float(np.sum(init.probabilities))
        )
        logger.debug(f"{self.name} evolution over {phases.size} levels, norm drift {norm_drift:.3e}")
        if check_truncation and boundary > utils.OVERFLOW_THRESHOLD:
            if unit_ladder:
                raise SidebandOverflowError(
                    boundary, utils.OVERFLOW_THRESHOLD, "increase the sideband cap M"
                )
            raise TruncationOverflowError(
                boundary, utils.OVERFLOW_THRESHOLD, "increase truncation_n_max"
            )
        return dataclasses.replace(init, amplitudes=amplitudes, norm_drift=norm_drift)

    @abstractmethod
    def _propagate(
        self,
        phases: LadderPhases,
        couplings: np.ndarray,
        amplitudes: np.ndarray,
        unit_ladder: bool,
    ) -> tuple[np.ndarray, float]:
        """Final amplitudes and the largest boundary population the backend observed."""
        pass


def _with_n_max(config: Union[PhysicalConfig, ReducedConfig], n_max: int):
    return dataclasses.replace(config, truncation_n_max=n_max)


def config_coupling(config: Union[PhysicalConfig, ReducedConfig]) -> float:
    if isinstance(config, PhysicalConfig):
        return config.couplings()[0]
    return config.coupling_g_qu


def config_initial_fock(config: Union[PhysicalConfig, ReducedConfig]) -> int:
    if isinstance(config, PhysicalConfig):
        return config.initial_cavity_fock[0]
    return config.initial_cavity_fock


def evolve_config(
    config: Union[PhysicalConfig, ReducedConfig],
    engine: LadderEngine,
    *,
    check_truncation: bool = True,
) -> tuple[WaveFunction, LadderPhases]:
    phases = ladder.mismatch_phases(config)
    init = initial_state(phases, config_initial_fock(config))
    state = engine.evolve(
        phases, config_coupling(config), init, check_truncation=check_truncation
    )
    return state, phases


def adaptive_truncation(
    config: Union[PhysicalConfig, ReducedConfig],
    engine: LadderEngine,
    tail_tolerance: float = utils.DEFAULT_TAIL_TOLERANCE,
) -> TruncationResult:
    """Double truncation_n_max until the two deepest levels hold less than tail_tolerance."""
    utils.require_positive(tail_tolerance=tail_tolerance)
    n_max = config.truncation_n_max
    while True:
        if n_max > utils.N_MAX_HARD_CAP:
            raise NonConvergenceError(
                f"Tail population still above {tail_tolerance:.1e} at the hard cap "
                f"n_max = {utils.N_MAX_HARD_CAP}"
            )
        current = _with_n_max(config, n_max)
        state, phases = evolve_config(current, engine, check_truncation=False)
        tail = float(np.sum(state.probabilities[:2]))
        logger.debug(f"n_max = {n_max}: tail population {tail:.3e}")
        if tail < tail_tolerance or phases.truncated:
            logger.info(f"Truncation converged at n_max = {n_max}")
            return TruncationResult(state, n_max, phases)
        n_max *= 2
