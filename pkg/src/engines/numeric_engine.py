import logging
from typing import Optional, final

import numpy as np
from scipy.integrate import solve_ivp
from typing_extensions import override

import utils
from datastructures import LadderPhases, Trajectory, WaveFunction
from engines.ladder_engine import LadderEngine, boundary_population, ladder_couplings
from utils import NumericError

logger = logging.getLogger(__name__)


def coefficient_rhs(s: float, c: np.ndarray, couplings: np.ndarray, delta_kL: np.ndarray):
    """dC/ds with A[i + 1, i] = c_i exp(-i delta_i s) and A[i, i + 1] = -c_i exp(+i delta_i s)."""
    rotation = np.exp(-1j * delta_kL * s)
    dc = np.zeros_like(c)
    dc[1:] += couplings * rotation * c[:-1]
    dc[:-1] -= couplings * np.conj(rotation) * c[1:]
    return dc


@final
class NumericEngine(LadderEngine):
    """Adaptive Runge-Kutta integration of the non-autonomous coefficient equations."""

    name = utils.ODE

    def __init__(
        self,
        rtol: float = utils.ODE_RTOL,
        atol: float = utils.ODE_ATOL,
        method: str = utils.ODE_METHOD,
    ):
        self.rtol = rtol
        self.atol = atol
        self.method = method

    def integrate(
        self,
        phases: LadderPhases,
        g_qu: float,
        init: WaveFunction,
        *,
        s_span: tuple[float, float] = (0.0, 1.0),
        unit_ladder: bool = False,
    ) -> Trajectory:
        """Every accepted step of the integration over s_span.

        Starting a later span from the last row of an earlier one continues the
        same evolution, since the coefficient equations carry s explicitly.
        """
        couplings = ladder_couplings(phases, g_qu, init.initial_fock, unit_ladder)
        return self._integrate(phases, couplings, init.amplitudes, s_span, init.initial_fock)

    def _integrate(
        self,
        phases: LadderPhases,
        couplings: np.ndarray,
        amplitudes: np.ndarray,
        s_span: tuple[float, float],
        initial_fock: Optional[int],
    ) -> Trajectory:
        start = amplitudes.astype(complex)
        if not np.any(couplings) or s_span[0] == s_span[1]:
            return Trajectory(
                np.array([s_span[0], s_span[1]]), np.vstack([start, start]), phases.m_min, initial_fock
            )
        solution = solve_ivp(
            coefficient_rhs,
            s_span,
            start,
            method=self.method,
            rtol=self.rtol,
            atol=self.atol,
            args=(couplings, phases.delta_kL),
        )
        if not solution.success:
            raise NumericError(f"Coefficient integration failed: {solution.message}")
        logger.debug(
            f"{self.method} took {len(solution.t) - 1} steps with {solution.nfev} evaluations"
        )
        return Trajectory(solution.t, solution.y.T, phases.m_min, initial_fock)

    @override
    def _propagate(
        self,
        phases: LadderPhases,
        couplings: np.ndarray,
        amplitudes: np.ndarray,
        unit_ladder: bool,
    ) -> tuple[np.ndarray, float]:
        trajectory = self._integrate(phases, couplings, amplitudes, (0.0, 1.0), None)
        # Boundary monitored at every accepted step
        boundary = boundary_population(np.abs(trajectory.amplitudes) ** 2, phases, unit_ladder)
        return trajectory.amplitudes[-1], float(np.max(boundary))


def evolve_numeric(
    phases: LadderPhases,
    g_qu: float,
    init: WaveFunction,
    *,
    rtol: float = utils.ODE_RTOL,
    atol: float = utils.ODE_ATOL,
    return_trajectory: bool = False,
    unit_ladder: bool = False,
    check_truncation: bool = True,
) -> WaveFunction | tuple[WaveFunction, Trajectory]:
    engine = NumericEngine(rtol=rtol, atol=atol)
    state = engine.evolve(
        phases, g_qu, init, unit_ladder=unit_ladder, check_truncation=check_truncation
    )
    if not return_trajectory:
        return state
    return state, engine.integrate(phases, g_qu, init, unit_ladder=unit_ladder)
