import logging
from typing import Optional, final

import numpy as np
from typing_extensions import override

import utils
from datastructures import LadderPhases, Propagator, WaveFunction
from engines.ladder_engine import (
    LadderEngine,
    boundary_population,
    coupled_generator,
    expm_structured,
    ladder_couplings,
)

logger = logging.getLogger(__name__)


@final
class ExactEngine(LadderEngine):
    """Autonomized propagator: C(1) = exp(-i phiL) * exp(S) C(0)."""

    name = utils.EXACT

    def propagator(
        self,
        phases: LadderPhases,
        g_qu: float,
        initial_fock: Optional[int] = 0,
        unit_ladder: bool = False,
    ) -> Propagator:
        """exp(S) with the phase restoration folded in, reusable across initial states."""
        couplings = ladder_couplings(phases, g_qu, initial_fock, unit_ladder)
        return self._propagator(phases, couplings)

    def _propagator(self, phases: LadderPhases, couplings: np.ndarray) -> Propagator:
        autonomized = expm_structured(coupled_generator(phases, couplings))
        unitary = np.exp(-1j * phases.phiL)[:, None] * autonomized.unitary
        return Propagator(unitary, autonomized.length)

    @override
    def _propagate(
        self,
        phases: LadderPhases,
        couplings: np.ndarray,
        amplitudes: np.ndarray,
        unit_ladder: bool,
    ) -> tuple[np.ndarray, float]:
        if not np.any(couplings):
            # exp(S) is diag(exp(i phiL)), cancelled exactly by the phase restoration
            final = amplitudes.astype(complex)
        else:
            final = self._propagator(phases, couplings).apply(amplitudes)
        # The propagator is global, so only the final state can be checked
        boundary = float(boundary_population(np.abs(final) ** 2, phases, unit_ladder))
        return final, boundary


def evolve_exact(
    phases: LadderPhases,
    g_qu: float,
    init: WaveFunction,
    *,
    unit_ladder: bool = False,
    check_truncation: bool = True,
) -> WaveFunction:
    return ExactEngine().evolve(
        phases, g_qu, init, unit_ladder=unit_ladder, check_truncation=check_truncation
    )
