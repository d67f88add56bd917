import logging
from typing import final

import numpy as np
from typing_extensions import override

import utils
from datastructures import LadderPhases, WaveFunction
from engines.ladder_engine import (
    LadderEngine,
    TridiagonalGenerator,
    boundary_population,
    expm_structured,
)

logger = logging.getLogger(__name__)


def magnus_generator(phases: LadderPhases, couplings: np.ndarray) -> TridiagonalGenerator:
    """First Magnus term: each coupling integrated over s in [0, 1].

    The integral of exp(-i delta s) is exp(-i delta / 2) sinc(delta / 2).
    """
    half = phases.delta_kL / 2
    # np.sinc(x) = sin(pi x) / (pi x)
    effective = couplings * np.sinc(half / np.pi)
    lower = effective * np.exp(-1j * half)
    return TridiagonalGenerator(
        diagonal=np.zeros(phases.size, dtype=complex),
        lower=lower,
        upper=-np.conj(lower),
    )


@final
class SincEngine(LadderEngine):
    """Mismatch-modulated couplings g sqrt(n) sinc(delta / 2), one exponential."""

    name = utils.SINC

    @override
    def _propagate(
        self,
        phases: LadderPhases,
        couplings: np.ndarray,
        amplitudes: np.ndarray,
        unit_ladder: bool,
    ) -> tuple[np.ndarray, float]:
        if not np.any(couplings):
            final = amplitudes.astype(complex)
        else:
            final = expm_structured(magnus_generator(phases, couplings)).apply(amplitudes)
        return final, float(boundary_population(np.abs(final) ** 2, phases, unit_ladder))


def evolve_sinc(
    phases: LadderPhases,
    g_qu: float,
    init: WaveFunction,
    *,
    unit_ladder: bool = False,
    check_truncation: bool = True,
) -> WaveFunction:
    return SincEngine().evolve(
        phases, g_qu, init, unit_ladder=unit_ladder, check_truncation=check_truncation
    )
