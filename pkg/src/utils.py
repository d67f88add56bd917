import argparse
import importlib.metadata
import logging
import math
import os

import psutil

logger = logging.getLogger(__name__)

# keV·μm
HBAR_C = 0.19732698e-3
# keV
ELECTRON_REST_ENERGY = 510.99895
# eV·nm
PHOTON_ENERGY_WAVELENGTH_PRODUCT = 1239.84198

# Prefactors of the closed-form recoil parameter, kept at their published rounding
SIGMA_FULL_PREFACTOR = 1240.0 / 511.0**2
SIGMA_SIMPLE_PREFACTOR = 155.0
SIGMA_SIMPLE_MAX_KINETIC = 150.0

ODE_METHOD = "DOP853"
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
OVERFLOW_THRESHOLD = 1e-8
N_MAX_HARD_CAP = 4096
DEFAULT_N_MAX = 16
DEFAULT_TAIL_TOLERANCE = 1e-10
UNITARITY_TOLERANCE = 1e-10
CLOSURE_TOLERANCE = 1e-12

G2_UNDEFINED_BELOW = 1e-12
DEFAULT_BROADENING = 0.15
DEFAULT_BROADENING_STEP = 0.01
DEFAULT_CUTOFF_DROP = 10.0
PHASE_GRID_POINTS = 64
PHASE_XATOL = 1e-6

DEFAULT_REVIVAL_PROMINENCE = 0.025
# Gaussian energy resolution of the zero-level trace, in photon energies
REVIVAL_RESOLUTION = 1.25
DEFAULT_G_STEP = 0.01
MIN_SIDEBAND_CAP = 8

PACKAGE_NAME = "recoil_ladder"
THREADS_ENV_VAR = "RECOIL_LADDER_THREADS"

UNDEFINED = "UNDEFINED"
ERROR_PREFIX = "ERROR:"

EXACT = "exact"
ODE = "ode"
SINC = "sinc"
ENGINE_NAMES = (EXACT, ODE, SINC)

EXIT_OK = 0
EXIT_RUNTIME_FAILURE = 1
EXIT_USAGE = 2


class RecoilLadderError(Exception):
    pass


class DomainError(RecoilLadderError, ValueError):
    pass


class ConfigError(RecoilLadderError):
    def __init__(self, message: str, offending_keys: list[str] | None = None) -> None:
        self.offending_keys: list[str] = sorted(offending_keys or [])
        if self.offending_keys:
            message = f"{message}: {', '.join(self.offending_keys)}"
        super().__init__(message)


class UnknownEngineError(ConfigError):
    def __init__(self, name: str) -> None:
        super().__init__(
            f"Unknown engine '{name}'. Currently supported are {', '.join(ENGINE_NAMES)}"
        )


class InfeasiblePhaseMatchingError(RecoilLadderError):
    pass


class TruncationOverflowError(RecoilLadderError):
    def __init__(self, boundary_population: float, threshold: float, hint: str) -> None:
        self.boundary_population = boundary_population
        self.threshold = threshold
        super().__init__(
            f"Boundary population {boundary_population:.3e} exceeds {threshold:.1e}; {hint}"
        )


class SidebandOverflowError(TruncationOverflowError):
    pass


class NonConvergenceError(RecoilLadderError):
    pass


class NumericError(RecoilLadderError):
    pass


class ResonantReductionError(RecoilLadderError, ZeroDivisionError):
    pass


class BasisMismatchError(RecoilLadderError, ValueError):
    pass


def error_marker(error: BaseException) -> str:
    return f"{ERROR_PREFIX}{type(error).__name__}"


def require_positive(**values: float) -> None:
    bad = [name for name, value in values.items() if not value > 0]
    if bad:
        raise DomainError(
            "Expected strictly positive values for "
            + ", ".join(f"{name}={values[name]!r}" for name in bad)
        )


def positive_float(value: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid number: '{value}'")
    if not number > 0 or math.isinf(number):
        raise argparse.ArgumentTypeError(
            f"Domain error: expected a finite positive number, got '{value}'"
        )
    return number


def comma_separated_floats(value: str) -> list[float]:
    try:
        return [float(x) for x in value.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid number in list: '{value}'")


def default_worker_count() -> int:
    """Worker count from RECOIL_LADDER_THREADS, else the physical core count."""
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        try:
            workers = int(env_value)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got '{env_value}'")
        if workers < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be positive, got {workers}")
        logger.debug(f"Worker count {workers} taken from {THREADS_ENV_VAR}")
        return workers
    num_cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    logger.debug(f"Worker count defaults to {num_cores} physical cores")
    return num_cores


def static_chunks(count: int, worker_count: int) -> list[range]:
    """Split range(count) into at most worker_count contiguous, non-empty chunks."""
    worker_count = max(1, min(worker_count, count))
    base, extra = divmod(count, worker_count)
    chunks = []
    start = 0
    for w in range(worker_count):
        stop = start + base + (1 if w < extra else 0)
        if stop > start:
            chunks.append(range(start, stop))
        start = stop
    return chunks


def package_version() -> str:
    try:
        return importlib.metadata.version(PACKAGE_NAME)
    except importlib.metadata.PackageNotFoundError:
        return "0.1.0+local"
