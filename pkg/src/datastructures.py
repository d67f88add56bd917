import dataclasses
import enum
import math
from typing import Any, Optional

import numpy as np

from utils import DEFAULT_N_MAX, ConfigError

# These need to be in a separate file (not __main__) to enable (un)pickling


class MatchedTransition(str, enum.Enum):
    ONE_PHOTON_EMISSION = "one_photon_emission"
    TWO_PHOTON_EMISSION = "two_photon_emission"
    CUSTOM = "custom"


class ReferenceKind(str, enum.Enum):
    BELL = "bell"
    NOON2 = "noon2"
    GHZ = "ghz"
    SQUEEZED_VACUUM = "sv"
    TWIN_BEAM = "twin"
    WEAK_COHERENT = "weak_coherent"


def _as_tuple(value, length: int, cast) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != 1:
            return tuple(cast(v) for v in value)
        # A single entry applies to every mode
        value = value[0]
    return tuple(cast(value) for _ in range(length))


@dataclasses.dataclass(frozen=True)
class PhysicalConfig:
    # keV
    electron_kinetic_energy: float
    # eV, one entry per cavity mode
    photon_energy_per_mode: tuple[float, ...]
    # μm
    interaction_length: float
    coupling_g_qu: float
    matched_transition: MatchedTransition = MatchedTransition.ONE_PHOTON_EMISSION
    # rad/μm, scalar or one entry per mode
    grating_wavenumber: tuple[float, ...] = (0.0,)
    initial_cavity_fock: tuple[int, ...] = (0,)
    truncation_n_max: int = DEFAULT_N_MAX
    # rad/μm, only read for MatchedTransition.CUSTOM
    photon_momentum: Optional[tuple[float, ...]] = None
    # Per-mode couplings; defaults to coupling_g_qu for every mode
    coupling_per_mode: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        energies = _as_tuple(self.photon_energy_per_mode, 1, float)
        modes = len(energies)
        object.__setattr__(self, "photon_energy_per_mode", energies)
        object.__setattr__(
            self, "matched_transition", MatchedTransition(self.matched_transition)
        )
        object.__setattr__(
            self, "grating_wavenumber", _as_tuple(self.grating_wavenumber, modes, float)
        )
        object.__setattr__(
            self, "initial_cavity_fock", _as_tuple(self.initial_cavity_fock, modes, int)
        )
        if self.photon_momentum is not None:
            object.__setattr__(
                self, "photon_momentum", _as_tuple(self.photon_momentum, modes, float)
            )
        if self.coupling_per_mode is not None:
            object.__setattr__(
                self, "coupling_per_mode", _as_tuple(self.coupling_per_mode, modes, float)
            )

        bad = []
        if modes not in (1, 2):
            bad.append("photon_energy_per_mode")
        if not self.electron_kinetic_energy > 0:
            bad.append("electron_kinetic_energy")
        if any(not e > 0 for e in energies) or any(
            e >= self.electron_kinetic_energy * 1e3 for e in energies
        ):
            bad.append("photon_energy_per_mode")
        if not self.interaction_length > 0:
            bad.append("interaction_length")
        if not self.coupling_g_qu >= 0:
            bad.append("coupling_g_qu")
        if len(self.grating_wavenumber) != modes or any(
            not gw >= 0 for gw in self.grating_wavenumber
        ):
            bad.append("grating_wavenumber")
        if len(self.initial_cavity_fock) != modes or any(
            n < 0 for n in self.initial_cavity_fock
        ):
            bad.append("initial_cavity_fock")
        if self.truncation_n_max < 1:
            bad.append("truncation_n_max")
        if self.matched_transition is MatchedTransition.CUSTOM and (
            self.photon_momentum is None or len(self.photon_momentum) != modes
        ):
            bad.append("photon_momentum")
        if self.coupling_per_mode is not None and (
            len(self.coupling_per_mode) != modes
            or any(not g >= 0 for g in self.coupling_per_mode)
        ):
            bad.append("coupling_per_mode")
        if bad:
            raise ConfigError("Invalid physical configuration", sorted(set(bad)))

    @property
    def mode_count(self) -> int:
        return len(self.photon_energy_per_mode)

    def couplings(self) -> tuple[float, ...]:
        if self.coupling_per_mode is not None:
            return self.coupling_per_mode
        return tuple(self.coupling_g_qu for _ in range(self.mode_count))


@dataclasses.dataclass(frozen=True)
class ReducedConfig:
    sigma: float
    coupling_g_qu: float
    matched_order: int = 1
    one_photon_mismatch_phase: float = 0.0
    initial_cavity_fock: int = 0
    truncation_n_max: int = DEFAULT_N_MAX

    def __post_init__(self):
        bad = []
        if not self.sigma > 0:
            bad.append("sigma")
        if not self.coupling_g_qu >= 0:
            bad.append("coupling_g_qu")
        if self.matched_order not in (1, 2):
            bad.append("matched_order")
        if self.matched_order == 1 and self.one_photon_mismatch_phase != 0:
            bad.append("one_photon_mismatch_phase")
        if not math.isfinite(self.one_photon_mismatch_phase):
            bad.append("one_photon_mismatch_phase")
        if self.initial_cavity_fock < 0:
            bad.append("initial_cavity_fock")
        if self.truncation_n_max < 1:
            bad.append("truncation_n_max")
        if bad:
            raise ConfigError("Invalid reduced configuration", sorted(set(bad)))


@dataclasses.dataclass(frozen=True)
class TwoModeReducedConfig:
    sigma: float
    coupling_per_mode: tuple[float, float]
    # Phase offset of a node holding one unpaired photon in mode j
    one_photon_mismatch_phases: tuple[float, float]
    initial_cavity_fock: tuple[int, int] = (0, 0)
    truncation_n_max: int = 8

    def __post_init__(self):
        object.__setattr__(
            self, "coupling_per_mode", _as_tuple(self.coupling_per_mode, 2, float)
        )
        object.__setattr__(
            self,
            "one_photon_mismatch_phases",
            _as_tuple(self.one_photon_mismatch_phases, 2, float),
        )
        object.__setattr__(
            self, "initial_cavity_fock", _as_tuple(self.initial_cavity_fock, 2, int)
        )
        bad = []
        if not self.sigma > 0:
            bad.append("sigma")
        if len(self.coupling_per_mode) != 2 or any(
            not g >= 0 for g in self.coupling_per_mode
        ):
            bad.append("coupling_per_mode")
        if len(self.one_photon_mismatch_phases) != 2 or any(
            not math.isfinite(p) for p in self.one_photon_mismatch_phases
        ):
            bad.append("one_photon_mismatch_phases")
        if len(self.initial_cavity_fock) != 2 or any(
            n < 0 for n in self.initial_cavity_fock
        ):
            bad.append("initial_cavity_fock")
        if self.truncation_n_max < 1 or any(
            n > self.truncation_n_max for n in self.initial_cavity_fock
        ):
            bad.append("truncation_n_max")
        if bad:
            raise ConfigError("Invalid two-mode configuration", sorted(set(bad)))


@dataclasses.dataclass(frozen=True)
class SigmaEstimate:
    value: float
    valid: bool


@dataclasses.dataclass(frozen=True, eq=False)
class LadderPhases:
    """Per-level mismatch phases over the ladder m_min..m_max.

    delta_kL[i] is the mismatch of the transition between levels m_min + i and
    m_min + i + 1, phiL[i] the cumulative phase of level m_min + i.
    """

    m_min: int
    m_max: int
    delta_kL: np.ndarray
    phiL: np.ndarray
    # Set when the physical ladder was clipped at the electron rest energy
    truncated: bool = False

    def __post_init__(self):
        if not self.m_min <= 0 <= self.m_max:
            raise ConfigError(
                f"Ladder [{self.m_min}, {self.m_max}] must contain the initial level 0"
            )
        if len(self.phiL) != self.size or len(self.delta_kL) != self.size - 1:
            raise ConfigError("Ladder phase arrays do not match the level range")
        if self.phiL[-self.m_min] != 0.0:
            raise ConfigError("Initial level must carry zero phase")

    @property
    def size(self) -> int:
        return self.m_max - self.m_min + 1

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.m_min, self.m_max + 1)

    def index(self, m: int) -> int:
        if not self.m_min <= m <= self.m_max:
            raise IndexError(f"Level {m} outside [{self.m_min}, {self.m_max}]")
        return m - self.m_min

    def phase(self, m: int) -> float:
        return float(self.phiL[self.index(m)])

    def mismatch(self, m: int) -> float:
        """Mismatch of the transition m -> m + 1."""
        return float(self.delta_kL[self.index(m)])


@dataclasses.dataclass(frozen=True, eq=False)
class LatticePhases:
    """Node phases on the two-mode occupation lattice, each mode 0..n_max.

    delta_kL[j] holds the emission mismatch into mode j from every node that
    can still emit into it.
    """

    n_max: int
    initial_fock: tuple[int, int]
    phiL: np.ndarray
    delta_kL: tuple[np.ndarray, np.ndarray]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_max + 1, self.n_max + 1)


@dataclasses.dataclass(frozen=True, eq=False)
class WaveFunction:
    amplitudes: np.ndarray
    m_min: int
    # None for the classical (PINEM) ladder, which carries no photon numbers
    initial_fock: Optional[int] = 0
    norm_drift: float = 0.0

    @property
    def m_max(self) -> int:
        return self.m_min + len(self.amplitudes) - 1

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.m_min, self.m_max + 1)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def level_map(self) -> list[tuple[int, Optional[int]]]:
        if self.initial_fock is None:
            return [(int(m), None) for m in self.levels]
        return [(int(m), int(self.initial_fock - m)) for m in self.levels]

    def amplitude(self, m: int) -> complex:
        return complex(self.amplitudes[m - self.m_min])

    def electron_levels(self) -> tuple[np.ndarray, np.ndarray]:
        return self.levels, self.probabilities


@dataclasses.dataclass(frozen=True, eq=False)
class TwoModeWaveFunction:
    amplitudes: np.ndarray
    initial_fock: tuple[int, int] = (0, 0)
    norm_drift: float = 0.0

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[0] - 1

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def electron_levels(self) -> tuple[np.ndarray, np.ndarray]:
        """Electron level m = (a1 + a2) - (n1 + n2) with its total probability."""
        n_total = np.add.outer(np.arange(self.n_max + 1), np.arange(self.n_max + 1))
        m = sum(self.initial_fock) - n_total
        levels = np.arange(m.min(), m.max() + 1)
        weights = np.bincount(
            (m - levels[0]).ravel(), weights=self.probabilities.ravel()
        )
        return levels, weights


@dataclasses.dataclass(frozen=True, eq=False)
class Propagator:
    unitary: np.ndarray
    # Dimensionless s-scale the generator was exponentiated over
    length: float

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.unitary @ vector

    def unitarity_error(self) -> float:
        u = self.unitary
        return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    s: np.ndarray
    # One row per accepted solver step
    amplitudes: np.ndarray
    m_min: int
    initial_fock: Optional[int] = 0


@dataclasses.dataclass(frozen=True, eq=False)
class TruncationResult:
    state: WaveFunction
    n_max: int
    phases: LadderPhases


@dataclasses.dataclass(frozen=True, eq=False)
class PhotonStatistics:
    # P(n) for n = 0..len - 1
    probabilities: np.ndarray
    mean_photons: float
    # None when the mean photon number is too small for g² to be defined
    g2: Optional[float]

    @property
    def g2_defined(self) -> bool:
        return self.g2 is not None


@dataclasses.dataclass(frozen=True, eq=False)
class TwinStatistics:
    marginals: tuple[PhotonStatistics, PhotonStatistics]
    # P(n, n)
    diagonal: np.ndarray
    diagonal_weight: float
    # Geometric ratio P(n+1, n+1) / P(n, n) fitted over the populated tail
    tail_ratio: Optional[float]


@dataclasses.dataclass(frozen=True, eq=False)
class ElectronSpectrum:
    levels: np.ndarray
    probabilities: np.ndarray
    energy_grid: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None

    @property
    def is_broadened(self) -> bool:
        return self.energy_grid is not None

    def probability(self, m: int) -> float:
        hits = np.nonzero(self.levels == m)[0]
        return float(self.probabilities[hits[0]]) if len(hits) else 0.0


@dataclasses.dataclass(frozen=True, eq=False)
class ReferenceState:
    kind: ReferenceKind
    # Ladder vector from m_min, or an (n1, n2) grid when m_min is None
    amplitudes: np.ndarray
    m_min: Optional[int] = None
    r: float = 0.0
    phase: float = 0.0
    alpha: complex = 0j


@dataclasses.dataclass(frozen=True, eq=False)
class PinemConfig:
    classical_coupling_g: float
    phases: LadderPhases
    matched_order: int = 1

    def __post_init__(self):
        bad = []
        if not self.classical_coupling_g >= 0:
            bad.append("classical_coupling_g")
        if self.phases.m_min != -self.phases.m_max or self.phases.m_max < 1:
            bad.append("phases")
        if self.matched_order not in (1, 2):
            bad.append("matched_order")
        if bad:
            raise ConfigError("Invalid PINEM configuration", bad)

    @property
    def sideband_cap(self) -> int:
        return self.phases.m_max


@dataclasses.dataclass(frozen=True)
class PinemSetup:
    """Reduced PINEM scenario; the symmetric ladder is built per coupling."""

    sigma: float
    classical_coupling_g: float = 0.0
    matched_order: int = 1
    one_photon_mismatch_phase: float = 0.0
    # None picks ceil(8 (sigma + g)) per coupling
    sideband_cap: Optional[int] = None

    def __post_init__(self):
        bad = []
        if not self.sigma > 0:
            bad.append("sigma")
        if not self.classical_coupling_g >= 0:
            bad.append("classical_coupling_g")
        if self.matched_order not in (1, 2):
            bad.append("matched_order")
        if self.matched_order == 1 and self.one_photon_mismatch_phase != 0:
            bad.append("one_photon_mismatch_phase")
        if self.sideband_cap is not None and self.sideband_cap < 1:
            bad.append("sideband_cap")
        if bad:
            raise ConfigError("Invalid PINEM setup", bad)


@dataclasses.dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    count: int
    scale: str = "linear"

    def __post_init__(self):
        bad = []
        if self.count < 1 or (self.count == 1 and self.start != self.stop):
            bad.append("count")
        if self.scale not in ("linear", "log"):
            bad.append("scale")
        if self.scale == "log" and not (self.start > 0 and self.stop > 0):
            bad.append("start/stop")
        if bad:
            raise ConfigError(f"Invalid sweep axis '{self.name}'", bad)

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    axes: tuple[SweepAxis, ...]
    base_config: Any
    engine: str = "exact"
    observable: str = "g2"
    output: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) not in (1, 2):
            raise ConfigError("A sweep needs one or two axes", ["axes"])
        names = [axis.name for axis in self.axes]
        if len(set(names)) != len(names):
            raise ConfigError("Sweep axes must reference distinct parameters", names)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.count for axis in self.axes)


@dataclasses.dataclass(frozen=True, eq=False)
class SweepResult:
    axis_names: tuple[str, ...]
    axis_values: tuple[np.ndarray, ...]
    # Grid of scalars, or grid x levels for spectrum sweeps; NaN where marked
    values: np.ndarray
    # "" for a filled cell, UNDEFINED or ERROR:<name> otherwise
    markers: np.ndarray
    levels: Optional[np.ndarray] = None
    metadata: dict = dataclasses.field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.axis_values)

    def failed_cells(self) -> list[tuple[int, ...]]:
        return [
            tuple(int(i) for i in idx)
            for idx in np.argwhere(np.char.startswith(self.markers.astype(str), "ERROR:"))
        ]


@dataclasses.dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: dict
    input_hash: Optional[str]
    outputs: tuple[str, ...]
    versions: dict
    timestamp: str

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["outputs"] = list(self.outputs)
        return d

