"""One- and two-axis parameter sweeps over independent grid cells."""

import dataclasses
import itertools
import logging
import sys
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from typing import Any, Optional, Union

import numpy as np
from tqdm import tqdm

import ladder
import multimode
import observables
import pinem
import utils
from datastructures import (
    PhysicalConfig,
    PinemSetup,
    ReducedConfig,
    ReferenceKind,
    SweepResult,
    SweepSpec,
    TwoModeReducedConfig,
    WaveFunction,
)
from engines import get_engine
from engines.ladder_engine import evolve_config
from utils import ConfigError, RecoilLadderError

logger = logging.getLogger(__name__)

G2 = "g2"
MEAN_PHOTONS = "mean_photons"
SPECTRUM = "spectrum"
P0_TRACE = "P0_trace"
FIDELITY_PREFIX = "fidelity:"

PROCESS = "process"
THREAD = "thread"

# Derived parameters, applied after plain fields so they see the swept values
ALIASES = ("photon_energy", "wavelength_nm", "g_eff")

AnyConfig = Union[PhysicalConfig, ReducedConfig, PinemSetup, TwoModeReducedConfig]
CellValue = Union[float, tuple[np.ndarray, np.ndarray]]


def _observable_kind(observable: str) -> str:
    if observable.startswith(FIDELITY_PREFIX):
        kind = observable[len(FIDELITY_PREFIX) :]
        try:
            ReferenceKind(kind)
        except ValueError:
            raise ConfigError(f"Unknown fidelity reference '{kind}'", ["observable"])
        return FIDELITY_PREFIX
    if observable not in (G2, MEAN_PHOTONS, SPECTRUM, P0_TRACE):
        raise ConfigError(f"Unknown observable '{observable}'", ["observable"])
    return observable


def validate_spec(spec: SweepSpec) -> None:
    """Checks that abort the whole sweep before any cell runs."""
    if not isinstance(spec.base_config, (PhysicalConfig, ReducedConfig, PinemSetup, TwoModeReducedConfig)):
        raise ConfigError("Unsupported base configuration", ["base_config"])
    kind = _observable_kind(spec.observable)
    if isinstance(spec.base_config, PinemSetup) and kind not in (SPECTRUM, P0_TRACE):
        raise ConfigError("PINEM sweeps produce spectra and zero-level traces only", ["observable"])
    if isinstance(spec.base_config, PhysicalConfig) and spec.base_config.mode_count != 1:
        raise ConfigError("Physical sweeps run on a single mode", ["base_config"])
    get_engine(spec.engine)

    field_names = {f.name for f in dataclasses.fields(spec.base_config)}
    for axis in spec.axes:
        if axis.name not in field_names and axis.name not in ALIASES:
            raise ConfigError(f"Unknown sweep parameter '{axis.name}'", [axis.name])
    # The corner cells must build, otherwise every cell would fail the same way
    for corner in itertools.product(*[(a.start, a.stop) for a in spec.axes]):
        try:
            apply_parameters(spec.base_config, dict(zip([a.name for a in spec.axes], corner)))
        except ConfigError:
            raise
        except RecoilLadderError:
            # Physics failures are recorded per cell
            pass


def _cast(config: AnyConfig, name: str, value: float) -> Any:
    current = getattr(config, name)
    if isinstance(current, tuple):
        return tuple(type(current[0])(value) for _ in current)
    if isinstance(current, int) and not isinstance(current, bool):
        return int(round(value))
    return float(value)


def _apply_alias(config: AnyConfig, name: str, value: float) -> AnyConfig:
    match name:
        case "photon_energy" | "wavelength_nm":
            if not isinstance(config, PhysicalConfig):
                raise ConfigError(f"'{name}' needs a physical configuration", [name])
            energy = ladder.wavelength_to_photon_energy(value) if name == "wavelength_nm" else value
            energies = (energy,) + config.photon_energy_per_mode[1:]
            return dataclasses.replace(config, photon_energy_per_mode=energies)
        case "g_eff":
            if isinstance(config, ReducedConfig):
                g = observables.coupling_for_g_eff(value, config.one_photon_mismatch_phase)
                return dataclasses.replace(config, coupling_g_qu=g)
            if isinstance(config, TwoModeReducedConfig):
                unit = multimode.two_mode_pair_coupling((1.0, 1.0), config.one_photon_mismatch_phases)
                g = float(np.sqrt(abs(value / unit)))
                return dataclasses.replace(config, coupling_per_mode=(g, g))
            raise ConfigError("'g_eff' needs a reduced configuration", [name])


def apply_parameters(config: AnyConfig, values: dict[str, float]) -> AnyConfig:
    plain = {
        name: _cast(config, name, value) for name, value in values.items() if name not in ALIASES
    }
    if plain:
        config = dataclasses.replace(config, **plain)
    for name in ALIASES:
        if name in values:
            config = _apply_alias(config, name, values[name])
    return config


def _single_mode_state(config: Union[PhysicalConfig, ReducedConfig], engine_name: str) -> WaveFunction:
    state, _ = evolve_config(config, get_engine(engine_name))
    return state


def evaluate_config(config: AnyConfig, engine_name: str, observable: str) -> tuple[CellValue, str]:
    """Observable of one configuration with its marker ('' when the value is defined)."""
    kind = _observable_kind(observable)
    if isinstance(config, PinemSetup):
        spectrum = pinem.pinem_spectrum(config)
        if kind == SPECTRUM:
            return (spectrum.levels, spectrum.probabilities), ""
        return spectrum.probability(0), ""

    if isinstance(config, TwoModeReducedConfig):
        phases = ladder.lattice_phases(config)
        state = multimode.evolve_two_mode(
            phases,
            config.coupling_per_mode,
            multimode.initial_lattice_state(config.truncation_n_max, config.initial_cavity_fock),
        )
        stats = multimode.twin_statistics(state).marginals[0]
    else:
        state = _single_mode_state(config, engine_name)
        stats = observables.photon_statistics(state)

    match kind:
        case "g2":
            if stats.g2 is None:
                return float("nan"), utils.UNDEFINED
            return stats.g2, ""
        case "mean_photons":
            return stats.mean_photons, ""
        case "spectrum":
            spectrum = observables.electron_spectrum(state)
            return (spectrum.levels, spectrum.probabilities), ""
        case "P0_trace":
            return observables.electron_spectrum(state).probability(0), ""
        case _:
            reference = observable[len(FIDELITY_PREFIX) :]
            value, _ = observables.best_fidelity(state, reference)
            return value, ""


def _evaluate_cell(spec: SweepSpec, grid: list[np.ndarray], flat_index: int) -> tuple[CellValue, str]:
    position = np.unravel_index(flat_index, spec.shape)
    values = {axis.name: float(grid[i][position[i]]) for i, axis in enumerate(spec.axes)}
    try:
        config = apply_parameters(spec.base_config, values)
        return evaluate_config(config, spec.engine, spec.observable)
    except RecoilLadderError as e:
        logger.debug(f"Cell {values} failed: {e}")
        return float("nan"), utils.error_marker(e)


def _evaluate_chunk(spec: SweepSpec, cells: range) -> list[tuple[int, CellValue, str]]:
    grid = [axis.values() for axis in spec.axes]
    return [(i, *_evaluate_cell(spec, grid, i)) for i in cells]


def _make_executor(kind: str, worker_count: int) -> Executor:
    if kind == PROCESS:
        return ProcessPoolExecutor(max_workers=worker_count)
    if kind == THREAD:
        return ThreadPoolExecutor(max_workers=worker_count)
    raise ConfigError(f"Unknown executor '{kind}'", ["executor"])


def _assemble(spec: SweepSpec, cells: dict[int, tuple[CellValue, str]]) -> SweepResult:
    shape = spec.shape
    markers = np.full(shape, "", dtype=object)
    levels = None
    if spec.observable == SPECTRUM:
        filled = [v for v, marker in cells.values() if not marker]
        if filled:
            low = min(int(lv[0]) for lv, _ in filled)
            high = max(int(lv[-1]) for lv, _ in filled)
        else:
            low = high = 0
        levels = np.arange(low, high + 1)
        values = np.zeros(shape + (len(levels),))
    else:
        values = np.zeros(shape)

    for flat_index in range(int(np.prod(shape))):
        position = np.unravel_index(flat_index, shape)
        value, marker = cells[flat_index]
        markers[position] = marker
        if levels is None:
            values[position] = value
        elif marker:
            values[position] = np.nan
        else:
            cell_levels, probabilities = value
            values[position][cell_levels - levels[0]] = probabilities
    return SweepResult(
        axis_names=tuple(axis.name for axis in spec.axes),
        axis_values=tuple(axis.values() for axis in spec.axes),
        values=values,
        markers=markers.astype(str),
        levels=levels,
        metadata=sweep_metadata(spec),
    )


def sweep_metadata(spec: SweepSpec) -> dict:
    return {
        "engine": spec.engine,
        "observable": spec.observable,
        "axes": [dataclasses.asdict(axis) for axis in spec.axes],
        "tolerances": {
            "ode_rtol": utils.ODE_RTOL,
            "ode_atol": utils.ODE_ATOL,
            "overflow_threshold": utils.OVERFLOW_THRESHOLD,
            "g2_undefined_below": utils.G2_UNDEFINED_BELOW,
        },
        "version": utils.package_version(),
    }


def run_sweep(
    spec: SweepSpec,
    worker_count: Optional[int] = None,
    executor: str = PROCESS,
    show_progress: bool = False,
) -> SweepResult:
    """Evaluate every cell once; the grid does not depend on worker_count or completion order."""
    validate_spec(spec)
    if worker_count is None:
        worker_count = utils.default_worker_count()
    if worker_count < 1:
        raise ConfigError(f"Worker count must be positive, got {worker_count}", ["workers"])

    count = int(np.prod(spec.shape))
    chunks = utils.static_chunks(count, worker_count)
    logger.info(
        f"Starting sweep of {count} cells ({spec.observable}, {spec.engine}) "
        f"in {len(chunks)} chunks"
    )
    cells: dict[int, tuple[CellValue, str]] = {}
    progress = tqdm(total=count, desc="Sweep", file=sys.stderr, disable=not show_progress)

    if worker_count == 1:
        for chunk in chunks:
            for i, value, marker in _evaluate_chunk(spec, chunk):
                cells[i] = (value, marker)
            progress.update(len(chunk))
    else:
        with _make_executor(executor, len(chunks)) as pool:
            futures = {pool.submit(_evaluate_chunk, spec, chunk): chunk for chunk in chunks}
            for future in as_completed(futures):
                # Re-raises configuration errors from the workers
                for i, value, marker in future.result():
                    cells[i] = (value, marker)
                logger.debug(f"Chunk {futures[future]} done")
                progress.update(len(futures[future]))
    progress.close()

    result = _assemble(spec, cells)
    failed = result.failed_cells()
    if failed:
        logger.warning(f"{len(failed)} of {count} cells failed")
    return result
