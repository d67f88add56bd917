"""Config schema, CSV/JSON artifacts and run manifests."""

import csv
import dataclasses
import datetime
import enum
import hashlib
import json
import logging
import math
import platform
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
import scipy

import utils
from datastructures import (
    MatchedTransition,
    PhysicalConfig,
    PinemSetup,
    ReducedConfig,
    RunManifest,
    SweepAxis,
    SweepResult,
    SweepSpec,
    TwoModeReducedConfig,
)
from utils import ConfigError

logger = logging.getLogger(__name__)

PHYSICAL = "physical"
REDUCED = "reduced"
PINEM = "pinem"
TWO_MODE = "two_mode"

MANIFEST_FILE = "manifest.json"

_SCHEMAS: dict[str, tuple[type, set[str], set[str]]] = {
    PHYSICAL: (
        PhysicalConfig,
        {"electron_kinetic_energy", "photon_energy_per_mode", "interaction_length", "coupling_g_qu"},
        {
            "matched_transition",
            "grating_wavenumber",
            "initial_cavity_fock",
            "truncation_n_max",
            "photon_momentum",
            "coupling_per_mode",
        },
    ),
    REDUCED: (
        ReducedConfig,
        {"sigma", "coupling_g_qu"},
        {"matched_order", "one_photon_mismatch_phase", "initial_cavity_fock", "truncation_n_max"},
    ),
    PINEM: (
        PinemSetup,
        {"sigma"},
        {"classical_coupling_g", "matched_order", "one_photon_mismatch_phase", "sideband_cap"},
    ),
    TWO_MODE: (
        TwoModeReducedConfig,
        {"sigma", "coupling_per_mode", "one_photon_mismatch_phases"},
        {"initial_cavity_fock", "truncation_n_max"},
    ),
}

# Run options that sit next to the physics keys
_OPTIONS = {
    PHYSICAL: {"fidelities", "broadening", "adaptive", "tail_tolerance"},
    REDUCED: {"fidelities", "broadening", "adaptive", "tail_tolerance"},
    PINEM: {"g_scan", "prominence", "resolution"},
    TWO_MODE: {"fidelities", "broadening"},
}

AnyConfig = Union[PhysicalConfig, ReducedConfig, PinemSetup, TwoModeReducedConfig]


@dataclasses.dataclass(frozen=True)
class LoadedConfig:
    mode: str
    config: AnyConfig
    options: dict
    raw: dict
    input_hash: Optional[str] = None


def file_hash(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _parse_float(value: Any) -> Any:
    # JSON has no infinity literal; "inf" marks the recoil-free limit
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    return value


def config_from_dict(document: dict) -> tuple[str, AnyConfig, dict]:
    if not isinstance(document, dict):
        raise ConfigError("Configuration must be a JSON object")
    mode = document.get("mode")
    if mode not in _SCHEMAS:
        raise ConfigError(
            f"Unknown mode {mode!r}; expected one of {', '.join(_SCHEMAS)}", ["mode"]
        )
    config_type, required, optional = _SCHEMAS[mode]
    keys = set(document) - {"mode"}
    options = _OPTIONS[mode]
    missing = required - keys
    unknown = keys - required - optional - options
    if missing or unknown:
        raise ConfigError(
            "Configuration schema violation (missing or unknown keys)", sorted(missing | unknown)
        )

    arguments = {k: _parse_float(document[k]) for k in keys & (required | optional)}
    if "matched_transition" in arguments:
        try:
            arguments["matched_transition"] = MatchedTransition(arguments["matched_transition"])
        except ValueError:
            raise ConfigError("Unknown matched transition", ["matched_transition"])
    try:
        config = config_type(**arguments)
    except (TypeError, ValueError) as e:
        if isinstance(e, utils.RecoilLadderError):
            raise
        raise ConfigError(f"Invalid value types in configuration ({e})", sorted(arguments))
    return mode, config, {k: document[k] for k in keys & options}


def load_config(path: Union[str, Path]) -> LoadedConfig:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}")
    mode, config, options = config_from_dict(document)
    logger.debug(f"Loaded {mode} configuration from {path}")
    return LoadedConfig(mode, config, options, document, file_hash(path))


def sweep_spec_from_dict(document: dict) -> SweepSpec:
    allowed = {"base", "axes", "engine", "observable"}
    if not isinstance(document, dict):
        raise ConfigError("Sweep specification must be a JSON object")
    missing = {"base", "axes"} - set(document)
    unknown = set(document) - allowed
    if missing or unknown:
        raise ConfigError("Sweep schema violation (missing or unknown keys)", sorted(missing | unknown))
    _, base, _ = config_from_dict(document["base"])

    axes = []
    for i, axis in enumerate(document["axes"]):
        axis_keys = {"name", "start", "stop", "count"}
        if not isinstance(axis, dict) or axis_keys - set(axis) or set(axis) - axis_keys - {"scale"}:
            raise ConfigError(f"Axis {i} needs name, start, stop, count and optionally scale", [f"axes[{i}]"])
        axes.append(
            SweepAxis(
                str(axis["name"]),
                float(axis["start"]),
                float(axis["stop"]),
                int(axis["count"]),
                str(axis.get("scale", "linear")),
            )
        )
    return SweepSpec(
        axes=tuple(axes),
        base_config=base,
        engine=document.get("engine", utils.EXACT),
        observable=document.get("observable", "g2"),
    )


def load_sweep_spec(path: Union[str, Path]) -> tuple[SweepSpec, str]:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}")
    return sweep_spec_from_dict(document), file_hash(path)


def to_jsonable(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return None
        return value
    return value


def format_value(value: Any) -> str:
    """Shortest text that parses back to the same number."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Union[str, Path], header: list[str], rows: Iterable[Iterable[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.info(f"Wrote {path}")
    return path


def write_json(path: Union[str, Path], document: Any) -> Path:
    path = Path(path)
    with open(path, "w") as f:
        json.dump(to_jsonable(document), f, indent=2, allow_nan=False)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path


def write_spectrum_csv(path: Union[str, Path], levels: np.ndarray, probabilities: np.ndarray) -> Path:
    return write_csv(path, ["m", "probability"], zip(levels, probabilities))


def write_spectrum_map_csv(
    path: Union[str, Path], couplings: np.ndarray, spectra: list[tuple[np.ndarray, np.ndarray]]
) -> Path:
    rows = (
        (g, m, p)
        for g, (levels, probabilities) in zip(couplings, spectra)
        for m, p in zip(levels, probabilities)
    )
    return write_csv(path, ["g", "m", "probability"], rows)


def write_lattice_csv(path: Union[str, Path], probabilities: np.ndarray) -> Path:
    side = probabilities.shape[0]
    rows = ((n1, n2, probabilities[n1, n2]) for n1 in range(side) for n2 in range(side))
    return write_csv(path, ["n1", "n2", "probability"], rows)


def write_grid_csv(path: Union[str, Path], result: SweepResult) -> Path:
    header = list(result.axis_names)
    if result.levels is not None:
        header.append("m")
    header.append("value")

    def rows():
        for position in np.ndindex(*result.shape):
            coordinates = [result.axis_values[i][k] for i, k in enumerate(position)]
            marker = str(result.markers[position])
            if result.levels is None:
                yield coordinates + [marker or result.values[position]]
                continue
            for j, m in enumerate(result.levels):
                yield coordinates + [m, marker or result.values[position + (j,)]]

    return write_csv(path, header, rows())


def read_grid_csv(path: Union[str, Path], metadata: Optional[dict] = None) -> SweepResult:
    """Rebuild the sweep grid written by write_grid_csv."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        records = list(reader)
    has_levels = len(header) >= 2 and header[-2] == "m"
    axis_count = len(header) - (2 if has_levels else 1)
    axis_names = tuple(header[:axis_count])

    axis_values = []
    for i in range(axis_count):
        seen: dict[float, None] = {}
        for record in records:
            seen.setdefault(float(record[i]), None)
        axis_values.append(np.array(list(seen)))
    shape = tuple(len(v) for v in axis_values)
    lookup = [{v: k for k, v in enumerate(values)} for values in axis_values]

    levels = None
    if has_levels:
        levels = np.array(sorted({int(record[axis_count]) for record in records}))
        values = np.zeros(shape + (len(levels),))
    else:
        values = np.zeros(shape)
    markers = np.full(shape, "", dtype=object)

    for record in records:
        position = tuple(lookup[i][float(record[i])] for i in range(axis_count))
        raw = record[-1]
        try:
            number = float(raw)
        except ValueError:
            markers[position] = raw
            number = math.nan
        if has_levels:
            values[position + (int(record[axis_count]) - levels[0],)] = number
        else:
            values[position] = number
    return SweepResult(
        axis_names, tuple(axis_values), values, markers.astype(str), levels, metadata or {}
    )


def versions() -> dict:
    return {
        utils.PACKAGE_NAME: utils.package_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def build_manifest(
    subcommand: str,
    config: Any,
    input_hash: Optional[str],
    outputs: list[Path],
) -> RunManifest:
    return RunManifest(
        subcommand=subcommand,
        config=to_jsonable(config),
        input_hash=input_hash,
        outputs=tuple(p.name for p in outputs),
        versions=versions(),
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )


def write_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    missing = [name for name in manifest.outputs if not (Path(out_dir) / name).is_file()]
    if missing:
        raise utils.RecoilLadderError(f"Outputs missing before the manifest was written: {missing}")
    return write_json(Path(out_dir) / MANIFEST_FILE, manifest.to_dict())
