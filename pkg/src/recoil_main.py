import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

import ladder
import multimode
import observables
import pinem
import results_io
import sweep
import utils
from datastructures import PhysicalConfig, ReducedConfig, ReferenceKind, TwoModeReducedConfig
from engines import get_engine
from engines.ladder_engine import adaptive_truncation, evolve_config
from utils import ConfigError, DomainError, RecoilLadderError

logger = logging.getLogger(__name__)
datefmt = "%Y-%m-%d %H:%M:%S"
fmt = "%(asctime)s.%(msecs)03d|%(levelname)s|%(name)s|%(funcName)s(): %(message)s"


def coupling_scan(value: str) -> np.ndarray:
    parts = utils.comma_separated_floats(value)
    if len(parts) != 3 or parts[2] != int(parts[2]):
        raise argparse.ArgumentTypeError(f"Expected START,STOP,COUNT, got '{value}'")
    start, stop, count = parts
    try:
        return pinem.coupling_grid(start, stop, int(count))
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recoil-ladder",
        description="Exact electron-cavity evolution with recoil: spectra, photon statistics and PINEM",
    )
    parser.add_argument(
        "--debug",
        default=False,
        action="store_true",
        help="Set the logging level to debug",
    )
    subcommands = parser.add_subparsers(dest="command", required=True)

    sigma = subcommands.add_parser("sigma", help="Recoil parameter and effective level count")
    physical = sigma.add_argument_group("Physical Parameters")
    physical.add_argument("--ekin-kev", type=utils.positive_float, required=True, help="Electron kinetic energy in keV")
    physical.add_argument("--eph-ev", type=utils.positive_float, required=True, help="Photon energy in eV")
    physical.add_argument("--length-um", type=utils.positive_float, required=True, help="Interaction length in μm")

    evolve = subcommands.add_parser("evolve", help="Evolve one single-mode configuration")
    evolve.add_argument("config", type=str, help="JSON configuration with mode 'physical' or 'reduced'")
    engine_selection = evolve.add_argument_group("Engine Selection")
    engine_selection.add_argument(
        "--engine",
        choices=utils.ENGINE_NAMES,
        default=utils.EXACT,
        help="Propagation backend",
    )
    engine_selection.add_argument(
        "--adaptive",
        default=False,
        action="store_true",
        help="Double truncation_n_max until the ladder tail is empty",
    )
    engine_selection.add_argument(
        "--tail-tolerance",
        type=utils.positive_float,
        default=utils.DEFAULT_TAIL_TOLERANCE,
        help="Tail population accepted by --adaptive",
    )
    evolve.add_argument(
        "--broadening",
        type=float,
        nargs="?",
        const=utils.DEFAULT_BROADENING,
        help="Gaussian width of the rendered spectrum in units of the photon energy "
        f"({utils.DEFAULT_BROADENING} when given without a value)",
    )
    evolve.add_argument(
        "--coupling-scan",
        type=coupling_scan,
        help="START,STOP,COUNT of couplings for an additional spectrum map",
    )
    evolve.add_argument("--out", type=str, default="results", help="Output directory")

    sweep_parser = subcommands.add_parser("sweep", help="Parameter sweep over one or two axes")
    sweep_parser.add_argument("spec", type=str, help="JSON sweep specification")
    sweep_parser.add_argument(
        "-w",
        "--workers",
        type=int,
        help=f"Worker count (default: ${utils.THREADS_ENV_VAR}, else physical cores)",
    )
    sweep_parser.add_argument(
        "--executor",
        choices=(sweep.PROCESS, sweep.THREAD),
        default=sweep.PROCESS,
        help="Pool used for the workers",
    )
    sweep_parser.add_argument(
        "--progress",
        default=False,
        action="store_true",
        help="Show a progress bar on stderr",
    )
    sweep_parser.add_argument("--out", type=str, default="results", help="Output directory")

    pinem_parser = subcommands.add_parser("pinem", help="Stimulated interaction and revival scan")
    pinem_parser.add_argument("config", type=str, help="JSON configuration with mode 'pinem'")
    pinem_parser.add_argument(
        "--g-scan",
        type=coupling_scan,
        help="START,STOP,COUNT of classical couplings",
    )
    pinem_parser.add_argument(
        "--prominence",
        type=utils.positive_float,
        help="Revival prominence in the windowed zero-level population",
    )
    pinem_parser.add_argument("--out", type=str, default="results", help="Output directory")

    twomode = subcommands.add_parser("twomode", help="Evolve two cavity modes on the occupation lattice")
    twomode.add_argument("config", type=str, help="JSON configuration with mode 'two_mode' or a two-mode 'physical'")
    twomode.add_argument("--out", type=str, default="results", help="Output directory")
    return parser


def parse_args_and_run():
    sys.exit(main())


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.debug:
        logging.basicConfig(level=logging.DEBUG, format=fmt, datefmt=datefmt)
    else:
        logging.basicConfig(level=logging.INFO, format=fmt, datefmt=datefmt)
    logger.debug(f"Script started with arguments: {args}")

    try:
        match args.command:
            case "sigma":
                cmd_sigma(args)
            case "evolve":
                cmd_evolve(args)
            case "sweep":
                cmd_sweep(args)
            case "pinem":
                cmd_pinem(args)
            case "twomode":
                cmd_twomode(args)
    except (ConfigError, DomainError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return utils.EXIT_USAGE
    except RecoilLadderError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return utils.EXIT_RUNTIME_FAILURE
    logger.info(f"Successfully completed {args.command}")
    return utils.EXIT_OK


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sigma(args):
    full = ladder.sigma_full(args.ekin_kev, args.eph_ev, args.length_um)
    simple = ladder.sigma_simple(args.ekin_kev, args.eph_ev, args.length_um)
    print(
        f"sigma_full={full!r} sigma_simple={simple.value!r} "
        f"sigma_simple_valid={str(simple.valid).lower()} n_eff={ladder.n_eff(full)!r}"
    )


def _statistics_document(stats) -> dict:
    return {
        "probabilities": stats.probabilities,
        "mean_photons": stats.mean_photons,
        "g2": stats.g2 if stats.g2 is not None else "undefined",
    }


def _fidelities(state, kinds: list[str]) -> dict:
    document = {}
    for kind in kinds:
        if kind not in {k.value for k in ReferenceKind}:
            raise ConfigError(f"Unknown fidelity reference '{kind}'", ["fidelities"])
        value, reference = observables.best_fidelity(state, kind)
        document[f"{kind}_fidelity"] = value
        document[f"{kind}_phase"] = reference.phase
    return document


def _with_coupling(config, g: float):
    if isinstance(config, PhysicalConfig):
        return dataclasses.replace(config, coupling_g_qu=g, coupling_per_mode=None)
    return dataclasses.replace(config, coupling_g_qu=g)


def cmd_evolve(args):
    loaded = results_io.load_config(args.config)
    config = loaded.config
    if not isinstance(config, (PhysicalConfig, ReducedConfig)) or (
        isinstance(config, PhysicalConfig) and config.mode_count != 1
    ):
        raise ConfigError("evolve runs single-mode 'physical' or 'reduced' configurations", ["mode"])
    options = loaded.options
    engine = get_engine(args.engine)
    out = _out_dir(args.out)

    logger.info(f"Starting {engine.name} evolution of the {loaded.mode} configuration")
    if args.adaptive or options.get("adaptive", False):
        tolerance = options.get("tail_tolerance", args.tail_tolerance)
        converged = adaptive_truncation(config, engine, tolerance)
        state, n_max = converged.state, converged.n_max
    else:
        state, _ = evolve_config(config, engine)
        n_max = config.truncation_n_max

    stats = observables.photon_statistics(state)
    broadening = args.broadening if args.broadening is not None else options.get("broadening", 0.0)
    spectrum = observables.electron_spectrum(state, broadening)
    # Levels the evolution never reached are left out
    populated = spectrum.probabilities > 0
    outputs = [
        results_io.write_spectrum_csv(
            out / "spectrum.csv", spectrum.levels[populated], spectrum.probabilities[populated]
        )
    ]
    if spectrum.is_broadened:
        outputs.append(
            results_io.write_csv(
                out / "spectrum_broadened.csv",
                ["energy", "density"],
                zip(spectrum.energy_grid, spectrum.density),
            )
        )

    statistics = _statistics_document(stats)
    statistics.update(_fidelities(state, list(options.get("fidelities", []))))
    statistics.update(
        {
            "engine": engine.name,
            "n_max": n_max,
            "norm_drift": state.norm_drift,
            "cutoff": observables.cutoff_position(stats),
        }
    )
    outputs.append(results_io.write_json(out / "statistics.json", statistics))

    if args.coupling_scan is not None:
        spectra = []
        for g in args.coupling_scan:
            scanned, _ = evolve_config(_with_coupling(config, float(g)), engine)
            spectra.append((scanned.levels, scanned.probabilities))
        outputs.append(
            results_io.write_spectrum_map_csv(out / "spectrum_map.csv", args.coupling_scan, spectra)
        )

    manifest = results_io.build_manifest("evolve", loaded.raw, loaded.input_hash, outputs)
    results_io.write_manifest(out, manifest)


def cmd_sweep(args):
    spec, input_hash = results_io.load_sweep_spec(args.spec)
    workers = args.workers if args.workers is not None else utils.default_worker_count()
    out = _out_dir(args.out)

    result = sweep.run_sweep(spec, workers, executor=args.executor, show_progress=args.progress)
    outputs = [
        results_io.write_grid_csv(out / "grid.csv", result),
        results_io.write_json(out / "metadata.json", result.metadata),
    ]
    manifest = results_io.build_manifest(
        "sweep",
        {"spec": results_io.to_jsonable(spec), "workers": workers, "executor": args.executor},
        input_hash,
        outputs,
    )
    results_io.write_manifest(out, manifest)


def cmd_pinem(args):
    loaded = results_io.load_config(args.config)
    if loaded.mode != results_io.PINEM:
        raise ConfigError("pinem runs configurations with mode 'pinem'", ["mode"])
    setup = loaded.config
    options = loaded.options
    if args.g_scan is not None:
        g_grid = args.g_scan
    elif "g_scan" in options:
        scan = options["g_scan"]
        try:
            start, stop = float(scan["start"]), float(scan["stop"])
            if "count" in scan:
                g_grid = pinem.coupling_grid(start, stop, int(scan["count"]))
            else:
                g_grid = pinem.stepped_coupling_grid(start, stop, float(scan.get("step", utils.DEFAULT_G_STEP)))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("g_scan needs start, stop and either count or step", ["g_scan"])
    else:
        g_grid = np.array([setup.classical_coupling_g])
    prominence = args.prominence or options.get("prominence", utils.DEFAULT_REVIVAL_PROMINENCE)
    resolution = float(options.get("resolution", utils.REVIVAL_RESOLUTION))
    out = _out_dir(args.out)

    logger.info(f"Starting PINEM scan over {len(g_grid)} couplings")
    levels, rows = pinem.pinem_scan(setup, g_grid)
    trace = pinem.zero_level_trace(levels, rows, resolution)
    revivals = pinem.detect_revivals(g_grid, trace, prominence) if len(g_grid) > 2 else []

    document = {"revivals": revivals, "prominence": prominence, "resolution": resolution}
    if math.isfinite(setup.sigma) and setup.matched_order == 1:
        document["first_revival_estimate"] = pinem.first_revival_estimate(setup.sigma)
        document["second_revival_estimate"] = pinem.second_revival_estimate(setup.sigma)
    outputs = [
        results_io.write_spectrum_map_csv(
            out / "pinem_trace.csv", g_grid, [(levels, row) for row in rows]
        ),
        results_io.write_json(out / "revivals.json", document),
    ]
    manifest = results_io.build_manifest("pinem", loaded.raw, loaded.input_hash, outputs)
    results_io.write_manifest(out, manifest)


def cmd_twomode(args):
    loaded = results_io.load_config(args.config)
    config = loaded.config
    if isinstance(config, TwoModeReducedConfig):
        couplings = config.coupling_per_mode
    elif isinstance(config, PhysicalConfig) and config.mode_count == 2:
        couplings = config.couplings()
    else:
        raise ConfigError("twomode runs 'two_mode' or two-mode 'physical' configurations", ["mode"])
    out = _out_dir(args.out)

    phases = ladder.lattice_phases(config)
    init = multimode.initial_lattice_state(phases.n_max, config.initial_cavity_fock)
    state = multimode.evolve_two_mode(phases, couplings, init)
    twin = multimode.twin_statistics(state)

    statistics = {
        "marginals": [_statistics_document(stats) for stats in twin.marginals],
        "diagonal": twin.diagonal,
        "diagonal_weight": twin.diagonal_weight,
        "tail_ratio": twin.tail_ratio,
        "norm_drift": state.norm_drift,
    }
    statistics.update(_fidelities(state, list(loaded.options.get("fidelities", ["ghz", "twin"]))))
    levels, weights = state.electron_levels()
    outputs = [
        results_io.write_lattice_csv(out / "lattice.csv", state.probabilities),
        results_io.write_spectrum_csv(out / "spectrum.csv", levels, weights),
        results_io.write_json(out / "statistics.json", statistics),
    ]
    manifest = results_io.build_manifest("twomode", loaded.raw, loaded.input_hash, outputs)
    results_io.write_manifest(out, manifest)


if __name__ == "__main__":
    parse_args_and_run()
