import csv
import io
import json
import math
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np

import pinem
import utils
from recoil_main import main


def write_config(directory: str, document: dict, name: str = "config.json") -> str:
    path = Path(directory) / name
    path.write_text(json.dumps(document))
    return str(path)


def read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestSigmaCommand(unittest.TestCase):
    def test_prints_sigma(self):
        stdout = io.StringIO()
        with redirect_stdout(stdout):
            code = main(["sigma", "--ekin-kev", "5", "--eph-ev", "2.33", "--length-um", "400"])
        self.assertEqual(code, utils.EXIT_OK)
        fields = dict(item.split("=") for item in stdout.getvalue().split())
        self.assertAlmostEqual(float(fields["sigma_full"]), 0.8047, delta=1e-3)
        self.assertEqual(fields["sigma_simple_valid"], "true")
        self.assertIn("n_eff", fields)

    def test_missing_flag_is_a_usage_error(self):
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as context:
                main(["sigma", "--ekin-kev", "5", "--eph-ev", "2.33"])
        self.assertEqual(context.exception.code, utils.EXIT_USAGE)

    def test_non_positive_value_is_a_domain_error(self):
        stderr = io.StringIO()
        with redirect_stderr(stderr):
            with self.assertRaises(SystemExit) as context:
                main(["sigma", "--ekin-kev", "5", "--eph-ev", "0", "--length-um", "400"])
        self.assertEqual(context.exception.code, utils.EXIT_USAGE)
        self.assertIn("Domain error", stderr.getvalue())


class TestEvolveCommand(unittest.TestCase):
    def test_no_coupling(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "reduced", "sigma": 1.0, "coupling_g_qu": 0.0})
            out = Path(tmp) / "out"
            self.assertEqual(main(["evolve", config, "--out", str(out)]), utils.EXIT_OK)
            self.assertEqual((out / "spectrum.csv").read_text(), "m,probability\n0,1.0\n")
            statistics = json.loads((out / "statistics.json").read_text())
        self.assertEqual(statistics["g2"], "undefined")
        self.assertEqual(statistics["mean_photons"], 0.0)

    def test_bell_state(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(
                tmp,
                {
                    "mode": "reduced",
                    "sigma": 0.05,
                    "coupling_g_qu": math.pi / 4,
                    "truncation_n_max": 4,
                    "fidelities": ["bell"],
                },
            )
            out = Path(tmp) / "out"
            self.assertEqual(main(["evolve", config, "--out", str(out)]), utils.EXIT_OK)
            statistics = json.loads((out / "statistics.json").read_text())
            manifest = json.loads((out / "manifest.json").read_text())
        self.assertGreater(statistics["bell_fidelity"], 0.99)
        self.assertEqual(statistics["engine"], utils.EXACT)
        self.assertEqual(manifest["subcommand"], "evolve")
        self.assertEqual(sorted(manifest["outputs"]), ["spectrum.csv", "statistics.json"])

    def test_engines_agree(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "reduced", "sigma": 2.0, "coupling_g_qu": 0.5})
            means = []
            for engine in ("exact", "ode"):
                out = Path(tmp) / engine
                self.assertEqual(main(["evolve", config, "--engine", engine, "--out", str(out)]), 0)
                means.append(json.loads((out / "statistics.json").read_text())["mean_photons"])
        self.assertAlmostEqual(means[0], means[1], delta=1e-6)

    def test_broadened_spectrum(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "reduced", "sigma": 2.0, "coupling_g_qu": 0.5})
            out = Path(tmp) / "out"
            self.assertEqual(main(["evolve", config, "--broadening", "0.2", "--out", str(out)]), 0)
            rows = read_rows(out / "spectrum_broadened.csv")
        energies = np.array([float(r["energy"]) for r in rows])
        density = np.array([float(r["density"]) for r in rows])
        self.assertAlmostEqual(float(np.sum(density) * (energies[1] - energies[0])), 1.0, delta=1e-3)

    def test_default_broadening(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "reduced", "sigma": 2.0, "coupling_g_qu": 0.5})
            out = Path(tmp) / "out"
            self.assertEqual(main(["evolve", config, "--broadening", "--out", str(out)]), 0)
            rows = read_rows(out / "spectrum_broadened.csv")
        # The grid extends four widths past the outermost level
        self.assertAlmostEqual(float(rows[-1]["energy"]), 4 * utils.DEFAULT_BROADENING, delta=0.01)

    def test_schema_violation(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "reduced", "sigma": 1.0, "coupling": 0.1})
            with self.assertLogs("recoil_main", level="ERROR") as logs:
                code = main(["evolve", config, "--out", str(Path(tmp) / "out")])
        self.assertEqual(code, utils.EXIT_USAGE)
        self.assertIn("coupling_g_qu", logs.output[0])

    def test_overflow_is_a_runtime_failure(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(
                tmp, {"mode": "reduced", "sigma": 1e6, "coupling_g_qu": 3.0, "truncation_n_max": 8}
            )
            with self.assertLogs("recoil_main", level="ERROR") as logs:
                code = main(["evolve", config, "--out", str(Path(tmp) / "out")])
        self.assertEqual(code, utils.EXIT_RUNTIME_FAILURE)
        self.assertIn("TruncationOverflowError", logs.output[0])

    def test_adaptive_recovers_from_overflow(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(
                tmp, {"mode": "reduced", "sigma": 1e6, "coupling_g_qu": 3.0, "truncation_n_max": 8}
            )
            out = Path(tmp) / "out"
            self.assertEqual(main(["evolve", config, "--adaptive", "--out", str(out)]), utils.EXIT_OK)
            statistics = json.loads((out / "statistics.json").read_text())
        self.assertGreater(statistics["n_max"], 8)
        self.assertAlmostEqual(statistics["mean_photons"], 9.0, delta=0.1)

    def test_coupling_scan(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "reduced", "sigma": 2.0, "coupling_g_qu": 0.5})
            out = Path(tmp) / "out"
            code = main(["evolve", config, "--coupling-scan", "0.2,1.0,3", "--out", str(out)])
            self.assertEqual(code, utils.EXIT_OK)
            rows = read_rows(out / "spectrum_map.csv")
        totals: dict[float, float] = {}
        for row in rows:
            totals[float(row["g"])] = totals.get(float(row["g"]), 0.0) + float(row["probability"])
        np.testing.assert_allclose(sorted(totals), [0.2, 0.6, 1.0])
        for total in totals.values():
            self.assertAlmostEqual(total, 1.0, delta=1e-9)

    def test_rejects_two_mode_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(
                tmp,
                {
                    "mode": "two_mode",
                    "sigma": 1.0,
                    "coupling_per_mode": [0.1, 0.1],
                    "one_photon_mismatch_phases": [-10, -10],
                },
            )
            with self.assertLogs("recoil_main", level="ERROR"):
                code = main(["evolve", config, "--out", str(Path(tmp) / "out")])
        self.assertEqual(code, utils.EXIT_USAGE)


class TestPinemCommand(unittest.TestCase):
    def test_recoil_free_matches_bessel(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "pinem", "sigma": "inf", "classical_coupling_g": 1.2})
            out = Path(tmp) / "out"
            self.assertEqual(main(["pinem", config, "--out", str(out)]), utils.EXIT_OK)
            rows = read_rows(out / "pinem_trace.csv")
            revivals = json.loads((out / "revivals.json").read_text())
        levels = np.array([int(r["m"]) for r in rows])
        measured = np.array([float(r["probability"]) for r in rows])
        np.testing.assert_allclose(measured, pinem.bessel_spectrum(1.2, levels), atol=1e-8)
        self.assertEqual(revivals["revivals"], [])
        self.assertNotIn("first_revival_estimate", revivals)

    def test_revival_scan(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "pinem", "sigma": 0.05, "g_scan": {"start": 0, "stop": 7}})
            out = Path(tmp) / "out"
            self.assertEqual(main(["pinem", config, "--out", str(out)]), 0)
            rows = read_rows(out / "pinem_trace.csv")
            revivals = json.loads((out / "revivals.json").read_text())
        self.assertEqual(len(revivals["revivals"]), 2)
        self.assertAlmostEqual(revivals["revivals"][0], math.pi, delta=0.05)
        self.assertIn("first_revival_estimate", revivals)
        self.assertEqual(len({row["g"] for row in rows}), 701)
        self.assertEqual(revivals["resolution"], utils.REVIVAL_RESOLUTION)

    def test_recoil_revival_skips_bessel_lobes(self):
        with tempfile.TemporaryDirectory() as tmp:
            document = {
                "mode": "pinem",
                "sigma": 5.0,
                "sideband_cap": 30,
                "g_scan": {"start": 0, "stop": 8, "count": 401},
            }
            config = write_config(tmp, document)
            out = Path(tmp) / "out"
            self.assertEqual(main(["pinem", config, "--out", str(out)]), 0)
            revivals = json.loads((out / "revivals.json").read_text())
        self.assertEqual(len(revivals["revivals"]), 1)
        estimate = revivals["first_revival_estimate"]
        self.assertLess(abs(revivals["revivals"][0] - estimate), 0.15 * estimate)

    def test_empty_scan_is_a_usage_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(tmp, {"mode": "pinem", "sigma": 1.0})
            with redirect_stderr(io.StringIO()):
                with self.assertRaises(SystemExit) as context:
                    main(["pinem", config, "--g-scan", "0,1,0", "--out", str(Path(tmp) / "out")])
        self.assertEqual(context.exception.code, utils.EXIT_USAGE)


class TestSweepCommand(unittest.TestCase):
    spec = {
        "base": {"mode": "reduced", "sigma": 1.0, "coupling_g_qu": 0.3},
        "axes": [
            {"name": "sigma", "start": 0.5, "stop": 4.0, "count": 3},
            {"name": "coupling_g_qu", "start": 0.0, "stop": 0.6, "count": 2},
        ],
        "observable": "g2",
    }

    def run_sweep(self, tmp: str, workers: int) -> Path:
        spec = write_config(tmp, self.spec, "sweep.json")
        out = Path(tmp) / f"out{workers}"
        code = main(["sweep", spec, "--workers", str(workers), "--executor", "thread", "--out", str(out)])
        self.assertEqual(code, utils.EXIT_OK)
        return out

    def test_writes_artifacts(self):
        with tempfile.TemporaryDirectory() as tmp:
            out = self.run_sweep(tmp, 1)
            rows = read_rows(out / "grid.csv")
            metadata = json.loads((out / "metadata.json").read_text())
            manifest = json.loads((out / "manifest.json").read_text())
        self.assertEqual(len(rows), 6)
        self.assertEqual(rows[0]["value"], utils.UNDEFINED)
        self.assertEqual(metadata["observable"], "g2")
        self.assertNotIn("timestamp", metadata)
        self.assertEqual(sorted(manifest["outputs"]), ["grid.csv", "metadata.json"])

    def test_worker_count_does_not_change_output(self):
        with tempfile.TemporaryDirectory() as tmp:
            serial = self.run_sweep(tmp, 1)
            parallel = self.run_sweep(tmp, 2)
            for name in ("grid.csv", "metadata.json"):
                self.assertEqual((serial / name).read_bytes(), (parallel / name).read_bytes())

    def test_unknown_parameter_is_a_usage_error(self):
        document = dict(self.spec, axes=[{"name": "bogus", "start": 0.0, "stop": 1.0, "count": 2}])
        with tempfile.TemporaryDirectory() as tmp:
            spec = write_config(tmp, document, "sweep.json")
            with self.assertLogs("recoil_main", level="ERROR"):
                code = main(["sweep", spec, "--workers", "1", "--out", str(Path(tmp) / "out")])
        self.assertEqual(code, utils.EXIT_USAGE)


class TestTwoModeCommand(unittest.TestCase):
    def test_writes_lattice(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = write_config(
                tmp,
                {
                    "mode": "two_mode",
                    "sigma": 0.001,
                    "coupling_per_mode": [12.5, 12.5],
                    "one_photon_mismatch_phases": [-400, -400],
                    "truncation_n_max": 4,
                },
            )
            out = Path(tmp) / "out"
            self.assertEqual(main(["twomode", config, "--out", str(out)]), utils.EXIT_OK)
            rows = read_rows(out / "lattice.csv")
            statistics = json.loads((out / "statistics.json").read_text())
        self.assertEqual(len(rows), 25)
        self.assertAlmostEqual(sum(float(r["probability"]) for r in rows), 1.0, delta=1e-9)
        self.assertGreater(statistics["diagonal_weight"], 0.95)
        self.assertIn("ghz_fidelity", statistics)
        self.assertIn("twin_fidelity", statistics)


if __name__ == "__main__":
    unittest.main()
