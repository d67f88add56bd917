import json
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

import results_io
import utils
from datastructures import (
    MatchedTransition,
    PhysicalConfig,
    PinemSetup,
    ReducedConfig,
    SweepResult,
    TwoModeReducedConfig,
)
from utils import ConfigError


class TestConfigSchema(unittest.TestCase):
    def test_reduced(self):
        mode, config, options = results_io.config_from_dict(
            {"mode": "reduced", "sigma": 0.5, "coupling_g_qu": 0.3, "fidelities": ["bell"]}
        )
        self.assertEqual(mode, results_io.REDUCED)
        self.assertEqual(config, ReducedConfig(sigma=0.5, coupling_g_qu=0.3))
        self.assertEqual(options, {"fidelities": ["bell"]})

    def test_physical(self):
        _, config, _ = results_io.config_from_dict(
            {
                "mode": "physical",
                "electron_kinetic_energy": 5.0,
                "photon_energy_per_mode": 2.33,
                "interaction_length": 400.0,
                "coupling_g_qu": 0.2,
                "matched_transition": "two_photon_emission",
            }
        )
        self.assertIsInstance(config, PhysicalConfig)
        self.assertIs(config.matched_transition, MatchedTransition.TWO_PHOTON_EMISSION)

    def test_two_mode_lists(self):
        _, config, _ = results_io.config_from_dict(
            {
                "mode": "two_mode",
                "sigma": 1.0,
                "coupling_per_mode": [0.5, 0.5],
                "one_photon_mismatch_phases": [-10, -20],
            }
        )
        self.assertIsInstance(config, TwoModeReducedConfig)
        self.assertEqual(config.one_photon_mismatch_phases, (-10.0, -20.0))

    def test_missing_and_unknown_keys_reported_together(self):
        with self.assertRaises(ConfigError) as context:
            results_io.config_from_dict({"mode": "reduced", "sigma": 1.0, "bogus": 2})
        self.assertEqual(context.exception.offending_keys, ["bogus", "coupling_g_qu"])

    def test_unknown_mode(self):
        with self.assertRaises(ConfigError) as context:
            results_io.config_from_dict({"mode": "classical", "sigma": 1.0})
        self.assertEqual(context.exception.offending_keys, ["mode"])

    def test_unknown_transition(self):
        with self.assertRaises(ConfigError) as context:
            results_io.config_from_dict(
                {
                    "mode": "physical",
                    "electron_kinetic_energy": 5.0,
                    "photon_energy_per_mode": 2.33,
                    "interaction_length": 400.0,
                    "coupling_g_qu": 0.2,
                    "matched_transition": "sideways",
                }
            )
        self.assertEqual(context.exception.offending_keys, ["matched_transition"])

    def test_wrong_value_type(self):
        with self.assertRaises(ConfigError):
            results_io.config_from_dict({"mode": "reduced", "sigma": "wide", "coupling_g_qu": 0.3})

    def test_invalid_value(self):
        with self.assertRaises(ConfigError) as context:
            results_io.config_from_dict({"mode": "reduced", "sigma": -1.0, "coupling_g_qu": 0.3})
        self.assertEqual(context.exception.offending_keys, ["sigma"])

    def test_infinite_sigma(self):
        _, setup, _ = results_io.config_from_dict({"mode": "pinem", "sigma": "inf"})
        self.assertIsInstance(setup, PinemSetup)
        self.assertTrue(math.isinf(setup.sigma))

    def test_load_config_hashes_input(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps({"mode": "reduced", "sigma": 1.0, "coupling_g_qu": 0.1}))
            loaded = results_io.load_config(path)
            self.assertEqual(loaded.input_hash, results_io.file_hash(path))
            self.assertEqual(len(loaded.input_hash), 64)
            self.assertEqual(loaded.raw["sigma"], 1.0)

    def test_load_config_rejects_bad_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text("{mode: reduced")
            with self.assertRaises(ConfigError):
                results_io.load_config(path)
            with self.assertRaises(ConfigError):
                results_io.load_config(Path(tmp) / "absent.json")


class TestSweepSpecLoading(unittest.TestCase):
    def test_load_from_file(self):
        document = {
            "base": {"mode": "reduced", "sigma": 1.0, "coupling_g_qu": 0.2},
            "axes": [{"name": "sigma", "start": 0.1, "stop": 10, "count": 5, "scale": "log"}],
            "observable": "mean_photons",
        }
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "sweep.json"
            path.write_text(json.dumps(document))
            spec, input_hash = results_io.load_sweep_spec(path)
        self.assertEqual(spec.shape, (5,))
        self.assertEqual(spec.axes[0].scale, "log")
        self.assertEqual(spec.engine, utils.EXACT)
        self.assertEqual(spec.observable, "mean_photons")
        self.assertEqual(len(input_hash), 64)

    def test_schema_violation(self):
        with self.assertRaises(ConfigError) as context:
            results_io.sweep_spec_from_dict({"axes": [], "workers": 2})
        self.assertEqual(context.exception.offending_keys, ["base", "workers"])

    def test_incomplete_axis(self):
        with self.assertRaises(ConfigError):
            results_io.sweep_spec_from_dict(
                {
                    "base": {"mode": "reduced", "sigma": 1.0, "coupling_g_qu": 0.2},
                    "axes": [{"name": "sigma", "start": 0.1}],
                }
            )


class TestArtifacts(unittest.TestCase):
    def test_csv_uses_lf_and_shortest_repr(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = results_io.write_spectrum_csv(
                Path(tmp) / "spectrum.csv", np.array([-1, 0]), np.array([1 / 3, 2 / 3])
            )
            data = path.read_bytes()
        self.assertNotIn(b"\r", data)
        self.assertEqual(data.decode(), f"m,probability\n-1,{1 / 3!r}\n0,{2 / 3!r}\n")

    def test_grid_round_trip(self):
        markers = np.array([["", utils.UNDEFINED], ["ERROR:TruncationOverflowError", ""]])
        result = SweepResult(
            axis_names=("sigma", "coupling_g_qu"),
            axis_values=(np.array([0.1, 0.2]), np.array([1.0, 3.0])),
            values=np.array([[0.25, np.nan], [np.nan, 1 / 7]]),
            markers=markers,
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = results_io.write_grid_csv(Path(tmp) / "grid.csv", result)
            lines = path.read_text().splitlines()
            loaded = results_io.read_grid_csv(path)
        self.assertEqual(lines[0], "sigma,coupling_g_qu,value")
        self.assertEqual(lines[2], "0.1,3.0,UNDEFINED")
        self.assertEqual(loaded.axis_names, result.axis_names)
        np.testing.assert_array_equal(loaded.markers, markers)
        np.testing.assert_array_equal(loaded.values, result.values)

    def test_spectrum_grid_round_trip(self):
        result = SweepResult(
            axis_names=("coupling_g_qu",),
            axis_values=(np.array([0.5, 1.0]),),
            values=np.array([[0.2, 0.8], [np.nan, np.nan]]),
            markers=np.array(["", "ERROR:TruncationOverflowError"]),
            levels=np.array([-1, 0]),
        )
        with tempfile.TemporaryDirectory() as tmp:
            loaded = results_io.read_grid_csv(results_io.write_grid_csv(Path(tmp) / "grid.csv", result))
        np.testing.assert_array_equal(loaded.levels, result.levels)
        np.testing.assert_array_equal(loaded.values, result.values)
        self.assertEqual(loaded.failed_cells(), [(1,)])

    def test_json_values(self):
        document = results_io.to_jsonable(
            {
                "sigma": math.inf,
                "g2": math.nan,
                "kind": MatchedTransition.ONE_PHOTON_EMISSION,
                "levels": np.arange(3),
                "config": ReducedConfig(sigma=1.0, coupling_g_qu=0.5),
            }
        )
        self.assertEqual(document["sigma"], "inf")
        self.assertIsNone(document["g2"])
        self.assertEqual(document["kind"], MatchedTransition.ONE_PHOTON_EMISSION.value)
        self.assertEqual(document["levels"], [0, 1, 2])
        self.assertEqual(document["config"]["coupling_g_qu"], 0.5)
        json.dumps(document, allow_nan=False)


class TestManifest(unittest.TestCase):
    def test_manifest_lists_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            output = results_io.write_json(Path(tmp) / "statistics.json", {"g2": 1.0})
            manifest = results_io.build_manifest("evolve", {"mode": "reduced"}, "abc", [output])
            path = results_io.write_manifest(tmp, manifest)
            document = json.loads(path.read_text())
        self.assertEqual(path.name, results_io.MANIFEST_FILE)
        self.assertEqual(document["subcommand"], "evolve")
        self.assertEqual(document["outputs"], ["statistics.json"])
        self.assertEqual(document["input_hash"], "abc")
        self.assertIn("numpy", document["versions"])
        self.assertTrue(document["timestamp"])

    def test_missing_output(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = results_io.build_manifest("evolve", {}, None, [Path(tmp) / "absent.csv"])
            with self.assertRaises(utils.RecoilLadderError):
                results_io.write_manifest(tmp, manifest)
            self.assertFalse((Path(tmp) / results_io.MANIFEST_FILE).exists())


if __name__ == "__main__":
    unittest.main()
