#!/usr/bin/env python3
"""End-to-end checks of the kamrev2 binary: exit codes, schema validity, determinism."""

import argparse
import csv
import filecmp
import json
import os
import shutil
import subprocess
import sys
import unittest
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

ARGS = None

SCHEMA_FOR = {
    "validation.json": "validation",
    "spectrum.json": "spectrum",
    "dioph.json": "dioph",
    "measure.json": "measure",
    "transform.json": "transform",
    "family.json": "family",
    "run_manifest.json": "run_manifest",
}


def load_registry(schema_dir):
    resources = []
    for path in sorted(Path(schema_dir).glob("*.schema.json")):
        doc = json.loads(path.read_text())
        resources.append((path.name, Resource.from_contents(doc)))
        resources.append((doc["$id"], Resource.from_contents(doc)))
    return Registry().with_resources(resources)


class CliEndToEnd(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.work = Path(ARGS.work)
        shutil.rmtree(cls.work, ignore_errors=True)
        cls.work.mkdir(parents=True)
        cls.models = Path(ARGS.models)
        cls.schemas = Path(ARGS.schemas)
        cls.registry = load_registry(cls.schemas)

    def validator(self, name):
        schema = json.loads((self.schemas / f"{name}.schema.json").read_text())
        return jsonschema.Draft202012Validator(schema, registry=self.registry)

    def run_cli(self, out, *args, env=None):
        cmd = [ARGS.binary, *args, "--out", str(self.work / out)]
        full_env = dict(os.environ, **(env or {}))
        return subprocess.run(cmd, capture_output=True, text=True, env=full_env, timeout=600)

    def check_outputs(self, out):
        directory = self.work / out
        manifest = json.loads((directory / "run_manifest.json").read_text())
        for name in [*manifest["outputs"], "run_manifest.json"]:
            if name in SCHEMA_FOR:
                doc = json.loads((directory / name).read_text())
                self.validator(SCHEMA_FOR[name]).validate(doc)
        return manifest

    def model(self, name):
        return str(self.models / f"{name}.json")

    def test_bundled_models_match_schema(self):
        v = self.validator("model")
        for path in sorted(self.models.glob("*.json")):
            with self.subTest(model=path.name):
                v.validate(json.loads(path.read_text()))

    def test_validate_forced_oscillator(self):
        r = self.run_cli("validate", "validate", "--model", self.model("forced_oscillator"))
        self.assertEqual(r.returncode, 0, r.stderr)
        manifest = self.check_outputs("validate")
        self.assertEqual(manifest["exit_code"], 0)
        self.assertIn("validation.json", manifest["outputs"])

    def test_every_command_emits_schema_valid_outputs(self):
        runs = [
            ("classify", ["classify", "--model", self.model("floquet")]),
            ("dioph_check", ["dioph", "check", "--model", self.model("zero_perturbation")]),
            ("dioph_measure", ["dioph", "measure", "--model", self.model("zero_perturbation"), "--grid", "101"]),
            ("measure", ["measure", "--model", self.model("zero_perturbation"), "--grid", "51"]),
            ("solve", ["solve", "--model", self.model("floquet")]),
            ("solve_coupled", ["solve", "--model", self.model("coupled")]),
            ("sweep", ["sweep", "--model", self.model("eps_family"), "--grid", "41"]),
        ]
        for out, args in runs:
            with self.subTest(run=out):
                r = self.run_cli(out, *args)
                self.assertEqual(r.returncode, 0, r.stderr)
                self.check_outputs(out)

    def test_zero_perturbation_theta_column_is_zero(self):
        r = self.run_cli("sweep_zero", "sweep", "--model", self.model("zero_perturbation"), "--grid", "101")
        self.assertEqual(r.returncode, 0, r.stderr)
        with open(self.work / "sweep_zero" / "theta.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        self.assertGreater(len(rows), 0)
        self.assertTrue(all(float(row["theta_0"]) == 0.0 for row in rows))

    def test_csv_headers(self):
        r = self.run_cli("sweep_csv", "sweep", "--model", self.model("eps_family"), "--grid", "21")
        self.assertEqual(r.returncode, 0, r.stderr)
        d = self.work / "sweep_csv"
        heads = {name: (d / name).read_text().splitlines()[0] for name in
                 ["measures.csv", "theta.csv", "family_long.csv"]}
        self.assertEqual(heads["measures.csv"], "gamma,fraction_in_Gamma,fraction_in_Gamma_dblprime")
        self.assertEqual(heads["theta.csv"], "mu_0,theta_0")
        self.assertEqual(heads["family_long.csv"], "record,mu_0,quantity,component,value")

    def test_repeated_runs_are_bit_identical(self):
        args = ["sweep", "--model", self.model("eps_family"), "--grid", "31", "--seed", "7"]
        a = self.run_cli("det_a", *args, "--threads", "1")
        b = self.run_cli("det_b", *args, "--threads", "3")
        self.assertEqual(a.returncode, 0, a.stderr)
        self.assertEqual(b.returncode, 0, b.stderr)
        ma = json.loads((self.work / "det_a" / "run_manifest.json").read_text())
        mb = json.loads((self.work / "det_b" / "run_manifest.json").read_text())
        self.assertEqual(ma["outputs"], mb["outputs"])
        for name in ma["outputs"]:
            self.assertTrue(filecmp.cmp(self.work / "det_a" / name, self.work / "det_b" / name, shallow=False))

    def test_numeric_flags_echo_into_manifest(self):
        r = self.run_cli("echo", "dioph", "measure", "--model", self.model("zero_perturbation"), "--tau", "2.5",
                         "--gamma", "0.001", "--kmax", "50", "--grid", "21", "--seed", "3", "--threads", "2")
        self.assertEqual(r.returncode, 0, r.stderr)
        m = self.check_outputs("echo")
        self.assertEqual(m["flags"], {"tau": "2.5", "gamma": "0.001", "kmax": "50", "grid": "21"})
        self.assertEqual(m["parameters"]["tau"], 2.5)
        self.assertEqual(m["parameters"]["gamma"], 0.001)
        self.assertEqual(m["parameters"]["kmax"], 50)
        self.assertEqual(m["seed"], 3)
        self.assertEqual(m["threads"], 2)

    def test_rational_frequency_exits_with_precondition_code(self):
        r = self.run_cli("rational", "dioph", "check", "--model", self.model("rational_omega"))
        self.assertEqual(r.returncode, 4)
        doc = json.loads((self.work / "rational" / "dioph.json").read_text())
        self.assertEqual(doc["verdict"], "fail")
        self.assertTrue(doc["worst_k"])
        self.check_outputs("rational")

    def test_bad_override_exits_with_validation_code(self):
        r = self.run_cli("bad_set", "solve", "--model", self.model("floquet"), "--set", "bogus=1")
        self.assertEqual(r.returncode, 2)
        m = self.check_outputs("bad_set")
        self.assertEqual(m["error"]["kind"], "Usage")

    def test_bad_number_exits_with_validation_code(self):
        r = self.run_cli("bad_num", "solve", "--model", self.model("floquet"), "--tau", "abc")
        self.assertEqual(r.returncode, 2)

    def test_malformed_model_is_reported(self):
        bad = self.work / "bad_model.json"
        bad.write_text('{"dims": {"n": 0}}')
        r = self.run_cli("bad_model", "validate", "--model", str(bad))
        self.assertEqual(r.returncode, 2)
        doc = json.loads((self.work / "bad_model" / "validation.json").read_text())
        self.assertFalse(doc["valid"])
        self.check_outputs("bad_model")

    def test_log_level_from_environment(self):
        r = self.run_cli("log", "validate", "--model", self.model("floquet"), env={"KAMREV2_LOG": "debug"})
        self.assertEqual(r.returncode, 0, r.stderr)

    def test_version_flag(self):
        r = subprocess.run([ARGS.binary, "--version"], capture_output=True, text=True)
        self.assertEqual(r.returncode, 0)
        self.assertTrue(r.stdout.strip())


def main():
    global ARGS
    parser = argparse.ArgumentParser()
    parser.add_argument("--binary", required=True)
    parser.add_argument("--models", required=True)
    parser.add_argument("--schemas", required=True)
    parser.add_argument("--work", required=True)
    ARGS, rest = parser.parse_known_args()
    unittest.main(argv=[sys.argv[0], *rest], verbosity=2)


if __name__ == "__main__":
    main()
