import os
import json
import tempfile

import numpy as np
import pandas as pd
from unittest import TestCase
from unittest.mock import Mock, patch, create_autospec

import utils
from run import main
from data import META_SUFFIX, read_snapshot
from latent import IntegrationError
from tests.mock_data import get_experiment_dict


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def bundle_files(path):
    return sorted(os.path.relpath(os.path.join(root, name), path)
                  for root, _, names in os.walk(path) for name in names)


class TestMain(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.tmp.name, "out")
        adict = get_experiment_dict(self.out)
        del adict["run"]
        self.config = os.path.join(self.tmp.name, "config.json")
        with open(self.config, "w") as out:
            json.dump(adict, out)

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, *args):
        return main(["--config", self.config, "--out", self.out] + list(args))

    def test_usage_errors(self):
        self.assertEqual(main([]), 1)
        self.assertEqual(self.call("fom-run"), 1)
        self.assertEqual(self.call("bench", "--unknown"), 1)

    def test_config_errors(self):
        self.assertEqual(main(["--config", os.path.join(self.tmp.name, "no"),
                               "bench"]), 1)
        bad = os.path.join(self.tmp.name, "bad.json")
        with open(bad, "w") as out:
            json.dump({"plotting": {}}, out)
        self.assertEqual(main(["--config", bad, "bench"]), 1)

    def test_os_errors(self):
        blocker = os.path.join(self.tmp.name, "file")
        with open(blocker, "w") as out:
            out.write("x")
        # --out below a regular file cannot be created
        self.assertEqual(main(["--config", self.config, "--out",
                               os.path.join(blocker, "out"), "bench"]), 1)
        self.assertEqual(main(["--config", self.tmp.name, "bench"]), 1)
        with patch.object(utils, "run_bench",
                          Mock(side_effect=PermissionError("denied"))):
            self.assertEqual(self.call("bench"), 1)

    def test_exit_codes(self):
        failures = [(IntegrationError("blew up", 4), 2),
                    (np.linalg.LinAlgError("singular"), 2),
                    (FloatingPointError("overflow"), 2),
                    (ValueError("bad method"), 1)]
        for error, code in failures:
            with patch.object(utils, "run_bench", Mock(side_effect=error)):
                self.assertEqual(self.call("bench"), code, str(error))

    def test_bench(self):
        bench = create_autospec(
            utils.run_bench,
            return_value=pd.DataFrame(columns=utils.REPORT_COLUMNS))
        with patch.object(utils, "run_bench", bench):
            self.assertEqual(self.call("--seed", "4", "--threads", "2",
                                       "bench"), 0)
        config = bench.call_args[0][0]
        self.assertEqual(config.seed, 4)
        self.assertEqual(config.n_jobs, 2)
        self.assertEqual(config.out_dir, self.out)
        self.assertTrue(os.path.exists(os.path.join(self.out, "logs",
                                                    "bench.log")))
        self.assertTrue(os.path.exists(os.path.join(self.out, "logs",
                                                    "bench-info.log")))

    def test_quiet(self):
        bench = Mock(return_value=pd.DataFrame(columns=utils.REPORT_COLUMNS))
        with patch.object(utils, "run_bench", bench):
            self.assertEqual(self.call("--quiet", "bench"), 0)

    def test_fom_run(self):
        path = os.path.join(self.tmp.name, "fom.bin")
        self.assertEqual(self.call("fom-run", "--mu", "0.8", "1.0", "0.8",
                                   "1.0", "--output", path), 0)
        snapshots = read_snapshot(path)
        self.assertEqual(snapshots.shape, (21, 40))
        self.assertEqual(snapshots.mu.tolist(), [0.8, 1.0, 0.8, 1.0])

    def test_fom_run_reproducible(self):
        paths = [os.path.join(self.tmp.name, "run%d" % k, "fom.bin")
                 for k in range(2)]
        for k, path in enumerate(paths):
            self.assertEqual(main(["--config", self.config, "--out",
                                   self.out + str(k), "fom-run", "--mu",
                                   "0.8", "1.0", "0.8", "1.0",
                                   "--output", path]), 0)
        for suffix in ("", META_SUFFIX):
            self.assertEqual(read_bytes(paths[0] + suffix),
                             read_bytes(paths[1] + suffix))

    def test_fom_run_wrong_length(self):
        self.assertEqual(self.call("fom-run", "--mu", "0.8", "1.0"), 1)

    def test_train_predict_optimize(self):
        model = os.path.join(self.tmp.name, "model")
        self.assertEqual(self.call("train", "--model", model), 0)
        self.assertTrue(os.path.exists(os.path.join(model, "model.json")))

        path = os.path.join(self.tmp.name, "predict.bin")
        self.assertEqual(self.call("predict", "--model", model, "--mu",
                                   "0.75", "1.05", "0.85", "0.95",
                                   "--output", path), 0)
        self.assertEqual(read_snapshot(path).shape, (21, 40))

        self.assertEqual(self.call("optimize", "--model", model,
                                   "--optimizer", "NelderMead"), 0)
        with open(os.path.join(self.out, "results.json")) as f:
            record = json.load(f)[-1]
        self.assertEqual(record["optimize"]["optimizer"], "NelderMead")
        self.assertEqual(len(record["optimize"]["mu_hat"]), 4)

    def test_train_reproducible(self):
        models = [os.path.join(self.tmp.name, "model%d" % k) for k in range(2)]
        for k, model in enumerate(models):
            self.assertEqual(main(["--config", self.config, "--out",
                                   self.out + str(k), "train", "--noise",
                                   "0.2", "--noise-seed", "3", "--model",
                                   model]), 0)
        names = bundle_files(models[0])
        self.assertEqual(names, bundle_files(models[1]))
        self.assertIn("model.json", names)
        self.assertIn(os.path.join("provider", "provider.json"), names)
        for name in names:
            self.assertEqual(read_bytes(os.path.join(models[0], name)),
                             read_bytes(os.path.join(models[1], name)), name)
        with open(os.path.join(self.out + "0", "results.json")) as f:
            record = json.load(f)[-1]
        self.assertGreater(record["train"]["train_s"], 0)

    def test_train_needs_surrogate_method(self):
        self.assertEqual(self.call("train", "--method", "Interpolation"), 1)

    def test_optimize_needs_model(self):
        self.assertEqual(self.call("optimize"), 1)

    def test_optimize_interpolation(self):
        self.assertEqual(self.call("optimize", "--surrogate", "interpolation",
                                   "--optimizer", "NelderMead"), 0)
        # the objective interpolant has no gradient
        self.assertEqual(self.call("optimize", "--surrogate", "interpolation",
                                   "--optimizer", "BFGS"), 1)

    def test_gradcheck(self):
        self.assertEqual(self.call("gradcheck", "--points", "1",
                                   "--skip-fom"), 0)
