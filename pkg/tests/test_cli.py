import json

import numpy as np
import pytest

from rkhsconv.cli import (
    ExperimentConfig,
    main,
    relative_mse,
    synth_flight,
)
from rkhsconv.fitting import load_samples_csv
from rkhsconv.signal import GridField, RkhsSignal
from rkhsconv.training import TrainConfig


def tiny_config(**overrides):
    base = dict(
        samples_per_side=3,
        n_flights_train=2,
        n_flights_test=1,
        shift_dx=10.0,
        seed=11,
        train=TrainConfig(iterations=4, learning_rate=0.01, seed=11),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def write_config(path, cfg):
    with open(path, "w") as fh:
        json.dump(cfg.to_json(), fh)
    return path


class TestSynthData:
    def test_deterministic_under_seed(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", tiny_config())
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert main(["synth-data", "--out-dir", str(d1), "--config", str(cfg)]) == 0
        assert main(["synth-data", "--out-dir", str(d2), "--config", str(cfg)]) == 0
        for p1 in sorted(d1.glob("*.csv")):
            p2 = d2 / p1.name
            assert p1.read_bytes() == p2.read_bytes()

    def test_flight_file_count(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json", tiny_config(n_flights_train=12, n_flights_test=4)
        )
        out = tmp_path / "data"
        assert main(["synth-data", "--out-dir", str(out), "--config", str(cfg)]) == 0
        assert len(list(out.glob("*.csv"))) == 32
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["flights"]) == 16

    def test_translation_mode_shifts_field(self):
        cfg = tiny_config(shift_dx=40.0, samples_per_side=6)
        rng = np.random.default_rng(0)
        left, right, field_fn = synth_flight(rng, cfg)
        for p, v in zip(right.points, right.values):
            assert v == pytest.approx(float(field_fn(p.x - 40.0, p.y)), abs=1e-10)

    def test_emitted_csvs_parse_back(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", tiny_config())
        out = tmp_path / "data"
        main(["synth-data", "--out-dir", str(out), "--config", str(cfg)])
        for p in out.glob("*.csv"):
            samples = load_samples_csv(p)
            assert len(samples) == 3


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = tiny_config()
    cfg_path = write_config(root / "cfg.json", cfg)
    data = root / "data"
    fitted = root / "fitted"
    trained = root / "run"
    evald = root / "eval"
    assert main(["synth-data", "--out-dir", str(data), "--config", str(cfg_path)]) == 0
    assert main(["fit", "--in", str(data), "--out", str(fitted), "--config", str(cfg_path)]) == 0
    assert main(["train", "--fitted-dir", str(fitted), "--out-dir", str(trained),
                 "--config", str(cfg_path)]) == 0
    assert main(["eval", "--net", str(trained / "net.json"), "--fitted-dir", str(fitted),
                 "--out-dir", str(evald), "--config", str(cfg_path)]) == 0
    return root, cfg


class TestPipeline:

    def test_fit_outputs_signal_jsons(self, run_dir):
        root, cfg = run_dir
        fitted = list((root / "fitted").glob("*.json"))
        assert len(fitted) == 2 * cfg.n_flights
        sig = RkhsSignal.from_json(json.loads(fitted[0].read_text()))
        assert sig.n_terms == cfg.samples_per_side

    def test_fit_reproduces_samples(self, run_dir):
        root, cfg = run_dir
        samples = load_samples_csv(root / "data" / "flight_00_input.csv")
        sig = RkhsSignal.from_json(
            json.loads((root / "fitted" / "flight_00_input.json").read_text())
        )
        for p, v in zip(samples.points, samples.values):
            assert sig.evaluate(p) == pytest.approx(v, rel=1e-3, abs=1e-6)

    def test_loss_trace_has_one_row_per_iteration(self, run_dir):
        root, cfg = run_dir
        lines = (root / "run" / "loss.csv").read_text().strip().splitlines()
        assert lines[0] == "iteration,loss"
        assert len(lines) - 1 == cfg.train.iterations

    def test_eval_grids_parse_and_metrics_exist(self, run_dir):
        root, cfg = run_dir
        metrics = json.loads((root / "eval" / "metrics.json").read_text())
        assert len(metrics["flights"]) == cfg.n_flights_test
        for rec in metrics["flights"]:
            k = rec["flight"]
            for kind in ("input", "output", "target"):
                field = GridField.from_csv(root / "eval" / f"flight_{k:02d}_{kind}_grid.csv")
                assert field.values.shape == (81, 81)
            assert rec["rel_mse"] >= 0.0
            assert rec["identity_rel_mse"] > 0.0

    def test_eval_against_own_outputs_is_zero(self, run_dir, tmp_path):
        root, cfg = run_dir
        import rkhsconv

        with open(root / "run" / "net.json") as fh:
            net = rkhsconv.AlgNet.from_json(json.load(fh))
        # overwrite the test flight's target with the net's own output
        fitted2 = tmp_path / "fitted2"
        fitted2.mkdir()
        for p in (root / "fitted").glob("*.json"):
            (fitted2 / p.name).write_text(p.read_text())
        k = cfg.n_flights_train
        f = RkhsSignal.from_json(
            json.loads((fitted2 / f"flight_{k:02d}_input.json").read_text())
        )
        out = rkhsconv.forward(net, f)
        (fitted2 / f"flight_{k:02d}_target.json").write_text(json.dumps(out.to_json()))
        evald = tmp_path / "eval2"
        cfg_path = write_config(tmp_path / "cfg.json", cfg)
        assert main(["eval", "--net", str(root / "run" / "net.json"),
                     "--fitted-dir", str(fitted2), "--out-dir", str(evald),
                     "--config", str(cfg_path)]) == 0
        metrics = json.loads((evald / "metrics.json").read_text())
        assert metrics["flights"][0]["rel_mse"] <= 1e-20


class TestSingleFileCommands:
    def test_fit_convolve_forward_round_trip(self, tmp_path):
        cfg = tiny_config()
        cfg_path = write_config(tmp_path / "cfg.json", cfg)
        data = tmp_path / "data"
        main(["synth-data", "--out-dir", str(data), "--config", str(cfg_path)])
        sig_path = tmp_path / "sig.json"
        assert main(["fit", "--in", str(data / "flight_00_input.csv"),
                     "--out", str(sig_path), "--config", str(cfg_path)]) == 0
        conv_path = tmp_path / "conv.json"
        assert main(["convolve", "--f", str(sig_path), "--g", str(sig_path),
                     "--out", str(conv_path)]) == 0
        conv = RkhsSignal.from_json(json.loads(conv_path.read_text()))
        assert conv.n_terms <= cfg.samples_per_side**2

        # forward through a tiny trained net
        fitted = tmp_path / "fitted"
        trained = tmp_path / "run"
        main(["fit", "--in", str(data), "--out", str(fitted), "--config", str(cfg_path)])
        main(["train", "--fitted-dir", str(fitted), "--out-dir", str(trained),
              "--config", str(cfg_path)])
        out_path = tmp_path / "out.json"
        assert main(["forward", "--net", str(trained / "net.json"),
                     "--signal", str(sig_path), "--out", str(out_path)]) == 0
        RkhsSignal.from_json(json.loads(out_path.read_text()))


class TestDemos:
    @pytest.mark.parametrize(
        "name", ["sinc_equivalence", "gaussian_conv", "sphere_rotation", "nonlinearity_figure"]
    )
    def test_fast_demos_pass(self, tmp_path, name):
        out = tmp_path / name
        assert main(["demo", name, "--out-dir", str(out), "--seed", "0"]) == 0
        summary = json.loads((out / f"{name}_summary.json").read_text())
        assert summary["pass"] is True
        assert list(out.glob("*.csv"))

    def test_graphon_spectrum_demo(self, tmp_path):
        out = tmp_path / "graphon"
        assert main(["demo", "graphon_spectrum", "--out-dir", str(out)]) == 0
        summary = json.loads((out / "graphon_spectrum_summary.json").read_text())
        assert summary["pass"] is True
        rows = (out / "graphon_spectrum.csv").read_text().strip().splitlines()
        assert rows[0] == "k,computed_lambda,analytic_lambda,relative_error"
        assert len(rows) == 6


class TestExitCodes:
    def test_missing_file_is_io_error(self, tmp_path):
        assert main(["fit", "--in", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "x.json")]) == 2

    def test_bad_samples_is_validation_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y,value\n1.0,2.0,oops\n")
        assert main(["fit", "--in", str(bad), "--out", str(tmp_path / "x.json")]) == 1

    def test_bad_config_is_validation_error(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synthesis_mode": "bogus"}))
        assert main(["synth-data", "--out-dir", str(tmp_path / "d"),
                     "--config", str(cfg)]) == 1


def test_relative_mse():
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert relative_mse(b, a) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        relative_mse(a, np.zeros_like(a))
