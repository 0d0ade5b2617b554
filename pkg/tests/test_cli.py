import json

import numpy as np
import pytest

from eventail.cli import main


def write_config(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def two_line_config(t1=6.0):
    """Slow transversal sweep past two crossing lines; microsecond rounding
    is the only noise source in this configuration."""
    return {
        "version": 1,
        "seed": 0,
        "time": {"t0": 0.0, "t1": t1},
        "camera": {"fx": 320, "fy": 320, "cx": 320, "cy": 240, "width": 640, "height": 480},
        "scene": {
            "segments": [
                [[-1.2, 0.7, 2.2], [1.4, 0.9, 2.4]],
                [[0.3, -1.0, 2.0], [0.5, 1.2, 2.6]],
            ]
        },
        "motion": {"type": "constant_twist", "v": [0.06, 0.08, 0.02], "omega": [0, 0, 0]},
        "imu": {"rate": 200},
    }


class TestSimulate:
    def test_writes_all_outputs(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", two_line_config(t1=0.5))
        rc = main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        for name in ("events.csv", "labels.csv", "imu.csv", "trajectory.csv"):
            assert (tmp_path / "out" / name).exists()
        events = (tmp_path / "out" / "events.csv").read_text().strip().split("\n")
        assert len(events) > 100

    def test_zero_motion_empty_events(self, tmp_path):
        conf = two_line_config(t1=0.5)
        conf["motion"] = {"type": "constant_twist", "v": [0, 0, 0], "omega": [0, 0, 0]}
        cfg = write_config(tmp_path / "cfg.json", conf)
        rc = main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out" / "events.csv").read_text() == "t_us,u,v,p\n"

    def test_deterministic_reruns(self, tmp_path):
        conf = two_line_config(t1=0.5)
        conf["noise"] = {"pixel": 0.5, "timestamp_std": 0.001}
        cfg = write_config(tmp_path / "cfg.json", conf)
        main(["simulate", "--config", cfg, "--seed", "7", "--out-dir", str(tmp_path / "a")])
        main(["simulate", "--config", cfg, "--seed", "7", "--out-dir", str(tmp_path / "b")])
        for name in ("events.csv", "labels.csv", "imu.csv", "trajectory.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_config_key_rejected(self, tmp_path):
        conf = two_line_config()
        conf["unexpected"] = 1
        cfg = write_config(tmp_path / "cfg.json", conf)
        assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "out")]) == 2

    def test_missing_required_section(self, tmp_path):
        conf = two_line_config()
        del conf["motion"]
        cfg = write_config(tmp_path / "cfg.json", conf)
        assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "out")]) == 2

    def test_bad_version(self, tmp_path):
        conf = two_line_config()
        conf["version"] = 99
        cfg = write_config(tmp_path / "cfg.json", conf)
        assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path / "out")]) == 2


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    """One noise-free two-line simulation shared by the fit/eval tests."""
    root = tmp_path_factory.mktemp("sim")
    cfg = write_config(root / "cfg.json", two_line_config())
    assert main(["simulate", "--config", cfg, "--out-dir", str(root)]) == 0
    return root


class TestFitAndEval:
    def test_noise_free_two_line_pipeline(self, simulated, tmp_path):
        fit_cfg = write_config(
            tmp_path / "fit.json",
            {
                "version": 1,
                "camera": {"fx": 320, "fy": 320, "cx": 320, "cy": 240, "width": 640, "height": 480},
                "ransac": {"max_iterations": 400, "min_iterations": 400, "min_inliers": 50},
            },
        )
        out = tmp_path / "fit_out"
        rc = main(
            [
                "fit",
                str(simulated / "events.csv"),
                str(simulated / "imu.csv"),
                "--config",
                fit_cfg,
                "--window-sec",
                "6.0",
                "--out-dir",
                str(out),
            ]
        )
        assert rc == 0
        records = [
            json.loads(line)
            for line in (out / "results.jsonl").read_text().strip().split("\n")
        ]
        assert len(records) == 1
        assert records[0]["status"] == "ok"
        assert len(records[0]["clusters"]) == 2

        rc = main(
            [
                "eval",
                str(out / "results.jsonl"),
                str(simulated / "trajectory.csv"),
                "--out-dir",
                str(out),
            ]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_evaluated"] == 1
        assert report["phi_mean"] < 1e-6
        assert report["success_rate"] == 100.0
        csv_lines = (out / "report.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "t_s,status,phi,success"

    def test_fit_deterministic(self, simulated, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(
                [
                    "fit",
                    str(simulated / "events.csv"),
                    str(simulated / "imu.csv"),
                    "--window-sec",
                    "6.0",
                    "--seed",
                    "3",
                    "--downsample",
                    "4",
                    "--out-dir",
                    str(out),
                ]
            )
            assert rc == 0
            outs.append((out / "results.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_downsample_thins_events(self, simulated, tmp_path):
        out = tmp_path / "thin"
        main(
            [
                "fit",
                str(simulated / "events.csv"),
                str(simulated / "imu.csv"),
                "--window-sec",
                "6.0",
                "--downsample",
                "10",
                "--out-dir",
                str(out),
            ]
        )
        rec = json.loads((out / "results.jsonl").read_text().strip().split("\n")[0])
        n_total = len((simulated / "events.csv").read_text().strip().split("\n")) - 1
        assert rec["n_events"] == int(np.ceil(n_total / 10))

    def test_small_window_failure_records_continue(self, simulated, tmp_path):
        # tiny windows leave some slices with < 5 events; those emit failure
        # records and the run still succeeds
        out = tmp_path / "tiny"
        rc = main(
            [
                "fit",
                str(simulated / "events.csv"),
                str(simulated / "imu.csv"),
                "--window-sec",
                "0.02",
                "--downsample",
                "50",
                "--out-dir",
                str(out),
            ]
        )
        assert rc == 0
        records = [
            json.loads(line)
            for line in (out / "results.jsonl").read_text().strip().split("\n")
        ]
        statuses = {r["status"] for r in records}
        assert "insufficient_events" in statuses

    def test_missing_file_exit_one(self, tmp_path):
        rc = main(["fit", str(tmp_path / "nope.csv"), str(tmp_path / "imu.csv")])
        assert rc == 1

    def test_eval_threshold_monotone(self, simulated, tmp_path):
        out = tmp_path / "fit_out"
        main(
            [
                "fit",
                str(simulated / "events.csv"),
                str(simulated / "imu.csv"),
                "--window-sec",
                "6.0",
                "--out-dir",
                str(out),
            ]
        )
        rates = []
        for k, thr in enumerate((1e-9, 0.5)):
            rep_dir = tmp_path / f"rep{k}"
            main(
                [
                    "eval",
                    str(out / "results.jsonl"),
                    str(simulated / "trajectory.csv"),
                    "--threshold-rad",
                    str(thr),
                    "--out-dir",
                    str(rep_dir),
                ]
            )
            rates.append(json.loads((rep_dir / "report.json").read_text())["success_rate"])
        assert rates[1] >= rates[0]


class TestExperimentCommand:
    def test_unknown_suite_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["experiment", "no-such-suite"])
        assert exc.value.code == 2

    def test_noise_sweep_small(self, tmp_path):
        rc = main(
            [
                "experiment",
                "noise-sweep",
                "--configs",
                "2",
                "--evals",
                "2",
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert rc == 0
        lines = (tmp_path / "noise_sweep.csv").read_text().strip().split("\n")
        assert len(lines) == 49  # header + 3 kinds x 4 levels x 4 strategies
        summary = json.loads((tmp_path / "noise_sweep.json").read_text())
        assert summary["max_zero_noise_median"] < 1e-6

    def test_experiment_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(
                [
                    "experiment",
                    "noise-sweep",
                    "--configs",
                    "2",
                    "--evals",
                    "2",
                    "--seed",
                    "5",
                    "--out-dir",
                    str(tmp_path / name),
                ]
            )
        assert (tmp_path / "a" / "noise_sweep.csv").read_bytes() == (
            tmp_path / "b" / "noise_sweep.csv"
        ).read_bytes()
