"""
SpadVision Command-Line Tests

Tests for the command-line front end:
- Exit codes
- Argument parsing and configuration layering
- simulate, train, predict, evaluate, compare and bench end to end
"""

import pytest

from spadvision.cli import DEFAULTS, build_parser, exit_code_for, main, resolve_config
from spadvision.config import debug_checks_enabled, get_chunk_size, get_worker_count, set_debug_checks
from spadvision.datakit import CLASS_NAMES, boxes_to_onehot, onehot_to_class_map
from spadvision.errors import (
    BenchmarkError,
    ChecksumError,
    ConfigError,
    EvaluationError,
    ShapeMismatchError,
    SpadVisionError,
    TrainingError,
)
from spadvision.evalkit import CLASS_IDS, evaluate_frames, outcomes_to_entries, welch_ttest
from spadvision.io import read_dataset, read_summary, write_summary


def fake_campaign(path, kind, f1_values, boxes, data="data/desk"):
    """An evaluate output directory with the given per-run F-scores for every class."""
    pred = onehot_to_class_map(boxes_to_onehot(boxes))
    entries = outcomes_to_entries(evaluate_frames([pred], [boxes]))
    runs = {str(r): {"f1": {CLASS_NAMES[c]: value for c in CLASS_IDS}} for r, value in enumerate(f1_values)}
    write_summary(path / "summary.txt", {"kind": kind, "data": data, "runs": len(f1_values), "run": runs})
    write_summary(path / "detections.txt", {f"run{r}": entries for r in range(len(f1_values))})
    return path


class TestExitCodes:
    """Test the documented exit codes."""

    @pytest.mark.parametrize("exc, code", [
        (ConfigError("x"), 2),
        (ShapeMismatchError("x"), 2),
        (ChecksumError("record 0", 1, 2), 3),
        (FileNotFoundError("x"), 3),
        (TrainingError("x"), 4),
        (EvaluationError("x"), 5),
        (BenchmarkError("x"), 6),
        (SpadVisionError("x"), 1),
    ])
    def test_mapping(self, exc, code):
        """Test each error family."""
        assert exit_code_for(exc) == code


class TestArguments:
    """Test parsing and configuration layering."""

    def test_simulate_flags(self):
        """Test that dashed flags land on configuration keys."""
        args = build_parser().parse_args(["simulate", "--out", "o", "--frames", "40", "--sbr-target", "0.3"])
        cfg = resolve_config(args)
        assert cfg["n_frames"] == 40
        assert cfg["sbr_target"] == 0.3
        assert cfg["n_test"] == DEFAULTS["simulate"]["n_test"]

    def test_file_then_flags(self, tmp_path):
        """Test that explicit flags override config-file values."""
        conf = tmp_path / "train.conf"
        conf.write_text("seed = 9\n\n[train]\nepochs = 7\npatience = 3\n")
        args = build_parser().parse_args(["train", "--config", str(conf), "--epochs", "2", "--kind", "depth"])
        cfg = resolve_config(args)
        assert (cfg["seed"], cfg["train.epochs"], cfg["train.patience"], cfg["kind"]) == (9, 2, 3, "depth")

    def test_global_settings_applied(self, tmp_path, sample_boxes):
        """Test that worker, chunk and debug flags reach the global settings."""
        set_debug_checks(False)
        a = fake_campaign(tmp_path / "a", "histogram", [0.9, 0.92], sample_boxes)
        assert main(["compare", str(a), "--workers", "3", "--chunk-size", "8", "--debug-checks",
                     "--out", str(tmp_path / "single")]) == 2
        assert (get_worker_count(), get_chunk_size(), debug_checks_enabled()) == (3, 8, True)
        resolved = (tmp_path / "single" / "config.resolved").read_text()
        assert "chunk_size = 8" in resolved

    def test_unknown_kind(self):
        """Test that argparse rejects unknown input kinds."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--kind", "lidar"])


class TestCommands:
    """Test commands end to end on small datasets."""

    def test_simulate_and_oracle(self, tmp_path, capsys):
        """Test that ground truth fed back as prediction scores F1 = 1."""
        data = tmp_path / "data"
        assert main(["simulate", "--out", str(data), "--frames", "8", "--test-frames", "3", "--seed", "3"]) == 0
        dataset = read_dataset(data, verify=True)
        assert len(dataset) == 11
        assert len(dataset.split["test"]) == 3
        assert (data / "config.resolved").exists()
        assert (data / "run.log").exists()
        assert "very low" in capsys.readouterr().out

        for kind in ("depth", "spc256"):
            out = tmp_path / f"oracle_{kind}"
            assert main(["evaluate", "--data", str(data), "--oracle", "--kind", kind, "--out", str(out)]) == 0
            summary = read_summary(out / "summary.txt")
            assert float(summary["run.0.f1.all"]) == 1.0
            assert (out / "metrics_run0.txt").exists()

    def test_evaluate_modes(self, small_dataset, tmp_path):
        """Test that evaluate needs exactly one mode and a kind for the oracle."""
        data = str(small_dataset.path)
        assert main(["evaluate", "--data", data, "--out", str(tmp_path / "a")]) == 2
        assert main(["evaluate", "--data", data, "--oracle", "--runs", "2", "--kind", "depth",
                     "--out", str(tmp_path / "b")]) == 2
        assert main(["evaluate", "--data", data, "--oracle", "--out", str(tmp_path / "c")]) == 2
        assert main(["evaluate", "--data", str(tmp_path / "none"), "--oracle", "--kind", "depth",
                     "--out", str(tmp_path / "d")]) == 3

    def test_train_and_predict(self, small_dataset, tmp_path):
        """Test training a small network, then predicting with its checkpoint."""
        conf = tmp_path / "net.conf"
        conf.write_text("[net]\nbase_channels = 2\nn_levels = 2\n")
        run = tmp_path / "run"
        assert main(["train", "--config", str(conf), "--data", str(small_dataset.path), "--kind", "act_i_d",
                     "--epochs", "2", "--out", str(run)]) == 0
        assert (run / "checkpoint" / "checkpoint.txt").exists()
        assert read_summary(run / "history.txt")["epochs"] == "2"

        pred = tmp_path / "pred"
        assert main(["predict", "--data", str(small_dataset.path), "--checkpoint", str(run / "checkpoint"),
                     "--out", str(pred)]) == 0
        masks = read_dataset(pred / "predictions")
        assert len(masks) == len(small_dataset.split["test"])
        assert len(list((pred / "masks").glob("*.ppm"))) == len(masks)

        assert main(["predict", "--data", str(small_dataset.path), "--checkpoint", str(run / "checkpoint"),
                     "--kind", "depth", "--out", str(tmp_path / "bad")]) == 2

    def test_compare(self, tmp_path, sample_boxes):
        """Test verdicts and paired tables between two campaigns."""
        a = fake_campaign(tmp_path / "hist", "histogram", [0.9, 0.92, 0.91], sample_boxes)
        b = fake_campaign(tmp_path / "depth", "depth", [0.5, 0.52, 0.55], sample_boxes)
        out = tmp_path / "compare"
        assert main(["compare", str(a), str(b), "--out", str(out)]) == 0
        summary = read_summary(out / "summary.txt")
        assert summary["histogram_vs_depth.football.direction"] == "A higher"
        assert "A>B" in (out / "verdicts.txt").read_text()
        assert (out / "paired_histogram_vs_depth.txt").exists()

    def test_compare_mismatch(self, tmp_path, sample_boxes):
        """Test campaigns with different run counts or datasets."""
        a = fake_campaign(tmp_path / "a", "histogram", [0.9, 0.92, 0.91], sample_boxes)
        b = fake_campaign(tmp_path / "b", "depth", [0.5, 0.52], sample_boxes)
        c = fake_campaign(tmp_path / "c", "spc64", [0.5, 0.52, 0.6], sample_boxes, data="data/other")
        assert main(["compare", str(a), str(b), "--out", str(tmp_path / "ab")]) == 5
        assert main(["compare", str(a), str(c), "--out", str(tmp_path / "ac")]) == 5
        assert main(["compare", str(a), "--out", str(tmp_path / "single")]) == 2

    def test_bench_warmup(self, small_dataset, tmp_path):
        """Test that a dataset smaller than the warmup is refused."""
        assert main(["bench", "--data", str(small_dataset.path), "--warmup", "100",
                     "--out", str(tmp_path / "bench")]) == 6

    def test_bench(self, small_dataset, tmp_path):
        """Test a short benchmark run."""
        out = tmp_path / "bench"
        assert main(["bench", "--data", str(small_dataset.path), "--warmup", "2", "--frames", "4",
                     "--repeats", "1", "--kinds", "depth", "--workers", "1", "--out", str(out)]) == 0
        results = read_summary(out / "bench.txt")
        assert "depth_chain_x1.fps" in results
        assert "inference_depth.fps" in results


@pytest.mark.slow
@pytest.mark.integration
class TestOrderingExperiment:
    """Test histogram against depth input on a very-low-SBR dataset."""

    def test_histogram_not_worse_than_depth(self, tmp_path, capsys):
        """Test mean F1(histogram) >= mean F1(depth) over five seeds and report the Welch verdict."""
        scene_conf = tmp_path / "scene.conf"
        scene_conf.write_text("[scene]\nclasses = 2,4\nn_objects = 1,2\n")
        data = tmp_path / "low_sbr"
        assert main(["simulate", "--config", str(scene_conf), "--out", str(data), "--frames", "96",
                     "--test-frames", "32", "--sbr-target", "0.05", "--seed", "21"]) == 0
        dataset = read_dataset(data)
        sbrs = [float(dataset.meta(i)["sbr"]) for i in range(len(dataset))]
        assert sum(sbrs) / len(sbrs) == pytest.approx(0.05, rel=0.05)

        net_conf = tmp_path / "net.conf"
        net_conf.write_text("[net]\nbase_channels = 8\n\n[train]\nepochs = 30\npatience = 8\n")
        means = {}
        for kind in ("histogram", "depth"):
            out = tmp_path / kind
            assert main(["evaluate", "--config", str(net_conf), "--data", str(data), "--kind", kind,
                         "--runs", "5", "--out", str(out)]) == 0
            summary = read_summary(out / "summary.txt")
            scores = [float(summary[f"run.{r}.f1.all"]) for r in range(5)]
            means[kind] = (sum(scores) / 5, scores)
        capsys.readouterr()

        verdict = welch_ttest(means["histogram"][1], means["depth"][1])
        print(f"mean F1 histogram {means['histogram'][0]:.3f}, depth {means['depth'][0]:.3f}: "
              f"{verdict.direction} (t = {verdict.t:.2f}, p = {verdict.p_value:.3g})")
        assert means["histogram"][0] >= means["depth"][0]
        assert verdict.direction != "B higher"

        compare = tmp_path / "compare"
        assert main(["compare", str(tmp_path / "histogram"), str(tmp_path / "depth"), "--out", str(compare)]) == 0
        assert "histogram" in (compare / "verdicts.txt").read_text()
