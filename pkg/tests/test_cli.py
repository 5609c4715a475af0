"""
命令行端到端测试：在临时工作区里依次跑完整条流水线
"""

import json
import os

import numpy as np
import pandas as pd
import pytest

from app.audio.wav_io import read_wav, write_wav
from app.cli import main
from app.dal.model_store import load_model
from app.dal.spectrogram_store import load_records
from app.utils.error_handler import get_error_handler
from conftest import burst_clip, write_pipeline_workspace


def run_pipeline(config: str) -> str:
    work = os.path.join(os.path.dirname(config), "work")
    steps = [
        ["preprocess"],
        ["featurize"],
        ["stats"],
        ["train-gan"],
        ["synth"],
        ["train-clf"],
        ["train-clf", "--augment", os.path.join(work, "synth", "synthetic.acgn")],
        ["eval"],
        ["plot", "--input", os.path.join(work, "gan", "history.csv")],
        ["plot", "--input", os.path.join(work, "synth", "synthetic.acgn"),
         "--compare", os.path.join(work, "features.acgn")],
    ]
    for step in steps:
        assert main(step + ["--config", config]) == 0, step
    return work


@pytest.fixture(scope="module")
def pipeline_work(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    return run_pipeline(write_pipeline_workspace(root))


def test_preprocess_outputs(pipeline_work):
    segments = pd.read_csv(os.path.join(pipeline_work, "segments.csv"))
    assert set(segments["uuid"]) <= {f"healthy{k:02d}" for k in range(10)} | {f"covid19{k:02d}" for k in range(10)}
    assert len(set(segments["uuid"])) == 20
    assert (segments["end_sample"] - segments["start_sample"] >= 1200).all()
    files = sorted(os.listdir(os.path.join(pipeline_work, "segments")))
    assert files == sorted(f"{s}.wav" for s in segments["segment_id"])
    clip = read_wav(os.path.join(pipeline_work, "segments", files[0]))
    assert clip.sample_rate_hz == 12000


def test_features_and_split(pipeline_work):
    records = load_records(os.path.join(pipeline_work, "features.acgn"))
    segments = pd.read_csv(os.path.join(pipeline_work, "segments.csv"))
    assert len(records) == len(segments)
    assert records.spectrograms.shape[1:] == (1, 128, 24)
    assert records.spectrograms.min() >= -1.0 and records.spectrograms.max() <= 1.0
    assert records.classes == ("healthy", "COVID-19")

    with open(os.path.join(pipeline_work, "split.json"), encoding="utf-8") as f:
        split = json.load(f)
    assert split["counts"] == {"train": 16, "validation": 2, "test": 2}
    assert set(split["parts"]) == set(segments["uuid"])


def test_stats_outputs(pipeline_work):
    all_records = pd.read_csv(os.path.join(pipeline_work, "stats", "manifest_all.csv"))
    filtered = pd.read_csv(os.path.join(pipeline_work, "stats", "manifest_filtered.csv"))
    assert not all_records.empty and not filtered.empty
    assert os.path.exists(os.path.join(pipeline_work, "stats", "manifest_all.csv.meta.json"))


def test_gan_outputs(pipeline_work):
    gan_dir = os.path.join(pipeline_work, "gan")
    for name in ("generator.acgn", "discriminator.acgn", "generator_epoch0001.acgn", "samples_epoch0001.acgn",
                 "samples_epoch0002.acgn", "history.csv"):
        assert os.path.exists(os.path.join(gan_dir, name)), name
    history = pd.read_csv(os.path.join(gan_dir, "history.csv"))
    assert history["epoch"].tolist() == [0, 1]
    assert history["noise_var"].tolist() == [0.1, 0.0]
    generator, container = load_model(os.path.join(gan_dir, "generator.acgn"), "generator")
    assert container.metadata["epoch"] == 2
    assert container.metadata["config"]["seed"] == 42


def test_synth_outputs(pipeline_work):
    synthetic = load_records(os.path.join(pipeline_work, "synth", "synthetic.acgn"))
    assert synthetic.class_counts() == {"healthy": 3, "COVID-19": 3}
    assert synthetic.synthetic_count() == 6
    audio = sorted(os.listdir(os.path.join(pipeline_work, "synth", "audio")))
    assert len(audio) == 6
    clip = read_wav(os.path.join(pipeline_work, "synth", "audio", audio[0]))
    assert (clip.sample_rate_hz, len(clip)) == (12000, 11776)


def test_classifier_outputs_share_test_set(pipeline_work):
    docs = {}
    for tag in ("baseline", "augmented"):
        folder = os.path.join(pipeline_work, "classifier", tag)
        for name in ("classifier.acgn", "classifier_best.acgn", "history.csv", "metrics.json"):
            assert os.path.exists(os.path.join(folder, name)), (tag, name)
        with open(os.path.join(folder, "metrics.json"), encoding="utf-8") as f:
            docs[tag] = json.load(f)
    assert docs["baseline"]["test_hash"] == docs["augmented"]["test_hash"]
    assert docs["augmented"]["train_size"] == docs["baseline"]["train_size"] + 6
    assert docs["augmented"]["synthetic_in_train"] == 6
    assert docs["baseline"]["synthetic_in_train"] == 0
    assert docs["baseline"]["test"]["sample_count"] == docs["augmented"]["test"]["sample_count"]


def test_eval_prints_the_reported_accuracy(pipeline_work, capsys):
    config = os.path.join(os.path.dirname(pipeline_work), "config.json")
    assert main(["eval", "--config", config]) == 0
    lines = capsys.readouterr().out.splitlines()
    printed = {line.split(":")[0]: float(line.split(":")[1]) for line in lines if "accuracy" in line}
    with open(os.path.join(pipeline_work, "classifier", "baseline", "eval_metrics.json"), encoding="utf-8") as f:
        report = json.load(f)
    assert printed["validation accuracy"] == report["validation"]["accuracy"]
    assert printed["test accuracy"] == report["test"]["accuracy"]
    matrix = np.array(report["test"]["confusion_matrix"])
    assert report["test"]["accuracy"] == np.trace(matrix) / matrix.sum()


def test_plot_outputs(pipeline_work):
    plots = set(os.listdir(os.path.join(pipeline_work, "plots")))
    for name in ("history_losses.png", "history_adversarial_probability.png", "history_noise_variance.png",
                 "synthetic_vs_features.png"):
        assert name in plots
        assert f"{name}.meta.json" in plots


def _tree_bytes(root):
    contents = {}
    for folder, _, files in os.walk(root):
        for name in files:
            path = os.path.join(folder, name)
            with open(path, "rb") as f:
                contents[os.path.relpath(path, root)] = f.read()
    return contents


def test_reruns_are_byte_identical(tmp_path):
    first = run_pipeline(write_pipeline_workspace(tmp_path / "a"))
    second = run_pipeline(write_pipeline_workspace(tmp_path / "b"))
    left, right = _tree_bytes(first), _tree_bytes(second)
    assert sorted(left) == sorted(right)
    differing = [name for name in left if left[name] != right[name]]
    assert differing == []


def test_missing_config_exits_2(tmp_path):
    assert main(["stats", "--config", str(tmp_path / "absent.json")]) == 2


def test_unknown_config_key_exits_2(pipeline_config):
    with open(pipeline_config, encoding="utf-8") as f:
        data = json.load(f)
    data["gan"]["learning_rate"] = 0.1
    with open(pipeline_config, "w", encoding="utf-8") as f:
        json.dump(data, f)
    assert main(["stats", "--config", pipeline_config]) == 2


def test_synth_without_count_exits_2(pipeline_config):
    with open(pipeline_config, encoding="utf-8") as f:
        data = json.load(f)
    data["augmentation"] = {}
    with open(pipeline_config, "w", encoding="utf-8") as f:
        json.dump(data, f)
    assert main(["synth", "--config", pipeline_config]) == 2


def test_train_gan_before_featurize_exits_3(pipeline_config):
    assert main(["train-gan", "--config", pipeline_config]) == 3


def test_plot_unknown_input_exits_3(pipeline_config, tmp_path):
    notes = tmp_path / "notes.txt"
    notes.write_text("not a plot input", encoding="utf-8")
    assert main(["plot", "--config", pipeline_config, "--input", str(notes)]) == 3


def test_corrupt_recording_is_skipped_with_exit_3(pipeline_config):
    root = os.path.dirname(pipeline_config)
    with open(os.path.join(root, "data", "healthy00.wav"), "wb") as f:
        f.write(b"RIFF0000garbage")
    assert main(["preprocess", "--config", pipeline_config]) == 3
    segments = pd.read_csv(os.path.join(root, "work", "segments.csv"))
    assert "healthy00" not in set(segments["uuid"])
    assert len(set(segments["uuid"])) == 19


def test_preprocess_burst_at_target_rate(tmp_path):
    write_pipeline_workspace(tmp_path, recordings_per_class=0)
    data_dir = tmp_path / "data"
    write_wav(burst_clip([(1000, 2000)]), data_dir / "burst.wav")
    (data_dir / "metadata.csv").write_text("uuid,cough_detected,status,status_SSL\nburst,0.9,healthy,healthy\n",
                                           encoding="utf-8")
    assert main(["preprocess", "--config", str(tmp_path / "config.json")]) == 0
    segments = pd.read_csv(tmp_path / "work" / "segments.csv")
    assert segments[["uuid", "start_sample", "end_sample"]].values.tolist() == [["burst", 400, 2600]]


def test_train_gan_resumes_from_checkpoint(tmp_path):
    config = write_pipeline_workspace(tmp_path)
    for step in (["preprocess"], ["featurize"], ["train-gan"]):
        assert main(step + ["--config", config]) == 0, step
    gan_dir = tmp_path / "work" / "gan"
    names = ("generator.acgn", "discriminator.acgn", "history.csv", "samples_epoch0002.acgn")
    uninterrupted = {name: (gan_dir / name).read_bytes() for name in names}

    checkpoint = str(gan_dir / "generator_epoch0001.acgn")
    assert main(["train-gan", "--config", config, "--checkpoint", checkpoint]) == 0
    for name in names:
        assert (gan_dir / name).read_bytes() == uninterrupted[name], name

    assert main(["train-gan", "--config", config, "--checkpoint",
                 str(gan_dir / "discriminator_epoch0001.acgn")]) == 3
    (gan_dir / "discriminator_epoch0001.acgn").unlink()
    assert main(["train-gan", "--config", config, "--checkpoint", checkpoint]) == 3


def test_skipped_recordings_are_counted_by_category(pipeline_config):
    root = os.path.dirname(pipeline_config)
    with open(os.path.join(root, "data", "covid1900.wav"), "wb") as f:
        f.write(b"RIFF0000garbage")
    assert main(["preprocess", "--config", pipeline_config]) == 3
    stats = get_error_handler().get_error_stats()
    assert stats["total"] == 1
    assert stats["by_category"] == {"FORMAT": 1}
    with open(os.path.join(root, "work", "segments.csv.meta.json"), encoding="utf-8") as f:
        assert json.load(f)["failures_by_category"] == {"FORMAT": 1}

    assert main(["stats", "--config", pipeline_config]) == 0
    assert get_error_handler().get_error_stats()["total"] == 0
