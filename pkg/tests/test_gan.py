import math
from dataclasses import replace

import numpy as np
import pytest

from app.classifier.model import decide
from app.classifier.training import train_classifier
from app.config.schema import ClassifierConfig, GanConfig
from app.dal.model_store import load_model, optimizer_from_container, save_model
from app.gan.models import LABEL_HEAD, VALIDITY_HEAD, Generator, build_discriminator, build_generator
from app.gan.training import (
    HISTORY_COLUMNS,
    AcganRun,
    TrainingHistory,
    acgan_loss,
    class_loss,
    discriminator_step,
    generator_step,
    instance_noise_variance,
    make_optimizers,
    snapshot_samples,
    soft_label,
    soft_labels,
    synthesize,
    train_acgan,
)
from app.nn import layers as L
from app.nn.losses import bce_loss
from app.nn.tensor import make_rng
from app.utils.error_handler import ConfigError, DomainError
from conftest import toy_spectrograms


def _same_state(first, second):
    assert list(first) == list(second)
    return all(np.array_equal(first[k], second[k]) for k in first)


def test_full_size_discriminator_stages():
    disc = build_discriminator(GanConfig(seed=0))
    trunk = disc.trunk
    conv_shapes = [shape for layer, shape in zip(trunk.layers, trunk.stage_shapes) if layer.kind == "conv2d"]
    assert conv_shapes == [(32, 128, 24), (64, 64, 12), (128, 32, 6), (256, 16, 3), (512, 8, 2)]
    assert trunk.output_shape == (8192,)
    assert disc.heads[VALIDITY_HEAD].output_shape == (1,)
    assert disc.heads[LABEL_HEAD].output_shape == (2,)


def test_full_size_generator_shapes():
    # 只推断形状，不分配 512x(1024*16*3) 的全连接权重
    gen = Generator(GanConfig())
    noise = (512,)
    for layer in gen.first.layers:
        noise = L.output_shape(layer, noise)
    label = (1,)
    for layer in gen.second.layers:
        label = L.output_shape(layer, label)
    assert noise == (1024, 16, 3) and label == (1, 16, 3)
    shape = L.output_shape(gen.concat, (noise, label))
    assert shape == (1025, 16, 3)
    stages = []
    for layer in gen.body.layers:
        shape = L.output_shape(layer, shape)
        if layer.kind == "conv2d_transpose":
            stages.append(shape)
    assert stages == [(512, 32, 6), (256, 64, 12), (1, 128, 24)]


def test_tiny_models_output_ranges(tiny_gan_cfg):
    gen = build_generator(tiny_gan_cfg)
    disc = build_discriminator(tiny_gan_cfg)
    rng = np.random.default_rng(0)
    images, _ = gen.generate(rng.standard_normal((5, tiny_gan_cfg.latent_dim)), np.array([0, 1, 0, 1, 1]))
    assert images.shape == (5, 1, 16, 8)
    assert images.min() >= -1.0 and images.max() <= 1.0
    outputs, _ = disc.forward(images)
    assert outputs[VALIDITY_HEAD].shape == (5, 1)
    assert outputs[LABEL_HEAD].shape == (5, 2)
    for value in outputs.values():
        assert np.all((value > 0.0) & (value < 1.0))
    with pytest.raises(DomainError):
        gen.generate(np.zeros((1, tiny_gan_cfg.latent_dim)), np.array([2]))


def test_untrained_discriminator_is_undecided(tiny_gan_cfg):
    disc = build_discriminator(tiny_gan_cfg)
    x = np.random.default_rng(1).uniform(-1, 1, (8, 1, 16, 8))
    loss, _ = acgan_loss(disc, x, np.full(8, 0.9), np.zeros(8, dtype=np.int64), "eval")
    assert np.all(np.abs(loss.outputs[VALIDITY_HEAD] - 0.5) < 0.15)
    assert abs(loss.adversarial - math.log(2)) < 0.15


def test_discriminator_step_leaves_generator_untouched(tiny_gan_cfg):
    gen = build_generator(tiny_gan_cfg)
    disc = build_discriminator(tiny_gan_cfg)
    _, disc_opt = make_optimizers(tiny_gan_cfg)
    images, labels = toy_spectrograms(4)
    gen_before, disc_before = gen.state_dict(), disc.state_dict()
    result = discriminator_step(disc, gen, images[:6], labels[:6], 0, tiny_gan_cfg, make_rng(0, "gan"), disc_opt)
    assert _same_state(gen_before, gen.state_dict())
    assert not _same_state(disc_before, disc.state_dict())
    assert 0.0 <= result.real_class_acc <= 1.0
    assert disc_opt.step == 1


def test_generator_step_leaves_discriminator_untouched(tiny_gan_cfg):
    gen = build_generator(tiny_gan_cfg)
    disc = build_discriminator(tiny_gan_cfg)
    gen_opt, _ = make_optimizers(tiny_gan_cfg)
    gen_before, disc_before = gen.state_dict(), disc.state_dict()
    loss = generator_step(gen, disc, 4, 0, tiny_gan_cfg, make_rng(0, "gan"), gen_opt)
    assert np.isfinite(loss)
    assert _same_state(disc_before, disc.state_dict())
    assert not _same_state(gen_before, gen.state_dict())


def test_noise_schedule():
    assert instance_noise_variance(0, 1000, 0.1) == pytest.approx(0.1)
    assert instance_noise_variance(999, 1000, 0.1) == 0.0
    assert instance_noise_variance(499, 1000, 0.1) == pytest.approx(0.05005, abs=1e-5)
    assert instance_noise_variance(0, 1, 0.1) == 0.0
    values = [instance_noise_variance(e, 20, 0.1) for e in range(20)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    with pytest.raises(DomainError):
        instance_noise_variance(20, 20, 0.1)


def test_soft_labels_distribution():
    rng = make_rng(0, "labels")
    real = soft_labels("real", rng, 100000)
    fake = soft_labels("fake", rng, 100000)
    assert real.min() >= 0.8 and real.max() <= 1.0
    assert fake.min() >= 0.0 and fake.max() <= 0.2
    assert abs(real.mean() - 0.9) <= 0.005
    assert abs(fake.mean() - 0.1) <= 0.005
    assert 0.8 <= soft_label("real", rng) <= 1.0
    with pytest.raises(DomainError):
        soft_labels("noisy", rng, 3)


def test_loss_decomposition(tiny_gan_cfg):
    disc = build_discriminator(tiny_gan_cfg)
    x = np.random.default_rng(2).uniform(-1, 1, (6, 1, 16, 8))
    targets = np.linspace(0.8, 1.0, 6)
    labels = np.array([0, 1, 1, 0, 1, 0])
    loss, _ = acgan_loss(disc, x, targets, labels, "eval")
    adversarial, _ = bce_loss(loss.outputs[VALIDITY_HEAD], targets.reshape(-1, 1))
    classification, _ = class_loss(loss.outputs[LABEL_HEAD], labels, "sigmoid")
    assert abs(loss.adversarial - adversarial) <= 1e-10
    assert abs(loss.classification - classification) <= 1e-10
    assert abs(loss.total - (adversarial + classification)) <= 1e-10


def test_softmax_label_head(tiny_gan_cfg):
    cfg = replace(tiny_gan_cfg, n_classes=3, label_activation="softmax")
    disc = build_discriminator(cfg)
    outputs, _ = disc.forward(np.zeros((2, 1, 16, 8)))
    np.testing.assert_allclose(outputs[LABEL_HEAD].sum(axis=1), 1.0)


def test_training_is_deterministic(tiny_gan_cfg):
    images, labels = toy_spectrograms(5)
    first = train_acgan(images, labels, tiny_gan_cfg, progress=False)
    second = train_acgan(images, labels, tiny_gan_cfg, progress=False)
    frame = first.history.to_frame()
    assert list(frame.columns) == HISTORY_COLUMNS
    assert len(frame) == tiny_gan_cfg.epochs == first.epochs_completed
    assert frame.equals(second.history.to_frame())
    assert _same_state(first.generator.state_dict(), second.generator.state_dict())
    assert _same_state(first.discriminator.state_dict(), second.discriminator.state_dict())
    expected = [instance_noise_variance(e, tiny_gan_cfg.epochs, 0.1) for e in range(tiny_gan_cfg.epochs)]
    assert frame["noise_var"].tolist() == expected

    other = train_acgan(images, labels, replace(tiny_gan_cfg, seed=8), progress=False)
    assert not frame.equals(other.history.to_frame())


def test_training_callbacks(tiny_gan_cfg):
    cfg = replace(tiny_gan_cfg, checkpoint_every=2, save_samples_every=1)
    images, labels = toy_spectrograms(3)
    checkpoints, snapshots = [], []
    train_acgan(images, labels, cfg, on_checkpoint=lambda e, run: checkpoints.append(e),
                on_snapshot=lambda e, run: snapshots.append(e), progress=False)
    assert checkpoints == [2, 3]
    assert snapshots == [1, 2, 3]


def test_resumed_training_matches_uninterrupted_run(tmp_path, tiny_gan_cfg):
    cfg = replace(tiny_gan_cfg, epochs=3, checkpoint_every=2)
    images, labels = toy_spectrograms(4)
    full = train_acgan(images, labels, cfg, progress=False)

    def save(epoch, run):
        if epoch == 2:
            save_model(tmp_path / "gen.acgn", run.generator, "generator", epoch, cfg.seed, run.gen_optimizer)
            save_model(tmp_path / "disc.acgn", run.discriminator, "discriminator", epoch, cfg.seed,
                       run.disc_optimizer)

    first = train_acgan(images, labels, cfg, on_checkpoint=save, progress=False)
    gen, gen_container = load_model(tmp_path / "gen.acgn", "generator")
    disc, disc_container = load_model(tmp_path / "disc.acgn", "discriminator")
    history = TrainingHistory.from_frame(first.history.to_frame().head(2))
    resume = AcganRun(gen, disc, optimizer_from_container(gen_container), optimizer_from_container(disc_container),
                      history, epochs_completed=2)
    resumed = train_acgan(images, labels, cfg, progress=False, resume=resume)

    assert resumed.epochs_completed == 3
    assert resumed.gen_optimizer.step == full.gen_optimizer.step
    assert resumed.history.to_frame().equals(full.history.to_frame())
    assert _same_state(resumed.generator.state_dict(), full.generator.state_dict())
    assert _same_state(resumed.discriminator.state_dict(), full.discriminator.state_dict())

    with pytest.raises(ConfigError):
        train_acgan(images, labels, cfg, progress=False, resume=full)


def test_training_requires_every_class(tiny_gan_cfg):
    images, labels = toy_spectrograms(3)
    with pytest.raises(ConfigError):
        train_acgan(images[labels == 0], labels[labels == 0], tiny_gan_cfg, progress=False)


def test_synthesize(tiny_gan_cfg):
    gen = build_generator(tiny_gan_cfg)
    first = synthesize(gen, 1, 5, seed=11)
    assert len(first) == 5
    assert np.all(first.labels == 1)
    assert first.spectrograms.shape == (5, 1, 16, 8)
    np.testing.assert_array_equal(first.spectrograms, synthesize(gen, 1, 5, seed=11).spectrograms)
    np.testing.assert_allclose(first.spectrograms, synthesize(gen, 1, 5, seed=11, batch_size=2).spectrograms,
                               atol=1e-12)
    assert not np.array_equal(first.spectrograms, synthesize(gen, 1, 5, seed=12).spectrograms)
    with pytest.raises(DomainError):
        synthesize(gen, 2, 5, seed=11)
    with pytest.raises(DomainError):
        synthesize(gen, 0, 0, seed=11)

    snapshot = snapshot_samples(gen, per_class=2)
    assert snapshot.labels.tolist() == [0, 0, 1, 1]


@pytest.mark.slow
def test_training_dynamics_on_separable_toy_set():
    # 刻意缩小到 16x8 的窄网络：numpy 实现的 128x24 全尺寸结构在 CPU 上跑 200 epoch 要数小时，
    # 全尺寸的各层形状由 test_full_size_generator_shapes / test_full_size_discriminator_stages 覆盖
    cfg = GanConfig(latent_dim=16, embedding_dim=4, epochs=200, batch_size=64, image_shape=(16, 8),
                    gen_base_maps=16, gen_channels=(16, 8), disc_filters=(8, 16, 16, 32, 32), disc_dropout=0.25,
                    seed=21)
    images, labels = toy_spectrograms(400, seed=1)
    run = train_acgan(images, labels, cfg, progress=False)
    frame = run.history.to_frame()
    assert frame["p_real"].tail(20).mean() > frame["p_fake"].tail(20).mean()

    probe_cfg = ClassifierConfig(image_shape=(16, 8), filters=(4, 8, 8, 8, 8), dropout=0.0, epochs=20,
                                 batch_size=64, seed=5)
    val_x, val_y = toy_spectrograms(50, seed=2)
    probe = train_classifier(images, labels, val_x, val_y, probe_cfg, progress=False).best_model()
    agreement = []
    for label in (0, 1):
        synthetic = synthesize(run.generator, label, 100, seed=99)
        agreement.append(np.mean(decide(probe.predict_proba(synthetic.spectrograms)) == label))
    assert np.mean(agreement) >= 0.9
