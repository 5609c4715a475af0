"""
ACGAN 训练

每个批次先训练判别器（实例噪声 + 软标签，一次 Adam 更新），再训练组合模型
（生成器 + 冻结判别器，只更新生成器）。所有随机性来自显式传入的 Generator
"""

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.config.schema import GanConfig
from app.gan.models import LABEL_HEAD, VALIDITY_HEAD, Discriminator, Generator, build_discriminator, \
    build_generator
from app.nn.losses import bce_loss, categorical_ce_loss
from app.nn.optim import AdamState, adam_step
from app.nn.tensor import DTYPE, Tensor, check_finite, gaussian_sample, make_rng, one_hot
from app.utils.error_handler import ConfigError, DataError, DomainError, ShapeError
from app.utils.logger import get_logger

logger = get_logger(__name__)

HISTORY_COLUMNS = ["epoch", "disc_real_loss", "disc_fake_loss", "gen_loss", "p_real", "p_fake",
                   "real_class_acc", "noise_var"]


def instance_noise_variance(epoch: int, total_epochs: int, v0: float) -> float:
    """实例噪声方差：从 v0 线性下降，最后一个 epoch 恰好为 0"""
    if total_epochs < 2:
        return 0.0
    if not 0 <= epoch < total_epochs:
        raise DomainError(f"epoch {epoch} 超出 [0, {total_epochs})")
    if epoch == total_epochs - 1:
        return 0.0
    return v0 * (1.0 - epoch / (total_epochs - 1))


def soft_label(kind: str, rng: np.random.Generator, real_range: Tuple[float, float] = (0.8, 1.0),
               fake_range: Tuple[float, float] = (0.0, 0.2)) -> float:
    """单个软标签"""
    return float(soft_labels(kind, rng, 1, real_range, fake_range)[0])


def soft_labels(kind: str, rng: np.random.Generator, count: int, real_range: Tuple[float, float] = (0.8, 1.0),
                fake_range: Tuple[float, float] = (0.0, 0.2)) -> Tensor:
    """count 个软标签：real 取自 real_range，fake 取自 fake_range 的均匀分布"""
    if kind == "real":
        low, high = real_range
    elif kind == "fake":
        low, high = fake_range
    else:
        raise DomainError(f"未知标签类型: {kind}")
    return rng.uniform(low, high, size=count).astype(DTYPE)


def class_loss(probabilities: Tensor, labels: np.ndarray, activation: str) -> Tuple[float, Tensor]:
    """类别头损失：sigmoid 用逐类 BCE，softmax 用分类交叉熵"""
    targets = one_hot(labels, probabilities.shape[1])
    if activation == "sigmoid":
        return bce_loss(probabilities, targets)
    return categorical_ce_loss(probabilities, targets)


@dataclass
class AcganLoss:
    """一次前向的损失分解"""

    total: float
    adversarial: float
    classification: float
    outputs: Dict[str, Tensor]
    grads: Dict[str, Tensor]


def acgan_loss(disc: Discriminator, x: Tensor, validity_targets: Tensor, labels: np.ndarray, mode: str,
               rng: Optional[np.random.Generator] = None) -> Tuple[AcganLoss, dict]:
    """
    判别器输出上的 ACGAN 损失 = 真伪 BCE + 类别损失

    Returns:
        (损失分解（含对两个输出头的梯度）, 前向缓存)
    """
    outputs, caches = disc.forward(x, mode, rng)
    validity = outputs[VALIDITY_HEAD]
    adv, grad_validity = bce_loss(validity, np.asarray(validity_targets, dtype=DTYPE).reshape(validity.shape))
    cls, grad_label = class_loss(outputs[LABEL_HEAD], labels, disc.cfg.label_activation)
    loss = AcganLoss(adv + cls, adv, cls, outputs, {VALIDITY_HEAD: grad_validity, LABEL_HEAD: grad_label})
    return loss, caches


@dataclass
class DiscriminatorStepResult:
    real_loss: float
    fake_loss: float
    p_real: float
    p_fake: float
    real_class_acc: float


def _sample_conditioning(cfg: GanConfig, count: int, rng: np.random.Generator) -> Tuple[Tensor, np.ndarray]:
    z = gaussian_sample(rng, (count, cfg.latent_dim), 0.0, 1.0)
    labels = rng.integers(0, cfg.n_classes, size=count)
    return z, labels


def discriminator_step(disc: Discriminator, gen: Generator, real_batch: Tensor, real_labels: np.ndarray,
                       epoch: int, cfg: GanConfig, rng: np.random.Generator,
                       optimizer: AdamState) -> DiscriminatorStepResult:
    """
    判别器一步

    真实批次与生成批次都加上本 epoch 方差的像素级高斯噪声；真伪目标为软标签；
    类别损失对真实批次使用真实标签、对生成批次使用采样的生成标签。两部分梯度相加后做一次 Adam 更新。
    生成器以 frozen 模式前向，参数与滑动统计都不变
    """
    count = real_batch.shape[0]
    if count == 0:
        raise DataError("判别器训练批次为空")
    variance = instance_noise_variance(epoch, cfg.epochs, cfg.noise_initial_variance)

    z, fake_labels = _sample_conditioning(cfg, count, rng)
    fake_batch, _ = gen.generate(z, fake_labels, mode="frozen", rng=rng)

    noisy_real = real_batch + gaussian_sample(rng, real_batch.shape, cfg.noise_mean, variance)
    noisy_fake = fake_batch + gaussian_sample(rng, fake_batch.shape, cfg.noise_mean, variance)
    real_targets = soft_labels("real", rng, count, cfg.soft_real_range, cfg.soft_fake_range)
    fake_targets = soft_labels("fake", rng, count, cfg.soft_real_range, cfg.soft_fake_range)

    real, real_caches = acgan_loss(disc, noisy_real, real_targets, real_labels, "train", rng)
    check_finite("判别器 real_loss", np.array(real.total), epoch)
    _, real_grads = disc.backward(real_caches, real.grads)

    fake, fake_caches = acgan_loss(disc, noisy_fake, fake_targets, fake_labels, "train", rng)
    check_finite("判别器 fake_loss", np.array(fake.total), epoch)
    _, fake_grads = disc.backward(fake_caches, fake.grads)

    grads = {name: real_grads[name] + fake_grads[name] for name in real_grads}
    adam_step(optimizer, disc.parameters(), grads)

    predicted = np.argmax(real.outputs[LABEL_HEAD], axis=1)
    return DiscriminatorStepResult(
        real_loss=real.total,
        fake_loss=fake.total,
        p_real=float(np.mean(real.outputs[VALIDITY_HEAD])),
        p_fake=float(np.mean(fake.outputs[VALIDITY_HEAD])),
        real_class_acc=float(np.mean(predicted == np.asarray(real_labels))),
    )


def generator_step(gen: Generator, disc: Discriminator, batch_size: int, epoch: int, cfg: GanConfig,
                   rng: np.random.Generator, optimizer: AdamState) -> float:
    """
    组合模型一步：生成器 + 冻结判别器

    目标为真伪 1.0 与采样类别；梯度经判别器回传到生成器，只更新生成器参数
    """
    z, labels = _sample_conditioning(cfg, batch_size, rng)
    fake_batch, gen_caches = gen.generate(z, labels, mode="train", rng=rng)
    loss, disc_caches = acgan_loss(disc, fake_batch, np.ones(batch_size, dtype=DTYPE), labels, "frozen", rng)
    check_finite("生成器 gen_loss", np.array(loss.total), epoch)
    grad_images, _ = disc.backward(disc_caches, loss.grads)
    _, gen_grads = gen.backward(gen_caches, grad_images)
    adam_step(optimizer, gen.parameters(), gen_grads)
    return loss.total


@dataclass
class EpochRecord:
    epoch: int
    disc_real_loss: float
    disc_fake_loss: float
    gen_loss: float
    p_real: float
    p_fake: float
    real_class_acc: float
    noise_var: float


@dataclass
class TrainingHistory:
    """每个完成的 epoch 一条记录"""

    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=HISTORY_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TrainingHistory":
        missing = [c for c in HISTORY_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"训练历史缺少列 {missing}")
        history = cls()
        for row in frame[HISTORY_COLUMNS].itertuples(index=False):
            values = row._asdict()
            history.append(EpochRecord(epoch=int(values.pop("epoch")), **{k: float(v) for k, v in values.items()}))
        return history


def make_optimizers(cfg: GanConfig) -> Tuple[AdamState, AdamState]:
    """(生成器优化器, 判别器优化器)"""
    return (AdamState(lr=cfg.gen_lr, beta1=cfg.gen_beta1, beta2=cfg.gen_beta2),
            AdamState(lr=cfg.disc_lr, beta1=cfg.disc_beta1, beta2=cfg.disc_beta2))


@dataclass
class AcganRun:
    """一次训练的全部状态"""

    generator: Generator
    discriminator: Discriminator
    gen_optimizer: AdamState
    disc_optimizer: AdamState
    history: TrainingHistory
    epochs_completed: int = 0


EpochCallback = Callable[[int, AcganRun], None]


def _check_dataset(images: Tensor, labels: np.ndarray, cfg: GanConfig) -> None:
    expected = (1,) + tuple(cfg.image_shape)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise ShapeError(f"训练数据形状 {images.shape} 与 (N,) + {expected} 不一致")
    if images.shape[0] != labels.shape[0]:
        raise ShapeError(f"样本数 {images.shape[0]} 与标签数 {labels.shape[0]} 不一致")
    if labels.size and (labels.min() < 0 or labels.max() >= cfg.n_classes):
        raise DataError(f"标签超出 [0, {cfg.n_classes})")
    missing = sorted(set(range(cfg.n_classes)) - set(labels.tolist()))
    if missing:
        raise ConfigError(f"gan.n_classes: 训练集中缺少类别 {missing}")


def train_acgan(images: Tensor, labels: np.ndarray, cfg: GanConfig,
                on_checkpoint: Optional[EpochCallback] = None,
                on_snapshot: Optional[EpochCallback] = None,
                progress: bool = True,
                resume: Optional[AcganRun] = None) -> AcganRun:
    """
    训练 ACGAN

    Args:
        images: N×1×h×w 的 [-1, 1] 谱图
        labels: N 个类别索引
        cfg: GanConfig
        on_checkpoint: 每 checkpoint_every 个 epoch 及最后一个 epoch 调用
        on_snapshot: 每 save_samples_every 个 epoch 调用
        progress: 是否显示 tqdm 进度条
        resume: 从检查点恢复的状态，从其 epochs_completed 继续训练

    Returns:
        AcganRun
    """
    images = np.asarray(images, dtype=DTYPE)
    labels = np.asarray(labels, dtype=np.int64)
    _check_dataset(images, labels, cfg)

    seed = cfg.seed or 0
    if resume is None:
        gen = build_generator(cfg, make_rng(seed, "gen.init"))
        disc = build_discriminator(cfg, make_rng(seed, "disc.init"))
        gen_opt, disc_opt = make_optimizers(cfg)
        run = AcganRun(gen, disc, gen_opt, disc_opt, TrainingHistory())
    else:
        if not 0 < resume.epochs_completed < cfg.epochs:
            raise ConfigError(f"gan.epochs: 检查点已完成 {resume.epochs_completed} 个 epoch，"
                              f"无法在 {cfg.epochs} 个 epoch 的训练中继续")
        run = resume
        gen, disc, gen_opt, disc_opt = run.generator, run.discriminator, run.gen_optimizer, run.disc_optimizer
        logger.info(f"从 epoch {run.epochs_completed} 继续训练")
    count = images.shape[0]
    logger.info(f"开始训练 ACGAN: 样本 {count}, epochs {cfg.epochs}, batch {cfg.batch_size}, "
                f"生成器参数 {gen.parameter_count()}, 判别器参数 {disc.parameter_count()}")

    for epoch in tqdm(range(run.epochs_completed, cfg.epochs), desc="ACGAN", unit="epoch",
                      initial=run.epochs_completed, total=cfg.epochs, disable=not progress):
        # 每个 epoch 独立的随机流，恢复训练与不中断训练结果相同
        rng = make_rng(seed, f"gan/epoch{epoch}")
        order = rng.permutation(count)
        steps: List[DiscriminatorStepResult] = []
        gen_losses: List[float] = []
        for start in range(0, count, cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            steps.append(discriminator_step(disc, gen, images[index], labels[index], epoch, cfg, rng, disc_opt))
            gen_losses.append(generator_step(gen, disc, index.size, epoch, cfg, rng, gen_opt))

        record = EpochRecord(
            epoch=epoch,
            disc_real_loss=float(np.mean([s.real_loss for s in steps])),
            disc_fake_loss=float(np.mean([s.fake_loss for s in steps])),
            gen_loss=float(np.mean(gen_losses)),
            p_real=float(np.mean([s.p_real for s in steps])),
            p_fake=float(np.mean([s.p_fake for s in steps])),
            real_class_acc=float(np.mean([s.real_class_acc for s in steps])),
            noise_var=instance_noise_variance(epoch, cfg.epochs, cfg.noise_initial_variance),
        )
        run.history.append(record)
        run.epochs_completed = epoch + 1
        logger.info(f"epoch {epoch + 1}/{cfg.epochs}: D_real={record.disc_real_loss:.4f} "
                    f"D_fake={record.disc_fake_loss:.4f} G={record.gen_loss:.4f} "
                    f"p_real={record.p_real:.3f} p_fake={record.p_fake:.3f} noise={record.noise_var:.4f}")

        if on_snapshot is not None and cfg.save_samples_every and (epoch + 1) % cfg.save_samples_every == 0:
            on_snapshot(epoch + 1, run)
        last = epoch == cfg.epochs - 1
        if on_checkpoint is not None and (last or (cfg.checkpoint_every and
                                                   (epoch + 1) % cfg.checkpoint_every == 0)):
            on_checkpoint(epoch + 1, run)
    return run


@dataclass
class SyntheticSet:
    """合成谱图及其条件类别"""

    spectrograms: Tensor
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def synthesize(gen: Generator, class_label: int, count: int, seed: int, batch_size: int = 64) -> SyntheticSet:
    """
    按类别条件生成 count 个谱图

    噪声一次性从 seed 的 synth 子流抽取；eval 模式下逐样本独立，结果与 batch_size 无关
    """
    if count <= 0:
        raise DomainError(f"生成数量必须为正: {count}")
    if not 0 <= class_label < gen.cfg.n_classes:
        raise DomainError(f"类别 {class_label} 超出 [0, {gen.cfg.n_classes})")
    rng = make_rng(seed, "synth")
    z = gaussian_sample(rng, (count, gen.cfg.latent_dim), 0.0, 1.0)
    labels = np.full(count, class_label, dtype=np.int64)
    parts = []
    for start in range(0, count, batch_size):
        out, _ = gen.generate(z[start:start + batch_size], labels[start:start + batch_size], mode="eval")
        parts.append(out)
    spectrograms = np.clip(np.concatenate(parts, axis=0), -1.0, 1.0)
    logger.info(f"已合成 {count} 个类别 {class_label} 的样本")
    return SyntheticSet(spectrograms, labels)


def snapshot_samples(gen: Generator, per_class: int = 4, seed: int = 0) -> SyntheticSet:
    """固定种子的训练过程快照：每类 per_class 个样本"""
    sets = [synthesize(gen, label, per_class, seed) for label in range(gen.cfg.n_classes)]
    return SyntheticSet(np.concatenate([s.spectrograms for s in sets]), np.concatenate([s.labels for s in sets]))
