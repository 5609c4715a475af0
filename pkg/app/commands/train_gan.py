"""
train-gan 命令

在训练部分的真实谱图上训练 ACGAN，按配置周期写检查点和样本快照，最后写出训练历史。
--checkpoint 指向某个生成器检查点时，连同同一 epoch 的判别器检查点和两者的 Adam 状态一起恢复，继续训练
"""

import dataclasses
import os

from app.commands.base_command import BaseCommand, load_split, partition
from app.config.schema import GanConfig
from app.dal.artifacts import read_csv, write_csv, write_sidecar
from app.dal.model_store import load_model, optimizer_from_container, save_model
from app.dal.spectrogram_store import SpectrogramSet, load_records, save_records
from app.gan.training import AcganRun, TrainingHistory, snapshot_samples, train_acgan
from app.utils.error_handler import ConfigError, DataError
from app.utils.logger import get_logger

logger = get_logger(__name__)

SNAPSHOT_PER_CLASS = 4


def discriminator_checkpoint_path(generator_path: str) -> str:
    """generator_epoch0100.acgn -> discriminator_epoch0100.acgn"""
    folder, name = os.path.split(generator_path)
    if not name.startswith("generator"):
        raise DataError(f"--checkpoint 需要生成器检查点（generator*.acgn），实际: {name}")
    return os.path.join(folder, "discriminator" + name[len("generator"):])


class TrainGanCommand(BaseCommand):
    """训练条件生成对抗网络"""

    name = "train-gan"

    def execute(self) -> int:
        gan_cfg = self.config.gan
        if gan_cfg.seed is None:
            gan_cfg = dataclasses.replace(gan_cfg, seed=self.seed_for("gan"))
        out_dir = self.output_dir(self.work.gan_dir)
        records = load_records(self.require_file(self.work.features, "特征文件（请先运行 featurize）"))
        train = partition(records, load_split(self))["train"]
        extra = {"gan_seed": gan_cfg.seed}
        history_path = os.path.join(out_dir, "history.csv")

        checkpoint = self.arg("checkpoint")
        resume = self.restore(checkpoint, gan_cfg, history_path) if checkpoint else None

        def on_checkpoint(epoch: int, run: AcganRun) -> None:
            last = epoch == gan_cfg.epochs
            suffix = "" if last else f"_epoch{epoch:04d}"
            meta = self.metadata(extra)
            save_model(os.path.join(out_dir, f"generator{suffix}.acgn"), run.generator, "generator", epoch,
                       gan_cfg.seed, run.gen_optimizer, meta)
            save_model(os.path.join(out_dir, f"discriminator{suffix}.acgn"), run.discriminator, "discriminator",
                       epoch, gan_cfg.seed, run.disc_optimizer, meta)

        def on_snapshot(epoch: int, run: AcganRun) -> None:
            samples = snapshot_samples(run.generator, SNAPSHOT_PER_CLASS, gan_cfg.seed)
            snapshot = SpectrogramSet(samples.spectrograms, samples.labels, records.classes,
                                      tuple(f"snapshot_{epoch:04d}_{i:03d}" for i in range(len(samples))),
                                      ("synthetic",) * len(samples))
            save_records(snapshot, os.path.join(out_dir, f"samples_epoch{epoch:04d}.acgn"),
                         self.metadata(dict(extra, epoch=epoch)))

        run = train_acgan(train.spectrograms, train.labels, gan_cfg, on_checkpoint, on_snapshot, resume=resume)
        write_csv(run.history.to_frame(), history_path)
        write_sidecar(history_path, self.metadata(extra))
        last = run.history.records[-1]
        print(f"ACGAN 训练完成: {run.epochs_completed} epochs, 最后一轮 D_real={last.disc_real_loss:.4f} "
              f"D_fake={last.disc_fake_loss:.4f} G={last.gen_loss:.4f} p_real={last.p_real:.3f} "
              f"p_fake={last.p_fake:.3f}")
        return 0

    def restore(self, generator_path: str, gan_cfg: GanConfig, history_path: str) -> AcganRun:
        """读取生成器/判别器检查点、Adam 状态和此前的训练历史"""
        generator, gen_container = load_model(self.require_file(generator_path, "生成器检查点"), "generator")
        disc_path = discriminator_checkpoint_path(generator_path)
        discriminator, disc_container = load_model(self.require_file(disc_path, "判别器检查点"), "discriminator")
        if generator.cfg != gan_cfg or discriminator.cfg != gan_cfg:
            raise ConfigError("gan: 检查点的模型配置与当前配置不一致，无法继续训练")
        epoch = gen_container.metadata["epoch"]
        if disc_container.metadata["epoch"] != epoch:
            raise DataError(f"生成器（epoch {epoch}）与判别器（epoch {disc_container.metadata['epoch']}）"
                            f"检查点不属于同一 epoch")
        gen_optimizer = optimizer_from_container(gen_container)
        disc_optimizer = optimizer_from_container(disc_container)
        if gen_optimizer is None or disc_optimizer is None:
            raise DataError("检查点不含优化器状态，无法继续训练")

        history = TrainingHistory()
        if os.path.exists(history_path):
            frame = read_csv(history_path)
            history = TrainingHistory.from_frame(frame[frame["epoch"] < epoch])
        if len(history) != epoch:
            logger.warning(f"训练历史只有 {len(history)} 条记录，检查点为 epoch {epoch}")
        return AcganRun(generator, discriminator, gen_optimizer, disc_optimizer, history, epochs_completed=epoch)
