"""
train-clf 命令

在训练部分（可用 --augment 混入合成样本）训练基线分类器；验证集与测试集始终只含真实样本，
训练前后核对测试集指纹
"""

import dataclasses
import os

from app.classifier.evaluation import evaluate
from app.classifier.training import augment_training_set, train_classifier
from app.commands.base_command import BaseCommand, load_split, partition
from app.dal.artifacts import write_csv, write_json, write_sidecar
from app.dal.model_store import save_model
from app.dal.spectrogram_store import load_records
from app.utils.error_handler import ContractError
from app.utils.logger import get_logger

logger = get_logger(__name__)


class TrainClassifierCommand(BaseCommand):
    """训练分类器"""

    name = "train-clf"

    def execute(self) -> int:
        clf_cfg = self.config.classifier
        if clf_cfg.seed is None:
            clf_cfg = dataclasses.replace(clf_cfg, seed=self.seed_for("clf"))
        records = load_records(self.require_file(self.work.features, "特征文件（请先运行 featurize）"))
        split_doc = load_split(self)
        parts = partition(records, split_doc)
        train = parts["train"]

        augment = self.arg("augment")
        if augment:
            synthetic = load_records(self.require_file(augment, "合成记录文件"))
            train = augment_training_set(train, synthetic, self.seed_for("augment"))
        tag = "augmented" if augment else "baseline"
        out_dir = self.output_dir(os.path.join(self.work.classifier_dir, tag))

        run = train_classifier(train.spectrograms, train.labels, parts["validation"].spectrograms,
                               parts["validation"].labels, clf_cfg)
        if partition(records, split_doc)["test"].uuids != parts["test"].uuids:
            raise ContractError("训练过程中测试集发生了变化")

        extra = {"clf_seed": clf_cfg.seed, "augment": os.path.basename(augment) if augment else None,
                 "test_hash": split_doc["test_hash"], "train_size": len(train),
                 "synthetic_in_train": train.synthetic_count()}
        meta = self.metadata(extra)
        save_model(os.path.join(out_dir, "classifier.acgn"), run.model, "classifier", clf_cfg.epochs,
                   clf_cfg.seed, run.optimizer, meta)
        save_model(os.path.join(out_dir, "classifier_best.acgn"), run.best_model(), "classifier",
                   run.best_epoch + 1, clf_cfg.seed, None, dict(meta, best_val_accuracy=run.best_val_accuracy))

        history_path = os.path.join(out_dir, "history.csv")
        write_csv(run.history_frame(), history_path)
        write_sidecar(history_path, meta)

        classes = self.config.classes
        validation = evaluate(run.model, parts["validation"].spectrograms, parts["validation"].labels, classes)
        test = evaluate(run.model, parts["test"].spectrograms, parts["test"].labels, classes)
        write_json(dict(meta, validation=validation.to_dict(), test=test.to_dict(),
                        best_epoch=run.best_epoch + 1, best_val_accuracy=run.best_val_accuracy),
                   os.path.join(out_dir, "metrics.json"))
        print(f"分类器训练完成 ({tag}): 验证集准确率 {validation.accuracy!r}, 测试集准确率 {test.accuracy!r}, "
              f"测试集指纹 {split_doc['test_hash'][:12]}")
        return 0

