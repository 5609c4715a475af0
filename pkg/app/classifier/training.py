"""
分类器训练与训练集扩充
"""

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.classifier.model import Classifier, build_classifier, decide
from app.config.schema import ClassifierConfig
from app.dal.spectrogram_store import SpectrogramSet, concatenate
from app.gan.models import LABEL_HEAD
from app.nn.losses import bce_loss, categorical_ce_loss
from app.nn.optim import AdamState, adam_step
from app.nn.tensor import DTYPE, Tensor, check_finite, make_rng, one_hot
from app.utils.error_handler import DataError
from app.utils.logger import get_logger

logger = get_logger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"]


def classifier_loss(probabilities: Tensor, labels: np.ndarray) -> Tuple[float, Tensor]:
    """单输出用 BCE，多输出用分类交叉熵"""
    if probabilities.shape[1] == 1:
        return bce_loss(probabilities, np.asarray(labels, dtype=DTYPE).reshape(-1, 1))
    return categorical_ce_loss(probabilities, one_hot(labels, probabilities.shape[1]))


@dataclass
class ClassifierEpoch:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class ClassifierRun:
    """训练结果：最终模型、最佳验证精度时的状态、逐 epoch 历史"""

    model: Classifier
    optimizer: AdamState
    best_state: dict
    best_epoch: int
    best_val_accuracy: float
    history: List[ClassifierEpoch] = field(default_factory=list)

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.history], columns=HISTORY_COLUMNS)

    def best_model(self) -> Classifier:
        """验证精度最高那一轮的模型副本"""
        model = Classifier(self.model.cfg)
        model.build(make_rng(0, "checkpoint"))
        model.load_state_dict(self.best_state)
        return model


def _check_set(name: str, x: Tensor, y: np.ndarray, cfg: ClassifierConfig) -> None:
    if x.shape[0] == 0:
        raise DataError(f"{name} 为空")
    expected = (1,) + tuple(cfg.image_shape)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DataError(f"{name} 形状 {x.shape} 与 (N,) + {expected} 不一致")
    if y.shape[0] != x.shape[0]:
        raise DataError(f"{name} 样本数 {x.shape[0]} 与标签数 {y.shape[0]} 不一致")
    if y.min() < 0 or y.max() >= cfg.n_classes:
        raise DataError(f"{name} 标签超出 [0, {cfg.n_classes})")


def _eval_pass(model: Classifier, x: Tensor, y: np.ndarray, batch_size: int) -> Tuple[float, float]:
    probabilities = model.predict_proba(x, batch_size)
    loss, _ = classifier_loss(probabilities, y)
    return loss, float(np.mean(decide(probabilities) == y))


def train_classifier(train_x: Tensor, train_y: np.ndarray, val_x: Tensor, val_y: np.ndarray,
                     cfg: ClassifierConfig, progress: bool = True) -> ClassifierRun:
    """
    训练分类器

    Adam + 解耦权重衰减，跑满 cfg.epochs（不提前停止）；另外保留验证精度最高的那一轮的参数

    Returns:
        ClassifierRun
    """
    train_x = np.asarray(train_x, dtype=DTYPE)
    val_x = np.asarray(val_x, dtype=DTYPE)
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    _check_set("训练集", train_x, train_y, cfg)
    _check_set("验证集", val_x, val_y, cfg)

    seed = cfg.seed or 0
    model = build_classifier(cfg, make_rng(seed, "clf.init"))
    optimizer = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay)
    rng = make_rng(seed, "clf")
    run = ClassifierRun(model, optimizer, model.state_dict(), -1, -1.0)
    count = train_x.shape[0]
    logger.info(f"开始训练分类器: 训练 {count}, 验证 {val_x.shape[0]}, epochs {cfg.epochs}, "
                f"参数 {model.parameter_count()}")

    for epoch in tqdm(range(cfg.epochs), desc="classifier", unit="epoch", disable=not progress):
        order = rng.permutation(count)
        losses, correct = [], 0
        for start in range(0, count, cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            outputs, caches = model.forward(train_x[index], "train", rng)
            probabilities = outputs[LABEL_HEAD]
            loss, grad = classifier_loss(probabilities, train_y[index])
            check_finite("分类器 loss", np.array(loss), epoch)
            _, grads = model.backward(caches, {LABEL_HEAD: grad})
            adam_step(optimizer, model.parameters(), grads)
            losses.append(loss * index.size)
            correct += int(np.sum(decide(probabilities) == train_y[index]))

        val_loss, val_accuracy = _eval_pass(model, val_x, val_y, cfg.batch_size)
        record = ClassifierEpoch(epoch, float(np.sum(losses) / count), correct / count, val_loss, val_accuracy)
        run.history.append(record)
        if val_accuracy > run.best_val_accuracy:
            run.best_val_accuracy = val_accuracy
            run.best_epoch = epoch
            run.best_state = model.state_dict()
        logger.info(f"epoch {epoch + 1}/{cfg.epochs}: loss={record.train_loss:.4f} "
                    f"acc={record.train_accuracy:.3f} val_loss={val_loss:.4f} val_acc={val_accuracy:.3f}")

    logger.info(f"分类器训练完成: 最佳验证精度 {run.best_val_accuracy:.3f} (epoch {run.best_epoch + 1})")
    return run


def augment_training_set(real: SpectrogramSet, synthetic: SpectrogramSet, shuffle_seed: int) -> SpectrogramSet:
    """
    把合成样本混入训练集

    先拼接再按种子打乱；每条记录保留来源标记。验证集和测试集不做扩充
    """
    if real.classes != synthetic.classes:
        raise DataError(f"类别表不一致: {real.classes} vs {synthetic.classes}")
    if len(synthetic) and real.image_shape != synthetic.image_shape:
        raise DataError(f"谱图形状不一致: {real.image_shape} vs {synthetic.image_shape}")
    real = real.take(range(len(real)))
    real.provenance = ("real",) * len(real)
    tagged = synthetic.take(range(len(synthetic)))
    tagged.provenance = ("synthetic",) * len(synthetic)
    union = concatenate(real, tagged)
    order = make_rng(shuffle_seed, "augment").permutation(len(union))
    augmented = union.take(order)
    logger.info(f"训练集扩充: 真实 {len(real)} + 合成 {len(synthetic)} = {len(augmented)}, "
                f"类别分布 {augmented.class_counts()}")
    return augmented
