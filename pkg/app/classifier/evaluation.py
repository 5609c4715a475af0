"""
分类器评估

eval 模式前向（dropout 关闭、BN 用滑动统计），二分类阈值 0.5、多分类 argmax；
准确率可由混淆矩阵的迹 / 总数完全复现
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.utils.error_handler import DataError
from app.utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: List[float]
    recall: List[float]
    confusion: List[List[int]]      # 行：真实类别，列：预测类别
    sample_count: int
    classes: Sequence[str]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "precision": dict(zip(self.classes, self.precision)),
            "recall": dict(zip(self.classes, self.recall)),
            "confusion_matrix": self.confusion,
            "sample_count": self.sample_count,
            "classes": list(self.classes),
        }


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


def metrics_from_predictions(y_true: np.ndarray, y_pred: np.ndarray,
                             classes: Sequence[str]) -> EvalMetrics:
    """由真实标签与预测标签计算指标；某类没有预测（或没有样本）时其精确率（召回率）记为 0"""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise DataError("评估集为空")
    if y_true.shape != y_pred.shape:
        raise DataError(f"标签数 {y_true.shape} 与预测数 {y_pred.shape} 不一致")
    n_classes = len(classes)
    if min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= n_classes:
        raise DataError(f"标签超出 [0, {n_classes})")
    matrix = confusion_matrix(y_true, y_pred, n_classes)
    diagonal = np.diag(matrix).astype(np.float64)
    predicted = matrix.sum(axis=0)
    actual = matrix.sum(axis=1)
    precision = np.divide(diagonal, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(diagonal, actual, out=np.zeros(n_classes), where=actual > 0)
    total = int(matrix.sum())
    return EvalMetrics(
        accuracy=float(np.trace(matrix) / total),
        precision=[float(v) for v in precision],
        recall=[float(v) for v in recall],
        confusion=matrix.tolist(),
        sample_count=total,
        classes=tuple(classes),
    )


def evaluate(model, x: np.ndarray, y: np.ndarray, classes: Optional[Sequence[str]] = None,
             batch_size: int = 256) -> EvalMetrics:
    """
    评估模型

    Args:
        model: 任何提供 predict(x, batch_size) 的模型（Classifier）
        x: N×1×h×w 谱图
        y: N 个真实类别索引
        classes: 类别名，默认按索引命名
    """
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise DataError("评估集为空")
    n_classes = getattr(getattr(model, "cfg", None), "n_classes", int(y.max()) + 1)
    classes = tuple(classes) if classes is not None else tuple(str(i) for i in range(n_classes))
    metrics = metrics_from_predictions(y, model.predict(x, batch_size), classes)
    logger.info(f"评估完成: 样本 {metrics.sample_count}, 准确率 {metrics.accuracy:.4f}")
    return metrics
