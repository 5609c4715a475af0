"""
损失函数

均返回 (标量损失, 对输入的梯度)
"""

from typing import Tuple

import numpy as np

from app.nn.tensor import Tensor, check_shape
from app.utils.error_handler import DomainError

EPSILON = 1e-7


def bce_loss(predictions: Tensor, targets: Tensor) -> Tuple[float, Tensor]:
    """
    二元交叉熵：对所有元素取均值

    预测值内部截断到 [1e-7, 1-1e-7]，被截断的元素梯度为 0
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    check_shape("bce_loss", predictions.shape, targets.shape)
    p = np.clip(predictions, EPSILON, 1.0 - EPSILON)
    loss = -np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p))
    inside = (predictions >= EPSILON) & (predictions <= 1.0 - EPSILON)
    grad = (p - targets) / (p * (1.0 - p)) / predictions.size * inside
    return float(loss), grad


def categorical_ce_loss(probabilities: Tensor, one_hot_targets: Tensor) -> Tuple[float, Tensor]:
    """
    分类交叉熵：对行取均值 -ln p[target]

    每行概率之和必须为 1（误差 1e-6 内）
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    one_hot_targets = np.asarray(one_hot_targets, dtype=np.float64)
    check_shape("categorical_ce_loss", probabilities.shape, one_hot_targets.shape)
    row_sums = probabilities.sum(axis=-1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6) or np.any(probabilities < 0):
        raise DomainError(f"概率分布非法：行和范围 [{row_sums.min()}, {row_sums.max()}]")
    rows = probabilities.shape[0]
    p = np.clip(probabilities, EPSILON, 1.0)
    loss = -np.sum(one_hot_targets * np.log(p)) / rows
    inside = probabilities >= EPSILON
    grad = -one_hot_targets / p / rows * inside
    return float(loss), grad
