"""
张量与随机数工具

张量即 float64 的 numpy 数组；所有随机性都来自显式传入的 numpy Generator（PCG64）
"""

import hashlib
from typing import Optional, Sequence, Tuple

import numpy as np

from app.utils.error_handler import DomainError, ShapeError, TrainingError

Tensor = np.ndarray

DTYPE = np.float64


def make_rng(seed: int, stream: Optional[str] = None) -> np.random.Generator:
    """
    创建确定性随机数发生器

    Args:
        seed: 根种子
        stream: 命名子流（如 "gan"、"clf"），相同根种子下不同子流互相独立
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    if stream:
        digest = hashlib.sha256(stream.encode("utf-8")).digest()
        entropy.append(int.from_bytes(digest[:4], "little"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def gaussian_sample(rng: np.random.Generator, shape: Sequence[int], mean: float = 0.0,
                    variance: float = 1.0) -> Tensor:
    """
    Box-Muller 高斯采样

    方差为 0 时返回常数 mean
    """
    if variance < 0:
        raise DomainError(f"方差不能为负: {variance}")
    shape = tuple(int(s) for s in shape)
    count = int(np.prod(shape)) if shape else 1
    if variance == 0:
        return np.full(shape, float(mean), dtype=DTYPE)
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1]，避免 log(0)
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    draws = np.concatenate([radius * np.cos(2.0 * np.pi * u2), radius * np.sin(2.0 * np.pi * u2)])[:count]
    return (float(mean) + np.sqrt(variance) * draws).reshape(shape)


def check_shape(name: str, actual: Tuple[int, ...], expected: Tuple[int, ...]) -> None:
    if tuple(actual) != tuple(expected):
        raise ShapeError(f"{name}: 形状不匹配 {tuple(actual)} vs {tuple(expected)}")


def check_finite(name: str, value: Tensor, epoch: Optional[int] = None) -> None:
    """非有限值检查，出现 NaN/Inf 视为训练发散"""
    if not np.all(np.isfinite(value)):
        where = f" (epoch {epoch})" if epoch is not None else ""
        raise TrainingError(f"{name} 出现非有限值{where}", epoch=epoch, parameter=name)


def one_hot(labels: np.ndarray, n_classes: int) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DomainError(f"标签超出范围 [0, {n_classes}): {labels.min()}..{labels.max()}")
    out = np.zeros((labels.shape[0], n_classes), dtype=DTYPE)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def derive_seed(seed: int, stream: str) -> int:
    """由根种子和子流名派生一个 32 位子种子（写入检查点元数据，便于单独复现某一阶段）"""
    return int(make_rng(seed, stream).integers(0, 2 ** 31 - 1))
