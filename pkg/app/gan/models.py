"""
ACGAN 生成器与判别器

生成器：噪声分支（dense+ReLU -> base_maps×h/8×w/8）与标签分支（embedding -> dense -> 1×h/8×w/8）
按通道拼接后经三级步长为 2 的转置卷积上采样到 1×h×w，输出 tanh。

判别器：五层 3×3 卷积（第一层步长 1，其余步长 2），每层 BN + LeakyReLU(0.2) + Dropout，
展平后分为真伪头（sigmoid）和类别头（sigmoid 或 softmax）
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.config.schema import GanConfig
from app.nn import layers as L
from app.nn.model import BranchConcatModel, HeadedModel, Sequential
from app.nn.tensor import DTYPE, Tensor, make_rng
from app.utils.error_handler import DomainError
from app.utils.logger import get_logger

logger = get_logger(__name__)

LEAKY_ALPHA = 0.2

VALIDITY_HEAD = "validity"
LABEL_HEAD = "label"


def conv_trunk(filters: Sequence[int], dropout_rate: float, bn_first_conv: bool = True,
               bn_momentum: float = 0.99, bn_epsilon: float = 1e-5, name: str = "trunk") -> Sequential:
    """
    判别器/分类器共享的卷积主干

    第一层步长 1，其余步长 2；末尾展平
    """
    stack: List[L.LayerSpec] = []
    for index, count in enumerate(filters):
        stride = (1, 1) if index == 0 else (2, 2)
        stack.append(L.conv2d(count, (3, 3), stride))
        if index > 0 or bn_first_conv:
            stack.append(L.batchnorm(bn_epsilon, bn_momentum))
        stack.append(L.activation("leaky_relu", LEAKY_ALPHA))
        stack.append(L.dropout(dropout_rate))
    stack.append(L.LayerSpec("flatten"))
    return Sequential(stack, name=name)


def label_head(n_classes: int, activation: str, name: str) -> Sequential:
    return Sequential([L.dense(n_classes), L.activation(activation)], name=name)


class Generator(BranchConcatModel):
    """条件生成器：输入 (z, 类别索引)，输出 batch×1×h×w 的 [-1, 1] 谱图"""

    def __init__(self, cfg: GanConfig):
        self.cfg = cfg
        h8, w8 = cfg.base_map_shape
        noise = Sequential([
            L.dense(cfg.gen_base_maps * h8 * w8),
            L.activation("relu"),
            L.reshape(cfg.gen_base_maps, h8, w8),
        ], name="gen.noise")
        label = Sequential([
            L.embedding(cfg.n_classes, cfg.embedding_dim),
            L.dense(h8 * w8),
            L.reshape(1, h8, w8),
        ], name="gen.label")
        kernel = (cfg.gen_kernel, cfg.gen_kernel)
        first, second = cfg.gen_channels
        body = Sequential([
            L.conv2d_transpose(first, kernel),
            L.activation("relu"),
            L.batchnorm(cfg.bn_epsilon, cfg.bn_momentum),
            L.conv2d_transpose(second, kernel),
            L.activation("relu"),
            L.batchnorm(cfg.bn_epsilon, cfg.bn_momentum),
            L.conv2d_transpose(1, kernel),
            L.activation("tanh"),
        ], name="gen.body")
        super().__init__(noise, label, body)

    def build(self, rng: np.random.Generator) -> Tuple[int, ...]:
        out = super().build((self.cfg.latent_dim,), (1,), rng)
        expected = (1,) + tuple(self.cfg.image_shape)
        if out != expected:
            raise DomainError(f"生成器输出形状 {out} 与配置 {expected} 不一致")
        return out

    def generate(self, z: Tensor, labels: np.ndarray, mode: str = "eval",
                 rng: Optional[np.random.Generator] = None):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.cfg.n_classes):
            raise DomainError(f"类别索引超出 [0, {self.cfg.n_classes})")
        return self.forward((np.asarray(z, dtype=DTYPE), labels), mode, rng)


class Discriminator(HeadedModel):
    """双头判别器：validity (batch×1) 与 label (batch×n_classes)"""

    def __init__(self, cfg: GanConfig):
        self.cfg = cfg
        trunk = conv_trunk(cfg.disc_filters, cfg.disc_dropout, cfg.bn_first_conv,
                           cfg.bn_momentum, cfg.bn_epsilon, name="disc.trunk")
        heads = {
            VALIDITY_HEAD: Sequential([L.dense(1), L.activation("sigmoid")], name="disc.validity"),
            LABEL_HEAD: label_head(cfg.n_classes, cfg.label_activation, "disc.label"),
        }
        super().__init__(trunk, heads)

    def build(self, rng: np.random.Generator):
        return super().build((1,) + tuple(self.cfg.image_shape), rng)


def build_generator(cfg: GanConfig, rng: Optional[np.random.Generator] = None) -> Generator:
    """构建并初始化生成器；未给 rng 时使用 gan 种子的 gen.init 子流"""
    generator = Generator(cfg)
    generator.build(rng if rng is not None else make_rng(cfg.seed or 0, "gen.init"))
    logger.debug(f"生成器: 拼接后 {generator.merged_shape}, 各级 {generator.body.stage_shapes}, "
                 f"参数 {generator.parameter_count()}")
    return generator


def build_discriminator(cfg: GanConfig, rng: Optional[np.random.Generator] = None) -> Discriminator:
    """构建并初始化判别器；未给 rng 时使用 gan 种子的 disc.init 子流"""
    discriminator = Discriminator(cfg)
    discriminator.build(rng if rng is not None else make_rng(cfg.seed or 0, "disc.init"))
    logger.debug(f"判别器: 主干 {discriminator.trunk.stage_shapes[-1]}, 参数 {discriminator.parameter_count()}")
    return discriminator
