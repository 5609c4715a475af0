"""
基线CNN分类器

结构与判别器一致，只是去掉真伪头：二分类为 1 个 sigmoid 输出，三分类为 3 个 softmax 输出
"""

from typing import Optional

import numpy as np

from app.config.schema import ClassifierConfig
from app.gan.models import LABEL_HEAD, conv_trunk, label_head
from app.nn.model import HeadedModel
from app.nn.tensor import DTYPE, Tensor, make_rng
from app.utils.logger import get_logger

logger = get_logger(__name__)

DECISION_THRESHOLD = 0.5


class Classifier(HeadedModel):

    def __init__(self, cfg: ClassifierConfig):
        self.cfg = cfg
        trunk = conv_trunk(cfg.filters, cfg.dropout, cfg.bn_first_conv, name="clf.trunk")
        activation = "sigmoid" if cfg.n_outputs == 1 else "softmax"
        super().__init__(trunk, {LABEL_HEAD: label_head(cfg.n_outputs, activation, "clf.label")})

    def build(self, rng: np.random.Generator):
        return super().build((1,) + tuple(self.cfg.image_shape), rng)

    def predict_proba(self, x: Tensor, batch_size: int = 256) -> Tensor:
        """eval 模式概率输出（dropout 关闭、BN 用滑动统计），逐样本独立"""
        x = np.asarray(x, dtype=DTYPE)
        parts = []
        for start in range(0, x.shape[0], batch_size):
            outputs, _ = self.forward(x[start:start + batch_size], "eval")
            parts.append(outputs[LABEL_HEAD])
        if not parts:
            return np.zeros((0, self.cfg.n_outputs), dtype=DTYPE)
        return np.concatenate(parts, axis=0)

    def predict(self, x: Tensor, batch_size: int = 256) -> np.ndarray:
        return decide(self.predict_proba(x, batch_size))


def decide(probabilities: Tensor) -> np.ndarray:
    """二分类阈值 0.5，多分类取 argmax"""
    if probabilities.shape[1] == 1:
        return (probabilities[:, 0] >= DECISION_THRESHOLD).astype(np.int64)
    return np.argmax(probabilities, axis=1).astype(np.int64)


def build_classifier(cfg: ClassifierConfig, rng: Optional[np.random.Generator] = None) -> Classifier:
    model = Classifier(cfg)
    model.build(rng if rng is not None else make_rng(cfg.seed or 0, "clf.init"))
    logger.debug(f"分类器: 输出 {cfg.n_outputs}, 参数 {model.parameter_count()}")
    return model
