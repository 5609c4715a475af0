"""
Adam 优化器（带解耦权重衰减）
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from app.nn.tensor import check_shape
from app.utils.error_handler import TrainingError


@dataclass
class AdamState:
    """Adam 状态：每个参数的一阶/二阶矩 + 步数"""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    v: Dict[str, np.ndarray] = field(default_factory=OrderedDict)

    def to_arrays(self, prefix: str = "adam") -> "OrderedDict[str, np.ndarray]":
        """转换为检查点条目"""
        arrays = OrderedDict()
        arrays[f"{prefix}.step"] = np.array([float(self.step)])
        for name, value in self.m.items():
            arrays[f"{prefix}.m.{name}"] = value.copy()
        for name, value in self.v.items():
            arrays[f"{prefix}.v.{name}"] = value.copy()
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], prefix: str = "adam", **hyper) -> "AdamState":
        state = cls(**hyper)
        state.step = int(arrays[f"{prefix}.step"][0])
        for key, value in arrays.items():
            if key.startswith(f"{prefix}.m."):
                state.m[key[len(prefix) + 3:]] = np.array(value)
            elif key.startswith(f"{prefix}.v."):
                state.v[key[len(prefix) + 3:]] = np.array(value)
        return state


def adam_step(state: AdamState, params: Dict[str, np.ndarray],
              grads: Dict[str, np.ndarray]) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    一步 Adam 更新（原地修改参数数组）

    权重衰减为解耦形式：先 θ ← θ − lr·wd·θ，再做偏差校正的 Adam 更新

    Returns:
        (参数, 状态)
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"参数 {name} 的梯度出现非有限值", parameter=name)

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        grad = grads[name]
        check_shape(f"adam {name}", grad.shape, param.shape)
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        if state.weight_decay > 0.0:
            param -= state.lr * state.weight_decay * param
        param -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return params, state
