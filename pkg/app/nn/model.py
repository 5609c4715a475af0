"""
模型组合

顺序堆叠（Sequential）、共享主干 + 多输出头（HeadedModel）、双分支拼接（BranchConcatModel）。
参数以 "前缀.层序号.键" 命名，便于优化器和检查点按名称处理
"""

from collections import OrderedDict
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.nn import layers as L
from app.nn.tensor import DTYPE, Tensor
from app.utils.error_handler import ContractError, ShapeError


def model_forward(stack: Sequence[L.LayerSpec], params: Sequence[L.Params], x: Any, mode: str = "eval",
                  rng: Optional[np.random.Generator] = None) -> Tuple[Any, List[Dict[str, Any]]]:
    """顺序前向；空堆叠为恒等映射"""
    caches = []
    out = x
    for layer, layer_params in zip(stack, params):
        out, cache = L.forward(layer, layer_params, out, mode, rng)
        caches.append(cache)
    return out, caches


def model_backward(stack: Sequence[L.LayerSpec], params: Sequence[L.Params], caches: Sequence[Dict[str, Any]],
                   grad: Any) -> Tuple[Any, List[L.Params]]:
    """顺序反向，返回 (输入梯度, 每层参数梯度)"""
    if len(caches) != len(stack):
        raise ContractError(f"缓存数量 {len(caches)} 与层数 {len(stack)} 不一致")
    grads: List[L.Params] = [dict() for _ in stack]
    for index in range(len(stack) - 1, -1, -1):
        grad, grads[index] = L.backward(stack[index], params[index], caches[index], grad)
    return grad, grads


class Sequential:
    """层的顺序堆叠"""

    def __init__(self, layers: Sequence[L.LayerSpec], name: str = ""):
        self.layers = list(layers)
        self.name = name
        self.params: List[L.Params] = [dict() for _ in self.layers]
        self.input_shape: Optional[Tuple[int, ...]] = None
        self.stage_shapes: List[Tuple[int, ...]] = []

    def build(self, input_shape: Tuple[int, ...], rng: np.random.Generator) -> Tuple[int, ...]:
        """按输入形状推断各层形状并初始化参数"""
        self.input_shape = tuple(input_shape)
        self.stage_shapes = []
        shape: Any = self.input_shape
        for index, layer in enumerate(self.layers):
            self.params[index] = L.init_params(layer, shape, rng)
            shape = L.output_shape(layer, shape)
            self.stage_shapes.append(shape)
        return shape

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.stage_shapes[-1] if self.stage_shapes else self.input_shape

    def forward(self, x: Any, mode: str = "eval", rng: Optional[np.random.Generator] = None):
        return model_forward(self.layers, self.params, x, mode, rng)

    def backward(self, caches, grad) -> Tuple[Any, "OrderedDict[str, np.ndarray]"]:
        grad_in, grads = model_backward(self.layers, self.params, caches, grad)
        named = OrderedDict()
        for index, layer_grads in enumerate(grads):
            for key, value in layer_grads.items():
                named[self._key(index, key)] = value
        return grad_in, named

    def _key(self, index: int, key: str) -> str:
        return f"{self.name}.{index}.{key}" if self.name else f"{index}.{key}"

    def _named(self, buffers: bool) -> "OrderedDict[str, np.ndarray]":
        named = OrderedDict()
        for index, layer_params in enumerate(self.params):
            for key, value in layer_params.items():
                if (key in L.BUFFER_KEYS) == buffers:
                    named[self._key(index, key)] = value
        return named

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        return self._named(buffers=False)

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        return self._named(buffers=True)


class Model:
    """由若干 Sequential 组成的模型基类，提供统一的参数/缓冲区/状态字典接口"""

    def parts(self) -> List[Sequential]:
        raise NotImplementedError("子类必须实现parts方法")

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        named = OrderedDict()
        for part in self.parts():
            named.update(part.parameters())
        return named

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        named = OrderedDict()
        for part in self.parts():
            named.update(part.buffers())
        return named

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """参数 + 缓冲区的拷贝"""
        state = OrderedDict((k, v.copy()) for k, v in self.parameters().items())
        state.update((k, v.copy()) for k, v in self.buffers().items())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """按名称原地写入参数和缓冲区，名称或形状不一致时报错"""
        targets = self.parameters()
        targets.update(self.buffers())
        missing = [k for k in targets if k not in state]
        unexpected = [k for k in state if k not in targets]
        if missing or unexpected:
            raise ContractError(f"状态字典不匹配: 缺少 {missing[:5]} 多余 {unexpected[:5]}")
        for key, target in targets.items():
            value = np.asarray(state[key], dtype=DTYPE)
            if value.shape != target.shape:
                raise ShapeError(f"{key}: 形状不匹配 {value.shape} vs {target.shape}")
            target[...] = value

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))


class HeadedModel(Model):
    """共享主干 + 若干输出头（主干输出在展平后分叉）"""

    def __init__(self, trunk: Sequential, heads: Dict[str, Sequential]):
        self.trunk = trunk
        self.heads = OrderedDict(heads)

    def parts(self) -> List[Sequential]:
        return [self.trunk] + list(self.heads.values())

    def build(self, input_shape: Tuple[int, ...], rng: np.random.Generator) -> Dict[str, Tuple[int, ...]]:
        trunk_shape = self.trunk.build(input_shape, rng)
        return {name: head.build(trunk_shape, rng) for name, head in self.heads.items()}

    def forward(self, x: Tensor, mode: str = "eval", rng: Optional[np.random.Generator] = None):
        features, trunk_caches = self.trunk.forward(x, mode, rng)
        outputs, head_caches = OrderedDict(), OrderedDict()
        for name, head in self.heads.items():
            outputs[name], head_caches[name] = head.forward(features, mode, rng)
        return outputs, {"trunk": trunk_caches, "heads": head_caches, "features_shape": features.shape}

    def backward(self, caches, grads: Dict[str, Tensor]):
        """
        Args:
            grads: 输出头名称 -> 上游梯度；未给出的头视为零梯度
        """
        grad_features = np.zeros(caches["features_shape"], dtype=DTYPE)
        named = OrderedDict()
        for name, head in self.heads.items():
            if name not in grads:
                continue
            grad_in, head_grads = head.backward(caches["heads"][name], grads[name])
            grad_features += grad_in
            named.update(head_grads)
        grad_x, trunk_grads = self.trunk.backward(caches["trunk"], grad_features)
        trunk_grads.update(named)
        # 未参与反向的输出头参数补零梯度，保证与 parameters() 一一对应
        ordered = OrderedDict()
        for key, value in self.parameters().items():
            ordered[key] = trunk_grads.get(key, np.zeros_like(value))
        return grad_x, ordered


class BranchConcatModel(Model):
    """两个输入分支按通道拼接后接主体网络（条件生成器结构）"""

    def __init__(self, first: Sequential, second: Sequential, body: Sequential):
        self.first = first
        self.second = second
        self.concat = L.LayerSpec("concat_channels")
        self.body = body

    def parts(self) -> List[Sequential]:
        return [self.first, self.second, self.body]

    def build(self, first_shape: Tuple[int, ...], second_shape: Tuple[int, ...],
              rng: np.random.Generator) -> Tuple[int, ...]:
        a = self.first.build(first_shape, rng)
        b = self.second.build(second_shape, rng)
        merged = L.output_shape(self.concat, (a, b))
        self.merged_shape = merged
        return self.body.build(merged, rng)

    def forward(self, inputs: Tuple[Tensor, Tensor], mode: str = "eval",
                rng: Optional[np.random.Generator] = None):
        a, cache_a = self.first.forward(inputs[0], mode, rng)
        b, cache_b = self.second.forward(inputs[1], mode, rng)
        merged, cache_concat = L.forward(self.concat, {}, (a, b), mode, rng)
        out, cache_body = self.body.forward(merged, mode, rng)
        return out, {"first": cache_a, "second": cache_b, "concat": cache_concat, "body": cache_body}

    def backward(self, caches, grad: Tensor):
        grad_merged, named = self.body.backward(caches["body"], grad)
        (grad_a, grad_b), _ = L.backward(self.concat, {}, caches["concat"], grad_merged)
        grad_first, first_grads = self.first.backward(caches["first"], grad_a)
        grad_second, second_grads = self.second.backward(caches["second"], grad_b)
        ordered = OrderedDict()
        for source in (first_grads, second_grads, named):
            ordered.update(source)
        return (grad_first, grad_second), ordered
