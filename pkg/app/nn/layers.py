"""
网络层定义

每种层提供 参数初始化 / 形状推断 / 前向 / 反向 四个函数，全部为 float64 的 numpy 实现。
前向返回 (输出, 缓存)，反向必须使用同一次前向产生的缓存
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from app.nn.tensor import DTYPE, Tensor, check_shape, gaussian_sample
from app.utils.error_handler import ConfigError, ContractError, DomainError, ShapeError

KINDS = (
    "conv2d", "conv2d_transpose", "dense", "embedding", "batchnorm", "leaky_relu", "relu", "tanh",
    "sigmoid", "softmax", "dropout", "flatten", "reshape", "concat_channels",
)

# 运行模式：train 用批统计并更新滑动平均；frozen 用批统计但不更新（dropout 仍生效）；eval 用滑动平均且关闭 dropout
MODES = ("train", "eval", "frozen")

# 不参与梯度更新、但随检查点保存的缓冲区
BUFFER_KEYS = ("running_mean", "running_var")

INIT_STD = 0.02

Params = Dict[str, np.ndarray]
Shape = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    """层描述：种类 + 该种类用到的超参数"""

    kind: str
    filters: int = 0                      # 卷积输出通道 / 全连接单元数
    kernel: Tuple[int, int] = (3, 3)
    stride: Tuple[int, int] = (1, 1)
    padding: str = "same"                 # "same" | "valid"
    alpha: float = 0.2                    # LeakyReLU 斜率
    rate: float = 0.0                     # dropout 比例
    input_dim: int = 0                    # embedding 词表大小
    output_dim: int = 0                   # embedding 维度
    epsilon: float = 1e-5
    momentum: float = 0.99
    target_shape: Tuple[int, ...] = ()    # reshape 目标（不含批维）

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"未知层类型: {self.kind}")
        if self.kind in ("conv2d", "conv2d_transpose"):
            if self.filters <= 0 or min(self.kernel) <= 0 or min(self.stride) <= 0:
                raise ConfigError(f"{self.kind}: filters/kernel/stride 必须为正: {self}")
            if self.padding not in ("same", "valid"):
                raise ConfigError(f"{self.kind}: padding 只能为 same/valid: {self.padding}")
        if self.kind == "dense" and self.filters <= 0:
            raise ConfigError(f"dense: 单元数必须为正: {self.filters}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout: rate 必须在 [0,1) 内: {self.rate}")
        if self.kind == "leaky_relu" and self.alpha <= 0:
            raise ConfigError(f"leaky_relu: alpha 必须为正: {self.alpha}")
        if self.kind == "embedding" and (self.input_dim <= 0 or self.output_dim <= 0):
            raise ConfigError(f"embedding: input_dim/output_dim 必须为正: {self}")
        if self.kind == "reshape" and not self.target_shape:
            raise ConfigError("reshape: 需要 target_shape")


# === 便捷构造 ===

def conv2d(filters: int, kernel=(3, 3), stride=(1, 1), padding="same") -> LayerSpec:
    return LayerSpec("conv2d", filters=filters, kernel=tuple(kernel), stride=tuple(stride), padding=padding)


def conv2d_transpose(filters: int, kernel=(4, 4), stride=(2, 2), padding="same") -> LayerSpec:
    return LayerSpec("conv2d_transpose", filters=filters, kernel=tuple(kernel), stride=tuple(stride),
                     padding=padding)


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", filters=units)


def embedding(input_dim: int, output_dim: int) -> LayerSpec:
    return LayerSpec("embedding", input_dim=input_dim, output_dim=output_dim)


def batchnorm(epsilon: float = 1e-5, momentum: float = 0.99) -> LayerSpec:
    return LayerSpec("batchnorm", epsilon=epsilon, momentum=momentum)


def activation(kind: str, alpha: float = 0.2) -> LayerSpec:
    return LayerSpec(kind, alpha=alpha)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec("dropout", rate=rate)


def reshape(*target_shape: int) -> LayerSpec:
    return LayerSpec("reshape", target_shape=tuple(target_shape))


# === 形状推断 ===

def _same_pads(size: int, kernel: int, stride: int, padding: str) -> Tuple[int, int]:
    if padding == "valid":
        return 0, 0
    total = kernel - 1
    return total // 2, total - total // 2


def _transpose_crops(kernel: int, stride: int, padding: str) -> Tuple[int, int]:
    if padding == "valid":
        return 0, 0
    total = max(kernel - stride, 0)
    return total // 2, total - total // 2


def output_shape(layer: LayerSpec, input_shape: Shape) -> Shape:
    """推断单样本输出形状（不含批维）"""
    kind = layer.kind
    if kind == "conv2d":
        c, h, w = input_shape
        (kh, kw), (sh, sw) = layer.kernel, layer.stride
        pt, pb = _same_pads(h, kh, sh, layer.padding)
        pl, pr = _same_pads(w, kw, sw, layer.padding)
        ho = (h + pt + pb - kh) // sh + 1
        wo = (w + pl + pr - kw) // sw + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError(f"conv2d: 输入 {input_shape} 对卷积核 {layer.kernel} 过小")
        return layer.filters, ho, wo
    if kind == "conv2d_transpose":
        c, h, w = input_shape
        (kh, kw), (sh, sw) = layer.kernel, layer.stride
        ct, cb = _transpose_crops(kh, sh, layer.padding)
        cl, cr = _transpose_crops(kw, sw, layer.padding)
        return layer.filters, (h - 1) * sh + kh - ct - cb, (w - 1) * sw + kw - cl - cr
    if kind == "dense":
        if len(input_shape) != 1:
            raise ShapeError(f"dense: 需要一维输入，实际 {input_shape}")
        return (layer.filters,)
    if kind == "embedding":
        return (layer.output_dim,)
    if kind == "flatten":
        return (int(np.prod(input_shape)),)
    if kind == "reshape":
        if int(np.prod(input_shape)) != int(np.prod(layer.target_shape)):
            raise ShapeError(f"reshape: 元素数不一致 {input_shape} -> {layer.target_shape}")
        return tuple(layer.target_shape)
    if kind == "concat_channels":
        first, second = input_shape
        if tuple(first[1:]) != tuple(second[1:]):
            raise ShapeError(f"concat_channels: 空间尺寸不一致 {first} vs {second}")
        return (first[0] + second[0],) + tuple(first[1:])
    return tuple(input_shape)


# === 参数初始化 ===

def init_params(layer: LayerSpec, input_shape: Shape, rng: np.random.Generator) -> Params:
    """
    初始化参数：卷积/转置卷积/全连接/嵌入权重 N(0, 0.02)，偏置为 0，BN 缩放为 1、平移为 0
    """
    kind = layer.kind
    var = INIT_STD ** 2
    if kind == "conv2d":
        c = input_shape[0]
        return {"W": gaussian_sample(rng, (layer.filters, c) + tuple(layer.kernel), 0.0, var),
                "b": np.zeros(layer.filters, dtype=DTYPE)}
    if kind == "conv2d_transpose":
        c = input_shape[0]
        return {"W": gaussian_sample(rng, (c, layer.filters) + tuple(layer.kernel), 0.0, var),
                "b": np.zeros(layer.filters, dtype=DTYPE)}
    if kind == "dense":
        return {"W": gaussian_sample(rng, (input_shape[0], layer.filters), 0.0, var),
                "b": np.zeros(layer.filters, dtype=DTYPE)}
    if kind == "embedding":
        return {"W": gaussian_sample(rng, (layer.input_dim, layer.output_dim), 0.0, var)}
    if kind == "batchnorm":
        channels = input_shape[0]
        return {"gamma": np.ones(channels, dtype=DTYPE), "beta": np.zeros(channels, dtype=DTYPE),
                "running_mean": np.zeros(channels, dtype=DTYPE), "running_var": np.ones(channels, dtype=DTYPE)}
    return {}


# === 前向 / 反向实现 ===

def _conv2d_forward(layer, params, x, mode, rng):
    n, c, h, w = x.shape
    weight, bias = params["W"], params["b"]
    if weight.shape[1] != c:
        raise ShapeError(f"conv2d: 输入通道 {x.shape} 与权重 {weight.shape} 不匹配")
    (kh, kw), (sh, sw) = layer.kernel, layer.stride
    pt, pb = _same_pads(h, kh, sh, layer.padding)
    pl, pr = _same_pads(w, kw, sw, layer.padding)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    ho, wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    out = cols @ weight.reshape(weight.shape[0], -1).T + bias
    out = out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), {"cols": cols, "xp_shape": xp.shape, "pads": (pt, pb, pl, pr),
                                       "out_hw": (ho, wo)}


def _conv2d_backward(layer, params, cache, grad):
    weight = params["W"]
    f, c, kh, kw = weight.shape
    sh, sw = layer.stride
    n = grad.shape[0]
    ho, wo = cache["out_hw"]
    g = grad.transpose(0, 2, 3, 1).reshape(-1, f)
    grad_w = (g.T @ cache["cols"]).reshape(weight.shape)
    grad_b = g.sum(axis=0)
    dcols = (g @ weight.reshape(f, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros(cache["xp_shape"], dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    pt, pb, pl, pr = cache["pads"]
    hp, wp = dxp.shape[2], dxp.shape[3]
    return dxp[:, :, pt:hp - pb, pl:wp - pr], {"W": grad_w, "b": grad_b}


def _conv2d_transpose_forward(layer, params, x, mode, rng):
    n, c, h, w = x.shape
    weight, bias = params["W"], params["b"]
    if weight.shape[0] != c:
        raise ShapeError(f"conv2d_transpose: 输入通道 {x.shape} 与权重 {weight.shape} 不匹配")
    f = weight.shape[1]
    (kh, kw), (sh, sw) = layer.kernel, layer.stride
    xf = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    cols = (xf @ weight.reshape(c, -1)).reshape(n, h, w, f, kh, kw)
    full = np.zeros((n, f, (h - 1) * sh + kh, (w - 1) * sw + kw), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            full[:, :, i:i + sh * (h - 1) + 1:sh, j:j + sw * (w - 1) + 1:sw] += \
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    ct, cb = _transpose_crops(kh, sh, layer.padding)
    cl, cr = _transpose_crops(kw, sw, layer.padding)
    out = full[:, :, ct:full.shape[2] - cb, cl:full.shape[3] - cr] + bias[None, :, None, None]
    return np.ascontiguousarray(out), {"xf": xf, "in_shape": x.shape, "full_shape": full.shape,
                                       "crops": (ct, cb, cl, cr)}


def _conv2d_transpose_backward(layer, params, cache, grad):
    weight = params["W"]
    c, f, kh, kw = weight.shape
    sh, sw = layer.stride
    n, _, h, w = cache["in_shape"]
    ct, cb, cl, cr = cache["crops"]
    full_shape = cache["full_shape"]
    gfull = np.zeros(full_shape, dtype=DTYPE)
    gfull[:, :, ct:full_shape[2] - cb, cl:full_shape[3] - cr] = grad
    dcols = np.empty((n, h, w, f, kh, kw), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            dcols[:, :, :, :, i, j] = \
                gfull[:, :, i:i + sh * (h - 1) + 1:sh, j:j + sw * (w - 1) + 1:sw].transpose(0, 2, 3, 1)
    dflat = dcols.reshape(n * h * w, f * kh * kw)
    grad_x = (dflat @ weight.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    grad_w = (cache["xf"].T @ dflat).reshape(weight.shape)
    return np.ascontiguousarray(grad_x), {"W": grad_w, "b": grad.sum(axis=(0, 2, 3))}


def _dense_forward(layer, params, x, mode, rng):
    if x.ndim != 2 or x.shape[1] != params["W"].shape[0]:
        raise ShapeError(f"dense: 输入 {x.shape} 与权重 {params['W'].shape} 不匹配")
    return x @ params["W"] + params["b"], {"x": x}


def _dense_backward(layer, params, cache, grad):
    x = cache["x"]
    return grad @ params["W"].T, {"W": x.T @ grad, "b": grad.sum(axis=0)}


def _embedding_forward(layer, params, x, mode, rng):
    index = np.asarray(x).reshape(-1).astype(np.int64)
    if index.size and (index.min() < 0 or index.max() >= layer.input_dim):
        raise DomainError(f"embedding: 索引超出 [0, {layer.input_dim})")
    return params["W"][index], {"index": index, "x_shape": np.shape(x)}


def _embedding_backward(layer, params, cache, grad):
    grad_w = np.zeros_like(params["W"])
    np.add.at(grad_w, cache["index"], grad)
    # 离散输入不可导
    return np.zeros(cache["x_shape"], dtype=DTYPE), {"W": grad_w}


def _bn_axes(x):
    return (0, 2, 3) if x.ndim == 4 else (0,)


def _bn_view(v, ndim):
    return v[None, :, None, None] if ndim == 4 else v[None, :]


def _batchnorm_forward(layer, params, x, mode, rng):
    axes = _bn_axes(x)
    gamma, beta = params["gamma"], params["beta"]
    if gamma.shape[0] != x.shape[1]:
        raise ShapeError(f"batchnorm: 通道数 {x.shape} 与参数 {gamma.shape} 不匹配")
    if mode == "eval":
        mean, var = params["running_mean"], params["running_var"]
    else:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if mode == "train":
            params["running_mean"] *= layer.momentum
            params["running_mean"] += (1.0 - layer.momentum) * mean
            params["running_var"] *= layer.momentum
            params["running_var"] += (1.0 - layer.momentum) * var
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    xhat = (x - _bn_view(mean, x.ndim)) * _bn_view(inv_std, x.ndim)
    out = xhat * _bn_view(gamma, x.ndim) + _bn_view(beta, x.ndim)
    return out, {"xhat": xhat, "inv_std": inv_std, "batch_stats": mode != "eval"}


def _batchnorm_backward(layer, params, cache, grad):
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    ndim = grad.ndim
    axes = _bn_axes(grad)
    grad_gamma = (grad * xhat).sum(axis=axes)
    grad_beta = grad.sum(axis=axes)
    dxhat = grad * _bn_view(params["gamma"], ndim)
    if not cache["batch_stats"]:
        return dxhat * _bn_view(inv_std, ndim), {"gamma": grad_gamma, "beta": grad_beta}
    m = grad.size / grad.shape[1]
    sum_dxhat = _bn_view(dxhat.sum(axis=axes), ndim)
    sum_dxhat_xhat = _bn_view((dxhat * xhat).sum(axis=axes), ndim)
    grad_x = _bn_view(inv_std, ndim) / m * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return grad_x, {"gamma": grad_gamma, "beta": grad_beta}


def _leaky_relu_forward(layer, params, x, mode, rng):
    return np.where(x > 0, x, layer.alpha * x), {"x": x}


def _leaky_relu_backward(layer, params, cache, grad):
    return grad * np.where(cache["x"] > 0, 1.0, layer.alpha), {}


def _relu_forward(layer, params, x, mode, rng):
    return np.maximum(x, 0.0), {"x": x}


def _relu_backward(layer, params, cache, grad):
    return grad * (cache["x"] > 0), {}


def _tanh_forward(layer, params, x, mode, rng):
    out = np.tanh(x)
    return out, {"out": out}


def _tanh_backward(layer, params, cache, grad):
    return grad * (1.0 - cache["out"] ** 2), {}


def _sigmoid_forward(layer, params, x, mode, rng):
    out = expit(x)
    return out, {"out": out}


def _sigmoid_backward(layer, params, cache, grad):
    out = cache["out"]
    return grad * out * (1.0 - out), {}


def _softmax_forward(layer, params, x, mode, rng):
    shifted = x - x.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)
    return out, {"out": out}


def _softmax_backward(layer, params, cache, grad):
    out = cache["out"]
    return out * (grad - (grad * out).sum(axis=-1, keepdims=True)), {}


def _dropout_forward(layer, params, x, mode, rng):
    if mode == "eval" or layer.rate == 0.0:
        return x, {"mask": None}
    if rng is None:
        raise ContractError("dropout: 训练模式需要随机数发生器")
    mask = (rng.random(x.shape) >= layer.rate) / (1.0 - layer.rate)
    return x * mask, {"mask": mask}


def _dropout_backward(layer, params, cache, grad):
    mask = cache["mask"]
    return (grad if mask is None else grad * mask), {}


def _flatten_forward(layer, params, x, mode, rng):
    return x.reshape(x.shape[0], -1), {"x_shape": x.shape}


def _flatten_backward(layer, params, cache, grad):
    return grad.reshape(cache["x_shape"]), {}


def _reshape_forward(layer, params, x, mode, rng):
    return x.reshape((x.shape[0],) + tuple(layer.target_shape)), {"x_shape": x.shape}


def _concat_forward(layer, params, x, mode, rng):
    first, second = x
    if first.shape[0] != second.shape[0] or first.shape[2:] != second.shape[2:]:
        raise ShapeError(f"concat_channels: 形状不兼容 {first.shape} vs {second.shape}")
    return np.concatenate([first, second], axis=1), {"split": first.shape[1]}


def _concat_backward(layer, params, cache, grad):
    split = cache["split"]
    return (grad[:, :split], grad[:, split:]), {}


_FORWARD: Dict[str, Callable[..., Tuple[Any, Dict[str, Any]]]] = {
    "conv2d": _conv2d_forward,
    "conv2d_transpose": _conv2d_transpose_forward,
    "dense": _dense_forward,
    "embedding": _embedding_forward,
    "batchnorm": _batchnorm_forward,
    "leaky_relu": _leaky_relu_forward,
    "relu": _relu_forward,
    "tanh": _tanh_forward,
    "sigmoid": _sigmoid_forward,
    "softmax": _softmax_forward,
    "dropout": _dropout_forward,
    "flatten": _flatten_forward,
    "reshape": _reshape_forward,
    "concat_channels": _concat_forward,
}

_BACKWARD: Dict[str, Callable[..., Tuple[Any, Params]]] = {
    "conv2d": _conv2d_backward,
    "conv2d_transpose": _conv2d_transpose_backward,
    "dense": _dense_backward,
    "embedding": _embedding_backward,
    "batchnorm": _batchnorm_backward,
    "leaky_relu": _leaky_relu_backward,
    "relu": _relu_backward,
    "tanh": _tanh_backward,
    "sigmoid": _sigmoid_backward,
    "softmax": _softmax_backward,
    "dropout": _dropout_backward,
    "flatten": _flatten_backward,
    "reshape": _flatten_backward,
    "concat_channels": _concat_backward,
}


def forward(layer: LayerSpec, params: Params, x: Any, mode: str = "eval",
            rng: Optional[np.random.Generator] = None) -> Tuple[Any, Dict[str, Any]]:
    """
    单层前向

    Args:
        layer: 层描述
        params: 该层参数（batchnorm 在 train 模式下会原地更新滑动平均）
        x: 输入张量，concat_channels 为二元组
        mode: train / eval / frozen
        rng: dropout 在非 eval 模式下需要

    Returns:
        (输出, 缓存)
    """
    if mode not in MODES:
        raise ContractError(f"未知运行模式: {mode}")
    out, cache = _FORWARD[layer.kind](layer, params, x, mode, rng)
    cache["kind"] = layer.kind
    cache["out_shape"] = out.shape
    return out, cache


def backward(layer: LayerSpec, params: Params, cache: Dict[str, Any], grad_output: Tensor) -> Tuple[Any, Params]:
    """
    单层反向

    Returns:
        (输入梯度, 参数梯度字典)
    """
    if cache.get("kind") != layer.kind:
        raise ContractError(f"缓存来自 {cache.get('kind')} 层，不能用于 {layer.kind} 层反向")
    check_shape(f"{layer.kind} 上游梯度", grad_output.shape, cache["out_shape"])
    return _BACKWARD[layer.kind](layer, params, cache, grad_output)
