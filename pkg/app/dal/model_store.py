"""
模型检查点

元数据记录模型种类、模型配置、epoch、种子和完整流水线配置快照；
条目为模型参数/缓冲区（"gen.body.0.W" 等）以及可选的优化器状态（"adam.*"）
"""

from dataclasses import asdict
from typing import Any, Dict, Optional, Tuple

from app.classifier.model import Classifier
from app.config.schema import ClassifierConfig, GanConfig
from app.dal.checkpoint import CheckpointContainer, load_container, save_container
from app.gan.models import Discriminator, Generator
from app.nn.model import Model
from app.nn.optim import AdamState
from app.nn.tensor import make_rng
from app.utils.error_handler import FormatError
from app.utils.logger import get_logger

logger = get_logger(__name__)

OPTIMIZER_PREFIX = "adam"

# 模型种类 -> (配置类, 模型类)
MODEL_KINDS = {
    "generator": (GanConfig, Generator),
    "discriminator": (GanConfig, Discriminator),
    "classifier": (ClassifierConfig, Classifier),
}


def _config_dict(cfg) -> Dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}


def model_container(model: Model, kind: str, epoch: int, seed: int,
                    optimizer: Optional[AdamState] = None,
                    extra: Optional[Dict[str, Any]] = None) -> CheckpointContainer:
    if kind not in MODEL_KINDS:
        raise FormatError(f"未知模型种类: {kind}")
    metadata = {"kind": kind, "model_config": _config_dict(model.cfg), "epoch": int(epoch), "model_seed": int(seed)}
    if optimizer is not None:
        metadata["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                                 "epsilon": optimizer.epsilon, "weight_decay": optimizer.weight_decay}
    metadata.update(extra or {})
    container = CheckpointContainer(metadata=metadata)
    for name, value in model.state_dict().items():
        container.add(name, value)
    if optimizer is not None:
        for name, value in optimizer.to_arrays(OPTIMIZER_PREFIX).items():
            container.add(name, value)
    return container


def save_model(path: str, model: Model, kind: str, epoch: int, seed: int,
               optimizer: Optional[AdamState] = None, extra: Optional[Dict[str, Any]] = None) -> None:
    save_container(model_container(model, kind, epoch, seed, optimizer, extra), path)
    logger.info(f"{kind} 检查点已保存: {path} (epoch {epoch})")


def model_from_container(container: CheckpointContainer, expected_kind: Optional[str] = None) -> Model:
    """按元数据重建模型并写入参数"""
    kind = container.kind
    if kind not in MODEL_KINDS:
        raise FormatError(f"检查点不是模型文件: kind={kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"需要 {expected_kind} 检查点，实际为 {kind}")
    config_cls, model_cls = MODEL_KINDS[kind]
    cfg = config_cls.from_dict(container.metadata["model_config"], path=f"checkpoint.{kind}")
    model = model_cls(cfg)
    # 参数随后被检查点覆盖，初始化值无关紧要
    model.build(make_rng(0, "checkpoint"))
    state = {k: v for k, v in container.entries.items() if not k.startswith(f"{OPTIMIZER_PREFIX}.")}
    model.load_state_dict(state)
    return model


def load_model(path: str, expected_kind: Optional[str] = None) -> Tuple[Model, CheckpointContainer]:
    container = load_container(path)
    model = model_from_container(container, expected_kind)
    logger.info(f"已加载 {container.kind} 检查点: {path} (epoch {container.metadata.get('epoch')})")
    return model, container


def optimizer_from_container(container: CheckpointContainer) -> Optional[AdamState]:
    hyper = container.metadata.get("optimizer")
    if hyper is None:
        return None
    arrays = container.subset(f"{OPTIMIZER_PREFIX}.")
    return AdamState.from_arrays(arrays, OPTIMIZER_PREFIX, **hyper)
