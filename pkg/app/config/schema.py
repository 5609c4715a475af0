"""
流水线配置结构

所有配置块都是冻结的 dataclass；from_dict 会逐字段校验并在错误信息前附上点分路径
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from app.audio.dsp import SegmentationParams
from app.utils.error_handler import ConfigError, DomainError

CONFIG_VERSION = 1

CLASS_VOCABULARIES = {
    "status_SSL": ("healthy", "COVID-19"),
    "status": ("healthy", "symptomatic", "COVID-19"),
}


def _fail(path: str, message: str) -> ConfigError:
    return ConfigError(f"{path}: {message}")


def _check_keys(path: str, data: Dict[str, Any], cls) -> None:
    if not isinstance(data, dict):
        raise _fail(path, f"应为 JSON 对象，实际为 {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise _fail(path, f"未知字段 {unknown}")


def _positive_int(path: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise _fail(path, f"必须为正整数，实际 {value!r}")
    return value


def _non_negative_int(path: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise _fail(path, f"必须为非负整数，实际 {value!r}")
    return value


def _number(path: str, value: Any, low: float = None, high: float = None,
            low_open: bool = False, high_open: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(path, f"必须为数值，实际 {value!r}")
    value = float(value)
    if low is not None and (value < low or (low_open and value == low)):
        raise _fail(path, f"必须{'>' if low_open else '>='} {low}，实际 {value}")
    if high is not None and (value > high or (high_open and value == high)):
        raise _fail(path, f"必须{'<' if high_open else '<='} {high}，实际 {value}")
    return value


def _int_tuple(path: str, value: Any, length: Optional[int] = None) -> Tuple[int, ...]:
    if not isinstance(value, (list, tuple)) or (length is not None and len(value) != length):
        raise _fail(path, f"必须为{'长度 %d 的' % length if length else ''}整数数组，实际 {value!r}")
    return tuple(_positive_int(f"{path}[{i}]", v) for i, v in enumerate(value))


def _range_pair(path: str, value: Any) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise _fail(path, f"必须为 [下界, 上界]，实际 {value!r}")
    lo = _number(f"{path}[0]", value[0], 0.0, 1.0)
    hi = _number(f"{path}[1]", value[1], 0.0, 1.0)
    if lo > hi:
        raise _fail(path, f"下界大于上界: {value!r}")
    return lo, hi


@dataclass(frozen=True)
class PathsConfig:
    """路径配置（相对路径以配置文件所在目录为基准）"""

    manifest: str = "data/metadata.csv"
    audio_dir: Optional[str] = None
    work_dir: str = "work"

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "paths") -> "PathsConfig":
        _check_keys(path, data, cls)
        for key in ("manifest", "work_dir"):
            if key in data and (not isinstance(data[key], str) or not data[key]):
                raise _fail(f"{path}.{key}", "必须为非空字符串")
        if data.get("audio_dir") is not None and not isinstance(data["audio_dir"], str):
            raise _fail(f"{path}.audio_dir", "必须为字符串或 null")
        return cls(**data)


@dataclass(frozen=True)
class LoggingConfig:
    level: str = "INFO"
    file: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "logging") -> "LoggingConfig":
        _check_keys(path, data, cls)
        level = data.get("level", cls.level)
        if str(level).upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise _fail(f"{path}.level", f"未知日志级别 {level!r}")
        return cls(level=str(level).upper(), file=data.get("file"))


@dataclass(frozen=True)
class ManifestConfig:
    """清单过滤与划分"""

    min_cough_detected: float = 0.7
    require_ssl: bool = True
    label_field: str = "status_SSL"
    balance: bool = False
    split_ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    @property
    def classes(self) -> Tuple[str, ...]:
        return CLASS_VOCABULARIES[self.label_field]

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "manifest") -> "ManifestConfig":
        _check_keys(path, data, cls)
        values = dict(data)
        if "min_cough_detected" in values:
            values["min_cough_detected"] = _number(f"{path}.min_cough_detected", values["min_cough_detected"],
                                                   0.0, 1.0)
        if values.get("label_field", cls.label_field) not in CLASS_VOCABULARIES:
            raise _fail(f"{path}.label_field", f"只能为 {sorted(CLASS_VOCABULARIES)}")
        for key in ("require_ssl", "balance"):
            if key in values and not isinstance(values[key], bool):
                raise _fail(f"{path}.{key}", "必须为布尔值")
        if "split_ratios" in values:
            ratios = values["split_ratios"]
            if not isinstance(ratios, (list, tuple)) or len(ratios) != 3:
                raise _fail(f"{path}.split_ratios", f"必须为三个数，实际 {ratios!r}")
            ratios = tuple(_number(f"{path}.split_ratios[{i}]", r, 0.0, low_open=True)
                           for i, r in enumerate(ratios))
            if abs(sum(ratios) - 1.0) > 1e-9:
                raise _fail(f"{path}.split_ratios", f"和必须为 1，实际 {sum(ratios)}")
            values["split_ratios"] = ratios
        return cls(**values)


@dataclass(frozen=True)
class DspConfig:
    """预处理：低通 -> 重采样 -> 分段"""

    filter_order: int = 4
    cutoff_hz: float = 6000.0
    target_rate_hz: int = 12000
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "dsp") -> "DspConfig":
        _check_keys(path, data, cls)
        values = dict(data)
        order = _positive_int(f"{path}.filter_order", values.get("filter_order", cls.filter_order))
        if order < 2 or order % 2:
            raise _fail(f"{path}.filter_order", f"必须为不小于2的偶数，实际 {order}")
        values["filter_order"] = order
        values["target_rate_hz"] = _positive_int(f"{path}.target_rate_hz",
                                                 values.get("target_rate_hz", cls.target_rate_hz))
        values["cutoff_hz"] = _number(f"{path}.cutoff_hz", values.get("cutoff_hz", cls.cutoff_hz), 0.0,
                                      low_open=True)
        if values["cutoff_hz"] > values["target_rate_hz"] / 2:
            raise _fail(f"{path}.cutoff_hz", f"不能超过目标奈奎斯特频率 {values['target_rate_hz'] / 2}")
        seg = values.get("segmentation", {})
        _check_keys(f"{path}.segmentation", seg, SegmentationParams)
        try:
            values["segmentation"] = SegmentationParams(**{
                k: _number(f"{path}.segmentation.{k}", v) for k, v in seg.items()
            })
        except DomainError as e:
            raise _fail(f"{path}.segmentation", str(e)) from e
        return cls(**values)


@dataclass(frozen=True)
class FeatureConfig:
    top_db: float = 80.0
    griffin_lim_iterations: int = 60

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "features") -> "FeatureConfig":
        _check_keys(path, data, cls)
        values = dict(data)
        if "top_db" in values:
            values["top_db"] = _number(f"{path}.top_db", values["top_db"], 0.0, low_open=True)
        if "griffin_lim_iterations" in values:
            values["griffin_lim_iterations"] = _positive_int(f"{path}.griffin_lim_iterations",
                                                             values["griffin_lim_iterations"])
        return cls(**values)


@dataclass(frozen=True)
class GanConfig:
    """ACGAN 超参数与结构参数；默认值为 128x24 谱图的完整结构"""

    latent_dim: int = 512
    n_classes: int = 2
    embedding_dim: int = 50
    epochs: int = 1000
    batch_size: int = 64
    gen_lr: float = 0.0002
    gen_beta1: float = 0.5
    gen_beta2: float = 0.999
    disc_lr: float = 0.0002
    disc_beta1: float = 0.5
    disc_beta2: float = 0.999
    noise_mean: float = 0.0
    noise_initial_variance: float = 0.1
    soft_real_range: Tuple[float, float] = (0.8, 1.0)
    soft_fake_range: Tuple[float, float] = (0.0, 0.2)
    seed: Optional[int] = None           # null：由根种子的 "gan" 子流派生
    # 结构
    image_shape: Tuple[int, int] = (128, 24)
    gen_base_maps: int = 1024
    gen_channels: Tuple[int, ...] = (512, 256)
    gen_kernel: int = 4
    disc_filters: Tuple[int, ...] = (32, 64, 128, 256, 512)
    disc_dropout: float = 0.5
    bn_first_conv: bool = True
    label_activation: str = "sigmoid"
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-5
    # 输出
    checkpoint_every: int = 0
    save_samples_every: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self, path: str = "gan") -> None:
        for key in ("latent_dim", "n_classes", "embedding_dim", "epochs", "batch_size", "gen_base_maps",
                    "gen_kernel"):
            _positive_int(f"{path}.{key}", getattr(self, key))
        if self.n_classes < 2:
            raise _fail(f"{path}.n_classes", "至少需要两个类别")
        for key in ("gen_lr", "disc_lr"):
            _number(f"{path}.{key}", getattr(self, key), 0.0, low_open=True)
        for key in ("gen_beta1", "gen_beta2", "disc_beta1", "disc_beta2"):
            _number(f"{path}.{key}", getattr(self, key), 0.0, 1.0, high_open=True)
        _number(f"{path}.noise_initial_variance", self.noise_initial_variance, 0.0)
        _number(f"{path}.noise_mean", self.noise_mean)
        fake_lo, fake_hi = self.soft_fake_range
        real_lo, real_hi = self.soft_real_range
        if not 0.0 <= fake_lo <= fake_hi < real_hi <= 1.0 or fake_hi > real_lo:
            raise _fail(f"{path}.soft_*_range", f"需要 0 <= fake < real <= 1: {self.soft_fake_range}, "
                                                f"{self.soft_real_range}")
        height, width = self.image_shape
        if height % 8 or width % 8 or height <= 0 or width <= 0:
            raise _fail(f"{path}.image_shape", f"高和宽必须为 8 的正整数倍，实际 {self.image_shape}")
        if len(self.gen_channels) != 2:
            raise _fail(f"{path}.gen_channels", "必须给出两个上采样通道数")
        if len(self.disc_filters) != 5:
            raise _fail(f"{path}.disc_filters", "判别器必须为五层卷积")
        _number(f"{path}.disc_dropout", self.disc_dropout, 0.0, 1.0, high_open=True)
        if self.label_activation not in ("sigmoid", "softmax"):
            raise _fail(f"{path}.label_activation", f"只能为 sigmoid/softmax: {self.label_activation!r}")
        _number(f"{path}.bn_momentum", self.bn_momentum, 0.0, 1.0, high_open=True)
        _number(f"{path}.bn_epsilon", self.bn_epsilon, 0.0, low_open=True)
        _non_negative_int(f"{path}.checkpoint_every", self.checkpoint_every)
        _non_negative_int(f"{path}.save_samples_every", self.save_samples_every)
        if self.seed is not None:
            _non_negative_int(f"{path}.seed", self.seed)

    @property
    def base_map_shape(self) -> Tuple[int, int]:
        """生成器起始特征图尺寸（输出尺寸 / 8）"""
        return self.image_shape[0] // 8, self.image_shape[1] // 8

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "gan") -> "GanConfig":
        _check_keys(path, data, cls)
        values = dict(data)
        for key in ("soft_real_range", "soft_fake_range"):
            if key in values:
                values[key] = _range_pair(f"{path}.{key}", values[key])
        for key, length in (("image_shape", 2), ("gen_channels", 2), ("disc_filters", 5)):
            if key in values:
                values[key] = _int_tuple(f"{path}.{key}", values[key], length)
        try:
            return cls(**values)
        except TypeError as e:
            raise _fail(path, str(e)) from e


@dataclass(frozen=True)
class ClassifierConfig:
    """基线CNN分类器"""

    lr: float = 0.002
    epochs: int = 200
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    n_outputs: int = 1
    seed: Optional[int] = None           # null：由根种子的 "clf" 子流派生
    image_shape: Tuple[int, int] = (128, 24)
    filters: Tuple[int, ...] = (32, 64, 128, 256, 512)
    dropout: float = 0.5
    bn_first_conv: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self, path: str = "classifier") -> None:
        _number(f"{path}.lr", self.lr, 0.0, low_open=True)
        _positive_int(f"{path}.epochs", self.epochs)
        _positive_int(f"{path}.batch_size", self.batch_size)
        _number(f"{path}.beta1", self.beta1, 0.0, 1.0, high_open=True)
        _number(f"{path}.beta2", self.beta2, 0.0, 1.0, high_open=True)
        _number(f"{path}.weight_decay", self.weight_decay, 0.0)
        if self.n_outputs not in (1, 3):
            raise _fail(f"{path}.n_outputs", f"只能为 1（二分类 sigmoid）或 3（三分类 softmax），实际 {self.n_outputs}")
        if len(self.filters) != 5:
            raise _fail(f"{path}.filters", "主干必须为五层卷积")
        _number(f"{path}.dropout", self.dropout, 0.0, 1.0, high_open=True)
        if self.seed is not None:
            _non_negative_int(f"{path}.seed", self.seed)

    @property
    def n_classes(self) -> int:
        return 2 if self.n_outputs == 1 else self.n_outputs

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "classifier") -> "ClassifierConfig":
        _check_keys(path, data, cls)
        values = dict(data)
        for key, length in (("image_shape", 2), ("filters", 5)):
            if key in values:
                values[key] = _int_tuple(f"{path}.{key}", values[key], length)
        try:
            return cls(**values)
        except TypeError as e:
            raise _fail(path, str(e)) from e


@dataclass(frozen=True)
class AugmentationConfig:
    """每类合成样本数量；没有默认值，必须显式给出"""

    count_per_class: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "augmentation") -> "AugmentationConfig":
        _check_keys(path, data, cls)
        count = data.get("count_per_class")
        if count is not None:
            _positive_int(f"{path}.count_per_class", count)
        return cls(count_per_class=count)


@dataclass(frozen=True)
class SynthesisConfig:
    export_audio: bool = False
    batch_size: int = 64

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "synthesis") -> "SynthesisConfig":
        _check_keys(path, data, cls)
        if "export_audio" in data and not isinstance(data["export_audio"], bool):
            raise _fail(f"{path}.export_audio", "必须为布尔值")
        if "batch_size" in data:
            _positive_int(f"{path}.batch_size", data["batch_size"])
        return cls(**data)


@dataclass(frozen=True)
class PlotConfig:
    format: str = "png"
    dpi: int = 100
    grid_columns: int = 4

    @classmethod
    def from_dict(cls, data: Dict[str, Any], path: str = "plot") -> "PlotConfig":
        _check_keys(path, data, cls)
        if data.get("format", "png") not in ("png", "svg"):
            raise _fail(f"{path}.format", "只能为 png/svg")
        for key in ("dpi", "grid_columns"):
            if key in data:
                _positive_int(f"{path}.{key}", data[key])
        return cls(**data)


@dataclass(frozen=True)
class PipelineConfig:
    """整个流水线的配置"""

    version: int = CONFIG_VERSION
    seed: int = 42
    base_dir: str = "."
    paths: PathsConfig = field(default_factory=PathsConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    manifest: ManifestConfig = field(default_factory=ManifestConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    plot: PlotConfig = field(default_factory=PlotConfig)

    @property
    def classes(self) -> Tuple[str, ...]:
        return self.manifest.classes

    def to_dict(self) -> Dict[str, Any]:
        """可 JSON 序列化的配置快照（不含 base_dir）"""
        snapshot = asdict(self)
        snapshot.pop("base_dir")
        return _jsonable(snapshot)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


REQUIRED_FIELDS: List[str] = ["version", "seed", "paths", "manifest", "dsp", "gan", "classifier"]

BLOCKS = {
    "paths": PathsConfig,
    "logging": LoggingConfig,
    "manifest": ManifestConfig,
    "dsp": DspConfig,
    "features": FeatureConfig,
    "gan": GanConfig,
    "classifier": ClassifierConfig,
    "augmentation": AugmentationConfig,
    "synthesis": SynthesisConfig,
    "plot": PlotConfig,
}


def pipeline_config_from_dict(data: Dict[str, Any], base_dir: str = ".") -> PipelineConfig:
    """校验并构造 PipelineConfig"""
    if not isinstance(data, dict):
        raise ConfigError("配置文件顶层必须为 JSON 对象")
    for key in REQUIRED_FIELDS:
        if key not in data:
            raise ConfigError(f"{key}: 缺少必需字段")
    unknown = sorted(set(data) - set(BLOCKS) - {"version", "seed"})
    if unknown:
        raise ConfigError(f"<root>: 未知字段 {unknown}")
    if data["version"] != CONFIG_VERSION:
        raise ConfigError(f"version: 不支持的配置版本 {data['version']!r}（当前为 {CONFIG_VERSION}）")
    seed = _non_negative_int("seed", data["seed"])
    blocks = {name: cls.from_dict(data.get(name, {}), name) for name, cls in BLOCKS.items()}
    manifest = blocks["manifest"]
    gan = blocks["gan"]
    if gan.n_classes != len(manifest.classes):
        raise ConfigError(f"gan.n_classes: 与 manifest.label_field 的类别数 {len(manifest.classes)} 不一致")
    classifier = blocks["classifier"]
    if classifier.n_classes != len(manifest.classes):
        raise ConfigError(f"classifier.n_outputs: 与 manifest.label_field 的类别数 {len(manifest.classes)} 不一致")
    if tuple(classifier.image_shape) != tuple(gan.image_shape):
        raise ConfigError("classifier.image_shape: 必须与 gan.image_shape 一致")
    return PipelineConfig(version=data["version"], seed=seed, base_dir=str(base_dir), **blocks)
