import enum
import math
from typing import Type, Iterator
from dataclasses import dataclass, field
import numpy as np


class GloveError(ValueError):
    """
    流水线内所有可预期异常的基类,
    命令行按子类区分退出码.
    """
    pass


class ConfigError(GloveError):
    pass


class DataError(GloveError):
    pass


class FrameError(DataError):
    pass


class ModelError(GloveError):
    pass


class ModelFileError(ModelError):
    pass


class GestureLabel(enum.IntEnum):
    """
    手势字典, 数值即模型输出下标
    """
    Null = 0
    Up = 1
    Down = 2
    Back = 3
    Forward = 4
    Land = 5
    Stop = 6
    Left = 7
    Right = 8


N_CLASSES = len(GestureLabel)


class ChannelSet(enum.Enum):
    Inertial3 = enum.auto() # 线性加速度 ax, ay, az
    Capacitive4 = enum.auto() # 电容通道: 手腕, 拇指, 食指, 小指

    @property
    def channels(self) -> int:
        match self:
            case ChannelSet.Inertial3:
                return 3
            case ChannelSet.Capacitive4:
                return 4
            case _:
                raise ConfigError(f'未知的通道组{self}')


class GateStage(enum.IntEnum):
    """
    分级门控到达的阶段, 同时也是功耗状态
    """
    Idle = 0 # 只有运动检测
    InertialActive = 1 # 惯性模型已运行
    CapacitiveActive = 2 # 电容模型已运行


class RunMode(enum.Enum):
    Train = enum.auto()
    Infer = enum.auto()


@dataclass(frozen=True)
class SensorFrame:
    """
    一个约 50Hz 的采样点.
    cap 的顺序固定为 1=手腕, 2=拇指, 3=食指, 4=小指, 数值是转换器原始计数.
    """
    t: float
    accel: tuple[float, float, float]
    cap: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.accel) != 3:
            raise FrameError(f'加速度必须是3个分量: {self.accel}')
        if len(self.cap) != 4:
            raise FrameError(f'电容读数必须是4个通道: {self.cap}')
        values = (self.t, *self.accel, *self.cap)
        if not all(math.isfinite(v) for v in values):
            raise FrameError(f'采样含有非有限数值: t={self.t}')

    @property
    def row(self) -> tuple[float, ...]:
        return self.t, *self.accel, *self.cap


@dataclass(frozen=True, eq=False)
class Window:
    """
    data 的形状为 (通道数, 窗长), start_index 是窗口首帧在会话中的下标
    """
    data: np.ndarray
    channel_set: ChannelSet
    normalized: bool
    start_index: int

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != self.channel_set.channels:
            raise DataError(f'窗口形状{self.data.shape}与通道组{self.channel_set.name}不符')
        if self.normalized and self.data.size:
            if self.data.min() < 0.0 or self.data.max() > 1.0:
                raise DataError(f'归一化窗口的数值越出[0, 1]: start={self.start_index}')

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MovementDetectorConfig:
    span: int = 6
    # 默认值只是占位, 实际使用时会被静止段标定的结果覆盖
    threshold: float = 0.5

    def __post_init__(self):
        if self.span < 1:
            raise ConfigError(f'运动检测的样本跨度必须 >= 1: {self.span}')
        if not self.threshold >= 0:
            raise ConfigError(f'运动检测阈值必须 >= 0: {self.threshold}')


@dataclass(frozen=True)
class PowerModel:
    """
    各门控阶段的整机功耗(瓦), 是记账模型而非测量值
    """
    idle_watts: float = 0.84
    inertial_watts: float = 0.94
    full_watts: float = 1.15

    def __post_init__(self):
        if not (0 < self.idle_watts <= self.inertial_watts <= self.full_watts):
            raise ConfigError(
                f'功耗必须满足 0 < idle <= inertial <= full: '
                f'{self.idle_watts}, {self.inertial_watts}, {self.full_watts}'
            )

    def watts(self, stage: GateStage) -> float:
        match stage:
            case GateStage.Idle:
                return self.idle_watts
            case GateStage.InertialActive:
                return self.inertial_watts
            case GateStage.CapacitiveActive:
                return self.full_watts
            case _:
                raise ConfigError(f'未知的功耗状态: {stage}')


@dataclass(frozen=True)
class GateState:
    stage: GateStage = GateStage.Idle
    last_decision: GestureLabel | None = None
    window_clock: int = -1


@dataclass(frozen=True)
class RecognitionEvent:
    window_start_index: int
    label: GestureLabel
    confidence: float
    stage_reached: GateStage
    power_watts: float

    def __post_init__(self):
        if self.stage_reached < GateStage.CapacitiveActive and self.label != GestureLabel.Null:
            raise DataError(f'电容模型未运行时只能输出 Null: {self}')
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f'置信度必须在[0, 1]之间: {self.confidence}')


@dataclass(frozen=True)
class GestureEvent:
    label: GestureLabel
    start_window: int
    end_window: int # 不包含

    def __post_init__(self):
        if self.start_window >= self.end_window:
            raise DataError(f'手势事件的区间为空: {self}')

    @property
    def length(self) -> int:
        return self.end_window - self.start_window


@dataclass(frozen=True, eq=False)
class LabeledSession:
    """
    一次连续录制, 逐帧标注.
    为了训练时的切窗效率, 帧以列数组的形式保存, 需要逐帧对象时使用 frames.
    """
    session_id: str
    t: np.ndarray
    accel: np.ndarray
    cap: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        n = self.t.shape[0]
        if self.accel.shape != (n, 3) or self.cap.shape != (n, 4) or self.labels.shape != (n, ):
            raise DataError(
                f'会话{self.session_id}的列长度不一致: '
                f't={self.t.shape}, accel={self.accel.shape}, cap={self.cap.shape}, labels={self.labels.shape}'
            )
        if not (np.isfinite(self.t).all() and np.isfinite(self.accel).all() and np.isfinite(self.cap).all()):
            raise DataError(f'会话{self.session_id}含有非有限数值')
        if n > 1 and not (np.diff(self.t) > 0).all():
            raise DataError(f'会话{self.session_id}的时间戳不是严格递增')
        if n and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise DataError(f'会话{self.session_id}的标签越界')

    def __len__(self):
        return self.t.shape[0]

    def frame(self, index: int) -> SensorFrame:
        return SensorFrame(
            t=float(self.t[index]),
            accel=tuple(float(v) for v in self.accel[index]),
            cap=tuple(float(v) for v in self.cap[index]),
        )

    @property
    def frames(self) -> Iterator[SensorFrame]:
        for i in range(len(self)):
            yield self.frame(i)

    def segments(self) -> list[tuple[GestureLabel, int, int]]:
        """
        逐帧标签的连续段 (label, start, end)
        """
        labels = self.labels
        if not len(labels):
            return list()
        cuts = np.flatnonzero(np.diff(labels)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [len(labels)]))
        return [(GestureLabel(int(labels[s])), int(s), int(e)) for s, e in zip(starts, ends)]


@dataclass(frozen=True, eq=False)
class Dataset:
    sessions: tuple[LabeledSession, ...]

    def __post_init__(self):
        if not self.sessions:
            raise DataError('数据集至少需要一个会话')
        ids = [s.session_id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise DataError(f'会话编号重复: {ids}')

    def __len__(self):
        return len(self.sessions)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """
    行是真实类别, 列是预测类别
    """
    counts: np.ndarray

    def __post_init__(self):
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise DataError(f'混淆矩阵必须是方阵: {self.counts.shape}')
        if (self.counts < 0).any():
            raise DataError('混淆矩阵的计数不能为负')

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def __add__(self, other: 'ConfusionMatrix') -> 'ConfusionMatrix':
        return ConfusionMatrix(counts=self.counts + other.counts)


@dataclass(frozen=True, eq=False)
class FoldResult:
    test_session: str
    matrix: ConfusionMatrix | None = None
    matrix_smoothed: ConfusionMatrix | None = None
    macro_f1: float = 0.0
    macro_f1_smoothed: float = 0.0
    inertial_f1: float = 0.0 # 惯性模型单独评估的 Null/Activity 二分类 F1
    capacitive_f1: float = 0.0 # 电容模型不经门控, 对全部窗口的宏 F1
    threshold: float = 0.0
    inertial_invocations: int = 0
    capacitive_invocations: int = 0
    stage_counts: dict[str, int] = field(default_factory=dict)
    joules: float = 0.0
    average_watts: float = 0.0
    savings: float = 0.0
    inertial_epochs: int = 0
    capacitive_epochs: int = 0
    error: str = ''

    @property
    def ok(self) -> bool:
        return not self.error and self.matrix is not None


@dataclass(frozen=True, eq=False)
class EvalReport:
    folds: tuple[FoldResult, ...]

    @property
    def ok_folds(self) -> list[FoldResult]:
        return [f for f in self.folds if f.ok]

    def _mean(self, attr: str) -> float:
        folds = self.ok_folds
        if not folds:
            return 0.0
        return float(np.mean([getattr(f, attr) for f in folds]))

    @property
    def mean_macro_f1(self) -> float:
        return self._mean('macro_f1')

    @property
    def mean_macro_f1_smoothed(self) -> float:
        return self._mean('macro_f1_smoothed')

    @property
    def mean_inertial_f1(self) -> float:
        return self._mean('inertial_f1')

    @property
    def mean_capacitive_f1(self) -> float:
        return self._mean('capacitive_f1')

    @property
    def mean_savings(self) -> float:
        return self._mean('savings')

    def aggregate(self, smoothed: bool = False) -> ConfusionMatrix | None:
        matrices = [f.matrix_smoothed if smoothed else f.matrix for f in self.ok_folds]
        if not matrices:
            return None
        total = matrices[0]
        for m in matrices[1:]:
            total = total + m
        return total


class JsonDefault:
    @classmethod
    def json_default(cls, obj):
        if isinstance(obj, ConfusionMatrix):
            return {
                'type': 'confusionMatrix',
                'total': obj.total,
                'counts': obj.counts.tolist(),
            }
        if isinstance(obj, FoldResult):
            return {
                'type': 'foldResult',
                'testSession': obj.test_session,
                'error': obj.error or None,
                'macroF1': obj.macro_f1,
                'macroF1Smoothed': obj.macro_f1_smoothed,
                'inertialF1': obj.inertial_f1,
                'capacitiveF1': obj.capacitive_f1,
                'threshold': obj.threshold,
                'inertialInvocations': obj.inertial_invocations,
                'capacitiveInvocations': obj.capacitive_invocations,
                'stageCounts': obj.stage_counts,
                'joules': obj.joules,
                'averageWatts': obj.average_watts,
                'savings': obj.savings,
                'inertialEpochs': obj.inertial_epochs,
                'capacitiveEpochs': obj.capacitive_epochs,
                'matrix': cls.json_default(obj.matrix) if obj.matrix is not None else None,
                'matrixSmoothed': cls.json_default(obj.matrix_smoothed) if obj.matrix_smoothed is not None else None,
            }
        if isinstance(obj, EvalReport):
            aggregate = obj.aggregate()
            aggregate_smoothed = obj.aggregate(smoothed=True)
            return {
                'type': 'evalReport',
                'folds': len(obj.folds),
                'okFolds': len(obj.ok_folds),
                'meanMacroF1': obj.mean_macro_f1,
                'meanMacroF1Smoothed': obj.mean_macro_f1_smoothed,
                'meanInertialF1': obj.mean_inertial_f1,
                'meanCapacitiveF1': obj.mean_capacitive_f1,
                'meanSavings': obj.mean_savings,
                'aggregate': cls.json_default(aggregate) if aggregate is not None else None,
                'aggregateSmoothed': cls.json_default(aggregate_smoothed) if aggregate_smoothed is not None else None,
                'foldResults': [cls.json_default(f) for f in obj.folds],
            }
        if isinstance(obj, RecognitionEvent):
            return {
                'type': 'recognitionEvent',
                'windowStartIndex': obj.window_start_index,
                'label': obj.label.name,
                'confidence': obj.confidence,
                'stage': obj.stage_reached.name,
                'watts': obj.power_watts,
            }
        if isinstance(obj, GestureEvent):
            return {
                'type': 'gestureEvent',
                'label': obj.label.name,
                'startWindow': obj.start_window,
                'endWindow': obj.end_window,
            }
        if isinstance(obj, PowerModel):
            return {
                'type': 'powerModel',
                'idleWatts': obj.idle_watts,
                'inertialWatts': obj.inertial_watts,
                'fullWatts': obj.full_watts,
            }
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        raise TypeError(f"Object of type {obj.__class__.__name__} is not JSON serializable")


class GgGlobalConfig:
    # 张量计算的默认精度, 模型文件里的权重固定为小端 32 位浮点
    DTYPE: Type[np.floating] = np.float32
    # 模型文件的魔数和格式版本, 版本不一致的文件拒绝读取
    MODEL_MAGIC: bytes = b'GGNN'
    MODEL_VERSION: int = 1
    # 如果需要定制报告的 json 结构, 这里替换为自定义的类
    JSON_DEFAULT: Type[JsonDefault] = JsonDefault


__all__ = [
    'GloveError',
    'ConfigError',
    'DataError',
    'FrameError',
    'ModelError',
    'ModelFileError',
    'GestureLabel',
    'N_CLASSES',
    'ChannelSet',
    'GateStage',
    'RunMode',
    'SensorFrame',
    'Window',
    'MovementDetectorConfig',
    'PowerModel',
    'GateState',
    'RecognitionEvent',
    'GestureEvent',
    'LabeledSession',
    'Dataset',
    'ConfusionMatrix',
    'FoldResult',
    'EvalReport',
    'JsonDefault',
    'GgGlobalConfig',
]
