"""
小型一维卷积网络引擎的抽象层.

网络由 ModelSpec 声明(可序列化的层列表), 参数保存在 ModelWeights 中.
每种层在 layers.py 里用 @layer_register 注册一个 BaseLayer 子类,
负责形状推导, 参数初始化, 前向和反向计算.
所有计算都以批为单位, 特征图形状为 (批, 通道, 长度), 向量为 (批, n).
"""
import json
import enum
import functools
from abc import ABC
from typing import Type, Any
from dataclasses import dataclass, field, asdict
import numpy as np
from glovegate.model import *


class LayerKind(enum.Enum):
    Conv1D = enum.auto()
    BatchNorm = enum.auto()
    Norm = enum.auto() # 电容模型第一层卷积后的额外归一化层
    MaxPool1D = enum.auto()
    Dropout = enum.auto()
    Flatten = enum.auto()
    Dense = enum.auto()
    ReLU = enum.auto()
    Softmax = enum.auto()


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filters: int = 0
    kernel_size: int = 0
    padding: str = 'same'
    pool_size: int = 0
    stride: int = 0
    rate: float = 0.0
    units: int = 0

    def __post_init__(self):
        match self.kind:
            case LayerKind.Conv1D:
                if self.filters < 1 or self.kernel_size < 1:
                    raise ModelError(f'卷积层的 filters/kernel_size 必须 >= 1: {self}')
                if self.padding not in ('same', 'valid', ):
                    raise ModelError(f'不支持的卷积填充方式: {self.padding}')
            case LayerKind.MaxPool1D:
                if self.pool_size < 1 or self.stride < 1:
                    raise ModelError(f'池化层的 pool_size/stride 必须 >= 1: {self}')
                if self.padding not in ('same', 'valid', ):
                    raise ModelError(f'不支持的池化填充方式: {self.padding}')
            case LayerKind.Dropout:
                if not 0.0 <= self.rate < 1.0:
                    raise ModelError(f'dropout 比例必须在[0, 1)之间: {self.rate}')
            case LayerKind.Dense:
                if self.units < 1:
                    raise ModelError(f'全连接层的 units 必须 >= 1: {self}')

    def to_dict(self) -> dict:
        """
        只保留与层种类相关的字段, 作为规范文本的一部分
        """
        d = asdict(self)
        d['kind'] = self.kind.name
        keep = {
            LayerKind.Conv1D: ('filters', 'kernel_size', 'padding', ),
            LayerKind.MaxPool1D: ('pool_size', 'stride', 'padding', ),
            LayerKind.Dropout: ('rate', ),
            LayerKind.Dense: ('units', ),
        }.get(self.kind, tuple())
        return {k: v for k, v in d.items() if k == 'kind' or k in keep}

    @classmethod
    def from_dict(cls, d: dict) -> 'LayerSpec':
        args = dict(d)
        args['kind'] = LayerKind[args['kind']]
        return cls(**args)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple[int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise ModelError(f'输入形状必须是 (通道, 长度): {self.input_shape}')
        if not self.layers or self.layers[-1].kind != LayerKind.Softmax:
            raise ModelError(f'模型{self.name}的最后一层必须是 Softmax')

    def to_text(self) -> str:
        """
        规范文本: 键排序的紧凑 json, 相同的结构总是得到相同的字节
        """
        d = {
            'name': self.name,
            'inputShape': list(self.input_shape),
            'layers': [layer.to_dict() for layer in self.layers],
        }
        return json.dumps(d, sort_keys=True, separators=(',', ':'))

    @classmethod
    def from_text(cls, text: str) -> 'ModelSpec':
        try:
            d = json.loads(text)
            return cls(
                name=d['name'],
                input_shape=tuple(d['inputShape']),
                layers=tuple(LayerSpec.from_dict(item) for item in d['layers']),
            )
        except (KeyError, TypeError, json.JSONDecodeError) as ex:
            raise ModelFileError(f'模型规范文本无法解析: {ex}')


# 每层一个参数块, 键名到数组; 没有参数的层是空字典
Block = dict[str, np.ndarray]


@dataclass
class ModelWeights:
    blocks: list[Block]
    version: int = field(default=1)

    def copy(self) -> 'ModelWeights':
        return ModelWeights(
            blocks=[{k: v.copy() for k, v in block.items()} for block in self.blocks],
            version=self.version,
        )

    @property
    def dtype(self):
        for block in self.blocks:
            for v in block.values():
                return v.dtype
        return GgGlobalConfig.DTYPE


class LayerError(ModelError):
    def __init__(self, layer: 'BaseLayer', ex, *args, **kwargs):
        self.layer = layer
        super().__init__(f'[{layer.index}]<{layer.spec.kind.name} {layer.name}>异常: {ex}')


class BaseLayer(ABC):
    """
    层的公共接口.
    cache 是前向时留给反向使用的中间量, 由各层自行定义内容.
    """
    # 参与训练的参数键名, 顺序即序列化顺序
    TRAINABLE: tuple[str, ...] = tuple()
    # 不参与训练但需要保存的状态, 例如 BatchNorm 的滑动统计量
    STATE: tuple[str, ...] = tuple()

    def __init__(self, spec: LayerSpec, input_shape: tuple[int, ...], index: int):
        self.spec = spec
        self.input_shape = input_shape
        self.index = index
        self.output_shape = self.infer_shape(input_shape)

    @property
    def name(self) -> str:
        return f'{self.spec.kind.name.lower()}_{self.index}'

    @property
    def keys(self) -> tuple[str, ...]:
        return self.TRAINABLE + self.STATE

    def infer_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return dict()

    def count_trainable(self) -> int:
        shapes = self.param_shapes()
        return int(sum(np.prod(shapes[k]) for k in self.TRAINABLE))

    def init_block(self, rng: np.random.Generator, dtype) -> Block:
        return dict()

    def check_block(self, block: Block):
        shapes = self.param_shapes()
        if set(block.keys()) != set(self.keys):
            raise LayerError(self, f'参数块的键{sorted(block.keys())}与期望{sorted(self.keys)}不符')
        for k, v in block.items():
            if v.shape != shapes[k]:
                raise LayerError(self, f'参数{k}的形状{v.shape}与期望{shapes[k]}不符')

    def forward(self, block: Block, x: np.ndarray, mode: RunMode, rng: np.random.Generator = None) -> tuple[np.ndarray, Any]:
        raise NotImplementedError

    def backward(self, block: Block, cache: Any, dy: np.ndarray) -> tuple[np.ndarray, Block]:
        raise NotImplementedError

    def update_state(self, block: Block, cache: Any):
        pass

    def activation_size(self) -> int:
        return int(np.prod(self.output_shape))


class LayerRegister:
    _D: dict[LayerKind, Type[BaseLayer]] = dict()

    @classmethod
    def register(cls, layer_class: Type[BaseLayer], kind: LayerKind):
        if kind in cls._D:
            raise ValueError(f"Duplicate layer kind '{kind.name}'")
        cls._D[kind] = layer_class

    @classmethod
    def get(cls, kind: LayerKind) -> Type[BaseLayer]:
        layer_class = cls._D.get(kind)
        if layer_class is None:
            raise ModelError(f'没有注册的层种类: {kind}')
        return layer_class


def layer_register(kind: LayerKind):
    def decorator(cls: Type[BaseLayer]):
        LayerRegister.register(cls, kind)
        return cls
    return decorator


@functools.lru_cache(maxsize=64)
def build_layers(spec: ModelSpec) -> tuple[BaseLayer, ...]:
    """
    按输入形状逐层推导, 得到实例化的层对象; 形状不能衔接时报错
    """
    shape: tuple[int, ...] = tuple(spec.input_shape)
    layers = list()
    for index, layer_spec in enumerate(spec.layers):
        layer_class = LayerRegister.get(layer_spec.kind)
        try:
            layer = layer_class(layer_spec, shape, index)
        except LayerError:
            raise
        except Exception as ex:
            raise ModelError(f'模型{spec.name}第{index}层{layer_spec.kind.name}无法接在形状{shape}之后: {ex}')
        layers.append(layer)
        shape = layer.output_shape
    return tuple(layers)


__all__ = [
    'LayerKind',
    'LayerSpec',
    'ModelSpec',
    'Block',
    'ModelWeights',
    'LayerError',
    'BaseLayer',
    'LayerRegister',
    'layer_register',
    'build_layers',
]
