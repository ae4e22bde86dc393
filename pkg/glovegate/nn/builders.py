"""
两个固定结构的模型.

惯性模型: 3 x [Conv1D(10, 10) -> BatchNorm -> ReLU -> MaxPool1D(5, 5) -> Dropout(0.5)]
         -> Flatten -> Dense(10) -> Dense(2) -> Softmax
电容模型: Conv1D(40, 10) -> Norm -> BatchNorm -> ReLU -> MaxPool1D(5, 5) -> Dropout(0.3)
         -> Conv1D(40, 10) -> BatchNorm -> ReLU -> MaxPool1D(5, 5) -> Dropout(0.3)
         -> Flatten -> Dense(100) -> Dense(9) -> Softmax

惯性模型的池化用 'same' 填充, 100 -> 20 -> 4 -> 1; 按地板除第三次池化会得到长度 0.
"""
import logging
import humanize
from glovegate.model import *
from glovegate.nn.base import *
from glovegate.nn.network import *


logger = logging.getLogger(__name__)

REFERENCE_INERTIAL_PARAMS = 2882
REFERENCE_CAPACITIVE_PARAMS = 49890
INERTIAL_PARAM_BAND = (2200, 3600, )
CAPACITIVE_PARAM_BAND = (38000, 62000, )


def _conv_block(filters: int, kernel_size: int, rate: float, pool_padding: str, extra_norm: bool = False) -> list[LayerSpec]:
    layers = [LayerSpec(LayerKind.Conv1D, filters=filters, kernel_size=kernel_size, padding='same')]
    if extra_norm:
        layers.append(LayerSpec(LayerKind.Norm))
    layers += [
        LayerSpec(LayerKind.BatchNorm),
        LayerSpec(LayerKind.ReLU),
        LayerSpec(LayerKind.MaxPool1D, pool_size=5, stride=5, padding=pool_padding),
        LayerSpec(LayerKind.Dropout, rate=rate),
    ]
    return layers


def _report(spec: ModelSpec, reference_count: int, band: tuple[int, int]) -> int:
    count = count_parameters(spec)
    low, high = band
    if not low <= count <= high:
        raise ModelError(f'模型{spec.name}的参数量{count}不在区间[{low}, {high}]内')
    logger.info(
        f'[{spec.name}]可训练参数{humanize.intcomma(count)}个 (参考值{humanize.intcomma(reference_count)}), '
        f'展平长度{flatten_length(spec)}, 中间张量约{humanize.naturalsize(arena_bytes(spec))}'
    )
    return count


def build_inertial_model(window_len: int = 100) -> ModelSpec:
    layers = list()
    for _ in range(3):
        layers += _conv_block(filters=10, kernel_size=10, rate=0.5, pool_padding='same')
    layers += [
        LayerSpec(LayerKind.Flatten),
        LayerSpec(LayerKind.Dense, units=10),
        LayerSpec(LayerKind.Dense, units=2),
        LayerSpec(LayerKind.Softmax),
    ]
    spec = ModelSpec(name='inertial', input_shape=(3, window_len), layers=tuple(layers))
    if window_len == 100:
        _report(spec, REFERENCE_INERTIAL_PARAMS, INERTIAL_PARAM_BAND)
    return spec


def build_capacitive_model(window_len: int = 100) -> ModelSpec:
    layers = _conv_block(filters=40, kernel_size=10, rate=0.3, pool_padding='valid', extra_norm=True)
    layers += _conv_block(filters=40, kernel_size=10, rate=0.3, pool_padding='valid')
    layers += [
        LayerSpec(LayerKind.Flatten),
        LayerSpec(LayerKind.Dense, units=100),
        LayerSpec(LayerKind.Dense, units=9),
        LayerSpec(LayerKind.Softmax),
    ]
    spec = ModelSpec(name='capacitive', input_shape=(4, window_len), layers=tuple(layers))
    if window_len == 100:
        count = _report(spec, REFERENCE_CAPACITIVE_PARAMS, CAPACITIVE_PARAM_BAND)
        norm = sum(n for layer, (_, n) in zip(spec.layers, parameter_breakdown(spec)) if layer.kind == LayerKind.Norm)
        logger.info(f'[{spec.name}]其中额外归一化层{humanize.intcomma(norm)}个, 其余{humanize.intcomma(count - norm)}个')
    return spec


__all__ = [
    'REFERENCE_INERTIAL_PARAMS',
    'REFERENCE_CAPACITIVE_PARAMS',
    'INERTIAL_PARAM_BAND',
    'CAPACITIVE_PARAM_BAND',
    'build_inertial_model',
    'build_capacitive_model',
]
