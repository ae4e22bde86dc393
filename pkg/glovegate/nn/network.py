import logging
from dataclasses import dataclass
import numpy as np
from glovegate.model import *
from glovegate.nn.base import *
from glovegate.nn.layers import *


logger = logging.getLogger(__name__)

# 交叉熵取对数前的概率下限
PROB_FLOOR = 1e-12


def init_weights(spec: ModelSpec, seed: int = 0, dtype=None) -> ModelWeights:
    """
    卷积和全连接用 glorot 均匀分布, 归一化层增益 1 偏移 0; 同一个 seed 得到同样的权重
    """
    dtype = dtype or GgGlobalConfig.DTYPE
    rng = np.random.default_rng(seed)
    blocks = [layer.init_block(rng, dtype) for layer in build_layers(spec)]
    return ModelWeights(blocks=blocks, version=GgGlobalConfig.MODEL_VERSION)


def check_weights(spec: ModelSpec, w: ModelWeights):
    layers = build_layers(spec)
    if len(layers) != len(w.blocks):
        raise ModelError(f'模型{spec.name}有{len(layers)}层, 但权重有{len(w.blocks)}个参数块')
    for layer, block in zip(layers, w.blocks):
        layer.check_block(block)


def count_parameters(spec: ModelSpec) -> int:
    return sum(layer.count_trainable() for layer in build_layers(spec))


def parameter_breakdown(spec: ModelSpec) -> list[tuple[str, int]]:
    return [(layer.name, layer.count_trainable()) for layer in build_layers(spec)]


def flatten_length(spec: ModelSpec) -> int:
    for layer in build_layers(spec):
        if layer.spec.kind == LayerKind.Flatten:
            return layer.output_shape[0]
    raise ModelError(f'模型{spec.name}没有 Flatten 层')


def arena_bytes(spec: ModelSpec, itemsize: int = 4) -> int:
    """
    中间张量空间的粗略估计: 相邻两层输入加输出激活的峰值, 仅作参考
    """
    sizes = [int(np.prod(spec.input_shape))] + [layer.activation_size() for layer in build_layers(spec)]
    return max(a + b for a, b in zip(sizes[:-1], sizes[1:])) * itemsize


def layer_forward(
        spec: LayerSpec,
        block: Block,
        x: np.ndarray,
        mode: RunMode = RunMode.Infer,
        rng: np.random.Generator = None,
) -> np.ndarray:
    """
    单独运行一层, 输入形状取自 x (第一个轴是批)
    """
    x = np.asarray(x)
    layer = LayerRegister.get(spec.kind)(spec, tuple(x.shape[1:]), 0)
    layer.check_block(block)
    y, _ = layer.forward(block, x, mode, rng)
    return y


def _check_finite(layer: BaseLayer, x: np.ndarray):
    if not np.isfinite(x).all():
        raise LayerError(layer, '输出含有非有限数值')


def forward_batch(
        spec: ModelSpec,
        w: ModelWeights,
        xs: np.ndarray,
        mode: RunMode = RunMode.Infer,
        rng: np.random.Generator = None,
) -> tuple[np.ndarray, list]:
    layers = build_layers(spec)
    if len(layers) != len(w.blocks):
        raise ModelError(f'模型{spec.name}有{len(layers)}层, 但权重有{len(w.blocks)}个参数块')
    x = np.asarray(xs).astype(w.dtype, copy=False)
    if x.shape[1:] != tuple(spec.input_shape):
        raise ModelError(f'模型{spec.name}的输入形状应为{spec.input_shape}, 实际{x.shape[1:]}')
    caches = list()
    for layer, block in zip(layers, w.blocks):
        x, cache = layer.forward(block, x, mode, rng)
        _check_finite(layer, x)
        caches.append(cache)
    return x, caches


def predict_proba(spec: ModelSpec, w: ModelWeights, xs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    n_out = build_layers(spec)[-1].output_shape[0]
    if not len(xs):
        return np.zeros((0, n_out), dtype=w.dtype)
    parts = list()
    for i in range(0, len(xs), batch_size):
        probs, _ = forward_batch(spec, w, xs[i:i + batch_size], RunMode.Infer)
        parts.append(probs)
    return np.concatenate(parts, axis=0)


def model_forward(spec: ModelSpec, w: ModelWeights, x: np.ndarray) -> np.ndarray:
    """
    单个样本的推理, 返回概率向量
    """
    x = np.asarray(x)
    if x.shape != tuple(spec.input_shape):
        raise ModelError(f'模型{spec.name}的输入形状应为{spec.input_shape}, 实际{x.shape}')
    probs, _ = forward_batch(spec, w, x[None], RunMode.Infer)
    return probs[0]


def cross_entropy(probs: np.ndarray, target: int) -> float:
    probs = np.asarray(probs)
    if not 0 <= target < probs.shape[-1]:
        raise ModelError(f'目标类别{target}超出概率向量长度{probs.shape[-1]}')
    return float(-np.log(max(float(probs[target]), PROB_FLOOR)))


def batch_loss(
        spec: ModelSpec,
        w: ModelWeights,
        xs: np.ndarray,
        targets: np.ndarray,
        mode: RunMode = RunMode.Train,
        rng: np.random.Generator = None,
) -> float:
    probs, _ = forward_batch(spec, w, xs, mode, rng)
    picked = probs[np.arange(len(targets)), targets]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


@dataclass
class Gradients:
    blocks: list[Block]
    loss: float
    correct: int


def backward(
        spec: ModelSpec,
        w: ModelWeights,
        xs: np.ndarray,
        targets: np.ndarray,
        rng: np.random.Generator = None,
) -> Gradients:
    """
    训练模式下一个批的平均交叉熵对全部可训练参数的梯度.
    Softmax 与交叉熵合并求导, BatchNorm 的滑动统计量在这里按动量原地更新.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if not len(targets):
        raise ModelError('反向传播的批不能为空')
    if len(targets) != len(xs):
        raise ModelError(f'样本数{len(xs)}与标签数{len(targets)}不一致')
    layers = build_layers(spec)
    n_out = layers[-1].output_shape[0]
    if targets.min() < 0 or targets.max() >= n_out:
        raise ModelError(f'标签超出输出类别数{n_out}')
    probs, caches = forward_batch(spec, w, xs, RunMode.Train, rng)
    n = len(targets)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, targets], PROB_FLOOR)).mean())
    dy = probs.copy()
    dy[rows, targets] -= 1.0
    dy /= n
    grads: list[Block] = [dict() for _ in layers]
    for i in range(len(layers) - 2, -1, -1):
        dy, grads[i] = layers[i].backward(w.blocks[i], caches[i], dy)
    for layer, block, cache in zip(layers, w.blocks, caches):
        layer.update_state(block, cache)
    correct = int((probs.argmax(axis=1) == targets).sum())
    return Gradients(blocks=grads, loss=loss, correct=correct)


class TrainedModel:
    """
    规范加权重的推理封装, 记录被调用的次数, 用于验证门控的惰性
    """
    def __init__(self, spec: ModelSpec, weights: ModelWeights):
        check_weights(spec, weights)
        self.spec = spec
        self.weights = weights
        self.invocations = 0

    @property
    def n_classes(self) -> int:
        return build_layers(self.spec)[-1].output_shape[0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        self.invocations += 1
        return model_forward(self.spec, self.weights, x)

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        return predict_proba(self.spec, self.weights, xs)


__all__ = [
    'PROB_FLOOR',
    'init_weights',
    'check_weights',
    'count_parameters',
    'parameter_breakdown',
    'flatten_length',
    'arena_bytes',
    'layer_forward',
    'forward_batch',
    'predict_proba',
    'model_forward',
    'cross_entropy',
    'batch_loss',
    'Gradients',
    'backward',
    'TrainedModel',
]
