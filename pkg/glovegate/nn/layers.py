"""
各层的前向与反向实现.
卷积用 im2col 转成矩阵乘法, 池化记录窗口内最大值的位置供反向散回.
"""
import math
from typing import Any
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from glovegate.model import *
from glovegate.nn.base import *


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _same_pads(total: int) -> tuple[int, int]:
    # 与 keras 一致, 奇数的多余填充放在右侧
    left = total // 2
    return left, total - left


class _FeatureMapLayer(BaseLayer):
    """
    输入必须是 (通道, 长度) 特征图的层
    """
    def infer_shape(self, input_shape):
        if len(input_shape) != 2:
            raise LayerError(self, f'需要 (通道, 长度) 形状的输入, 实际{input_shape}')
        return self.infer_map_shape(*input_shape)

    def infer_map_shape(self, channels: int, length: int) -> tuple[int, int]:
        return channels, length

    def check_input(self, x: np.ndarray):
        if x.shape[1:] != tuple(self.input_shape):
            raise LayerError(self, f'输入形状{x.shape[1:]}与期望{self.input_shape}不符')


class _VectorLayer(BaseLayer):
    def infer_shape(self, input_shape):
        if len(input_shape) != 1:
            raise LayerError(self, f'需要向量输入, 实际{input_shape}, 是否缺少 Flatten')
        return self.infer_vector_shape(input_shape[0])

    def infer_vector_shape(self, n: int) -> tuple[int]:
        return n,

    def check_input(self, x: np.ndarray):
        if x.shape[1:] != tuple(self.input_shape):
            raise LayerError(self, f'输入形状{x.shape[1:]}与期望{self.input_shape}不符')


@layer_register(LayerKind.Conv1D)
class Conv1D(_FeatureMapLayer):
    """
    步长为 1 的互相关: y[f, i] = b[f] + sum_c sum_j W[f, c, j] * xp[c, i + j]
    """
    TRAINABLE = ('kernel', 'bias', )

    @property
    def pads(self) -> tuple[int, int]:
        if self.spec.padding == 'same':
            return _same_pads(self.spec.kernel_size - 1)
        return 0, 0

    def infer_map_shape(self, channels, length):
        left, right = self.pads
        out = length + left + right - self.spec.kernel_size + 1
        if out < 1:
            raise LayerError(self, f'长度{length}不足以做核长{self.spec.kernel_size}的卷积')
        return self.spec.filters, out

    def param_shapes(self):
        channels = self.input_shape[0]
        return {
            'kernel': (self.spec.filters, channels, self.spec.kernel_size),
            'bias': (self.spec.filters, ),
        }

    def init_block(self, rng, dtype):
        f, c, k = self.param_shapes()['kernel']
        return {
            'kernel': _glorot(rng, (f, c, k), fan_in=c * k, fan_out=f * k, dtype=dtype),
            'bias': np.zeros(f, dtype=dtype),
        }

    def forward(self, block, x, mode, rng=None):
        self.check_input(x)
        kernel = block['kernel']
        f, c, k = kernel.shape
        n, _, length = x.shape
        left, right = self.pads
        xp = np.pad(x, ((0, 0), (0, 0), (left, right))) if left or right else x
        out = self.output_shape[1]
        cols = sliding_window_view(xp, k, axis=2)
        cols = cols.transpose(0, 2, 1, 3).reshape(n * out, c * k)
        y = cols @ kernel.reshape(f, c * k).T + block['bias']
        y = y.reshape(n, out, f).transpose(0, 2, 1)
        return np.ascontiguousarray(y), (cols, length)

    def backward(self, block, cache, dy):
        cols, length = cache
        kernel = block['kernel']
        f, c, k = kernel.shape
        n, _, out = dy.shape
        dyr = dy.transpose(0, 2, 1).reshape(n * out, f)
        grads = {
            'kernel': (dyr.T @ cols).reshape(f, c, k),
            'bias': dyr.sum(axis=0),
        }
        dcols = (dyr @ kernel.reshape(f, c * k)).reshape(n, out, c, k)
        left, right = self.pads
        dxp = np.zeros((n, c, length + left + right), dtype=dy.dtype)
        for j in range(k):
            dxp[:, :, j:j + out] += dcols[:, :, :, j].transpose(0, 2, 1)
        return dxp[:, :, left:left + length], grads


@layer_register(LayerKind.BatchNorm)
class BatchNorm(_FeatureMapLayer):
    """
    训练时用批统计量(批和长度两个轴), 推理时用滑动统计量
    """
    TRAINABLE = ('gain', 'shift', )
    STATE = ('mean', 'var', )
    MOMENTUM = 0.99
    EPS = 1e-3

    def param_shapes(self):
        channels = self.input_shape[0]
        return {k: (channels, ) for k in self.keys}

    def init_block(self, rng, dtype):
        channels = self.input_shape[0]
        return {
            'gain': np.ones(channels, dtype=dtype),
            'shift': np.zeros(channels, dtype=dtype),
            'mean': np.zeros(channels, dtype=dtype),
            'var': np.ones(channels, dtype=dtype),
        }

    def check_block(self, block):
        super().check_block(block)
        var = block['var']
        if not np.isfinite(var).all() or (var <= 0).any():
            raise LayerError(self, f'滑动方差必须是正的有限值: {var}')

    @classmethod
    def _per_channel(cls, v: np.ndarray) -> np.ndarray:
        return v[None, :, None]

    def forward(self, block, x, mode, rng=None):
        self.check_input(x)
        if mode == RunMode.Infer:
            inv_std = 1.0 / np.sqrt(block['var'] + self.EPS)
            y = self._per_channel(block['gain'] * inv_std) * (x - self._per_channel(block['mean'])) + self._per_channel(block['shift'])
            return y, None
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - self._per_channel(mean)) * self._per_channel(inv_std)
        y = self._per_channel(block['gain']) * xhat + self._per_channel(block['shift'])
        return y, (xhat, inv_std, mean, var)

    def backward(self, block, cache, dy):
        if cache is None:
            raise LayerError(self, '推理模式的前向结果不能反向')
        xhat, inv_std, _, _ = cache
        m = dy.shape[0] * dy.shape[2]
        grads = {
            'gain': (dy * xhat).sum(axis=(0, 2)),
            'shift': dy.sum(axis=(0, 2)),
        }
        dxhat = dy * self._per_channel(block['gain'])
        dx = self._per_channel(inv_std / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 2), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        )
        return dx, grads

    def update_state(self, block, cache):
        if cache is None:
            return
        _, _, mean, var = cache
        block['mean'] *= self.MOMENTUM
        block['mean'] += (1.0 - self.MOMENTUM) * mean.astype(block['mean'].dtype)
        block['var'] *= self.MOMENTUM
        block['var'] += (1.0 - self.MOMENTUM) * var.astype(block['var'].dtype)


@layer_register(LayerKind.Norm)
class Norm(_FeatureMapLayer):
    """
    每个样本的每个通道沿长度标准化, 再乘加逐位置的可学习增益和偏移.
    训练和推理行为相同, 没有滑动统计量.
    """
    TRAINABLE = ('gain', 'shift', )
    EPS = 1e-3

    def param_shapes(self):
        return {k: tuple(self.input_shape) for k in self.keys}

    def init_block(self, rng, dtype):
        shape = tuple(self.input_shape)
        return {
            'gain': np.ones(shape, dtype=dtype),
            'shift': np.zeros(shape, dtype=dtype),
        }

    def forward(self, block, x, mode, rng=None):
        self.check_input(x)
        mean = x.mean(axis=2, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=2, keepdims=True) + self.EPS)
        xhat = (x - mean) * inv_std
        y = block['gain'] * xhat + block['shift']
        return y, (xhat, inv_std)

    def backward(self, block, cache, dy):
        xhat, inv_std = cache
        length = dy.shape[2]
        grads = {
            'gain': (dy * xhat).sum(axis=0),
            'shift': dy.sum(axis=0),
        }
        dxhat = dy * block['gain']
        dx = (inv_std / length) * (
            length * dxhat
            - dxhat.sum(axis=2, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=2, keepdims=True)
        )
        return dx, grads


@layer_register(LayerKind.MaxPool1D)
class MaxPool1D(_FeatureMapLayer):
    """
    padding='valid' 丢弃末尾不足一个窗口的余数, 输出长度 floor((L - p) / s) + 1;
    padding='same' 按 keras 的方式用 -inf 补齐, 输出长度 ceil(L / s).
    """
    def _geometry(self, length: int) -> tuple[int, int, int]:
        p, s = self.spec.pool_size, self.spec.stride
        if self.spec.padding == 'same':
            out = -(-length // s)
            total = max((out - 1) * s + p - length, 0)
            left, right = _same_pads(total)
            return out, left, right
        out = (length - p) // s + 1 if length >= p else 0
        return out, 0, 0

    def infer_map_shape(self, channels, length):
        out, _, _ = self._geometry(length)
        if out < 1:
            raise LayerError(self, f'长度{length}不足以做窗口{self.spec.pool_size}的池化')
        return channels, out

    def forward(self, block, x, mode, rng=None):
        self.check_input(x)
        p, s = self.spec.pool_size, self.spec.stride
        length = x.shape[2]
        out, left, right = self._geometry(length)
        xp = np.pad(x, ((0, 0), (0, 0), (left, right)), constant_values=-np.inf) if left or right else x
        windows = sliding_window_view(xp, p, axis=2)[:, :, ::s][:, :, :out]
        arg = windows.argmax(axis=3)
        y = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
        return np.ascontiguousarray(y), (arg, length)

    def backward(self, block, cache, dy):
        arg, length = cache
        p, s = self.spec.pool_size, self.spec.stride
        out, left, right = self._geometry(length)
        n, c, _ = dy.shape
        dxp = np.zeros((n, c, length + left + right), dtype=dy.dtype)
        stop = s * (out - 1) + 1
        for j in range(p):
            dxp[:, :, j:j + stop:s] += dy * (arg == j)
        return dxp[:, :, left:left + length], dict()


@layer_register(LayerKind.Dropout)
class Dropout(BaseLayer):
    """
    推理时恒等; 训练时按 rate 随机置零, 保留的值放大 1 / (1 - rate)
    """
    def forward(self, block, x, mode, rng=None):
        rate = self.spec.rate
        if mode == RunMode.Infer or rate == 0.0:
            return x, None
        assert rng is not None
        mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
        return x * mask, mask

    def backward(self, block, cache, dy):
        if cache is None:
            return dy, dict()
        return dy * cache, dict()


@layer_register(LayerKind.Flatten)
class Flatten(BaseLayer):
    def infer_shape(self, input_shape):
        return int(np.prod(input_shape)),

    def forward(self, block, x, mode, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, block, cache, dy):
        return dy.reshape(cache), dict()


@layer_register(LayerKind.Dense)
class Dense(_VectorLayer):
    TRAINABLE = ('weight', 'bias', )

    def infer_vector_shape(self, n):
        return self.spec.units,

    def param_shapes(self):
        return {
            'weight': (self.input_shape[0], self.spec.units),
            'bias': (self.spec.units, ),
        }

    def init_block(self, rng, dtype):
        n_in, n_out = self.param_shapes()['weight']
        return {
            'weight': _glorot(rng, (n_in, n_out), fan_in=n_in, fan_out=n_out, dtype=dtype),
            'bias': np.zeros(n_out, dtype=dtype),
        }

    def forward(self, block, x, mode, rng=None):
        self.check_input(x)
        return x @ block['weight'] + block['bias'], x

    def backward(self, block, cache, dy):
        x = cache
        grads = {
            'weight': x.T @ dy,
            'bias': dy.sum(axis=0),
        }
        return dy @ block['weight'].T, grads


@layer_register(LayerKind.ReLU)
class ReLU(BaseLayer):
    def forward(self, block, x, mode, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, block, cache, dy):
        return dy * cache, dict()


@layer_register(LayerKind.Softmax)
class Softmax(_VectorLayer):
    def forward(self, block, x, mode, rng=None):
        self.check_input(x)
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        return probs, probs

    def backward(self, block, cache, dy):
        probs = cache
        return probs * (dy - (dy * probs).sum(axis=1, keepdims=True)), dict()


__all__ = [
    'Conv1D',
    'BatchNorm',
    'Norm',
    'MaxPool1D',
    'Dropout',
    'Flatten',
    'Dense',
    'ReLU',
    'Softmax',
]
