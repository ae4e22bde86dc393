"""
传感器数据流: 逐帧接收, 滑动切窗, 窗内归一化, 以及分级识别第 0 级的运动检测.

窗长和步长都以样本数定义(默认 100 / 25, 即 50Hz 下的 2s / 0.5s),
采样率只是"约" 50Hz, 这里不做重采样.
"""
import logging
from collections import deque
from typing import Sequence
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from glovegate.model import *


logger = logging.getLogger(__name__)

WINDOW_LEN = 100
WINDOW_STEP = 25
# 极差小于该值的通道视为常数通道, 输出全零
CONSTANT_EPS = 1e-8


def window_count(n_frames: int, window_len: int = WINDOW_LEN, step: int = WINDOW_STEP) -> int:
    if n_frames < window_len:
        return 0
    return (n_frames - window_len) // step + 1


class WindowBuffer:
    """
    单写者的滑动窗口缓冲.
    第 k 个输出窗口覆盖帧 [k*step, k*step + window_len), 缓冲只保留未来窗口需要的最近 window_len 帧.
    同一帧流要同时得到惯性窗口和电容窗口时, 用 channel_sets 一次切出两组.
    """
    def __init__(
            self,
            window_len: int = WINDOW_LEN,
            step: int = WINDOW_STEP,
            channel_sets: tuple[ChannelSet, ...] = (ChannelSet.Inertial3, ChannelSet.Capacitive4, ),
    ):
        if window_len < 1 or step < 1:
            raise ConfigError(f'窗长和步长必须 >= 1: window_len={window_len}, step={step}')
        assert channel_sets
        self.window_len = window_len
        self.step = step
        self.channel_sets = channel_sets
        self._rows: deque[tuple[float, ...]] = deque(maxlen=window_len)
        self._pushed = 0
        self._last_t: float | None = None

    @property
    def pushed(self) -> int:
        return self._pushed

    @property
    def retained(self) -> int:
        return len(self._rows)

    def reset(self):
        self._rows.clear()
        self._pushed = 0
        self._last_t = None

    def push_frame(self, frame: SensorFrame) -> dict[ChannelSet, Window] | None:
        if self._last_t is not None and not frame.t > self._last_t:
            raise FrameError(f'[{self.__class__.__name__}]第{self._pushed}帧时间戳{frame.t}不晚于上一帧{self._last_t}')
        self._last_t = frame.t
        self._rows.append((*frame.accel, *frame.cap))
        self._pushed += 1
        start = self._pushed - self.window_len
        if start < 0 or start % self.step:
            return None
        block = np.asarray(self._rows, dtype=np.float64).T
        return {cs: _slice_window(block, cs, start) for cs in self.channel_sets}


def _slice_window(block: np.ndarray, channel_set: ChannelSet, start: int) -> Window:
    match channel_set:
        case ChannelSet.Inertial3:
            data = block[0:3]
        case ChannelSet.Capacitive4:
            data = block[3:7]
        case _:
            raise ConfigError(f'未知的通道组{channel_set}')
    return Window(
        data=np.ascontiguousarray(data),
        channel_set=channel_set,
        normalized=False,
        start_index=start,
    )


def push_frame(buffer: WindowBuffer, frame: SensorFrame) -> dict[ChannelSet, Window] | None:
    return buffer.push_frame(frame)


def session_windows(
        session: LabeledSession,
        window_len: int = WINDOW_LEN,
        step: int = WINDOW_STEP,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    整段会话一次性切窗, 与逐帧 push_frame 的输出完全一致.
    返回 (惯性窗口 (N, 3, L), 电容窗口 (N, 4, L), 起始下标 (N, )), 未归一化.
    """
    n = window_count(len(session), window_len, step)
    starts = np.arange(n, dtype=np.int64) * step
    if not n:
        return np.zeros((0, 3, window_len)), np.zeros((0, 4, window_len)), starts
    accel = sliding_window_view(session.accel, window_len, axis=0)[::step][:n]
    cap = sliding_window_view(session.cap, window_len, axis=0)[::step][:n]
    return np.ascontiguousarray(accel), np.ascontiguousarray(cap), starts


def minmax_normalize(data: np.ndarray) -> np.ndarray:
    """
    沿最后一个轴逐通道做 (x - min) / (max - min), 常数通道输出全零
    """
    data = np.asarray(data, dtype=np.float64)
    if not np.isfinite(data).all():
        raise DataError('归一化的输入含有非有限数值')
    low = data.min(axis=-1, keepdims=True)
    span = data.max(axis=-1, keepdims=True) - low
    flat = span < CONSTANT_EPS
    out = (data - low) / np.where(flat, 1.0, span)
    out = np.where(flat, 0.0, out)
    return np.clip(out, 0.0, 1.0)


def normalize_window(w: Window) -> Window:
    if w.normalized:
        raise DataError(f'窗口{w.start_index}已经归一化过')
    return Window(
        data=minmax_normalize(w.data),
        channel_set=w.channel_set,
        normalized=True,
        start_index=w.start_index,
    )


def _accel_rows(frames: Sequence[SensorFrame] | np.ndarray) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        rows = frames
    else:
        rows = np.asarray([f.accel for f in frames], dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise DataError(f'加速度数据的形状应为 (n, 3): {rows.shape}')
    return rows


def movement_score(frames: Sequence[SensorFrame] | np.ndarray, span: int = 6) -> float:
    """
    跨度内 |ax| + |ay| + |az| 的总和
    """
    rows = _accel_rows(frames)
    if rows.shape[0] != span:
        raise DataError(f'运动评分需要恰好{span}帧, 实际{rows.shape[0]}帧')
    return float(np.abs(rows).sum())


def detect_movement(score: float, cfg: MovementDetectorConfig) -> bool:
    return score > cfg.threshold


def movement_scores(accel: np.ndarray, span: int = 6) -> np.ndarray:
    """
    对一段加速度逐位置计算跨度为 span 的滑动运动评分
    """
    rows = _accel_rows(accel)
    if rows.shape[0] < span:
        return np.zeros(0)
    per_frame = np.abs(rows).sum(axis=1)
    return sliding_window_view(per_frame, span).sum(axis=1)


def calibrate_threshold(accel: np.ndarray | Sequence[np.ndarray], span: int = 6, k: float = 3.0) -> float:
    """
    用静止段的运动评分标定阈值: mean + k * std.
    传入多段时分别计算评分再合并, 不跨段拼接.
    """
    segments = [accel] if isinstance(accel, np.ndarray) else list(accel)
    scores = np.concatenate([movement_scores(a, span) for a in segments]) if segments else np.zeros(0)
    if not scores.size:
        raise DataError(f'标定阈值至少需要{span}帧静止数据')
    threshold = float(scores.mean() + k * scores.std())
    logger.info(f'[calibrate_threshold]静止段{scores.size}个评分, 阈值{threshold:.4f}')
    return threshold


__all__ = [
    'WINDOW_LEN',
    'WINDOW_STEP',
    'window_count',
    'WindowBuffer',
    'push_frame',
    'session_windows',
    'minmax_normalize',
    'normalize_window',
    'movement_score',
    'detect_movement',
    'movement_scores',
    'calibrate_threshold',
]
