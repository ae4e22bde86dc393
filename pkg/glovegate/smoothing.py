"""
逐窗口标签流的时间平滑: 同标签夹住的短间隙填充, 居中多数投票, 以及游程编码成手势事件.
标签流中相邻两个标签相隔一个窗口步(默认 0.5s).
"""
from collections import deque
from typing import Iterable, Sequence
import numpy as np
from glovegate.model import *


DEFAULT_MAX_GAP = 1
DEFAULT_MAJORITY_K = 5


def _check_labels(labels: Sequence[int]) -> list[int]:
    result = [int(v) for v in labels]
    for i, v in enumerate(result):
        if not 0 <= v < N_CLASSES:
            raise DataError(f'第{i}个标签{v}不是有效类别')
    return result


def _runs(labels: list[int]) -> list[list[int]]:
    runs: list[list[int]] = list()
    for v in labels:
        if runs and runs[-1][0] == v:
            runs[-1][1] += 1
        else:
            runs.append([v, 1])
    return runs


def gap_fill(labels: Sequence[int], max_gap: int = DEFAULT_MAX_GAP) -> list[int]:
    """
    内部的游程长度 <= max_gap, 两侧游程标签相同且都比它长时, 改写为两侧的标签.
    合并直到没有可改写的游程, 首尾游程从不改写, 结果是幂等的.
    两侧都更长的要求保证了正确的短游程不会被当作间隙吞掉.
    """
    if max_gap < 1:
        raise ConfigError(f'max_gap 必须 >= 1: {max_gap}')
    runs = _runs(_check_labels(labels))
    i = 1
    while i < len(runs) - 1:
        left, gap, right = runs[i - 1], runs[i], runs[i + 1]
        if gap[1] <= max_gap and left[0] == right[0] and left[1] > gap[1] and right[1] > gap[1]:
            runs[i - 1: i + 2] = [[left[0], left[1] + gap[1] + right[1]]]
            # 合并后的游程变长, 它左右两侧的游程可能因此成为可填充的间隙
            i = max(i - 2, 1)
        else:
            i += 1
    return [label for label, n in runs for _ in range(n)]


def _vote(window: Iterable[int], original: int) -> int:
    counts = np.bincount(np.fromiter(window, dtype=np.int64), minlength=N_CLASSES)
    top = counts.max()
    if counts[original] == top:
        return original
    return int(np.flatnonzero(counts == top)[0])


def _check_k(k: int):
    if k < 1 or k % 2 == 0:
        raise ConfigError(f'多数投票的窗口数必须是正奇数: {k}')


def majority_smooth(labels: Sequence[int], k: int = DEFAULT_MAJORITY_K) -> list[int]:
    """
    每个位置取以它为中心的 k 个标签的多数, 边缘截断.
    平票时保留原标签, 原标签不在平票之列时取最小的标签.
    """
    _check_k(k)
    labels = _check_labels(labels)
    half = k // 2
    n = len(labels)
    return [_vote(labels[max(0, i - half):min(n, i + half + 1)], labels[i]) for i in range(n)]


class StreamingMajority:
    """
    majority_smooth 的在线版本, 固定滞后 k // 2 个窗口.
    push 在位置 p 的平滑结果可用时返回它, 流结束时用 flush 取出最后的 k // 2 个结果.
    """
    def __init__(self, k: int = DEFAULT_MAJORITY_K):
        _check_k(k)
        self.k = k
        self.lag = k // 2
        self._recent: deque[int] = deque(maxlen=2 * self.lag + 1)
        self._count = 0

    def push(self, label: int) -> int | None:
        (label, ) = _check_labels([label])
        self._recent.append(label)
        self._count += 1
        position = self._count - 1 - self.lag
        if position < 0:
            return None
        return self._smoothed(position, self._count)

    def flush(self) -> list[int]:
        result = [self._smoothed(p, self._count) for p in range(max(self._count - self.lag, 0), self._count)]
        self._recent.clear()
        self._count = 0
        return result

    def _smoothed(self, position: int, end: int) -> int:
        # _recent 保存的是 [end - len(_recent), end) 的标签
        offset = end - len(self._recent)
        recent = list(self._recent)
        lo = max(0, position - self.lag)
        hi = min(end, position + self.lag + 1)
        return _vote(recent[lo - offset:hi - offset], recent[position - offset])


def smooth_labels(labels: Sequence[int], max_gap: int = DEFAULT_MAX_GAP, k: int = DEFAULT_MAJORITY_K) -> list[int]:
    """
    先间隙填充再多数投票
    """
    return majority_smooth(gap_fill(labels, max_gap), k)


def events_from_labels(labels: Sequence[int]) -> list[GestureEvent]:
    events = list()
    start = 0
    for label, n in _runs(_check_labels(labels)):
        events.append(GestureEvent(label=GestureLabel(label), start_window=start, end_window=start + n))
        start += n
    return events


def expand_events(events: Sequence[GestureEvent]) -> list[int]:
    labels = list()
    for event in events:
        if event.start_window != len(labels):
            raise DataError(f'事件不连续: 期望从{len(labels)}开始, 实际{event.start_window}')
        labels.extend([int(event.label)] * event.length)
    return labels


def format_gesture_event(event: GestureEvent) -> str:
    return f'{int(event.label)}, {event.start_window}, {event.end_window}'


__all__ = [
    'DEFAULT_MAX_GAP',
    'DEFAULT_MAJORITY_K',
    'gap_fill',
    'majority_smooth',
    'StreamingMajority',
    'smooth_labels',
    'events_from_labels',
    'expand_events',
    'format_gesture_event',
]
