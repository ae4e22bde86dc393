from threading import Lock
from glovegate.tool.time import TimeTools


class FramePacer:
    """
    按固定频率放行的节拍器, 用于把会话文件按采样率回放.
    放行时刻锚定在第一次放行的时间上, 单次处理变慢不会累积漂移,
    处理落后时不补睡, 直接放行.
    """
    def __init__(self, rate_hz: float = 50.0):
        assert isinstance(rate_hz, (int, float, ))
        assert rate_hz > 0
        self._period = 1.0 / float(rate_hz)
        self._origin: float | None = None
        self._released = 0
        self._lag = 0.0
        self._lock = Lock()

    @property
    def period(self) -> float:
        return self._period

    @property
    def released(self) -> int:
        return self._released

    @property
    def max_lag(self) -> float:
        """
        实际放行时刻落后于计划时刻的最大值(秒)
        """
        return self._lag

    def consume(self):
        with self._lock:
            now = TimeTools.monotonic()
            if self._origin is None:
                self._origin = now
            due = self._origin + self._released * self._period
            secs = due - now
            if secs > 0:
                TimeTools.sleep(secs=secs)
            else:
                self._lag = max(self._lag, -secs)
            self._released += 1


__all__ = ["FramePacer", ]
