import time
from datetime import timedelta
import humanize


class TimeTools:
    @classmethod
    def monotonic(cls) -> float:
        """
        单调时钟, 秒单位, 用于节拍回放和延迟测量
        """
        return time.perf_counter()

    @classmethod
    def sleep(cls, secs: float):
        if secs <= 0.0:
            return
        time.sleep(secs)

    @classmethod
    def precisedelta(cls, value, minimum_unit='seconds', suppress=(), format='%0.2f'):
        if isinstance(value, (int, float, )):
            value = timedelta(seconds=value)
        return humanize.precisedelta(value=value, minimum_unit=minimum_unit, suppress=suppress, format=format)

    @classmethod
    def milliseconds(cls, secs: float) -> str:
        return cls.precisedelta(secs, minimum_unit='milliseconds', format='%0.1f')


__all__ = ['TimeTools', ]
