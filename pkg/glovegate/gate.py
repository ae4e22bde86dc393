"""
分级识别的运行时: 运动检测 -> 惯性模型(Null/手势) -> 电容模型(9 类), 以及各级功耗的记账.

每个窗口步只做一次决策, 后一级只在前一级放行时才运行.
功耗是按阶段计费的模型, 不是测量值.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence
import numpy as np
from glovegate.model import *
from glovegate.nn.network import TrainedModel
from glovegate.stream import *


logger = logging.getLogger(__name__)

# 惯性模型的输出下标
INERTIAL_NULL = 0
INERTIAL_GESTURE = 1


@dataclass(frozen=True)
class GateModels:
    inertial: TrainedModel
    capacitive: TrainedModel

    def __post_init__(self):
        if self.inertial.n_classes != 2:
            raise ModelError(f'惯性模型应输出2类, 实际{self.inertial.n_classes}类')
        if self.capacitive.n_classes != N_CLASSES:
            raise ModelError(f'电容模型应输出{N_CLASSES}类, 实际{self.capacitive.n_classes}类')

    @property
    def invocations(self) -> tuple[int, int]:
        return self.inertial.invocations, self.capacitive.invocations


def _check_pair(inertial_window: Window, capacitive_window: Window):
    if inertial_window.channel_set != ChannelSet.Inertial3:
        raise DataError(f'第一个窗口应为惯性窗口, 实际{inertial_window.channel_set.name}')
    if capacitive_window.channel_set != ChannelSet.Capacitive4:
        raise DataError(f'第二个窗口应为电容窗口, 实际{capacitive_window.channel_set.name}')
    if inertial_window.start_index != capacitive_window.start_index or inertial_window.length != capacitive_window.length:
        raise DataError(
            f'两个窗口覆盖的帧不一致: '
            f'惯性[{inertial_window.start_index}, +{inertial_window.length}), '
            f'电容[{capacitive_window.start_index}, +{capacitive_window.length})'
        )


def _confidence(p) -> float:
    return min(max(float(p), 0.0), 1.0)


def gate_step(
        state: GateState,
        inertial_window: Window,
        capacitive_window: Window,
        models: GateModels,
        detector_cfg: MovementDetectorConfig,
        power: PowerModel,
) -> tuple[GateState, RecognitionEvent]:
    """
    输入是未归一化的同一帧区间的两个窗口, 归一化在各模型前分别进行
    """
    _check_pair(inertial_window, capacitive_window)
    span = detector_cfg.span
    if span > inertial_window.length:
        raise ConfigError(f'运动检测跨度{span}大于窗长{inertial_window.length}')
    start = inertial_window.start_index
    score = movement_score(inertial_window.data[:, -span:].T, span)
    if not detect_movement(score, detector_cfg):
        stage, label, confidence = GateStage.Idle, GestureLabel.Null, 1.0
    else:
        probs = models.inertial.predict(normalize_window(inertial_window).data)
        if int(np.argmax(probs)) != INERTIAL_GESTURE:
            stage, label, confidence = GateStage.InertialActive, GestureLabel.Null, _confidence(probs[INERTIAL_NULL])
        else:
            probs = models.capacitive.predict(normalize_window(capacitive_window).data)
            index = int(np.argmax(probs))
            stage, label, confidence = GateStage.CapacitiveActive, GestureLabel(index), _confidence(probs[index])
    event = RecognitionEvent(
        window_start_index=start,
        label=label,
        confidence=confidence,
        stage_reached=stage,
        power_watts=power.watts(stage),
    )
    new_state = GateState(stage=stage, last_decision=label, window_clock=state.window_clock + 1)
    return new_state, event


def session_energy(timeline: Iterable[tuple[float, GateStage]], power: PowerModel) -> tuple[float, float]:
    """
    timeline 是 (持续秒数, 功耗状态) 的序列, 返回 (焦耳, 平均瓦数)
    """
    joules = 0.0
    total = 0.0
    for duration, stage in timeline:
        if duration < 0:
            raise DataError(f'持续时间不能为负: {duration}')
        joules += duration * power.watts(stage)
        total += duration
    if total <= 0:
        raise DataError('总持续时间为 0, 无法计算平均功率')
    return joules, joules / total


def event_timeline(events: Iterable[RecognitionEvent], step_seconds: float) -> list[tuple[float, GateStage]]:
    """
    每个事件代表一个窗口步, 持续 step_seconds
    """
    return [(step_seconds, e.stage_reached) for e in events]


def gating_savings(events: Sequence[RecognitionEvent], power: PowerModel) -> float:
    """
    1 - 门控平均功率 / 始终全开的平均功率, 各事件时长相同
    """
    if not len(events):
        raise DataError('没有事件, 无法计算门控节省')
    gated = float(np.mean([e.power_watts for e in events]))
    return 1.0 - gated / power.full_watts


def stage_counts(events: Iterable[RecognitionEvent]) -> dict[str, int]:
    counts = {stage.name: 0 for stage in GateStage}
    for e in events:
        counts[e.stage_reached.name] += 1
    return counts


def format_event_line(event: RecognitionEvent) -> str:
    return '\t'.join((
        str(event.window_start_index),
        str(int(event.label)),
        f'{event.confidence:.6f}',
        event.stage_reached.name,
        f'{event.power_watts:.2f}',
    ))


def parse_event_line(line: str, line_no: int = 0) -> RecognitionEvent:
    parts = line.rstrip('\r\n').split('\t')
    if len(parts) != 5:
        raise DataError(f'第{line_no}行事件应有5列, 实际{len(parts)}列: {line!r}')
    try:
        start, label, confidence, stage, watts = parts
        return RecognitionEvent(
            window_start_index=int(start),
            label=GestureLabel(int(label)),
            confidence=float(confidence),
            stage_reached=GateStage[stage],
            power_watts=float(watts),
        )
    except (ValueError, KeyError) as ex:
        raise DataError(f'第{line_no}行事件无法解析: {ex}')


class FusionGate:
    """
    逐帧驱动的门控流水线, 单写者.
    每凑够一个窗口步就运行一次 gate_step 并返回事件.
    """
    def __init__(
            self,
            models: GateModels,
            detector_cfg: MovementDetectorConfig = None,
            power: PowerModel = None,
            window_len: int = WINDOW_LEN,
            step: int = WINDOW_STEP,
    ):
        self.models = models
        self.detector_cfg = detector_cfg or MovementDetectorConfig()
        self.power = power or PowerModel()
        self.buffer = WindowBuffer(window_len=window_len, step=step)
        self.state = GateState()

    def push(self, frame: SensorFrame) -> RecognitionEvent | None:
        windows = self.buffer.push_frame(frame)
        if windows is None:
            return None
        self.state, event = gate_step(
            self.state,
            windows[ChannelSet.Inertial3],
            windows[ChannelSet.Capacitive4],
            self.models,
            self.detector_cfg,
            self.power,
        )
        return event

    def run(self, frames: Iterable[SensorFrame]) -> Iterator[RecognitionEvent]:
        for frame in frames:
            event = self.push(frame)
            if event is not None:
                yield event


def gate_session(
        session: LabeledSession,
        models: GateModels,
        detector_cfg: MovementDetectorConfig,
        power: PowerModel,
        window_len: int = WINDOW_LEN,
        step: int = WINDOW_STEP,
) -> list[RecognitionEvent]:
    """
    整段会话的门控结果, 与逐帧 FusionGate 的输出相同
    """
    accel, cap, starts = session_windows(session, window_len, step)
    state = GateState()
    events = list()
    for a, c, start in zip(accel, cap, starts):
        state, event = gate_step(
            state,
            Window(data=a, channel_set=ChannelSet.Inertial3, normalized=False, start_index=int(start)),
            Window(data=c, channel_set=ChannelSet.Capacitive4, normalized=False, start_index=int(start)),
            models,
            detector_cfg,
            power,
        )
        events.append(event)
    return events


__all__ = [
    'INERTIAL_NULL',
    'INERTIAL_GESTURE',
    'GateModels',
    'gate_step',
    'session_energy',
    'event_timeline',
    'gating_savings',
    'stage_counts',
    'format_event_line',
    'parse_event_line',
    'FusionGate',
    'gate_session',
]
