"""
合成会话生成器, 代替无法获得的手套录制数据.

一个会话的结构:
    静止的开头段(用于标定运动阈值)
    -> 打乱顺序的 tries_per_gesture x 8 次手势, 每次手势之后是
       手放回原位的衰减运动(标为 Null) 和一段 Null

电容信号是每个类别固定的 4 通道模板: 基线 + 增益 * 幅度 * (1 - cos(2pi(f t + phase))) / 2,
各类别的频率, 参与的电极和电极之间的相位差组合互不相同, 在逐通道 min-max 归一化和任意时间平移下仍可区分.
加速度在手势期间是三轴相位错开的正弦, Null 段只有噪声, 所以 Null 段的运动评分低于标定阈值.
每个会话的基线和增益有随机偏差(模拟重新佩戴), 每次手势的节奏有随机抖动.
"""
import logging
from dataclasses import dataclass
import numpy as np
import humanize
from glovegate.model import *
from glovegate.tool.config import ConfigTools
from glovegate.tool.time import TimeTools


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TemplateSpec:
    freq_hz: float
    # 通道顺序: 手腕, 拇指, 食指, 小指
    amplitudes: tuple[float, float, float, float]
    # 以周期为单位的相位
    phases: tuple[float, float, float, float]


GESTURE_TEMPLATES: dict[GestureLabel, TemplateSpec] = {
    GestureLabel.Up: TemplateSpec(0.75, (0.0, 1.0, 0.8, 0.0, ), (0.0, 0.0, 0.0, 0.0, )),
    GestureLabel.Down: TemplateSpec(0.75, (0.0, 1.0, 0.8, 0.0, ), (0.0, 0.0, 0.5, 0.0, )),
    GestureLabel.Back: TemplateSpec(0.75, (0.0, 0.0, 1.0, 0.8, ), (0.0, 0.0, 0.0, 0.0, )),
    GestureLabel.Forward: TemplateSpec(1.5, (0.0, 1.0, 0.8, 0.0, ), (0.0, 0.0, 0.0, 0.0, )),
    GestureLabel.Land: TemplateSpec(1.5, (0.0, 1.0, 0.8, 0.0, ), (0.0, 0.0, 0.5, 0.0, )),
    GestureLabel.Stop: TemplateSpec(0.75, (0.6, 1.0, 0.8, 0.7, ), (0.0, 0.0, 0.25, 0.5, )),
    GestureLabel.Left: TemplateSpec(1.5, (1.0, 0.8, 0.0, 0.0, ), (0.0, 0.25, 0.0, 0.0, )),
    GestureLabel.Right: TemplateSpec(1.5, (0.0, 0.0, 1.0, 0.8, ), (0.0, 0.0, 0.0, 0.25, )),
}

GESTURES = tuple(label for label in GestureLabel if label != GestureLabel.Null)


@dataclass(frozen=True)
class SynthConfig:
    sessions: int = 10
    tries_per_gesture: int = 4
    rate_hz: float = 50.0
    lead_in_frames: int = 150
    gesture_frames_min: int = 250
    gesture_frames_max: int = 350
    settle_frames: int = 50
    null_frames_min: int = 100
    null_frames_max: int = 150
    ramp_frames: int = 5
    accel_amplitude: float = 0.6
    accel_freq_hz: float = 1.25
    settle_amplitude: float = 0.5
    accel_noise: float = 0.02
    cap_baseline: float = 2000.0
    cap_amplitude: float = 300.0
    noise_level: float = 0.02 # 相对于 cap_amplitude
    baseline_jitter: float = 100.0
    gain_jitter: float = 0.1
    tempo_jitter: float = 0.05
    null_activity: float = 0.0 # 带干扰运动(类似走路)的 Null 段比例
    seed: int = 0

    def __post_init__(self):
        for name in ('sessions', 'tries_per_gesture', 'gesture_frames_min', 'null_frames_min', ):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} 必须 >= 1: {getattr(self, name)}')
        for name in ('lead_in_frames', 'settle_frames', 'ramp_frames', ):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} 必须 >= 0: {getattr(self, name)}')
        if self.gesture_frames_max < self.gesture_frames_min:
            raise ConfigError('gesture_frames_max 不能小于 gesture_frames_min')
        if self.null_frames_max < self.null_frames_min:
            raise ConfigError('null_frames_max 不能小于 null_frames_min')
        if 2 * self.ramp_frames > self.gesture_frames_min:
            raise ConfigError(f'ramp_frames 过长: {self.ramp_frames}')
        for name in ('rate_hz', 'accel_amplitude', 'accel_freq_hz', 'cap_amplitude', ):
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} 必须 > 0: {getattr(self, name)}')
        for name in ('settle_amplitude', 'accel_noise', 'noise_level', 'baseline_jitter', 'gain_jitter', ):
            if not getattr(self, name) >= 0:
                raise ConfigError(f'{name} 必须 >= 0: {getattr(self, name)}')
        if not 0.0 <= self.tempo_jitter < 0.5:
            raise ConfigError(f'tempo_jitter 必须在[0, 0.5)之间: {self.tempo_jitter}')
        if not 0.0 <= self.null_activity <= 1.0:
            raise ConfigError(f'null_activity 必须在[0, 1]之间: {self.null_activity}')

    @classmethod
    def from_toml(cls, path: str, **overrides) -> 'SynthConfig':
        cfg = ConfigTools.apply(cls(), ConfigTools.read_toml(path))
        return ConfigTools.apply(cfg, overrides)

    def to_toml(self, path: str):
        ConfigTools.write_toml(path, ConfigTools.to_dict(self))


def _envelope(n: int, ramp: int) -> np.ndarray:
    if not ramp:
        return np.ones(n)
    i = np.arange(n)
    return np.clip(np.minimum(i + 1, n - i) / ramp, 0.0, 1.0)


def gesture_template(
        cfg: SynthConfig,
        label: GestureLabel,
        n_frames: int,
        phase: float = 0.0,
        tempo: float = 1.0,
) -> np.ndarray:
    """
    基线为 0, 增益为 1, 没有包络和噪声的 (4, n_frames) 电容模板
    """
    if label == GestureLabel.Null:
        return np.zeros((4, n_frames))
    spec = GESTURE_TEMPLATES[GestureLabel(label)]
    t = np.arange(n_frames) / cfg.rate_hz
    cycles = spec.freq_hz * tempo * t[None, :] + phase + np.asarray(spec.phases)[:, None]
    pulse = (1.0 - np.cos(2.0 * np.pi * cycles)) / 2.0
    return cfg.cap_amplitude * np.asarray(spec.amplitudes)[:, None] * pulse


def _gesture_accel(cfg: SynthConfig, rng: np.random.Generator, n: int, tempo: float) -> np.ndarray:
    t = np.arange(n) / cfg.rate_hz
    theta = rng.uniform(0.0, 2.0 * np.pi)
    axes = np.arange(3)[:, None] * (2.0 * np.pi / 3.0)
    wave = np.sin(2.0 * np.pi * cfg.accel_freq_hz * tempo * t[None, :] + theta + axes)
    return (cfg.accel_amplitude * _envelope(n, cfg.ramp_frames) * wave).T


def _settle_accel(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if not n:
        return np.zeros((0, 3))
    direction = rng.choice((-1.0, 1.0), size=3) * rng.uniform(0.6, 1.0, size=3)
    decay = np.linspace(1.0, 0.25, n)
    return cfg.settle_amplitude * decay[:, None] * direction[None, :]


def _distractor_accel(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    # 类似走路的落脚冲击: 竖直方向的半波整流正弦, 加上较小的侧向摆动
    t = np.arange(n) / cfg.rate_hz
    step_hz = rng.uniform(1.6, 2.0)
    accel = np.zeros((n, 3))
    accel[:, 2] = cfg.accel_amplitude * np.abs(np.sin(np.pi * step_hz * t))
    accel[:, 0] = 0.3 * cfg.accel_amplitude * np.sin(np.pi * step_hz * t + rng.uniform(0.0, np.pi))
    return accel


def synth_session(cfg: SynthConfig, seed, session_id: str = 'session_01') -> LabeledSession:
    """
    (cfg, seed) 的纯函数; seed 可以是整数或 numpy 的 SeedSequence
    """
    rng = np.random.default_rng(seed)
    baseline = cfg.cap_baseline + rng.normal(0.0, cfg.baseline_jitter, size=4) if cfg.baseline_jitter else np.full(4, cfg.cap_baseline)
    gain = np.maximum(1.0 + rng.normal(0.0, cfg.gain_jitter, size=4), 0.5) if cfg.gain_jitter else np.ones(4)
    tries = np.repeat(np.arange(1, N_CLASSES), cfg.tries_per_gesture)
    rng.shuffle(tries)

    accel_parts = [np.zeros((cfg.lead_in_frames, 3))]
    cap_parts = [np.zeros((cfg.lead_in_frames, 4))]
    label_parts = [np.zeros(cfg.lead_in_frames, dtype=np.int64)]
    for label in tries:
        label = GestureLabel(int(label))
        n = int(rng.integers(cfg.gesture_frames_min, cfg.gesture_frames_max + 1))
        tempo = 1.0 + rng.uniform(-cfg.tempo_jitter, cfg.tempo_jitter) if cfg.tempo_jitter else 1.0
        phase = rng.uniform(0.0, 1.0)
        template = gesture_template(cfg, label, n, phase=phase, tempo=tempo) * _envelope(n, cfg.ramp_frames)[None, :]
        accel_parts.append(_gesture_accel(cfg, rng, n, tempo))
        cap_parts.append(template.T)
        label_parts.append(np.full(n, int(label), dtype=np.int64))

        n_settle = cfg.settle_frames
        n_null = int(rng.integers(cfg.null_frames_min, cfg.null_frames_max + 1))
        null_accel = np.zeros((n_null, 3))
        if cfg.null_activity and rng.random() < cfg.null_activity:
            null_accel = _distractor_accel(cfg, rng, n_null)
        accel_parts += [_settle_accel(cfg, rng, n_settle), null_accel]
        cap_parts.append(np.zeros((n_settle + n_null, 4)))
        label_parts.append(np.zeros(n_settle + n_null, dtype=np.int64))

    accel = np.concatenate(accel_parts, axis=0)
    cap = np.concatenate(cap_parts, axis=0) * gain[None, :] + baseline[None, :]
    labels = np.concatenate(label_parts)
    n = len(labels)
    if cfg.accel_noise:
        accel = accel + rng.normal(0.0, cfg.accel_noise, size=accel.shape)
    if cfg.noise_level:
        cap = cap + rng.normal(0.0, cfg.noise_level * cfg.cap_amplitude, size=cap.shape)
    return LabeledSession(
        session_id=session_id,
        t=np.arange(n) / cfg.rate_hz,
        accel=accel,
        cap=cap,
        labels=labels,
    )


def synth_dataset(cfg: SynthConfig, seed: int = None) -> Dataset:
    seed = cfg.seed if seed is None else seed
    children = np.random.SeedSequence(seed).spawn(cfg.sessions)
    sessions = tuple(
        synth_session(cfg, child, session_id=f'session_{i + 1:02d}')
        for i, child in enumerate(children)
    )
    frames = sum(len(s) for s in sessions)
    logger.info(
        f'[synth_dataset]生成{len(sessions)}个会话, 共{humanize.intcomma(frames)}帧, '
        f'约{TimeTools.precisedelta(frames / cfg.rate_hz)}'
    )
    return Dataset(sessions=sessions)


__all__ = [
    'TemplateSpec',
    'GESTURE_TEMPLATES',
    'GESTURES',
    'SynthConfig',
    'gesture_template',
    'synth_session',
    'synth_dataset',
]
