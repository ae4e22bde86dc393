import numpy as np
from glovegate.model import *
from glovegate.nn.base import *
from glovegate.nn.network import init_weights, TrainedModel
from glovegate.gate import GateModels


RATE_HZ = 50.0


def make_session(accel: np.ndarray, cap: np.ndarray = None, labels: np.ndarray = None, session_id: str = 's') -> LabeledSession:
    accel = np.asarray(accel, dtype=np.float64)
    n = accel.shape[0]
    if cap is None:
        cap = np.full((n, 4), 2000.0) + np.arange(n)[:, None] % 7
    if labels is None:
        labels = np.zeros(n, dtype=np.int64)
    return LabeledSession(
        session_id=session_id,
        t=np.arange(n) / RATE_HZ,
        accel=accel,
        cap=np.asarray(cap, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
    )


def constant_model(channels: int, n_classes: int, favored: int, window_len: int = 100, logit: float = 5.0) -> TrainedModel:
    """
    输出与输入无关的模型: 权重全零, 偏置偏向 favored
    """
    spec = ModelSpec(
        name=f'const_{channels}_{n_classes}_{favored}',
        input_shape=(channels, window_len),
        layers=(
            LayerSpec(LayerKind.Flatten),
            LayerSpec(LayerKind.Dense, units=n_classes),
            LayerSpec(LayerKind.Softmax),
        ),
    )
    w = init_weights(spec)
    w.blocks[1]['weight'][:] = 0.0
    w.blocks[1]['bias'][:] = 0.0
    w.blocks[1]['bias'][favored] = logit
    return TrainedModel(spec, w)


def stub_models(inertial_favored: int, capacitive_favored: int, window_len: int = 100) -> GateModels:
    return GateModels(
        inertial=constant_model(3, 2, inertial_favored, window_len),
        capacitive=constant_model(4, N_CLASSES, capacitive_favored, window_len),
    )


def expected_probability(n_classes: int, logit: float = 5.0) -> float:
    return float(np.exp(logit) / (np.exp(logit) + n_classes - 1))


def moving_accel(n: int, amplitude: float = 0.6) -> np.ndarray:
    t = np.arange(n) / RATE_HZ
    axes = np.arange(3)[:, None] * (2.0 * np.pi / 3.0)
    return (amplitude * np.sin(2.0 * np.pi * 1.25 * t[None, :] + axes)).T
