import numpy as np
import pytest
from glovegate.eval.synth import SynthConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_synth() -> SynthConfig:
    """
    每个手势只做一次, 段落较短, 用于需要快速跑完训练的测试
    """
    return SynthConfig(
        sessions=3,
        tries_per_gesture=1,
        gesture_frames_min=120,
        gesture_frames_max=130,
        null_frames_min=50,
        null_frames_max=60,
        seed=7,
    )
