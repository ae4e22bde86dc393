import numpy as np
import pytest
from glovegate.model import *
from glovegate.stream import *
from glovegate.gate import *
from tests.support import make_session, moving_accel, stub_models, constant_model, expected_probability


DETECTOR = MovementDetectorConfig(span=6, threshold=0.5)
POWER = PowerModel()


def _windows(accel: np.ndarray, cap: np.ndarray = None, start: int = 0) -> tuple[Window, Window]:
    if cap is None:
        cap = np.linspace(0.0, 1.0, 100)[None, :] * np.arange(1, 5)[:, None] + 2000.0
    return (
        Window(data=accel.T.copy(), channel_set=ChannelSet.Inertial3, normalized=False, start_index=start),
        Window(data=cap, channel_set=ChannelSet.Capacitive4, normalized=False, start_index=start),
    )


def test_stationary_window_runs_no_model():
    models = stub_models(INERTIAL_GESTURE, GestureLabel.Land)
    state, event = gate_step(GateState(), *_windows(np.zeros((100, 3))), models, DETECTOR, POWER)
    assert event.label == GestureLabel.Null
    assert event.stage_reached == GateStage.Idle
    assert event.power_watts == pytest.approx(0.84)
    assert event.confidence == 1.0
    assert models.invocations == (0, 0)
    assert state.stage == GateStage.Idle
    assert state.window_clock == 0


def test_inertial_null_stops_cascade():
    models = stub_models(INERTIAL_NULL, GestureLabel.Land)
    _, event = gate_step(GateState(), *_windows(moving_accel(100)), models, DETECTOR, POWER)
    assert event.label == GestureLabel.Null
    assert event.stage_reached == GateStage.InertialActive
    assert event.power_watts == pytest.approx(0.94)
    assert event.confidence == pytest.approx(expected_probability(2), rel=1e-5)
    assert models.invocations == (1, 0)


def test_full_cascade_reports_capacitive_class():
    models = stub_models(INERTIAL_GESTURE, GestureLabel.Land)
    state, event = gate_step(GateState(window_clock=4), *_windows(moving_accel(100), start=125), models, DETECTOR, POWER)
    assert event.label == GestureLabel.Land
    assert int(event.label) == 5
    assert event.stage_reached == GateStage.CapacitiveActive
    assert event.power_watts == pytest.approx(1.15)
    assert event.confidence == pytest.approx(expected_probability(N_CLASSES), rel=1e-5)
    assert event.window_start_index == 125
    assert models.invocations == (1, 1)
    assert state.last_decision == GestureLabel.Land
    assert state.window_clock == 5


def test_movement_judged_on_trailing_span():
    models = stub_models(INERTIAL_NULL, GestureLabel.Up)
    accel = moving_accel(100)
    accel[-6:] = 0.0
    _, event = gate_step(GateState(), *_windows(accel), models, DETECTOR, POWER)
    assert event.stage_reached == GateStage.Idle
    accel = np.zeros((100, 3))
    accel[-6:] = 1.0
    _, event = gate_step(GateState(), *_windows(accel), models, DETECTOR, POWER)
    assert event.stage_reached == GateStage.InertialActive


def test_window_pair_checked():
    models = stub_models(INERTIAL_GESTURE, GestureLabel.Up)
    inertial, capacitive = _windows(moving_accel(100))
    shifted = Window(data=capacitive.data, channel_set=ChannelSet.Capacitive4, normalized=False, start_index=25)
    with pytest.raises(DataError):
        gate_step(GateState(), inertial, shifted, models, DETECTOR, POWER)
    with pytest.raises(DataError):
        gate_step(GateState(), capacitive, inertial, models, DETECTOR, POWER)
    with pytest.raises(ConfigError):
        gate_step(GateState(), inertial, capacitive, models, MovementDetectorConfig(span=101), POWER)


def test_gate_models_class_counts():
    with pytest.raises(ModelError):
        GateModels(inertial=constant_model(3, 3, 0), capacitive=constant_model(4, N_CLASSES, 0))
    with pytest.raises(ModelError):
        GateModels(inertial=constant_model(3, 2, 0), capacitive=constant_model(4, 2, 0))


def _mixed_session(rng) -> LabeledSession:
    parts = list()
    for i in range(12):
        n = int(rng.integers(60, 160))
        parts.append(moving_accel(n) if i % 2 else rng.normal(0.0, 0.01, size=(n, 3)))
    return make_session(np.concatenate(parts), cap=rng.normal(2000.0, 30.0, size=(sum(len(p) for p in parts), 4)))


@pytest.mark.parametrize('inertial_favored', [INERTIAL_NULL, INERTIAL_GESTURE, ])
def test_cascade_is_lazy(rng, inertial_favored):
    session = _mixed_session(rng)
    models = stub_models(inertial_favored, GestureLabel.Stop)
    gate = FusionGate(models, DETECTOR, POWER)
    events = list(gate.run(session.frames))
    counts = stage_counts(events)
    assert len(events) == window_count(len(session))
    assert counts['Idle'] > 0
    assert counts['Idle'] + counts['InertialActive'] + counts['CapacitiveActive'] == len(events)
    inertial, capacitive = models.invocations
    assert inertial == counts['InertialActive'] + counts['CapacitiveActive']
    assert capacitive == counts['CapacitiveActive']
    if inertial_favored == INERTIAL_NULL:
        assert capacitive == 0
    for event in events:
        if event.stage_reached != GateStage.CapacitiveActive:
            assert event.label == GestureLabel.Null


def test_gate_session_matches_streaming(rng):
    session = _mixed_session(rng)
    streamed = list(FusionGate(stub_models(INERTIAL_GESTURE, GestureLabel.Left), DETECTOR, POWER).run(session.frames))
    batched = gate_session(session, stub_models(INERTIAL_GESTURE, GestureLabel.Left), DETECTOR, POWER)
    assert [format_event_line(e) for e in streamed] == [format_event_line(e) for e in batched]


def test_session_energy_examples():
    joules, watts = session_energy([(10.0, GateStage.Idle)], POWER)
    assert joules == pytest.approx(8.4)
    assert watts == pytest.approx(0.84)
    joules, watts = session_energy([(5.0, GateStage.Idle), (5.0, GateStage.CapacitiveActive)], POWER)
    assert joules == pytest.approx(9.95)
    assert watts == pytest.approx(0.995)


def test_session_energy_errors():
    with pytest.raises(DataError):
        session_energy([], POWER)
    with pytest.raises(DataError):
        session_energy([(0.0, GateStage.Idle)], POWER)
    with pytest.raises(DataError):
        session_energy([(-1.0, GateStage.Idle), (2.0, GateStage.Idle)], POWER)


def _event(stage: GateStage, label: GestureLabel = GestureLabel.Null, start: int = 0) -> RecognitionEvent:
    return RecognitionEvent(
        window_start_index=start,
        label=label,
        confidence=0.9,
        stage_reached=stage,
        power_watts=POWER.watts(stage),
    )


def test_gating_savings_examples():
    assert gating_savings([_event(GateStage.Idle)] * 10, POWER) == pytest.approx(0.2696, abs=5e-5)
    assert gating_savings([_event(GateStage.CapacitiveActive, GestureLabel.Up)] * 10, POWER) == pytest.approx(0.0)
    half = [_event(GateStage.Idle)] * 5 + [_event(GateStage.CapacitiveActive, GestureLabel.Up)] * 5
    assert gating_savings(half, POWER) == pytest.approx(0.1348, abs=5e-5)
    with pytest.raises(DataError):
        gating_savings([], POWER)


def test_mixed_session_average_power():
    events = (
        [_event(GateStage.Idle)] * 50
        + [_event(GateStage.InertialActive)] * 25
        + [_event(GateStage.CapacitiveActive, GestureLabel.Back)] * 25
    )
    _, watts = session_energy(event_timeline(events, 0.5), POWER)
    assert watts == pytest.approx(0.5 * 0.84 + 0.25 * 0.94 + 0.25 * 1.15)
    assert gating_savings(events, POWER) == pytest.approx(1.0 - watts / 1.15)


def test_power_model_validation():
    assert POWER.watts(GateStage.InertialActive) == 0.94
    with pytest.raises(ConfigError):
        PowerModel(idle_watts=1.0, inertial_watts=0.9, full_watts=1.15)
    with pytest.raises(ConfigError):
        PowerModel(idle_watts=0.0)


def test_event_invariants():
    with pytest.raises(DataError):
        RecognitionEvent(window_start_index=0, label=GestureLabel.Up, confidence=0.5, stage_reached=GateStage.InertialActive, power_watts=0.94)
    with pytest.raises(DataError):
        RecognitionEvent(window_start_index=0, label=GestureLabel.Null, confidence=1.5, stage_reached=GateStage.Idle, power_watts=0.84)


def test_event_line_round_trip():
    event = RecognitionEvent(
        window_start_index=250,
        label=GestureLabel.Right,
        confidence=0.875,
        stage_reached=GateStage.CapacitiveActive,
        power_watts=1.15,
    )
    line = format_event_line(event)
    assert line == '250\t8\t0.875000\tCapacitiveActive\t1.15'
    assert parse_event_line(line + '\n') == event
    with pytest.raises(DataError, match='第3行'):
        parse_event_line('250\t8\t0.5', line_no=3)
    with pytest.raises(DataError):
        parse_event_line('250\t8\t0.5\tFull\t1.15', line_no=1)
    with pytest.raises(DataError):
        parse_event_line('250\t8\t0.5\tIdle\t0.84', line_no=1)
