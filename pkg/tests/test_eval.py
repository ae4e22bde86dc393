import os
import json
import numpy as np
import pandas as pd
import pytest
from sklearn.metrics import f1_score
from glovegate.model import *
from glovegate.stream import *
from glovegate.eval import *
from glovegate.tool.config import ConfigTools
from glovegate.tool.locate import LocateTools
from tests.support import make_session


HEADER = 't,ax,ay,az,c1,c2,c3,c4,label\n'


def _labeled(labels: list[int], session_id: str = 's') -> LabeledSession:
    return make_session(np.zeros((len(labels), 3)), labels=np.asarray(labels), session_id=session_id)


def _tiny_pipeline(**kwargs) -> PipelineConfig:
    return PipelineConfig(inertial_epochs=1, capacitive_epochs=1, patience=1, **kwargs)


def test_loso_folds():
    dataset = Dataset(sessions=tuple(_labeled([0] * 10, f's{i}') for i in range(10)))
    folds = loso_folds(dataset)
    assert len(folds) == 10
    tested = [test.session_id for _, test in folds]
    assert sorted(tested) == sorted(s.session_id for s in dataset.sessions)
    for train, test in folds:
        ids = {s.session_id for s in train}
        assert test.session_id not in ids
        assert len(ids) == 9


def test_loso_two_and_one_sessions():
    a, b = _labeled([0] * 10, 'a'), _labeled([0] * 10, 'b')
    folds = loso_folds(Dataset(sessions=(a, b)))
    assert [(tuple(s.session_id for s in train), test.session_id) for train, test in folds] == [(('b', ), 'a'), (('a', ), 'b')]
    with pytest.raises(DataError, match='generate'):
        loso_folds(Dataset(sessions=(a, )))


def test_loso_folds_group_by_session_id():
    sessions = tuple(_labeled([0] * 10, name) for name in ('c', 'a', 'b', ))
    folds = loso_folds(Dataset(sessions=sessions))
    assert [test.session_id for _, test in folds] == ['a', 'b', 'c']
    assert [tuple(s.session_id for s in train) for train, _ in folds] == [('c', 'b'), ('c', 'a'), ('a', 'b')]


def test_window_label_examples():
    assert window_label(_labeled([5] * 100), 0) == 5
    assert window_label(_labeled([0] * 50 + [3] * 50), 0) == 0
    assert window_label(_labeled([0] * 40 + [7] * 60), 0) == 7
    session = _labeled([0] * 120 + [2] * 80)
    np.testing.assert_array_equal(window_labels(session, np.array([0, 25, 50, 75, 100])), [0, 0, 0, 2, 2])
    with pytest.raises(DataError):
        window_label(session, 150)
    with pytest.raises(DataError):
        window_label(session, -1)


def test_confusion_and_macro_f1():
    m = confusion([0, 0, 1, 1], [0, 1, 1, 1], n_classes=2)
    np.testing.assert_array_equal(m.counts, [[1, 1], [0, 2]])
    f1 = per_class_f1(m)
    assert f1[0] == pytest.approx(2 / 3)
    assert f1[1] == pytest.approx(0.8)
    assert macro_f1(m) == pytest.approx(0.7333, abs=1e-4)
    # 没有出现的类别不参与平均
    assert macro_f1(confusion([0, 0, 1, 1], [0, 1, 1, 1])) == pytest.approx(0.7333, abs=1e-4)


def test_aggregate_macro_f1_matches_window_level(rng):
    # 折矩阵相加后的宏 F1 与直接在拼接的逐窗口标签上计算一致
    ys, ps, total = list(), list(), None
    for size in (50, 80, 120, ):
        y = rng.integers(0, 6, size=size)
        p = np.where(rng.random(size) < 0.7, y, rng.integers(0, N_CLASSES, size=size))
        ys.append(y)
        ps.append(p)
        m = confusion(y, p)
        total = m if total is None else total + m
    y, p = np.concatenate(ys), np.concatenate(ps)
    present = np.union1d(y, p)
    assert macro_f1(total) == pytest.approx(f1_score(y, p, labels=present, average='macro', zero_division=0))
    f1 = per_class_f1(total)
    np.testing.assert_allclose(f1[present], f1_score(y, p, labels=present, average=None, zero_division=0))
    assert np.isnan(f1[np.setdiff1d(np.arange(N_CLASSES), present)]).all()


def test_macro_f1_bounds():
    labels = list(range(N_CLASSES)) * 3
    perfect = confusion(labels, labels)
    np.testing.assert_array_equal(perfect.counts, np.diag([3] * N_CLASSES))
    assert macro_f1(perfect) == 1.0
    wrong = confusion([1, 1, 1, 1], [2, 2, 2, 2])
    assert macro_f1(wrong) == 0.0
    assert np.isnan(per_class_f1(wrong)[0])


def test_confusion_properties(rng):
    y = rng.integers(0, N_CLASSES, size=200)
    p = rng.integers(0, N_CLASSES, size=200)
    m = confusion(y, p)
    assert m.total == 200
    np.testing.assert_array_equal(m.counts.sum(axis=1), np.bincount(y, minlength=N_CLASSES))
    assert 0.0 <= macro_f1(m) <= 1.0
    assert (m + m).total == 400


def test_confusion_errors():
    with pytest.raises(DataError):
        confusion([0, 1], [0])
    with pytest.raises(DataError):
        confusion([0, 9], [0, 1])
    with pytest.raises(DataError):
        ConfusionMatrix(counts=np.zeros((2, 3), dtype=np.int64))


def test_binary_f1():
    m = confusion([0, 3, 5, 0], [0, 4, 0, 2])
    b = binary_matrix(m)
    np.testing.assert_array_equal(b.counts, [[1, 1], [1, 1]])
    assert binary_f1(m) == pytest.approx(0.5)
    assert binary_f1(confusion([0, 0], [0, 0], n_classes=2)) == 1.0


def test_write_matrix_csv(tmp_path):
    path = os.path.join(tmp_path, 'matrix.csv')
    write_matrix_csv(confusion([0, 5, 5], [0, 5, 1]), path)
    df = pd.read_csv(path, index_col=0)
    assert list(df.columns) == [label.name for label in GestureLabel]
    assert list(df.index) == [label.name for label in GestureLabel]
    assert df.loc['Land', 'Land'] == 1
    assert df.loc['Land', 'Up'] == 1
    assert df.to_numpy().sum() == 3


def test_synth_is_deterministic():
    cfg = SynthConfig(tries_per_gesture=1)
    a = synth_session(cfg, 5)
    b = synth_session(cfg, 5)
    c = synth_session(cfg, 6)
    for name in ('t', 'accel', 'cap', 'labels', ):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.cap.shape != c.cap.shape or not np.array_equal(a.cap, c.cap)
    d1 = synth_dataset(SynthConfig(sessions=2, tries_per_gesture=1), seed=3)
    d2 = synth_dataset(SynthConfig(sessions=2, tries_per_gesture=1), seed=3)
    assert [s.session_id for s in d1.sessions] == ['session_01', 'session_02']
    for s1, s2 in zip(d1.sessions, d2.sessions):
        assert s1.cap.tobytes() == s2.cap.tobytes()


def test_synth_session_structure():
    cfg = SynthConfig()
    session = synth_session(cfg, 0)
    gestures = [seg for seg in session.segments() if seg[0] != GestureLabel.Null]
    assert len(gestures) == 32
    counts = np.bincount([int(label) for label, _, _ in gestures], minlength=N_CLASSES)
    assert counts[0] == 0
    np.testing.assert_array_equal(counts[1:], 4)
    for _, start, end in gestures:
        assert cfg.gesture_frames_min <= end - start <= cfg.gesture_frames_max
    np.testing.assert_allclose(np.diff(session.t), 1.0 / cfg.rate_hz)


def test_synth_null_segments_are_still():
    cfg = SynthConfig(tries_per_gesture=1, accel_noise=0.0)
    session = synth_session(cfg, 1)
    threshold = calibrate_threshold(session.accel[:cfg.lead_in_frames] + 0.02)
    segments = session.segments()
    for (label, start, end), following in zip(segments, segments[1:] + [None]):
        if label == GestureLabel.Null:
            continue
        # 手势后先是标为 Null 的回位运动, 之后的 Null 段完全静止
        settle_end = end + cfg.settle_frames
        assert (session.labels[end:settle_end] == 0).all()
        assert movement_score(session.accel[end:end + 6]) > threshold
        rest_end = following[2] if following is not None else len(session)
        np.testing.assert_array_equal(session.accel[settle_end:rest_end], 0.0)
    np.testing.assert_array_equal(session.accel[:cfg.lead_in_frames], 0.0)


def test_synth_distractor_motion():
    cfg = SynthConfig(tries_per_gesture=1, accel_noise=0.0, null_activity=1.0)
    session = synth_session(cfg, 2)
    label, start, end = session.segments()[1]
    assert label != GestureLabel.Null
    rest = session.accel[end + cfg.settle_frames:end + cfg.settle_frames + cfg.null_frames_min]
    assert np.abs(rest).sum() > 0.0


def _nearest_template(cfg: SynthConfig, window: np.ndarray) -> GestureLabel:
    best, best_label = np.inf, None
    for label in GESTURES:
        period = int(np.ceil(cfg.rate_hz / GESTURE_TEMPLATES[label].freq_hz))
        template = gesture_template(cfg, label, window.shape[1] + period + 1)
        for offset in range(period + 1):
            reference = minmax_normalize(template[:, offset:offset + window.shape[1]])
            distance = float(((reference - window) ** 2).sum())
            if distance < best:
                best, best_label = distance, label
    return best_label


def test_synth_templates_nearest_template_oracle():
    cfg = SynthConfig(tries_per_gesture=1, noise_level=0.0, accel_noise=0.0, tempo_jitter=0.0)
    checked = 0
    for seed in (0, 1, ):
        session = synth_session(cfg, seed)
        for label, start, end in session.segments():
            if label == GestureLabel.Null:
                continue
            for s in range(start + cfg.ramp_frames, end - cfg.ramp_frames - WINDOW_LEN + 1, WINDOW_STEP):
                window = minmax_normalize(session.cap[s:s + WINDOW_LEN].T)
                assert _nearest_template(cfg, window) == label
                checked += 1
    assert checked > 50


@pytest.mark.parametrize('kwargs', [
    dict(sessions=0),
    dict(gesture_frames_min=300, gesture_frames_max=250),
    dict(null_frames_min=200, null_frames_max=100),
    dict(tempo_jitter=0.5),
    dict(null_activity=1.5),
    dict(noise_level=-0.1),
    dict(ramp_frames=200),
])
def test_synth_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SynthConfig(**kwargs)


def test_synth_config_toml(tmp_path):
    path = os.path.join(tmp_path, 'synth.toml')
    cfg = SynthConfig(sessions=4, noise_level=0.05, seed=9)
    cfg.to_toml(path)
    assert SynthConfig.from_toml(path) == cfg
    assert SynthConfig.from_toml(path, sessions=2).sessions == 2
    with open(path, 'a', encoding='utf8') as f:
        f.write('unknown_key = 1\n')
    with pytest.raises(ConfigError, match='unknown_key'):
        SynthConfig.from_toml(path)
    with pytest.raises(ConfigError):
        SynthConfig.from_toml(os.path.join(tmp_path, 'missing.toml'))


def test_config_tools(tmp_path):
    cfg = ConfigTools.apply(SynthConfig(), {'rate_hz': 25, 'null-activity': 0.5, 'seed': None})
    assert cfg.rate_hz == 25.0 and isinstance(cfg.rate_hz, float)
    assert cfg.null_activity == 0.5
    assert cfg.seed == 0
    with pytest.raises(ConfigError):
        ConfigTools.apply(SynthConfig(), {'sessions': 'ten'})
    with pytest.raises(ConfigError):
        ConfigTools.apply(SynthConfig(), {'sessions': True})
    path = os.path.join(tmp_path, 'nested.toml')
    with open(path, 'w', encoding='utf8') as f:
        f.write('[table]\nkey = 1\n')
    with pytest.raises(ConfigError):
        ConfigTools.read_toml(path)
    with open(path, 'w', encoding='utf8') as f:
        f.write('key = = 1\n')
    with pytest.raises(ConfigError):
        ConfigTools.read_toml(path)


def test_config_tools_optional_fields():
    cfg = ConfigTools.apply(PipelineConfig(), {'threshold': 1})
    assert cfg.threshold == 1.0 and isinstance(cfg.threshold, float)
    assert ConfigTools.apply(PipelineConfig(), {'threshold': 0.25}).threshold == 0.25
    for value in ('high', True, [0.4], ):
        with pytest.raises(ConfigError, match='threshold'):
            ConfigTools.apply(PipelineConfig(), {'threshold': value})


def test_session_csv_round_trip(tmp_path):
    session = synth_session(SynthConfig(tries_per_gesture=1), 4, session_id='session_04')
    path = os.path.join(tmp_path, 'session_04.csv')
    write_session_csv(session, path)
    loaded = read_session_csv(path)
    assert loaded.session_id == 'session_04'
    for name in ('t', 'accel', 'cap', 'labels', ):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(session, name))
    with open(path, encoding='utf8') as f:
        assert f.readline() == HEADER


def test_dataset_folder(tmp_path):
    dataset = synth_dataset(SynthConfig(sessions=3, tries_per_gesture=1), seed=1)
    folder = os.path.join(tmp_path, 'dataset')
    paths = save_dataset(dataset, folder)
    assert [os.path.basename(p) for p in paths] == ['session_01.csv', 'session_02.csv', 'session_03.csv']
    loaded = load_dataset(folder)
    assert [s.session_id for s in loaded.sessions] == ['session_01', 'session_02', 'session_03']
    with pytest.raises(DataError):
        load_dataset(os.path.join(tmp_path, 'missing'))
    os.makedirs(os.path.join(tmp_path, 'empty'))
    with pytest.raises(DataError):
        load_dataset(os.path.join(tmp_path, 'empty'))


def test_dataset_folder_ignores_subfolders(tmp_path):
    dataset = synth_dataset(SynthConfig(sessions=2, tries_per_gesture=1), seed=1)
    folder = os.path.join(tmp_path, 'dataset')
    save_dataset(dataset, folder)
    report = os.path.join(folder, 'report')
    os.makedirs(report)
    write_matrix_csv(confusion([0, 1], [0, 1]), os.path.join(report, 'aggregate_matrix.csv'))
    write_matrix_csv(confusion([0, 1], [1, 1]), os.path.join(report, 'session_01_matrix.csv'))
    assert LocateTools.scan_folder(folder, r'\.csv$') == [
        os.path.join(folder, 'session_01.csv'),
        os.path.join(folder, 'session_02.csv'),
    ]
    loaded = load_dataset(folder)
    assert [s.session_id for s in loaded.sessions] == ['session_01', 'session_02']


@pytest.mark.parametrize('body, line', [
    ('0.0,0,0,0,1,1,1,1,0\n0.02,0,0,x,1,1,1,1,0\n', '第3行'),
    ('0.0,0,0,0,1,1,1,1,0\n0.02,0,0,0,1,1,1,1\n', '第3行'),
    ('0.0,0,0,0,1,1,1,1,9\n', '第2行'),
    ('0.0,0,0,0,1,1,1,1,0\n0.02,0,0,0,1,1,1,1,1.5\n', '第3行'),
    ('0.0,0,0,0,1,1,1,1,0\n0.02,0,0,0,1,1,1,1,0\n0.02,0,0,0,1,1,1,1,0\n', '第4行'),
    ('0.0,0,0,0,1,inf,1,1,0\n', '第2行'),
])
def test_session_csv_errors_name_line(tmp_path, body, line):
    path = os.path.join(tmp_path, 'bad.csv')
    with open(path, 'w', encoding='utf8') as f:
        f.write(HEADER + body)
    with pytest.raises(DataError, match=line):
        read_session_csv(path)


def test_session_csv_bad_header_and_missing(tmp_path):
    path = os.path.join(tmp_path, 'bad.csv')
    with open(path, 'w', encoding='utf8') as f:
        f.write('t,ax,ay,az,c1,c2,c3,label\n0.0,0,0,0,1,1,1,0\n')
    with pytest.raises(DataError, match='第1行'):
        read_session_csv(path)
    with pytest.raises(DataError, match='不存在'):
        read_session_csv(os.path.join(tmp_path, 'missing.csv'))
    empty = os.path.join(tmp_path, 'empty.csv')
    open(empty, 'w').close()
    with pytest.raises(DataError):
        read_session_csv(empty)


def test_pipeline_config(tmp_path):
    cfg = PipelineConfig()
    assert cfg.step_seconds == pytest.approx(0.5)
    assert cfg.power == PowerModel()
    with pytest.raises(ConfigError):
        cfg.detector()
    assert cfg.detector(1.5).threshold == 1.5
    train = cfg.train_config(10)
    assert train.patience == 10
    assert train.optimizer.step_scale == 0.9
    path = os.path.join(tmp_path, 'pipeline.toml')
    PipelineConfig(threshold=0.75, majority_k=3).to_toml(path)
    loaded = PipelineConfig.from_toml(path)
    assert loaded.threshold == 0.75
    assert loaded.majority_k == 3
    for kwargs in (dict(majority_k=4), dict(span=0), dict(idle_watts=2.0), dict(inertial_epochs=0), dict(threshold=-1.0), ):
        with pytest.raises(ConfigError):
            PipelineConfig(**kwargs)


def test_build_windows(small_synth):
    dataset = synth_dataset(small_synth)
    windows = build_windows(dataset.sessions[:2], PipelineConfig())
    expected = sum(window_count(len(s)) for s in dataset.sessions[:2])
    assert len(windows) == expected
    assert windows.inertial.shape == (expected, 3, 100)
    assert windows.capacitive.shape == (expected, 4, 100)
    assert windows.inertial.min() >= 0.0 and windows.capacitive.max() <= 1.0
    np.testing.assert_array_equal(windows.gesture, (windows.labels != 0).astype(np.int64))
    assert set(np.unique(windows.labels)) == set(range(N_CLASSES))


def test_evaluate_structure(tmp_path, small_synth):
    dataset = synth_dataset(small_synth)
    report = evaluate(_tiny_pipeline(), dataset)
    assert len(report.folds) == 3
    assert len(report.ok_folds) == 3
    for fold, session in zip(report.folds, dataset.sessions):
        assert fold.test_session == session.session_id
        n = window_count(len(session))
        assert fold.matrix.total == fold.matrix_smoothed.total == n
        _, _, starts = session_windows(session)
        truth = np.bincount(window_labels(session, starts), minlength=N_CLASSES)
        np.testing.assert_array_equal(fold.matrix.counts.sum(axis=1), truth)
        assert sum(fold.stage_counts.values()) == n
        assert fold.capacitive_invocations == fold.stage_counts['CapacitiveActive']
        assert fold.inertial_invocations == fold.stage_counts['InertialActive'] + fold.stage_counts['CapacitiveActive']
        assert fold.stage_counts['Idle'] > 0
        for value in (fold.macro_f1, fold.macro_f1_smoothed, fold.inertial_f1, fold.capacitive_f1, ):
            assert 0.0 <= value <= 1.0
        assert 0.0 <= fold.savings <= 1.0 - 0.84 / 1.15 + 1e-9
        assert fold.joules == pytest.approx(fold.average_watts * n * 0.5)
        assert fold.threshold > 0.0
        assert fold.inertial_epochs == fold.capacitive_epochs == 1
    aggregate = report.aggregate()
    assert aggregate.total == sum(f.matrix.total for f in report.folds)

    d = json.loads(report_json(report))
    assert d['type'] == 'evalReport'
    assert d['folds'] == d['okFolds'] == 3
    assert len(d['foldResults']) == 3
    assert d['meanMacroF1'] == pytest.approx(report.mean_macro_f1)
    assert 'meanMacroF1Smoothed' in d
    assert d['foldResults'][0]['matrix']['total'] == report.folds[0].matrix.total

    paths = write_report(report, os.path.join(tmp_path, 'report'))
    names = {os.path.basename(p) for p in paths}
    assert 'report.json' in names
    assert 'aggregate_matrix.csv' in names
    assert 'aggregate_matrix_smoothed.csv' in names
    assert 'session_01_matrix.csv' in names
    assert 'session_01_matrix_smoothed.csv' in names
    assert all(os.path.exists(p) for p in paths)

    # 目标位置被目录占用时报配置错误而不是抛出 OSError
    blocked = os.path.join(tmp_path, 'blocked')
    os.makedirs(os.path.join(blocked, 'report.json'))
    with pytest.raises(ConfigError, match='report.json'):
        write_report(report, blocked)
    blocked = os.path.join(tmp_path, 'blocked_matrix')
    os.makedirs(os.path.join(blocked, 'aggregate_matrix.csv'))
    with pytest.raises(ConfigError, match='aggregate_matrix.csv'):
        write_report(report, blocked)
    with pytest.raises(ConfigError):
        write_report(report, os.path.join(tmp_path, 'report', 'report.json'))


def test_evaluate_isolates_failed_fold(small_synth):
    dataset = synth_dataset(small_synth)
    short = make_session(np.zeros((80, 3)), session_id='short')
    report = evaluate(_tiny_pipeline(), Dataset(sessions=(dataset.sessions[0], dataset.sessions[1], short)))
    assert len(report.folds) == 3
    assert len(report.ok_folds) == 2
    failed = report.folds[2]
    assert failed.test_session == 'short'
    assert not failed.ok
    assert 'DataError' in failed.error
    d = json.loads(report_json(report))
    assert d['foldResults'][2]['error']
    assert d['foldResults'][2]['matrix'] is None


def test_evaluate_needs_two_sessions(small_synth):
    dataset = synth_dataset(small_synth)
    with pytest.raises(DataError):
        evaluate(_tiny_pipeline(), Dataset(sessions=dataset.sessions[:1]))


def test_fold_seeds():
    assert fold_seeds(0, 4) == fold_seeds(0, 4)
    assert len(set(fold_seeds(0, 4))) == 4
    assert fold_seeds(0, 4) != fold_seeds(1, 4)


@pytest.mark.slow
def test_parallel_folds_match_sequential(small_synth):
    dataset = synth_dataset(small_synth)
    cfg = _tiny_pipeline()
    sequential = evaluate(cfg, dataset, workers=1)
    parallel = evaluate(cfg, dataset, workers=3)
    for a, b in zip(sequential.folds, parallel.folds):
        assert a.test_session == b.test_session
        np.testing.assert_array_equal(a.matrix.counts, b.matrix.counts)


@pytest.mark.slow
def test_acceptance_default_synthetic_dataset():
    """
    默认配置的 10 个合成会话, 留一会话交叉验证的平均宏 F1 不低于 0.90
    """
    dataset = synth_dataset(SynthConfig())
    report = evaluate(PipelineConfig(), dataset, workers=min(os.cpu_count() or 1, 10))
    assert len(report.folds) == 10
    assert len(report.ok_folds) == 10
    assert report.mean_macro_f1 >= 0.90
    assert report.mean_macro_f1_smoothed >= report.mean_macro_f1 - 0.01
    assert 0.0 < report.mean_savings < 1.0 - 0.84 / 1.15
