"""
留一会话交叉验证的完整流程.

每一折:
  1. 用训练会话开头的静止段标定运动阈值
  2. 留出一个训练会话做验证集, 其余会话的全部窗口训练惯性模型(Null/手势)和电容模型(9 类)
  3. 测试会话逐窗口走分级门控, 按窗口多数标签打分, 平滑前后各出一份混淆矩阵
  4. 另外给出不经门控时两个模型各自的分数, 以及能耗记账
各折互相独立, 种子按折派生, 并行与否结果相同.
"""
import os
import json
import logging
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor
import numpy as np
import humanize
from glovegate.model import *
from glovegate.stream import *
from glovegate.nn import *
from glovegate.gate import *
from glovegate.smoothing import *
from glovegate.eval.dataset import *
from glovegate.eval.metrics import *
from glovegate.tool.config import ConfigTools
from glovegate.tool.locate import LocateTools
from glovegate.tool.time import TimeTools


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    window_len: int = WINDOW_LEN
    step: int = WINDOW_STEP
    rate_hz: float = 50.0
    span: int = 6
    # 为空时用训练会话开头的静止段标定
    threshold: float | None = None
    calibration_frames: int = 150
    calibration_k: float = 3.0
    idle_watts: float = 0.84
    inertial_watts: float = 0.94
    full_watts: float = 1.15
    max_gap: int = DEFAULT_MAX_GAP
    majority_k: int = DEFAULT_MAJORITY_K
    inertial_epochs: int = 100
    capacitive_epochs: int = 200
    patience: int = 30
    batch_size: int = 32
    step_scale: float = 0.9
    rho: float = 0.95
    validation: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.window_len < 1 or self.step < 1:
            raise ConfigError(f'窗长和步长必须 >= 1: {self.window_len}, {self.step}')
        if not 1 <= self.span <= self.window_len:
            raise ConfigError(f'运动检测跨度必须在[1, 窗长]之间: {self.span}')
        if self.threshold is not None and not self.threshold >= 0:
            raise ConfigError(f'运动检测阈值必须 >= 0: {self.threshold}')
        if self.calibration_frames < self.span:
            raise ConfigError(f'标定帧数{self.calibration_frames}不能小于运动检测跨度{self.span}')
        if not self.rate_hz > 0:
            raise ConfigError(f'采样率必须 > 0: {self.rate_hz}')
        if self.max_gap < 1:
            raise ConfigError(f'max_gap 必须 >= 1: {self.max_gap}')
        if self.majority_k < 1 or self.majority_k % 2 == 0:
            raise ConfigError(f'majority_k 必须是正奇数: {self.majority_k}')
        # 功耗和训练参数由各自的构造校验
        _ = self.power
        _ = self.train_config(self.inertial_epochs)
        _ = self.train_config(self.capacitive_epochs)

    @property
    def power(self) -> PowerModel:
        return PowerModel(idle_watts=self.idle_watts, inertial_watts=self.inertial_watts, full_watts=self.full_watts)

    @property
    def step_seconds(self) -> float:
        return self.step / self.rate_hz

    def detector(self, threshold: float = None) -> MovementDetectorConfig:
        threshold = self.threshold if threshold is None else threshold
        if threshold is None:
            raise ConfigError('没有运动检测阈值, 需要先标定或在配置中给出 threshold')
        return MovementDetectorConfig(span=self.span, threshold=threshold)

    def train_config(self, max_epochs: int, seed: int = None) -> TrainConfig:
        return TrainConfig(
            max_epochs=max_epochs,
            patience=min(self.patience, max_epochs),
            optimizer=AdaDeltaConfig(step_scale=self.step_scale, rho=self.rho),
            batch_size=self.batch_size,
            seed=self.seed if seed is None else seed,
        )

    @classmethod
    def from_toml(cls, path: str, **overrides) -> 'PipelineConfig':
        cfg = ConfigTools.apply(cls(), ConfigTools.read_toml(path))
        return ConfigTools.apply(cfg, overrides)

    def to_toml(self, path: str):
        ConfigTools.write_toml(path, ConfigTools.to_dict(self))


@dataclass(frozen=True, eq=False)
class WindowSet:
    """
    一组会话的全部窗口, 已归一化
    """
    inertial: np.ndarray # (N, 3, L)
    capacitive: np.ndarray # (N, 4, L)
    labels: np.ndarray # (N, ) 9 类窗口标签

    @property
    def gesture(self) -> np.ndarray:
        return (self.labels != GestureLabel.Null).astype(np.int64)

    def __len__(self):
        return len(self.labels)


def build_windows(sessions: tuple[LabeledSession, ...] | list[LabeledSession], cfg: PipelineConfig) -> WindowSet:
    inertial, capacitive, labels = list(), list(), list()
    for session in sessions:
        accel, cap, starts = session_windows(session, cfg.window_len, cfg.step)
        inertial.append(minmax_normalize(accel).astype(GgGlobalConfig.DTYPE))
        capacitive.append(minmax_normalize(cap).astype(GgGlobalConfig.DTYPE))
        labels.append(window_labels(session, starts, cfg.window_len))
    if not inertial:
        raise DataError('没有会话可以切窗')
    return WindowSet(
        inertial=np.concatenate(inertial, axis=0),
        capacitive=np.concatenate(capacitive, axis=0),
        labels=np.concatenate(labels),
    )


def calibrate_sessions(sessions, cfg: PipelineConfig) -> float:
    return calibrate_threshold(
        [s.accel[:cfg.calibration_frames] for s in sessions],
        span=cfg.span,
        k=cfg.calibration_k,
    )


@dataclass(frozen=True, eq=False)
class TrainedPipeline:
    models: GateModels
    threshold: float
    inertial_history: TrainHistory
    capacitive_history: TrainHistory


def train_pipeline(sessions, cfg: PipelineConfig, seed: int = None) -> TrainedPipeline:
    """
    在给定的会话上标定阈值并训练两个模型; cfg.validation 为真且会话多于一个时, 最后一个会话做验证集
    """
    sessions = tuple(sessions)
    if not sessions:
        raise DataError('训练需要至少一个会话')
    seed = cfg.seed if seed is None else seed
    threshold = cfg.threshold if cfg.threshold is not None else calibrate_sessions(sessions, cfg)
    if cfg.validation and len(sessions) > 1:
        train, validation = build_windows(sessions[:-1], cfg), build_windows(sessions[-1:], cfg)
    else:
        train, validation = build_windows(sessions, cfg), None

    inertial_spec = build_inertial_model(cfg.window_len)
    inertial_weights, inertial_history = fit(
        inertial_spec,
        train.inertial,
        train.gesture,
        cfg.train_config(cfg.inertial_epochs, seed),
        validation=(validation.inertial, validation.gesture) if validation is not None else None,
    )
    capacitive_spec = build_capacitive_model(cfg.window_len)
    capacitive_weights, capacitive_history = fit(
        capacitive_spec,
        train.capacitive,
        train.labels,
        cfg.train_config(cfg.capacitive_epochs, seed + 1),
        validation=(validation.capacitive, validation.labels) if validation is not None else None,
    )
    models = GateModels(
        inertial=TrainedModel(inertial_spec, inertial_weights),
        capacitive=TrainedModel(capacitive_spec, capacitive_weights),
    )
    return TrainedPipeline(
        models=models,
        threshold=threshold,
        inertial_history=inertial_history,
        capacitive_history=capacitive_history,
    )


def score_session(session: LabeledSession, pipeline: TrainedPipeline, cfg: PipelineConfig) -> dict:
    """
    门控打分和不经门控的两个模型各自的分数
    """
    models = pipeline.models
    detector = cfg.detector(pipeline.threshold)
    power = cfg.power
    before = models.invocations
    events = gate_session(session, models, detector, power, cfg.window_len, cfg.step)
    after = models.invocations
    if not events:
        raise DataError(f'会话{session.session_id}只有{len(session)}帧, 不足一个窗口')
    windows = build_windows([session], cfg)
    predicted = [int(e.label) for e in events]
    smoothed = smooth_labels(predicted, cfg.max_gap, cfg.majority_k)
    inertial_pred = models.inertial.predict_batch(windows.inertial).argmax(axis=1)
    capacitive_pred = models.capacitive.predict_batch(windows.capacitive).argmax(axis=1)
    joules, average_watts = session_energy(event_timeline(events, cfg.step_seconds), power)
    matrix = confusion(windows.labels, predicted)
    matrix_smoothed = confusion(windows.labels, smoothed)
    return dict(
        events=events,
        matrix=matrix,
        matrix_smoothed=matrix_smoothed,
        macro_f1=macro_f1(matrix),
        macro_f1_smoothed=macro_f1(matrix_smoothed),
        inertial_f1=binary_f1(confusion(windows.gesture, inertial_pred, n_classes=2)),
        capacitive_f1=macro_f1(confusion(windows.labels, capacitive_pred)),
        inertial_invocations=after[0] - before[0],
        capacitive_invocations=after[1] - before[1],
        stage_counts=stage_counts(events),
        joules=joules,
        average_watts=average_watts,
        savings=gating_savings(events, power),
    )


def run_fold(cfg: PipelineConfig, train_sessions: tuple[LabeledSession, ...], test: LabeledSession, seed: int) -> FoldResult:
    """
    进程池里执行的单折; 任何异常都记录在结果里, 不影响其他折
    """
    started = TimeTools.monotonic()
    try:
        pipeline = train_pipeline(train_sessions, cfg, seed)
        scores = score_session(test, pipeline, cfg)
    except GloveError as ex:
        logger.error(f'[run_fold]测试会话{test.session_id}失败: {ex}')
        return FoldResult(test_session=test.session_id, error=f'{type(ex).__name__}: {ex}')
    except Exception as ex:
        logger.exception(f'[run_fold]测试会话{test.session_id}出现意外错误')
        return FoldResult(test_session=test.session_id, error=f'{type(ex).__name__}: {ex}')
    scores.pop('events')
    result = FoldResult(
        test_session=test.session_id,
        threshold=pipeline.threshold,
        inertial_epochs=pipeline.inertial_history.epochs,
        capacitive_epochs=pipeline.capacitive_history.epochs,
        **scores,
    )
    logger.info(
        f'[run_fold]测试会话{test.session_id}: F1={result.macro_f1:.4f} 平滑后={result.macro_f1_smoothed:.4f} '
        f'惯性={result.inertial_f1:.4f} 电容={result.capacitive_f1:.4f} 节省={result.savings:.2%}, '
        f'用时{TimeTools.precisedelta(TimeTools.monotonic() - started)}'
    )
    return result


def fold_seeds(seed: int, n_folds: int) -> list[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n_folds)]


def evaluate(cfg: PipelineConfig, dataset: Dataset, workers: int = 1) -> EvalReport:
    folds = loso_folds(dataset)
    seeds = fold_seeds(cfg.seed, len(folds))
    started = TimeTools.monotonic()
    logger.info(f'[evaluate]{len(folds)}折留一会话交叉验证, 并行{workers}个进程')
    args = [
        (cfg, train, test, seed)
        for (train, test), seed in zip(folds, seeds)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run_fold, *zip(*args)))
    else:
        results = [run_fold(*a) for a in args]
    report = EvalReport(folds=tuple(results))
    logger.info(
        f'[evaluate]成功{len(report.ok_folds)}/{len(report.folds)}折, '
        f'平均宏F1={report.mean_macro_f1:.4f}, 平滑后={report.mean_macro_f1_smoothed:.4f}, '
        f'用时{TimeTools.precisedelta(TimeTools.monotonic() - started)}'
    )
    return report


def report_json(report: EvalReport) -> str:
    return json.dumps(report, default=GgGlobalConfig.JSON_DEFAULT.json_default, indent=2, ensure_ascii=False)


def write_report(report: EvalReport, folder: str) -> list[str]:
    """
    report.json, 每折平滑前后的混淆矩阵 csv, 以及所有折相加的矩阵
    """
    try:
        LocateTools.ensure_folder(folder)
    except OSError as ex:
        raise ConfigError(f'无法创建报告目录{folder}: {ex}')
    files = [('report.json', report_json(report), )]
    for fold in report.ok_folds:
        files.append((f'{fold.test_session}_matrix.csv', fold.matrix, ))
        files.append((f'{fold.test_session}_matrix_smoothed.csv', fold.matrix_smoothed, ))
    for smoothed, name in ((False, 'aggregate_matrix.csv', ), (True, 'aggregate_matrix_smoothed.csv', ), ):
        aggregate = report.aggregate(smoothed=smoothed)
        if aggregate is not None:
            files.append((name, aggregate, ))
    paths = list()
    for name, content in files:
        path = os.path.join(folder, name)
        try:
            if isinstance(content, str):
                LocateTools.write_file(path, content)
            else:
                write_matrix_csv(content, path)
        except OSError as ex:
            raise ConfigError(f'无法写入报告文件{path}: {ex}')
        paths.append(path)
    logger.info(f'[write_report]写入{humanize.intcomma(len(paths))}个文件到{folder}')
    return paths


__all__ = [
    'PipelineConfig',
    'WindowSet',
    'build_windows',
    'calibrate_sessions',
    'TrainedPipeline',
    'train_pipeline',
    'score_session',
    'run_fold',
    'fold_seeds',
    'evaluate',
    'report_json',
    'write_report',
]
