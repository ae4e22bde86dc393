"""
命令行入口: generate | train | eval | stream | events

事件行和 events 的输出写到标准输出, 日志写到标准错误.
退出码: 0 成功, 2 配置错误, 3 数据错误, 4 模型错误.
"""
import os
import sys
import logging
import argparse
import dataclasses
from dataclasses import dataclass
import itertools
from typing import Callable, Iterable, TextIO
import humanize
from glovegate.model import *
from glovegate.stream import *
from glovegate.nn import *
from glovegate.gate import *
from glovegate.smoothing import *
from glovegate.eval import *
from glovegate.tool.config import ConfigTools
from glovegate.tool.locate import LocateTools
from glovegate.tool.pacer import FramePacer
from glovegate.tool.time import TimeTools


logger = logging.getLogger(__name__)

INERTIAL_FILE = 'inertial.ggm'
CAPACITIVE_FILE = 'capacitive.ggm'
PIPELINE_FILE = 'pipeline.toml'
SYNTH_FILE = 'synth.toml'

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4


def _pipeline_overrides(args: argparse.Namespace) -> dict:
    keys = (
        'window_len', 'step', 'span', 'threshold', 'seed', 'max_gap', 'majority_k',
        'inertial_epochs', 'capacitive_epochs', 'patience', 'batch_size', 'rate_hz',
        'idle_watts', 'inertial_watts', 'full_watts',
    )
    return {k: getattr(args, k, None) for k in keys}


def _pipeline_config(args: argparse.Namespace, base: PipelineConfig = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    if args.config:
        cfg = ConfigTools.apply(cfg, ConfigTools.read_toml(args.config))
    return ConfigTools.apply(cfg, _pipeline_overrides(args))


def cmd_generate(args: argparse.Namespace) -> list[str]:
    cfg = SynthConfig.from_toml(args.config) if args.config else SynthConfig()
    cfg = ConfigTools.apply(cfg, dict(sessions=args.sessions, seed=args.seed))
    dataset = synth_dataset(cfg)
    paths = save_dataset(dataset, args.out)
    cfg.to_toml(os.path.join(args.out, SYNTH_FILE))
    return paths


def cmd_train(args: argparse.Namespace) -> dict[str, int]:
    cfg = _pipeline_config(args)
    dataset = load_dataset(args.dataset)
    started = TimeTools.monotonic()
    pipeline = train_pipeline(dataset.sessions, cfg)
    try:
        LocateTools.ensure_folder(args.out)
    except OSError as ex:
        raise ConfigError(f'无法创建模型目录{args.out}: {ex}')
    sizes = dict()
    for name, model in ((INERTIAL_FILE, pipeline.models.inertial, ), (CAPACITIVE_FILE, pipeline.models.capacitive, ), ):
        path = os.path.join(args.out, name)
        sizes[name] = save_model(path, model.spec, model.weights)
        logger.info(
            f'[train]{path}: 文件{humanize.naturalsize(sizes[name])}, '
            f'中间张量约{humanize.naturalsize(arena_bytes(model.spec))}'
        )
    dataclasses.replace(cfg, threshold=pipeline.threshold).to_toml(os.path.join(args.out, PIPELINE_FILE))
    logger.info(f'[train]训练完成, 阈值{pipeline.threshold:.4f}, 用时{TimeTools.precisedelta(TimeTools.monotonic() - started)}')
    return sizes


def cmd_eval(args: argparse.Namespace, out: TextIO = None) -> EvalReport:
    out = out or sys.stdout
    cfg = _pipeline_config(args)
    dataset = load_dataset(args.dataset)
    report = evaluate(cfg, dataset, workers=args.workers)
    if args.report:
        write_report(report, args.report)
    if not report.ok_folds:
        raise DataError(f'全部{len(report.folds)}折都失败了, 第一个错误: {report.folds[0].error}')
    for name, value in (
            ('macroF1', report.mean_macro_f1, ),
            ('macroF1Smoothed', report.mean_macro_f1_smoothed, ),
            ('inertialF1', report.mean_inertial_f1, ),
            ('capacitiveF1', report.mean_capacitive_f1, ),
            ('savings', report.mean_savings, ),
    ):
        print(f'{name}\t{value:.4f}', file=out)
    return report


@dataclass
class StreamStats:
    frames: int = 0
    windows: int = 0
    latency_sum: float = 0.0
    latency_max: float = 0.0
    max_lag: float = 0.0

    @property
    def latency_mean(self) -> float:
        return self.latency_sum / self.windows if self.windows else 0.0


def replay(
        gate: FusionGate,
        frames: Iterable[SensorFrame],
        pacer: FramePacer = None,
        on_event: Callable[[RecognitionEvent], None] = None,
) -> tuple[list[RecognitionEvent], StreamStats]:
    """
    逐帧回放; 给出 pacer 时按采样率节拍放行, 统计每个窗口步的计算延迟
    """
    stats = StreamStats()
    events = list()
    for frame in frames:
        if pacer is not None:
            pacer.consume()
        started = TimeTools.monotonic()
        event = gate.push(frame)
        stats.frames += 1
        if event is None:
            continue
        latency = TimeTools.monotonic() - started
        stats.windows += 1
        stats.latency_sum += latency
        stats.latency_max = max(stats.latency_max, latency)
        events.append(event)
        if on_event is not None:
            on_event(event)
    if pacer is not None:
        stats.max_lag = pacer.max_lag
    return events, stats


def load_pipeline(folder: str) -> tuple[GateModels, PipelineConfig]:
    models = GateModels(
        inertial=load_model(os.path.join(folder, INERTIAL_FILE)),
        capacitive=load_model(os.path.join(folder, CAPACITIVE_FILE)),
    )
    path = os.path.join(folder, PIPELINE_FILE)
    if not os.path.exists(path):
        raise ConfigError(f'模型目录{folder}下没有{PIPELINE_FILE}')
    return models, PipelineConfig.from_toml(path)


def cmd_stream(args: argparse.Namespace, out: TextIO = None) -> StreamStats:
    out = out or sys.stdout
    models, saved = load_pipeline(args.models)
    cfg = _pipeline_config(args, base=saved)
    session = read_session_csv(args.session)
    frames = session.frames
    if args.max_frames:
        frames = itertools.islice(frames, args.max_frames)
    gate = FusionGate(
        models=models,
        detector_cfg=cfg.detector(),
        power=cfg.power,
        window_len=cfg.window_len,
        step=cfg.step,
    )

    def _print(event: RecognitionEvent):
        print(format_event_line(event), file=out, flush=True)

    pacer = FramePacer(cfg.rate_hz) if args.paced else None
    events, stats = replay(gate, frames, pacer, on_event=None if args.smoothing else _print)
    if args.smoothing:
        # 间隙填充需要看到后面的窗口, 平滑结果在流结束后一次输出
        smoothed = smooth_labels([int(e.label) for e in events], cfg.max_gap, cfg.majority_k)
        for event, label in zip(events, smoothed):
            print(format_smoothed_line(event, label), file=out)
    budget = cfg.step_seconds
    logger.info(
        f'[stream]{humanize.intcomma(stats.frames)}帧, {stats.windows}个窗口步, '
        f'计算延迟平均{TimeTools.milliseconds(stats.latency_mean)} 最大{TimeTools.milliseconds(stats.latency_max)}, '
        f'步长预算{TimeTools.milliseconds(budget)}'
    )
    if stats.latency_max >= budget:
        logger.warning(f'[stream]最大计算延迟{TimeTools.milliseconds(stats.latency_max)}超过了步长预算')
    return stats


def format_smoothed_line(event: RecognitionEvent, label: int) -> str:
    """
    平滑后的事件行: 列与事件行相同, 标签换成平滑结果
    """
    parts = format_event_line(event).split('\t')
    parts[1] = str(int(label))
    return '\t'.join(parts)


def read_event_labels(lines: Iterable[str]) -> list[int]:
    labels = list()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.rstrip('\r\n').split('\t')
        if len(parts) != 5:
            raise DataError(f'第{line_no}行事件应有5列, 实际{len(parts)}列: {line!r}')
        try:
            label = int(parts[1])
        except ValueError:
            raise DataError(f'第{line_no}行的标签{parts[1]!r}不是整数')
        if not 0 <= label < N_CLASSES:
            raise DataError(f'第{line_no}行的标签{label}不是有效类别')
        labels.append(label)
    return labels


def cmd_events(args: argparse.Namespace, out: TextIO = None) -> list[GestureEvent]:
    out = out or sys.stdout
    if args.input and args.input != '-':
        try:
            with open(args.input, 'r', encoding='utf8') as f:
                labels = read_event_labels(f)
        except FileNotFoundError:
            raise DataError(f'事件文件{args.input}不存在')
    else:
        labels = read_event_labels(sys.stdin)
    events = events_from_labels(labels)
    for event in events:
        print(format_gesture_event(event), file=out)
    return events


def _add_pipeline_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='扁平 toml 配置文件, 命令行参数优先')
    parser.add_argument('--window-len', dest='window_len', type=int)
    parser.add_argument('--step', type=int)
    parser.add_argument('--span', type=int)
    parser.add_argument('--threshold', type=float)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--max-gap', dest='max_gap', type=int)
    parser.add_argument('--majority-k', dest='majority_k', type=int)
    parser.add_argument('--rate', dest='rate_hz', type=float)
    parser.add_argument('--idle-watts', dest='idle_watts', type=float)
    parser.add_argument('--inertial-watts', dest='inertial_watts', type=float)
    parser.add_argument('--full-watts', dest='full_watts', type=float)


def _add_train_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--inertial-epochs', dest='inertial_epochs', type=int)
    parser.add_argument('--capacitive-epochs', dest='capacitive_epochs', type=int)
    parser.add_argument('--patience', type=int)
    parser.add_argument('--batch-size', dest='batch_size', type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='glovegate', description='电容 + 惯性手套手势识别的分级门控流水线')
    parser.add_argument('--log-level', default='INFO', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR', ))
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', help='生成合成数据集')
    p.add_argument('--out', '--dataset', dest='out', required=True)
    p.add_argument('--sessions', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--config', help='生成器的扁平 toml 配置文件')
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('train', help='在整个数据集上训练两个模型')
    p.add_argument('--dataset', required=True)
    p.add_argument('--out', required=True, help='模型目录')
    _add_pipeline_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='留一会话交叉验证')
    p.add_argument('--dataset', required=True)
    p.add_argument('--report', help='报告目录')
    p.add_argument('--workers', type=int, default=1)
    _add_pipeline_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('stream', help='回放会话文件, 输出事件行')
    p.add_argument('--models', required=True, help='train 输出的模型目录')
    p.add_argument('--session', required=True)
    p.add_argument('--paced', action='store_true', help='按采样率节拍回放')
    p.add_argument('--smoothing', action='store_true', help='输出间隙填充和多数投票之后的标签')
    p.add_argument('--max-frames', dest='max_frames', type=int)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser('events', help='把事件行合并成手势事件')
    p.add_argument('--input', help='事件行文件, 省略或 - 表示标准输入')
    p.set_defaults(func=cmd_events)
    return parser


def main(argv: list[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s %(message)s',
    )
    try:
        args.func(args)
    except ConfigError as ex:
        logger.error(f'[{args.command}]配置错误: {ex}')
        return EXIT_CONFIG
    except DataError as ex:
        logger.error(f'[{args.command}]数据错误: {ex}')
        return EXIT_DATA
    except ModelError as ex:
        logger.error(f'[{args.command}]模型错误: {ex}')
        return EXIT_MODEL
    return EXIT_OK


__all__ = [
    'INERTIAL_FILE',
    'CAPACITIVE_FILE',
    'PIPELINE_FILE',
    'SYNTH_FILE',
    'EXIT_OK',
    'EXIT_CONFIG',
    'EXIT_DATA',
    'EXIT_MODEL',
    'StreamStats',
    'replay',
    'load_pipeline',
    'format_smoothed_line',
    'read_event_labels',
    'cmd_generate',
    'cmd_train',
    'cmd_eval',
    'cmd_stream',
    'cmd_events',
    'build_parser',
    'main',
]
