"""
会话文件和数据集目录.

会话文件是带表头的 csv, 列为 t,ax,ay,az,c1,c2,c3,c4,label, 每行一帧.
数据集目录下每个会话一个 <session_id>.csv 文件, 按文件名排序.
"""
import os
import logging
import numpy as np
import pandas as pd
import humanize
from sklearn.model_selection import LeaveOneGroupOut
from glovegate.model import *
from glovegate.stream import WINDOW_LEN
from glovegate.tool.locate import LocateTools


logger = logging.getLogger(__name__)

CSV_COLUMNS = ['t', 'ax', 'ay', 'az', 'c1', 'c2', 'c3', 'c4', 'label', ]
ACCEL_COLUMNS = ['ax', 'ay', 'az', ]
CAP_COLUMNS = ['c1', 'c2', 'c3', 'c4', ]


def _line_no(row: int) -> int:
    # 第 1 行是表头, 数据行从第 2 行开始
    return row + 2


def read_session_csv(path: str, session_id: str = None) -> LabeledSession:
    session_id = session_id or os.path.splitext(os.path.basename(path))[0]
    try:
        df = pd.read_csv(path, dtype=str, skip_blank_lines=True)
    except FileNotFoundError:
        raise DataError(f'会话文件{path}不存在')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as ex:
        raise DataError(f'[{path}]无法解析: {ex}')
    if list(df.columns) != CSV_COLUMNS:
        raise DataError(f'[{path}]第1行表头应为{",".join(CSV_COLUMNS)}, 实际{",".join(map(str, df.columns))}')
    values = df.apply(pd.to_numeric, errors='coerce')
    bad = values.isna().any(axis=1) | ~np.isfinite(values.to_numpy(dtype=np.float64)).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f'[{path}]第{_line_no(row)}行含有缺失或非数值的字段: {df.iloc[row].tolist()}')
    labels = values['label'].to_numpy(dtype=np.float64)
    bad = (labels != np.round(labels)) | (labels < 0) | (labels >= N_CLASSES)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f'[{path}]第{_line_no(row)}行的标签{df.iloc[row]["label"]}不是0到{N_CLASSES - 1}的整数')
    # 校验通过后再按字符串逐个转换, 与写出时的 repr 精确往返
    numbers = df.astype(np.float64).to_numpy()
    t = numbers[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        row = int(bad[0]) + 1
        raise DataError(f'[{path}]第{_line_no(row)}行的时间戳{t[row]}不晚于上一行{t[row - 1]}')
    return LabeledSession(
        session_id=session_id,
        t=t,
        accel=numbers[:, 1:4].copy(),
        cap=numbers[:, 4:8].copy(),
        labels=labels.astype(np.int64),
    )


def write_session_csv(session: LabeledSession, path: str):
    df = pd.DataFrame(
        np.column_stack((session.t, session.accel, session.cap)),
        columns=CSV_COLUMNS[:-1],
    )
    df['label'] = session.labels.astype(np.int64)
    df.to_csv(path, index=False, lineterminator='\n')


def save_dataset(dataset: Dataset, folder: str) -> list[str]:
    try:
        LocateTools.ensure_folder(folder)
    except OSError as ex:
        raise ConfigError(f'无法创建数据集目录{folder}: {ex}')
    paths = list()
    for session in dataset.sessions:
        path = os.path.join(folder, f'{session.session_id}.csv')
        try:
            write_session_csv(session, path)
        except OSError as ex:
            raise ConfigError(f'无法写入会话文件{path}: {ex}')
        paths.append(path)
    frames = sum(len(s) for s in dataset.sessions)
    logger.info(f'[save_dataset]写入{len(paths)}个会话, 共{humanize.intcomma(frames)}帧到{folder}')
    return paths


def load_dataset(folder: str) -> Dataset:
    if not os.path.isdir(folder):
        raise DataError(f'数据集目录{folder}不存在')
    paths = LocateTools.scan_folder(folder, r'\.csv$')
    if not paths:
        raise DataError(f'数据集目录{folder}下没有会话 csv 文件')
    return Dataset(sessions=tuple(read_session_csv(path) for path in paths))


def loso_folds(dataset: Dataset) -> list[tuple[tuple[LabeledSession, ...], LabeledSession]]:
    """
    留一会话交叉验证: 以会话编号分组, 每个会话作为一次测试集, 其余作为训练集.
    折按会话编号排序.
    """
    sessions = dataset.sessions
    if len(sessions) < 2:
        raise DataError(f'留一会话交叉验证至少需要2个会话, 实际{len(sessions)}个, 请用 generate --sessions 生成更多会话')
    groups = [s.session_id for s in sessions]
    folds = list()
    for train_index, test_index in LeaveOneGroupOut().split(np.zeros((len(sessions), 1)), groups=groups):
        test, = test_index
        folds.append((tuple(sessions[i] for i in train_index), sessions[test]))
    return folds


def _majority(labels: np.ndarray) -> int:
    # argmax 在平票时取最小的下标, 即偏向 Null
    return int(np.bincount(labels, minlength=N_CLASSES).argmax())


def window_label(session: LabeledSession, start: int, window_len: int = WINDOW_LEN) -> int:
    """
    窗口内逐帧标签的多数, 平票时偏向 Null(0)
    """
    if start < 0 or window_len < 1 or start + window_len > len(session):
        raise DataError(f'窗口[{start}, {start + window_len})越出会话{session.session_id}的范围[0, {len(session)})')
    return _majority(session.labels[start:start + window_len])


def window_labels(session: LabeledSession, starts: np.ndarray, window_len: int = WINDOW_LEN) -> np.ndarray:
    return np.asarray([window_label(session, int(s), window_len) for s in starts], dtype=np.int64)


__all__ = [
    'CSV_COLUMNS',
    'read_session_csv',
    'write_session_csv',
    'save_dataset',
    'load_dataset',
    'loso_folds',
    'window_label',
    'window_labels',
]
