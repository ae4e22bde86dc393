from typing import Sequence
import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, f1_score
from glovegate.model import *


def confusion(true_labels: Sequence[int], predicted: Sequence[int], n_classes: int = N_CLASSES) -> ConfusionMatrix:
    y = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted, dtype=np.int64).ravel()
    if y.shape != p.shape:
        raise DataError(f'真实标签{y.size}个, 预测标签{p.size}个, 数量不一致')
    for name, v in (('真实', y, ), ('预测', p, ), ):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise DataError(f'{name}标签越出[0, {n_classes})')
    if not y.size:
        return ConfusionMatrix(counts=np.zeros((n_classes, n_classes), dtype=np.int64))
    counts = confusion_matrix(y, p, labels=np.arange(n_classes))
    return ConfusionMatrix(counts=counts.astype(np.int64))


def _label_pairs(m: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    # 聚合矩阵只保存计数, 还原成逐窗口的 (真实, 预测) 序列交给 sklearn
    rows, cols = np.nonzero(m.counts)
    repeats = m.counts[rows, cols]
    return np.repeat(rows, repeats), np.repeat(cols, repeats)


def _present(m: ConfusionMatrix) -> np.ndarray:
    return (m.counts.sum(axis=0) + m.counts.sum(axis=1)) > 0


def per_class_f1(m: ConfusionMatrix) -> np.ndarray:
    """
    各类别的 F1; 既没有真实样本也没有被预测到的类别为 nan
    """
    f1 = np.full(m.n_classes, np.nan)
    present = _present(m)
    if not present.any():
        return f1
    y, p = _label_pairs(m)
    labels = np.flatnonzero(present)
    f1[labels] = f1_score(y, p, labels=labels, average=None, zero_division=0)
    return f1


def macro_f1(m: ConfusionMatrix) -> float:
    """
    只对出现过的类别求平均, 没有任何样本时为 0
    """
    present = _present(m)
    if not present.any():
        return 0.0
    y, p = _label_pairs(m)
    return float(f1_score(y, p, labels=np.flatnonzero(present), average='macro', zero_division=0))


def binary_matrix(m: ConfusionMatrix) -> ConfusionMatrix:
    """
    折叠成 Null / 活动 两类
    """
    counts = m.counts
    null_null = counts[0, 0]
    null_act = counts[0, 1:].sum()
    act_null = counts[1:, 0].sum()
    act_act = counts[1:, 1:].sum()
    return ConfusionMatrix(counts=np.array([[null_null, null_act], [act_null, act_act]], dtype=np.int64))


def binary_f1(m: ConfusionMatrix) -> float:
    """
    2x2 矩阵中活动类(下标 1)的 F1, 没有活动样本也没有活动预测时为 1
    """
    if m.n_classes != 2:
        m = binary_matrix(m)
    f1 = per_class_f1(m)[1]
    return 1.0 if np.isnan(f1) else float(f1)


def matrix_frame(m: ConfusionMatrix) -> pd.DataFrame:
    if m.n_classes == N_CLASSES:
        names = [label.name for label in GestureLabel]
    elif m.n_classes == 2:
        names = ['Null', 'Activity', ]
    else:
        names = [str(i) for i in range(m.n_classes)]
    df = pd.DataFrame(m.counts, index=names, columns=names)
    df.index.name = 'true\\predicted'
    return df


def write_matrix_csv(m: ConfusionMatrix, path: str):
    matrix_frame(m).to_csv(path, lineterminator='\n')


__all__ = [
    'confusion',
    'per_class_f1',
    'macro_f1',
    'binary_matrix',
    'binary_f1',
    'matrix_frame',
    'write_matrix_csv',
]
