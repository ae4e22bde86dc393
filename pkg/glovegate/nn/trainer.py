import logging
from dataclasses import dataclass, field
import numpy as np
import humanize
from glovegate.model import *
from glovegate.nn.base import *
from glovegate.nn.network import *
from glovegate.nn.optimizer import *
from glovegate.tool.time import TimeTools


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100 # 电容模型用 200
    patience: int = 30
    restore_best: bool = True
    optimizer: AdaDeltaConfig = field(default_factory=AdaDeltaConfig)
    batch_size: int = 32
    monitor: str = 'val_accuracy'
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError(f'max_epochs 必须 >= 1: {self.max_epochs}')
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError(f'patience 必须在[0, max_epochs]之间: {self.patience}')
        if self.batch_size < 1:
            raise ConfigError(f'batch_size 必须 >= 1: {self.batch_size}')
        if self.monitor not in ('val_accuracy', 'accuracy', ):
            raise ConfigError(f'不支持的监控指标: {self.monitor}')


@dataclass(frozen=True)
class EpochRecord:
    epoch: int # 从 1 开始
    loss: float
    accuracy: float
    val_loss: float | None = None
    val_accuracy: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_value: float = float('-inf')
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.records)


class EarlyStopping:
    """
    监控值严格变大才算改进; 连续 patience 个 epoch 没有改进就停止
    """
    def __init__(self, patience: int):
        assert patience >= 0
        self.patience = patience
        self.best_value = float('-inf')
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> tuple[bool, bool]:
        """
        返回 (本 epoch 是否为新的最好值, 是否应当停止)
        """
        if value > self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.wait = 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


def evaluate_accuracy(spec: ModelSpec, w: ModelWeights, xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """
    推理模式下的 (平均交叉熵, 准确率)
    """
    probs = predict_proba(spec, w, xs)
    rows = np.arange(len(ys))
    loss = float(-np.log(np.maximum(probs[rows, ys], PROB_FLOOR)).mean())
    accuracy = float((probs.argmax(axis=1) == ys).mean())
    return loss, accuracy


def fit(
        spec: ModelSpec,
        xs: np.ndarray,
        ys: np.ndarray,
        cfg: TrainConfig = None,
        validation: tuple[np.ndarray, np.ndarray] | None = None,
        weights: ModelWeights | None = None,
) -> tuple[ModelWeights, TrainHistory]:
    """
    AdaDelta + 交叉熵的小批量训练, 按监控指标做早停并恢复最好的权重.
    没有提供验证集时监控训练集准确率.
    """
    cfg = cfg or TrainConfig()
    ys = np.asarray(ys, dtype=np.int64)
    if not len(ys):
        raise DataError(f'[{spec.name}]训练集为空')
    if len(xs) != len(ys):
        raise DataError(f'[{spec.name}]样本数{len(xs)}与标签数{len(ys)}不一致')
    if len(np.unique(ys)) < 2:
        logger.warning(f'[{spec.name}]训练集只有一个类别{int(ys[0])}, 继续训练')
    monitor = cfg.monitor
    if validation is None or not len(validation[1]):
        if monitor == 'val_accuracy':
            logger.warning(f'[{spec.name}]没有验证集, 改为监控训练集准确率')
        validation = None
        monitor = 'accuracy'
    else:
        validation = validation[0], np.asarray(validation[1], dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    w = weights.copy() if weights is not None else init_weights(spec, seed=cfg.seed)
    xs = np.asarray(xs).astype(w.dtype, copy=False)
    state = AdaDeltaState.zeros_like(w.blocks)
    stopper = EarlyStopping(cfg.patience)
    history = TrainHistory()
    best = w.copy()
    started = TimeTools.monotonic()
    n = len(ys)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for i in range(0, n, cfg.batch_size):
            index = order[i:i + cfg.batch_size]
            grads = backward(spec, w, xs[index], ys[index], rng)
            adadelta_step(state, w.blocks, grads.blocks, cfg.optimizer)
            loss_sum += grads.loss * len(index)
            correct += grads.correct
        # 与 keras 相同, 训练指标是本 epoch 各批在训练模式下的累计值
        accuracy = correct / n
        record = EpochRecord(epoch=epoch, loss=loss_sum / n, accuracy=accuracy)
        if validation is not None:
            val_loss, val_accuracy = evaluate_accuracy(spec, w, *validation)
            record = EpochRecord(epoch=epoch, loss=record.loss, accuracy=accuracy, val_loss=val_loss, val_accuracy=val_accuracy)
        history.records.append(record)
        value = record.val_accuracy if monitor == 'val_accuracy' else record.accuracy
        improved, stop = stopper.update(epoch, value)
        if improved:
            best = w.copy()
        logger.debug(
            f'[{spec.name}]epoch {epoch}: loss={record.loss:.4f} acc={record.accuracy:.4f} '
            f'val_loss={record.val_loss} val_acc={record.val_accuracy}'
        )
        if stop:
            history.stopped_early = True
            break
    history.best_epoch = stopper.best_epoch
    history.best_value = stopper.best_value
    logger.info(
        f'[{spec.name}]训练{history.epochs}个epoch, 用时{TimeTools.precisedelta(TimeTools.monotonic() - started)}, '
        f'最好的{monitor}={stopper.best_value:.4f} 出现在第{stopper.best_epoch}个epoch'
        f'{", 提前停止" if history.stopped_early else ""}, 样本{humanize.intcomma(n)}个'
    )
    return (best if cfg.restore_best else w), history


__all__ = [
    'TrainConfig',
    'EpochRecord',
    'TrainHistory',
    'EarlyStopping',
    'evaluate_accuracy',
    'fit',
]
