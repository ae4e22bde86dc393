from dataclasses import dataclass
import numpy as np
from glovegate.model import *
from glovegate.nn.base import *


@dataclass(frozen=True)
class AdaDeltaConfig:
    """
    "learning rate 0.9" 解读为更新量的整体倍率 step_scale, rho 取 0.95;
    另一种解读(rho=0.9)可以直接通过配置得到
    """
    step_scale: float = 0.9
    rho: float = 0.95
    epsilon: float = 1e-7

    def __post_init__(self):
        if not self.step_scale > 0:
            raise ConfigError(f'step_scale 必须 > 0: {self.step_scale}')
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f'rho 必须在[0, 1)之间: {self.rho}')
        if not self.epsilon > 0:
            raise ConfigError(f'epsilon 必须 > 0: {self.epsilon}')


@dataclass
class AdaDeltaState:
    accum_grad: list[Block] # E[g^2]
    accum_update: list[Block] # E[dx^2]

    @classmethod
    def zeros_like(cls, params: list[Block]) -> 'AdaDeltaState':
        return cls(
            accum_grad=[{k: np.zeros_like(v) for k, v in block.items()} for block in params],
            accum_update=[{k: np.zeros_like(v) for k, v in block.items()} for block in params],
        )


def adadelta_step(state: AdaDeltaState, params: list[Block], grads: list[Block], cfg: AdaDeltaConfig) -> tuple[list[Block], AdaDeltaState]:
    """
    E[g^2] <- rho * E[g^2] + (1 - rho) * g^2
    dx = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho * E[dx^2] + (1 - rho) * dx^2
    param <- param + step_scale * dx
    参数和累加量原地更新. grads 中没有出现的键(不可训练的状态)不动.
    """
    if len(params) != len(grads) or len(state.accum_grad) != len(params):
        raise ModelError(f'参数块数量不一致: params={len(params)}, grads={len(grads)}, state={len(state.accum_grad)}')
    rho = cfg.rho
    for block, grad_block, eg_block, ex_block in zip(params, grads, state.accum_grad, state.accum_update):
        for k, g in grad_block.items():
            param = block[k]
            if g.shape != param.shape:
                raise ModelError(f'参数{k}的梯度形状{g.shape}与参数{param.shape}不符')
            g = g.astype(param.dtype, copy=False)
            eg = eg_block[k]
            ex = ex_block[k]
            eg *= rho
            eg += (1.0 - rho) * g * g
            delta = -np.sqrt(ex + cfg.epsilon) / np.sqrt(eg + cfg.epsilon) * g
            ex *= rho
            ex += (1.0 - rho) * delta * delta
            param += cfg.step_scale * delta
    return params, state


__all__ = [
    'AdaDeltaConfig',
    'AdaDeltaState',
    'adadelta_step',
]
