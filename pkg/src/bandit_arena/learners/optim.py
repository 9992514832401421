"""Gradient-ascent optimizers and the temperature/learning-rate annealing schedule."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class OptimizerDiverged(FloatingPointError):
    pass


class OptimizerKind(str, enum.Enum):
    SGD = "SGD"
    ADADELTA = "ADADELTA"
    ADAM = "ADAM"


@dataclass
class OptimizerState:
    kind: OptimizerKind
    dim: int
    lr: float = 1e-3
    lr0: Optional[float] = None
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    rho: float = 0.95
    eps_adadelta: float = 1e-6
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    acc_grad: np.ndarray = field(default=None)
    acc_delta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if self.lr0 is None:
            self.lr0 = self.lr
        for name in ("m", "v", "acc_grad", "acc_delta"):
            val = getattr(self, name)
            setattr(self, name, np.zeros(self.dim) if val is None else np.asarray(val, dtype=np.float64))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["kind"] = self.kind.value
        for name in ("m", "v", "acc_grad", "acc_delta"):
            d[name] = d[name].tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerState":
        return cls(**d)


def _checked(w, delta):
    if not np.all(np.isfinite(delta)):
        raise OptimizerDiverged("non-finite parameter update")
    return w + delta


def sgd_step(opt: OptimizerState, w: np.ndarray, g: np.ndarray) -> np.ndarray:
    opt.t += 1
    return _checked(w, opt.lr * g)


def adam_step(opt: OptimizerState, w: np.ndarray, g: np.ndarray) -> np.ndarray:
    opt.t += 1
    opt.m = opt.beta1 * opt.m + (1 - opt.beta1) * g
    opt.v = opt.beta2 * opt.v + (1 - opt.beta2) * g * g
    m_hat = opt.m / (1 - opt.beta1 ** opt.t)
    v_hat = opt.v / (1 - opt.beta2 ** opt.t)
    return _checked(w, opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps_adam))


def adadelta_step(opt: OptimizerState, w: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Adadelta. ``lr`` is a plain multiplier (1.0 gives the original method)."""
    opt.t += 1
    opt.acc_grad = opt.rho * opt.acc_grad + (1 - opt.rho) * g * g
    delta = np.sqrt(opt.acc_delta + opt.eps_adadelta) / np.sqrt(opt.acc_grad + opt.eps_adadelta) * g
    opt.acc_delta = opt.rho * opt.acc_delta + (1 - opt.rho) * delta * delta
    return _checked(w, opt.lr * delta)


_STEPS = {
    OptimizerKind.SGD: sgd_step,
    OptimizerKind.ADAM: adam_step,
    OptimizerKind.ADADELTA: adadelta_step,
}


def optimizer_step(opt: OptimizerState, w: np.ndarray, g: np.ndarray) -> np.ndarray:
    if g.shape != w.shape:
        raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape}")
    return _STEPS[opt.kind](opt, w, g)


@dataclass
class AnnealSchedule:
    """``T_k = decay ** max(k - k_start, 0)``; the learning rate is multiplied by ``T_k`` each tick."""

    k_start: int
    decay: float = 0.99
    temperature: float = 1.0
    last_k: int = 0

    def temperature_at(self, k: int) -> float:
        return self.decay ** max(k - self.k_start, 0)

    def to_dict(self) -> dict:
        return {"k_start": self.k_start, "decay": self.decay,
                "temperature": self.temperature, "last_k": self.last_k}

    @classmethod
    def from_dict(cls, d: dict) -> "AnnealSchedule":
        return cls(**d)


def anneal_tick(sched: AnnealSchedule, opt: OptimizerState, k: int) -> tuple[float, float]:
    if k < sched.last_k:
        raise ValueError(f"anneal step went backwards: {k} < {sched.last_k}")
    if k == sched.last_k:  # repeated tick for the same round decays nothing
        return sched.temperature, opt.lr
    sched.last_k = k
    sched.temperature = sched.temperature_at(k)
    opt.lr = opt.lr * sched.temperature
    return sched.temperature, opt.lr
