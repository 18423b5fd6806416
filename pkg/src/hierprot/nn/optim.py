"""Adam with decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Bias-corrected Adam; weight decay shrinks parameters directly (AdamW style).

    The optimizer is the only writer of its parameters; call :meth:`step`
    from one thread at a time.
    """

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.state = OptimizerState(lr, betas[0], betas[1], eps, weight_decay, 0,
                                    [np.zeros_like(p.data) for p in self.params],
                                    [np.zeros_like(p.data) for p in self.params])

    def step(self, grads):
        s = self.state
        if len(grads) != len(self.params):
            raise ShapeMismatch(f"{len(grads)} gradients for {len(self.params)} parameters")
        s.step += 1
        c1 = 1.0 - s.beta1 ** s.step
        c2 = 1.0 - s.beta2 ** s.step
        for p, g, m, v in zip(self.params, grads, s.m, s.v):
            if g.shape != p.data.shape:
                raise ShapeMismatch(f"gradient {g.shape} vs parameter {p.data.shape}")
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            update = p.data * (1.0 - s.lr * s.weight_decay) - s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)
            p.assign(update)

    def state_dict(self):
        out = {"step": np.array([float(self.state.step)])}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"m.{i}"] = m.copy()
            out[f"v.{i}"] = v.copy()
        return out

    def load_state_dict(self, state):
        self.state.step = int(state["step"][0])
        for i in range(len(self.params)):
            self.state.m[i][...] = state[f"m.{i}"]
            self.state.v[i][...] = state[f"v.{i}"]


def clip_by_global_norm(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads, total
