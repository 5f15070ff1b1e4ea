from __future__ import annotations

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


class AMSGrad:
    """Adam with a running elementwise maximum of the second moment.

    State is kept per parameter array: first moment ``m``, second moment
    ``v`` and its running maximum ``v_max``. The step counter ``t`` starts
    at 0 and is incremented before each update.
    """

    def __init__(self, params: list[np.ndarray], lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.v_max = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        """Update ``params`` in place."""
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(
                    f"non-finite gradient in parameter {i} (shape {g.shape}) at step {self.t + 1}"
                )
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        m_corr = 1.0 - b1**self.t
        v_corr = 1.0 - b2**self.t
        for p, g, m, v, vmax in zip(self.params, grads, self.m, self.v, self.v_max):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            np.maximum(vmax, v, out=vmax)
            update = self.lr * (m / m_corr) / (np.sqrt(vmax / v_corr) + self.epsilon)
            p -= update.astype(p.dtype, copy=False)

    def state(self) -> list[np.ndarray]:
        return [*self.m, *self.v, *self.v_max]


def amsgrad_step(params, grads, state: AMSGrad | None = None, **hyper) -> AMSGrad:
    """Functional wrapper: one AMSGrad update, creating fresh state if needed."""
    opt = state if state is not None else AMSGrad(params, **hyper)
    opt.step(grads)
    return opt
