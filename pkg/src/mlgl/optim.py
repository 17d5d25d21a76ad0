"""AdamW with decoupled weight decay.

Decay multiplies the parameter by (1 - lr * wd) before the Adam update,
so it never enters the moment estimates.  Parameters whose grad is None
are skipped entirely, decay included.
"""
import numpy as np

from .tensor import Tensor


class AdamW:
    def __init__(self, params, lr: float = 5e-4, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params: list[Tensor] = list(params)
        if not self.params:
            raise ValueError("optimizer got an empty parameter list")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        bc1 = 1 - self.beta1 ** self.t
        bc2 = 1 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay != 0:
                p.data *= 1 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Slot arrays keyed by slot name and parameter position."""
        out = {"t": np.array(float(self.t))}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_tensors(self, blob: dict[str, np.ndarray]):
        self.t = int(np.asarray(blob["t"]).reshape(-1)[0])
        for i in range(len(self.params)):
            for slot, store in (("m", self.m), ("v", self.v)):
                arr = blob[f"{slot}.{i}"]
                if arr.shape != store[i].shape:
                    raise ValueError(f"optimizer slot {slot}.{i} has shape {arr.shape}, "
                                     f"expected {store[i].shape}")
                store[i][...] = arr
