"""Adam optimizer, gradient clipping, and the finite-difference gradient oracle."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

from .autodiff import Parameter, Tensor


class AdamState:
    """Per-parameter first/second moments plus step counters, keyed by name."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def slot(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
            self.t[name] = 0
        if self.m[name].shape != like.shape:
            raise ValueError(f"optimizer state shape mismatch for {name}")
        return self.m[name], self.v[name]


def adam_step(params: Mapping[str, Parameter], state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """One bias-corrected Adam update on every trainable parameter.

    Frozen parameters are skipped entirely, so their values stay bit-identical.
    """
    b1, b2 = betas
    for name, p in params.items():
        if not p.trainable:
            continue
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        m, v = state.slot(name, p.data)
        state.t[name] += 1
        t = state.t[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)


def zero_grads(params: Mapping[str, Parameter]) -> None:
    for p in params.values():
        p.zero_grad()


def clip_global_norm(params: Mapping[str, Parameter], max_norm: float) -> float:
    """Scale all trainable gradients so their joint L2 norm is at most max_norm."""
    sq = 0.0
    for p in params.values():
        if p.trainable:
            sq += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(sq))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.trainable:
                p.grad *= scale
    return norm


def finite_difference_check(f: Callable[[], Tensor],
                            params: Mapping[str, Parameter] | Iterable[Parameter],
                            h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``f`` must rebuild the computation (same seeds, same data) on every call.
    Requires float64 parameters; the relative error for each trainable entry is
    |analytic - numeric| / max(1, |analytic|).
    """
    if isinstance(params, Mapping):
        plist = list(params.values())
    else:
        plist = list(params)
    for p in plist:
        if p.trainable and p.data.dtype != np.float64:
            raise ValueError(f"gradient check requires float64 parameters ({p.name or 'unnamed'})")

    for p in plist:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.data):
        raise FloatingPointError("non-finite loss in gradient check")
    out.backward()
    analytic = [p.grad.copy() for p in plist]

    worst = 0.0
    for p, ga in zip(plist, analytic):
        if not p.trainable:
            continue
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("non-finite intermediate in finite differences")
            numeric = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
            if err > worst:
                worst = err
    return worst
