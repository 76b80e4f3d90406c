"""Adam with independent parameter groups.

Each group carries its own learning rate and optional gradient-norm
clip. A single shared step counter drives bias correction so that
checkpointed state can resume mid-run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class ParamGroup:
    name: str
    params: list[Tensor]
    lr: float
    clip_norm: float | None = None


@dataclass
class StepReport:
    """What one optimizer step did: applied or skipped, and the raw group norms."""

    applied: bool
    grad_norms: dict[str, float] = field(default_factory=dict)
    skipped_reason: str | None = None


class Adam:
    def __init__(self, groups: list[ParamGroup], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        names = [g.name for g in groups]
        if len(set(names)) != len(names):
            raise ValueError("parameter group names must be unique")
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = [[np.zeros_like(p.value) for p in g.params] for g in groups]
        self._v = [[np.zeros_like(p.value) for p in g.params] for g in groups]

    def zero_grad(self) -> None:
        for g in self.groups:
            for p in g.params:
                p.zero_grad()

    def step(self) -> StepReport:
        """Apply one update. If any gradient in any group is non-finite, the
        whole step is skipped (no moment update, no counter bump)."""
        report = StepReport(applied=False)
        grads: list[list[np.ndarray]] = []
        for group in self.groups:
            gs = []
            sq = 0.0
            for p in group.params:
                g = p.grad if p.grad is not None else np.zeros_like(p.value)
                if not np.all(np.isfinite(g)):
                    report.skipped_reason = f"non-finite gradient in group {group.name!r}"
                    return report
                gs.append(g)
                sq += float(np.sum(g * g))
            norm = float(np.sqrt(sq))
            report.grad_norms[group.name] = norm
            if group.clip_norm is not None and norm > group.clip_norm:
                scale = group.clip_norm / (norm + 1e-12)
                gs = [g * scale for g in gs]
            grads.append(gs)

        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for gi, group in enumerate(self.groups):
            for pi, p in enumerate(group.params):
                g = grads[gi][pi]
                m = self._m[gi][pi]
                v = self._v[gi][pi]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                p.value -= group.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
        report.applied = True
        return report

    # -- checkpoint support ------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"adam_t": np.array([float(self.t)])}
        for gi, group in enumerate(self.groups):
            for pi in range(len(group.params)):
                out[f"adam_m_{group.name}_{pi}"] = self._m[gi][pi]
                out[f"adam_v_{group.name}_{pi}"] = self._v[gi][pi]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["adam_t"][0])
        for gi, group in enumerate(self.groups):
            for pi in range(len(group.params)):
                m = arrays[f"adam_m_{group.name}_{pi}"]
                v = arrays[f"adam_v_{group.name}_{pi}"]
                if m.shape != self._m[gi][pi].shape:
                    raise ValueError(f"optimizer state shape mismatch for {group.name}[{pi}]")
                self._m[gi][pi] = m.copy()
                self._v[gi][pi] = v.copy()
