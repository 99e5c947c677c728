"""Finite-difference verification for layers, networks and losses.

A block is anything with forward(x) -> y, backward(grad) -> grad_x and the
Module parameter/casting interface. The harness deep-copies the block,
promotes it to float64, freezes batch-norm running statistics so repeated
forwards are pure, and compares the analytic gradients against central
differences of a fixed random projection of the output.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm2d, Module


@dataclass
class GroupCheck:
    name: str
    max_rel_err: float
    checked: int


@dataclass
class GradCheckReport:
    block: str
    tol: float
    groups: list[GroupCheck] = field(default_factory=list)
    failure: str | None = None

    @property
    def max_rel_err(self) -> float:
        return max((g.max_rel_err for g in self.groups), default=0.0)

    @property
    def passed(self) -> bool:
        return self.failure is None and all(g.max_rel_err < self.tol for g in self.groups)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status}  {self.block}  (tol {self.tol:g})"]
        if self.failure:
            lines.append(f"    failure: {self.failure}")
        for g in self.groups:
            lines.append(f"    {g.name:<40s} max rel err {g.max_rel_err:.3e}  ({g.checked} coords)")
        return "\n".join(lines)


def _freeze_stats(module: Module):
    if isinstance(module, BatchNorm2d):
        module.update_stats = False
    for child in module.children():
        _freeze_stats(child)


def _sample_coords(rng: np.random.Generator, size: int, limit: int) -> np.ndarray:
    if size <= limit:
        return np.arange(size)
    return rng.choice(size, size=limit, replace=False)


def _rel_err(analytic: float, numeric: float) -> float:
    # the floor keeps genuinely-zero gradients (e.g. a conv bias feeding a
    # train-mode batchnorm) from dividing finite-difference roundoff by ~0
    return abs(analytic - numeric) / max(1e-4, abs(analytic), abs(numeric))


def grad_check(block, x: np.ndarray, tol: float, name: str = "",
               rng: np.random.Generator | None = None, h: float = 1e-6,
               max_input_coords: int = 48, max_param_coords: int = 8) -> GradCheckReport:
    """Check a block's backward pass against central finite differences.

    The scalar probe loss is sum(forward(x) * R) for a fixed random R, so
    every output element participates with a generic upstream gradient.
    Coordinates are subsampled per group; the whole check runs in float64.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    report = GradCheckReport(block=name or type(block).__name__, tol=tol)

    block = copy.deepcopy(block)
    block.cast_(np.float64)
    _freeze_stats(block)
    x = x.astype(np.float64)

    y = block.forward(x)
    if not np.all(np.isfinite(y)):
        report.failure = "non-finite values in forward output"
        return report
    r = rng.standard_normal(y.shape)

    block.zero_grad()
    y = block.forward(x)
    grad_x = block.backward(r)
    params = list(block.named_parameters())
    if not np.all(np.isfinite(grad_x)) or any(not np.all(np.isfinite(p.grad)) for _, p in params):
        report.failure = "non-finite values in analytic gradients"
        return report

    def loss_at() -> float:
        return float(np.sum(block.forward(x) * r))

    groups = [("input", x, grad_x, max_input_coords)]
    groups += [(pname, p.data, p.grad, max_param_coords) for pname, p in params]

    for gname, data, analytic, limit in groups:
        flat = data.reshape(-1)
        aflat = analytic.reshape(-1)
        worst = 0.0
        coords = _sample_coords(rng, flat.size, limit)
        for i in coords:
            keep = flat[i]
            flat[i] = keep + h
            up = loss_at()
            flat[i] = keep - h
            down = loss_at()
            flat[i] = keep
            numeric = (up - down) / (2 * h)
            if not np.isfinite(numeric):
                report.failure = f"non-finite finite-difference value in group {gname}"
                return report
            worst = max(worst, _rel_err(float(aflat[i]), numeric))
        report.groups.append(GroupCheck(gname, worst, len(coords)))
    return report
