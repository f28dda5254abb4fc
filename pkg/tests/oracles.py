"""Independent reference computations used as test oracles."""
from __future__ import annotations

import math

import numpy as np
import torch


def brute_hausdorff(m: np.ndarray, g: np.ndarray) -> float:
    """O(|M|*|G|) symmetric Hausdorff over foreground pixel coordinates."""
    a = np.argwhere(np.asarray(m) > 0).astype(np.float64)
    b = np.argwhere(np.asarray(g) > 0).astype(np.float64)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def set_iou(x: np.ndarray, y: np.ndarray) -> float:
    xs = {tuple(p) for p in np.argwhere(x > 0)}
    ys = {tuple(p) for p in np.argwhere(y > 0)}
    if not xs | ys:
        return 1.0
    return len(xs & ys) / len(xs | ys)


def set_dice(x: np.ndarray, y: np.ndarray) -> float:
    xs = {tuple(p) for p in np.argwhere(x > 0)}
    ys = {tuple(p) for p in np.argwhere(y > 0)}
    if not xs and not ys:
        return 1.0
    return 2 * len(xs & ys) / (len(xs) + len(ys))


def ellipse_pixels(size: int, lungs) -> np.ndarray:
    """Per-pixel evaluation of the ellipse inequality, one pixel at a time."""
    out = np.zeros((size, size), dtype=np.uint8)
    for i in range(size):
        for j in range(size):
            for e in lungs:
                dy, dx = i - e.cy, j - e.cx
                u = (dx * math.cos(e.theta) + dy * math.sin(e.theta)) / e.a
                v = (-dx * math.sin(e.theta) + dy * math.cos(e.theta)) / e.b
                if u * u + v * v <= 1.0:
                    out[i, j] = 1
                    break
    return out


def central_differences(loss_fn, params: list[torch.Tensor], h: float = 1e-6) -> list[torch.Tensor]:
    """Numerical gradient of a scalar ``loss_fn()`` w.r.t. every entry of ``params``."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                up = float(loss_fn())
                flat[k] = orig - h
                down = float(loss_fn())
                flat[k] = orig
                gflat[k] = (up - down) / (2 * h)
            grads.append(g)
    return grads
