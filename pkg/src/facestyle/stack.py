"""Full-resolution Laplacian stacks and their local energy maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import gaussian_blur


def stack_sigmas(depth: int, base_sigma: float = 2.0) -> list[float]:
    """Blur scales ``base * 2**(l-1)`` for ``l = 1 .. depth-1`` (2, 4, 8, 16 for depth 5)."""
    return [base_sigma * 2.0 ** (l - 1) for l in range(1, depth)]


@dataclass(frozen=True)
class LaplacianStack:
    layers: list[np.ndarray]
    residual: np.ndarray
    sigmas: list[float]

    @property
    def depth(self) -> int:
        return len(self.layers) + 1

    def energy_sigma(self, level: int) -> float:
        # the first band has no finer blur of its own; it shares sigma_1
        return self.sigmas[max(level, 1) - 1]

    def scaled(self, factor: float) -> "LaplacianStack":
        return LaplacianStack([l * factor for l in self.layers], self.residual * factor,
                              list(self.sigmas))


def build_stack(plane, depth: int = 5, base_sigma: float = 2.0) -> LaplacianStack:
    """Decompose a single plane into ``depth - 1`` band layers plus a residual.

    Bands are differences of blurs of the original plane, so
    ``sum(layers) + residual`` telescopes back to the input.
    """
    if depth < 2:
        raise ValueError(f"stack depth must be >= 2, got {depth}")
    img = np.asarray(plane, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 1:
            raise ValueError("build_stack takes a single plane; split channels first")
        img = img[:, :, 0]
    sigmas = stack_sigmas(depth, base_sigma)
    blurred = [img] + [gaussian_blur(img, s) for s in sigmas]
    layers = [blurred[l] - blurred[l + 1] for l in range(depth - 1)]
    return LaplacianStack(layers, blurred[-1], sigmas)


def energy_map(layer: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-weighted local mean of the squared layer."""
    return np.maximum(gaussian_blur(np.square(layer), sigma), 0.0)


def energy_stack(stack: LaplacianStack) -> list[np.ndarray]:
    """One energy map per band layer, averaged at that band's own scale."""
    return [energy_map(layer, stack.energy_sigma(l)) for l, layer in enumerate(stack.layers)]


def reconstruct(stack: LaplacianStack) -> np.ndarray:
    shape = stack.residual.shape
    out = stack.residual.copy()
    for l, layer in enumerate(stack.layers):
        if layer.shape != shape:
            raise ValueError(f"layer {l} has shape {layer.shape}, residual has {shape}")
        out += layer
    return out
