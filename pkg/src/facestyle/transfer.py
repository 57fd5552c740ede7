"""Local energy transfer between Laplacian stacks.

Each band layer of the input is rescaled pixel-wise so its local energy
matches a blend of the selected exemplars' (aligned) energy; the residual
is taken from the selected exemplars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import CorrespondenceField, warp
from .imagecore import as_image, to_luma
from .mrf import LabelField, PatchGrid
from .stack import LaplacianStack, build_stack, energy_stack, reconstruct


# --------------------------------------------------------------------------
# per-pixel label weights
# --------------------------------------------------------------------------


def _hat_basis(length: int, centers: np.ndarray) -> np.ndarray:
    """``(length, n)`` piecewise-linear interpolation weights over node centres.

    Pixels beyond the first/last centre take that centre's weight; every row
    sums to 1 and has at most two nonzero entries.
    """
    n = len(centers)
    basis = np.zeros((length, n))
    if n == 1:
        basis[:, 0] = 1.0
        return basis
    c = centers.astype(np.float64)
    x = np.clip(np.arange(length, dtype=np.float64), c[0], c[-1])
    i = np.clip(np.searchsorted(c, x, side="right") - 1, 0, n - 2)
    t = (x - c[i]) / (c[i + 1] - c[i])
    rows = np.arange(length)
    basis[rows, i] = 1.0 - t
    basis[rows, i + 1] += t
    return basis


def pixel_weights(labels: LabelField, grid: PatchGrid, k: int) -> np.ndarray:
    """Per-pixel exemplar weights ``(H, W, K)``.

    Node label vectors (one-hot, or belief rows in mmse mode) are spread with
    separable tent windows peaking at each patch centre and vanishing at the
    neighbouring centres, then renormalised per pixel.
    """
    node_w = labels.weights(k).reshape(grid.ny, grid.nx, k)
    ay = _hat_basis(grid.height, grid.y_centers)
    ax = _hat_basis(grid.width, grid.x_centers)
    rows = (ay @ node_w.reshape(grid.ny, -1)).reshape(grid.height, grid.nx, k)
    w = np.einsum("xj,yjk->yxk", ax, rows)
    total = w.sum(axis=2, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("some pixels are not covered by any weighted patch")
    return w / total


def _blend(planes, weights: np.ndarray) -> np.ndarray:
    planes = [np.asarray(p, dtype=np.float64) for p in planes]
    if len(planes) != weights.shape[2]:
        raise ValueError(f"{len(planes)} planes for {weights.shape[2]} weights")
    for p in planes:
        if p.shape != weights.shape[:2]:
            raise ValueError(f"plane shape {p.shape} does not match weights {weights.shape[:2]}")
    out = np.zeros(weights.shape[:2])
    for k, p in enumerate(planes):
        out += weights[:, :, k] * p
    return out


def blend_energy(energies, weights: np.ndarray) -> np.ndarray:
    """Weighted per-pixel combination of aligned exemplar energy maps."""
    return np.maximum(_blend(energies, weights), 0.0)


def blend_residual(residuals, weights: np.ndarray) -> np.ndarray:
    """Weighted per-pixel combination of aligned exemplar residual planes."""
    return _blend(residuals, weights)


def remap_gain(s_t: np.ndarray, s_e: np.ndarray, eps: float = 1e-4,
               gain_max: float = 10.0) -> np.ndarray:
    ratio = np.asarray(s_e, dtype=np.float64) / (np.asarray(s_t, dtype=np.float64) + eps)
    return np.sqrt(np.clip(ratio, 0.0, gain_max * gain_max))


def remap_layer(l_t, s_t, s_e, eps: float = 1e-4, gain_max: float = 10.0) -> np.ndarray:
    """Scale a band layer by ``sqrt(S_E / (S_T + eps))``, gain clamped to ``gain_max``."""
    return np.asarray(l_t, dtype=np.float64) * remap_gain(s_t, s_e, eps, gain_max)


# --------------------------------------------------------------------------
# exemplar styles and the full transfer
# --------------------------------------------------------------------------


@dataclass
class ExemplarStyle:
    """Per-channel energy maps and residual of one exemplar, in the input frame."""

    energies: list[list[np.ndarray]]   # [channel][layer]
    residuals: list[np.ndarray]        # [channel]

    @property
    def channels(self) -> int:
        return len(self.residuals)


def _match_channels(img: np.ndarray, channels: int) -> np.ndarray:
    img = as_image(img)
    if img.shape[2] == channels:
        return img
    if channels == 1:
        return to_luma(img)
    return np.repeat(img, channels, axis=2)


def exemplar_style(exemplar, field: CorrespondenceField | None = None, *, depth: int = 5,
                   base_sigma: float = 2.0, channels: int | None = None) -> ExemplarStyle:
    """Stacks and energy maps computed in the exemplar's own frame, then
    warped into the input frame by ``field`` (``None`` = already aligned)."""
    img = as_image(exemplar)
    if channels is not None:
        img = _match_channels(img, channels)
    energies, residuals = [], []
    for c in range(img.shape[2]):
        st = build_stack(img[:, :, c], depth, base_sigma)
        en = energy_stack(st)
        res = st.residual
        if field is not None:
            en = [np.maximum(warp(e, field), 0.0) for e in en]
            res = warp(res, field)
        energies.append(en)
        residuals.append(res)
    return ExemplarStyle(energies, residuals)


@dataclass
class TransferResult:
    image: np.ndarray                  # remapped image R, unclamped
    gains: list[list[np.ndarray]]      # [channel][layer]


def transfer(target, styles: list[ExemplarStyle], weights: np.ndarray, *, depth: int = 5,
             base_sigma: float = 2.0, eps: float = 1e-4,
             gain_max: float = 10.0) -> TransferResult:
    """Remap every band of every channel of ``target`` and swap in blended
    exemplar residuals."""
    t = as_image(target)
    n_ch = t.shape[2]
    for s in styles:
        if s.channels != n_ch:
            raise ValueError(f"style has {s.channels} channels, target has {n_ch}")
    out = np.empty_like(t)
    gains = []
    for c in range(n_ch):
        st = build_stack(t[:, :, c], depth, base_sigma)
        s_t = energy_stack(st)
        layers, ch_gains = [], []
        for l, layer in enumerate(st.layers):
            s_e = blend_energy([s.energies[c][l] for s in styles], weights)
            g = remap_gain(s_t[l], s_e, eps, gain_max)
            layers.append(layer * g)
            ch_gains.append(g)
        residual = blend_residual([s.residuals[c] for s in styles], weights)
        out[:, :, c] = reconstruct(LaplacianStack(layers, residual, st.sigmas))
        gains.append(ch_gains)
    return TransferResult(out, gains)
