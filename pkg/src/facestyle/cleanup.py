"""Seam-artifact removal with a guided filter, plus optional background
substitution from a precomputed matte."""

from __future__ import annotations

import numpy as np

from .imagecore import as_image, box_mean, to_luma

_FLAT = 1e-12


def guided_filter(src, guide, radius: int, eps: float) -> np.ndarray:
    """Guided filter of every channel of ``src`` with a single-plane guide.

    Windows are ``(2r+1)^2`` boxes clipped at the borders. Where the guide is
    flat and ``eps`` is zero the local slope is taken as 0.
    """
    if radius < 1:
        raise ValueError(f"guided filter radius must be >= 1, got {radius}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    p = as_image(src)
    g = as_image(guide)
    if g.shape[2] != 1:
        raise ValueError("guide must be single-channel")
    if g.shape[:2] != p.shape[:2]:
        raise ValueError(f"src {p.shape[:2]} and guide {g.shape[:2]} differ in size")
    i = g[:, :, 0]

    mean_i = box_mean(i, radius)
    var_i = np.maximum(box_mean(i * i, radius) - mean_i * mean_i, 0.0)
    denom = var_i + eps
    flat = denom < _FLAT
    safe = np.where(flat, 1.0, denom)

    out = np.empty_like(p)
    for c in range(p.shape[2]):
        pc = p[:, :, c]
        mean_p = box_mean(pc, radius)
        cov = box_mean(i * pc, radius) - mean_i * mean_p
        a = np.where(flat, 0.0, cov / safe)
        b = mean_p - a * mean_i
        out[:, :, c] = box_mean(a, radius) * i + box_mean(b, radius)
    return out


def remove_artifacts(remapped, target, radius: int = 60, eps: float = 0.02) -> np.ndarray:
    """Smooth ``remapped`` under the target's luma guidance and add back the
    detail the same filter strips from the target itself. Output is clamped
    to [0, 1]."""
    r = as_image(remapped)
    t = as_image(target)
    if r.shape != t.shape:
        raise ValueError(f"remapped {r.shape} and target {t.shape} differ")
    guide = to_luma(t)
    r_t = guided_filter(r, guide, radius, eps)
    t_t = guided_filter(t, guide, radius, eps)
    return np.clip(r_t + t - t_t, 0.0, 1.0)


def substitute_background(img, matte, background) -> np.ndarray:
    """``matte * img + (1 - matte) * background``."""
    img = as_image(img)
    m = as_image(matte)
    bg = as_image(background)
    if m.shape[2] != 1:
        m = to_luma(m)
    if m.shape[:2] != img.shape[:2] or bg.shape[:2] != img.shape[:2]:
        raise ValueError(
            f"image {img.shape[:2]}, matte {m.shape[:2]} and background "
            f"{bg.shape[:2]} must share dimensions"
        )
    if bg.shape[2] != img.shape[2]:
        bg = np.repeat(bg, img.shape[2], axis=2) if bg.shape[2] == 1 else to_luma(bg)
    if m.min() < 0 or m.max() > 1:
        raise ValueError("matte samples must lie in [0, 1]")
    return m * img + (1.0 - m) * bg
