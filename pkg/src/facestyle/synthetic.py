"""Procedural face-like portraits with 68-point landmarks, for tests and demos.

Landmarks follow the usual 68-point layout: jaw 0-16, brows 17-26, nose
bridge 27-30, nostrils 31-35, eyes 36-47, outer lips 48-59, inner lips 60-67.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .imagecore import gaussian_blur, save_image, save_landmarks, write_manifest


@dataclass(frozen=True)
class FaceParams:
    cx: float = 0.5          # face centre, fraction of width
    cy: float = 0.52         # fraction of height
    rx: float = 0.30         # face half-width, fraction of width
    ry: float = 0.30         # face half-height, fraction of height
    eye_sep: float = 0.42    # eye spacing, fraction of face width
    eye_y: float = -0.18     # eye height relative to centre, fraction of face height
    mouth_y: float = 0.45
    mouth_w: float = 0.38
    skin: tuple = (0.78, 0.62, 0.52)
    hair: tuple = (0.20, 0.14, 0.10)
    background: tuple = (0.55, 0.60, 0.68)
    texture: float = 0.04


def _ellipse_pts(cx, cy, rx, ry, t0, t1, n):
    t = np.linspace(t0, t1, n)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def face_landmarks(width: int, height: int, p: FaceParams = FaceParams()) -> np.ndarray:
    cx, cy = p.cx * width, p.cy * height
    rx, ry = p.rx * width, p.ry * height
    pts = []
    # jaw: lower half of the face ellipse, left ear to right ear
    pts.append(_ellipse_pts(cx, cy, rx, ry, np.pi * 0.98, np.pi * 0.02, 17))
    ex = p.eye_sep * rx
    ey = cy + p.eye_y * ry
    # brows
    for side in (-1, 1):
        bx = cx + side * ex
        xs = bx + np.linspace(-0.22, 0.22, 5) * rx
        ys = ey - 0.20 * ry - 0.05 * ry * np.cos(np.linspace(-1.2, 1.2, 5))
        pts.append(np.stack([xs, ys], axis=1))
    # nose bridge and nostrils
    pts.append(np.stack([np.full(4, cx), np.linspace(ey, cy + 0.20 * ry, 4)], axis=1))
    pts.append(np.stack([cx + np.linspace(-0.14, 0.14, 5) * rx,
                         cy + 0.25 * ry + 0.03 * ry * np.cos(np.linspace(-1.3, 1.3, 5))], axis=1))
    # eyes: six points each, clockwise from outer corner
    for side in (-1, 1):
        bx = cx + side * ex
        w, h = 0.14 * rx, 0.055 * ry
        ang = np.array([np.pi, 1.25 * np.pi, 1.75 * np.pi, 0.0, 0.25 * np.pi, 0.75 * np.pi])
        pts.append(np.stack([bx + w * np.cos(ang), ey + h * np.sin(ang)], axis=1))
    # mouth
    my = cy + p.mouth_y * ry
    mw = p.mouth_w * rx
    outer = np.linspace(np.pi, -np.pi, 12, endpoint=False)
    pts.append(np.stack([cx + mw * np.cos(outer), my + 0.09 * ry * np.sin(-outer)], axis=1))
    inner = np.linspace(np.pi, -np.pi, 8, endpoint=False)
    pts.append(np.stack([cx + 0.7 * mw * np.cos(inner), my + 0.03 * ry * np.sin(-inner)], axis=1))
    lm = np.vstack(pts)
    assert lm.shape == (68, 2)
    return np.clip(lm, 0.0, [width - 1.0, height - 1.0])


def render_portrait(width: int, height: int, p: FaceParams = FaceParams(),
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Render an RGB portrait and return ``(image, landmarks(68, 2))``."""
    rng = np.random.default_rng(seed)
    lm = face_landmarks(width, height, p)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.empty((height, width, 3))
    grad = 0.85 + 0.3 * (ys / height)
    for c in range(3):
        img[:, :, c] = p.background[c] * grad

    def paint(mask: np.ndarray, colour, soften: float):
        m = gaussian_blur(mask.astype(np.float64), soften)[:, :, None]
        img[:] = img * (1 - m) + np.asarray(colour)[None, None, :] * m

    cx, cy = p.cx * width, p.cy * height
    rx, ry = p.rx * width, p.ry * height
    scale = max(width, height) / 400.0
    hair = ((xs - cx) / (1.12 * rx)) ** 2 + ((ys - (cy - 0.15 * ry)) / (1.15 * ry)) ** 2 < 1
    paint(hair, p.hair, 2 * scale)
    face = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 < 1
    paint(face, p.skin, 1.5 * scale)
    # soft shading across the face
    shade = 1.0 - 0.12 * np.clip(((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2, 0, 1)
    img *= np.where(face[:, :, None], shade[:, :, None], 1.0)

    def poly_mask(points):
        m = np.zeros((height, width), np.uint8)
        cv2.fillPoly(m, [np.round(points).astype(np.int32)], 1)
        return m.astype(bool)

    dark = tuple(0.45 * np.asarray(p.hair) + 0.1)
    paint(poly_mask(np.vstack([lm[17:22], lm[17:22][::-1] + [0, 0.03 * ry]])), dark, 0.8 * scale)
    paint(poly_mask(np.vstack([lm[22:27], lm[22:27][::-1] + [0, 0.03 * ry]])), dark, 0.8 * scale)
    for eye in (lm[36:42], lm[42:48]):
        paint(poly_mask(eye), (0.93, 0.92, 0.90), 0.6 * scale)
        c = eye.mean(axis=0)
        iris = (xs - c[0]) ** 2 + (ys - c[1]) ** 2 < (0.045 * ry) ** 2
        paint(iris, (0.25, 0.18, 0.12), 0.5 * scale)
    paint(poly_mask(lm[31:36].tolist() + [lm[30]]), tuple(0.8 * np.asarray(p.skin)), 1.2 * scale)
    paint(poly_mask(lm[48:60]), (0.62, 0.30, 0.30), 0.8 * scale)
    paint(poly_mask(lm[60:68]), (0.35, 0.12, 0.12), 0.6 * scale)

    noise = gaussian_blur(rng.standard_normal((height, width)), 1.0 * scale)
    noise /= noise.std() + 1e-12
    img += p.texture * noise[:, :, None]
    return np.clip(img, 0.0, 1.0), lm


def stylise(img: np.ndarray, contrast: float = 1.6, tone: tuple = (1.0, 1.0, 1.0),
            sigma: float = 4.0) -> np.ndarray:
    """A crude "house style": boost local contrast around a blurred base and tint."""
    base = gaussian_blur(img, sigma)
    out = base + contrast * (img - base)
    return np.clip(out * np.asarray(tone)[None, None, :], 0.0, 1.0)


def variant(i: int) -> FaceParams:
    """Deterministic family of distinct face geometries and colourings."""
    rng = np.random.default_rng(1000 + i)
    base = FaceParams()
    return replace(
        base,
        cx=base.cx + rng.uniform(-0.04, 0.04),
        cy=base.cy + rng.uniform(-0.03, 0.03),
        rx=base.rx * rng.uniform(0.9, 1.1),
        ry=base.ry * rng.uniform(0.9, 1.1),
        eye_sep=base.eye_sep * rng.uniform(0.9, 1.1),
        mouth_w=base.mouth_w * rng.uniform(0.85, 1.15),
        skin=tuple(np.clip(np.asarray(base.skin) * rng.uniform(0.85, 1.1, 3), 0, 1)),
        hair=tuple(np.clip(np.asarray(base.hair) * rng.uniform(0.6, 1.6, 3), 0, 1)),
        texture=base.texture * rng.uniform(0.7, 1.3),
    )


def write_fixture(directory, width: int = 1000, height: int = 1320, n_exemplars: int = 3,
                  include_input: bool = False, seed: int = 0) -> dict[str, Path]:
    """Write an input portrait plus a styled exemplar collection to ``directory``.

    Returns the paths of ``input``, ``landmarks`` and ``manifest``. With
    ``include_input`` the collection consists solely of the input itself.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    img, lm = render_portrait(width, height, FaceParams(), seed=seed)
    save_image(d / "input.png", img)
    save_landmarks(d / "input.txt", lm)
    entries = []
    if include_input:
        entries.append(("input.png", "input.txt"))
    else:
        for k in range(n_exemplars):
            ex, ex_lm = render_portrait(width, height, variant(k), seed=seed + 1 + k)
            ex = stylise(ex, contrast=1.4 + 0.3 * k, tone=(1.0, 0.97, 0.94))
            save_image(d / f"exemplar_{k}.png", ex)
            save_landmarks(d / f"exemplar_{k}.txt", ex_lm)
            entries.append((f"exemplar_{k}.png", f"exemplar_{k}.txt"))
    write_manifest(d / "collection.txt", "synthetic", entries)
    return {"input": d / "input.png", "landmarks": d / "input.txt",
            "manifest": d / "collection.txt"}
