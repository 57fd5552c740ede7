"""Image containers, colour conversion, landmark and manifest I/O, and the
filtering primitives shared by every other stage.

Images are numpy arrays of shape ``(H, W, C)`` with ``C`` in ``{1, 3}`` and
float64 samples in ``[0, 1]``. Single planes (Laplacian layers, energy maps,
fields) are ``(H, W)`` arrays with no range restriction.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

N_FACE_POINTS = 68
N_BORDER_POINTS = 8

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])


class ImageError(ValueError):
    """Raised for unreadable, malformed or inconsistent image-side inputs."""


# --------------------------------------------------------------------------
# images
# --------------------------------------------------------------------------


def as_image(arr) -> np.ndarray:
    """Coerce a plane or image array to ``(H, W, C)`` float64."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise ImageError(f"expected (H, W) or (H, W, 1|3) array, got shape {a.shape}")
    return a


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG/JPEG into a float image in ``[0, 1]``.

    Colour sources come back with 3 channels in RGB order, grayscale sources
    with 1 channel.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageError(f"{path}: file not found")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageError(f"{path}: unsupported or unreadable image")
    if raw.size == 0 or raw.shape[0] == 0 or raw.shape[1] == 0:
        raise ImageError(f"{path}: zero-dimension image")
    if raw.dtype == np.uint8:
        peak = 255.0
    elif raw.dtype == np.uint16:
        peak = 65535.0
    else:
        raise ImageError(f"{path}: unsupported sample type {raw.dtype}")

    if raw.ndim == 2:
        img = raw[:, :, None]
    elif raw.shape[2] == 3:
        img = raw[:, :, ::-1]
    elif raw.shape[2] == 4:
        img = raw[:, :, 2::-1]
    elif raw.shape[2] == 1:
        img = raw
    else:
        raise ImageError(f"{path}: unsupported channel count {raw.shape[2]}")
    return np.ascontiguousarray(img, dtype=np.float64) / peak


def save_image(path, img, bit_depth: int = 8) -> None:
    """Write ``img`` as PNG (or any cv2-supported extension), clamping to [0, 1]."""
    if bit_depth not in (8, 16):
        raise ImageError(f"bit depth must be 8 or 16, got {bit_depth}")
    img = as_image(img)
    peak = 255 if bit_depth == 8 else 65535
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    q = np.rint(np.clip(img, 0.0, 1.0) * peak).astype(dtype)
    if q.shape[2] == 3:
        q = q[:, :, ::-1]
    else:
        q = q[:, :, 0]
    path = os.fspath(path)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(path, np.ascontiguousarray(q)):
        raise ImageError(f"{path}: could not write image")


def to_luma(img) -> np.ndarray:
    """Rec. 709 luma. Single-channel input is returned unchanged."""
    img = as_image(img)
    if img.shape[2] == 1:
        return img
    return (img @ LUMA_WEIGHTS)[:, :, None]


def resize(img, width: int, height: int) -> np.ndarray:
    """Area-averaging resize of an image or plane."""
    a = np.asarray(img, dtype=np.float64)
    if a.shape[1] == width and a.shape[0] == height:
        return a.copy()
    interp = cv2.INTER_AREA if width < a.shape[1] else cv2.INTER_LINEAR
    out = cv2.resize(a, (width, height), interpolation=interp)
    if a.ndim == 3 and out.ndim == 2:
        out = out[:, :, None]
    return out


# --------------------------------------------------------------------------
# filtering primitives
# --------------------------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalised 1-D Gaussian taps truncated at ``ceil(3 sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the two leading (spatial) axes.

    Borders replicate the edge sample. ``sigma == 0`` returns a copy of the
    input.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return a.copy()
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(a, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _box_sum_axis(a: np.ndarray, radius: int, axis: int) -> np.ndarray:
    n = a.shape[axis]
    c = np.cumsum(a, axis=axis)
    pad_shape = list(a.shape)
    pad_shape[axis] = 1
    c = np.concatenate([np.zeros(pad_shape), c], axis=axis)
    idx = np.arange(n)
    hi = np.minimum(idx + radius + 1, n)
    lo = np.maximum(idx - radius, 0)
    return np.take(c, hi, axis=axis) - np.take(c, lo, axis=axis)


def box_mean(img, radius: int) -> np.ndarray:
    """Mean over the ``(2r+1)^2`` window clipped to the image, via running sums.

    Each output divides by the number of in-bounds samples in its window.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    a = np.asarray(img, dtype=np.float64)
    if radius == 0:
        return a.copy()
    h, w = a.shape[:2]
    s = _box_sum_axis(_box_sum_axis(a, radius, 0), radius, 1)
    ny = _box_sum_axis(np.ones(h), radius, 0)
    nx = _box_sum_axis(np.ones(w), radius, 0)
    count = np.outer(ny, nx)
    if a.ndim == 3:
        count = count[:, :, None]
    return s / count


# --------------------------------------------------------------------------
# landmarks
# --------------------------------------------------------------------------


def border_points(width: int, height: int) -> np.ndarray:
    """4 corners then 4 edge midpoints of the pixel-centre rectangle."""
    x1, y1 = width - 1.0, height - 1.0
    xm, ym = x1 / 2.0, y1 / 2.0
    return np.array(
        [
            [0.0, 0.0], [x1, 0.0], [x1, y1], [0.0, y1],
            [xm, 0.0], [x1, ym], [xm, y1], [0.0, ym],
        ]
    )


@dataclass(frozen=True)
class LandmarkSet:
    """Facial landmarks plus synthesised border points, in pixel coordinates.

    ``points`` has shape ``(n_face + 8, 2)`` with ``(x, y)`` rows; the last
    eight rows are the image-rectangle border points.
    """

    points: np.ndarray
    width: int
    height: int

    @classmethod
    def from_face_points(cls, face: np.ndarray, width: int, height: int) -> "LandmarkSet":
        face = np.asarray(face, dtype=np.float64).reshape(-1, 2)
        _check_points(face, width, height)
        pts = np.vstack([face, border_points(width, height)])
        pts.setflags(write=False)
        return cls(pts, int(width), int(height))

    @property
    def face(self) -> np.ndarray:
        return self.points[:-N_BORDER_POINTS]

    def __len__(self) -> int:
        return len(self.points)

    def rescale(self, scale: float, width: int, height: int) -> "LandmarkSet":
        """Map face points onto an image resized by ``scale`` (pixel-centre convention)."""
        face = (self.face + 0.5) * scale - 0.5
        face = np.clip(face, 0.0, [width - 1.0, height - 1.0])
        return LandmarkSet.from_face_points(face, width, height)


def _check_points(face: np.ndarray, width: int, height: int, source: str = "") -> None:
    where = f"{source}: " if source else ""
    for i, (x, y) in enumerate(face):
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ImageError(f"{where}landmark {i} is not finite: ({x}, {y})")
        if x < 0 or y < 0 or x > width - 1 or y > height - 1:
            raise ImageError(
                f"{where}landmark {i} at ({x}, {y}) lies outside the "
                f"{width}x{height} image"
            )


def read_points(path) -> np.ndarray:
    """Parse a text file of ``x y`` (or ``x,y``) pairs, one per line."""
    path = os.fspath(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ImageError(f"{path}: cannot read landmarks ({exc})") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in re.split(r"[,\s]+", line) if p]
        if len(parts) != 2:
            raise ImageError(f"{path}:{lineno}: expected 'x y', got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ImageError(f"{path}:{lineno}: {exc}") from exc
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def load_landmarks(path, width: int, height: int) -> LandmarkSet:
    """Load 68 facial landmarks for a ``width x height`` image and add the
    8 border points."""
    pts = read_points(path)
    if len(pts) != N_FACE_POINTS:
        raise ImageError(
            f"{os.fspath(path)}: expected {N_FACE_POINTS} landmarks, found {len(pts)}"
        )
    _check_points(pts, width, height, os.fspath(path))
    return LandmarkSet.from_face_points(pts, width, height)


def save_landmarks(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    Path(path).write_text("".join(f"{x:.6f} {y:.6f}\n" for x, y in pts))


# --------------------------------------------------------------------------
# collection manifest
# --------------------------------------------------------------------------


@dataclass
class CollectionManifest:
    style_name: str
    exemplars: list[tuple[Path, Path]] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.exemplars)


def load_manifest(path) -> CollectionManifest:
    """Parse a collection manifest.

    Format::

        style_name = platon
        image=ex1.png;landmarks=ex1.txt
        image=ex2.png;landmarks=ex2.txt

    Relative paths resolve against the manifest's directory. Only the syntax
    is checked here; files are validated when loaded.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ImageError(f"{path}: cannot read manifest ({exc})") from exc
    base = path.parent
    style = path.stem
    exemplars = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ";" in line or line.startswith("image"):
            entry = {}
            for part in line.split(";"):
                if "=" not in part:
                    raise ImageError(f"{path}:{lineno}: malformed entry {part!r}")
                k, v = part.split("=", 1)
                entry[k.strip()] = v.strip()
            if set(entry) != {"image", "landmarks"}:
                raise ImageError(
                    f"{path}:{lineno}: entry needs exactly image= and landmarks= fields"
                )
            exemplars.append((base / entry["image"], base / entry["landmarks"]))
            continue
        if "=" not in line:
            raise ImageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k == "style_name":
            style = v
        else:
            raise ImageError(f"{path}:{lineno}: unknown key {k!r}")
    return CollectionManifest(style, exemplars)


def write_manifest(path, style_name: str, entries) -> None:
    """Write a manifest; ``entries`` is an iterable of (image, landmarks) paths."""
    lines = [f"style_name = {style_name}"]
    lines += [f"image={img};landmarks={lm}" for img, lm in entries]
    Path(path).write_text("\n".join(lines) + "\n")
