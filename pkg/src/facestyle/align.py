"""Exemplar-to-input alignment: landmark triangulation, piecewise-affine
correspondence fields, bilinear pull warping and an optional block-matching
refinement stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .imagecore import LandmarkSet, box_mean, gaussian_blur, resize, to_luma

DEGENERATE_AREA = 1e-6
_BARY_TOL = 1e-9


@dataclass(frozen=True)
class CorrespondenceField:
    """Per-pixel displacement: input pixel ``(x, y)`` samples the exemplar at
    ``(x + dx, y + dy)``."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        if self.dx.shape != self.dy.shape or self.dx.ndim != 2:
            raise ValueError("dx and dy must be 2-D arrays of equal shape")

    @classmethod
    def zeros(cls, height: int, width: int) -> "CorrespondenceField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, height: int, width: int, dx: float, dy: float) -> "CorrespondenceField":
        return cls(np.full((height, width), float(dx)), np.full((height, width), float(dy)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    def as_array(self) -> np.ndarray:
        return np.stack([self.dx, self.dy], axis=-1)


@dataclass(frozen=True)
class TriangleMesh:
    points: np.ndarray      # (n, 2) input-space vertex positions
    triangles: np.ndarray   # (m, 3) vertex indices, counter-clockwise

    def __len__(self) -> int:
        return len(self.triangles)


def _signed_area(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


def triangulate(points) -> TriangleMesh:
    """Delaunay triangulation with a canonical triangle order.

    Every triangle is oriented counter-clockwise (in x-right/y-down pixel
    space this is ``signed_area > 0``), rotated so its smallest vertex index
    comes first, and the list is sorted lexicographically. Triangles with
    area below ``DEGENERATE_AREA`` are dropped.
    """
    if isinstance(points, LandmarkSet):
        points = points.points
    p = np.asarray(points, dtype=np.float64)
    if len(p) < 3:
        raise ValueError("triangulation needs at least 3 points")
    centred = p - p.mean(axis=0)
    if np.linalg.matrix_rank(centred, tol=1e-9 * max(1.0, np.abs(centred).max())) < 2:
        raise ValueError("cannot triangulate: all points are collinear")

    tri = np.array(Delaunay(p).simplices, dtype=np.int64)
    area = _signed_area(p, tri)
    tri = tri[np.abs(area) >= DEGENERATE_AREA]
    area = area[np.abs(area) >= DEGENERATE_AREA]
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    shift = np.argmin(tri, axis=1)
    rows = np.arange(len(tri))[:, None]
    tri = tri[rows, (shift[:, None] + np.arange(3)) % 3]
    tri = tri[np.lexsort(tri.T[::-1])]
    return TriangleMesh(p, tri)


def locate_pixels(mesh: TriangleMesh, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Assign each integer pixel to one triangle.

    Returns ``(index, bary)`` where ``index`` is ``(H, W)`` with -1 for
    uncovered pixels and ``bary`` holds ``(H, W, 3)`` barycentric weights.
    A pixel on a shared edge or vertex belongs to the lowest-numbered
    triangle containing it.
    """
    index = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    p = mesh.points
    for t, (i, j, k) in enumerate(mesh.triangles):
        a, b, c = p[i], p[j], p[k]
        x0 = max(int(np.floor(min(a[0], b[0], c[0]))), 0)
        x1 = min(int(np.ceil(max(a[0], b[0], c[0]))), width - 1)
        y0 = max(int(np.floor(min(a[1], b[1], c[1]))), 0)
        y1 = min(int(np.ceil(max(a[1], b[1], c[1]))), height - 1)
        if x1 < x0 or y1 < y0:
            continue
        ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        l1 = ((xs - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (ys - a[1])) / det
        l2 = ((b[0] - a[0]) * (ys - a[1]) - (xs - a[0]) * (b[1] - a[1])) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -_BARY_TOL) & (l1 >= -_BARY_TOL) & (l2 >= -_BARY_TOL)
        free = index[y0:y1 + 1, x0:x1 + 1] < 0
        take = inside & free
        index[y0:y1 + 1, x0:x1 + 1][take] = t
        bary[y0:y1 + 1, x0:x1 + 1][take] = np.stack([l0, l1, l2], axis=-1)[take]
    return index, bary


def local_affine_field(input_lm: LandmarkSet, exemplar_lm: LandmarkSet,
                       mesh: TriangleMesh | None = None) -> CorrespondenceField:
    """Dense correspondence from per-triangle affine maps of the landmark mesh.

    Each triangle of the input-space mesh is mapped affinely onto the
    triangle formed by the same landmark indices in the exemplar. Pixels not
    covered by any triangle take the displacement of their nearest landmark.
    """
    if len(input_lm) != len(exemplar_lm):
        raise ValueError(
            f"landmark count mismatch: input {len(input_lm)}, exemplar {len(exemplar_lm)}"
        )
    if mesh is None:
        mesh = triangulate(input_lm)
    h, w = input_lm.height, input_lm.width
    src = input_lm.points
    dst = exemplar_lm.points
    disp = dst - src

    index, bary = locate_pixels(mesh, h, w)
    dx = np.zeros((h, w))
    dy = np.zeros((h, w))
    covered = index >= 0
    verts = mesh.triangles[index[covered]]
    b = bary[covered]
    dx[covered] = np.einsum("nk,nk->n", b, disp[verts, 0])
    dy[covered] = np.einsum("nk,nk->n", b, disp[verts, 1])

    if not covered.all():
        ys, xs = np.nonzero(~covered)
        d2 = (xs[:, None] - src[None, :, 0]) ** 2 + (ys[:, None] - src[None, :, 1]) ** 2
        nearest = np.argmin(d2, axis=1)
        dx[ys, xs] = disp[nearest, 0]
        dy[ys, xs] = disp[nearest, 1]
    return CorrespondenceField(dx, dy)


def sample_bilinear(plane: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear lookup of ``plane`` (``(H, W)`` or ``(H, W, C)``) at float
    coordinates, clamped to the plane's bounds."""
    h, w = plane.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros(x.shape, np.int64)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros(y.shape, np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if plane.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = plane[y0, x0] * (1.0 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1.0 - fx) + plane[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _grid(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.indices(shape, dtype=np.float64)
    return xs, ys


def warp(exemplar: np.ndarray, field: CorrespondenceField) -> np.ndarray:
    """Pull-warp an image or plane into the field's frame."""
    xs, ys = _grid(field.shape)
    return sample_bilinear(np.asarray(exemplar, dtype=np.float64), xs + field.dx, ys + field.dy)


def compose(a: CorrespondenceField, b: CorrespondenceField) -> CorrespondenceField:
    """Field for "apply ``b`` first, then ``a``": ``a(x + b(x)) + b(x)``."""
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    xs, ys = _grid(a.shape)
    sx, sy = xs + b.dx, ys + b.dy
    both = sample_bilinear(a.as_array(), sx, sy)
    return CorrespondenceField(both[..., 0] + b.dx, both[..., 1] + b.dy)


# --------------------------------------------------------------------------
# dense refinement
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RefineParams:
    """Coarse-to-fine block matcher settings. ``enabled=False`` yields a zero field."""

    enabled: bool = False
    levels: int = 3
    search: int = 4
    block: int = 8
    smooth_sigma: float = 2.0


def _gradient_magnitude(plane: np.ndarray) -> np.ndarray:
    gy, gx = np.gradient(plane)
    return np.hypot(gx, gy)


def _shift_candidates(search: int) -> list[tuple[int, int]]:
    # nearest-first so that exact cost ties resolve to the smallest motion
    cands = [(dx, dy) for dy in range(-search, search + 1) for dx in range(-search, search + 1)]
    return sorted(cands, key=lambda d: (d[0] ** 2 + d[1] ** 2, d[1], d[0]))


def _match_level(tgt: np.ndarray, src: np.ndarray, fdx: np.ndarray, fdy: np.ndarray,
                 params: RefineParams) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = _grid(tgt.shape)
    d_tgt = _gradient_magnitude(tgt)
    d_src = _gradient_magnitude(src)
    r = max(params.block // 2, 1)
    best = np.full(tgt.shape, np.inf)
    best_dx = np.zeros(tgt.shape)
    best_dy = np.zeros(tgt.shape)
    for sx, sy in _shift_candidates(params.search):
        moved = sample_bilinear(d_src, xs + fdx + sx, ys + fdy + sy)
        cost = box_mean((moved - d_tgt) ** 2, r)
        better = cost < best
        best[better] = cost[better]
        best_dx[better] = sx
        best_dy[better] = sy
    return fdx + best_dx, fdy + best_dy


def refine_dense(warped: np.ndarray, target: np.ndarray,
                 params: RefineParams = RefineParams()) -> CorrespondenceField:
    """Residual field ``f`` with ``target(x) ~ warped(x + f(x))``.

    Block matching on gradient-magnitude descriptors over an image pyramid,
    searching ``+-params.search`` px per level around the upsampled coarser
    estimate; the final field is Gaussian-smoothed.
    """
    a = to_luma(warped)[:, :, 0]
    b = to_luma(target)[:, :, 0]
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    h, w = a.shape
    if not params.enabled:
        return CorrespondenceField.zeros(h, w)

    pyr = [(a, b)]
    for _ in range(params.levels - 1):
        pa, pb = pyr[-1]
        if min(pa.shape) < 2 * params.block:
            break
        nh, nw = (pa.shape[0] + 1) // 2, (pa.shape[1] + 1) // 2
        pyr.append((resize(gaussian_blur(pa, 1.0), nw, nh),
                    resize(gaussian_blur(pb, 1.0), nw, nh)))

    fdx = np.zeros(pyr[-1][0].shape)
    fdy = np.zeros(pyr[-1][0].shape)
    for level in range(len(pyr) - 1, -1, -1):
        src, tgt = pyr[level]
        if fdx.shape != tgt.shape:
            sy = tgt.shape[0] / fdx.shape[0]
            sx = tgt.shape[1] / fdx.shape[1]
            fdx = resize(fdx, tgt.shape[1], tgt.shape[0]) * sx
            fdy = resize(fdy, tgt.shape[1], tgt.shape[0]) * sy
        fdx, fdy = _match_level(tgt, src, fdx, fdy, params)

    if params.smooth_sigma > 0:
        fdx = gaussian_blur(fdx, params.smooth_sigma)
        fdy = gaussian_blur(fdy, params.smooth_sigma)
    return CorrespondenceField(fdx, fdy)
