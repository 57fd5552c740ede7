import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from facestyle.align import (
    CorrespondenceField,
    RefineParams,
    compose,
    local_affine_field,
    locate_pixels,
    refine_dense,
    sample_bilinear,
    triangulate,
    warp,
)
from facestyle.imagecore import LandmarkSet, gaussian_blur


def random_landmarks(rng, w, h, n=68):
    return LandmarkSet.from_face_points(rng.uniform([5, 5], [w - 6, h - 6], size=(n, 2)), w, h)


def contains(points, tri, x, y, tol=1e-9):
    a, b, c = points[tri]
    det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    l1 = ((x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y - a[1])) / det
    l2 = ((b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1])) / det
    return min(l1, l2, 1 - l1 - l2) >= -tol


# ---------------------------------------------------------------- triangulate


def test_rectangle_corners_give_two_triangles():
    mesh = triangulate(np.array([[0, 0], [9, 0], [9, 5], [0, 5]], float))
    assert len(mesh) == 2
    index, _ = locate_pixels(mesh, 6, 10)
    assert np.all(index >= 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**31 - 1))
def test_triangle_count_follows_euler(n, seed):
    pts = np.random.default_rng(seed).uniform(0, 100, size=(n, 2))
    h = len(ConvexHull(pts).vertices)
    assert len(triangulate(pts)) == 2 * n - 2 - h


def test_collinear_rejected():
    with pytest.raises(ValueError, match="collinear"):
        triangulate(np.array([[0, 0], [1, 1], [2, 2], [5, 5]], float))


def test_canonical_order_and_orientation(rng):
    lm = random_landmarks(rng, 80, 60, n=20)
    mesh = triangulate(lm)
    t = mesh.triangles
    assert np.all(t[:, 0] < t[:, 1]) and np.all(t[:, 0] < t[:, 2])
    assert [tuple(r) for r in t] == sorted(tuple(r) for r in t)
    p = mesh.points
    area = ((p[t[:, 1], 0] - p[t[:, 0], 0]) * (p[t[:, 2], 1] - p[t[:, 0], 1])
            - (p[t[:, 2], 0] - p[t[:, 0], 0]) * (p[t[:, 1], 1] - p[t[:, 0], 1]))
    assert np.all(area > 0)
    again = triangulate(lm)
    np.testing.assert_array_equal(again.triangles, t)


def test_every_pixel_in_exactly_one_triangle(rng):
    w, h = 48, 36
    lm = random_landmarks(rng, w, h, n=20)
    mesh = triangulate(lm)
    index, _ = locate_pixels(mesh, h, w)
    for y in range(h):
        for x in range(w):
            hits = [t for t, tri in enumerate(mesh.triangles) if contains(mesh.points, tri, x, y)]
            assert hits, (x, y)
            # boundary pixels go to the lowest-numbered containing triangle
            assert index[y, x] == hits[0]


# ---------------------------------------------------------------- affine field


def test_identical_landmarks_give_zero_field(rng):
    lm = random_landmarks(rng, 64, 48)
    f = local_affine_field(lm, lm)
    assert np.all(f.dx == 0) and np.all(f.dy == 0)


def test_global_translation(rng):
    w, h = 64, 48
    lm = random_landmarks(rng, w, h)
    shifted = LandmarkSet(lm.points + [5.0, 0.0], w, h)
    f = local_affine_field(lm, shifted)
    np.testing.assert_allclose(f.dx, 5.0, atol=1e-9)
    np.testing.assert_allclose(f.dy, 0.0, atol=1e-9)


def test_single_landmark_moved_is_piecewise_linear(rng):
    w, h = 80, 60
    face = rng.uniform([8, 8], [w - 9, h - 9], size=(68, 2))
    face[10] = (40.0, 30.0)
    lm = LandmarkSet.from_face_points(face, w, h)
    moved = lm.points.copy()
    moved[10] += (10.0, 0.0)
    ex = LandmarkSet(moved, w, h)
    mesh = triangulate(lm)
    f = local_affine_field(lm, ex, mesh)
    assert f.dx[30, 40] == pytest.approx(10.0)
    assert f.dy[30, 40] == pytest.approx(0.0, abs=1e-12)
    # landmarks not sharing a triangle with point 10 see no displacement
    touching = set(mesh.triangles[np.any(mesh.triangles == 10, axis=1)].ravel())
    for i in set(range(len(lm))) - touching:
        x, y = lm.points[i]
        if float(x).is_integer() and float(y).is_integer():
            assert f.dx[int(y), int(x)] == 0.0
    # oracle: solve each triangle's affine map explicitly
    index, _ = locate_pixels(mesh, h, w)
    for y, x in rng.integers([0, 0], [h, w], size=(200, 2)):
        tri = mesh.triangles[index[y, x]]
        src = np.c_[lm.points[tri], np.ones(3)]
        coef = np.linalg.solve(src, ex.points[tri])
        mapped = np.array([x, y, 1.0]) @ coef
        assert f.dx[y, x] == pytest.approx(mapped[0] - x, abs=1e-9)
        assert f.dy[y, x] == pytest.approx(mapped[1] - y, abs=1e-9)


def test_field_continuous_across_shared_edges(rng):
    w, h = 64, 48
    lm = random_landmarks(rng, w, h, n=30)
    ex = LandmarkSet(lm.points + rng.normal(0, 2, lm.points.shape), w, h)
    mesh = triangulate(lm)
    edge_owner = {}
    for t, tri in enumerate(mesh.triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edge_owner.setdefault(tuple(sorted((a, b))), []).append(t)

    def affine(t):
        tri = mesh.triangles[t]
        return np.linalg.solve(np.c_[lm.points[tri], np.ones(3)], ex.points[tri])

    shared = [(e, ts) for e, ts in edge_owner.items() if len(ts) == 2]
    assert shared
    for (a, b), (t1, t2) in shared:
        mid = np.r_[(lm.points[a] + lm.points[b]) / 2, 1.0]
        np.testing.assert_allclose(mid @ affine(t1), mid @ affine(t2), atol=1e-6)


def integer_landmarks(rng, w, h):
    cells = rng.choice((w - 10) * (h - 10), size=68, replace=False)
    face = np.c_[cells % (w - 10) + 5, cells // (w - 10) + 5].astype(float)
    return LandmarkSet.from_face_points(face, w, h)


def test_landmarks_map_to_exemplar_counterparts(rng):
    w, h = 64, 48
    lm = integer_landmarks(rng, w, h)
    ex = LandmarkSet.from_face_points(
        np.clip(lm.face + rng.normal(0, 1.5, lm.face.shape), 0, [w - 1, h - 1]), w, h)
    f = local_affine_field(lm, ex)
    for (x, y), (u, v) in zip(lm.points, ex.points):
        if not (x.is_integer() and y.is_integer()):
            continue  # edge midpoints of odd-sized frames sit between pixels
        xi, yi = int(x), int(y)
        assert abs(xi + f.dx[yi, xi] - u) < 0.5
        assert abs(yi + f.dy[yi, xi] - v) < 0.5


# ---------------------------------------------------------------- warp


def test_zero_field_warp_is_bit_identical(rng):
    img = rng.random((20, 30, 3))
    out = warp(img, CorrespondenceField.zeros(20, 30))
    np.testing.assert_array_equal(out, img)


def test_half_pixel_shift_on_ramp():
    img = np.tile(np.arange(10, dtype=float) * 0.1, (4, 1))
    out = warp(img, CorrespondenceField.constant(4, 10, 0.5, 0.0))
    np.testing.assert_allclose(out[:, :-1], img[:, :-1] + 0.05, atol=1e-12)
    np.testing.assert_allclose(out[:, -1], img[:, -1])  # clamped at the border


def test_warp_samples_exemplar_at_landmarks(rng):
    w, h = 96, 72

    def smooth(x, y):
        return 0.5 + 0.4 * np.sin(x / 13.0) * np.cos(y / 17.0)

    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    lm = integer_landmarks(rng, w, h)
    ex = LandmarkSet.from_face_points(
        np.clip(lm.face + rng.normal(0, 2, lm.face.shape), 0, [w - 1, h - 1]), w, h)
    out = warp(smooth(xs, ys), local_affine_field(lm, ex))
    for (x, y), (u, v) in zip(lm.face, ex.face):
        assert abs(out[int(y), int(x)] - smooth(u, v)) < 1e-3


# ---------------------------------------------------------------- compose


def test_compose_identities(rng):
    f = CorrespondenceField(rng.normal(size=(10, 12)), rng.normal(size=(10, 12)))
    z = CorrespondenceField.zeros(10, 12)
    fz = compose(f, z)
    np.testing.assert_array_equal(fz.dx, f.dx)
    np.testing.assert_array_equal(fz.dy, f.dy)
    zf = compose(z, f)
    np.testing.assert_array_equal(zf.dx, f.dx)
    np.testing.assert_array_equal(zf.dy, f.dy)


def test_compose_translations():
    a = CorrespondenceField.constant(8, 9, 1.0, 0.0)
    b = CorrespondenceField.constant(8, 9, 0.0, 2.0)
    c = compose(a, b)
    np.testing.assert_allclose(c.dx, 1.0)
    np.testing.assert_allclose(c.dy, 2.0)


def test_compose_matches_sequential_warp(rng):
    img = gaussian_blur(rng.random((40, 40)), 2.0)
    a = CorrespondenceField.constant(40, 40, 1.5, -0.5)
    b = CorrespondenceField.constant(40, 40, -0.25, 1.0)
    direct = warp(img, compose(a, b))
    chained = warp(warp(img, a), b)
    np.testing.assert_allclose(direct[5:-5, 5:-5], chained[5:-5, 5:-5], atol=1e-2)


# ---------------------------------------------------------------- refinement


def textured(rng, h=64, w=64):
    return gaussian_blur(rng.random((h, w)), 1.5)


def test_refine_disabled_is_zero(rng):
    img = textured(rng)
    f = refine_dense(img, np.roll(img, 3, axis=1))
    assert np.all(f.dx == 0) and np.all(f.dy == 0)


def test_refine_self_alignment(rng):
    img = textured(rng)
    f = refine_dense(img, img, RefineParams(enabled=True))
    assert np.mean(np.hypot(f.dx, f.dy)) < 0.1


def test_refine_recovers_translation(rng):
    img = textured(rng, 96, 96)
    # target(x) = warped(x + 2): content of `warped` moved 2 px to the left
    target = warp(img, CorrespondenceField.constant(96, 96, 2.0, 0.0))
    f = refine_dense(img, target, RefineParams(enabled=True, search=4))

    # exhaustive global block matching oracle on the same pair
    inner = (slice(8, -8), slice(8, -8))
    costs = {}
    for sx in range(-4, 5):
        for sy in range(-4, 5):
            moved = warp(img, CorrespondenceField.constant(96, 96, sx, sy))
            costs[(sx, sy)] = np.mean((moved[inner] - target[inner]) ** 2)
    best = min(costs, key=costs.get)
    assert best == (2, 0)
    assert 1.5 <= np.median(f.dx) <= 2.5
    assert abs(np.median(f.dy)) <= 0.5
