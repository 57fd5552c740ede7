"""Multi-exemplar patch selection on a grid MRF.

Nodes are overlapping square patches; each node picks which of the K aligned
exemplars supplies its style. The unary term scores exemplar patches against
the input patch (NCC structure plus absolute tone difference), the pairwise
term scores agreement of two neighbouring exemplar patches on their overlap,
and sum-product loopy belief propagation yields per-node label beliefs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300
_FLAT_VARIANCE = 1e-12


# --------------------------------------------------------------------------
# patch grid
# --------------------------------------------------------------------------


def _axis_offsets(length: int, patch: int, stride: int) -> np.ndarray:
    if length < patch:
        raise ValueError(f"image side {length} is smaller than the patch size {patch}")
    offs = list(range(0, length - patch + 1, stride))
    if offs[-1] != length - patch:
        offs.append(length - patch)
    return np.array(offs, dtype=np.int64)


@dataclass(frozen=True)
class PatchGrid:
    """Overlapping ``patch_size`` squares on a regular lattice.

    Patches start every ``stride`` pixels; when the image side is not an
    exact fit the last row/column is pushed flush against the border so that
    every pixel is covered. Nodes are numbered row-major.
    """

    width: int
    height: int
    patch_size: int
    stride: int
    x_offsets: np.ndarray
    y_offsets: np.ndarray

    @classmethod
    def for_image(cls, width: int, height: int, patch_size: int = 40,
                  stride: int = 20) -> "PatchGrid":
        if not 0 < stride <= patch_size:
            raise ValueError(f"need 0 < stride <= patch_size, got {stride}, {patch_size}")
        return cls(width, height, patch_size, stride,
                   _axis_offsets(width, patch_size, stride),
                   _axis_offsets(height, patch_size, stride))

    @property
    def nx(self) -> int:
        return len(self.x_offsets)

    @property
    def ny(self) -> int:
        return len(self.y_offsets)

    @property
    def node_count(self) -> int:
        return self.nx * self.ny

    @property
    def x_centers(self) -> np.ndarray:
        return self.x_offsets + self.patch_size // 2

    @property
    def y_centers(self) -> np.ndarray:
        return self.y_offsets + self.patch_size // 2

    @property
    def centers(self) -> np.ndarray:
        cy, cx = np.meshgrid(self.y_centers, self.x_centers, indexing="ij")
        return np.stack([cx.ravel(), cy.ravel()], axis=1)

    def node(self, iy: int, ix: int) -> int:
        return iy * self.nx + ix

    @property
    def edges(self) -> np.ndarray:
        """``(E, 2)`` node pairs: all horizontal neighbours, then all vertical."""
        ids = np.arange(self.node_count).reshape(self.ny, self.nx)
        horiz = np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1)
        vert = np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1)
        return np.concatenate([horiz, vert]).astype(np.int64)

    def window(self, n: int) -> tuple[slice, slice]:
        iy, ix = divmod(n, self.nx)
        y0, x0 = self.y_offsets[iy], self.x_offsets[ix]
        return slice(y0, y0 + self.patch_size), slice(x0, x0 + self.patch_size)

    def overlap(self, p: int, q: int) -> tuple[slice, slice]:
        """Shared region of two 4-adjacent patches, in image coordinates."""
        py, px = divmod(p, self.nx)
        qy, qx = divmod(q, self.nx)
        if abs(py - qy) + abs(px - qx) != 1:
            raise ValueError(f"nodes {p} and {q} are not 4-neighbours")
        ys, xs = self.window(p)
        yt, xt = self.window(q)
        return (slice(max(ys.start, yt.start), min(ys.stop, yt.stop)),
                slice(max(xs.start, xt.start), min(xs.stop, xt.stop)))

    def patches(self, plane: np.ndarray) -> np.ndarray:
        """All node patches of a plane, shape ``(N, P, P)``."""
        plane = np.asarray(plane, dtype=np.float64)
        if plane.ndim == 3:
            plane = plane[:, :, 0]
        if plane.shape != (self.height, self.width):
            raise ValueError(f"plane shape {plane.shape} does not match grid "
                             f"{(self.height, self.width)}")
        win = sliding_window_view(plane, (self.patch_size, self.patch_size))
        return win[np.ix_(self.y_offsets, self.x_offsets)].reshape(
            -1, self.patch_size, self.patch_size)


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------


def ncc(a, b) -> float:
    """Pearson correlation of two equal-size patches; 0 if either is flat."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"patch size mismatch: {a.size} vs {b.size}")
    da = a - a.mean()
    db = b - b.mean()
    va = np.mean(da * da)
    vb = np.mean(db * db)
    if va < _FLAT_VARIANCE or vb < _FLAT_VARIANCE:
        return 0.0
    r = np.mean(da * db) / math.sqrt(va * vb)
    return float(min(1.0, max(-1.0, r)))


def data_term(target, exemplar, alpha: float = 0.8, sigma_d: float = 0.5) -> tuple[float, float]:
    """Patch distance ``D`` and similarity ``exp(-D^2 / (2 sigma_d^2))``."""
    t = np.asarray(target, dtype=np.float64)
    e = np.asarray(exemplar, dtype=np.float64)
    if t.shape != e.shape:
        raise ValueError(f"patch size mismatch: {t.shape} vs {e.shape}")
    d_ncc = ncc(t, e)
    d_abs = float(np.mean(np.abs(t - e)))
    d = alpha * (1.0 - d_ncc) + (1.0 - alpha) * d_abs
    return d, math.exp(-d * d / (2.0 * sigma_d * sigma_d))


def smoothness_term(a_overlap, b_overlap, sigma_c: float = 1.0) -> float:
    """Compatibility of two exemplar patches over their shared region."""
    a = np.asarray(a_overlap, dtype=np.float64)
    b = np.asarray(b_overlap, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"overlap size mismatch: {a.shape} vs {b.shape}")
    c = float(np.mean(np.square(a - b)))
    return math.exp(-c / (2.0 * sigma_c * sigma_c))


def unary_table(grid: PatchGrid, target, exemplars, alpha: float = 0.8,
                sigma_d: float = 0.5) -> np.ndarray:
    """``(N, K)`` data-term table for single-plane target/exemplar images."""
    tp = grid.patches(target).reshape(grid.node_count, -1)
    t0 = tp - tp.mean(axis=1, keepdims=True)
    tv = np.mean(t0 * t0, axis=1)
    out = np.empty((grid.node_count, len(exemplars)))
    for k, ex in enumerate(exemplars):
        ep = grid.patches(ex).reshape(grid.node_count, -1)
        e0 = ep - ep.mean(axis=1, keepdims=True)
        ev = np.mean(e0 * e0, axis=1)
        flat = (tv < _FLAT_VARIANCE) | (ev < _FLAT_VARIANCE)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.mean(t0 * e0, axis=1) / np.sqrt(tv * ev)
        r = np.where(flat, 0.0, np.clip(r, -1.0, 1.0))
        d_abs = np.mean(np.abs(tp - ep), axis=1)
        d = alpha * (1.0 - r) + (1.0 - alpha) * d_abs
        out[:, k] = np.exp(-d * d / (2.0 * sigma_d * sigma_d))
    return out


def pairwise_tables(grid: PatchGrid, exemplars, sigma_c: float = 1.0) -> np.ndarray:
    """``(E, K, K)`` smoothness tables, ``[e, k, j]`` for labels of
    ``(edges[e, 0], edges[e, 1])``."""
    stack = np.stack([np.asarray(e, dtype=np.float64).reshape(grid.height, grid.width)
                      for e in exemplars])
    edges = grid.edges
    out = np.empty((len(edges), len(exemplars), len(exemplars)))
    for i, (p, q) in enumerate(edges):
        ys, xs = grid.overlap(p, q)
        block = stack[:, ys, xs].reshape(len(exemplars), -1)
        diff = block[:, None, :] - block[None, :, :]
        c = np.mean(diff * diff, axis=2)
        out[i] = np.exp(-c / (2.0 * sigma_c * sigma_c))
    return out


# --------------------------------------------------------------------------
# inference
# --------------------------------------------------------------------------


@dataclass
class LabelBeliefs:
    beliefs: np.ndarray          # (N, K), rows sum to 1
    messages: np.ndarray         # (2E, K); row 2e is edges[e,0]->edges[e,1], 2e+1 the reverse
    iterations: int
    converged: bool
    floored: int = 0


def run_bp(edges, unaries, pairwise, n_iters: int = 10, tol: float = 1e-6) -> LabelBeliefs:
    """Synchronous sum-product belief propagation.

    Parameters
    ----------
    edges : (E, 2) int array of undirected node pairs.
    unaries : (N, K) positive node potentials.
    pairwise : (E, K, K) edge potentials, ``[e, k, j]`` scoring label ``k`` on
        ``edges[e, 0]`` against label ``j`` on ``edges[e, 1]``.
    n_iters : maximum number of message sweeps.
    tol : stop once no message entry moves by more than this.

    Messages start uniform and are renormalised after every update. Products
    are accumulated in the log domain; a message out of node ``q`` towards
    ``p`` excludes the message ``p`` sent to ``q``.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    phi = np.array(unaries, dtype=np.float64)
    if phi.ndim != 2:
        raise ValueError("unaries must be (N, K)")
    n, k = phi.shape
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    psi = np.asarray(pairwise, dtype=np.float64).reshape(len(edges), k, k)

    low = phi < PROB_FLOOR
    floored = int(low.sum())
    if floored:
        log.warning("%d unary entries floored to %g", floored, PROB_FLOOR)
        phi[low] = PROB_FLOOR
    log_phi = np.log(phi)

    n_dir = 2 * len(edges)
    src = np.empty(n_dir, dtype=np.int64)
    dst = np.empty(n_dir, dtype=np.int64)
    src[0::2], dst[0::2] = edges[:, 0], edges[:, 1]
    src[1::2], dst[1::2] = edges[:, 1], edges[:, 0]
    rev = np.arange(n_dir) ^ 1

    msgs = np.full((n_dir, k), 1.0 / k)
    log_msgs = np.log(msgs)

    def incoming(log_m: np.ndarray) -> np.ndarray:
        acc = np.zeros((n, k))
        np.add.at(acc, dst, log_m)
        return acc

    iterations = 0
    converged = False
    for _ in range(n_iters):
        iterations += 1
        if n_dir == 0:
            converged = True
            break
        h = log_phi[src] + incoming(log_msgs)[src] - log_msgs[rev]
        h -= h.max(axis=1, keepdims=True)
        eh = np.exp(h)
        new = np.empty_like(msgs)
        new[0::2] = np.einsum("ek,ekj->ej", eh[0::2], psi)
        new[1::2] = np.einsum("ekj,ej->ek", psi, eh[1::2])
        new /= new.sum(axis=1, keepdims=True)
        np.maximum(new, PROB_FLOOR, out=new)
        delta = np.max(np.abs(new - msgs))
        msgs = new
        log_msgs = np.log(msgs)
        if delta < tol:
            converged = True
            break

    b = log_phi + incoming(log_msgs)
    b -= b.max(axis=1, keepdims=True)
    b = np.exp(b)
    b /= b.sum(axis=1, keepdims=True)
    return LabelBeliefs(b, msgs, iterations, converged, floored)


def brute_force_marginals(n_nodes: int, edges, unaries, pairwise,
                          mode: str = "sum", max_states: int = 10**7) -> np.ndarray:
    """Exact per-node marginals by enumerating the full joint.

    ``mode="max"`` returns normalised max-marginals instead.
    """
    phi = np.asarray(unaries, dtype=np.float64)
    k = phi.shape[1]
    if k ** n_nodes > max_states:
        raise ValueError(f"K^N = {k}^{n_nodes} exceeds the enumeration bound {max_states}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    psi = np.asarray(pairwise, dtype=np.float64).reshape(len(edges), k, k)

    joint = np.ones((k,) * n_nodes)
    for i in range(n_nodes):
        shape = [1] * n_nodes
        shape[i] = k
        joint = joint * phi[i].reshape(shape)
    for e, (p, q) in enumerate(edges):
        shape = [1] * n_nodes
        shape[p] = k
        shape[q] = k
        table = psi[e] if p < q else psi[e].T
        joint = joint * table.reshape(shape)

    out = np.empty((n_nodes, k))
    for i in range(n_nodes):
        axes = tuple(a for a in range(n_nodes) if a != i)
        m = joint.max(axis=axes) if mode == "max" else joint.sum(axis=axes)
        out[i] = m / m.sum()
    return out


# --------------------------------------------------------------------------
# selection
# --------------------------------------------------------------------------


@dataclass
class LabelField:
    labels: np.ndarray                      # (N,) exemplar index per node
    mode: str = "argmax"
    beliefs: np.ndarray | None = field(default=None, repr=False)

    def weights(self, k: int) -> np.ndarray:
        """Per-node label weights ``(N, K)``: one-hot for argmax, beliefs for mmse."""
        if self.mode == "mmse":
            return np.asarray(self.beliefs)
        return np.eye(k)[self.labels]


def select_labels(beliefs, mode: str = "argmax") -> LabelField:
    b = beliefs.beliefs if isinstance(beliefs, LabelBeliefs) else np.asarray(beliefs)
    if mode not in ("argmax", "mmse"):
        raise ValueError(f"unknown selection mode {mode!r}")
    # np.argmax returns the first maximum, i.e. the lower exemplar index
    labels = np.argmax(b, axis=1)
    return LabelField(labels, mode, b.copy() if mode == "mmse" else None)


def solve_labels(grid: PatchGrid, target_luma, exemplar_lumas, *, alpha: float = 0.8,
                 sigma_d: float = 0.5, sigma_c: float = 1.0, n_iters: int = 10,
                 tol: float = 1e-6, mode: str = "argmax") -> tuple[LabelField, LabelBeliefs]:
    """Build the patch MRF for aligned luma planes and solve it."""
    phi = unary_table(grid, target_luma, exemplar_lumas, alpha, sigma_d)
    psi = pairwise_tables(grid, exemplar_lumas, sigma_c)
    result = run_bp(grid.edges, phi, psi, n_iters, tol)
    return select_labels(result, mode), result
