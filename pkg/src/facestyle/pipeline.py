"""End-to-end stylisation: load, align, select, transfer, clean up, report."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import RefineParams, compose, local_affine_field, refine_dense, triangulate, warp
from .cleanup import remove_artifacts, substitute_background
from .imagecore import (
    ImageError,
    LandmarkSet,
    as_image,
    load_image,
    load_landmarks,
    load_manifest,
    resize,
    save_image,
    to_luma,
)
from .mrf import LabelBeliefs, LabelField, PatchGrid, solve_labels
from .stack import build_stack, energy_stack
from .transfer import exemplar_style, pixel_weights, transfer

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A failure tagged with the pipeline stage it happened in."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    """Pipeline parameters. Pixel-sized values refer to full resolution and
    are scaled by ``working_scale``."""

    patch_size: int = 40
    stride: int = 20
    stack_depth: int = 5
    alpha: float = 0.8
    sigma_d: float = 0.5
    sigma_c: float = 1.0
    eps_remap: float = 1e-4
    gain_max: float = 10.0
    bp_iters: int = 10
    bp_tol: float = 1e-6
    gf_radius: int = 60
    gf_eps: float = 0.02
    selection_mode: str = "argmax"
    refine: str = "off"
    dump_intermediate: bool = False
    working_scale: float = 1.0
    stack_base_sigma: float = 2.0
    output_bit_depth: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ["patch_size", "stride", "stack_depth", "sigma_d", "sigma_c", "eps_remap",
                    "gain_max", "bp_iters", "bp_tol", "gf_radius", "working_scale",
                    "stack_base_sigma"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"config {name} must be positive, got {getattr(self, name)}")
        if self.stride > self.patch_size:
            raise ValueError("config stride must not exceed patch_size")
        if self.stack_depth < 2:
            raise ValueError("config stack_depth must be >= 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("config alpha must lie in [0, 1]")
        if self.gf_eps < 0:
            raise ValueError("config gf_eps must be >= 0")
        if self.selection_mode not in ("argmax", "mmse"):
            raise ValueError(f"config selection_mode must be argmax or mmse, got {self.selection_mode!r}")
        if self.refine not in ("off", "blockmatch"):
            raise ValueError(f"config refine must be off or blockmatch, got {self.refine!r}")
        if self.output_bit_depth not in (8, 16):
            raise ValueError("config output_bit_depth must be 8 or 16")

    def scaled_px(self, value: float) -> int:
        return max(1, int(round(value * self.working_scale)))

    @property
    def work_patch(self) -> int:
        return max(2, self.scaled_px(self.patch_size))

    @property
    def work_stride(self) -> int:
        return min(self.scaled_px(self.stride), self.work_patch)

    @property
    def work_gf_radius(self) -> int:
        return self.scaled_px(self.gf_radius)

    @property
    def work_base_sigma(self) -> float:
        return self.stack_base_sigma * self.working_scale

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def _coerce(value: str, kind):
    if kind is bool or kind == "bool":
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if kind is int or kind == "int":
        return int(value)
    if kind is float or kind == "float":
        return float(value)
    return value.strip()


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read ``key = value`` overrides (``#`` comments allowed) onto ``base``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PipelineError("config", f"{path}: {exc}") from exc
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PipelineError("config", f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise PipelineError("config", f"{path}:{lineno}: unknown key {key!r}")
        try:
            changes[key] = _coerce(value, types[key])
        except ValueError as exc:
            raise PipelineError("config", f"{path}:{lineno}: {exc}") from exc
    try:
        return dataclasses.replace(base or PipelineConfig(), **changes)
    except ValueError as exc:
        raise PipelineError("config", f"{path}: {exc}") from exc


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for peak 1.0; ``inf`` when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


@dataclass
class Exemplar:
    image: np.ndarray
    landmarks: LandmarkSet
    path: Path


@dataclass
class PipelineResult:
    output: np.ndarray
    remapped: np.ndarray
    target: np.ndarray
    grid: PatchGrid
    labels: LabelField
    bp: LabelBeliefs
    report: dict = field(default_factory=dict)

    def label_map(self) -> np.ndarray:
        return self.labels.labels.reshape(self.grid.ny, self.grid.nx)


@contextmanager
def _stage(stage: str):
    try:
        yield
    except PipelineError:
        raise
    except (ImageError, ValueError, OSError) as exc:
        raise PipelineError(stage, str(exc)) from exc


def _to_working(img: np.ndarray, lm: LandmarkSet, scale: float):
    if scale == 1.0:
        return img, lm
    h, w = img.shape[:2]
    nw, nh = max(1, int(round(w * scale))), max(1, int(round(h * scale)))
    return as_image(resize(img, nw, nh)), lm.rescale(nw / w, nw, nh)


def _load_pair(image_path, landmark_path) -> tuple[np.ndarray, LandmarkSet]:
    img = load_image(image_path)
    lm = load_landmarks(landmark_path, img.shape[1], img.shape[0])
    return img, lm


def prepare_inputs(input_path, landmarks_path, manifest_path,
                   config: PipelineConfig) -> tuple[np.ndarray, LandmarkSet, list[Exemplar], str]:
    with _stage("load"):
        target, target_lm = _load_pair(input_path, landmarks_path)
        manifest = load_manifest(manifest_path)
        if manifest.K == 0:
            raise PipelineError("load", f"{manifest_path}: no exemplars")
        exemplars = []
        sizes = set()
        for img_path, lm_path in manifest.exemplars:
            img, lm = _load_pair(img_path, lm_path)
            sizes.add(img.shape[:2])
            exemplars.append(Exemplar(img, lm, Path(img_path)))
        if len(sizes) > 1:
            raise PipelineError("load", f"{manifest_path}: exemplar resolutions differ: {sorted(sizes)}")
    with _stage("scale"):
        target, target_lm = _to_working(target, target_lm, config.working_scale)
        exemplars = [Exemplar(*_to_working(e.image, e.landmarks, config.working_scale), e.path)
                     for e in exemplars]
    return target, target_lm, exemplars, manifest.style_name


def stylize(target: np.ndarray, target_lm: LandmarkSet, exemplars: list[Exemplar],
            config: PipelineConfig, *, matte=None, background=None,
            dump_dir=None, workers: int | None = None) -> PipelineResult:
    """Run the whole method on in-memory, working-resolution inputs."""
    timings = {}
    t0 = time.perf_counter()
    target = as_image(target)
    h, w, n_ch = target.shape
    depth, base_sigma = config.stack_depth, config.work_base_sigma
    refine = RefineParams(enabled=config.refine == "blockmatch")

    with _stage("align"):
        mesh = triangulate(target_lm)

        def align_one(ex: Exemplar):
            f = local_affine_field(target_lm, ex.landmarks, mesh)
            if refine.enabled:
                f = compose(f, refine_dense(warp(ex.image, f), target, refine))
            aligned = warp(ex.image, f)
            style = exemplar_style(ex.image, f, depth=depth, base_sigma=base_sigma,
                                   channels=n_ch)
            return f, aligned, style

        with ThreadPoolExecutor(max_workers=workers) as pool:
            aligned = list(pool.map(align_one, exemplars))
    fields = [a[0] for a in aligned]
    warped = [a[1] for a in aligned]
    styles = [a[2] for a in aligned]
    timings["align"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    with _stage("mrf"):
        grid = PatchGrid.for_image(w, h, config.work_patch, config.work_stride)
        labels, bp = solve_labels(
            grid, to_luma(target), [to_luma(x) for x in warped],
            alpha=config.alpha, sigma_d=config.sigma_d, sigma_c=config.sigma_c,
            n_iters=config.bp_iters, tol=config.bp_tol, mode=config.selection_mode)
    timings["mrf"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    with _stage("transfer"):
        weights = pixel_weights(labels, grid, len(exemplars))
        tr = transfer(target, styles, weights, depth=depth, base_sigma=base_sigma,
                      eps=config.eps_remap, gain_max=config.gain_max)
    timings["transfer"] = time.perf_counter() - t2

    t3 = time.perf_counter()
    with _stage("cleanup"):
        output = remove_artifacts(tr.image, target, config.work_gf_radius, config.gf_eps)
        if matte is not None:
            if background is None:
                raise PipelineError("cleanup", "a matte needs a background image")
            output = substitute_background(output, matte, background)
    timings["cleanup"] = time.perf_counter() - t3
    timings["total"] = time.perf_counter() - t0

    hist = np.bincount(labels.labels, minlength=len(exemplars))
    report = {
        "width": w,
        "height": h,
        "channels": n_ch,
        "exemplars": len(exemplars),
        "patch_size": grid.patch_size,
        "stride": grid.stride,
        "nodes": grid.node_count,
        "selection_mode": config.selection_mode,
        "refine": config.refine,
        "bp_iterations": bp.iterations,
        "bp_converged": bp.converged,
        "warnings_floored_unaries": bp.floored,
        "label_histogram": ",".join(str(int(c)) for c in hist),
        "psnr_output_vs_input_db": psnr(output, target),
    }
    report.update({f"time_{k}_s": round(v, 4) for k, v in timings.items()})

    result = PipelineResult(output, tr.image, target, grid, labels, bp, report)
    if dump_dir is not None or config.dump_intermediate:
        if dump_dir is None:
            raise PipelineError("dump", "dump_intermediate is set but no dump directory given")
        with _stage("dump"):
            _dump(Path(dump_dir), result, fields, warped, tr.gains, config)
    return result


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

_PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200], [245, 130, 48],
    [145, 30, 180], [70, 240, 240], [240, 50, 230], [210, 245, 60], [250, 190, 212],
    [0, 128, 128], [220, 190, 255], [170, 110, 40], [255, 250, 200], [128, 0, 0],
    [170, 255, 195], [128, 128, 0], [255, 215, 180], [0, 0, 128], [128, 128, 128],
]) / 255.0


def label_map_image(label_map: np.ndarray) -> np.ndarray:
    return _PALETTE[label_map % len(_PALETTE)]


def _signed_png(plane: np.ndarray) -> np.ndarray:
    return np.clip(plane + 0.5, 0.0, 1.0)


def _dump(out: Path, result: PipelineResult, fields, warped, gains, config) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lm = result.label_map()
    save_image(out / "labels.png", label_map_image(lm))
    np.savetxt(out / "labels.txt", lm, fmt="%d")
    save_image(out / "remapped.png", result.remapped)
    for k, (f, wimg) in enumerate(zip(fields, warped)):
        np.save(out / f"field_{k:02d}.npy", f.as_array().astype(np.float32))
        save_image(out / f"warped_{k:02d}.png", wimg)
    luma = to_luma(result.target)[:, :, 0]
    st = build_stack(luma, config.stack_depth, config.work_base_sigma)
    for l, (layer, en) in enumerate(zip(st.layers, energy_stack(st))):
        save_image(out / f"input_layer_{l}.png", _signed_png(layer))
        save_image(out / f"input_energy_{l}.png", np.clip(np.sqrt(en), 0.0, 1.0))
    for c, ch in enumerate(gains):
        for l, g in enumerate(ch):
            save_image(out / f"gain_c{c}_l{l}.png", g / config.gain_max)


def write_report(path, report: dict) -> None:
    lines = [f"{k} = {v}" for k, v in report.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def run_pipeline(input_path, landmarks_path, manifest_path,
                 config: PipelineConfig | None = None, *, out_path=None, matte_path=None,
                 background_path=None, dump_dir=None) -> PipelineResult:
    """File-level entry point; writes ``out_path`` and ``out_path.report.txt``
    when ``out_path`` is given."""
    config = config or PipelineConfig()
    target, target_lm, exemplars, style = prepare_inputs(
        input_path, landmarks_path, manifest_path, config)

    matte = background = None
    if matte_path is not None:
        with _stage("load"):
            h, w = target.shape[:2]
            matte = to_luma(resize(load_image(matte_path), w, h))
            if background_path is None:
                raise PipelineError("load", "--matte requires --background")
            background = as_image(resize(load_image(background_path), w, h))

    if dump_dir is None and config.dump_intermediate and out_path is not None:
        dump_dir = f"{out_path}.dump"
    result = stylize(target, target_lm, exemplars, config, matte=matte,
                     background=background, dump_dir=dump_dir)
    result.report = {"style_name": style, "input": str(input_path),
                     "working_scale": config.working_scale, **result.report}
    if out_path is not None:
        with _stage("save"):
            save_image(out_path, result.output, config.output_bit_depth)
            write_report(f"{out_path}.report.txt", result.report)
    return result
