"""Face photo stylisation from a collection of headshot exemplars."""

from .align import (
    CorrespondenceField,
    RefineParams,
    TriangleMesh,
    compose,
    local_affine_field,
    refine_dense,
    triangulate,
    warp,
)
from .cleanup import guided_filter, remove_artifacts, substitute_background
from .imagecore import (
    CollectionManifest,
    ImageError,
    LandmarkSet,
    box_mean,
    gaussian_blur,
    load_image,
    load_landmarks,
    load_manifest,
    save_image,
    to_luma,
)
from .mrf import (
    LabelBeliefs,
    LabelField,
    PatchGrid,
    brute_force_marginals,
    data_term,
    ncc,
    run_bp,
    select_labels,
    smoothness_term,
)
from .pipeline import PipelineConfig, PipelineError, psnr, run_pipeline, stylize
from .stack import LaplacianStack, build_stack, energy_map, reconstruct
from .transfer import blend_energy, blend_residual, pixel_weights, remap_layer, transfer

__version__ = "0.1.0"
