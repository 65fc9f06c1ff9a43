"""Vessel-bifurcation landmark toolkit.

Physical-space volumes and interpolation, the iterative sphere-growing
bifurcation localizer with vesselness-mask fallback, synthetic deformation
phantoms with exact point mapping, and TRE evaluation with paired
statistics.
"""

from vesselmark._kernels import BACKEND as KERNEL_BACKEND
from vesselmark.evaluation import (
    CaseRecord,
    LandmarkPair,
    LandmarkStatus,
    PairType,
    PairedTestResult,
    Provenance,
    TREReport,
    compute_tre,
    dataset_census,
    load_case,
    paired_t_test,
    save_case,
    warp_points_with_dvf,
)
from vesselmark.filters import (
    RegionGrowParams,
    RegionGrowResult,
    VesselnessParams,
    frangi_vesselness,
    gaussian_smooth,
    region_grow_mask,
    smoothed_gradient,
)
from vesselmark.grower import (
    GrowConfig,
    GrowOutcome,
    GrowSource,
    GrowTrace,
    SphereState,
    classify_pair_type,
    opposing_force_field,
    refine_bifurcation,
    refine_with_fallback,
    sphere_step,
)
from vesselmark.phantom import (
    PhantomPair,
    SyntheticTransform,
    invert_point,
    make_observer_patch_pair,
    make_phantom_pair,
    map_point_forward,
    random_transform,
)
from vesselmark.volume import (
    OrganMaskSet,
    ScalarVolume,
    VectorField,
    VolumeGeometry,
    extract_subvolume,
    overwrite_organ_intensities,
    resample_isotropic,
    sample_trilinear,
    threshold_normalize,
)
from vesselmark.volume_io import (
    load_vector_field,
    load_volume,
    save_vector_field,
    save_volume,
)

__version__ = "0.1.0"
