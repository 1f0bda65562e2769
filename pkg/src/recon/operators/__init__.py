from .base import IdentityOperator, ImagingOperator, MatrixOperator
from .ct import (
    DomainError,
    LowDoseModel,
    ParallelBeamGeometry,
    RayTransform,
    fbp,
    kl_divergence,
    kl_gradient,
    kl_objective,
    lowdose_forward,
    lowdose_jvp,
    lowdose_simulate,
    poisson_sample,
    ramp_filter,
    ray_transform,
    ray_transform_adjoint,
)
from .mri import (
    GOLDEN_ANGLE,
    CoilProfile,
    RadialEncoder,
    RadialTrajectory,
    density_weights,
    frame_trajectories,
    golden_angle_trajectory,
    nufft_recon,
    radial_encode,
    radial_encode_adjoint,
    single_coil,
)
