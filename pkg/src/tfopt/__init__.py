"""Transfer-function optimization toolkit for direct volume rendering.

Fit a transfer function for one scalar volume so that its rendering
matches a reference volume rendered with a reference TF, either by
voxel-space least squares (direct, CGLS, projected gradient descent,
ADMM box-QP) or by differentiating the volume renderer itself. Includes
synthetic/correlation field generation, residual volumes, image metrics,
a CLI, and an HTTP service.
"""

from .volume import (
    BinCoordinate,
    DegenerateRange,
    DimsMismatch,
    Histogram,
    ScalarVolume,
    TransferFunction,
    histogram,
    normalize_density,
    normalized_values,
    quantize,
    quantize_array,
    tf_eval,
)
from .io import (
    FormatError,
    load_png,
    load_tf,
    load_volume,
    png_bytes,
    save_png,
    save_ppm,
    save_tf,
    save_volume,
    tf_to_json,
)
from .fields import (
    ConstantSeries,
    EnsembleStack,
    SyntheticSpec,
    kendall_field,
    load_ensemble,
    make_synthetic,
    pearson_field,
)
from .assembly import (
    CsrMatrix,
    EmptySystem,
    GramSystem,
    apply_A,
    apply_At,
    assemble_gram,
    build_csr,
    preshaded_colors,
)
from .solvers import (
    AdamStep,
    ConstantStep,
    NonFinite,
    SingularSystem,
    SolveReport,
    SolverConfig,
    clamp_tf,
    condition_estimate,
    optimize_voxel,
    solve_admm_qp,
    solve_auto,
    solve_cgls,
    solve_grad_desc,
    solve_normal_direct,
)
from .render import (
    Camera,
    CompositingState,
    ImageRGBA,
    RenderConfig,
    composite_step,
    diff_render_config,
    render,
    render_residual,
    trace_ray,
    trilinear_sample,
)
from .diffdvr import (
    DiffOptConfig,
    image_loss,
    loss_and_grad,
    optimize_diffdvr,
)
from .metrics import (
    MetricReport,
    ResidualVolume,
    image_psnr,
    image_rmse,
    image_ssim,
    residual_field,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
