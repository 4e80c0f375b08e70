"""Strong rank-revealing QR, deterministic and randomized, with sketching."""

from .dense_core import (
    PartialQR,
    PermutationSeq,
    SingularMatrixError,
    as_matrix,
    column_norms,
    cos_angle,
    cos_angle_subspace,
    inverse_row_norms,
    load_matrix_binary,
    load_matrix_text,
    log_volume,
    ls_residual,
    partial_qr,
    save_matrix_binary,
    save_matrix_text,
    singular_values,
    stable_partial_qr,
    thin_qr,
    volume,
)
from .rand_srrqr import (
    QlpResult,
    RandSrrqrResult,
    RatioReport,
    export_json,
    export_record,
    f_tilde_from,
    qlp_values,
    rand_srrqr_rank,
    rand_srrqr_tol,
    ratio_report,
)
from .sketch import (
    SketchConfig,
    SketchOperator,
    apply,
    embedding_distortion,
    fwht,
    materialize,
    next_pow2,
    ose_dim,
    pad_rows_pow2,
)
from .srrqr import (
    SrrqrConfig,
    SrrqrResult,
    SrrqrState,
    TargetRank,
    Tolerance,
    det_ratio,
    det_ratio_matrix,
    interchange,
    qrcp,
    rho,
    rho_hat,
    srrqr,
    srrqr_state,
    swap_budget,
)
from .testmat import (
    HC,
    DevilsStairs,
    Kahan,
    MatrixSpec,
    SampledIdentity,
    Stewart,
    generate,
    haar_orthogonal,
    spec_from_json,
    spec_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "HC",
    "DevilsStairs",
    "Kahan",
    "MatrixSpec",
    "PartialQR",
    "PermutationSeq",
    "QlpResult",
    "RandSrrqrResult",
    "RatioReport",
    "SampledIdentity",
    "SingularMatrixError",
    "SketchConfig",
    "SketchOperator",
    "SrrqrConfig",
    "SrrqrResult",
    "SrrqrState",
    "Stewart",
    "TargetRank",
    "Tolerance",
    "apply",
    "as_matrix",
    "column_norms",
    "cos_angle",
    "cos_angle_subspace",
    "det_ratio",
    "det_ratio_matrix",
    "embedding_distortion",
    "export_json",
    "export_record",
    "f_tilde_from",
    "fwht",
    "generate",
    "haar_orthogonal",
    "interchange",
    "inverse_row_norms",
    "load_matrix_binary",
    "load_matrix_text",
    "log_volume",
    "ls_residual",
    "materialize",
    "next_pow2",
    "ose_dim",
    "pad_rows_pow2",
    "partial_qr",
    "qlp_values",
    "qrcp",
    "rand_srrqr_rank",
    "rand_srrqr_tol",
    "ratio_report",
    "rho",
    "rho_hat",
    "save_matrix_binary",
    "save_matrix_text",
    "singular_values",
    "spec_from_json",
    "spec_to_json",
    "srrqr",
    "srrqr_state",
    "stable_partial_qr",
    "swap_budget",
    "thin_qr",
    "volume",
]
