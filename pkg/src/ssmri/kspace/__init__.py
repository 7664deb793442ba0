"""MRI signal-domain operators."""
from .coils import SensitivityMaps, coil_adjoint, coil_combine, coil_project, rss_combine
from .espirit import CalibrationError, estimate_sensitivities_espirit
from .fourier import fft2c, from_pairs, ifft2c, to_pairs
from .gcc import gcc_compress, gcc_expand, gcc_matrices
from .masks import SamplingMask, apply_mask, center_slices, full_mask, generate_mask

__all__ = [
    "CalibrationError", "SamplingMask", "SensitivityMaps", "apply_mask", "center_slices",
    "coil_adjoint", "coil_combine", "coil_project", "estimate_sensitivities_espirit",
    "fft2c", "from_pairs", "full_mask", "gcc_compress", "gcc_expand", "gcc_matrices",
    "generate_mask", "ifft2c", "rss_combine", "to_pairs",
]
