"""Backend selection for the numerical hot kernels.

The compiled extension is used when it imports cleanly; otherwise (or when
``MULTIRES_PURE_PYTHON=1``) the NumPy fallback is loaded.  ``BACKEND`` names
the active implementation.
"""
import os

if os.environ.get("MULTIRES_PURE_PYTHON", "") == "1":
    from ._kernels_py import (
        binary_entropy_upper_inverse,
        classical_pairwise_fw,
        loewner_log2,
        simplex_grid_kl_min,
    )

    BACKEND = "python"
else:
    try:
        from ._kernels import (
            binary_entropy_upper_inverse,
            classical_pairwise_fw,
            loewner_log2,
            simplex_grid_kl_min,
        )

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._kernels_py import (
            binary_entropy_upper_inverse,
            classical_pairwise_fw,
            loewner_log2,
            simplex_grid_kl_min,
        )

        BACKEND = "python"

__all__ = [
    "BACKEND",
    "binary_entropy_upper_inverse",
    "classical_pairwise_fw",
    "loewner_log2",
    "simplex_grid_kl_min",
]
