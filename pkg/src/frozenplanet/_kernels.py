"""Pick the compiled kernels when the extension is built, numpy otherwise."""
import os

if os.environ.get("FROZENPLANET_PURE_PYTHON"):
    from ._pykernels import exp_sums, invert_shift, series_eval

    BACKEND = "python"
else:
    try:
        from ._ckernels import exp_sums, invert_shift, series_eval

        BACKEND = "cython"
    except ImportError:
        from ._pykernels import exp_sums, invert_shift, series_eval

        BACKEND = "python"

__all__ = ["BACKEND", "exp_sums", "invert_shift", "series_eval"]
