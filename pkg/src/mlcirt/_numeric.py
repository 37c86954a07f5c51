"""Small numeric helpers shared by the likelihood and EM internals."""

from __future__ import annotations

import numpy as np


def logsumexp_axis(arr: np.ndarray, axis: int, keepdims: bool = False) -> np.ndarray:
    """Max-shifted log-sum-exp along one axis.

    Columns that are entirely -inf yield -inf rather than NaN.
    """
    shift = np.max(arr, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    out = shift + np.log(np.sum(np.exp(arr - shift), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)
