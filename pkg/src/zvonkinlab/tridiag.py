import numpy as np


def solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas algorithm over a batch of independent tridiagonal systems.

    The system index runs along axis 0 of every argument; any further axes are
    independent batch axes (``rhs`` may carry extra trailing axes beyond the
    coefficient arrays).  ``lower[0]`` and ``upper[-1]`` are ignored.
    """
    n = diag.shape[0]
    extra = rhs.ndim - diag.ndim
    expand = (...,) + (None,) * extra
    c = np.empty_like(diag)
    d = np.empty(np.broadcast_shapes(rhs.shape, diag[expand].shape))
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0][expand]
    for k in range(1, n):
        denom = diag[k] - lower[k] * c[k - 1]
        c[k] = upper[k] / denom
        d[k] = (rhs[k] - lower[k][expand] * d[k - 1]) / denom[expand]
    x = np.empty_like(d)
    x[-1] = d[-1]
    for k in range(n - 2, -1, -1):
        x[k] = d[k] - c[k][expand] * x[k + 1]
    return x
