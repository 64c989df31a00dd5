"""Compiled inner loops.

All kernels release the GIL so independent grid points can run on a
thread pool.
"""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def compensated_cumsum(values, s, c, out):
    """Neumaier running sum of ``values`` continuing from state ``(s, c)``.

    ``out[i]`` receives the compensated total after ``values[i]``. The final
    ``(s, c)`` state is returned so a later block can continue the sum.
    """
    for i in range(values.shape[0]):
        x = values[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
        out[i] = s + c
    return s, c


@njit(nogil=True, cache=True)
def advance(lam, Lam, log_mu, h, out):
    """Iterate the h-recurrence over one window of weights.

    ``lam``/``Lam`` hold lambda_k .. lambda_{k+steps} and the matching prefix
    sums, ``h`` is h_k. Returns ``(i, h)``: when ``i == steps`` the window was
    crossed and ``h`` is h_{k+steps}; otherwise the breakdown condition holds
    at local index ``i`` and ``h`` is the value there. A non-empty ``out``
    receives the visited values.
    """
    steps = lam.shape[0] - 1
    record = out.shape[0] > 0
    for i in range(steps):
        if record:
            out[i] = h
        threshold = log_mu + np.log(Lam[i] / lam[i])
        if h >= threshold:
            return i, h
        h = (Lam[i] / Lam[i + 1]) * (
            h - np.log(lam[i + 1] / lam[i]) - np.log(-np.expm1(h - threshold))
        )
    if record:
        out[steps] = h
    return steps, h
