"""Fixed-step explicit Runge-Kutta stepping on a half-step lattice.

The right-hand side is called with the half-step index ``k2`` (time
``t0 + k2*h/2``) rather than a float time. Periodic coefficients can then
be tabulated once per period and looked up, which keeps the inner loop
free of trigonometric evaluations and makes runs bit-reproducible.
"""
from __future__ import annotations

import math


def steps_per_period(tau, h_max):
    """Smallest integer step count per period with ``tau/M <= h_max``."""
    return max(1, int(math.ceil(tau / h_max - 1e-12)))


def rk4_run(rhs, y0, n_steps, h, *, callback=None, k2_start=0):
    """Integrate ``y' = rhs(k2, y)`` for ``n_steps`` classical RK4 steps.

    ``callback(step_index, y)`` is invoked after every step (and once with
    index 0 for ``y0``); returning ``True`` stops the run early. The final
    state is returned.
    """
    y = y0
    half = 0.5 * h
    sixth = h / 6.0
    if callback is not None and callback(0, y):
        return y
    k2 = k2_start
    for i in range(1, n_steps + 1):
        s1 = rhs(k2, y)
        s2 = rhs(k2 + 1, y + half * s1)
        s3 = rhs(k2 + 1, y + half * s2)
        s4 = rhs(k2 + 2, y + h * s3)
        y = y + sixth * (s1 + 2.0 * (s2 + s3) + s4)
        k2 += 2
        if callback is not None and callback(i, y):
            break
    return y
