"""Numerical laboratory for supercooled freezing in obstacle-problem form.

Solves w_t - Lap w = -chi_{w>0} with w >= 0 and w_t <= 0 by implicit-Euler
linear complementarity steps, and measures free-boundary quantities
(freezing times, blow-up profiles, frequency functions, cleaning constants,
parabolic dimensions) on solved and closed-form reference fields.
"""

__version__ = "0.1.0"
