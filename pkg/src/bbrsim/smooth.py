"""Smooth activation used to replace hard indicator functions.

Every threshold test in the fluid model (RTT above propagation, inflight
above a window bound, loss above threshold, sojourn above target) is
expressed through the same logistic ramp so that the global ODE
right-hand side stays Lipschitz and a fixed-step integrator behaves.
"""

import math

# Logistic steepness applied to normalized arguments.  Arguments are
# normalized by a natural scale of the quantity being compared (minimum
# RTT for times, base window for windows, the loss threshold for
# probabilities, the sojourn target for queueing delays).
STEEPNESS = 50.0


def logistic(z: float) -> float:
    """Plain logistic function with overflow guards."""
    if z >= 40.0:
        return 1.0
    if z <= -40.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(-z))


def smooth_step(value: float, threshold: float, scale: float,
                steepness: float = STEEPNESS) -> float:
    """Smoothed indicator of ``value > threshold``.

    Crosses 0.5 exactly at the threshold and saturates over a band of
    width ~``scale / steepness``.
    """
    return logistic(steepness * (value - threshold) / scale)
