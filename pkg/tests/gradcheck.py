"""Central-difference directional-derivative oracle for gradient checks.

Kept independent of the library's analytic gradients: only loss *values*
are consumed here.
"""

import numpy as np


def directional_fd(loss_fn, blocks: dict, key: str, direction: np.ndarray,
                   h: float = 1e-4) -> float:
    """(f(x + h d) - f(x - h d)) / 2h along `direction` in block `key`."""
    plus = {k: v.copy() for k, v in blocks.items()}
    minus = {k: v.copy() for k, v in blocks.items()}
    plus[key] = blocks[key] + h * direction
    minus[key] = blocks[key] - h * direction
    return (loss_fn(plus) - loss_fn(minus)) / (2.0 * h)


def relative_error(fd: float, analytic: float, floor: float = 1e-8) -> float:
    return abs(fd - analytic) / max(abs(fd), abs(analytic), floor)
