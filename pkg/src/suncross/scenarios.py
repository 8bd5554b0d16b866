"""Named systems used by the bundled configs and the verification suite."""

from __future__ import annotations

import numpy as np

from .systems import LinearDDE, NonlinearDDE, wright


def hayes(alpha=-np.pi / 2, beta=0.0, h=1.0) -> LinearDDE:
    """x'(t) = beta x(t) + alpha x(t - h)."""
    return LinearDDE.scalar(beta, h, [(h, alpha)])


def mixed3d() -> LinearDDE:
    """Three-dimensional system with stable, center and unstable eigenvalues."""
    B = [[0.0, 1.0, 0.0], [0.0, 0.5, 1.0], [0.0, 0.0, -1.0]]
    A = [[-np.pi / 2, 0.0, 0.3], [0.0, 0.0, 0.0], [0.0, 0.2, -0.5]]
    return LinearDDE(B, 1.0, ((1.0, A),))


def scalar_test() -> LinearDDE:
    return LinearDDE.scalar(-0.5, 1.0, [(1.0, -1.0), (0.4, 0.3)])


def planar_test() -> LinearDDE:
    B = [[-0.3, 1.0], [-1.0, -0.2]]
    return LinearDDE(B, 1.0, ((1.0, [[0.2, 0.0], [0.1, -0.4]]), (0.5, [[0.0, 0.3], [-0.2, 0.0]])))


def kernel_test() -> LinearDDE:
    """x' = -x + 0.3 x(t - 1) + int_{-1}^0 (0.5 + 0.4 theta) x(t + theta) dtheta."""
    return LinearDDE.scalar(-1.0, 1.0, [(1.0, 0.3)], kernel=[0.5, 0.4])


def wright_system(alpha=np.pi / 2, tau=1.0) -> NonlinearDDE:
    """x'(t) = -alpha x(t - tau)(1 + x(t)) with B = 0 and L_base = 0."""
    return NonlinearDDE(LinearDDE.scalar(0.0, tau), wright(alpha, tau))


LINEAR = {
    "hayes": hayes,
    "mixed3d": mixed3d,
    "scalar_test": scalar_test,
    "planar_test": planar_test,
    "kernel_test": kernel_test,
}
