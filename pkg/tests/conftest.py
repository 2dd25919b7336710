import numpy as np
import pytest

from pdstokes import fem, meshing
from pdstokes.fem import AnalyticVector


@pytest.fixture(scope="session")
def sys4():
    return fem.FeSystem(meshing.build_structured(4))


@pytest.fixture(scope="session")
def sys8():
    return fem.FeSystem(meshing.build_structured(8))


def _poly():
    def X(t):
        return t * t * (1.0 - t) ** 2

    def X1(t):
        return 2.0 * t * (1.0 - t) * (1.0 - 2.0 * t)

    def X2(t):
        return 2.0 * (1.0 - 6.0 * t + 6.0 * t * t)

    return X, X1, X2


@pytest.fixture(scope="session")
def stream_field():
    """Divergence-free zero-trace polynomial field from the squared
    boundary-layer stream function."""
    X, X1, X2 = _poly()

    def value(pts):
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([X(x) * X1(y), -X1(x) * X(y)], axis=-1)

    def grad(pts):
        x, y = pts[..., 0], pts[..., 1]
        r0 = np.stack([X1(x) * X1(y), X(x) * X2(y)], axis=-1)
        r1 = np.stack([-X2(x) * X(y), -X1(x) * X1(y)], axis=-1)
        return np.stack([r0, r1], axis=-2)

    def div(pts):
        return np.zeros(pts.shape[:-1])

    return AnalyticVector(value, grad, div)


@pytest.fixture(scope="session")
def trig_field():
    """Smooth divergence-free zero-trace field that no quadrature rule
    integrates exactly."""

    def psi(x, y):
        return np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2

    def value(pts):
        x, y = pts[..., 0], pts[..., 1]
        pi = np.pi
        dpsi_y = 2 * pi * np.sin(pi * x) ** 2 * np.sin(pi * y) * np.cos(pi * y)
        dpsi_x = 2 * pi * np.sin(pi * x) * np.cos(pi * x) * np.sin(pi * y) ** 2
        return np.stack([dpsi_y, -dpsi_x], axis=-1)

    def grad(pts):
        x, y = pts[..., 0], pts[..., 1]
        pi = np.pi
        sx, cx = np.sin(pi * x), np.cos(pi * x)
        sy, cy = np.sin(pi * y), np.cos(pi * y)
        psi_xy = 4 * pi**2 * sx * cx * sy * cy
        psi_yy = 2 * pi**2 * sx**2 * (cy**2 - sy**2)
        psi_xx = 2 * pi**2 * sy**2 * (cx**2 - sx**2)
        r0 = np.stack([psi_xy, psi_yy], axis=-1)
        r1 = np.stack([-psi_xx, -psi_xy], axis=-1)
        return np.stack([r0, r1], axis=-2)

    def div(pts):
        return np.zeros(pts.shape[:-1])

    return AnalyticVector(value, grad, div)
