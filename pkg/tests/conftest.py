import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def gram_schmidt_canonical(points):
    """Independent canonical pose: orthonormal frame from the first three points."""
    p = np.asarray(points, dtype=float)
    e1 = p[1] - p[0]
    e1 /= np.linalg.norm(e1)
    w = p[2] - p[0]
    e2 = w - np.dot(w, e1) * e1
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return (p - p[0]) @ np.stack([e1, e2, e3], axis=1)
