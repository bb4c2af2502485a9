import numpy as np

from wxdepth.core import ImageBuffer, PointCloud


def random_cloud(gen: np.random.Generator, n: int = 2000, r_max: float = 80.0) -> PointCloud:
    d = gen.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = gen.uniform(1.0, r_max, n)
    return PointCloud(np.column_stack([d * r[:, None], gen.uniform(0.0, 1.0, n)]))


def random_image(gen: np.random.Generator, h: int = 24, w: int = 32) -> ImageBuffer:
    return ImageBuffer(gen.uniform(0.0, 1.0, (h, w, 3)))
