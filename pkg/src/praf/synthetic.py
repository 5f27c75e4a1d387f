"""Seeded synthetic scenes for smoke tests, pilots and benchmarks."""
import numpy as np


def random_scene(rng, size=64, shapes=4):
    """A colour-gradient background with a few filled ellipses and rectangles, in [0, 1]."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    c0, c1, c2 = rng.uniform(0.1, 0.9, size=(3, 3))
    img = c0 + np.multiply.outer(xx, c1 - c0) * 0.6 + np.multiply.outer(yy, c2 - c0) * 0.4
    for _ in range(shapes):
        color = rng.uniform(0.0, 1.0, size=3)
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        ry, rx = rng.uniform(0.08, 0.3, size=2)
        if rng.random() < 0.5:
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[inside] = color
    return np.clip(img, 0.0, 1.0)


def random_pair(seed, size=64):
    rng = np.random.default_rng(seed)
    return random_scene(rng, size), random_scene(rng, size)
