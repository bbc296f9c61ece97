"""Analytic benchmark functions with exact values, gradients, and sign oracles.

Every case has the form f = g + max(r, 0) on a square domain: g is the smooth
background, r the signed part whose zero set carries the crease.  All closed
forms are hand-coded and vectorized; tests use them as ground truth.
"""

from dataclasses import dataclass, field

import numpy as np

from .pointset import PointCloud

RNG_ALGORITHM = "numpy-PCG64"  # recorded in run metadata for reproducibility


def _as_pts(pts):
    return np.atleast_2d(np.asarray(pts, dtype=float))


@dataclass(frozen=True)
class AnalyticCase:
    """One benchmark: closed forms for g, r, their gradients, and r's Hessian."""

    name: str
    g: callable
    grad_g: callable
    r: callable
    grad_r: callable
    hess_r: callable
    domain: np.ndarray
    notes: str = ""

    def f(self, pts):
        pts = _as_pts(pts)
        return self.g(pts) + np.maximum(self.r(pts), 0.0)

    def r_plus(self, pts):
        return np.maximum(self.r(_as_pts(pts)), 0.0)

    def sign_r(self, pts):
        return np.sign(self.r(_as_pts(pts)))

    def c2_seminorm(self, box=None, samples=201):
        """sum over |beta| = 2 of max |D^beta r| / beta! on a dense grid."""
        box = self.domain if box is None else np.asarray(box, dtype=float)
        xs = np.linspace(box[0, 0], box[1, 0], samples)
        ys = np.linspace(box[0, 1], box[1, 1], samples)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        hxx, hxy, hyy = self.hess_r(pts)
        return (np.abs(hxx).max() / 2.0 + np.abs(hxy).max()
                + np.abs(hyy).max() / 2.0)


def _exp_g(pts):
    return np.exp(pts[:, 0] + pts[:, 1])


def _exp_grad(pts):
    e = np.exp(pts[:, 0] + pts[:, 1])
    return np.column_stack([e, e])


def _zero_g(pts):
    return np.zeros(len(pts))


def _zero_grad(pts):
    return np.zeros_like(pts)


_BOX = np.array([[-0.4, -0.4], [0.4, 0.4]])


def _circle_r(p):
    return p[:, 0] ** 2 + p[:, 1] ** 2 - 0.04


def _circle_grad(p):
    return np.column_stack([2 * p[:, 0], 2 * p[:, 1]])


def _circle_hess(p):
    n = len(p)
    two = np.full(n, 2.0)
    return two, np.zeros(n), two


def _quartic_r(p):
    return p[:, 0] ** 4 + p[:, 1] ** 4 - 0.2 ** 4


def _quartic_grad(p):
    return np.column_stack([4 * p[:, 0] ** 3, 4 * p[:, 1] ** 3])


def _quartic_hess(p):
    return 12 * p[:, 0] ** 2, np.zeros(len(p)), 12 * p[:, 1] ** 2


def _two_circles_parts(p):
    x, y = p[:, 0], p[:, 1]
    a = (x - 0.1) ** 2 + y ** 2 - 0.04
    b = (x + 0.1) ** 2 + y ** 2 - 0.04
    return x, y, a, b


def _two_circles_r(p):
    _, _, a, b = _two_circles_parts(p)
    return a * b


def _two_circles_grad(p):
    x, y, a, b = _two_circles_parts(p)
    gx = 2 * (x - 0.1) * b + a * 2 * (x + 0.1)
    gy = 2 * y * b + a * 2 * y
    return np.column_stack([gx, gy])


def _two_circles_hess(p):
    x, y, a, b = _two_circles_parts(p)
    ax, bx = 2 * (x - 0.1), 2 * (x + 0.1)
    ay = by = 2 * y
    hxx = 2 * b + 2 * ax * bx + 2 * a
    hyy = 2 * b + 2 * ay * by + 2 * a
    hxy = ax * by + ay * bx
    return hxx, hxy, hyy


def _double_lobe_r(p):
    x, y = p[:, 0], p[:, 1]
    return 4 * x ** 4 + (y ** 2 - x ** 2) / 4.0


def _double_lobe_grad(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([16 * x ** 3 - x / 2.0, y / 2.0])


def _double_lobe_hess(p):
    x = p[:, 0]
    return 48 * x ** 2 - 0.5, np.zeros(len(p)), np.full(len(p), 0.5)


def _minus_one(p):
    return np.full(len(p), -1.0)


def _parabola_r(p):
    return p[:, 1] - 0.5 * p[:, 0] ** 2 + 0.02


def _parabola_grad(p):
    return np.column_stack([-p[:, 0], np.ones(len(p))])


def _parabola_hess(p):
    n = len(p)
    return np.full(n, -1.0), np.zeros(n), np.zeros(n)


def builtin_cases():
    """The four crease benchmarks plus a smooth and a polynomial-exact control."""
    return [
        AnalyticCase("circle", _exp_g, _exp_grad, _circle_r, _circle_grad,
                     _circle_hess, _BOX,
                     notes="crease on the circle of radius 0.2"),
        AnalyticCase("quartic_circle", _exp_g, _exp_grad, _quartic_r, _quartic_grad,
                     _quartic_hess, _BOX,
                     notes="crease on the quartic level set x^4 + y^4 = 0.2^4"),
        AnalyticCase("two_circles", _exp_g, _exp_grad, _two_circles_r, _two_circles_grad,
                     _two_circles_hess, _BOX,
                     notes="product of two overlapping circle functions; "
                           "gradient vanishes where the circles cross"),
        AnalyticCase("double_lobe", _exp_g, _exp_grad, _double_lobe_r, _double_lobe_grad,
                     _double_lobe_hess, _BOX,
                     notes="figure-eight zero set with a degenerate point at the origin"),
        AnalyticCase("smooth", _exp_g, _exp_grad, _minus_one, _zero_grad,
                     lambda p: (np.zeros(len(p)), np.zeros(len(p)), np.zeros(len(p))),
                     _BOX, notes="r < 0 everywhere, so f = g; control case"),
        AnalyticCase("parabola_step", _zero_g, _zero_grad, _parabola_r, _parabola_grad,
                     _parabola_hess, _BOX,
                     notes="g = 0 and quadratic r: every stage should be exact"),
    ]


def get_case(name):
    for case in builtin_cases():
        if case.name == name:
            return case
    raise KeyError(f"no builtin case named {name!r}")


def case_names():
    return [c.name for c in builtin_cases()]


def sample_case(case, count, sampling="uniform_random", seed=0, box=None):
    """Reproducible point cloud with exact f values.

    ``uniform_random`` draws from numpy's PCG64 generator with the given
    seed; ``grid`` needs ``count`` to be a perfect square and includes both
    domain edges, so 41^2 points on an 0.8-wide box have spacing 0.02.
    """
    box = case.domain if box is None else np.asarray(box, dtype=float)
    if sampling == "uniform_random":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(box[0], box[1], size=(count, 2))
    elif sampling == "grid":
        side = int(round(np.sqrt(count)))
        if side * side != count:
            raise ValueError("grid sampling needs a perfect-square count")
        xs = np.linspace(box[0, 0], box[1, 0], side)
        ys = np.linspace(box[0, 1], box[1, 1], side)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    return PointCloud(pts, case.f(pts), bbox=box)


def probe_mesh(box, per_axis=81, shrink=0.9):
    """Uniform evaluation mesh on the shrunken box (avoids edge effects)."""
    box = np.asarray(box, dtype=float)
    center = box.mean(axis=0)
    half = (box[1] - box[0]) / 2.0 * shrink
    xs = np.linspace(center[0] - half[0], center[0] + half[0], per_axis)
    ys = np.linspace(center[1] - half[1], center[1] + half[1], per_axis)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def scaled_case_cloud(case, count, seed, scale, sampling="uniform_random"):
    """Sample once on the base box, then shrink/grow the region by ``scale``.

    The same underlying analytic function is resampled on the rescaled sites,
    so the number of data points stays fixed while the fill distance scales
    with the region, which is how resolution ladders are built here.
    """
    box = case.domain * scale
    if sampling == "uniform_random":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(case.domain[0], case.domain[1], size=(count, 2)) * scale
    else:
        side = int(round(np.sqrt(count)))
        if side * side != count:
            raise ValueError("grid sampling needs a perfect-square count")
        xs = np.linspace(box[0, 0], box[1, 0], side)
        ys = np.linspace(box[0, 1], box[1, 1], side)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    return PointCloud(pts, case.f(pts), bbox=box)
