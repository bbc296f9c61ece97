"""Multivariate polynomial space of bounded total degree.

Polynomials are always stored in a shifted/scaled monomial basis
``((u - center) / scale)**alpha`` about a local center, with the scale tied
to the sampling resolution.  Raw monomials on small neighborhoods are badly
conditioned; the local basis keeps every Vandermonde entry O(1) within a few
support radii of the center.
"""

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


def _degree_block(n, d):
    # all multi-indices of total degree d, leading component descending
    if n == 1:
        yield (d,)
        return
    for lead in range(d, -1, -1):
        for rest in _degree_block(n - 1, d - lead):
            yield (lead,) + rest


@dataclass(frozen=True)
class MultiIndexSet:
    """Graded-lexicographic multi-index set for total degree <= ``degree``."""

    dim: int
    degree: int
    indices: tuple

    @property
    def size(self):
        return len(self.indices)

    def powers(self):
        """Indices as an integer array of shape (size, dim)."""
        return np.array(self.indices, dtype=np.int64)

    def position(self, alpha):
        return self.indices.index(tuple(alpha))


@lru_cache(maxsize=None)
def enumerate_multi_indices(n, degree):
    """All multi-indices alpha with |alpha| <= degree, graded-lex order.

    The zero index comes first and the count is C(n + degree, n).
    """
    if n < 1 or degree < 0:
        raise ValueError(f"need n >= 1 and degree >= 0, got n={n}, degree={degree}")
    indices = []
    for d in range(degree + 1):
        indices.extend(_degree_block(n, d))
    return MultiIndexSet(dim=n, degree=degree, indices=tuple(indices))


def basis_matrix(index_set, center, scale, points):
    """Rows of shifted/scaled monomials at ``points``.

    Entry [i, j] is ``((points[i] - center) / scale) ** alpha_j``.  The column
    for the zero index is identically 1, and a row at ``u == center`` is the
    first standard unit vector.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    center = np.asarray(center, dtype=float).reshape(-1)
    if pts.shape[1] != index_set.dim:
        raise ValueError(f"points have dim {pts.shape[1]}, basis has dim {index_set.dim}")
    t = (pts - center) / float(scale)
    m = pts.shape[0]
    powers = index_set.powers()
    # per-axis power tables up to the max degree, then a product gather
    out = np.ones((m, index_set.size))
    exps = np.arange(index_set.degree + 1)
    for k in range(index_set.dim):
        table = t[:, k][:, None] ** exps[None, :]
        out *= table[:, powers[:, k]]
    return out


def eval_basis_row(index_set, center, scale, u):
    """Single basis row at the point ``u``."""
    return basis_matrix(index_set, center, scale, np.asarray(u, dtype=float)[None, :])[0]


@dataclass(frozen=True)
class LocalPolynomial:
    """Polynomial ``p(u) = sum_a coeffs[a] * ((u - center)/scale)**a``."""

    index_set: MultiIndexSet
    center: np.ndarray
    scale: float
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float).reshape(-1))
        if self.coeffs.shape[0] != self.index_set.size:
            raise ValueError("coefficient vector length does not match the index set")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def dim(self):
        return self.index_set.dim

    @property
    def degree(self):
        return self.index_set.degree

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return float(eval_basis_row(self.index_set, self.center, self.scale, u) @ self.coeffs)
        return basis_matrix(self.index_set, self.center, self.scale, u) @ self.coeffs

    def gradient(self, u):
        """Analytic gradient at a single point ``u``."""
        u = np.asarray(u, dtype=float).reshape(-1)
        t = (u - self.center) / self.scale
        powers = self.index_set.powers()
        grad = np.zeros(self.dim)
        for j, alpha in enumerate(powers):
            c = self.coeffs[j]
            if c == 0.0:
                continue
            for k in range(self.dim):
                a_k = alpha[k]
                if a_k == 0:
                    continue
                term = c * a_k / self.scale
                for axis in range(self.dim):
                    e = alpha[axis] - (1 if axis == k else 0)
                    term *= t[axis] ** e
                grad[k] += term
        return grad

    def to_json(self):
        return json.dumps(
            {
                "dim": self.dim,
                "degree": self.degree,
                "center": list(map(float, self.center)),
                "scale": float(self.scale),
                "coeffs": list(map(float, self.coeffs)),
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        idx = enumerate_multi_indices(int(d["dim"]), int(d["degree"]))
        return cls(index_set=idx, center=np.array(d["center"]), scale=float(d["scale"]),
                   coeffs=np.array(d["coeffs"]))


@dataclass(frozen=True)
class TruncatedPolynomial:
    """Positive part of a polynomial: p(u) where p(u) >= 0, else exactly 0."""

    base: LocalPolynomial

    def __call__(self, u):
        return np.maximum(self.base(u), 0.0)


def eval_polynomial(p, u):
    return p(u)


def eval_truncated(p, u):
    return p(u)


def recenter_matrix(index_set, old_center, old_scale, new_center, new_scale):
    """Matrix M with ``coeffs_new = M @ coeffs_old`` for an exact re-expansion.

    With t = (u - z)/s and t' = (u - z')/s' we have t = a + b t', where
    a = (z' - z)/s and b = s'/s, so each old monomial t**alpha expands into
    new monomials t'**beta with beta <= alpha componentwise.
    """
    a = (np.asarray(new_center, dtype=float) - np.asarray(old_center, dtype=float)) / old_scale
    b = float(new_scale) / float(old_scale)
    nb = index_set.size
    powers = index_set.powers()
    pos = {idx: j for j, idx in enumerate(index_set.indices)}
    mat = np.zeros((nb, nb))
    for col, alpha in enumerate(powers):
        # distribute over all beta <= alpha componentwise
        ranges = [range(int(ak) + 1) for ak in alpha]
        stack = [()]
        for r in ranges:
            stack = [s + (i,) for s in stack for i in r]
        for beta in stack:
            w = b ** sum(beta)
            for k in range(index_set.dim):
                w *= comb(int(alpha[k]), beta[k]) * a[k] ** (int(alpha[k]) - beta[k])
            mat[pos[beta], col] += w
    return mat


def recenter(p, new_center, new_scale):
    """Re-express ``p`` about a new center and scale; same function exactly."""
    if new_scale <= 0:
        raise ValueError("new_scale must be positive")
    mat = recenter_matrix(p.index_set, p.center, p.scale, new_center, new_scale)
    return LocalPolynomial(index_set=p.index_set, center=np.asarray(new_center, dtype=float),
                           scale=float(new_scale), coeffs=mat @ p.coeffs)
