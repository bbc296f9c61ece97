"""Moving least squares quasi-interpolation.

The operator fits, for each query point y, the polynomial of total degree M
minimizing the weighted sum of squared deviations at the data sites, and
returns its value at y.  Both the fitted polynomial and the equivalent
per-site weights q_x(y) (so that the value is sum_x q_x(y) f(x)) come from a
single column-pivoted QR factorization of the square-root-weighted
Vandermonde; normal equations are used only as a test oracle.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import RankDeficientError
from .polybasis import LocalPolynomial, basis_matrix, enumerate_multi_indices


@dataclass(frozen=True)
class WeightFunction:
    """Radial weight in units of the fill distance.

    ``wendland_c2``: (1 - t/rho)^4 (4 t/rho + 1) for t < rho, else 0.
    ``truncated_gaussian``: exp(-t^2 / shape) for t < rho, else 0.  The
    truncation keeps the support finite so locality stays measurable; with
    the default rho the discarded tail is below e^-10.
    """

    kind: str
    rho: float
    shape: float = 40.0

    def __post_init__(self):
        if self.kind not in ("wendland_c2", "truncated_gaussian"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.rho <= 0:
            raise ValueError("support radius multiple must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = t < self.rho
        if self.kind == "wendland_c2":
            s = np.clip(t / self.rho, 0.0, 1.0)
            w = (1.0 - s) ** 4 * (4.0 * s + 1.0)
        else:
            w = np.exp(-(t * t) / self.shape)
        return np.where(inside, w, 0.0)


def wendland_c2(rho):
    return WeightFunction(kind="wendland_c2", rho=float(rho))


def truncated_gaussian(shape=40.0, rho=20.0):
    return WeightFunction(kind="truncated_gaussian", rho=float(rho), shape=float(shape))


def weight_eval(w, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("weight argument must be nonnegative")
    return w(t)


@dataclass(frozen=True)
class MlsConfig:
    degree: int
    weight: WeightFunction
    h: float
    rank_tol: float = 1e-8

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")


class _WlsFactorization:
    """Column-pivoted QR of the sqrt-weighted, column-equilibrated Vandermonde."""

    def __init__(self, v, w, rank_tol, location=None, site_indices=None):
        sw = np.sqrt(w)
        b = v * sw[:, None]
        colnorm = np.linalg.norm(b, axis=0)
        if np.any(colnorm == 0.0) or b.shape[0] < b.shape[1]:
            raise RankDeficientError(
                "weighted neighborhood is not uni-solvent at this degree",
                location=location,
                site_index=None if site_indices is None else int(site_indices[0]),
            )
        beq = b / colnorm
        q, r, piv = scipy.linalg.qr(beq, mode="economic", pivoting=True)
        rdiag = np.abs(np.diag(r))
        if rdiag[0] == 0.0 or rdiag[-1] < rank_tol * rdiag[0]:
            raise RankDeficientError(
                "weighted neighborhood is not uni-solvent at this degree",
                location=location,
                site_index=None if site_indices is None else int(site_indices[0]),
            )
        self.q, self.r, self.piv = q, r, piv
        self.sw = sw
        self.colnorm = colnorm
        self.v = v

    def solve(self, rhs):
        """Coefficients (in the original column order) minimizing ||sqrt(W)(V c - rhs)||."""
        y = self.q.T @ (self.sw * rhs)
        x = scipy.linalg.solve_triangular(self.r, y)
        c = np.empty_like(x)
        c[self.piv] = x
        return c / self.colnorm

    def dual_weights(self):
        """Per-site weights q with sum_i q_i p(x_i) = (fit of p)(center) for every p."""
        e0 = np.zeros(self.v.shape[1])
        e0[0] = 1.0 / self.colnorm[0]
        e0p = e0[self.piv]
        z = scipy.linalg.solve_triangular(
            self.r, scipy.linalg.solve_triangular(self.r, e0p, trans="T"))
        zfull = np.empty_like(z)
        zfull[self.piv] = z
        zfull /= self.colnorm
        return (self.sw ** 2) * (self.v @ zfull)

    def singular_values(self):
        """Exact singular values of the unequilibrated sqrt-weighted Vandermonde."""
        return np.linalg.svd(self.r * self.colnorm[self.piv][None, :],
                             compute_uv=False)


def wls_fit(cloud, site_indices, site_values, center, cfg):
    """Weighted least-squares polynomial at ``center`` over the given sites.

    Returns the minimizer in the shifted/scaled basis centered at ``center``
    with scale ``cfg.h``.  Raises RankDeficientError when the weighted
    Vandermonde fails the rank tolerance; nothing is ever regularized.
    """
    center = np.asarray(center, dtype=float)
    site_indices = np.asarray(site_indices, dtype=int)
    site_values = np.asarray(site_values, dtype=float)
    idx = enumerate_multi_indices(cloud.dim, cfg.degree)
    pts = cloud.sites[site_indices]
    d = np.linalg.norm(pts - center, axis=1)
    w = cfg.weight(d / cfg.h)
    keep = w > 0.0
    v = basis_matrix(idx, center, cfg.h, pts[keep])
    fac = _WlsFactorization(v, w[keep], cfg.rank_tol, location=center,
                            site_indices=site_indices[keep] if keep.any() else None)
    coeffs = fac.solve(site_values[keep])
    return LocalPolynomial(index_set=idx, center=center, scale=cfg.h, coeffs=coeffs)


@dataclass
class MlsDiagnostics:
    l1_measured: float
    r_measured: float


class QuasiInterpolant:
    """The quasi-interpolation operator for a fixed cloud and configuration.

    Immutable after construction; per-query evaluations are independent.  The
    per-site weight rows (one local solve per data site) are built once on
    first use and cached, since the error functional and downstream
    corrections reuse them heavily.
    """

    def __init__(self, cloud, config):
        self.cloud = cloud
        self.config = config
        self.index_set = enumerate_multi_indices(cloud.dim, config.degree)
        self._site_rows = None

    @property
    def support_radius(self):
        return self.config.weight.rho * self.config.h

    def _support(self, y):
        return self.cloud.range_query(y, self.support_radius)

    def basis_weights(self, y):
        """Support indices and values q_x(y) of the operator weights at y."""
        y = np.asarray(y, dtype=float)
        idx = self._support(y)
        if len(idx) == 0:
            raise RankDeficientError("no sites inside the weight support", location=y)
        pts = self.cloud.sites[idx]
        d = np.linalg.norm(pts - y, axis=1)
        w = self.config.weight(d / self.config.h)
        keep = w > 0.0
        idx, pts, w = idx[keep], pts[keep], w[keep]
        v = basis_matrix(self.index_set, y, self.config.h, pts)
        fac = _WlsFactorization(v, w, self.config.rank_tol, location=y, site_indices=idx)
        return idx, fac.dual_weights()

    def local_fit(self, site_values, y):
        """The fitted local polynomial at y for values given on all of X."""
        y = np.asarray(y, dtype=float)
        idx = self._support(y)
        return wls_fit(self.cloud, idx, np.asarray(site_values)[idx], y, self.config)

    def value(self, site_values, y):
        idx, q = self.basis_weights(y)
        return float(q @ np.asarray(site_values)[idx])

    def values(self, site_values, probes):
        site_values = np.asarray(site_values, dtype=float)
        return np.array([self.value(site_values, y) for y in np.atleast_2d(probes)])

    def site_weight_matrix(self):
        """Sparse matrix W with row x holding q(x); Q phi at the sites is W phi."""
        if self._site_rows is None:
            n = self.cloud.n_sites
            data, cols, rowptr = [], [], [0]
            for i in range(n):
                try:
                    idx, q = self.basis_weights(self.cloud.sites[i])
                except RankDeficientError as exc:
                    raise RankDeficientError(
                        f"site {i} has no uni-solvent weighted neighborhood",
                        location=self.cloud.sites[i], site_index=i) from exc
                data.append(q)
                cols.append(idx)
                rowptr.append(rowptr[-1] + len(idx))
            mat = scipy.sparse.csr_matrix(
                (np.concatenate(data), np.concatenate(cols), np.array(rowptr)),
                shape=(n, n))
            density = mat.nnz / max(1, n * n)
            self._site_rows = mat.toarray() if density > 0.25 else mat
        return self._site_rows

    def error_at_sites(self, site_values):
        """E phi at every site: phi(x) - (Q phi)(x)."""
        site_values = np.asarray(site_values, dtype=float)
        return site_values - self.site_weight_matrix() @ site_values

    def measure_diagnostics(self, probes):
        """Empirical Lebesgue constant and effective support radius.

        L1 is the max over the probes of sum |q_x(y)|; the effective support
        radius is the largest ||y - x|| / h over pairs with |q_x(y)| >= 1e-12.
        """
        l1 = 0.0
        r_eff = 0.0
        for y in np.atleast_2d(probes):
            idx, q = self.basis_weights(y)
            l1 = max(l1, float(np.abs(q).sum()))
            live = np.abs(q) >= 1e-12
            if live.any():
                d = np.linalg.norm(self.cloud.sites[idx[live]] - y, axis=1)
                r_eff = max(r_eff, float(d.max()) / self.config.h)
        return MlsDiagnostics(l1_measured=l1, r_measured=r_eff)


def mls_value(qi, site_values, y):
    return qi.value(site_values, y)


def error_at_sites(qi, site_values):
    return qi.error_at_sites(site_values)


def restricted_fit(cloud, site_values, center, degree, weight, h, rank_tol=1e-8, mask=None):
    """Weighted fit at ``center`` using only the sites selected by ``mask``.

    Returns None when the restricted neighborhood is not uni-solvent; callers
    decide whether that is an error or just an undefined branch.
    """
    center = np.asarray(center, dtype=float)
    idx = cloud.range_query(center, weight.rho * h)
    if mask is not None:
        idx = idx[mask[idx]]
    if len(idx) == 0:
        return None
    cfg = MlsConfig(degree=degree, weight=weight, h=h, rank_tol=rank_tol)
    try:
        return wls_fit(cloud, idx, np.asarray(site_values)[idx], center, cfg)
    except RankDeficientError:
        return None
