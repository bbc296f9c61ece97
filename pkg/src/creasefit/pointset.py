"""Scattered sample sites: spatial queries, fill distance, uni-solvency.

The point cloud is immutable after construction.  Range queries go through a
uniform bucket grid whose correctness is trivial to check against a linear
scan; nearest-site distances (used by the fill-distance estimator) use a
scipy KD-tree, which is exact.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DimensionMismatchError,
    DuplicatePointError,
    EmptyCloudError,
    NoFiniteUpsilonError,
)
from .polybasis import basis_matrix, enumerate_multi_indices


class BucketGrid:
    """Uniform-bucket spatial index supporting exact fixed-radius queries."""

    def __init__(self, sites, bbox, cell_size):
        self.lo = bbox[0]
        self.cell = float(cell_size)
        extent = bbox[1] - bbox[0]
        self.shape = np.maximum(1, np.ceil(extent / self.cell).astype(int))
        keys = self._cell_of(sites)
        order = np.lexsort(keys.T[::-1])
        self._buckets = {}
        sorted_keys = keys[order]
        start = 0
        for i in range(1, len(order) + 1):
            if i == len(order) or not np.array_equal(sorted_keys[i], sorted_keys[start]):
                self._buckets[tuple(sorted_keys[start])] = np.sort(order[start:i])
                start = i
        self.sites = sites

    def _cell_of(self, pts):
        idx = np.floor((np.atleast_2d(pts) - self.lo) / self.cell).astype(int)
        return np.clip(idx, 0, self.shape - 1)

    def query_ball(self, center, radius):
        """Indices of sites with ||site - center|| <= radius, ascending."""
        center = np.asarray(center, dtype=float)
        lo_cell = np.floor((center - radius - self.lo) / self.cell).astype(int)
        hi_cell = np.floor((center + radius - self.lo) / self.cell).astype(int)
        lo_cell = np.clip(lo_cell, 0, self.shape - 1)
        hi_cell = np.clip(hi_cell, 0, self.shape - 1)
        chunks = []
        for key in np.ndindex(*(hi_cell - lo_cell + 1)):
            bucket = self._buckets.get(tuple(lo_cell + np.asarray(key)))
            if bucket is not None:
                chunks.append(bucket)
        if not chunks:
            return np.empty(0, dtype=int)
        cand = np.concatenate(chunks)
        d2 = np.sum((self.sites[cand] - center) ** 2, axis=1)
        hit = cand[d2 <= radius * radius]
        return np.sort(hit)


class PointCloud:
    """Immutable scattered sites in R^n with one sample value per site."""

    def __init__(self, points, values, bbox=None, cell_size=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        values = np.asarray(values, dtype=float).reshape(-1)
        if points.size == 0:
            raise EmptyCloudError("point cloud needs at least one site")
        if points.shape[0] != values.shape[0]:
            raise DimensionMismatchError(
                f"{points.shape[0]} sites but {values.shape[0]} values")
        if bbox is None:
            bbox = np.stack([points.min(axis=0), points.max(axis=0)])
        bbox = np.asarray(bbox, dtype=float)
        if bbox.shape != (2, points.shape[1]):
            raise DimensionMismatchError(
                f"bbox shape {bbox.shape} does not match dimension {points.shape[1]}")
        if np.any(points < bbox[0] - 1e-12) or np.any(points > bbox[1] + 1e-12):
            raise DimensionMismatchError("some sites fall outside the bbox")
        self.sites = points
        self.values = values
        self.bbox = bbox
        self._tree = cKDTree(points)
        diam = float(np.linalg.norm(bbox[1] - bbox[0]))
        if len(points) > 1:
            d_nn, _ = self._tree.query(points, k=2)
            sep = float(d_nn[:, 1].min())
            if sep <= max(diam, 1.0) * 1e-12:
                i = int(np.argmin(d_nn[:, 1]))
                raise DuplicatePointError(f"sites {i} and its neighbor nearly coincide")
            self._min_spacing = sep
        else:
            self._min_spacing = diam if diam > 0 else 1.0
        if cell_size is None:
            # aim for O(1) sites per bucket
            per_axis = max(1, int(round(len(points) ** (1.0 / points.shape[1]))))
            cell_size = max(float(np.max(bbox[1] - bbox[0])) / per_axis, 1e-300)
        self.grid = BucketGrid(points, bbox, cell_size)

    @property
    def dim(self):
        return self.sites.shape[1]

    @property
    def n_sites(self):
        return self.sites.shape[0]

    def range_query(self, center, radius):
        """Exactly the site indices within Euclidean distance ``radius``."""
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        return self.grid.query_ball(center, radius)

    def nearest_site_distance(self, probes):
        d, _ = self._tree.query(np.atleast_2d(probes))
        return d

    def min_spacing(self):
        return self._min_spacing

    def density_bound(self, h):
        """Measured N_cap: max over sites of #(X in B_h(x)) / h^n.

        Recorded as a diagnostic; nothing enforces a hard limit.
        """
        counts = self._tree.query_ball_point(self.sites, r=h, return_length=True)
        return float(np.max(counts)) / h ** self.dim

    def save_csv(self, path):
        n = self.dim
        header = ",".join([f"x{i + 1}" for i in range(n)] + ["f"])
        data = np.column_stack([self.sites, self.values])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load_csv(cls, path, bbox=None):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if header[-1] != "f" or any(c != f"x{i + 1}" for i, c in enumerate(header[:-1])):
            raise DimensionMismatchError(f"unexpected CSV header {header!r}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1], bbox=bbox)


def build_point_cloud(points, values, bbox=None):
    return PointCloud(points, values, bbox=bbox)


@dataclass(frozen=True)
class FillDistance:
    h: float
    probe_resolution: float


def _probe_grid(bbox, resolution):
    axes = []
    for k in range(bbox.shape[1]):
        span = bbox[1, k] - bbox[0, k]
        n = max(2, int(np.ceil(span / resolution)) + 1)
        axes.append(np.linspace(bbox[0, k], bbox[1, k], n))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def estimate_fill_distance(cloud, probe_resolution=None):
    """Largest hole radius: sup over the domain of the distance to the cloud.

    Estimated as the max over a probe grid of the nearest-site distance.  The
    default probe resolution is half the minimum site spacing, which keeps the
    estimator within a few percent of the continuous value.
    """
    if cloud.n_sites == 0:
        raise EmptyCloudError("cannot estimate the fill distance of an empty cloud")
    if probe_resolution is None:
        probe_resolution = 0.5 * cloud.min_spacing()
    if probe_resolution <= 0:
        raise ValueError("probe_resolution must be positive")
    probes = _probe_grid(cloud.bbox, probe_resolution)
    h = float(cloud.nearest_site_distance(probes).max())
    return FillDistance(h=h, probe_resolution=float(probe_resolution))


def is_unisolvent(points, degree, rank_tol=1e-8):
    """Whether values on ``points`` determine every polynomial of the degree.

    Judged on the shifted/scaled Vandermonde (centroid center, RMS-radius
    scale): full column rank means smallest singular value above
    ``rank_tol`` times the largest.  Invariant under translation and uniform
    scaling of the subset by construction.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        return False
    idx = enumerate_multi_indices(pts.shape[1], degree)
    if pts.shape[0] < idx.size:
        return False
    center = pts.mean(axis=0)
    scale = float(np.sqrt(np.mean(np.sum((pts - center) ** 2, axis=1))))
    if scale == 0.0:
        return idx.size == 1
    v = basis_matrix(idx, center, scale, pts)
    s = np.linalg.svd(v, compute_uv=False)
    return bool(s[0] > 0 and s[-1] > rank_tol * s[0])


@dataclass(frozen=True)
class UnisolvencyRadius:
    upsilon_m: float
    degree: int


def estimate_upsilon(cloud, degree, probe_points=None, h=None,
                     step=0.25, max_multiple=50.0, rank_tol=1e-8):
    """Smallest ladder multiple L such that every probe ball B_{L h} is
    uni-solvent for the degree.

    The ladder is L in {step, 2 step, ..., max_multiple}.  Adding sites never
    breaks uni-solvency, so each probe is resolved by its first passing rung.
    """
    if h is None:
        h = estimate_fill_distance(cloud).h
    if probe_points is None:
        probe_points = _probe_grid(cloud.bbox, 0.999 * h)
    probe_points = np.atleast_2d(probe_points)
    ladder = np.arange(step, max_multiple + 0.5 * step, step)
    nb = enumerate_multi_indices(cloud.dim, degree).size
    max_r = max_multiple * h

    def passes(neigh, d, rung):
        take = neigh[d <= rung * h]
        if len(take) < nb:
            return False
        return is_unisolvent(cloud.sites[take], degree, rank_tol)

    worst = 0.0
    for y in probe_points:
        neigh = cloud.range_query(y, max_r)
        d = np.linalg.norm(cloud.sites[neigh] - y, axis=1)
        # probes that already pass at the current max cannot raise it
        if worst > 0.0 and passes(neigh, d, worst):
            continue
        minimal = None
        for rung in ladder[ladder > worst]:
            if passes(neigh, d, rung):
                minimal = float(rung)
                break
        if minimal is None:
            raise NoFiniteUpsilonError(
                f"no ball up to {max_multiple} h is uni-solvent at degree {degree}")
        worst = minimal
    if worst == 0.0:
        # every probe passed at the very first rung
        worst = float(ladder[0])
    return UnisolvencyRadius(upsilon_m=float(worst), degree=degree)
