"""Classify every data site to a consistent side of the crease using only f.

Five stages, each usable on its own:

1. flag sites whose local fits misbehave (the crease band),
2. connected components of the remaining sites under 2h-proximity,
3. label band sites to the component whose restricted fit explains them best,
4. greedily merge components into two classes by cross-fit residuals,
5. re-decide sites near the class boundary from scratch.

Each stage re-introduces its own compact weight: detection wants a tight
support so that kink-free fitting neighborhoods exist on both sides, while
merging must reach across the excluded band, so its support is much wider.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoComponentsError, RankDeficientError
from .mls import MlsConfig, WeightFunction, restricted_fit, wendland_c2, wls_fit
from .polybasis import enumerate_multi_indices


@dataclass(frozen=True)
class PartitionConfig:
    """Degree, fill distance, and the per-stage compact weights."""

    degree: int
    h: float
    detect_weight: WeightFunction = field(default_factory=lambda: wendland_c2(4.0))
    label_weight: WeightFunction = field(default_factory=lambda: wendland_c2(10.0))
    merge_weight: WeightFunction = field(default_factory=lambda: wendland_c2(14.0))
    refine_weight: WeightFunction = field(default_factory=lambda: wendland_c2(8.0))
    rank_tol: float = 1e-8


@dataclass(frozen=True)
class SingularBand:
    """Site indices flagged as near the crease, to be excluded within 3h."""

    indices: np.ndarray
    band_radius: float
    thresholds: np.ndarray  # per-site trip threshold, kept for inspection


@dataclass(frozen=True)
class ComponentLabeling:
    components: list          # index arrays, one per off-band component
    labels: np.ndarray        # component id per site (1..k); 0 = not yet labeled
    k: int
    unlabeled: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


@dataclass(frozen=True)
class MergeStep:
    l1: int
    l2: int
    d_value: float
    fallback: bool = False


@dataclass(frozen=True)
class SignPartition:
    """Boolean membership per site plus the component-to-class map."""

    in_p: np.ndarray
    sigma: dict
    merge_trace: tuple
    unlabeled: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    flagged: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def p_indices(self):
        return np.flatnonzero(self.in_p)

    def complement_indices(self):
        return np.flatnonzero(~self.in_p)

    def swapped(self):
        sigma = {i: (3 - s) for i, s in self.sigma.items()}
        return replace(self, in_p=~self.in_p, sigma=sigma)


def detect_singular_band(cloud, f_values, cfg):
    """Sites where some nearby all-data fit fails by more than its own
    extrapolation allowance.

    For every site u, the local fit over the support of the detection weight
    is evaluated on the extended ball of radius (rho + 5) h.  The in-support
    residual maximum eps_u, scaled by ((rho + 5) / rho)^(M + 1), bounds how
    much a kink-free fit may grow on the extension; any site beating that
    bound is flagged.  eps_u is floored at 1e-14 max|f| so exactly-polynomial
    data does not trip on roundoff.
    """
    f_values = np.asarray(f_values, dtype=float)
    n = cloud.n_sites
    rho = cfg.detect_weight.rho
    h = cfg.h
    grow = ((rho + 5.0) / rho) ** (cfg.degree + 1)
    floor = 1e-14 * float(np.max(np.abs(f_values))) if n else 0.0
    flagged = np.zeros(n, dtype=bool)
    thresholds = np.full(n, np.inf)
    cfg_fit = MlsConfig(degree=cfg.degree, weight=cfg.detect_weight, h=h,
                        rank_tol=cfg.rank_tol)
    for u in range(n):
        center = cloud.sites[u]
        near = cloud.range_query(center, rho * h)
        try:
            fit = wls_fit(cloud, near, f_values[near], center, cfg_fit)
        except RankDeficientError as exc:
            raise RankDeficientError(
                f"detection fit at site {u} is rank deficient",
                location=center, site_index=u) from exc
        ext = cloud.range_query(center, (rho + 5.0) * h)
        resid = np.abs(fit(cloud.sites[ext]) - f_values[ext])
        d = np.linalg.norm(cloud.sites[ext] - center, axis=1)
        eps_u = max(float(resid[d <= rho * h].max()), floor)
        thr = eps_u * grow
        trip = resid > thr
        flagged[ext[trip]] = True
        thresholds[ext[trip]] = np.minimum(thresholds[ext[trip]], thr)
    idx = np.flatnonzero(flagged)
    return SingularBand(indices=idx, band_radius=3.0 * h, thresholds=thresholds[idx])


def connected_components(cloud, band):
    """Components of the off-band sites under edges of length < 2h.

    Off-band means farther than the band radius from every flagged site.
    Components are numbered 1..k by their smallest contained site index.
    """
    n = cloud.n_sites
    covered = np.zeros(n, dtype=bool)
    radius = band.band_radius
    for s in band.indices:
        covered[cloud.range_query(cloud.sites[s], radius)] = True
    vertices = np.flatnonzero(~covered)
    if len(vertices) == 0:
        raise NoComponentsError("every site lies inside the crease band")
    two_h = 2.0 * radius / 3.0
    labels = np.zeros(n, dtype=int)
    comp_of = {}
    comp_id = 0
    for v in vertices:
        if labels[v] != 0:
            continue
        comp_id += 1
        stack = [v]
        labels[v] = comp_id
        members = [v]
        while stack:
            cur = stack.pop()
            nbrs = cloud.range_query(cloud.sites[cur], two_h)
            d = np.linalg.norm(cloud.sites[nbrs] - cloud.sites[cur], axis=1)
            for nb in nbrs[(d < two_h) & (~covered[nbrs]) & (labels[nbrs] == 0)]:
                labels[nb] = comp_id
                members.append(nb)
                stack.append(nb)
        comp_of[comp_id] = np.sort(np.array(members))
    # renumber by least contained index for determinism
    order = sorted(comp_of, key=lambda c: comp_of[c][0])
    components = [comp_of[c] for c in order]
    final = np.zeros(n, dtype=int)
    for new_id, members in enumerate(components, start=1):
        final[members] = new_id
    return ComponentLabeling(components=components, labels=final, k=len(components))


def label_band_sites(cloud, f_values, comps, cfg):
    """Extend the component labels to the band sites.

    A band site takes the component whose restricted fit at the site explains
    f(x) best; ties go to the smaller component id.  Sites reachable by no
    uni-solvent component neighborhood stay unlabeled and are reported.
    """
    f_values = np.asarray(f_values, dtype=float)
    labels = comps.labels.copy()
    masks = []
    for members in comps.components:
        m = np.zeros(cloud.n_sites, dtype=bool)
        m[members] = True
        masks.append(m)
    unlabeled = []
    for x in np.flatnonzero(comps.labels == 0):
        center = cloud.sites[x]
        best = None
        for i, mask in enumerate(masks, start=1):
            fit = restricted_fit(cloud, f_values, center, cfg.degree,
                                 cfg.label_weight, cfg.h, cfg.rank_tol, mask=mask)
            if fit is None:
                continue
            resid = abs(float(fit.coeffs[0]) - f_values[x])
            if best is None or resid < best[0]:
                best = (resid, i)
        if best is None:
            unlabeled.append(x)
        else:
            labels[x] = best[1]
    return ComponentLabeling(components=comps.components, labels=labels, k=comps.k,
                             unlabeled=np.array(unlabeled, dtype=int))


def _inter_set_distance(cloud, a_idx, b_idx):
    a = cloud.sites[a_idx]
    b = cloud.sites[b_idx]
    best = np.inf
    for row in a:
        best = min(best, float(np.min(np.linalg.norm(b - row, axis=1))))
    return best


def merge_components(cloud, f_values, labeling, cfg):
    """Greedy pairwise merges down to two classes.

    Each round fits one polynomial family per current class and measures, for
    every ordered pair, the worst residual of one class's fit on the other
    class's adjacent sites (infinite when no site of one class has a neighbor
    of the other inside the merge support).  The pair minimizing the
    symmetrized matrix merges; k - 2 rounds leave two classes.  k <= 2 skips
    the loop entirely.  When every pair is infinite the two closest classes
    merge instead, and the step is recorded as a fallback.
    """
    f_values = np.asarray(f_values, dtype=float)
    k = labeling.k
    n = cloud.n_sites
    rho_h = cfg.merge_weight.rho * cfg.h
    # current class per original component; classes renumber 1..m each round
    class_of = {i: i for i in range(1, k + 1)}
    trace = []
    neighbor_cache = {}

    def neighbors(x):
        if x not in neighbor_cache:
            neighbor_cache[x] = cloud.range_query(cloud.sites[x], rho_h)
        return neighbor_cache[x]

    for j in range(max(0, k - 2)):
        m = k - j
        member_sets = {l: np.flatnonzero(
            np.isin(labeling.labels, [i for i, c in class_of.items() if c == l]))
            for l in range(1, m + 1)}
        in_class = {}
        for l, idxs in member_sets.items():
            mask = np.zeros(n, dtype=bool)
            mask[idxs] = True
            in_class[l] = mask
        dmat = np.full((m + 1, m + 1), np.inf)
        for l1 in range(1, m + 1):
            for l2 in range(1, m + 1):
                if l1 == l2:
                    continue
                frontier = [x for x in member_sets[l1]
                            if in_class[l2][neighbors(x)].any()]
                worst = -np.inf
                for x in frontier:
                    fit = restricted_fit(cloud, f_values, cloud.sites[x], cfg.degree,
                                         cfg.merge_weight, cfg.h, cfg.rank_tol,
                                         mask=in_class[l2])
                    if fit is None:
                        continue  # not uni-solvent from there; leave out of the max
                    worst = max(worst, abs(float(fit.coeffs[0]) - f_values[x]))
                if np.isfinite(worst) and worst >= 0.0:
                    dmat[l1, l2] = worst
        sym = dmat + dmat.T
        pairs = [(l1, l2) for l1 in range(1, m + 1) for l2 in range(l1 + 1, m + 1)]
        finite = [(sym[l1, l2], l1, l2) for l1, l2 in pairs if np.isfinite(sym[l1, l2])]
        if finite:
            dval, l1, l2 = min(finite, key=lambda t: (t[0], t[1], t[2]))
            fallback = False
        else:
            dists = [(_inter_set_distance(cloud, member_sets[l1], member_sets[l2]),
                      l1, l2) for l1, l2 in pairs]
            dval, l1, l2 = min(dists, key=lambda t: (t[0], t[1], t[2]))
            fallback = True
        trace.append(MergeStep(l1=l1, l2=l2, d_value=float(dval), fallback=fallback))
        remap = {}
        for i in range(1, m + 1):
            remap[i] = i if i < l2 else (l1 if i == l2 else i - 1)
        class_of = {comp: remap[c] for comp, c in class_of.items()}

    sigma = dict(sorted(class_of.items()))
    in_p = np.zeros(n, dtype=bool)
    for comp, cls in sigma.items():
        if cls == 1:
            in_p[labeling.labels == comp] = True
    return SignPartition(in_p=in_p, sigma=sigma, merge_trace=tuple(trace),
                         unlabeled=labeling.unlabeled.copy())


def refine_partition(cloud, f_values, part, cfg):
    """Re-decide every site that has close neighbors on both sides.

    Boundary sites are removed from both classes, two fits are built from the
    stripped classes, and each boundary site joins the side whose fit matches
    f there better (ties to side one).  A side whose stripped fit is not
    uni-solvent at a site leaves that site where it was, flagged.
    """
    f_values = np.asarray(f_values, dtype=float)
    n = cloud.n_sites
    in_p = part.in_p.copy()
    two_h = 2.0 * cfg.h
    boundary = []
    for x in range(n):
        nbrs = cloud.range_query(cloud.sites[x], two_h)
        d = np.linalg.norm(cloud.sites[nbrs] - cloud.sites[x], axis=1)
        nbrs = nbrs[d < two_h]
        if in_p[nbrs].any() and (~in_p[nbrs]).any():
            boundary.append(x)
    boundary = np.array(boundary, dtype=int)
    if len(boundary) == 0:
        return part
    keep1 = in_p.copy()
    keep1[boundary] = False
    keep2 = ~in_p
    keep2[boundary] = False
    flagged = []
    new_in_p = in_p.copy()
    for x in boundary:
        center = cloud.sites[x]
        fit1 = restricted_fit(cloud, f_values, center, cfg.degree, cfg.refine_weight,
                              cfg.h, cfg.rank_tol, mask=keep1)
        fit2 = restricted_fit(cloud, f_values, center, cfg.degree, cfg.refine_weight,
                              cfg.h, cfg.rank_tol, mask=keep2)
        if fit1 is None or fit2 is None:
            flagged.append(x)
            continue
        r1 = abs(float(fit1.coeffs[0]) - f_values[x])
        r2 = abs(float(fit2.coeffs[0]) - f_values[x])
        new_in_p[x] = r1 <= r2
    return SignPartition(in_p=new_in_p, sigma=part.sigma, merge_trace=part.merge_trace,
                         unlabeled=part.unlabeled.copy(),
                         flagged=np.array(flagged, dtype=int))


@dataclass(frozen=True)
class PartitionResult:
    """Final partition plus every intermediate stage, kept for inspection."""

    band: SingularBand
    components: ComponentLabeling
    labeling: ComponentLabeling
    initial: SignPartition
    partition: SignPartition


def partition_pipeline(cloud, f_values, cfg):
    """Run all five stages and keep the intermediates."""
    band = detect_singular_band(cloud, f_values, cfg)
    comps = connected_components(cloud, band)
    labeling = label_band_sites(cloud, f_values, comps, cfg)
    initial = merge_components(cloud, f_values, labeling, cfg)
    refined = refine_partition(cloud, f_values, initial, cfg)
    return PartitionResult(band=band, components=comps, labeling=labeling,
                           initial=initial, partition=refined)
