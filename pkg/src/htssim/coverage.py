"""Traffic-aware beam footprint design.

Pipeline: demand-balanced clustering of users, Voronoi tessellation of the
coverage region around cluster centroids, one beam per cluster sized from a
catalog, and per-user satellite antenna gains.

The tessellation is built in a gnomonic projection centred on the coverage
region. Great circles are straight lines there, so the spherical bisector
between two centroids is a half-plane and every cell is a convex polygon
clipped to the coverage polygon.
"""

from dataclasses import dataclass, field
from enum import Enum
import warnings

import numpy as np
import shapely
from shapely.geometry import Polygon

from . import rng as rngmod
from .channel import beam_gain, satellite_position
from .errors import (BalanceUnachievable, DegenerateGeometry, DegenerateInput,
                     NoFittingBeam)
from .geometry import Gnomonic, angle_between, ecef, to_latlon, unit_vector

BALANCE_ITER_CAP = 1000


class ClusterMethod(str, Enum):
    KMeans = "KMeans"
    KMedoids = "KMedoids"


@dataclass(frozen=True)
class ClusterSet:
    user_ids: tuple
    labels: np.ndarray
    centroids: np.ndarray  # (k, 2) lat, lon degrees
    demands: np.ndarray  # bit/s per cluster

    @property
    def k(self):
        return self.centroids.shape[0]

    def members(self, c):
        return tuple(u for u, lab in zip(self.user_ids, self.labels) if lab == c)

    def balance_ratio(self):
        lo = self.demands.min()
        return np.inf if lo <= 0 else float(self.demands.max() / lo)


def _weighted_center(vecs, w):
    if w.sum() <= 0:
        w = np.ones_like(w)
    m = (w[:, None] * vecs).sum(axis=0)
    n = np.linalg.norm(m)
    return m / n if n > 0 else vecs[0]


def _kmeans(X, w, k, rng, n_init=8, max_iter=300):
    best = None
    wp = w if w.sum() > 0 else np.ones_like(w)
    for _ in range(n_init):
        # weighted k-means++ seeding
        centers = [X[rng.choice(len(X), p=wp / wp.sum())]]
        for _ in range(1, k):
            d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1) * wp
            if d2.sum() <= 0:
                centers.append(X[rng.integers(len(X))])
            else:
                centers.append(X[rng.choice(len(X), p=d2 / d2.sum())])
        centers = np.array(centers)
        labels = None
        for _ in range(max_iter):
            d2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1)
            new = np.argmin(d2, axis=1)
            for c in range(k):
                if not np.any(new == c):
                    far = int(np.argmax(d2[np.arange(len(X)), new]))
                    new[far] = c
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            centers = np.array([_weighted_center(X[labels == c], w[labels == c]) for c in range(k)])
        sse = float(np.sum(w * ((X - centers[labels]) ** 2).sum(-1)))
        if best is None or sse < best[0] - 1e-15:
            best = (sse, labels.copy())
    return best[1]


def _kmedoids(X, w, k):
    """Partitioning Around Medoids (BUILD + SWAP) on great-circle distances."""
    D = np.arccos(np.clip(X @ X.T, -1.0, 1.0))
    n = len(X)
    wp = w if w.sum() > 0 else np.ones_like(w)
    medoids = [int(np.argmin((D * wp[:, None]).sum(axis=0)))]
    while len(medoids) < k:
        near = D[:, medoids].min(axis=1)
        gains = [(-np.inf if j in medoids else np.sum(wp * np.maximum(near - D[:, j], 0.0)), j)
                 for j in range(n)]
        medoids.append(max(gains, key=lambda t: (t[0], -t[1]))[1])

    def cost(ms):
        return float(np.sum(wp * D[:, ms].min(axis=1)))

    current = cost(medoids)
    while True:
        best = (current, None)
        for mi in range(k):
            for j in range(n):
                if j in medoids:
                    continue
                trial = medoids.copy()
                trial[mi] = j
                c = cost(trial)
                if c < best[0] - 1e-15:
                    best = (c, trial)
        if best[1] is None:
            break
        current, medoids = best
    labels = np.argmin(D[:, medoids], axis=1)
    return labels, np.array(medoids)


def _balance(labels, X, w, k, tolerance):
    labels = labels.copy()
    for _ in range(BALANCE_ITER_CAP):
        dem = np.bincount(labels, weights=w, minlength=k)
        if dem.min() > 0 and dem.max() / dem.min() <= tolerance:
            return labels
        ratio_now = dem.max() / dem.min() if dem.min() > 0 else np.inf
        centers = np.array([_weighted_center(X[labels == c], w[labels == c]) for c in range(k)])
        h, lo = int(np.argmax(dem)), int(np.argmin(dem))
        counts = np.bincount(labels, minlength=k)
        best = None
        for u in range(len(X)):
            src = labels[u]
            if counts[src] <= 1 or w[u] <= 0:
                continue
            targets = range(k) if src == h else ([lo] if src != lo else [])
            for dst in targets:
                if dst == src:
                    continue
                new = dem.copy()
                new[src] -= w[u]
                new[dst] += w[u]
                ratio = new.max() / new.min() if new.min() > 0 else np.inf
                if not ratio < ratio_now:
                    continue
                # prefer users close to the boundary between source and target cells
                extra = np.sum((X[u] - centers[dst]) ** 2) - np.sum((X[u] - centers[src]) ** 2)
                key = (extra, ratio, u, dst)
                if best is None or key < best:
                    best = key
        if best is None:
            break
        labels[best[2]] = best[3]
    raise BalanceUnachievable(
        f"could not reach max/min cluster demand <= {tolerance} within {BALANCE_ITER_CAP} moves")


def cluster_users(users, k, method=ClusterMethod.KMeans, balance_tolerance=1.25, rng=None):
    """Group users into ``k`` clusters of similar total traffic demand.

    Plain demand-weighted clustering is followed by a boundary-reassignment
    pass that moves users out of the heaviest cluster (or into the lightest)
    until ``max/min`` demand is within ``balance_tolerance``.
    """
    users = list(users)
    n = len(users)
    if not 1 <= k <= n:
        raise DegenerateInput(f"need 1 <= k <= {n} users, got k={k}")
    w = np.array([u.traffic_demand_bps for u in users], dtype=float)
    if not w.sum() > 0:
        raise DegenerateInput("total traffic demand must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    method = ClusterMethod(method)
    X = unit_vector([u.lat_deg for u in users], [u.lon_deg for u in users]).reshape(n, 3)
    distinct = np.unique(np.round(X, 12), axis=0).shape[0]
    if k == 1:
        labels = np.zeros(n, dtype=int)
    elif distinct < k:
        # co-located users: deal clusters out in user-id order
        order = sorted(range(n), key=lambda i: users[i].id)
        labels = np.empty(n, dtype=int)
        labels[order] = np.arange(n) % k
    elif method is ClusterMethod.KMeans:
        labels = _kmeans(X, w, k, rng)
    else:
        labels, _ = _kmedoids(X, w, k)
    if k > 1:
        labels = _balance(labels, X, w, k, balance_tolerance)
    if method is ClusterMethod.KMedoids and k > 1 and distinct >= k:
        D = np.arccos(np.clip(X @ X.T, -1.0, 1.0))
        centers = []
        for c in range(k):
            idx = np.flatnonzero(labels == c)
            centers.append(X[idx[np.argmin((D[np.ix_(idx, idx)] * w[idx][:, None]).sum(axis=0))]])
        centers = np.array(centers)
    else:
        centers = np.array([_weighted_center(X[labels == c], w[labels == c]) for c in range(k)])
    lat, lon = to_latlon(centers)
    return ClusterSet(
        user_ids=tuple(u.id for u in users),
        labels=labels,
        centroids=np.column_stack([lat, lon]),
        demands=np.bincount(labels, weights=w, minlength=k),
    )


@dataclass(frozen=True)
class Tessellation:
    cells: tuple  # shapely polygons in projected coordinates, one per cluster
    coverage: Polygon
    projection: Gnomonic
    centroids: np.ndarray  # (k, 3) unit vectors actually used

    def locate(self, lat_deg, lon_deg):
        """Index of the cell containing the point, or -1 when outside the coverage."""
        xy = self.projection.forward(unit_vector(lat_deg, lon_deg))
        p = shapely.Point(xy)
        for i, cell in enumerate(self.cells):
            if cell.covers(p):
                return i
        return -1

    def cell_latlon(self, i):
        """Cell boundary as an ``(n, 2)`` array of lat, lon degrees."""
        cell = self.cells[i]
        if cell.is_empty:
            return np.empty((0, 2))
        geoms = getattr(cell, "geoms", [cell])
        xy = np.asarray(max(geoms, key=lambda g: g.area).exterior.coords)
        lat, lon = to_latlon(self.projection.inverse(xy))
        return np.column_stack([lat, lon])

    def covered_area(self):
        return float(shapely.union_all(list(self.cells)).area)

    def overlap_area(self):
        total = 0.0
        for i in range(len(self.cells)):
            for j in range(i + 1, len(self.cells)):
                total += self.cells[i].intersection(self.cells[j]).area
        return total


def _clip_halfplane(poly, a, b, c):
    """Sutherland-Hodgman clip of a convex polygon to ``a + b x + c y >= 0``."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a + b * p[0] + c * p[1]
        fq = a + b * q[0] + c * q[1]
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def tessellate(clusters, coverage_polygon):
    """Spherical Voronoi cells of the cluster centroids clipped to the coverage polygon.

    ``coverage_polygon`` is a sequence of (lat, lon) degree vertices joined by
    great-circle arcs.
    """
    cents = np.asarray(clusters.centroids if isinstance(clusters, ClusterSet) else clusters, dtype=float)
    if cents.ndim != 2 or cents.shape[0] < 1:
        raise DegenerateGeometry("need at least one centroid")
    verts = np.asarray(coverage_polygon, dtype=float)
    if verts.shape[0] < 3:
        raise DegenerateGeometry("coverage polygon needs at least three vertices")
    A = unit_vector(cents[:, 0], cents[:, 1]).reshape(-1, 3)
    rounded = [tuple(np.round(a, 13)) for a in A]
    seen = {}
    for i, key in enumerate(rounded):
        if key in seen:
            warnings.warn(f"duplicate centroid {i} perturbed by 1e-9 deg", stacklevel=2)
            lat, lon = cents[i]
            bump = 1e-9 * (1 + list(rounded[:i]).count(key))
            A[i] = unit_vector(lat + bump, lon + bump)
        seen.setdefault(key, i)
    V = unit_vector(verts[:, 0], verts[:, 1])
    proj = Gnomonic(V.sum(axis=0))
    cov_xy = proj.forward(V)
    coverage = Polygon(cov_xy)
    if not coverage.is_valid:
        coverage = shapely.make_valid(coverage)
    if coverage.area <= 0:
        raise DegenerateGeometry("coverage polygon has zero area")
    xmin, ymin, xmax, ymax = coverage.bounds
    span = max(xmax - xmin, ymax - ymin)
    pad = span + 1.0
    box = [(xmin - pad, ymin - pad), (xmax + pad, ymin - pad), (xmax + pad, ymax + pad), (xmin - pad, ymax + pad)]
    cells = []
    for i in range(len(A)):
        poly = box
        for j in range(len(A)):
            if i == j:
                continue
            nrm = A[i] - A[j]
            poly = _clip_halfplane(poly, nrm @ proj.center, nrm @ proj.e1, nrm @ proj.e2)
            if not poly:
                break
        cell = Polygon(poly) if len(poly) >= 3 else Polygon()
        cells.append(cell.intersection(coverage) if not cell.is_empty else cell)
    return Tessellation(tuple(cells), coverage, proj, A)


@dataclass(frozen=True)
class BeamTemplate:
    theta_3db: float  # rad, off-axis angle of the -3 dB contour
    g_max: float  # linear


@dataclass(frozen=True)
class PlannedBeam:
    cluster: int
    center_lat_deg: float
    center_lon_deg: float
    theta_3db: float
    g_max: float


@dataclass(frozen=True)
class PlanConfig:
    k: int
    coverage_polygon: tuple
    catalog: tuple
    satellite: object
    method: ClusterMethod = ClusterMethod.KMeans
    balance_tolerance: float = 1.25
    containment: float = 0.95
    seed: int = 0


@dataclass(frozen=True)
class BeamPlan:
    beams: tuple
    user_cluster: dict
    user_gain: dict
    cluster_demand: np.ndarray
    clusters: ClusterSet | None = None
    tessellation: Tessellation | None = None
    config: PlanConfig | None = field(default=None, compare=False)


def assign_beams(tess, clusters, users, satellite, beam_catalog, containment=0.95):
    """Place one beam per cluster and compute every user's satellite antenna gain.

    The beam points at the cluster's demand-weighted centroid and uses the
    narrowest catalog template whose -3 dB cone holds at least
    ``containment`` of the cluster demand.
    """
    users = list(users)
    by_id = {u.id: u for u in users}
    catalog = sorted(beam_catalog, key=lambda b: b.theta_3db)
    if not catalog:
        raise NoFittingBeam("empty beam catalog")
    sat = satellite_position(satellite)
    beams, gains, ucl = [], {}, {}
    for c in range(clusters.k):
        ids = clusters.members(c)
        us = [by_id[i] for i in ids]
        pos = np.array([ecef(u.lat_deg, u.lon_deg) for u in us]).reshape(-1, 3)
        w = np.array([u.traffic_demand_bps for u in us], dtype=float)
        center = _weighted_center(pos / np.linalg.norm(pos, axis=1, keepdims=True), w)
        clat, clon = to_latlon(center)
        bore = ecef(clat, clon)
        theta = angle_between(bore - sat, pos - sat)
        ww = w if w.sum() > 0 else np.ones_like(w)
        chosen = None
        for tpl in catalog:
            if ww[theta <= tpl.theta_3db * (1 + 1e-12)].sum() >= containment * ww.sum() * (1 - 1e-12):
                chosen = tpl
                break
        if chosen is None:
            raise NoFittingBeam(f"cluster {c}: widest beam covers less than {containment:.0%} of demand")
        beams.append(PlannedBeam(c, float(clat), float(clon), chosen.theta_3db, chosen.g_max))
        g = beam_gain(theta, chosen.theta_3db, chosen.g_max)
        for uid, gi in zip(ids, np.atleast_1d(g)):
            gains[uid] = float(gi)
            ucl[uid] = c
    return BeamPlan(tuple(beams), ucl, gains, clusters.demands.copy(), clusters, tess)


def plan_coverage(users, config):
    """Run clustering, tessellation, beam assignment and gain derivation."""
    rng = rngmod.stream(config.seed, "coverage")
    clusters = cluster_users(users, config.k, config.method, config.balance_tolerance, rng)
    tess = tessellate(clusters, config.coverage_polygon)
    plan = assign_beams(tess, clusters, users, config.satellite, config.catalog, config.containment)
    return BeamPlan(plan.beams, plan.user_cluster, plan.user_gain, plan.cluster_demand,
                    clusters, tess, config)


def demand_shift(old, users_new):
    """Largest relative per-cluster demand change when ``users_new`` replaces the old users.

    Users unknown to the old plan join the cluster whose beam center is
    nearest on the ground.
    """
    k = len(old.beams)
    centers = unit_vector([b.center_lat_deg for b in old.beams], [b.center_lon_deg for b in old.beams]).reshape(k, 3)
    new = np.zeros(k)
    for u in users_new:
        c = old.user_cluster.get(u.id)
        if c is None:
            c = int(np.argmin(angle_between(centers, unit_vector(u.lat_deg, u.lon_deg))))
        new[c] += u.traffic_demand_bps
    prev = np.asarray(old.cluster_demand, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(prev > 0, np.abs(new - prev) / prev, np.where(new > 0, np.inf, 0.0))
    return float(rel.max())


def replan_on_demand_shift(old, users_new, shift_threshold=0.2):
    """New plan if any cluster's demand moved by more than ``shift_threshold``, else ``None``."""
    if demand_shift(old, users_new) <= shift_threshold:
        return None
    if old.config is None:
        raise DegenerateInput("plan has no pipeline configuration to rerun")
    return plan_coverage(list(users_new), old.config)
