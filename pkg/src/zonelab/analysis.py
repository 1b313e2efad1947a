"""Zoning and matching over feature stacks: per-band standardization,
seeded k-means, reference-vector similarity, and zone evaluation
statistics.

Everything here is deterministic given its inputs: the k-means run is a
pure function of (stack, region, config incl. seed), centroid updates are
ordered reductions, and quantiles use linear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as scipy_stats

from .errors import AnalysisError, EmptyDomainError, GridMismatchError
from .geometry import RegionGeometry, rasterize
from .raster import Band, CATEGORICAL, CONTINUOUS, FeatureStack

EUCLIDEAN = "euclidean"
MANHATTAN = "manhattan"
COSINE = "cosine"
METRICS = (EUCLIDEAN, MANHATTAN, COSINE)

NOTCH_FACTOR = 1.58  # half-width of a boxplot notch is 1.58 * IQR / sqrt(n)


@dataclass(frozen=True)
class ClusterConfig:
    k: int
    seed: int = 0
    max_iters: int = 100
    rel_tol: float = 1e-6
    standardize: bool = True

    def __post_init__(self):
        if self.k < 2:
            raise AnalysisError(f"cluster count must be >= 2, got {self.k}")
        if self.max_iters < 1:
            raise AnalysisError("max_iters must be >= 1")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "standardize": self.standardize,
        }


@dataclass(frozen=True)
class SimilarityConfig:
    metric: str = EUCLIDEAN
    standardize: bool = True

    def __post_init__(self):
        if self.metric not in METRICS:
            raise AnalysisError(f"unknown metric {self.metric!r}; expected one of {METRICS}")

    def to_dict(self) -> dict:
        return {"metric": self.metric, "standardize": self.standardize}


@dataclass(frozen=True)
class StandardizationParams:
    names: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray  # population std; 0 marks a constant band

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "means": [float(m) for m in self.means],
            "stds": [float(s) for s in self.stds],
        }


@dataclass(frozen=True)
class AnalysisResult:
    kind: str  # cluster_map | similarity_map
    band: Band
    feature_names: tuple[str, ...]
    config: dict
    centroids: np.ndarray | None = None  # (k, d), original feature units
    reference_vector: np.ndarray | None = None  # (d,), original feature units
    standardization: StandardizationParams | None = None
    inertia_history: tuple[float, ...] = field(default=())
    iterations: int = 0

    def metadata(self) -> dict:
        meta = {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "config": dict(self.config),
        }
        if self.centroids is not None:
            meta["centroids"] = [[float(v) for v in row] for row in self.centroids]
        if self.reference_vector is not None:
            meta["reference_vector"] = [float(v) for v in self.reference_vector]
        if self.standardization is not None:
            meta["standardization"] = self.standardization.to_dict()
        if self.kind == "cluster_map":
            meta["inertia"] = list(self.inertia_history)
            meta["iterations"] = self.iterations
        return meta


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


def _matrix_params(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return x.mean(axis=0), x.std(axis=0)


def _matrix_standardize(x: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    safe = np.where(stds > 0.0, stds, 1.0)
    z = (x - means) / safe
    z[:, stds == 0.0] = 0.0
    return z


def standardize_stack(stack: FeatureStack, domain_mask: Band | None = None):
    """Z-score each band over the valid pixels inside ``domain_mask``.

    Constant bands (std 0) map to all-zeros rather than nodata so they stay
    usable as features. Returns the standardized stack and the parameters.
    """
    domain = stack.valid_mask()
    if domain_mask is not None:
        if domain_mask.kind != CATEGORICAL:
            raise AnalysisError("domain mask must be categorical")
        if domain_mask.grid != stack.grid:
            raise GridMismatchError("domain mask grid does not match stack grid")
        domain &= domain_mask.mask & (domain_mask.values == 1.0)
    n = int(domain.sum())
    if n < 2:
        raise EmptyDomainError(f"standardization domain has {n} valid pixels; need at least 2")

    means = np.empty(len(stack.bands))
    stds = np.empty(len(stack.bands))
    out_bands = []
    for i, band in enumerate(stack.bands):
        data = band.values[domain]
        means[i] = data.mean()
        stds[i] = data.std()
        if stds[i] == 0.0:
            values = np.zeros_like(band.values)
        else:
            values = np.where(band.mask, (band.values - means[i]) / stds[i], 0.0)
        out_bands.append(Band(band.grid, values, band.mask, kind=CONTINUOUS, name=band.name))
    params = StandardizationParams(tuple(stack.names), means, stds)
    return FeatureStack(stack.grid, tuple(out_bands)), params


# ---------------------------------------------------------------------------
# K-means zoning
# ---------------------------------------------------------------------------


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each next center drawn with probability
    proportional to squared distance from the chosen set."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center labels and squared distances (ties to the lowest index)."""
    # |x - c|^2 = |x|^2 - 2 x.c + |c|^2; argmin over centers.
    cross = x @ centers.T
    d2 = (x * x).sum(axis=1)[:, None] - 2.0 * cross + (centers * centers).sum(axis=1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(x.shape[0]), labels]


def _lloyd(x: np.ndarray, k: int, cfg: ClusterConfig) -> tuple[np.ndarray, np.ndarray, list, int]:
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeans_pp_init(x, k, rng)
    history: list[float] = []
    labels = np.zeros(x.shape[0], dtype=np.int64)
    for iteration in range(1, cfg.max_iters + 1):
        labels, d2 = _assign(x, centers)
        inertia = float(d2.sum())
        history.append(inertia)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        new_centers = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centers)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # Re-seed empties from the points farthest from their centers.
            far = d2.copy()
            for j in empty:
                idx = int(np.argmax(far))
                new_centers[j] = x[idx]
                far[idx] = -1.0
        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if prev == 0.0 or abs(prev - cur) / max(prev, np.finfo(float).tiny) < cfg.rel_tol:
                centers = new_centers
                break
        centers = new_centers
    # Final assignment against the final centers: the returned labeling is a
    # fixed point (reassignment changes nothing).
    labels, d2 = _assign(x, centers)
    history.append(float(d2.sum()))
    return labels, centers, history, iteration


def run_clustering(stack: FeatureStack, region: RegionGeometry, cfg: ClusterConfig) -> AnalysisResult:
    """Lloyd k-means over the stack-valid pixels inside ``region``.

    Labels are 1..k ordered by descending member count (centroid
    lexicographic order breaks ties); pixels outside the region or invalid
    in any band are nodata.
    """
    region_band = rasterize(region, stack.grid)
    domain = stack.valid_mask() & (region_band.values == 1.0)
    n = int(domain.sum())
    if n < cfg.k:
        raise AnalysisError(f"region holds {n} valid pixels; need at least k={cfg.k}")

    x = stack.vectors(domain)
    params = None
    if cfg.standardize:
        means, stds = _matrix_params(x)
        params = StandardizationParams(tuple(stack.names), means, stds)
        x = _matrix_standardize(x, means, stds)

    labels0, centers, history, iterations = _lloyd(x, cfg.k, cfg)

    counts = np.bincount(labels0, minlength=cfg.k)
    order = sorted(range(cfg.k), key=lambda j: (-counts[j], tuple(centers[j])))
    relabel = np.empty(cfg.k, dtype=np.int64)
    for rank, j in enumerate(order):
        relabel[j] = rank + 1
    labels = relabel[labels0]
    centers = centers[order]

    if params is not None:
        centroids = centers * np.where(params.stds > 0, params.stds, 0.0) + params.means
    else:
        centroids = centers.copy()

    values = np.zeros(stack.grid.shape)
    values[domain] = labels
    band = Band(stack.grid, values, domain, kind=CATEGORICAL, name="zones")
    return AnalysisResult(
        kind="cluster_map",
        band=band,
        feature_names=tuple(stack.names),
        config=cfg.to_dict(),
        centroids=centroids,
        standardization=params,
        inertia_history=tuple(history),
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Similarity search
# ---------------------------------------------------------------------------


def metric_distances(x: np.ndarray, r: np.ndarray, metric: str) -> np.ndarray:
    """Distances from each row of ``x`` to the vector ``r``.

    Cosine distance is 1 - cos(x, r), defined as 0 when both norms are zero
    and 1 when exactly one is (required for totality after standardization,
    where constant bands become all-zero coordinates).
    """
    diff = x - r
    if metric == EUCLIDEAN:
        return np.sqrt((diff * diff).sum(axis=1))
    if metric == MANHATTAN:
        return np.abs(diff).sum(axis=1)
    if metric == COSINE:
        xn = np.sqrt((x * x).sum(axis=1))
        rn = float(np.sqrt((r * r).sum()))
        out = np.empty(x.shape[0])
        if rn == 0.0:
            out[:] = np.where(xn == 0.0, 0.0, 1.0)
            return out
        zero = xn == 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (x @ r) / (xn * rn)
        out = 1.0 - np.clip(cos, -1.0, 1.0)
        out[zero] = 1.0
        np.maximum(out, 0.0, out=out)
        return out
    raise AnalysisError(f"unknown metric {metric!r}")


def run_similarity(
    stack: FeatureStack,
    search: RegionGeometry,
    reference: RegionGeometry,
    cfg: SimilarityConfig,
) -> AnalysisResult:
    """Distance from every stack-valid search pixel to the reference vector.

    The reference vector is the per-feature mean over the stack-valid
    reference pixels. With standardization on, z-scoring parameters come
    from the union of search and reference pixels so both sides share one
    feature space.
    """
    valid = stack.valid_mask()
    search_mask = valid & (rasterize(search, stack.grid).values == 1.0)
    ref_mask = valid & (rasterize(reference, stack.grid).values == 1.0)
    if not ref_mask.any():
        raise EmptyDomainError("empty reference: no stack-valid pixels in the reference region")
    if not search_mask.any():
        raise EmptyDomainError("empty search: no stack-valid pixels in the search region")

    x_search = stack.vectors(search_mask)
    x_ref = stack.vectors(ref_mask)
    reference_vector = x_ref.mean(axis=0)

    params = None
    if cfg.standardize:
        union = stack.vectors(search_mask | ref_mask)
        means, stds = _matrix_params(union)
        params = StandardizationParams(tuple(stack.names), means, stds)
        x_search = _matrix_standardize(x_search, means, stds)
        x_ref = _matrix_standardize(x_ref, means, stds)

    r = x_ref.mean(axis=0)
    distances = metric_distances(x_search, r, cfg.metric)

    values = np.zeros(stack.grid.shape)
    values[search_mask] = distances
    band = Band(stack.grid, values, search_mask, kind=CONTINUOUS, name="similarity")
    return AnalysisResult(
        kind="similarity_map",
        band=band,
        feature_names=tuple(stack.names),
        config=cfg.to_dict(),
        reference_vector=reference_vector,
        standardization=params,
    )


# ---------------------------------------------------------------------------
# Zone evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZoneStats:
    label: int
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    notch: float  # half-width: NOTCH_FACTOR * IQR / sqrt(n)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "mean": self.mean,
            "notch": self.notch,
        }


@dataclass(frozen=True)
class ZoneEvalReport:
    zones: tuple[ZoneStats, ...]
    excluded: tuple[int, ...]  # labels with < 2 samples, out of pairwise tests
    pairwise_labels: tuple[int, ...]
    p_values: np.ndarray  # symmetric, unit diagonal

    def to_dict(self) -> dict:
        return {
            "zones": [z.to_dict() for z in self.zones],
            "excluded": list(self.excluded),
            "pairwise": {
                "labels": list(self.pairwise_labels),
                "p_values": [[float(p) for p in row] for row in self.p_values],
            },
        }


def welch_p_value(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided Welch's t-test with Welch-Satterthwaite degrees of freedom.

    Zero variance on both sides degenerates to p = 1 for equal means and
    p = 0 otherwise.
    """
    n1, n2 = len(a), len(b)
    m1, m2 = a.mean(), b.mean()
    v1 = a.var(ddof=1)
    v2 = b.var(ddof=1)
    se2 = v1 / n1 + v2 / n2
    if se2 == 0.0:
        return 1.0 if m1 == m2 else 0.0
    t = (m1 - m2) / np.sqrt(se2)
    df = se2**2 / (v1**2 / (n1**2 * (n1 - 1)) + v2**2 / (n2**2 * (n2 - 1)))
    return float(2.0 * scipy_stats.t.sf(abs(t), df))


def evaluate_zones(cluster_map: Band, response: Band) -> ZoneEvalReport:
    """Distribution summary of ``response`` per cluster plus pairwise
    Welch tests; the notch rule matches the standard boxplot reading
    (non-overlap suggests significantly different medians)."""
    if cluster_map.grid != response.grid:
        raise GridMismatchError("cluster map and response are on different grids")
    if cluster_map.kind != CATEGORICAL:
        raise AnalysisError("cluster map must be categorical")

    both = cluster_map.mask & response.mask
    labels = np.unique(cluster_map.values[both]).astype(int)
    samples = {}
    zones = []
    excluded = []
    for label in labels:
        data = response.values[both & (cluster_map.values == label)]
        n = int(data.size)
        q1, med, q3 = (float(q) for q in np.percentile(data, [25.0, 50.0, 75.0]))
        zones.append(
            ZoneStats(
                label=int(label),
                n=n,
                min=float(data.min()),
                q1=q1,
                median=med,
                q3=q3,
                max=float(data.max()),
                mean=float(data.mean()),
                notch=float(NOTCH_FACTOR * (q3 - q1) / np.sqrt(n)),
            )
        )
        if n < 2:
            excluded.append(int(label))
        else:
            samples[int(label)] = data

    eligible = sorted(samples)
    if len(eligible) < 2:
        raise AnalysisError(
            f"need at least 2 clusters with >= 2 response pixels, got {len(eligible)}"
        )
    k = len(eligible)
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            pij = welch_p_value(samples[eligible[i]], samples[eligible[j]])
            p[i, j] = p[j, i] = pij
    return ZoneEvalReport(
        zones=tuple(zones),
        excluded=tuple(excluded),
        pairwise_labels=tuple(eligible),
        p_values=p,
    )
