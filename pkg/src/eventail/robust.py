"""RANSAC manifold fitting, event sampling strategies, sequential
multi-model extraction, and the spatio-temporal plane baseline.

Inliers are judged by the angular reprojection error of a bearing against
the instantaneous camera-center/line plane of a hypothesis. All randomness
is driven by per-iteration streams derived from (seed, iteration), so
results are reproducible regardless of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientDataError
from .events_io import EventSet
from .geometry import EventailModel, angular_line_errors, line_frame, scale_line
from .solver import recover_velocity_given_line, solve_minimal

SAMPLING_STRATEGIES = ("random", "temporal", "spatial", "spatiotemporal")


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 1000
    inlier_threshold: float = 2e-3  # radians; ~0.6 px at f = 320 px
    sampling: str = "spatiotemporal"
    min_inliers: int = 50
    seed: int = 0
    confidence: float = 0.999
    # iterations to run even after the adaptive bound is met, so the
    # mean-error tie-break can select among saturated hypotheses
    min_iterations: int = 1
    refit_velocity: bool = True

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise ValueError("inlier threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.sampling not in SAMPLING_STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.sampling!r}")


@dataclass(frozen=True)
class ClusterResult:
    """One extracted manifold cluster."""

    model: EventailModel
    inlier_indices: np.ndarray
    inlier_ratio: float

    def __post_init__(self):
        object.__setattr__(self, "inlier_indices", np.asarray(self.inlier_indices, dtype=int))


@dataclass(frozen=True)
class PlaneModel:
    """Plane n . (x, y, t) = c in normalized image-time coordinates."""

    n: np.ndarray
    c: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        object.__setattr__(self, "n", n / np.linalg.norm(n))


@dataclass(frozen=True)
class PlaneCluster:
    model: PlaneModel
    inlier_indices: np.ndarray
    inlier_ratio: float

    def __post_init__(self):
        object.__setattr__(self, "inlier_indices", np.asarray(self.inlier_indices, dtype=int))


class SamplingContext:
    """Cached per-candidate-set statistics shared by all RANSAC iterations."""

    def __init__(self, events: EventSet):
        self.n = len(events)
        t = events.t_prime
        half = events.half_width()
        self.t_lo, self.t_hi = -half, half
        xy = events.f_prime[:, :2] / events.f_prime[:, 2:3]
        centered = xy - xy.mean(axis=0)
        # principal image direction of the candidate scatter
        cov = centered.T @ centered
        _, vecs = np.linalg.eigh(cov)
        self.spatial = centered @ vecs[:, -1]
        self.temporal_bins = self._interval_bins(t, self.t_lo, self.t_hi)
        s_lo, s_hi = float(np.min(self.spatial)), float(np.max(self.spatial))
        self.spatial_bins = self._interval_bins(self.spatial, s_lo, s_hi)
        rank_t = np.argsort(np.argsort(t, kind="stable"), kind="stable")
        rank_s = np.argsort(np.argsort(self.spatial, kind="stable"), kind="stable")
        order = np.argsort(rank_t + rank_s, kind="stable")
        self.rank_bins = np.array_split(order, 5)

    @staticmethod
    def _interval_bins(values, lo, hi):
        width = (hi - lo) / 5.0
        if width <= 0:
            return [np.arange(len(values))] + [np.zeros(0, dtype=int)] * 4
        idx = np.clip(((values - lo) / width).astype(int), 0, 4)
        return [np.flatnonzero(idx == k) for k in range(5)]


def _pick_per_bin(bins, n_total, rng):
    """One uniform pick per bin; empty bins fall back to a uniform pick."""
    out = []
    for b in bins:
        if len(b) == 0:
            out.append(int(rng.integers(n_total)))
        else:
            out.append(int(b[rng.integers(len(b))]))
    return np.array(out, dtype=int)


def sample_five(events: EventSet, strategy: str, rng, context: SamplingContext | None = None) -> np.ndarray:
    """Indices of five events drawn with the requested strategy.

    random: uniform without replacement. temporal/spatial: one uniform pick
    per quintile of the time window / of the spatial projection range.
    spatiotemporal: one pick per equal-count quintile of the summed temporal
    and spatial ranks.
    """
    n = len(events)
    if n < 5:
        raise InsufficientDataError(f"need at least 5 events, got {n}")
    if strategy not in SAMPLING_STRATEGIES:
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    if n == 5:
        return np.arange(5)
    if strategy == "random":
        return np.sort(rng.choice(n, size=5, replace=False))
    if context is None:
        context = SamplingContext(events)
    if strategy == "temporal":
        idx = _pick_per_bin(context.temporal_bins, n, rng)
    elif strategy == "spatial":
        idx = _pick_per_bin(context.spatial_bins, n, rng)
    else:
        idx = _pick_per_bin(context.rank_bins, n, rng)
    # bin fallbacks can collide; resample collisions uniformly
    while len(np.unique(idx)) < 5:
        seen = set()
        for k in range(5):
            while int(idx[k]) in seen:
                idx[k] = int(rng.integers(n))
            seen.add(int(idx[k]))
    return np.sort(idx)


def _iteration_rng(seed: int, iteration: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed) & 0xFFFFFFFFFFFFFFFF, iteration)))


def _required_iterations(inlier_ratio: float, confidence: float, sample_size: int) -> float:
    w = min(max(inlier_ratio, 1e-12), 1.0 - 1e-12)
    return math.log(1.0 - confidence) / math.log(1.0 - w**sample_size)


def ransac_eventail(events: EventSet, cfg: RansacConfig) -> ClusterResult | None:
    """Best manifold hypothesis by inlier count over the supplied events.

    Ties are broken by lower mean inlier error. With spatiotemporal sampling
    the drawing strategy alternates between spatial and spatio-temporal per
    iteration. Stops early once the adaptive iteration bound at
    ``cfg.confidence`` is reached. Returns None when no hypothesis reaches
    ``cfg.min_inliers``.
    """
    n = len(events)
    if n < 5:
        raise InsufficientDataError(f"RANSAC needs at least 5 events, got {n}")
    context = SamplingContext(events)
    best = None  # (count, -mean_error, model, inlier_mask)
    needed = float(cfg.max_iterations)
    for it in range(cfg.max_iterations):
        if it >= needed and it >= cfg.min_iterations:
            break
        rng = _iteration_rng(cfg.seed, it)
        if cfg.sampling == "spatiotemporal":
            strategy = "spatial" if it % 2 == 0 else "spatiotemporal"
        else:
            strategy = cfg.sampling
        idx = sample_five(events, strategy, rng, context)
        models, _ = solve_minimal(events.select(idx))
        for model in models:
            errors = angular_line_errors(model, events.f_prime, events.t_prime)
            mask = errors < cfg.inlier_threshold
            count = int(np.count_nonzero(mask))
            if count == 0:
                continue
            mean_err = float(np.mean(errors[mask]))
            key = (count, -mean_err)
            if best is None or key > best[0]:
                best = (key, model, mask)
                needed = min(needed, _required_iterations(count / n, cfg.confidence, 5))
    if best is None or int(np.count_nonzero(best[2])) < cfg.min_inliers:
        return None
    _, model, mask = best
    inliers = np.flatnonzero(mask)
    if cfg.refit_velocity and len(inliers) >= 2:
        refit = _refit_velocity(model, events.select(inliers))
        errors = angular_line_errors(refit, events.f_prime, events.t_prime)
        new_mask = errors < cfg.inlier_threshold
        # adopt the refit only if it keeps (or grows) the support, so the
        # returned inlier set always matches the returned model
        if np.count_nonzero(new_mask) >= len(inliers):
            model, inliers = refit, np.flatnonzero(new_mask)
    return ClusterResult(model=model, inlier_indices=inliers, inlier_ratio=len(inliers) / n)


def _refit_velocity(model: EventailModel, inlier_events: EventSet) -> EventailModel:
    """Re-estimate (v_y, v_z) over all inliers with the line held fixed."""
    local = EventSet(
        inlier_events.f_prime @ model.precondition_rotation,
        inlier_events.t_prime,
        delta_t=inlier_events.delta_t,
    )
    try:
        v_y, v_z = recover_velocity_given_line(model.line, local)
    except Exception:
        return model
    norm_w = np.linalg.norm(line_frame(model.line).velocity(v_y, v_z))
    if norm_w < 1e-12:
        return model
    return replace(model, line=scale_line(model.line, 1.0 / norm_w), v_y=v_y, v_z=v_z)


def sequential_extract(events: EventSet, cfg: RansacConfig, max_models: int = 5) -> list[ClusterResult]:
    """Greedy multi-model extraction: find a cluster, refit on it, remove, repeat.

    Each round first runs RANSAC over the whole working set to discover a
    cluster, then runs RANSAC again restricted to that cluster's inliers:
    samples drawn from a single manifold are far better hypotheses than the
    mixed draws of the discovery stage. Inlier indices in the returned
    clusters refer to the original event set, so the clusters are pairwise
    disjoint. Stops at ``max_models`` or when no model reaches
    ``cfg.min_inliers``.
    """
    if max_models < 1:
        raise ValueError("max_models must be >= 1")
    clusters: list[ClusterResult] = []
    alive = np.arange(len(events))
    for round_idx in range(max_models):
        if len(alive) < 5:
            break
        working = events.select(alive)
        result = ransac_eventail(working, replace(cfg, seed=cfg.seed + round_idx))
        if result is None:
            break
        model, mask = result.model, np.zeros(len(working), dtype=bool)
        mask[result.inlier_indices] = True
        if len(result.inlier_indices) >= 5:
            # judge the refit by how well it explains the discovered cluster,
            # not by global support: stray events of other manifolds otherwise
            # reward a slightly tilted model
            cluster_set = working.select(result.inlier_indices)
            refit_cfg = replace(cfg, seed=cfg.seed + max_models + round_idx)
            refined = ransac_eventail(cluster_set, refit_cfg)
            if refined is not None:
                old_mean = float(
                    np.mean(angular_line_errors(model, cluster_set.f_prime, cluster_set.t_prime))
                )
                new_mean = float(
                    np.mean(
                        angular_line_errors(refined.model, cluster_set.f_prime, cluster_set.t_prime)
                    )
                )
                if new_mean <= old_mean:
                    model = refined.model
                    errors = angular_line_errors(model, working.f_prime, working.t_prime)
                    mask = errors < cfg.inlier_threshold
        local = np.flatnonzero(mask)
        original = alive[local]
        clusters.append(
            ClusterResult(
                model=model, inlier_indices=original, inlier_ratio=len(local) / len(working)
            )
        )
        alive = np.setdiff1d(alive, original, assume_unique=True)
    return clusters


# ---------------------------------------------------------------------------
# spatio-temporal plane baseline


def _plane_points(events: EventSet) -> np.ndarray:
    f = events.f_prime
    half = events.half_width()
    return np.stack(
        [f[:, 0] / f[:, 2], f[:, 1] / f[:, 2], events.t_prime / max(half, 1e-12)], axis=1
    )


def _fit_plane(p0, p1, p2) -> PlaneModel | None:
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return PlaneModel(n, float(np.dot(n, p0)))


def plane_ransac_baseline(
    events: EventSet,
    threshold: float = 2e-3,
    max_models: int = 5,
    seed: int = 0,
    min_inliers: int = 50,
    max_iterations: int = 1000,
    confidence: float = 0.999,
) -> list[PlaneCluster]:
    """Sequential 3-point plane RANSAC over (x, y, t) event coordinates.

    Mirrors the classical clustering of line-generated events by
    spatio-temporal planes; used as the comparison baseline that fragments
    on manifolds twisted by rotation.
    """
    if len(events) < 3:
        raise InsufficientDataError(f"plane baseline needs at least 3 events, got {len(events)}")
    points = _plane_points(events)
    clusters: list[PlaneCluster] = []
    alive = np.arange(len(events))
    for round_idx in range(max_models):
        if len(alive) < 3:
            break
        pts = points[alive]
        n = len(pts)
        best = None
        needed = float(max_iterations)
        for it in range(max_iterations):
            if it >= needed:
                break
            rng = _iteration_rng(seed + round_idx, it)
            idx = rng.choice(n, size=3, replace=False)
            plane = _fit_plane(*pts[idx])
            if plane is None:
                continue
            dist = np.abs(pts @ plane.n - plane.c)
            mask = dist < threshold
            count = int(np.count_nonzero(mask))
            if count == 0:
                continue
            key = (count, -float(np.mean(dist[mask])))
            if best is None or key > best[0]:
                best = (key, plane, mask)
                needed = min(needed, _required_iterations(count / n, confidence, 3))
        if best is None or int(np.count_nonzero(best[2])) < min_inliers:
            break
        _, plane, mask = best
        local = np.flatnonzero(mask)
        clusters.append(
            PlaneCluster(
                model=plane, inlier_indices=alive[local], inlier_ratio=len(local) / n
            )
        )
        alive = np.setdiff1d(alive, alive[local], assume_unique=True)
    return clusters
