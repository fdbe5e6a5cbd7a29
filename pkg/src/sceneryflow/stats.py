"""Empirical tangent-distribution statistics over scenery flows.

The time integral (1/T) int_0^T delta_{mu_{x,t}} dt is approximated by an
equal-weight distribution over sceneries at the uniform grid t_i = i * dt,
dt = (log 2)/4 by default.  Cone minima are evaluated per sample time with
the previous minimiser as a warm start, which only ever lowers the probed
minimum and keeps the sweep deterministic.

Dimension estimators fit log mass against log radius over dyadic radii.
The liminf in the local dimension is approximated by the slope over the
finest half of the radius range, and the essential infimum over points by
the 5th percentile of per-point values; raw per-scale data stays on the
estimate so stricter post-processing remains possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cones import SearchParams, min_cone_mass
from .errors import OutsideSupportError, SceneryFlowError
from .geometry import path_to_indices
from .measure import ball_mass, sample_points
from .scenery import (
    LOG2,
    Snapshot,
    _time_value,
    default_snapshot_depth,
    scenery_at,
    scenery_sequence,
)

DEFAULT_DT = LOG2 / 4.0
COARSE_DEPTH = 3


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Weighted snapshots approximating a distribution on measures."""

    entries: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = tuple((snap, float(w)) for snap, w in self.entries)
        if not entries:
            raise SceneryFlowError("empirical distribution has no entries")
        d = entries[0][0].d
        for snap, w in entries:
            if snap.d != d:
                raise SceneryFlowError("snapshots mix ambient dimensions")
            if w < 0.0:
                raise SceneryFlowError(f"negative weight {w}")
        total = sum(w for _, w in entries)
        if abs(total - 1.0) > 1e-9:
            raise SceneryFlowError(f"weights sum to {total}, not 1 within 1e-9")
        object.__setattr__(self, "entries", entries)

    @property
    def d(self):
        return self.entries[0][0].d

    @property
    def snapshots(self):
        return [snap for snap, _ in self.entries]

    @property
    def weights(self):
        return np.array([w for _, w in self.entries])


def flow_times(T, dt):
    """The uniform sample grid t_i = i * dt for t_i <= T."""
    T = _time_value(T)
    dt = float(dt)
    if dt <= 0.0:
        raise SceneryFlowError(f"time step must be positive, got {dt}")
    n = int(math.floor(T / dt + 1e-9)) + 1
    return [i * dt for i in range(n)]


def empirical_td(mu, x, T, dt=DEFAULT_DT, m=None, detail=None):
    """Equal-weight distribution over sceneries at times t_i = i*dt <= T."""
    times = flow_times(T, dt)
    try:
        snaps = scenery_sequence(mu, x, times, m=m, detail=detail)
    except SceneryFlowError:
        # recompute pointwise so the error names the failing sample time
        for t in times:
            try:
                scenery_at(mu, x, t, m=m, detail=detail)
            except SceneryFlowError as exc:
                raise type(exc)(f"scenery at t={t:.6g} failed: {exc}") from exc
        raise
    w = 1.0 / len(snaps)
    return EmpiricalDistribution(
        entries=tuple((s, w) for s in snaps),
        provenance={
            "x": tuple(float(v) for v in np.asarray(x, dtype=np.float64).reshape(-1)),
            "T": _time_value(T),
            "dt": float(dt),
        },
    )


# ---------------------------------------------------------------------------
# distances


def _coarsen(grid, to_depth):
    d = grid.ndim
    m = int(grid.shape[0]).bit_length() - 1
    if m < to_depth:
        raise SceneryFlowError(f"snapshot depth {m} is coarser than {to_depth}")
    g = grid
    for axis in range(d):
        s = g.shape
        g = g.reshape(s[:axis] + (1 << to_depth, s[axis] >> to_depth) + s[axis + 1 :])
        g = g.sum(axis=axis + 1)
    return g


def snapshot_distance(s1, s2):
    """Total variation between the two snapshots coarsened to depth 3."""
    if s1.d != s2.d:
        raise SceneryFlowError(f"dimension mismatch: {s1.d} vs {s2.d}")
    a = _coarsen(s1.grid, COARSE_DEPTH)
    b = _coarsen(s2.grid, COARSE_DEPTH)
    return 0.5 * float(np.abs(a - b).sum())


def _as_distribution(e):
    if isinstance(e, Snapshot):
        return EmpiricalDistribution(entries=((e, 1.0),))
    return e


def distribution_distance(e1, e2):
    """Transport distance between distributions under the depth-3 metric.

    Snapshots promote to point masses.  Entries are sorted by their
    coarsened tables and coupled by cumulative weight (the 1-d quantile
    coupling), so the result is deterministic, symmetric, and zero exactly
    on identical inputs.
    """
    e1, e2 = _as_distribution(e1), _as_distribution(e2)
    if e1.d != e2.d:
        raise SceneryFlowError(f"dimension mismatch: {e1.d} vs {e2.d}")

    def prep(e):
        coarse = [_coarsen(snap.grid, COARSE_DEPTH) for snap, _ in e.entries]
        order = sorted(range(len(coarse)), key=lambda i: coarse[i].tobytes())
        return [coarse[i] for i in order], [e.entries[i][1] for i in order]

    ga, wa = prep(e1)
    gb, wb = prep(e2)
    ia = ib = 0
    ra, rb = wa[0], wb[0]
    cost = 0.0
    while ia < len(ga) and ib < len(gb):
        step = min(ra, rb)
        if step > 0.0:
            cost += step * 0.5 * float(np.abs(ga[ia] - gb[ib]).sum())
        ra -= step
        rb -= step
        if ra <= 1e-15:
            ia += 1
            ra = wa[ia] if ia < len(wa) else 0.0
        if rb <= 1e-15:
            ib += 1
            rb = wb[ib] if ib < len(wb) else 0.0
    return cost


# ---------------------------------------------------------------------------
# the conical density statistic


def cone_minima_over_flow(mu, x, T, k, alpha, dt=DEFAULT_DT, m=None, detail=None, search=None):
    """Minimal cone mass of each scenery along the flow.

    Returns (times, values).  The minimiser found at t_i seeds the search
    at t_{i+1}; cones are flow-invariant, so the previous core is usually
    near-optimal one step later.
    """
    times = flow_times(T, dt)
    snaps = scenery_sequence(mu, x, times, m=m, detail=detail)
    base = search or SearchParams()
    vals = np.empty(len(snaps))
    warm = base.warm
    for i, snap in enumerate(snaps):
        v_star, vals[i] = min_cone_mass(snap, k, alpha, replace(base, warm=warm))
        warm = v_star
    return np.array(times), vals


def conical_statistic(mu, x, T, k, alpha, eps, dt=DEFAULT_DT, m=None, detail=None, search=None):
    """Fraction of flow time the scenery stays out of the low-cone set.

    Counts sample times whose minimal cone mass exceeds eps strictly; this
    is the empirical mass of the complement of A_eps along the flow.
    """
    _, vals = cone_minima_over_flow(
        mu, x, T, k, alpha, dt=dt, m=m, detail=detail, search=search
    )
    return float(np.mean(vals > eps))


# ---------------------------------------------------------------------------
# dimension estimators


@dataclass(frozen=True)
class DimensionEstimate:
    """Log-log slope of mass against radius, with the raw fit data.

    slope is the full-range least-squares fit clamped to [0, d];
    liminf_slope fits the finest half of the radii only.  Aggregated
    estimates carry per-point slopes in `points` and report the 5th
    percentile, a finite-sample stand-in for the essential infimum.
    """

    slope: float
    raw_slope: float
    liminf_slope: float
    r_range: tuple
    residual: float
    radii: tuple = ()
    log_masses: tuple = ()
    points: tuple = None


def _fit_slope(logs_r, logs_m):
    a = np.vstack([logs_r, np.ones_like(logs_r)]).T
    coef, res, _, _ = np.linalg.lstsq(a, logs_m, rcond=None)
    rms = math.sqrt(float(res[0]) / len(logs_m)) if res.size else 0.0
    return float(coef[0]), rms


def local_dimension(mu, x, r_min, r_max):
    """Scaling exponent of mu(B(x, r)) over dyadic radii in [r_min, r_max]."""
    if not 0.0 < r_min < r_max:
        raise SceneryFlowError(f"need 0 < r_min < r_max, got {r_min}, {r_max}")
    radii = []
    r = float(r_max)
    while r >= r_min * (1.0 - 1e-12):
        radii.append(r)
        r /= 2.0
    if len(radii) < 2:
        raise SceneryFlowError("radius range spans fewer than two dyadic scales")
    x = np.asarray(x, dtype=np.float64)
    masses = np.array([ball_mass(mu, x, rr) for rr in radii])
    if np.any(masses <= 0.0):
        bad = radii[int(np.argmax(masses <= 0.0))]
        raise OutsideSupportError(f"zero mass in B(x, {bad:.4g})")
    logs_r = np.log(np.array(radii))
    logs_m = np.log(masses)
    raw, rms = _fit_slope(logs_r, logs_m)
    fine = len(radii) // 2
    fine_raw, _ = _fit_slope(logs_r[fine:], logs_m[fine:])
    d = mu.d
    return DimensionEstimate(
        slope=min(max(raw, 0.0), float(d)),
        raw_slope=raw,
        liminf_slope=min(max(fine_raw, 0.0), float(d)),
        r_range=(float(radii[-1]), float(radii[0])),
        residual=rms,
        radii=tuple(radii),
        log_masses=tuple(float(v) for v in logs_m),
    )


def measure_dimension(mu, n_points=50, r_min=1e-3, r_max=0.25, seed=0, sample_depth=None):
    """Aggregate local dimension over points sampled from mu.

    Sampling prefers points whose largest query ball stays inside the
    domain, where the log-log fit is clean; when the support offers too
    few such points the draw falls back to the boundary ones.  The
    reported slope is the 5th percentile of per-point slopes (the
    essential-infimum surrogate); per-point values stay in `points`.
    """
    if sample_depth is None:
        sample_depth = default_snapshot_depth(mu.d) + 2
    pts = _interior_sample(mu, n_points, sample_depth, seed, margin=r_max)
    ests = [local_dimension(mu, x, r_min, r_max) for x in pts]
    slopes = np.array([e.slope for e in ests])
    liminfs = np.array([e.liminf_slope for e in ests])
    raw = float(np.percentile(slopes, 5.0))
    return DimensionEstimate(
        slope=min(max(raw, 0.0), float(mu.d)),
        raw_slope=raw,
        liminf_slope=float(np.percentile(liminfs, 5.0)),
        r_range=(float(r_min), float(r_max)),
        residual=float(np.median([e.residual for e in ests])),
        points=tuple(float(s) for s in slopes),
    )


def _interior_sample(mu, n, depth, seed, margin):
    """n points from mu, preferring |x|_inf <= 1 - margin, deterministic."""
    draw = sample_points(mu, 8 * n, depth, seed)
    inside = draw[np.max(np.abs(draw), axis=1) <= 1.0 - margin]
    if len(inside) >= n:
        return inside[:n]
    outside = draw[np.max(np.abs(draw), axis=1) > 1.0 - margin]
    return np.concatenate([inside, outside[: n - len(inside)]])


def snapshot_box_dimension(snap, min_depth=2):
    """Box-counting slope of the snapshot's occupied cells, depths 2..m."""
    m = snap.m
    if m <= min_depth:
        raise SceneryFlowError(f"need snapshot depth > {min_depth}, got {m}")
    depths = np.arange(min_depth, m + 1)
    counts = [int(np.count_nonzero(_coarsen(snap.grid, int(l)))) for l in depths]
    slope, _ = _fit_slope(depths * LOG2, np.log(np.array(counts, dtype=np.float64)))
    return min(max(slope, 0.0), float(snap.d))


def dimension_of_distribution(e, dim_oracle=None):
    """Weight-average snapshot dimension; the oracle defaults to box counting."""
    oracle = dim_oracle or snapshot_box_dimension
    return float(sum(w * oracle(snap) for snap, w in e.entries))


# ---------------------------------------------------------------------------
# intensity


def intensity_measure(e, cell):
    """Average mass the distribution's snapshots give one dyadic cell."""
    path = tuple(cell.path) if hasattr(cell, "path") else tuple(cell)
    depth = len(path)
    out = 0.0
    for snap, w in e.entries:
        if depth > snap.m:
            raise SceneryFlowError(
                f"cell depth {depth} exceeds snapshot depth {snap.m}"
            )
        idx = path_to_indices(path, snap.d)
        width = 1 << (snap.m - depth)
        sel = tuple(slice(int(i) * width, (int(i) + 1) * width) for i in idx)
        out += w * float(snap.grid[sel].sum())
    return out
