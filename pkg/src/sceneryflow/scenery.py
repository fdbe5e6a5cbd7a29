"""Magnification dynamics: translations, the zoom semigroup, and sceneries.

The scenery of a measure mu at a point x and flow time t is the view of mu
through the ball B(x, e^{-t}), translated to the origin, rescaled onto the
unit ball and renormalised.  Snapshots hold that view as mass on the depth-m
dyadic grid of [-1, 1]^d restricted to B(0, 1).

Coordinate conventions: the measure is treated as zero outside [-1, 1]^d, so
query balls may overhang the boundary (the guard rejects only base points
outside the closed cube; a stricter interior guard would leave sceneries at
boundary support points undefined).  Grids resample by the cell-overlap
policy: a source cell's mass spreads uniformly within the cell, and each
target cell receives the overlapping fraction.  At dyadic times and
dyadically aligned points the grids nest and the resampling is exact;
elsewhere the policy error scales with the source cells, which sit `detail`
dyadic levels below the snapshot cells.

The magnification chain is the discrete counterpart: one step zooms the
depth-1 cell containing the tracked point onto the full cube and
renormalises.  Its states are cube-normalised, so orbit snapshots keep
cube support instead of restricting to the ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    OutOfDomainError,
    OutsideSupportError,
    ResolutionExhaustedError,
    SceneryFlowError,
    TruncatedOrbitError,
    UndefinedMagnificationError,
)
from .geometry import box_ball_overlap_fraction, cell_width, indices_to_path
from .measure import MAX_DEPTH, DyadicMeasure, ShiftedRule

LOG2 = math.log(2.0)

# snapshot depth and the extra source levels per ambient dimension
DEFAULT_SNAPSHOT_DEPTH = {1: 10, 2: 8, 3: 5}
DEFAULT_DETAIL = {1: 4, 2: 3, 3: 2}
_ALIGN_TOL = 1e-12
_WINDOW_BUDGET = 2_000_000


def default_snapshot_depth(d):
    return DEFAULT_SNAPSHOT_DEPTH.get(d, 4)


def default_detail(d):
    return DEFAULT_DETAIL.get(d, 1)


@dataclass(frozen=True)
class FlowTime:
    """Nonnegative flow time; one dyadic level per log 2."""

    t: float

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0.0:
            raise SceneryFlowError(f"flow time must be finite and >= 0, got {self.t}")

    @property
    def levels(self):
        return self.t / LOG2


def _time_value(t):
    if isinstance(t, FlowTime):
        return t.t
    t = float(t)
    if not math.isfinite(t) or t < 0.0:
        raise SceneryFlowError(f"flow time must be finite and >= 0, got {t}")
    return t


@lru_cache(maxsize=16)
def ball_fraction_grid(d, m):
    """Fraction of each depth-m grid cell inside the unit ball."""
    n = 1 << m
    h = cell_width(m)
    axes = [np.arange(n) * h - 1.0 for _ in range(d)]
    lo = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    frac = box_ball_overlap_fraction(lo, lo + h, np.zeros(d), 1.0)
    frac = frac.reshape((n,) * d)
    frac.flags.writeable = False
    return frac


@dataclass(frozen=True)
class Snapshot:
    """Unit mass on the depth-m dyadic grid of [-1, 1]^d.

    Sceneries carry support "ball": cells wholly outside B(0, 1) are zero.
    Magnification-chain states are cube-normalised and carry support
    "cube", where that restriction does not apply (a cascade sending all
    mass to one corner has an empty ball view but a well-defined orbit).

    t and x record where the view was taken; they do not affect queries.
    """

    grid: np.ndarray
    t: float = 0.0
    x: tuple = None
    support: str = "ball"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        side = grid.shape[0]
        if any(s != side for s in grid.shape) or side & (side - 1):
            raise SceneryFlowError(
                f"snapshot grid must be a dyadic cube, got shape {grid.shape}"
            )
        if np.any(grid < 0.0):
            raise SceneryFlowError("snapshot grid has negative mass")
        total = float(grid.sum())
        if abs(total - 1.0) > 1e-9:
            raise SceneryFlowError(f"snapshot mass {total} is not 1 within 1e-9")
        if self.support not in ("ball", "cube"):
            raise SceneryFlowError(f"unknown snapshot support {self.support!r}")
        if self.support == "ball":
            outside = ball_fraction_grid(grid.ndim, side.bit_length() - 1) == 0.0
            if float(grid[outside].sum()) > 1e-12:
                raise SceneryFlowError("snapshot carries mass outside the unit ball")
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)

    @property
    def d(self):
        return self.grid.ndim

    @property
    def m(self):
        return int(self.grid.shape[0]).bit_length() - 1


# ---------------------------------------------------------------------------
# grid resampling under the cell-overlap policy


def _axis_overlap(src_lo, src_w, n_src, dst_lo, dst_w, n_dst):
    """(n_src, n_dst) matrix of source-cell fractions landing in each target cell."""
    s0 = src_lo + src_w * np.arange(n_src)[:, None]
    d0 = dst_lo + dst_w * np.arange(n_dst)[None, :]
    ov = np.minimum(s0 + src_w, d0 + dst_w) - np.maximum(s0, d0)
    return np.clip(ov, 0.0, None) / src_w


def _scatter_dense(window, mats):
    g = window
    for a in mats:
        # contract the leading axis, appending the target axis at the end,
        # which restores the original axis order after d steps
        g = np.tensordot(g, a, axes=(0, 0))
    return g


def _scatter_separable(factors, mats):
    g = mats[0].T @ factors[0]
    for f, a in zip(factors[1:], mats[1:]):
        g = g[..., None] * (a.T @ f)
    return g


def _restrict_and_normalise(g, d, m, t, x):
    g = g * ball_fraction_grid(d, m)
    total = float(g.sum())
    if total <= 0.0:
        raise OutsideSupportError("no mass inside the query ball")
    return Snapshot(grid=g / total, t=float(t), x=None if x is None else tuple(x))


# ---------------------------------------------------------------------------
# sceneries


def _check_point(x, d):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (d,):
        raise SceneryFlowError(f"point has shape {x.shape}, expected ({d},)")
    if np.any(np.abs(x) > 1.0):
        raise OutOfDomainError(f"base point {x.tolist()} lies outside [-1,1]^{d}")
    return x


def _require_scale(mu, level, m):
    """Scale e^{-t} at dyadic level `level` must be resolvable m levels deep."""
    if m + level > MAX_DEPTH:
        raise ResolutionExhaustedError(
            f"depth {m} below scale level {level} needs cells at depth "
            f"{m + level}, beyond the exact-coordinate limit {MAX_DEPTH}"
        )
    if (mu.rule is None or mu._dirty()) and mu.max_materialized_depth < level:
        raise ResolutionExhaustedError(
            f"measure has no generator and is materialised to depth "
            f"{mu.max_materialized_depth}, short of scale level {level}"
        )
    rule_limit = getattr(mu.rule, "max_depth", None)
    if rule_limit is not None and level > rule_limit:
        raise ResolutionExhaustedError(
            f"generator is defined to depth {rule_limit}, short of scale "
            f"level {level}"
        )


def _aligned_level(t):
    j = round(t / LOG2)
    if j >= 0 and abs(t - j * LOG2) <= _ALIGN_TOL * max(1.0, t):
        return j
    return None


def _read_clamped_window(mu, depth, lo_want, side):
    """Window [lo_want, lo_want + side) at `depth`, zero outside the domain."""
    d = mu.d
    n_tot = 1 << depth
    lo = np.maximum(lo_want, 0)
    hi = np.minimum(lo_want + side, n_tot)
    if np.any(lo >= hi):
        return np.zeros((side,) * d)
    win = mu.window_masses(depth, lo, tuple(int(v) for v in hi - lo))
    if np.all(lo == lo_want) and np.all(hi == lo_want + side):
        return win
    out = np.zeros((side,) * d)
    sel = tuple(
        slice(int(lo[j] - lo_want[j]), int(hi[j] - lo_want[j])) for j in range(d)
    )
    out[sel] = win
    return out


def scenery_at(mu, x, t, m=None, detail=None):
    """The scenery of mu at x and time t as a depth-m snapshot.

    The view ball is B(x, e^{-t}); x must lie in the closed cube and the
    ball must carry mass.  At dyadic t with x on the matching dyadic grid
    the snapshot is an exact window read; otherwise source cells `detail`
    levels below the snapshot cells are scattered by the overlap policy.
    """
    t = _time_value(t)
    x = _check_point(x, mu.d)
    d = mu.d
    if m is None:
        m = default_snapshot_depth(d)

    j = _aligned_level(t)
    if j is not None:
        h = cell_width(m + j)
        offs = (x + 1.0) / h
        c = np.rint(offs)
        if np.all(np.abs(offs - c) <= 1e-9):
            _require_scale(mu, j, m)
            lo_want = c.astype(np.int64) - (1 << (m - 1))
            win = _read_clamped_window(mu, m + j, lo_want, 1 << m)
            return _restrict_and_normalise(win, d, m, t, x)

    return _scenery_group(mu, x, [t], m, detail)[0]


def scenery_sequence(mu, x, times, m=None, detail=None):
    """Sceneries at several times, sharing one window read per dyadic level."""
    x = _check_point(x, mu.d)
    if m is None:
        m = default_snapshot_depth(mu.d)
    ts = [_time_value(t) for t in times]
    groups = {}
    for i, t in enumerate(ts):
        groups.setdefault(max(0, math.ceil(t / LOG2 - _ALIGN_TOL)), []).append(i)
    out = [None] * len(ts)
    for g, idxs in sorted(groups.items()):
        snaps = _scenery_group(mu, x, [ts[i] for i in idxs], m, detail, level=g)
        for i, s in zip(idxs, snaps):
            out[i] = s
    return out


def _scenery_group(mu, x, ts, m, detail, level=None):
    """Sceneries for times within one dyadic level, from one source window."""
    d = mu.d
    if level is None:
        level = max(0, math.ceil(max(ts) / LOG2 - _ALIGN_TOL))
    _require_scale(mu, level, m)
    if detail is None:
        detail = default_detail(d)
    if mu.rule is None or mu._dirty():
        # tree walks are budgeted; shrink the source window to fit.  The
        # window spans two scale-level cells in the interior (one at t=0,
        # where the domain clamp halves it), so its side is 2^{m+detail+1}.
        max_side = int(_WINDOW_BUDGET ** (1.0 / d))
        span_pow = m + 1 if level >= 1 else m
        cap = int(math.log2(max(max_side - 1, 1))) - span_pow
        detail = max(0, min(detail, cap))
    n = min(m + detail + level, MAX_DEPTH)

    h_n = cell_width(n)
    r_window = 2.0 ** (-(level - 1)) if level > 0 else 1.0
    lo_want = np.floor((x - r_window + 1.0) / h_n).astype(np.int64)
    hi_want = np.floor((x + r_window + 1.0) / h_n).astype(np.int64) + 1
    lo = np.maximum(lo_want, 0)
    hi = np.minimum(hi_want, 1 << n)
    shape = tuple(int(v) for v in hi - lo)

    factors = mu.separable_factors(n, lo, shape)
    window = None
    if factors is None:
        window = mu.window_masses(n, lo, shape)

    h_m = cell_width(m)
    snaps = []
    for t in ts:
        r = math.exp(-t)
        mats = [
            _axis_overlap(
                (-1.0 + lo[jj] * h_n - x[jj]) / r, h_n / r, shape[jj], -1.0, h_m, 1 << m
            )
            for jj in range(d)
        ]
        if factors is not None:
            g = _scatter_separable(factors, mats) * mu.total_mass
        else:
            g = _scatter_dense(window, mats)
        snaps.append(_restrict_and_normalise(g, d, m, t, x))
    return snaps


# ---------------------------------------------------------------------------
# the zoom semigroup on snapshots


def magnify(nu, t, m=None):
    """S_t: restrict to B(0, e^{-t}), rescale onto B(0, 1), renormalise.

    Accepts a DyadicMeasure (viewed from the origin) or a Snapshot.  For a
    snapshot the output keeps its depth, so the grid must resolve the
    target scale: e^{-t} may not drop below one source cell.
    """
    if isinstance(nu, DyadicMeasure):
        return scenery_at(nu, np.zeros(nu.d), t, m)
    t = _time_value(t)
    d, m_in = nu.d, nu.m
    if m is not None and m != m_in:
        raise SceneryFlowError("snapshot magnification keeps the input depth")
    if t == 0.0:
        return nu
    h = cell_width(m_in)
    r = math.exp(-t)
    if r < h * (1.0 - 1e-12):
        raise ResolutionExhaustedError(
            f"scale e^-t = {r:.3g} is below one grid cell ({h:.3g}) at depth {m_in}"
        )
    n_cells = 1 << m_in
    j = _aligned_level(t)
    if j is not None and j <= m_in - 1:
        half = 1 << (m_in - 1 - j)
        sel = (slice((n_cells >> 1) - half, (n_cells >> 1) + half),) * d
        g = nu.grid[sel].copy()
        for axis in range(d):
            g = np.repeat(g, 1 << j, axis=axis)
        g /= float(1 << (j * d))
    else:
        mats = [_axis_overlap(-1.0, h, n_cells, -r, r * h, n_cells) for _ in range(d)]
        g = _scatter_dense(nu.grid, mats)
    return _restrict_and_normalise(g, d, m_in, nu.t + t, nu.x)


# ---------------------------------------------------------------------------
# translation


def translate(mu, x, depth=None):
    """T_x mu, resampled onto the dyadic grid at the working depth.

    Output cells C carry mu(C + x); mass shifted outside the cube is lost,
    so the result is a sub-probability measure (rule-free, materialised to
    the working depth), and it is the zero measure when everything leaves.
    x = 0 returns an identical copy.
    """
    d = mu.d
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (d,):
        raise SceneryFlowError(f"shift has shape {x.shape}, expected ({d},)")
    if np.all(x == 0.0):
        return DyadicMeasure(
            d=d,
            masses=dict(mu.masses),
            rule=mu.rule,
            kind=mu.kind,
            seed=mu.seed,
            declared_depth=mu.declared_depth,
            meta=dict(mu.meta),
        )
    if depth is None:
        depth = max(
            mu.declared_depth, mu.max_materialized_depth, default_snapshot_depth(d)
        )
        depth = min(depth, int(math.log2(_WINDOW_BUDGET ** (1.0 / d))))
    n = 1 << depth
    h = cell_width(depth)
    mats = [_axis_overlap(-1.0 - x[jj], h, n, -1.0, h, n) for jj in range(d)]
    factors = mu.separable_factors(depth, np.zeros(d, dtype=np.int64), (n,) * d)
    if factors is not None:
        g = _scatter_separable(factors, mats) * mu.total_mass
    else:
        window = mu.window_masses(depth, np.zeros(d, dtype=np.int64), (n,) * d)
        g = _scatter_dense(window, mats)
    return _measure_from_grid(
        g, d, kind="translated", meta={"shift": tuple(float(v) for v in x)}
    )


def _measure_from_grid(grid, d, kind, meta):
    """Materialised rule-free measure whose depth-n window equals `grid`.

    Ancestor masses are block sums; every child of a nonzero cell is stored
    so tree walks see complete sibling sets.
    """
    depth = int(grid.shape[0]).bit_length() - 1
    levels = [np.asarray(grid, dtype=np.float64)]
    for _ in range(depth):
        g = levels[-1]
        for axis in range(d):
            s = g.shape
            g = g.reshape(s[:axis] + (s[axis] // 2, 2) + s[axis + 1 :]).sum(
                axis=axis + 1
            )
        levels.append(g)
    levels.reverse()  # levels[l] is the depth-l block-sum grid
    masses = {(): float(levels[0].reshape(-1)[0])}
    for lev in range(depth):
        parents = levels[lev]
        kids = levels[lev + 1]
        for flat in np.flatnonzero(parents > 0.0):
            idx = np.unravel_index(flat, parents.shape)
            ppath = indices_to_path(np.asarray(idx, dtype=np.int64), lev, d)
            for c in range(1 << d):
                kidx = tuple((idx[j] << 1) + ((c >> j) & 1) for j in range(d))
                masses[ppath + (c,)] = float(kids[kidx])
    return DyadicMeasure(
        d=d, masses=masses, rule=None, kind=kind, declared_depth=depth, meta=meta
    )


# ---------------------------------------------------------------------------
# the magnification chain


@dataclass(frozen=True)
class MeasurePoint:
    """A cube-normalised measure with a tracked point it charges."""

    measure: DyadicMeasure
    point: tuple

    def __post_init__(self):
        x = _check_point(self.point, self.measure.d)
        object.__setattr__(self, "point", tuple(float(v) for v in x))
        if self.measure.cell_mass(_containing_digit(x)) <= 0.0:
            raise UndefinedMagnificationError(
                f"the depth-1 cell of {self.point} carries no mass"
            )


def _containing_digit(x):
    # upper halves are half-open (0, 1], so the origin belongs below
    return (int(sum((1 << j) for j in range(len(x)) if x[j] > 0.0)),)


def cp_magnify(mp):
    """One magnification step: zoom the depth-1 cell of the point onto the cube."""
    mu = mp.measure
    x = np.asarray(mp.point)
    digit = _containing_digit(x)
    cm = mu.cell_mass(digit)
    if cm <= 0.0:
        raise UndefinedMagnificationError(
            f"the depth-1 cell of {mp.point} carries no mass"
        )
    masses = {p[1:]: v / cm for p, v in mu.masses.items() if p[:1] == digit}
    if mu.rule is None:
        rule = None
    elif isinstance(mu.rule, ShiftedRule):
        rule = ShiftedRule(mu.rule.base, mu.rule.prefix + digit)
    else:
        rule = ShiftedRule(mu.rule, digit)
    out = DyadicMeasure(
        d=mu.d,
        masses=masses,
        rule=rule,
        kind=mu.kind,
        seed=mu.seed,
        declared_depth=max(mu.declared_depth - 1, 0),
        meta=dict(mu.meta),
    )
    bits = np.array([(digit[0] >> j) & 1 for j in range(mu.d)], dtype=np.float64)
    new_x = 2.0 * x - (2.0 * bits - 1.0)
    return MeasurePoint(measure=out, point=tuple(new_x))


def orbit_snapshot(mu, m=None):
    """Depth-m leaf table of a cube-normalised measure, as a cube snapshot."""
    d = mu.d
    if m is None:
        m = default_snapshot_depth(d)
    grid = mu.window_masses(m, np.zeros(d, dtype=np.int64), (1 << m,) * d)
    total = float(grid.sum())
    if total <= 0.0:
        raise OutsideSupportError("measure carries no mass")
    return Snapshot(grid=grid / total, t=0.0, x=None, support="cube")


def empirical_cp(mu, x, n_steps, m=None):
    """Equal-weight distribution over the first n_steps orbit snapshots."""
    from .stats import EmpiricalDistribution

    if n_steps < 1:
        raise SceneryFlowError(f"orbit length must be >= 1, got {n_steps}")
    if m is None:
        m = default_snapshot_depth(mu.d)
    entries = []
    try:
        mp = MeasurePoint(measure=mu, point=tuple(np.asarray(x, dtype=np.float64)))
        for k in range(n_steps):
            entries.append((orbit_snapshot(mp.measure, m), 1.0 / n_steps))
            if k + 1 < n_steps:
                mp = cp_magnify(mp)
    except UndefinedMagnificationError as exc:
        raise TruncatedOrbitError(
            f"orbit stopped after {len(entries)} of {n_steps} steps: {exc}",
            achieved_length=len(entries),
        ) from exc
    return EmpiricalDistribution(
        entries=entries,
        provenance={
            "x": tuple(float(v) for v in np.asarray(x).reshape(-1)),
            "N": n_steps,
        },
    )


# ---------------------------------------------------------------------------
# snapshot CSV dump


def snapshot_to_csv(snap):
    """CSV dump: a metadata header (d, m, t, x), then path,mass rows.

    Paths are dot-joined child digits from the coarsest level down; only
    cells with positive mass are written.  Support is not written; the
    loader infers it from where the mass sits.
    """
    x_field = "" if snap.x is None else "|".join(repr(float(v)) for v in snap.x)
    lines = [
        "d,m,t,x",
        f"{snap.d},{snap.m},{snap.t!r},{x_field}",
        "path,mass",
    ]
    flat = snap.grid.reshape(-1)
    for flat_idx in np.flatnonzero(flat):
        idx = np.unravel_index(flat_idx, snap.grid.shape)
        path = indices_to_path(np.asarray(idx, dtype=np.int64), snap.m, snap.d)
        lines.append(f"{'.'.join(str(c) for c in path)},{float(flat[flat_idx])!r}")
    return "\n".join(lines) + "\n"


def snapshot_from_csv(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or lines[0] != "d,m,t,x" or lines[2] != "path,mass":
        raise SceneryFlowError("malformed snapshot CSV header")
    d_s, m_s, t_s, x_s = lines[1].split(",")
    d, m, t = int(d_s), int(m_s), float(t_s)
    x = None if x_s == "" else tuple(float(v) for v in x_s.split("|"))
    grid = np.zeros((1 << m,) * d)
    for ln in lines[3:]:
        path_s, mass_s = ln.split(",")
        digits = [int(c) for c in path_s.split(".")]
        if len(digits) != m:
            raise SceneryFlowError(f"path {path_s} does not have depth {m}")
        idx = [0] * d
        for dig in digits:
            for j in range(d):
                idx[j] = (idx[j] << 1) | ((dig >> j) & 1)
        grid[tuple(idx)] = float(mass_s)
    in_ball = ball_fraction_grid(d, m) > 0.0
    support = "ball" if float(grid[~in_ball].sum()) <= 1e-12 else "cube"
    return Snapshot(grid=grid, t=t, x=x, support=support)
