"""Cone-vacancy tests, the sufficient criterion for k-rectifiability.

A set E is k-rectifiable when, around every point, some (d-k)-plane
core V stays clear of E inside the cone X(x, r, V, alpha).  Two finite
surrogates of that criterion live here.  For point clouds the test runs
at a fixed scale r tied to the sampling density: below the nearest
neighbor spacing every point trivially has an empty cone, so r is
floored at three mean nearest-neighbor distances unless the caller
knows better.  For snapshots the set is the numerical support (cells
above a mass floor) and the cone sits at the origin with radius one.

Both tests reduce to the same search: over a deterministic net of
candidate cores, maximise the margin

    margin(V) = min over unit directions u of dist(u, V),

where the directions are (y - x)/|y - x| for cloud points inside the
ball, or cell centers of the support.  A core is vacant exactly when
its margin reaches alpha, because membership in the cone is the strict
inequality dist(y - x, V) < alpha |y - x|.  The net is tried axis
spans first so symmetric data returns coordinate subspaces exactly;
local refinement then climbs the margin with halving steps.

The fixed-scale test can report vacancy for sets that are rectifiable
only below r (a false positive of the surrogate, not of the search);
results are tied to the reported r.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cones import (
    Subspace,
    _grid_of,
    _ordered_qr,
    _tangent_basis,
    _validate_cone_params,
    cone_indicator,
    fibonacci_hemisphere,
)
from .errors import InvalidConfigError, OutsideSupportError
from .geometry import cell_width

_TIE = 1e-12
_CHUNK = 8_000_000

DEFAULT_NN_FACTOR = 3.0


@dataclass(frozen=True)
class PointCloud:
    """Finite set E in R^d with the scale floor for vacancy tests.

    r_min defaults to three mean nearest-neighbor distances, the
    resolution the sampling actually supports; clouds of a single point
    have no neighbor spacing and need an explicit r_min before any
    fixed-scale test can run.
    """

    d: int
    points: np.ndarray
    r_min: float = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None] if self.d == 1 else pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.d:
            raise InvalidConfigError(
                f"points of shape {np.shape(self.points)} do not sit in R^{self.d}"
            )
        if pts.shape[0] == 0:
            raise InvalidConfigError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidConfigError("point cloud has non-finite coordinates")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.r_min is not None:
            r_min = float(self.r_min)
            if not r_min > 0.0:
                raise InvalidConfigError(f"r_min = {r_min} must be positive")
            object.__setattr__(self, "r_min", r_min)
        elif pts.shape[0] >= 2:
            nn = cKDTree(pts).query(pts, k=2)[0][:, 1]
            object.__setattr__(
                self, "r_min", DEFAULT_NN_FACTOR * float(nn.mean())
            )

    @property
    def n(self):
        return self.points.shape[0]


# ---------------------------------------------------------------------------
# margin evaluation and the core search


def _min_abs_dot(units, vecs):
    """Per candidate vector v, min over rows u of |u . v|, chunked."""
    vecs = np.atleast_2d(vecs)
    out = np.empty(vecs.shape[0])
    chunk = max(1, int(_CHUNK // max(units.shape[0], 1)))
    for a in range(0, vecs.shape[0], chunk):
        dots = np.abs(units @ vecs[a : a + chunk].T)
        out[a : a + chunk] = dots.min(axis=0)
    return out


def _max_sq_dot(units, vecs):
    vecs = np.atleast_2d(vecs)
    out = np.empty(vecs.shape[0])
    chunk = max(1, int(_CHUNK // max(units.shape[0], 1)))
    for a in range(0, vecs.shape[0], chunk):
        dots = units @ vecs[a : a + chunk].T
        np.square(dots, out=dots)
        out[a : a + chunk] = dots.max(axis=0)
    return out


def _canonical_core(d, dim_v):
    return Subspace.axis_spans(d, range(d - dim_v, d))


def _axis_normals(d):
    return np.eye(d)


def _search_core(units, d, dim_v, net_size, refine_steps, seed):
    """Maximise margin(V) = min_u dist(u, V) over cores V in G(d, dim_v).

    Deterministic: a fixed net (axis-aligned candidates first, so ties
    resolve to coordinate subspaces), then halving local steps that move
    only on a real improvement.  Returns (subspace, margin).
    """
    if units.shape[0] == 0:
        return _canonical_core(d, dim_v), math.inf

    if d == 2 and dim_v == 1:
        b = net_size or 720
        # margin of the line at angle theta, via its unit normal; the two
        # axis lines go first so they win ties
        thetas = np.concatenate(
            [[math.pi / 2.0, 0.0], np.arange(b) * math.pi / b]
        )
        normals = np.stack([-np.sin(thetas), np.cos(thetas)], axis=1)
        vals = _min_abs_dot(units, normals)
        j = int(np.argmax(vals))
        theta, best = float(thetas[j]), float(vals[j])
        step = math.pi / b
        for _ in range(refine_steps):
            cand = np.array([theta - step / 2.0, theta + step / 2.0])
            cv = _min_abs_dot(
                units, np.stack([-np.sin(cand), np.cos(cand)], axis=1)
            )
            i = int(np.argmax(cv))
            if cv[i] > best + _TIE:
                theta, best = float(cand[i]) % math.pi, float(cv[i])
            step /= 2.0
        return Subspace.line_at_angle(theta), best

    if d == 3 and dim_v in (1, 2):
        b = net_size or 1024
        net = np.vstack([_axis_normals(3), fibonacci_hemisphere(b)])
        if dim_v == 2:
            margin_of = lambda v: _min_abs_dot(units, v)
            to_subspace = Subspace.plane_with_normal
        else:
            margin_of = lambda v: np.sqrt(
                np.clip(1.0 - _max_sq_dot(units, v), 0.0, None)
            )
            to_subspace = lambda v: Subspace(
                v[:, None] / np.linalg.norm(v)
            )
        vals = margin_of(net)
        j = int(np.argmax(vals))
        v, best = net[j].copy(), float(vals[j])
        step = 2.0 / math.sqrt(b)
        for _ in range(refine_steps):
            t1, t2 = _tangent_basis(v)
            cand = np.vstack(
                [v + step * t1, v - step * t1, v + step * t2, v - step * t2]
            )
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cv = margin_of(cand)
            i = int(np.argmax(cv))
            if cv[i] > best + _TIE:
                v, best = cand[i], float(cv[i])
            step /= 2.0
        return to_subspace(v), best

    # general d: axis spans, then seeded random frames, then perturbation
    b = net_size or 512
    rng = np.random.default_rng(seed)
    frames = [
        Subspace.axis_spans(d, axes).frame
        for axes in itertools.combinations(range(d), dim_v)
    ]
    frames += [_ordered_qr(rng.normal(size=(d, dim_v))) for _ in range(b)]

    def margin_of(f):
        resid = units - (units @ f) @ f.T
        return float(np.linalg.norm(resid, axis=1).min())

    vals = [margin_of(f) for f in frames]
    j = int(np.argmax(vals))
    f, best = frames[j].copy(), vals[j]
    step = 0.5
    for _ in range(refine_steps):
        cands = [_ordered_qr(f + step * rng.normal(size=f.shape)) for _ in range(4)]
        cv = [margin_of(c) for c in cands]
        i = int(np.argmax(cv))
        if cv[i] > best + _TIE:
            f, best = cands[i], cv[i]
        step /= 2.0
    return Subspace(f), best


# ---------------------------------------------------------------------------
# point-cloud vacancy


def _member_index(E, x):
    x = np.asarray(x, dtype=np.float64).reshape(E.d)
    hits = np.nonzero(np.all(E.points == x, axis=1))[0]
    if hits.size == 0:
        raise OutsideSupportError("x is not a point of the cloud")
    return int(hits[0]), x


def cone_vacancy(E, x, k, alpha, r, net_size=None, refine_steps=20, seed=0):
    """Search for a core V with (E minus x) clear of X(x, r, V, alpha).

    Returns the vacant (d-k)-dimensional core with the largest clearance
    margin, or None when the net and its refinement find every candidate
    occupied.  An empty punctured ball is vacuously vacant and returns
    the span of the last d-k coordinate axes.  r may not undercut the
    cloud's scale floor.
    """
    _validate_cone_params(E.d, k, alpha)
    if E.r_min is None:
        raise InvalidConfigError(
            "point cloud has no scale floor; construct it with r_min set"
        )
    if not r >= E.r_min:
        raise InvalidConfigError(
            f"r = {r} undercuts the scale floor r_min = {E.r_min}"
        )
    _, x = _member_index(E, x)
    y = E.points - x
    norms = np.linalg.norm(y, axis=1)
    keep = (norms > 0.0) & (norms <= r)
    units = y[keep] / norms[keep, None]
    core, margin = _search_core(
        units, E.d, E.d - k, net_size, refine_steps, seed
    )
    return core if margin >= alpha else None


def is_cone_vacant(E, x, subspace, alpha, r):
    """Whether a GIVEN core keeps X(x, r, V, alpha) free of cloud points."""
    x = np.asarray(x, dtype=np.float64).reshape(E.d)
    return not bool(np.any(cone_indicator(E.points, x, r, subspace, alpha)))


def vacancy_survey(E, k, alpha, r=None, net_size=None, refine_steps=20, seed=0):
    """Per-point vacancy verdicts over the whole cloud, plus the fraction."""
    if r is None:
        r = E.r_min
    verdicts = [
        cone_vacancy(E, E.points[i], k, alpha, r, net_size, refine_steps, seed)
        is not None
        for i in range(E.n)
    ]
    return {
        "k": int(k),
        "alpha": float(alpha),
        "r": float(r),
        "r_min": float(E.r_min),
        "n_points": E.n,
        "verdicts": verdicts,
        "fraction": float(np.mean(verdicts)),
    }


# ---------------------------------------------------------------------------
# snapshot support vacancy


def default_mass_floor(d, m):
    """Numerical-support cutoff: a thousandth of a uniform cell's mass."""
    return 2.0 ** (-d * m) * 1e-3


def _support_units(nu, mass_floor):
    grid, d, m = _grid_of(nu)
    floor = default_mass_floor(d, m) if mass_floor is None else float(mass_floor)
    if floor < 0.0:
        raise InvalidConfigError(f"mass_floor = {floor} must be >= 0")
    h = cell_width(m)
    idx = np.argwhere(grid > floor)
    centers = -1.0 + (idx + 0.5) * h
    norms = np.linalg.norm(centers, axis=1)
    keep = (norms > 0.0) & (norms <= 1.0)
    return centers[keep] / norms[keep, None], d


def support_vacancy(nu, k, alpha, mass_floor=None, net_size=None, refine_steps=20, seed=0):
    """Search for a core whose cone X(0, 1, V, alpha) misses the support.

    The support is the set of cell centers with mass above the floor
    (default: `default_mass_floor`).  Returns the vacant core or None.
    """
    units, d = _support_units(nu, mass_floor)
    _validate_cone_params(d, k, alpha)
    core, margin = _search_core(units, d, d - k, net_size, refine_steps, seed)
    return core if margin >= alpha else None


def is_support_vacant(nu, subspace, alpha, mass_floor=None):
    """Whether a GIVEN core's cone misses the numerical support."""
    units, d = _support_units(nu, mass_floor)
    if subspace.d != d:
        raise InvalidConfigError(
            f"core lives in R^{subspace.d}, snapshot in R^{d}"
        )
    if units.shape[0] == 0:
        return True
    return bool(subspace.distance(units).min() >= alpha)
