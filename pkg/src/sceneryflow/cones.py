"""Cones around subspaces, their masses under snapshots, and the critical
volume fraction.

The cone with vertex x, radius r, core subspace V and opening alpha is

    X(x, r, V, alpha) = {y in B(x, r): 0 < |y - x|, dist(y - x, V) < alpha |y - x|}

with a strict inequality and the vertex excluded.  Snapshot masses of cones
are evaluated by the fixed subcell point cloud: each finest cell contributes
its mass times the fraction of its 64 probe points inside the cone.  For a
session parameter k the core subspaces range over the Grassmannian of
(d - k)-planes.

Minimisation over V runs a coarse net (angles in d=2, a Fibonacci sphere in
d=3, seeded random frames otherwise) followed by local refinement with step
halving.  Singular snapshots make the net objective exactly flat near its
minimum, so the net stage reduces a tied plateau to its centre; every other
argmin is index-ordered with ties to the lower index.  Results are
deterministic, and sequential callers can pass the previous minimiser as a
warm-start candidate since cones do not change under magnification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc

from .errors import DegenerateMeasureError, InvalidSubspaceError, SceneryFlowError
from .geometry import cell_width, subcell_offsets

FRAME_ORTHO_TOL = 1e-10


class Subspace:
    """A linear subspace given by an orthonormal frame of column vectors."""

    def __init__(self, frame):
        frame = np.array(frame, dtype=np.float64)
        if frame.ndim != 2 or frame.shape[1] > frame.shape[0]:
            raise InvalidSubspaceError(f"frame shape {frame.shape} is not (d, dim)")
        gram = frame.T @ frame
        if np.max(np.abs(gram - np.eye(frame.shape[1]))) > FRAME_ORTHO_TOL:
            raise InvalidSubspaceError("frame is not orthonormal")
        frame.flags.writeable = False
        self.frame = frame

    @property
    def d(self):
        return self.frame.shape[0]

    @property
    def dim(self):
        return self.frame.shape[1]

    @staticmethod
    def axis_spans(d, axes):
        axes = tuple(axes)
        f = np.zeros((d, len(axes)))
        for i, a in enumerate(axes):
            f[a, i] = 1.0
        return Subspace(f)

    @staticmethod
    def line_at_angle(theta):
        return Subspace(np.array([[math.cos(theta)], [math.sin(theta)]]))

    @staticmethod
    def plane_with_normal(normal):
        normal = np.asarray(normal, dtype=np.float64)
        normal = normal / np.linalg.norm(normal)
        d = normal.shape[0]
        _, _, vt = np.linalg.svd(normal[None, :])
        return Subspace(vt[1:].T)

    @staticmethod
    def random(d, dim, seed):
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.normal(size=(d, dim)))
        return Subspace(q * np.sign(np.diag(r)))

    def angle(self):
        """Angle in [0, pi) of a line in the plane."""
        if self.d != 2 or self.dim != 1:
            raise InvalidSubspaceError("angle is defined for lines in d=2")
        v = self.frame[:, 0]
        return math.atan2(v[1], v[0]) % math.pi

    def distance(self, points):
        """Euclidean distance from each row of `points` to the subspace."""
        points = np.asarray(points, dtype=np.float64)
        coeff = points @ self.frame
        residual = points - coeff @ self.frame.T
        return np.linalg.norm(residual, axis=-1)

    def __repr__(self):
        return f"Subspace(d={self.d}, dim={self.dim})"


@dataclass(frozen=True)
class SearchParams:
    """Controls the minimisation net; `warm` seeds the candidate list."""

    net_size: int = None
    refine_steps: int = 20
    seed: int = 0
    warm: Subspace = None


def cone_indicator(points, vertex, radius, subspace, alpha):
    """Strict membership of points in X(vertex, radius, V, alpha)."""
    points = np.asarray(points, dtype=np.float64)
    y = points - np.asarray(vertex, dtype=np.float64)
    norms = np.linalg.norm(y, axis=-1)
    dist = subspace.distance(y)
    return (norms > 0.0) & (norms <= radius) & (dist < alpha * norms)


# ---------------------------------------------------------------------------
# cached point-cloud structures over snapshot grids


def _grid_of(nu):
    grid = nu.grid if hasattr(nu, "grid") else np.asarray(nu, dtype=np.float64)
    d = grid.ndim
    side = grid.shape[0]
    if any(s != side for s in grid.shape) or side & (side - 1):
        raise SceneryFlowError(f"snapshot grid must be a square power of two, got {grid.shape}")
    return grid, d, side.bit_length() - 1


def _probe_points(d, m):
    """All subcell probe points of the depth-m grid, with their flat cell index."""
    side = 1 << m
    h = cell_width(m)
    offs = subcell_offsets(d) * h  # (64, d) within-cell positions
    axes = [(-1.0 + np.arange(side) * h) for _ in range(d)]
    corners = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    pts = corners[:, None, :] + offs[None, :, :]
    cell_idx = np.repeat(np.arange(corners.shape[0], dtype=np.int64), offs.shape[0])
    return pts.reshape(-1, d), cell_idx


def _eligible(pts):
    """Probe points outside the closed unit ball (or at the origin) never
    lie in any X(0, 1, V, alpha); drop them.  Cell masses are spread over a
    cell's remaining eligible points so the ball restriction does not leak
    mass out of the evaluation."""
    norms = np.linalg.norm(pts, axis=1)
    return (norms > 0.0) & (norms <= 1.0)


def _inverse_counts(cell_idx, n_cells):
    counts = np.bincount(cell_idx, minlength=n_cells)
    return 1.0 / counts[cell_idx]


@lru_cache(maxsize=6)
def _structure_2d(m):
    """Sorted probe angles for unit-ball cone evaluation on a depth-m grid."""
    pts, cell_idx = _probe_points(2, m)
    keep = _eligible(pts)
    cell_idx = cell_idx[keep]
    phi = np.arctan2(pts[keep, 1], pts[keep, 0]) % math.pi
    order = np.argsort(phi, kind="stable")
    inv = _inverse_counts(cell_idx, (1 << m) ** 2)
    return phi[order], cell_idx[order].astype(np.int32), inv[order]


@lru_cache(maxsize=6)
def _structure_nd(d, m):
    """Unit directions of in-ball probe points for d >= 3 grids."""
    pts, cell_idx = _probe_points(d, m)
    keep = _eligible(pts)
    cell_idx = cell_idx[keep]
    norms = np.linalg.norm(pts[keep], axis=1)
    u = pts[keep] / norms[:, None]
    inv = _inverse_counts(cell_idx, (1 << m) ** d)
    return np.ascontiguousarray(u, dtype=np.float64), cell_idx.astype(np.int32), inv


def _sorted_weight_prefix(grid, cell_idx_sorted, inv_sorted):
    # Normalising by the captured total makes the result the cone's
    # fraction of the in-ball snapshot mass, so alpha = 1 gives exactly 1
    # and boundary cells whose probe points all fell outside do not bias
    # the estimate downward.
    w = grid.reshape(-1)[cell_idx_sorted] * inv_sorted
    total = w.sum()
    if total <= 0.0:
        raise DegenerateMeasureError("snapshot has no mass inside the unit ball")
    prefix = np.concatenate([[0.0], np.cumsum(w)])
    return prefix / total


def _probe_weights_nd(grid, cell_idx, inv):
    w = grid.reshape(-1)[cell_idx] * inv
    total = w.sum()
    if total <= 0.0:
        raise DegenerateMeasureError("snapshot has no mass inside the unit ball")
    return w / total


def _angular_mass(phi_sorted, prefix, thetas, half_width):
    """Total weight with angle (mod pi) strictly inside theta +- half_width."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64)) % math.pi
    lo = (thetas - half_width) % math.pi
    hi = (thetas + half_width) % math.pi
    total = prefix[-1]
    i_lo = np.searchsorted(phi_sorted, lo, side="right")
    i_hi = np.searchsorted(phi_sorted, hi, side="left")
    inside = prefix[i_hi] - prefix[i_lo]
    return np.where(lo < hi, inside, total + inside)


# ---------------------------------------------------------------------------
# cone masses


def cone_mass(nu, subspace, alpha):
    """Snapshot mass of X(0, 1, V, alpha) under the 64-point policy."""
    grid, d, m = _grid_of(nu)
    if subspace.d != d or not 1 <= subspace.dim <= d - 1:
        raise InvalidSubspaceError(
            f"core subspace must be a proper subspace of R^{d}, got {subspace!r}"
        )
    if not 0.0 < alpha <= 1.0:
        raise SceneryFlowError(f"opening alpha must be in (0, 1], got {alpha}")
    if d == 2:
        phi_sorted, cell_idx, inv = _structure_2d(m)
        prefix = _sorted_weight_prefix(grid, cell_idx, inv)
        return float(
            _angular_mass(phi_sorted, prefix, subspace.angle(), math.asin(alpha))[0]
        )
    u, cell_idx, inv = _structure_nd(d, m)
    w = _probe_weights_nd(grid, cell_idx, inv)
    proj_sq = np.einsum("ij,ij->i", u @ subspace.frame, u @ subspace.frame)
    inside = proj_sq > 1.0 - alpha * alpha  # dist(u, V) < alpha, strictly
    return float(w[inside].sum())


def fibonacci_hemisphere(n):
    """n roughly even directions on the open upper hemisphere."""
    i = np.arange(n)
    z = (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    g = math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(i * g), r * np.sin(i * g), z], axis=1)


def _vector_masses(u, w, vectors, threshold_sq, above):
    """Weights of probe directions with (u . v)^2 above/below a threshold.

    Chunked so the (points x candidates) product stays inside a fixed
    memory budget.
    """
    vectors = np.atleast_2d(vectors)
    out = np.empty(vectors.shape[0])
    chunk = max(1, int(8_000_000 // max(u.shape[0], 1)))
    for a in range(0, vectors.shape[0], chunk):
        dots = u @ vectors[a : a + chunk].T
        np.square(dots, out=dots)
        mask = dots > threshold_sq if above else dots < threshold_sq
        out[a : a + chunk] = w @ mask
    return out


def _tangent_basis(v):
    e = np.zeros(3)
    e[int(np.argmin(np.abs(v)))] = 1.0
    t1 = np.cross(v, e)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(v, t1)
    return t1, t2


def min_cone_mass(nu, k, alpha, search=None):
    """Minimise cone mass over (d-k)-plane cores V; returns (V*, value).

    Deterministic: the net is fixed (plus the warm-start candidate), a
    tied net minimum reduces to the plateau centre, and local refinement
    halves a fixed step, moving only on a real improvement.
    """
    grid, d, m = _grid_of(nu)
    if not 1 <= k <= d - 1:
        raise SceneryFlowError(f"need 1 <= k <= d-1, got k={k}, d={d}")
    if not 0.0 < alpha <= 1.0:
        raise SceneryFlowError(f"opening alpha must be in (0, 1], got {alpha}")
    search = search or SearchParams()
    dim_v = d - k

    if d == 2:
        phi_sorted, cell_idx, inv = _structure_2d(m)
        prefix = _sorted_weight_prefix(grid, cell_idx, inv)
        half = math.asin(alpha)
        b = search.net_size or 256
        thetas = np.arange(b) * math.pi / b
        net_vals = _angular_mass(phi_sorted, prefix, thetas, half)
        theta = _plateau_midpoint_circular(thetas, net_vals, math.pi)
        val = float(_angular_mass(phi_sorted, prefix, theta, half)[0])
        net_min = float(net_vals.min())
        if val > net_min + _TIE_TOL:  # curved basin: the midpoint lost
            theta, val = float(thetas[int(np.argmin(net_vals))]), net_min
        if search.warm is not None:
            warm_theta = search.warm.angle()
            warm_val = float(_angular_mass(phi_sorted, prefix, warm_theta, half)[0])
            if warm_val < val - _TIE_TOL:
                theta, val = warm_theta, warm_val
        step = math.pi / b
        for _ in range(search.refine_steps):
            cand = np.array([theta, theta - step / 2.0, theta + step / 2.0])
            cv = _angular_mass(phi_sorted, prefix, cand, half)
            j = int(np.argmin(cv))
            if cv[j] < val - _TIE_TOL:  # move only on a real improvement
                theta, val = float(cand[j]) % math.pi, float(cv[j])
            step /= 2.0
        return Subspace.line_at_angle(theta), val

    u, cell_idx, inv = _structure_nd(d, m)
    w = _probe_weights_nd(grid, cell_idx, inv)

    if d == 3:
        b = search.net_size or 1024
        net = fibonacci_hemisphere(b)
        # dim_v = 2: V is a plane with normal n, dist(u, V) = |u . n|
        # dim_v = 1: V is a line v, dist(u, V)^2 = 1 - (u . v)^2
        if dim_v == 2:
            threshold, above = alpha * alpha, False
            to_subspace = Subspace.plane_with_normal
        else:
            threshold, above = 1.0 - alpha * alpha, True
            to_subspace = lambda v: Subspace(v[:, None] / np.linalg.norm(v))
        vals = _vector_masses(u, w, net, threshold, above)
        # tied minima (flat basins are exact for singular snapshots): take
        # the basin's centre. v and -v name the same direction, so average
        # sign-free via the orientation matrix's top eigenvector.
        tied = net[vals <= vals.min() + _TIE_TOL]
        _, vecs = np.linalg.eigh(tied.T @ tied)
        v = vecs[:, -1]
        if v @ tied[0] < 0.0:
            v = -v
        val = float(_vector_masses(u, w, v, threshold, above)[0])
        net_min = float(vals.min())
        if val > net_min + _TIE_TOL:
            v, val = net[int(np.argmin(vals))], net_min
        if search.warm is not None:
            warm_v = (
                _plane_normal(search.warm) if dim_v == 2 else search.warm.frame[:, 0]
            )
            warm_val = float(_vector_masses(u, w, warm_v, threshold, above)[0])
            if warm_val < val - _TIE_TOL:
                v, val = warm_v, warm_val
        step = 2.0 / math.sqrt(b)
        for _ in range(search.refine_steps):
            t1, t2 = _tangent_basis(v)
            cand = np.vstack(
                [v + step * t1, v - step * t1, v + step * t2, v - step * t2]
            )
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cv = _vector_masses(u, w, cand, threshold, above)
            j = int(np.argmin(cv))
            if cv[j] < val - _TIE_TOL:
                v, val = cand[j], float(cv[j])
            step /= 2.0
        return to_subspace(v), val

    # general d: seeded random frames plus perturbation refinement
    b = search.net_size or 512
    rng = np.random.default_rng(search.seed)
    frames = [_ordered_qr(rng.normal(size=(d, dim_v))) for _ in range(b)]
    if search.warm is not None:
        frames.append(search.warm.frame)
    vals = np.array([_frame_mass(u, w, f, alpha) for f in frames])
    best = int(np.argmin(vals))
    f, val = frames[best].copy(), float(vals[best])
    step = 0.5
    for _ in range(search.refine_steps):
        cands = [f]
        for _ in range(4):
            cands.append(_ordered_qr(f + step * rng.normal(size=f.shape)))
        cv = np.array([_frame_mass(u, w, c, alpha) for c in cands])
        j = int(np.argmin(cv))
        f, val = cands[j], float(cv[j])
        step /= 2.0
    return Subspace(f), val


# masses within this of each other count as tied; well below one probe
# point's weight at any realistic depth, well above prefix-sum rounding
_TIE_TOL = 1e-10


def _plateau_midpoint_circular(thetas, vals, period):
    """Midpoint of the longest circular run of minimum-tied net values.

    Singular snapshots produce exactly flat minimal plateaus (a cone that
    misses the support keeps missing it over a range of angles); float
    dust in the prefix sums must not pick an arbitrary plateau edge.  A
    unique minimum reduces to plain argmin.  Ties between equally long
    runs go to the lower start index.
    """
    tied = vals <= vals.min() + _TIE_TOL
    n = len(tied)
    if tied.all():
        return float(thetas[0])
    ext = np.concatenate([tied, tied])  # unroll the circle
    best_len, best_start, run = 0, 0, 0
    for i in range(2 * n):
        if ext[i]:
            run += 1
            if run > best_len and i < n + run - 1:
                best_len, best_start = run, i - run + 1
        else:
            run = 0
    start_theta = thetas[best_start % n]
    return float((start_theta + (best_len - 1) / 2.0 * (period / n)) % period)


def _plane_normal(subspace):
    _, _, vt = np.linalg.svd(subspace.frame.T)
    return vt[-1]


def _ordered_qr(mat):
    q, r = np.linalg.qr(mat)
    return q * np.sign(np.diag(r))


def _frame_mass(u, w, frame, alpha):
    proj = u @ frame
    proj_sq = np.einsum("ij,ij->i", proj, proj)
    return float(w[proj_sq > 1.0 - alpha * alpha].sum())


# ---------------------------------------------------------------------------
# the critical volume fraction


def epsilon_critical(d, k, alpha, method=None, n=1_000_000, seed=0):
    """Volume fraction of X(0, 1, V, alpha) in the unit ball, dim V = d - k.

    The value does not depend on V.  Writing a uniform direction u on the
    sphere as (u_V, u_perp), the squared perpendicular norm |u_perp|^2 is
    Beta(k/2, (d-k)/2), so the fraction is the regularised incomplete beta
    I_{alpha^2}(k/2, (d-k)/2); in d=2 this is (2/pi) arcsin(alpha).  That
    closed form is the quadrature method, the default for d <= 3; larger d
    defaults to Monte Carlo (see epsilon_critical_mc for the error bar).
    """
    _validate_cone_params(d, k, alpha)
    if method is None:
        method = "quadrature" if d <= 3 else "monte-carlo"
    if method == "quadrature":
        return float(betainc(k / 2.0, (d - k) / 2.0, alpha * alpha))
    if method == "monte-carlo":
        value, _ = epsilon_critical_mc(d, k, alpha, n=n, seed=seed)
        return value
    raise SceneryFlowError(f"unknown method {method!r}")


def epsilon_critical_mc(d, k, alpha, n=1_000_000, seed=0, frame=None):
    """Monte Carlo estimate of epsilon_critical with its standard error.

    frame: optional (d, d-k) orthonormal core V; default is the span of
    the last d-k coordinate axes.
    """
    _validate_cone_params(d, k, alpha)
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = int(n)
    while remaining > 0:
        batch = min(remaining, 2_000_000)
        u = rng.normal(size=(batch, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        if frame is None:
            dist_sq = np.sum(u[:, :k] ** 2, axis=1)
        else:
            proj = u @ np.asarray(frame, dtype=np.float64)
            dist_sq = 1.0 - np.einsum("ij,ij->i", proj, proj)
        hits += int(np.count_nonzero(dist_sq < alpha * alpha))
        remaining -= batch
    p = hits / n
    return p, math.sqrt(max(p * (1.0 - p), 1e-12) / n)


def _validate_cone_params(d, k, alpha):
    if not 1 <= k <= d - 1:
        raise SceneryFlowError(f"need 1 <= k <= d-1, got k={k}, d={d}")
    if not 0.0 < alpha <= 1.0:
        raise SceneryFlowError(f"opening alpha must be in (0, 1], got {alpha}")
