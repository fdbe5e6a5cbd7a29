"""Dyadic cell geometry on [-1, 1]^d and exact overlap kernels.

Conventions used throughout the package:

* The root cube is [-1, 1]^d.  A cell at depth n has side 2^(1-n) and is
  addressed either by a path (tuple of child indices in {0, .., 2^d - 1},
  bit j of a child index selects the upper half along axis j) or by a
  vector of per-axis integer indices at that depth.
* Cells are treated as half-open boxes, (lo, hi] along every axis, except
  that the lower domain boundary at -1 stays included.  Mass sitting
  exactly on a shared face therefore belongs to the cell whose upper face
  it is, which is the neighbour with the smaller child index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SceneryFlowError

# Fixed evaluation budget for sampled overlap and cone kernels.
SUBCELL_POINTS = 64

# ---------------------------------------------------------------------------
# cells, paths, indices


def cell_width(depth):
    return 2.0 ** (1 - depth)


def path_to_indices(path, d):
    """Per-axis cell indices at depth len(path) for a child-index path."""
    idx = np.zeros(d, dtype=np.int64)
    for digit in path:
        if not 0 <= digit < (1 << d):
            raise SceneryFlowError(f"child index {digit} out of range for d={d}")
        for j in range(d):
            idx[j] = (idx[j] << 1) | ((digit >> j) & 1)
    return idx


def indices_to_path(indices, depth, d):
    """Inverse of path_to_indices."""
    indices = np.asarray(indices, dtype=np.int64)
    digits = []
    for level in range(depth):
        shift = depth - 1 - level
        digit = 0
        for j in range(d):
            digit |= int((indices[j] >> shift) & 1) << j
        digits.append(digit)
    return tuple(digits)


def cell_bounds(indices, depth):
    """Lower and upper corners of cells given per-axis indices (..., d)."""
    h = cell_width(depth)
    lo = -1.0 + np.asarray(indices, dtype=np.float64) * h
    return lo, lo + h


def point_to_indices(x, depth):
    """Indices of the depth-n cell owning point x under the half-open rule."""
    x = np.asarray(x, dtype=np.float64)
    scaled = (x + 1.0) * 2.0 ** (depth - 1)
    idx = np.ceil(scaled).astype(np.int64) - 1
    return np.clip(idx, 0, (1 << depth) - 1)


def point_to_path(x, depth):
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise SceneryFlowError(f"point {x} outside the domain cube")
    return indices_to_path(point_to_indices(x, depth), depth, x.shape[-1])


@dataclass(frozen=True)
class DyadicCell:
    """One dyadic cell of [-1, 1]^d, addressed by its path from the root."""

    d: int
    path: tuple

    @property
    def depth(self):
        return len(self.path)

    @property
    def indices(self):
        return path_to_indices(self.path, self.d)

    @property
    def bounds(self):
        return cell_bounds(self.indices, self.depth)

    @property
    def center(self):
        lo, hi = self.bounds
        return (lo + hi) / 2.0

    @classmethod
    def containing(cls, x, depth):
        x = np.asarray(x, dtype=np.float64)
        return cls(d=x.shape[-1], path=point_to_path(x, depth))

    def contains(self, x):
        """Half-open membership, lower domain boundary included."""
        lo, hi = self.bounds
        x = np.asarray(x, dtype=np.float64)
        above = (x > lo) | (lo <= -1.0)
        return bool(np.all(above & (x <= hi)))


def subcell_offsets(d):
    """Fixed evaluation offsets in (0,1)^d, SUBCELL_POINTS of them.

    Regular sub-lattices in d <= 3, a frozen uniform cloud beyond.
    """
    if d == 1:
        side = SUBCELL_POINTS
    elif d == 2:
        side = 8
    elif d == 3:
        side = 4
    else:
        rng = np.random.default_rng(12708741)
        return rng.random((SUBCELL_POINTS, d))
    axes = (np.arange(side) + 0.5) / side
    grids = np.meshgrid(*([axes] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


# ---------------------------------------------------------------------------
# ball volumes and box-ball overlap


def ball_volume(d, r=1.0):
    from scipy.special import gammaln

    return float(np.exp(d / 2 * np.log(np.pi) - gammaln(d / 2 + 1) + d * np.log(r)))


def _disk_corner_area(x, y, r):
    """Area of {u^2+v^2 <= r^2, u <= x, v <= y}; all arguments broadcast."""
    x, y, r = np.broadcast_arrays(x, y, r)
    r = np.maximum(np.asarray(r, dtype=np.float64), 0.0)
    xc = np.clip(x, -r, r)
    yc = np.clip(y, -r, r)
    uy = np.sqrt(np.maximum(r * r - yc * yc, 0.0))

    def g(u):
        rad = np.sqrt(np.maximum(r * r - u * u, 0.0))
        safe_r = np.where(r > 0, r, 1.0)
        ang = np.arcsin(np.clip(u / safe_r, -1.0, 1.0))
        return 0.5 * (u * rad + r * r * ang)

    def seg(a, b):
        return g(np.maximum(a, b)) - g(a)

    mlo = -uy
    mhi = np.maximum(np.minimum(uy, xc), mlo)
    mlen = mhi - mlo
    f_pos = 2.0 * seg(-r, xc) - seg(mlo, mhi) + yc * mlen
    f_neg = seg(mlo, mhi) + yc * mlen
    return np.where(yc >= 0.0, f_pos, np.maximum(f_neg, 0.0))


def _box_ball_volume_2d(lo, hi, r):
    f = _disk_corner_area
    return (
        f(hi[..., 0], hi[..., 1], r)
        - f(lo[..., 0], hi[..., 1], r)
        - f(hi[..., 0], lo[..., 1], r)
        + f(lo[..., 0], lo[..., 1], r)
    )


_GAUSS_NODES = np.polynomial.legendre.leggauss(32)


def _box_ball_volume_3d(lo, hi, r):
    """Volume of box [lo, hi] inside B(0, r): exact 2-d slices, 32-node Gauss in z."""
    z1 = np.maximum(lo[..., 2], -r)
    z2 = np.minimum(hi[..., 2], r)
    width = np.maximum(z2 - z1, 0.0)
    nodes, weights = _GAUSS_NODES
    z = 0.5 * ((z2 + z1)[..., None] + (z2 - z1)[..., None] * nodes)
    rz = np.sqrt(np.maximum(r * r - z * z, 0.0))
    lo2 = np.broadcast_to(lo[..., None, :2], z.shape + (2,))
    hi2 = np.broadcast_to(hi[..., None, :2], z.shape + (2,))
    areas = _box_ball_volume_2d(lo2, hi2, rz)
    return 0.5 * width * np.sum(weights * areas, axis=-1)


def _box_ball_fraction_sampled(lo, hi, r, d):
    offs = subcell_offsets(d)
    pts = lo[..., None, :] + (hi - lo)[..., None, :] * offs
    inside = np.sum(pts**2, axis=-1) <= r * r
    return np.mean(inside, axis=-1)


def box_ball_overlap_fraction(lo, hi, center, r):
    """Fraction of each box [lo, hi] lying inside the ball B(center, r).

    Exact in d <= 2, Gauss-Legendre slices of the exact 2-d area in d = 3,
    frozen 64-point subcell sampling beyond.  Shapes: lo, hi are (..., d).
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    d = lo.shape[-1]
    frac = np.zeros(lo.shape[:-1])
    if r <= 0.0:
        return frac

    rel_lo = lo - center
    rel_hi = hi - center
    nearest = np.clip(0.0, rel_lo, rel_hi)
    farthest = np.where(-rel_lo > rel_hi, rel_lo, rel_hi)
    dist2_min = np.sum(nearest**2, axis=-1)
    dist2_max = np.sum(farthest**2, axis=-1)

    frac[dist2_max <= r * r] = 1.0
    straddle = (dist2_min < r * r) & (dist2_max > r * r)
    if np.any(straddle):
        s_lo, s_hi = rel_lo[straddle], rel_hi[straddle]
        if d == 1:
            vol = np.maximum(
                np.minimum(s_hi[..., 0], r) - np.maximum(s_lo[..., 0], -r), 0.0
            )
        elif d == 2:
            vol = _box_ball_volume_2d(s_lo, s_hi, r)
        elif d == 3:
            vol = _box_ball_volume_3d(s_lo, s_hi, r)
        else:
            frac[straddle] = _box_ball_fraction_sampled(s_lo, s_hi, r, d)
            return frac
        vol_box = np.prod(s_hi - s_lo, axis=-1)
        frac[straddle] = np.clip(vol / vol_box, 0.0, 1.0)
    return frac


# ---------------------------------------------------------------------------
# plane sections of boxes (half-open convention)

_FACE_TOL_REL = 1e-9


def _halfopen_witness_ok(witness, lo, hi, h):
    """Accept a witness point under the (lo, hi] rule, -1 faces included.

    Exact for dyadic data: every quantity is a dyadic rational, so the
    comparisons below see exact zeros on faces.
    """
    tol = h * _FACE_TOL_REL
    on_upper = np.abs(witness - hi) <= tol
    on_lower = np.abs(witness - lo) <= tol
    strictly_inside = (witness > lo + tol) & (witness < hi - tol)
    domain_edge = lo <= -1.0 + tol
    ok_axis = on_upper | (on_lower & domain_edge) | strictly_inside
    return np.all(ok_axis, axis=-1)


def line_box_sections(direction, offset, lo, hi):
    """Clip the line {offset + t * direction} against closed boxes.

    Returns (t0, t1, ok) with ok false where a zero direction component
    misses the box slab.  Shapes: lo, hi (..., d); direction, offset (d,).
    """
    direction = np.asarray(direction, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    t0 = np.full(lo.shape[:-1], -np.inf)
    t1 = np.full(lo.shape[:-1], np.inf)
    ok = np.ones(lo.shape[:-1], dtype=bool)
    for j in range(lo.shape[-1]):
        vj = direction[j]
        a = lo[..., j] - offset[j]
        b = hi[..., j] - offset[j]
        if abs(vj) < 1e-300:
            ok &= (a <= 0.0) & (0.0 <= b)
        else:
            ta, tb = a / vj, b / vj
            t0 = np.maximum(t0, np.minimum(ta, tb))
            t1 = np.minimum(t1, np.maximum(ta, tb))
    return t0, t1, ok


def line_box_volume(direction, offset, lo, hi):
    """Length of {offset + t*direction} inside half-open boxes.

    direction must be a unit vector.  The closed-box intersection length is
    kept only when a relative-interior witness passes the half-open test,
    which attributes segments riding on a shared face to the lower cell.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    t0, t1, ok = line_box_sections(direction, offset, lo, hi)
    length = np.where(ok, np.maximum(t1 - t0, 0.0), 0.0)
    direction = np.asarray(direction, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    tm = np.where(length > 0, 0.5 * (t0 + t1), 0.0)
    witness = offset + tm[..., None] * direction
    h = float(np.max(hi - lo))
    keep = _halfopen_witness_ok(witness, lo, hi, h)
    return np.where(keep & (length > 0), length, 0.0)


def axis_plane_box_volume(axes, offset, lo, hi):
    """k-volume of an axis-aligned plane copy inside half-open boxes.

    axes: tuple of spanned coordinate axes.  offset: any point on the plane.
    Off-plane coordinates must hit the box under the half-open rule.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    d = lo.shape[-1]
    vol = np.ones(lo.shape[:-1])
    for j in range(d):
        if j in axes:
            vol = vol * (hi[..., j] - lo[..., j])
        else:
            c = offset[j]
            hit = (c > lo[..., j]) | ((lo[..., j] <= -1.0) & (c >= lo[..., j]))
            hit &= c <= hi[..., j]
            vol = vol * hit
    return vol


def general_plane_box_volume(frame, offset, lo, hi):
    """k-volume of {offset + frame @ u} inside one closed box, k >= 2.

    Polytope volume in the plane's own coordinates via halfspace
    intersection; exact up to floating point.  Scalar boxes only.
    """
    from scipy.optimize import linprog
    from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

    frame = np.asarray(frame, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d, k = frame.shape
    a_mat = np.vstack([frame, -frame])
    b_vec = np.concatenate([hi - offset, offset - lo])
    norms = np.linalg.norm(a_mat, axis=1, keepdims=True)
    res = linprog(
        c=np.concatenate([np.zeros(k), [-1.0]]),
        A_ub=np.hstack([a_mat, norms]),
        b_ub=b_vec,
        bounds=[(None, None)] * k + [(0, None)],
        method="highs",
    )
    if not res.success or res.x[-1] <= 1e-12:
        return 0.0
    try:
        hs = HalfspaceIntersection(np.hstack([a_mat, -b_vec[:, None]]), res.x[:k])
        hull = ConvexHull(hs.intersections)
    except QhullError:
        return 0.0
    return float(hull.volume)


def hyperplane_box_volume(normal, level, lo, hi):
    """(d-1)-volume of {x . normal = level} inside half-open boxes.

    normal must be a unit vector.  Writing the linear functional over a box
    as a sum of independent uniforms gives the section area as the sum's
    density, an alternating sum over corner subsets of the active axes
    (axes with nonzero normal component).  Vectorised over boxes.

    When the normal is a coordinate axis the section can ride a shared
    face; that case falls back to the half-open ownership rule.
    """
    normal = np.asarray(normal, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = normal.shape[0]
    active = [j for j in range(d) if abs(normal[j]) > 1e-12]
    m = len(active)
    if m == 0:
        raise ValueError("zero normal")
    span_vol = np.ones(lo.shape[:-1])
    for j in range(d):
        if j not in active:
            span_vol = span_vol * (hi[..., j] - lo[..., j])
    if m == 1:
        j = active[0]
        c = level / normal[j]
        hit = (c > lo[..., j]) | ((lo[..., j] <= -1.0) & (c >= lo[..., j]))
        hit &= c <= hi[..., j]
        return span_vol * hit
    widths = []
    t = np.full(lo.shape[:-1], level)
    scale = 1.0
    for j in active:
        nj = normal[j]
        w = abs(nj) * (hi[..., j] - lo[..., j])
        t = t - nj * lo[..., j] + (w if nj < 0 else 0.0)
        widths.append(w)
        scale *= abs(nj)
    acc = np.zeros(lo.shape[:-1])
    for mask in range(1 << m):
        shift = np.zeros(lo.shape[:-1])
        bits = 0
        for i in range(m):
            if mask >> i & 1:
                shift = shift + widths[i]
                bits += 1
        term = np.maximum(t - shift, 0.0) ** (m - 1)
        acc = acc + (term if bits % 2 == 0 else -term)
    acc = np.maximum(acc, 0.0)
    return span_vol * acc / (math.factorial(m - 1) * scale)


def _axis_alignment(frame, tol=1e-12):
    """Spanned axes if every frame column is a signed standard basis vector."""
    d, k = frame.shape
    axes = []
    for col in frame.T:
        hits = np.flatnonzero(np.abs(np.abs(col) - 1.0) <= tol)
        if hits.size != 1 or np.any(np.abs(np.delete(col, hits[0])) > tol):
            return None
        axes.append(int(hits[0]))
    if len(set(axes)) != k:
        return None
    return tuple(sorted(axes))


def plane_box_volume(frame, offset, lo, hi):
    """k-volume of a plane copy inside half-open boxes, dispatching on shape.

    Exact interval clipping for lines, exact products for axis-aligned
    frames, polytope volumes otherwise.  frame: (d, k) orthonormal columns.
    """
    frame = np.asarray(frame, dtype=np.float64)
    d, k = frame.shape
    aligned = _axis_alignment(frame)
    if aligned is not None:
        return axis_plane_box_volume(aligned, offset, lo, hi)
    if k == 1:
        return line_box_volume(frame[:, 0], offset, lo, hi)
    if k == d - 1:
        _, _, vt = np.linalg.svd(frame.T)
        normal = vt[-1]
        level = float(normal @ np.asarray(offset, dtype=np.float64))
        return hyperplane_box_volume(normal, level, lo, hi)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    flat_lo = lo.reshape(-1, d)
    flat_hi = hi.reshape(-1, d)
    out = np.zeros(flat_lo.shape[0])
    for i in range(flat_lo.shape[0]):
        out[i] = general_plane_box_volume(frame, offset, flat_lo[i], flat_hi[i])
    return out.reshape(lo.shape[:-1])
