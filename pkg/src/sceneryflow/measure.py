"""Dyadic cascade measures on [-1, 1]^d with lazy refinement.

A measure is a mass assignment on the dyadic tree.  Materialised cells live
in a dict keyed by path; a cascade rule (the generator) extends the tree on
demand, so built measures can be refined to arbitrary depth.  Rules are
deterministic functions of (parameters, seed, path), which makes every
derived quantity reproducible regardless of evaluation order.

Masses are absolute: the root carries the total mass, 1.0 for every
builder.  Restriction-style operations elsewhere may produce totals below
one; those measures are materialised-only and refuse to persist.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptFileError,
    DegenerateMeasureError,
    InvalidRuleError,
    InvalidSubspaceError,
    ResolutionExhaustedError,
    SceneryFlowError,
)
from .geometry import (
    cell_bounds,
    cell_width,
    path_to_indices,
    plane_box_volume,
    point_to_path,
)

MASS_RTOL = 1e-12
FRAME_ORTHO_TOL = 1e-10
MAX_DEPTH = 50  # dyadic coordinates stay exact in float64 up to here


# ---------------------------------------------------------------------------
# deterministic path-addressable randomness (splitmix64)

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    with np.errstate(over="ignore"):
        z = np.asarray(z, dtype=np.uint64) + _SM_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM_M1
        z = (z ^ (z >> np.uint64(27))) * _SM_M2
        return z ^ (z >> np.uint64(31))


def _chain(state, token):
    with np.errstate(over="ignore"):
        return _mix64(state ^ (np.asarray(token, dtype=np.uint64) + np.uint64(1)))


def _to_unit(z):
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def _path_state(seed, path):
    state = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for digit in path:
        state = _chain(state, digit)
    return state


# ---------------------------------------------------------------------------
# cascade rules


class CascadeRule:
    """Child-weight generator for one cascade measure."""

    kind = "abstract"

    def weights(self, path, d):
        """Mass split over the 2^d children of the cell at `path`, summing to 1."""
        raise NotImplementedError

    def window_masses(self, depth, lo_idx, shape, d):
        """Masses of the cells [lo_idx, lo_idx + shape) at `depth`, or None.

        Optional vectorised path; the tree walk is the reference semantics.
        """
        return None

    def separable_factors(self, depth, lo_idx, shape, d):
        """Per-axis arrays whose outer product gives window masses, or None."""
        return None

    def payload(self):
        raise NotImplementedError

    def validate(self, d):
        pass


class UniformRule(CascadeRule):
    """Split every cell evenly over all children."""

    kind = "uniform-all-children"

    def weights(self, path, d):
        n = 1 << d
        return np.full(n, 1.0 / n)

    def window_masses(self, depth, lo_idx, shape, d):
        return np.full(tuple(shape), 2.0 ** (-d * depth))

    def separable_factors(self, depth, lo_idx, shape, d):
        return [np.full(shape[j], 2.0**-depth) for j in range(d)]

    def payload(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class SubsetRule(CascadeRule):
    """Split evenly over a fixed subset of child indices."""

    children: tuple

    kind = "uniform-on-subset"

    def validate(self, d):
        n = 1 << d
        if len(self.children) == 0:
            raise InvalidRuleError("child subset is empty")
        if len(set(self.children)) != len(self.children):
            raise InvalidRuleError("child subset has duplicates")
        if any(not 0 <= c < n for c in self.children):
            raise InvalidRuleError(f"child index out of range for d={d}")

    def weights(self, path, d):
        w = np.zeros(1 << d)
        w[list(self.children)] = 1.0 / len(self.children)
        return w

    def window_masses(self, depth, lo_idx, shape, d):
        member = np.zeros(1 << d, dtype=bool)
        member[list(self.children)] = True
        grids = np.meshgrid(
            *[lo_idx[j] + np.arange(shape[j], dtype=np.int64) for j in range(d)],
            indexing="ij",
        )
        alive = np.ones(tuple(shape), dtype=bool)
        for level in range(1, depth + 1):
            shift = depth - level
            digit = np.zeros(tuple(shape), dtype=np.int64)
            for j in range(d):
                digit |= ((grids[j] >> shift) & 1) << j
            alive &= member[digit]
        return alive * float(len(self.children)) ** (-depth)

    def payload(self):
        return {"kind": self.kind, "children": list(self.children)}


@dataclass(frozen=True)
class PlaneRule(CascadeRule):
    """Distribute mass proportionally to k-volume of a plane inside each cell.

    The plane is {offset + span(frame)}; builders use offset 0 so the plane
    passes through the origin.  Volumes follow the half-open convention, so
    a plane riding on a shared face feeds the lower cell.
    """

    frame: tuple  # k columns, each a tuple of d floats
    offset: tuple = None

    kind = "plane-supported"

    def _frame_array(self):
        return np.array(self.frame, dtype=np.float64).T  # (d, k)

    def _offset_array(self, d):
        if self.offset is None:
            return np.zeros(d)
        return np.array(self.offset, dtype=np.float64)

    def validate(self, d):
        f = self._frame_array()
        if f.shape[0] != d or not 1 <= f.shape[1] < d:
            raise InvalidSubspaceError(f"frame shape {f.shape} invalid for d={d}")
        gram = f.T @ f
        if np.max(np.abs(gram - np.eye(f.shape[1]))) > FRAME_ORTHO_TOL:
            raise InvalidSubspaceError("frame is not orthonormal")

    def weights(self, path, d):
        f = self._frame_array()
        off = self._offset_array(d)
        idx = path_to_indices(path, d)
        child_idx = (idx[None, :] << 1) + _child_offsets(d)
        lo, hi = cell_bounds(child_idx, len(path) + 1)
        vols = plane_box_volume(f, off, lo, hi)
        total = vols.sum()
        if total <= 0.0:
            return np.full(1 << d, 2.0**-d)  # dead branch, split is irrelevant
        return vols / total

    def window_masses(self, depth, lo_idx, shape, d):
        f = self._frame_array()
        if f.shape[1] >= 2 and _is_large(shape):
            return None  # polytope path is per-cell, keep windows small
        off = self._offset_array(d)
        grids = np.meshgrid(
            *[lo_idx[j] + np.arange(shape[j], dtype=np.int64) for j in range(d)],
            indexing="ij",
        )
        idx = np.stack(grids, axis=-1)
        lo, hi = cell_bounds(idx, depth)
        vols = plane_box_volume(f, off, lo, hi)
        root_lo, root_hi = cell_bounds(np.zeros(d, dtype=np.int64), 0)
        total = plane_box_volume(f, off, root_lo[None], root_hi[None])[0]
        if total <= 0.0:
            raise DegenerateMeasureError("plane misses the domain cube")
        return vols / total

    def separable_factors(self, depth, lo_idx, shape, d):
        from .geometry import _axis_alignment

        axes = _axis_alignment(self._frame_array())
        if axes is None:
            return None
        off = self._offset_array(d)
        h = cell_width(depth)
        factors = []
        for j in range(d):
            idx = lo_idx[j] + np.arange(shape[j], dtype=np.int64)
            lo = -1.0 + idx * h
            if j in axes:
                factors.append(np.full(shape[j], h / 2.0))
            else:
                hit = (off[j] > lo) | ((lo <= -1.0) & (off[j] >= lo))
                hit &= off[j] <= lo + h
                factors.append(hit.astype(np.float64))
        return factors

    def payload(self):
        out = {"kind": self.kind, "frame": [list(map(float, v)) for v in self.frame]}
        if self.offset is not None:
            out["offset"] = list(map(float, self.offset))
        return out


@dataclass(frozen=True)
class RandomWeightRule(CascadeRule):
    """Random child weights, reproducible per (distribution, seed, path).

    Weights are Dirichlet with a common concentration, synthesised from a
    splitmix64 hash of the path so that any evaluation order, tree walk or
    window sweep, sees identical numbers.
    """

    seed: int
    concentration: float = 1.0

    kind = "random-weights"

    def validate(self, d):
        if not self.concentration > 0:
            raise InvalidRuleError("concentration must be positive")

    def _gammas(self, states, d):
        n = 1 << d
        child_states = np.stack(
            [_chain(states, np.uint64(c)) for c in range(n)], axis=-1
        )
        u = _to_unit(_mix64(child_states))
        if self.concentration == 1.0:
            return -np.log(u)
        from scipy.special import gammaincinv

        return gammaincinv(self.concentration, u)

    def weights(self, path, d):
        g = self._gammas(_path_state(self.seed, path), d)
        return g / g.sum()

    def window_masses(self, depth, lo_idx, shape, d):
        lo_idx = np.asarray(lo_idx, dtype=np.int64)
        shape = tuple(int(s) for s in shape)
        if depth == 0:
            return np.ones(shape)
        # level-by-level sweep over the rectangular ancestor windows
        mass = np.ones((1,) * d)
        state = _mix64(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF))
        states = np.full((1,) * d, state, dtype=np.uint64)
        anc_lo = np.zeros(d, dtype=np.int64)
        for level in range(1, depth + 1):
            shift = depth - level
            new_lo = lo_idx >> shift
            new_hi = (lo_idx + shape - 1) >> shift
            grids = np.meshgrid(
                *[new_lo[j] + np.arange(new_hi[j] - new_lo[j] + 1) for j in range(d)],
                indexing="ij",
            )
            digit = np.zeros(grids[0].shape, dtype=np.int64)
            for j in range(d):
                digit |= ((grids[j] & 1) << j).astype(np.int64)
            # parent position of each cell inside the previous window
            parent_sel = tuple((grids[j] >> 1) - anc_lo[j] for j in range(d))
            parent_states = states[parent_sel]
            gam = self._gammas(parent_states, d)
            denom = gam.sum(axis=-1)
            pick = np.take_along_axis(gam, digit[..., None], axis=-1)[..., 0]
            mass = mass[parent_sel] * pick / denom
            states = _chain(parent_states, digit)
            anc_lo = new_lo
        sel = tuple(
            slice(int(lo_idx[j] - anc_lo[j]), int(lo_idx[j] - anc_lo[j]) + shape[j])
            for j in range(d)
        )
        return np.ascontiguousarray(mass[sel])

    def payload(self):
        return {
            "kind": self.kind,
            "seed": int(self.seed),
            "distribution": {"name": "dirichlet", "concentration": self.concentration},
        }


@dataclass(frozen=True)
class ShiftedRule(CascadeRule):
    """View of a base rule re-rooted at a fixed path prefix."""

    base: CascadeRule
    prefix: tuple

    kind = "shifted"

    def validate(self, d):
        self.base.validate(d)

    def weights(self, path, d):
        return self.base.weights(self.prefix + tuple(path), d)

    def _global_window(self, depth, lo_idx, d):
        pref_idx = path_to_indices(self.prefix, d)
        return (pref_idx << depth) + np.asarray(lo_idx, dtype=np.int64)

    def window_masses(self, depth, lo_idx, shape, d):
        p = len(self.prefix)
        base_win = self.base.window_masses(
            depth + p, self._global_window(depth, lo_idx, d), shape, d
        )
        if base_win is None:
            return None
        pref_idx = path_to_indices(self.prefix, d)
        pref_mass = self.base.window_masses(p, pref_idx, np.ones(d, dtype=np.int64), d)
        if pref_mass is None:
            return None
        pm = float(pref_mass.reshape(-1)[0])
        if pm <= 0.0:
            raise DegenerateMeasureError("re-rooted at a zero-mass cell")
        return base_win / pm

    def separable_factors(self, depth, lo_idx, shape, d):
        p = len(self.prefix)
        base_f = self.base.separable_factors(
            depth + p, self._global_window(depth, lo_idx, d), shape, d
        )
        if base_f is None:
            return None
        pref_idx = path_to_indices(self.prefix, d)
        pref_f = self.base.separable_factors(
            p, pref_idx, np.ones(d, dtype=np.int64), d
        )
        if pref_f is None:
            return None
        out = []
        for j in range(d):
            pf = float(pref_f[j][0])
            if pf <= 0.0:
                raise DegenerateMeasureError("re-rooted at a zero-mass cell")
            out.append(base_f[j] / pf)
        return out

    def payload(self):
        return {
            "kind": self.kind,
            "base": self.base.payload(),
            "prefix": [int(c) for c in self.prefix],
        }


def _child_offsets(d):
    """(2^d, d) array of 0/1 offsets; row c is the corner pattern of child c."""
    n = 1 << d
    return np.array([[(c >> j) & 1 for j in range(d)] for c in range(n)], dtype=np.int64)


def _is_large(shape):
    return int(np.prod([int(s) for s in shape])) > 4096


# rule registry for persistence ------------------------------------------------

_RULE_LOADERS = {}


def register_rule(kind, loader):
    _RULE_LOADERS[kind] = loader


def rule_from_payload(payload):
    if payload is None:
        return None
    kind = payload.get("kind")
    if kind not in _RULE_LOADERS:
        raise CorruptFileError(f"unknown rule kind {kind!r}")
    return _RULE_LOADERS[kind](payload)


register_rule("uniform-all-children", lambda p: UniformRule())
register_rule(
    "uniform-on-subset", lambda p: SubsetRule(children=tuple(int(c) for c in p["children"]))
)
register_rule(
    "plane-supported",
    lambda p: PlaneRule(
        frame=tuple(tuple(float(x) for x in v) for v in p["frame"]),
        offset=tuple(float(x) for x in p["offset"]) if "offset" in p else None,
    ),
)
register_rule(
    "random-weights",
    lambda p: RandomWeightRule(
        seed=int(p["seed"]),
        concentration=float(p["distribution"]["concentration"]),
    ),
)
register_rule(
    "shifted",
    lambda p: ShiftedRule(
        base=rule_from_payload(p["base"]), prefix=tuple(int(c) for c in p["prefix"])
    ),
)


# ---------------------------------------------------------------------------
# the measure


@dataclass
class DyadicMeasure:
    """Mass assignment on the dyadic tree of [-1, 1]^d.

    Parameters
    ----------
    d : ambient dimension.
    masses : dict mapping path tuples to absolute cell masses.  The root ()
        is always present and carries the total mass.
    rule : optional cascade rule used to refine beyond materialised depth.
    kind : short human-readable tag ("lebesgue", "plane", "cascade", ...).
    seed : seed recorded for random rules, None otherwise.
    """

    d: int
    masses: dict = field(default_factory=dict)
    rule: CascadeRule = None
    kind: str = "custom"
    seed: int = None
    declared_depth: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if () not in self.masses:
            self.masses[()] = 1.0
        self._expanded = set()
        children_seen = set()
        for path in self.masses:
            if path:
                children_seen.add(path[:-1])
        self._expanded |= children_seen

    # -- basic queries ------------------------------------------------------

    @property
    def total_mass(self):
        return self.masses[()]

    @property
    def max_materialized_depth(self):
        return max((len(p) for p in self.masses), default=0)

    def is_expanded(self, path):
        return path in self._expanded

    def leaves(self):
        """Frontier cells (materialised, children not materialised)."""
        return [p for p in self.masses if p not in self._expanded]

    @property
    def refinable(self):
        return self.rule is not None

    # -- refinement ---------------------------------------------------------

    def refine(self, path):
        """Materialise the children of `path`, pulling parents in as needed."""
        path = tuple(path)
        if path in self._expanded:
            return
        if len(path) + 1 > MAX_DEPTH:
            raise ResolutionExhaustedError(
                f"depth {len(path) + 1} exceeds the exact-coordinate limit {MAX_DEPTH}"
            )
        if path not in self.masses:
            self.refine(path[:-1])
        if path not in self.masses:
            raise SceneryFlowError(f"cannot materialise {path}")
        if self.rule is None:
            raise ResolutionExhaustedError(
                "measure has no generator and the cell is not materialised"
            )
        w = np.asarray(self.rule.weights(path, self.d), dtype=np.float64)
        if w.shape != (1 << self.d,) or np.any(w < 0):
            raise InvalidRuleError("rule emitted a malformed weight vector")
        s = w.sum()
        if not math.isclose(s, 1.0, rel_tol=1e-9, abs_tol=1e-12):
            raise InvalidRuleError(f"rule weights sum to {s}, not 1")
        parent_mass = self.masses[path]
        for c in range(1 << self.d):
            self.masses[path + (c,)] = parent_mass * w[c]
        self._expanded.add(path)

    def refine_to_depth(self, depth, prune_below=0.0):
        """Materialise every cell of mass > prune_below down to `depth`."""
        frontier = [()]
        while frontier:
            path = frontier.pop()
            if len(path) >= depth:
                continue
            if self.masses.get(path, 0.0) <= prune_below and path != ():
                continue
            if path not in self._expanded:
                self.refine(path)
            frontier.extend(path + (c,) for c in range(1 << self.d))

    def cell_mass(self, path):
        """Mass of one cell, refining through the rule when needed.

        Below the materialised frontier without a rule, mass is split
        uniformly (the within-cell uniformity policy).
        """
        path = tuple(path)
        if path in self.masses:
            return self.masses[path]
        # find deepest materialised ancestor
        for back in range(1, len(path) + 1):
            anc = path[:-back]
            if anc in self.masses:
                break
        if self.rule is not None:
            for lev in range(len(anc), len(path)):
                parent = path[:lev]
                if parent not in self._expanded:
                    self.refine(parent)
            return self.masses.get(path, 0.0)
        return self.masses[anc] * 2.0 ** (-self.d * (len(path) - len(anc)))

    # -- vectorised window reads ---------------------------------------------

    def window_masses(self, depth, lo_idx, shape):
        """Absolute masses of the cells [lo_idx, lo_idx+shape) at `depth`."""
        lo_idx = np.asarray(lo_idx, dtype=np.int64)
        shape = tuple(int(s) for s in shape)
        if self.rule is not None and not self._dirty():
            win = self.rule.window_masses(depth, lo_idx, shape, self.d)
            if win is not None:
                return win * self.total_mass
        return self._window_from_tree(depth, lo_idx, shape)

    def separable_factors(self, depth, lo_idx, shape):
        if self.rule is not None and not self._dirty():
            return self.rule.separable_factors(
                np.asarray(depth), np.asarray(lo_idx, dtype=np.int64), shape, self.d
            )
        return None

    def _dirty(self):
        return self.meta.get("detached_from_rule", False)

    def _window_from_tree(self, depth, lo_idx, shape, max_cells=2_000_000):
        if int(np.prod(shape)) > max_cells:
            raise ResolutionExhaustedError(
                f"window of {np.prod(shape)} cells exceeds the tree-walk budget"
            )
        out = np.zeros(shape)
        d = self.d

        def fill(path, lo, size, view, vstart):
            # view covers the global cell range [vstart, vstart + view.shape)
            m = self.masses[path]
            if m == 0.0:
                view[...] = 0.0
                return
            level = len(path)
            if level == depth:
                view[...] = m
                return
            if path not in self._expanded:
                if self.rule is None:
                    # uniform split policy below the frontier
                    view[...] = m * 2.0 ** (-d * (depth - level))
                    return
                self.refine(path)
            half = size >> 1
            for c in range(1 << d):
                sub_lo = []
                sub_start = []
                sel = []
                ok = True
                for j in range(d):
                    bit = (c >> j) & 1
                    child_lo = lo[j] + bit * half
                    a = max(child_lo, vstart[j])
                    b = min(child_lo + half, vstart[j] + view.shape[j])
                    if a >= b:
                        ok = False
                        break
                    sub_lo.append(child_lo)
                    sub_start.append(a)
                    sel.append(slice(a - vstart[j], b - vstart[j]))
                if ok:
                    fill(path + (c,), sub_lo, half, view[tuple(sel)], sub_start)

        fill((), [0] * d, 1 << depth, out, [int(v) for v in lo_idx])
        return out

    # -- invariants ----------------------------------------------------------

    def check_conservation(self):
        """Every expanded cell's mass equals the sum of its children."""
        worst = 0.0
        for path in self._expanded:
            parent = self.masses[path]
            kids = sum(self.masses[path + (c,)] for c in range(1 << self.d))
            scale = max(abs(parent), 1e-300)
            worst = max(worst, abs(parent - kids) / scale)
        return worst


# ---------------------------------------------------------------------------
# builders


def build_lebesgue(d, depth=0):
    """Normalised volume on [-1, 1]^d as a uniform cascade."""
    if d < 1:
        raise SceneryFlowError("d must be at least 1")
    mu = DyadicMeasure(d=d, rule=UniformRule(), kind="lebesgue", declared_depth=depth)
    return mu


def build_plane(d, k, frame=None, depth=0):
    """Normalised k-volume on a plane through the origin.

    frame: (d, k) orthonormal columns, or None for the span of the first k
    coordinate axes.  Boundary convention: plane volume on a shared cell
    face belongs to the lower-index cell.
    """
    if not 1 <= k < d:
        raise SceneryFlowError(f"need 1 <= k < d, got k={k}, d={d}")
    if frame is None:
        cols = tuple(
            tuple(1.0 if i == j else 0.0 for i in range(d)) for j in range(k)
        )
    else:
        f = np.asarray(frame, dtype=np.float64)
        if f.shape != (d, k):
            raise InvalidSubspaceError(f"frame must be ({d}, {k}), got {f.shape}")
        cols = tuple(tuple(float(x) for x in f[:, j]) for j in range(k))
    rule = PlaneRule(frame=cols)
    rule.validate(d)
    return DyadicMeasure(d=d, rule=rule, kind="plane", declared_depth=depth)


def build_cascade(rule, d, depth=0, seed=None):
    """Measure generated by an arbitrary cascade rule."""
    if seed is not None and isinstance(rule, RandomWeightRule) and rule.seed != seed:
        rule = RandomWeightRule(seed=seed, concentration=rule.concentration)
    rule.validate(d)
    return DyadicMeasure(
        d=d,
        rule=rule,
        kind="cascade",
        seed=getattr(rule, "seed", None),
        declared_depth=depth,
    )


# ---------------------------------------------------------------------------
# sampling and ball masses


def sample_point(mu, depth, seed):
    """Draw a point distributed as mu at dyadic resolution `depth`.

    Descends the tree proportionally to cell mass and returns the centre of
    the reached depth-`depth` cell.
    """
    if mu.total_mass <= 0:
        raise DegenerateMeasureError("cannot sample from a zero measure")
    rng = np.random.default_rng(seed)
    path = ()
    for _ in range(depth):
        if path not in mu._expanded:
            if not mu.refinable:
                raise ResolutionExhaustedError(
                    "sampling deeper than the materialised tree of a rule-free measure"
                )
            mu.refine(path)
        kids = np.array([mu.masses[path + (c,)] for c in range(1 << mu.d)])
        total = kids.sum()
        if total <= 0:
            raise DegenerateMeasureError(f"dead branch at {path}")
        c = int(rng.choice(1 << mu.d, p=kids / total))
        path = path + (c,)
    idx = path_to_indices(path, mu.d)
    lo, hi = cell_bounds(idx, depth)
    return (lo + hi) / 2.0


def sample_points(mu, n, depth, seed):
    """Draw n points distributed as mu at dyadic resolution `depth`.

    Uses one multinomial draw over the full depth grid when that fits in
    memory, scalar tree descents otherwise.  Returns an (n, d) array of
    cell centres.
    """
    if mu.total_mass <= 0:
        raise DegenerateMeasureError("cannot sample from a zero measure")
    d = mu.d
    cells = (1 << depth) ** d
    if cells <= 4_000_000:
        win = mu.window_masses(depth, np.zeros(d, dtype=np.int64), (1 << depth,) * d)
        flat = win.reshape(-1)
        total = flat.sum()
        if total <= 0:
            raise DegenerateMeasureError("measure vanishes on the grid")
        rng = np.random.default_rng(seed)
        picks = rng.choice(flat.size, size=n, p=flat / total)
        idx = np.stack(np.unravel_index(picks, win.shape), axis=-1)
        h = cell_width(depth)
        return -1.0 + (idx + 0.5) * h
    seeds = np.random.SeedSequence(seed).spawn(n)
    return np.stack([sample_point(mu, depth, s) for s in seeds])


def ball_mass(mu, x, r, detail=2):
    """mu(B(x, r)) with partial cells weighted by exact overlap fractions.

    Works at a depth where cells are at most r * 2^-detail wide, clipped to
    what the measure can provide.  r = 0 gives 0 (balls are closed but a
    point carries no cell).
    """
    x = np.asarray(x, dtype=np.float64)
    if r <= 0.0:
        return 0.0
    depth = max(0, math.ceil(math.log2(2.0 / r)) + detail)
    if not mu.refinable:
        depth = min(depth, mu.max_materialized_depth)
    depth = min(depth, MAX_DEPTH)
    h = cell_width(depth)
    lo_idx = np.floor((x - r + 1.0) / h).astype(np.int64)
    hi_idx = np.floor((x + r + 1.0) / h).astype(np.int64)
    n = 1 << depth
    lo_idx = np.clip(lo_idx, 0, n - 1)
    hi_idx = np.clip(hi_idx, 0, n - 1)
    shape = tuple(int(b - a + 1) for a, b in zip(lo_idx, hi_idx))
    win = mu.window_masses(depth, lo_idx, shape)
    grids = np.meshgrid(
        *[lo_idx[j] + np.arange(shape[j], dtype=np.int64) for j in range(mu.d)],
        indexing="ij",
    )
    idx = np.stack(grids, axis=-1)
    lo, hi = cell_bounds(idx, depth)
    frac = np.zeros(shape)
    nz = win > 0
    if np.any(nz):
        from .geometry import box_ball_overlap_fraction

        frac[nz] = box_ball_overlap_fraction(lo[nz], hi[nz], x, r)
    return float(np.sum(win * frac))


# ---------------------------------------------------------------------------
# persistence

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _canonical_document(mu):
    leaves = sorted(mu.leaves())
    return {
        "version": 1,
        "d": int(mu.d),
        "kind": str(mu.kind),
        "rule": mu.rule.payload() if mu.rule is not None else None,
        "seed": int(mu.seed) if mu.seed is not None else None,
        "leaves": [
            {"path": [int(c) for c in p], "mass": float(mu.masses[p])} for p in leaves
        ],
    }


def _canonical_bytes(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def save_measure(mu, path):
    """Write the measure as canonical JSON with a trailing FNV-1a checksum."""
    total = sum(mu.masses[p] for p in mu.leaves())
    if abs(total - 1.0) > 1e-9:
        raise DegenerateMeasureError(
            f"only unit-mass measures persist; leaves sum to {total}"
        )
    doc = _canonical_document(mu)
    doc["checksum"] = f"{fnv1a64(_canonical_bytes(doc)):016x}"
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
    return path


def load_measure(path):
    """Load and validate a measure file; raises CorruptFileError on damage."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"unreadable measure file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise CorruptFileError("unsupported or missing version")
    stored = doc.pop("checksum", None)
    if stored is None:
        raise CorruptFileError("missing checksum")
    expect = f"{fnv1a64(_canonical_bytes(doc)):016x}"
    if stored != expect:
        raise CorruptFileError(f"checksum mismatch: {stored} != {expect}")
    d = doc.get("d")
    if not isinstance(d, int) or d < 1:
        raise CorruptFileError("bad dimension")
    leaves = doc.get("leaves")
    if not isinstance(leaves, list) or not leaves:
        raise CorruptFileError("missing leaves")
    masses = {}
    total = 0.0
    n = 1 << d
    for leaf in leaves:
        p = tuple(leaf["path"])
        if any(not isinstance(c, int) or not 0 <= c < n for c in p):
            raise CorruptFileError(f"bad path {p}")
        if p in masses:
            raise CorruptFileError(f"duplicate leaf {p}")
        m = float(leaf["mass"])
        if m < 0 or not np.isfinite(m):
            raise CorruptFileError(f"bad mass {m}")
        masses[p] = m
        total += m
    if abs(total - 1.0) > 1e-9:
        raise CorruptFileError(f"leaf masses sum to {total}, not 1")
    # rebuild internal cells by accumulation
    full = {}
    for p, m in masses.items():
        for back in range(len(p) + 1):
            anc = p[:back]
            full[anc] = full.get(anc, 0.0) + m
    for p, m in masses.items():  # leaf values win over accumulated rounding
        full[p] = m
    # the leaf set must tile the cube: leaves are prefix-free and every
    # internal node has its full sibling set
    for p in masses:
        for back in range(len(p)):
            if p[:back] in masses:
                raise CorruptFileError(f"leaf {p[:back]} is an ancestor of leaf {p}")
    child_count = {}
    for p in full:
        if p:
            child_count[p[:-1]] = child_count.get(p[:-1], 0) + 1
    for parent, cnt in child_count.items():
        if cnt != n:
            raise CorruptFileError(f"node {parent} has {cnt} of {n} children")
    rule = rule_from_payload(doc.get("rule"))
    if rule is not None:
        rule.validate(d)
    mu = DyadicMeasure(
        d=d,
        masses=full,
        rule=rule,
        kind=doc.get("kind", "custom"),
        seed=doc.get("seed"),
    )
    return mu
