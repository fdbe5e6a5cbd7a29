"""Pasted cascades: alternate flat and plane regimes across dyadic scales.

A splice schedule assigns each tree level one of two generation regimes:
L levels split cells evenly over all children (locally flat), H levels
collapse mass onto a k-plane copy inside each cell (locally flat along a
fixed axis subspace W, degenerate across it).  Running the cascade with
L-frequency theta produces a measure of dimension theta*d + (1-theta)*k
whose sceneries alternate between the two pure regimes.

The H regime pastes the plane copy through the centre of the cell where
an H run begins, which pins the perpendicular child digit to 0 at the
first level of a run and to 1 afterwards (the plane then rides on the
upper face of the chosen child).  An all-H schedule therefore reproduces
the global plane through the origin exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidRuleError, ScheduleTooShortError
from .geometry import _axis_alignment
from .measure import CascadeRule, DyadicMeasure, register_rule

__all__ = [
    "SpliceSchedule",
    "SplicedRule",
    "schedule_for_theta",
    "build_spliced",
]


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _split_two(total):
    """Split a block budget into a nondecreasing pair."""
    return total // 2, total - total // 2


def _super_block(theta, growth, j):
    """The four (or fewer) blocks of super-block j: total length growth*j."""
    l_total = _round_half_up(theta * growth * j)
    h_total = growth * j - l_total
    blocks = []
    for a, b in zip(_split_two(l_total), _split_two(h_total)):
        if a:
            blocks.append(("L", a))
        if b:
            blocks.append(("H", b))
    return blocks


@dataclass(frozen=True)
class SpliceSchedule:
    """Level-by-level regime assignment, as blocks of (rule id, length).

    Schedules produced by schedule_for_theta carry their generator
    (theta, growth) and extend deterministically past the generated
    blocks; hand-built schedules are finite and raise
    ScheduleTooShortError beyond their last level.
    """

    blocks: tuple
    theta: float = None
    growth: int = None

    def __post_init__(self):
        blocks = tuple((str(r), int(n)) for r, n in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise InvalidConfigError("schedule has no blocks")
        seen = {}
        for r, n in blocks:
            if r not in ("L", "H"):
                raise InvalidConfigError(f"unknown rule id {r!r} (expected L or H)")
            if n <= 0:
                raise InvalidConfigError("block lengths must be positive")
            if r in seen and n < seen[r]:
                raise InvalidConfigError(
                    f"{r} block lengths must be nondecreasing ({n} after {seen[r]})"
                )
            seen[r] = n
        if self.theta is not None and not 0.0 <= self.theta <= 1.0:
            raise InvalidConfigError(f"theta = {self.theta} outside [0, 1]")

    @property
    def levels(self):
        return sum(n for _, n in self.blocks)

    def letters(self, n):
        """Rule ids of levels 0..n-1 as a character array."""
        out = []
        for r, length in self.blocks:
            out.extend(r * length)
            if len(out) >= n:
                return np.array(out[:n])
        j = _generated_super_blocks(self.levels, self.growth)
        if self.theta is None or j is None:
            raise ScheduleTooShortError(
                f"schedule covers {self.levels} levels, {n} requested"
            )
        while len(out) < n:
            j += 1
            for r, length in _super_block(self.theta, self.growth, j):
                out.extend(r * length)
        return np.array(out[:n])

    def running_frequency(self, n):
        """Fraction of L levels among the first 1..n, as an array of length n."""
        is_l = self.letters(n) == "L"
        return np.cumsum(is_l) / np.arange(1, n + 1)

    def frequency_report(self, n=None):
        """Convergence diagnostic |freq(m) - theta| against the design bound.

        The bound sqrt(2 growth / m) + 2/m dominates one super-block's
        worth of imbalance plus rounding; deviations are measured from the
        end of the first super-block on.
        """
        if self.theta is None:
            raise InvalidConfigError("frequency report needs a theta-generated schedule")
        n = self.levels if n is None else int(n)
        freq = self.running_frequency(n)
        ms = np.arange(1, n + 1)
        bound = np.sqrt(2.0 * self.growth / ms) + 2.0 / ms
        start = min(self.growth, n) - 1
        dev = np.abs(freq - self.theta)
        worst = int(np.argmax(dev[start:] - bound[start:])) + start
        return {
            "levels": n,
            "theta": self.theta,
            "final_frequency": float(freq[-1]),
            "max_deviation": float(dev[start:].max()),
            "bound_at_max": float(bound[start:][np.argmax(dev[start:])]),
            "within_bound": bool(np.all(dev[start:] <= bound[start:])),
            "worst_level": worst + 1,
        }


def _generated_super_blocks(levels, growth):
    """Recover j with growth * j(j+1)/2 == levels, or None."""
    if not growth:
        return None
    j = int(math.isqrt(2 * levels // growth))
    for cand in (j - 1, j, j + 1):
        if cand >= 1 and growth * cand * (cand + 1) // 2 == levels:
            return cand
    return None


def schedule_for_theta(theta, levels, growth=4):
    """Schedule whose running L-frequency converges to theta.

    Super-block j contributes growth*j levels with an L share of
    round(theta*growth*j), laid out as two interleaved L/H pairs so a
    horizon cut mid-super-block stays near theta.  Whole super-blocks are
    emitted until `levels` is covered.
    """
    if not 0.0 <= theta <= 1.0:
        raise InvalidConfigError(f"theta = {theta} outside [0, 1]")
    if levels < 1:
        raise InvalidConfigError("levels must be >= 1")
    if growth < 1:
        raise InvalidConfigError("growth must be >= 1")
    blocks = []
    total = 0
    j = 0
    while total < levels:
        j += 1
        blocks.extend(_super_block(theta, growth, j))
        total += growth * j
    return SpliceSchedule(blocks=tuple(blocks), theta=float(theta), growth=int(growth))


@dataclass(frozen=True)
class SplicedRule(CascadeRule):
    """Cascade rule switching between flat and plane splits per level.

    axes lists the coordinate axes spanning W (the plane directions); all
    remaining axes are perpendicular.  H levels give each of the 2^k
    children on the pasted plane weight 2^-k; L levels split evenly.
    """

    schedule: SpliceSchedule
    axes: tuple

    kind = "spliced-scales"

    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def validate(self, d):
        axes = tuple(self.axes)
        if len(set(axes)) != len(axes) or not axes:
            raise InvalidRuleError("plane axes must be a nonempty set")
        if any(not 0 <= a < d for a in axes):
            raise InvalidRuleError(f"plane axis out of range for d={d}")
        if len(axes) >= d:
            raise InvalidRuleError("plane axes must leave a perpendicular direction")

    @property
    def max_depth(self):
        """Last generated level for finite schedules, None when extendable."""
        return None if self.schedule.theta is not None else self.schedule.levels

    def _levels(self, n):
        """(letters, perp digit per level) for levels 0..n-1, cached.

        Finite schedules continue with uniform splits past their last
        level, mirroring the uniform-fill policy below a tree frontier;
        the scenery layer gates zoom levels at max_depth separately.
        """
        got = self._cache.get("levels")
        if got is None or len(got[0]) < n:
            limit = self.max_depth
            if limit is None or n <= limit:
                letters = self.schedule.letters(n)
            else:
                letters = np.concatenate(
                    [self.schedule.letters(limit), np.full(n - limit, "L")]
                )
            digits = np.ones(len(letters), dtype=np.int64)
            prev_h = False
            for i, r in enumerate(letters):
                if r == "H" and not prev_h:
                    digits[i] = 0
                prev_h = r == "H"
            got = (letters, digits)
            self._cache["levels"] = got
        return got

    def weights(self, path, d):
        level = len(path)
        letters, digits = self._levels(level + 1)
        n = 1 << d
        if letters[level] == "L":
            return np.full(n, 1.0 / n)
        perp = [j for j in range(d) if j not in self.axes]
        req = digits[level]
        w = np.zeros(n)
        children = [
            c for c in range(n) if all(((c >> j) & 1) == req for j in perp)
        ]
        w[children] = 2.0 ** -len(self.axes)
        return w

    def separable_factors(self, depth, lo_idx, shape, d):
        if depth == 0:
            return [np.ones(shape[j]) for j in range(d)]
        letters, digits = self._levels(depth)
        n_l = int(np.sum(letters[:depth] == "L"))
        factors = []
        for j in range(d):
            if j in self.axes:
                factors.append(np.full(shape[j], 2.0**-depth))
                continue
            idx = lo_idx[j] + np.arange(shape[j], dtype=np.int64)
            f = np.full(shape[j], 0.5**n_l)
            for level in range(depth):
                if letters[level] == "H":
                    bits = (idx >> (depth - 1 - level)) & 1
                    f = f * (bits == digits[level])
            factors.append(f)
        return factors

    def window_masses(self, depth, lo_idx, shape, d):
        factors = self.separable_factors(depth, lo_idx, shape, d)
        g = factors[0]
        for f in factors[1:]:
            g = g[..., None] * f
        return g

    def payload(self):
        return {
            "kind": self.kind,
            "axes": list(self.axes),
            "blocks": [[r, n] for r, n in self.schedule.blocks],
            "theta": self.schedule.theta,
            "growth": self.schedule.growth,
        }


register_rule(
    "spliced-scales",
    lambda p: SplicedRule(
        schedule=SpliceSchedule(
            blocks=tuple((r, n) for r, n in p["blocks"]),
            theta=p.get("theta"),
            growth=p.get("growth"),
        ),
        axes=tuple(p["axes"]),
    ),
)


def _resolve_axes(d, k, subspace):
    if subspace is None:
        return tuple(range(k))
    if isinstance(subspace, (tuple, list)):
        return tuple(int(a) for a in subspace)
    frame = np.asarray(getattr(subspace, "frame", subspace), dtype=np.float64)
    axes = _axis_alignment(frame)
    if axes is None:
        raise InvalidRuleError(
            "splicing pastes axis-aligned planes; the subspace frame must "
            "consist of standard basis vectors"
        )
    return axes


def build_spliced(d, k, subspace=None, schedule=None, depth=0, seed=None):
    """Measure pasted from flat and W-plane regimes along `schedule`.

    `subspace` may be an axis tuple, an axis-aligned Subspace, or None for
    the first k axes.  `depth` declares how deep the measure is meant to
    be used; finite hand-built schedules must reach it.
    """
    if schedule is None:
        raise InvalidConfigError("build_spliced needs a schedule")
    if not 1 <= k <= d - 1:
        raise InvalidConfigError(f"k = {k} outside 1..{d - 1}")
    axes = _resolve_axes(d, k, subspace)
    if len(axes) != k:
        raise InvalidConfigError(f"subspace dimension {len(axes)} != k = {k}")
    if schedule.theta is None and depth > schedule.levels:
        raise ScheduleTooShortError(
            f"schedule covers {schedule.levels} levels, depth {depth} requested"
        )
    rule = SplicedRule(schedule=schedule, axes=axes)
    rule.validate(d)
    return DyadicMeasure(
        d=d,
        rule=rule,
        kind="spliced",
        seed=seed,
        declared_depth=int(depth),
    )
