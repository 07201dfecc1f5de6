"""
Grid, interval classification and the region sets built on top of it.

The grid is ``x_j = -j pi / n`` with intervals ``I_j = [x_j, x_{j-1}]``.  All
index sets live on the fundamental window ``j = -n+1 .. n`` (which tiles
``[-pi, pi]``) and are queried modulo ``2n``.  Array position ``p`` holds
index ``j = p - n + 1``, so positions increase with ``j`` (and decrease in
``x``).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from math import factorial

import numpy as np

from .trigpoly import make_pi

__all__ = [
    "UniformGrid",
    "PartitionState",
    "Lemma2Violation",
    "GridTooCoarse",
    "TYPE1",
    "TYPE2",
    "TYPE3",
    "lemma1_constant",
    "classify",
    "find_packs",
    "assign_groups",
    "build_regions",
    "build_O_and_H",
    "find_N",
    "find_N1",
    "build_partition",
]

TYPE1, TYPE2, TYPE3 = 1, 2, 3
PACK_MIN = 7


class Lemma2Violation(ValueError):
    """More than ``2r - 4`` consecutive type-3 indices were found."""


class GridTooCoarse(ValueError):
    """The breakpoint neighborhoods overlap at this ``n``."""


@dataclass(frozen=True)
class UniformGrid:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def h(self):
        return np.pi / self.n

    @property
    def size(self):
        return 2 * self.n

    def x(self, j):
        return -np.asarray(j) * np.pi / self.n

    def interval(self, j):
        return float(self.x(j)), float(self.x(j - 1))

    def midpoint(self, j):
        return -(np.asarray(j) - 0.5) * np.pi / self.n

    def indices(self):
        """The fundamental window ``-n+1 .. n``."""
        return np.arange(-self.n + 1, self.n + 1)

    def pos(self, j):
        return (np.asarray(j) + self.n - 1) % (2 * self.n)

    def index_of(self, x):
        """Index ``j`` with ``x in [x_j, x_{j-1})``."""
        return np.ceil(-np.asarray(x, dtype=float) * self.n / np.pi).astype(int)

    def samples(self, j, m):
        a, b = self.interval(j)
        return np.linspace(a, b, m)


def lemma1_constant(r):
    """``(2r-3)^{r-1} / (r-1)! + (r-1)(2r-3)^{r-2}``."""
    if r < 2:
        raise ValueError("r must be at least 2")
    return (2 * r - 3) ** (r - 1) / factorial(r - 1) + (r - 1) * (2 * r - 3) ** (r - 2)


@dataclass(frozen=True, eq=False)
class PartitionState:
    grid: UniformGrid
    r: int
    c1: float
    types: np.ndarray
    packs: tuple = None
    in_pack: np.ndarray = None
    in_w1: np.ndarray = None
    M: np.ndarray = None
    M1: np.ndarray = None
    M2: np.ndarray = None
    Omega: np.ndarray = None
    O: tuple = None
    in_O: np.ndarray = None
    H: np.ndarray = None

    # -- circular queries ---------------------------------------------------

    def type_of(self, j):
        return int(self.types[self.grid.pos(j)])

    def member(self, mask, j):
        return bool(mask[self.grid.pos(j)])

    def group_of(self, j):
        p = self.grid.pos(j)
        if self.in_pack[p]:
            return "InPack"
        return "W1" if self.in_w1[p] else "W2"

    def E(self, k):
        return self.types == k

    @property
    def V2_minus_W1(self):
        return (self.types == TYPE2) & ~self.in_w1

    def max_type3_run(self):
        return _max_circular_run(self.types == TYPE3)

    def check_lemma2(self):
        run = self.max_type3_run()
        if run > 2 * self.r - 4:
            raise Lemma2Violation(
                f"{run} consecutive type-3 indices at n={self.grid.n}, r={self.r}"
            )
        return run

    def indices(self, mask):
        return self.grid.indices()[np.asarray(mask, dtype=bool)]

    def to_dict(self):
        g = self.grid
        rows = []
        for p, j in enumerate(g.indices()):
            row = {"j": int(j), "type": int(self.types[p])}
            if self.in_w1 is not None:
                row["group"] = self.group_of(j)
            for name in ("M", "M1", "M2", "Omega", "in_O", "H"):
                mask = getattr(self, name)
                if mask is not None:
                    row[name] = bool(mask[p])
            rows.append(row)
        return {
            "n": g.n,
            "r": self.r,
            "c1": self.c1,
            "packs": [list(map(int, pk)) for pk in (self.packs or ())],
            "intervals": rows,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _max_circular_run(mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return mask.size
    if not mask.any():
        return 0
    # rotate so the window starts right after a False
    k = int(np.argmin(mask))
    m = np.roll(mask, -k)
    best = cur = 0
    for v in m:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return best


def _circular_runs(mask):
    """Maximal runs of True as ``(start_pos, length)``, circularly."""
    mask = np.asarray(mask, dtype=bool)
    N = mask.size
    if mask.all():
        return [(0, N)]
    if not mask.any():
        return []
    k = int(np.argmin(mask))
    runs = []
    start = None
    for i in range(1, N + 1):
        p = (k + i) % N
        if mask[p] and start is None:
            start = p
        elif not mask[p] and start is not None:
            runs.append((start, (p - start) % N))
            start = None
    return runs


def classify(fprime, r, grid, c1=None, samples_per_interval=32):
    """
    Label each interval of the window as type 1, 2 or 3.

    Type 1 when ``|f'| <= c1 h^{r-1}`` on the whole interval, else type 2
    when ``|f'| >= h^{r-1}`` on the whole interval, else type 3.  Both
    conditions are decided on ``samples_per_interval`` points, endpoints
    included; a tie at the type-1 threshold counts as type 1.
    """
    if r < 2:
        raise ValueError("r must be at least 2")
    if samples_per_interval < 8:
        raise ValueError("need at least 8 samples per interval")
    if c1 is None:
        c1 = lemma1_constant(r)
    j = grid.indices()
    u = np.linspace(0.0, 1.0, samples_per_interval)
    x = grid.x(j)[:, None] + grid.h * u[None, :]
    vals = np.abs(np.asarray(fprime(x), dtype=float))
    vals = np.broadcast_to(vals, x.shape)
    hr = grid.h ** (r - 1)
    types = np.full(j.size, TYPE3, dtype=int)
    types[vals.min(axis=1) >= hr] = TYPE2
    types[vals.max(axis=1) <= c1 * hr] = TYPE1
    return PartitionState(grid=grid, r=r, c1=float(c1), types=types)


def find_packs(state):
    """Maximal circular runs of at least seven consecutive type-2 indices."""
    runs = _circular_runs(state.types == TYPE2)
    return tuple((s, L) for s, L in runs if L >= PACK_MIN)


def assign_groups(state):
    """
    Attach packs and the ``W1`` / ``W2`` grouping.

    Without packs every index is in ``W1``.  Otherwise the indices strictly
    between two adjacent packs all go to ``W1`` if a type-1 index lies among
    them and to ``W2`` if not; pack indices are never in ``W1``.
    """
    packs = find_packs(state)
    N = state.grid.size
    in_pack = np.zeros(N, dtype=bool)
    for s, L in packs:
        in_pack[(s + np.arange(L)) % N] = True
    if not packs:
        in_w1 = np.ones(N, dtype=bool)
    else:
        in_w1 = np.zeros(N, dtype=bool)
        for s, L in _circular_runs(~in_pack):
            gap = (s + np.arange(L)) % N
            if np.any(state.types[gap] == TYPE1):
                in_w1[gap] = True
    return dataclasses.replace(state, packs=packs, in_pack=in_pack, in_w1=in_w1)


def _star(mask):
    # closed intervals sharing an endpoint touch, so * dilates by one interval
    return mask | np.roll(mask, 1) | np.roll(mask, -1)


def build_regions(state):
    """``M`` (the ``W1`` intervals), its dilations ``M*``, ``M**`` and ``Omega = M***``."""
    M = state.in_w1.copy()
    M1 = _star(M)
    M2 = _star(M1)
    Omega = _star(M2)
    return dataclasses.replace(state, M=M, M1=M1, M2=M2, Omega=Omega)


def find_N1(Y):
    """Smallest ``n`` with every breakpoint gap larger than ``6 pi / n``."""
    g = float(Y.gaps().min())
    return int(np.floor(6.0 * np.pi / g)) + 1


def find_N(Y):
    """
    Smallest ``N`` admitting closed arcs of radius ``pi / N`` on which
    ``Pi >= 0`` and ``Pi <= 0`` respectively.

    Returns ``(N, x_plus, x_minus)`` with the arc centers as witnesses.
    """
    pi_poly = make_pi(Y)
    best = {1: (-1.0, None), -1: (-1.0, None)}
    for i in range(1, 2 * Y.s + 1):
        lo, hi = Y.y(i), Y.y(i - 1)
        mid = 0.5 * (lo + hi)
        sign = 1 if pi_poly(mid) > 0 else -1
        half = 0.5 * (hi - lo)
        if half > best[sign][0]:
            best[sign] = (half, mid)
    radius = min(best[1][0], best[-1][0])
    N = int(np.ceil(np.pi / radius - 1e-12))
    wrap = lambda x: (x + np.pi) % (2 * np.pi) - np.pi
    return N, wrap(best[1][1]), wrap(best[-1][1])


def build_O_and_H(Y, grid, check=True):
    """
    Breakpoint neighborhoods and the index set ``H``.

    For ``y_i in [x_j, x_{j-1})`` the neighborhood ``O_i = (x_{j+1}, x_{j-2})``
    covers the three intervals ``I_{j+1}, I_j, I_{j-1}``; those indices are
    excluded from ``H``.  Returns ``(O, in_O, H)`` where ``O`` is a tuple of
    ``(i, y_i, j, (left, right))`` and the masks live on the window.
    """
    if check and grid.n <= find_N1(Y):
        raise GridTooCoarse(f"n={grid.n} <= N1={find_N1(Y)}: breakpoint neighborhoods overlap")
    N = grid.size
    in_O = np.zeros(N, dtype=bool)
    O = []
    for i in range(1, 2 * Y.s + 1):
        y = Y.y(i)
        j = int(grid.index_of(y))
        cover = grid.pos(np.array([j + 1, j, j - 1]))
        if check and in_O[cover].any():
            raise GridTooCoarse(f"neighborhood of y_{i} overlaps another at n={grid.n}")
        in_O[cover] = True
        O.append((i, y, j, (float(grid.x(j + 1)), float(grid.x(j - 2)))))
    return tuple(O), in_O, ~in_O


def build_partition(fprime, r, n, Y=None, c1=None, samples_per_interval=32, validate=True):
    """Run classification, grouping, regions and (given ``Y``) the ``O``/``H`` sets."""
    grid = UniformGrid(n)
    state = classify(fprime, r, grid, c1, samples_per_interval)
    if validate:
        state.check_lemma2()
    state = build_regions(assign_groups(state))
    if Y is not None:
        O, in_O, H = build_O_and_H(Y, grid)
        state = dataclasses.replace(state, O=O, in_O=in_O, H=H)
    return state
