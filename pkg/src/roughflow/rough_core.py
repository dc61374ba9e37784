"""Two-parameter function algebra on time grids.

Increments, grid-restricted p-variation seminorms, superadditive controls,
and a sewing-style integrator for nearly additive germs.  Everything here is
a pure function of immutable inputs; downstream solvers build on these
primitives.

The p-variation computed here is the supremum over sub-partitions drawn from
the *sampled grid points*.  It is a lower bound for the continuum supremum
over all partitions; all quantities derived from it (controls, distances)
inherit this grid-restricted semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "TimeGrid",
    "TwoParamFunction",
    "Control",
    "increments_of_path",
    "p_variation",
    "control_from_variation",
    "check_superadditive",
    "sew",
    "SewResult",
]


class ParameterError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class DimensionError(ValueError):
    """Raised on shape/length mismatches between grids and data."""


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing finite sequence of instants t_0 < ... < t_n."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ParameterError("time grid needs at least two instants")
        if not np.all(np.isfinite(t)):
            raise ParameterError("time grid values must be finite")
        if not np.all(np.diff(t) > 0):
            raise ParameterError("time grid must be strictly increasing")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @staticmethod
    def uniform(t0: float, t1: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ParameterError("need at least one step")
        return TimeGrid(np.linspace(t0, t1, n_steps + 1))

    @staticmethod
    def dyadic(level: int, t0: float = 0.0, t1: float = 1.0) -> "TimeGrid":
        return TimeGrid.uniform(t0, t1, 2**level)

    def index_of(self, t: float, tol: float = 1e-12) -> int:
        """Index of the grid point equal to ``t`` (within ``tol``)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise ParameterError(f"{t} is not a grid point")
        return i


@dataclass(frozen=True)
class TwoParamFunction:
    """Values g_{t_i t_j} on grid pairs i <= j, with g_{t_i t_i} = 0.

    Backed by an evaluator ``(i, j) -> value`` so large grids never
    materialise the full (n, n) table; ``norms_table`` produces the dense
    |g| matrix needed by the variation DP.
    """

    grid: TimeGrid
    evaluator: Callable[[int, int], np.ndarray]
    value_shape: tuple = ()

    def __call__(self, i: int, j: int) -> np.ndarray:
        if i > j:
            raise ParameterError("two-parameter functions need i <= j")
        return self.evaluator(i, j)

    def norms_table(self, i0: int = 0, j1: int | None = None) -> np.ndarray:
        """Dense table N[a, b] = |g(i0+a, i0+b)| for the window [i0, j1]."""
        n = len(self.grid) if j1 is None else j1 + 1
        m = n - i0
        out = np.zeros((m, m))
        for a in range(m):
            for b in range(a + 1, m):
                v = self.evaluator(i0 + a, i0 + b)
                out[a, b] = np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float)))
        return out

    @staticmethod
    def from_dense(grid: TimeGrid, table: np.ndarray) -> "TwoParamFunction":
        """Wrap a dense array indexed [i, j, ...]; diagonal must vanish."""
        table = np.asarray(table, dtype=float)
        n = len(grid)
        if table.shape[:2] != (n, n):
            raise DimensionError("dense table must be (n, n, ...)")
        return TwoParamFunction(grid, lambda i, j: table[i, j], table.shape[2:])


def increments_of_path(grid: TimeGrid, path: np.ndarray) -> TwoParamFunction:
    """First-order increments g(i, j) = path[j] - path[i]."""
    path = np.asarray(path, dtype=float)
    if path.shape[0] != len(grid):
        raise DimensionError(
            f"path has {path.shape[0]} samples, grid has {len(grid)} points"
        )
    if not np.all(np.isfinite(path)):
        raise ParameterError("path values must be finite")
    return TwoParamFunction(grid, lambda i, j: path[j] - path[i], path.shape[1:])


def _pvar_dp(norms: np.ndarray, p: float) -> float:
    """Max of sum |g|^p over increasing index subsequences 0 = a_0 < ... = end.

    Classic O(n^2) dynamic programme: cum[j] = max_m cum[m] + N[m, j]^p.
    """
    n = norms.shape[0]
    powered = norms**p
    cum = np.zeros(n)
    for j in range(1, n):
        cum[j] = np.max(cum[:j] + powered[:j, j])
    return float(cum[-1])


def p_variation(
    g: TwoParamFunction, p: float, window: tuple[int, int] | None = None
) -> float:
    """Grid-restricted p-variation seminorm of g over ``window``.

    Exact supremum of (sum |g|^p)^(1/p) over sub-partitions drawn from grid
    points in [t_i, t_j]; a lower bound for the continuum seminorm.
    """
    if p < 1:
        raise ParameterError(f"p-variation needs p >= 1, got {p}")
    i, j = window if window is not None else (0, len(g.grid) - 1)
    if not (0 <= i < j < len(g.grid)):
        raise ParameterError(f"window ({i}, {j}) is empty or out of range")
    norms = g.norms_table(i, j)
    return _pvar_dp(norms, p) ** (1.0 / p)


@dataclass(frozen=True)
class Control:
    """Nonnegative superadditive two-parameter function w(t_i, t_j).

    Stored densely for grids up to ``dense_limit`` points; beyond that the
    evaluator is called on demand.
    """

    grid: TimeGrid
    evaluator: Callable[[int, int], float]
    table: np.ndarray | None = field(default=None, repr=False)

    # Dense (i, j) tables stay affordable up to ~4096 points memory-wise, but
    # materialising a variation-derived control reruns the DP per entry, so
    # eager construction is capped much lower; larger grids evaluate lazily.
    dense_limit = 256

    def __call__(self, i: int, j: int) -> float:
        if i > j:
            raise ParameterError("controls need i <= j")
        if self.table is not None:
            return float(self.table[i, j])
        return float(self.evaluator(i, j))

    @staticmethod
    def from_evaluator(grid: TimeGrid, evaluator) -> "Control":
        n = len(grid)
        if n <= Control.dense_limit:
            table = np.zeros((n, n))
            for i in range(n):
                for j in range(i + 1, n):
                    table[i, j] = evaluator(i, j)
            return Control(grid, evaluator, table)
        return Control(grid, evaluator)

    def dense(self) -> np.ndarray:
        if self.table is not None:
            return self.table
        n = len(self.grid)
        table = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                table[i, j] = self.evaluator(i, j)
        return table


def control_from_variation(g: TwoParamFunction, p: float) -> Control:
    """The control w(s, t) = [p-variation of g over [s, t]]^p.

    This is the minimal control dominating |g|^p on the grid.
    """
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    n = len(g.grid)
    # One norms table shared by all windows; each window reruns the DP.
    norms = g.norms_table(0, n - 1)

    def w(i: int, j: int) -> float:
        if i == j:
            return 0.0
        return _pvar_dp(norms[i : j + 1, i : j + 1], p)

    return Control.from_evaluator(g.grid, w)


def check_superadditive(
    w: Control, tol: float = 1e-10
) -> tuple[bool, tuple[int, int, int] | None, float]:
    """Verify w(i,j) + w(j,k) <= w(i,k) + slack on all grid triples.

    ``tol`` is relative to the magnitude of w over the full window.  Returns
    (ok, worst_triple, worst_violation) with worst_violation > 0 meaning the
    inequality failed by that amount.
    """
    n = len(w.grid)
    scale = max(abs(w(0, n - 1)), 1.0)
    table = w.dense()
    worst = -np.inf
    worst_triple = None
    for j in range(1, n - 1):
        # violation[i, k] = w(i, j) + w(j, k) - w(i, k) for i < j < k
        v = table[:j, j : j + 1] + table[j, j + 1 :][None, :] - table[:j, j + 1 :]
        idx = np.unravel_index(np.argmax(v), v.shape)
        if v[idx] > worst:
            worst = float(v[idx])
            worst_triple = (int(idx[0]), j, int(idx[1]) + j + 1)
    ok = worst <= tol * scale
    return ok, worst_triple, float(worst)


@dataclass(frozen=True)
class SewResult:
    """Compensated sums of a germ plus coherence diagnostics.

    ``integral`` is the two-parameter function I(s,t) = sum of germ values
    over the finest-grid subintervals of [s, t].  ``coherence_exponent`` is
    the fitted slope of log |delta germ_{sut}| against log (t - s); additive
    germs have no defect and the exponent is reported as ``inf``.
    """

    integral: TwoParamFunction
    coherence_exponent: float
    max_defect: float
    defect_scale: np.ndarray
    defect_size: np.ndarray


def sew(germ: TwoParamFunction, p: float) -> SewResult:
    """Integrate a nearly additive germ over the supplied grid.

    No adaptive refinement is performed: the returned increments are the
    compensated Riemann sums at the grid's own resolution, and the
    diagnostics report how coherent the germ was (exponent > 1 is the sewing
    regime 3/p > 1 for germs paired with a level-2 rough path).
    """
    if p <= 0:
        raise ParameterError("p must be positive")
    grid = germ.grid
    n = len(grid)
    adj = [np.asarray(germ(k, k + 1), dtype=float) for k in range(n - 1)]
    cum = np.concatenate(
        [np.zeros((1,) + adj[0].shape), np.cumsum(np.stack(adj), axis=0)]
    )

    integral = TwoParamFunction(grid, lambda i, j: cum[j] - cum[i], germ.value_shape)

    # Defect |delta germ_{sut}| sampled on midpoint triples at dyadic spans.
    scales, sizes = [], []
    max_defect = 0.0
    span = n - 1
    while span >= 2:
        step = max(1, span // 2)
        for i in range(0, n - span, max(1, span // 4)):
            s, u, t = i, i + step, i + span
            if t >= n:
                break
            d = np.asarray(germ(s, t)) - np.asarray(germ(s, u)) - np.asarray(germ(u, t))
            size = float(np.linalg.norm(np.atleast_1d(d)))
            scales.append(grid.times[t] - grid.times[s])
            sizes.append(size)
            max_defect = max(max_defect, size)
        span //= 2
    scales = np.asarray(scales)
    sizes = np.asarray(sizes)

    if max_defect == 0.0 or sizes.size < 2:
        exponent = np.inf
    else:
        mask = sizes > 0
        if mask.sum() < 2:
            exponent = np.inf
        else:
            exponent = float(
                np.polyfit(np.log(scales[mask]), np.log(sizes[mask]), 1)[0]
            )
    return SewResult(integral, exponent, max_defect, scales, sizes)
