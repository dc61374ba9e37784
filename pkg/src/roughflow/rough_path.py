"""Geometric p-rough paths on time grids, p in [2, 3).

A rough path is a sampled first level Z together with second-level increments
zz compatible through Chen's relation

    zz_{st} = zz_{su} + zz_{ut} + dZ_{su} (x) dZ_{ut}.

Index convention: zz[j, k] approximates int dZ^j dZ^k (first index varies
first in time), so Chen's relation reads d(zz)_{sut}[j, k] =
dZ_{su}[j] dZ_{ut}[k].

Second-level data is stored for adjacent grid pairs only and composed on
demand, which keeps storage O(n) and makes composed windows exact by
construction.  A dense per-pair override exists so that validation
(``chen_defect``) can operate on externally supplied, possibly inconsistent
tables.

Brownian and fractional-Brownian second levels come from the canonical lift
of the piecewise-linear interpolation of exact marginal samples; this is the
geometric (limit-of-smooth-lifts) convention.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .rough_core import (
    DimensionError,
    ParameterError,
    TimeGrid,
    TwoParamFunction,
    increments_of_path,
    p_variation,
)

__all__ = [
    "RoughPath",
    "NoiseSpec",
    "canonical_lift",
    "chen_defect",
    "sample_noise",
    "time_reverse",
    "rough_distance",
    "restrict",
    "translate",
    "rng_for",
]

DEFAULT_P_BROWNIAN = 2.5


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; (seed, stream) fully determines the output."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))
    )


@dataclass(frozen=True)
class RoughPath:
    """First level Z (n, m) plus adjacent second-level blocks (n-1, m, m)."""

    grid: TimeGrid
    first_level: np.ndarray
    second_adjacent: np.ndarray
    p_exponent: float = DEFAULT_P_BROWNIAN
    second_dense: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.first_level, dtype=float))
        if z.shape[0] != len(self.grid):
            raise DimensionError("first level and grid length mismatch")
        a = np.asarray(self.second_adjacent, dtype=float)
        m = z.shape[1]
        if a.shape != (len(self.grid) - 1, m, m):
            raise DimensionError("adjacent second level must be (n-1, m, m)")
        if not (2 <= self.p_exponent < 3):
            raise ParameterError("p exponent must lie in [2, 3)")
        object.__setattr__(self, "first_level", z)
        object.__setattr__(self, "second_adjacent", a)

    @property
    def dim(self) -> int:
        return self.first_level.shape[1]

    @cached_property
    def _cums(self) -> tuple[np.ndarray, np.ndarray]:
        """Prefix sums (C, Q) so that composed windows are O(1) to evaluate.

        zz_{ij} = (C_j - C_i) + (Q_j - Q_i) - Z_i (x) (Z_j - Z_i)
        with C_j = sum_{k<j} zz_{k,k+1} and Q_j = sum_{k<j} Z_k (x) dZ_k.
        """
        z = self.first_level
        dz = np.diff(z, axis=0)
        zero = np.zeros((1, self.dim, self.dim))
        c = np.concatenate([zero, np.cumsum(self.second_adjacent, axis=0)])
        q = np.concatenate([zero, np.cumsum(z[:-1, :, None] * dz[:, None, :], axis=0)])
        return c, q

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.first_level[j] - self.first_level[i]

    def second(self, i: int, j: int) -> np.ndarray:
        """Second-level increment over (t_i, t_j), i <= j."""
        if i > j:
            raise ParameterError("need i <= j")
        if self.second_dense is not None:
            return self.second_dense[i, j]
        c, q = self._cums
        zi = self.first_level[i]
        return c[j] - c[i] + q[j] - q[i] - np.outer(zi, self.first_level[j] - zi)

    def second_all_pairs(self) -> np.ndarray:
        """Dense (n, n, m, m) table of composed second-level increments."""
        if self.second_dense is not None:
            return self.second_dense
        c, q = self._cums
        z = self.first_level
        cq = c + q
        table = cq[None, :] - cq[:, None] - z[:, None, :, None] * (
            z[None, :, None, :] - z[:, None, None, :]
        )
        n = len(self.grid)
        iu = np.triu_indices(n)
        out = np.zeros_like(table)
        out[iu] = table[iu]
        return out

    def with_dense_second(self) -> "RoughPath":
        """Materialise the per-pair table (for validation and fault injection)."""
        return replace(self, second_dense=self.second_all_pairs())

    def increments_function(self) -> TwoParamFunction:
        return increments_of_path(self.grid, self.first_level)

    def second_function(self) -> TwoParamFunction:
        m = self.dim
        return TwoParamFunction(self.grid, lambda i, j: self.second(i, j), (m, m))

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        def enc(a: np.ndarray) -> dict:
            a = np.ascontiguousarray(a, dtype="<f8")
            return {
                "shape": list(a.shape),
                "data": base64.b64encode(a.tobytes()).decode("ascii"),
            }

        doc = {
            "grid": enc(self.grid.times),
            "first_level": enc(self.first_level),
            "adjacent_second_level": enc(self.second_adjacent),
            "p_exponent": self.p_exponent,
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(text: str) -> "RoughPath":
        doc = json.loads(text)

        def dec(d: dict) -> np.ndarray:
            a = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
            return a.reshape(d["shape"]).astype(float)

        return RoughPath(
            TimeGrid(dec(doc["grid"])),
            dec(doc["first_level"]),
            dec(doc["adjacent_second_level"]),
            float(doc["p_exponent"]),
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Recipe for a driving rough path.

    kind: 'piecewise-linear-from-samples' | 'brownian' | 'fbm'
    hurst applies to fbm only and must lie in (1/3, 1]; level-2 rough path
    theory cannot represent rougher signals.
    """

    kind: str
    dimension: int
    grid: TimeGrid
    seed: int = 0
    hurst: float | None = None
    samples: np.ndarray | None = None
    p_exponent: float | None = None

    def __post_init__(self):
        if self.kind not in ("piecewise-linear-from-samples", "brownian", "fbm"):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if self.dimension < 1:
            raise ParameterError("dimension must be >= 1")
        if self.kind == "fbm":
            if self.hurst is None or not (1 / 3 < self.hurst <= 1):
                raise ParameterError(
                    "fbm requires a hurst exponent in (1/3, 1]; level-2 "
                    "rough paths cannot carry rougher signals"
                )
        if self.kind == "piecewise-linear-from-samples" and self.samples is None:
            raise ParameterError("piecewise-linear noise needs explicit samples")


def canonical_lift(
    grid: TimeGrid, samples: np.ndarray, p_exponent: float = DEFAULT_P_BROWNIAN
) -> RoughPath:
    """Lift sampled values, read as piecewise linear, to a geometric rough path.

    On a linear segment the second-level integral is exactly
    zz_{k,k+1} = (1/2) dZ_k (x) dZ_k; wider windows follow by Chen.
    """
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    if z.ndim == 2 and z.shape[0] == 1 and len(grid) > 1:
        z = z.T  # 1-d path passed as flat vector
    if z.shape[0] != len(grid):
        raise DimensionError(
            f"{z.shape[0]} samples on a grid of {len(grid)} points"
        )
    if not np.all(np.isfinite(z)):
        raise ParameterError("samples must be finite")
    dz = np.diff(z, axis=0)
    adjacent = 0.5 * dz[:, :, None] * dz[:, None, :]
    return RoughPath(grid, z, adjacent, p_exponent)


def chen_defect(rp: RoughPath) -> float:
    """Exact max over grid triples of |d(zz)_{sut} - dZ_{su} (x) dZ_{ut}|.

    Max-abs entry norm.  O(n^2) transient memory per split point; composed
    (adjacent-only) storage satisfies the relation by construction, so this
    check is informative mainly for dense overrides and serialized data.
    """
    n = len(rp.grid)
    z = rp.first_level
    dense = rp.second_dense
    if dense is None:
        c, q = rp._cums
        cq = c + q
    worst = 0.0
    for u in range(1, n - 1):
        if dense is not None:
            su = dense[:u, u]
            ut = dense[u, u + 1 :]
            st = dense[:u, u + 1 :]
        else:
            su = cq[u][None] - cq[:u] - z[:u, :, None] * (z[u][None, None, :] - z[:u, None, :])
            ut = cq[u + 1 :] - cq[u][None] - z[u][None, :, None] * (
                z[u + 1 :, None, :] - z[u][None, None, :]
            )
            st = cq[None, u + 1 :] - cq[:u, None] - z[:u, None, :, None] * (
                z[None, u + 1 :, None, :] - z[:u, None, None, :]
            )
        dz_su = z[u] - z[:u]
        dz_ut = z[u + 1 :] - z[u]
        cross = dz_su[:, None, :, None] * dz_ut[None, :, None, :]
        d = st - su[:, None] - ut[None, :] - cross
        worst = max(worst, float(np.abs(d).max()))
    return worst


def _fgn_davies_harte(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-spacing fractional Gaussian noise by circulant embedding.

    Returns None if the embedding produces negative spectrum (possible for
    small n with large H); callers fall back to Cholesky.
    """
    k = np.arange(n)
    rho = 0.5 * (
        np.abs(k + 1) ** (2 * hurst)
        + np.abs(k - 1) ** (2 * hurst)
        - 2 * np.abs(k) ** (2 * hurst)
    )
    circ = np.concatenate([rho, [0.0], rho[1:][::-1]])
    g = np.fft.fft(circ).real
    if np.min(g) < -1e-10 * max(1.0, np.max(np.abs(g))):
        return None
    g = np.clip(g, 0.0, None)
    m = 2 * n
    w = np.zeros(m, dtype=complex)
    w[0] = rng.standard_normal()
    w[n] = rng.standard_normal()
    v = rng.standard_normal((n - 1, 2))
    w[1:n] = (v[:, 0] + 1j * v[:, 1]) / np.sqrt(2)
    w[n + 1 :] = np.conj(w[1:n][::-1])
    fgn = np.sqrt(m) * np.fft.ifft(np.sqrt(g) * w).real[:n]
    return fgn


def _fbm_samples(grid: TimeGrid, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Exact-covariance fBm marginals at the grid times (one component)."""
    t = grid.times - grid.times[0]
    n = grid.n_steps
    if hurst == 1.0:
        # Degenerate perfectly correlated case: Z_t = t * xi.
        return t * rng.standard_normal()
    dt = np.diff(t)
    uniform = np.allclose(dt, dt[0], rtol=1e-12, atol=0.0)
    if uniform:
        fgn = _fgn_davies_harte(n, hurst, rng)
        if fgn is not None:
            incr = dt[0] ** hurst * fgn
            return np.concatenate([[0.0], np.cumsum(incr)])
    # Cholesky of the exact increment covariance (small n or failed embedding).
    s, u = np.meshgrid(t[1:], t[1:], indexing="ij")
    sp, up = np.meshgrid(t[:-1], t[:-1], indexing="ij")

    def cov(a, b):
        return 0.5 * (a ** (2 * hurst) + b ** (2 * hurst) - np.abs(a - b) ** (2 * hurst))

    c = cov(s, u) - cov(s, up) - cov(sp, u) + cov(sp, up)
    c = c + 1e-14 * np.eye(n) * max(1.0, c.diagonal().max())
    incr = np.linalg.cholesky(c) @ rng.standard_normal(n)
    return np.concatenate([[0.0], np.cumsum(incr)])


def sample_noise(spec: NoiseSpec) -> RoughPath:
    """Draw the rough path described by ``spec``; deterministic in the seed."""
    grid = spec.grid
    m = spec.dimension
    if spec.kind == "piecewise-linear-from-samples":
        p = spec.p_exponent or DEFAULT_P_BROWNIAN
        return canonical_lift(grid, spec.samples, p)
    rng = rng_for(spec.seed)
    if spec.kind == "brownian":
        dz = rng.standard_normal((grid.n_steps, m)) * np.sqrt(grid.dt())[:, None]
        z = np.vstack([np.zeros(m), np.cumsum(dz, axis=0)])
        p = spec.p_exponent or DEFAULT_P_BROWNIAN
        return canonical_lift(grid, z, p)
    # fbm: independent components, exact marginals, then geometric lift
    cols = [_fbm_samples(grid, spec.hurst, rng) for _ in range(m)]
    z = np.stack(cols, axis=1)
    if spec.p_exponent is not None:
        p = spec.p_exponent
    else:
        p = max(2.01, 1.0 / spec.hurst + 0.01)
        p = min(p, 2.99)
    return canonical_lift(grid, z, p)


def time_reverse(rp: RoughPath) -> RoughPath:
    """Run the driver backwards from the terminal time.

    First level is read in reverse order; adjacent second-level blocks become
    -zz + dZ (x) dZ, which keeps Chen's relation (and geometricity) intact.
    """
    t = rp.grid.times
    new_times = t[0] + (t[-1] - t[::-1])
    new_times[0] = t[0]
    new_times[-1] = t[-1]
    z = rp.first_level[::-1].copy()
    dz = np.diff(rp.first_level, axis=0)  # original adjacent increments
    sym = dz[:, :, None] * dz[:, None, :]
    adjacent = (-rp.second_adjacent + sym)[::-1].copy()
    return RoughPath(TimeGrid(new_times), z, adjacent, rp.p_exponent)


def rough_distance(a: RoughPath, b: RoughPath, p: float | None = None) -> float:
    """Inhomogeneous rough metric |Z_a0 - Z_b0| + [[dZ]]_p + [[zz diff]]_{p/2}."""
    if len(a.grid) != len(b.grid) or not np.allclose(
        a.grid.times, b.grid.times, rtol=1e-12, atol=1e-14
    ):
        raise DimensionError("rough distance requires a shared grid")
    if a.dim != b.dim:
        raise DimensionError("rough distance requires equal dimensions")
    if p is None:
        p = max(a.p_exponent, b.p_exponent)
    dz = increments_of_path(a.grid, a.first_level - b.first_level)
    m = a.dim
    dsecond = TwoParamFunction(
        a.grid, lambda i, j: a.second(i, j) - b.second(i, j), (m, m)
    )
    start = float(np.linalg.norm(a.first_level[0] - b.first_level[0]))
    return start + p_variation(dz, p) + p_variation(dsecond, p / 2)


def restrict(rp: RoughPath, window: tuple[int, int]) -> RoughPath:
    """Sub-path on grid indices [i0, i1]; the clock is kept as is."""
    i0, i1 = window
    if not (0 <= i0 < i1 < len(rp.grid)):
        raise ParameterError(f"window ({i0}, {i1}) out of range")
    dense = None
    if rp.second_dense is not None:
        dense = rp.second_dense[i0 : i1 + 1, i0 : i1 + 1]
    return RoughPath(
        TimeGrid(rp.grid.times[i0 : i1 + 1]),
        rp.first_level[i0 : i1 + 1],
        rp.second_adjacent[i0:i1],
        rp.p_exponent,
        dense,
    )


def translate(rp: RoughPath, shift: int) -> RoughPath:
    """Time-shift the driver: increments over (s, t) become those over
    (s + u, t + u).  The clock is rebased to start at the original origin."""
    n = len(rp.grid)
    if not (0 <= shift < n - 1):
        raise ParameterError(f"shift {shift} out of range")
    if shift == 0:
        return rp
    t = rp.grid.times
    new_times = t[shift:] - t[shift] + t[0]
    new_times[0] = t[0]
    return RoughPath(
        TimeGrid(new_times),
        rp.first_level[shift:],
        rp.second_adjacent[shift:],
        rp.p_exponent,
    )
