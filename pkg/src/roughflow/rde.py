"""Davie-scheme solver for dy = b(t, y) dt + xi(y) dZ and its flow maps.

One step of the scheme advances

    y' = y + b(t_i, y) dt + xi(y) dZ + Xi(y) zz,      Xi = Dxi . xi,

with the drift frozen at the left endpoint and (dZ, zz) the driving rough
path's increments over the step.  Inverse flows integrate the time-reversed
driver with negated, time-reflected drift; they never root-find.

All states are row vectors; solvers are vectorized over seed batches and
share the (read-only) driver, so a flow solve is one pass over the grid
regardless of the number of seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .osgood import OsgoodModulus, bihari_bound, builtin_modulus
from .rough_core import ParameterError, TimeGrid
from .rough_path import RoughPath, restrict, time_reverse, translate

__all__ = [
    "VectorFieldSet",
    "DriftField",
    "Trajectory",
    "FlowMap",
    "DivergenceError",
    "davie_step",
    "solve_rde",
    "solve_flow",
    "inverse_flow",
    "jacobian_probe_seeds",
    "jacobian_determinant",
    "flow_modulus_diagnostic",
    "cocycle_check",
    "cross_grid_remainder",
    "constant_noise",
    "solenoidal_sine_noise",
    "zero_drift",
    "rotation_drift",
    "linear_drift",
    "expansion_drift",
    "shear_drift",
    "log_lipschitz_drift",
]

DIVERGENCE_THRESHOLD = 1e12

_trapezoid = getattr(np, "trapezoid", None) or np.trapz
FD_STEP = 1e-5


class DivergenceError(RuntimeError):
    """A trajectory left the admissible region (|y| > 1e12 or non-finite)."""


# ---------------------------------------------------------------------------
# field containers


@dataclass(frozen=True)
class VectorFieldSet:
    """Noise vector fields xi_k with differentials, as batched evaluators.

    ``xi(X)`` maps (N, d) points to (N, d, m); ``dxi(X)`` to (N, m, d, d)
    with dxi[n, k, i, l] = d/dx_l xi_k^i.  When ``dxi`` is None a central
    finite difference with step 1e-5 is substituted and flagged.
    """

    dim: int
    count: int
    xi: Callable[[np.ndarray], np.ndarray]
    dxi: Callable[[np.ndarray], np.ndarray] | None = None
    divergence: Callable[[np.ndarray], np.ndarray] | None = None
    divergence_free: bool = False
    constant_matrix: np.ndarray | None = None
    name: str = "custom"

    @property
    def uses_fd_differentials(self) -> bool:
        return self.dxi is None and self.constant_matrix is None

    def differentials(self, x: np.ndarray) -> np.ndarray:
        if self.constant_matrix is not None:
            return np.zeros((x.shape[0], self.count, self.dim, self.dim))
        if self.dxi is not None:
            return self.dxi(x)
        out = np.empty((x.shape[0], self.count, self.dim, self.dim))
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = FD_STEP
            diff = (self.xi(x + e) - self.xi(x - e)) / (2 * FD_STEP)
            out[:, :, :, l] = np.swapaxes(diff, 1, 2)
        return out

    def second_order_term(self, x: np.ndarray, zz: np.ndarray) -> np.ndarray:
        """Xi(x) applied to the matrix zz: sum_jk Dxi_k xi_j zz[j, k]."""
        if self.constant_matrix is not None:
            return np.zeros_like(x)
        dxi = self.differentials(x)
        vals = self.xi(x)
        return np.einsum("nkil,nlj,jk->ni", dxi, vals, zz)

    def check_consistency(self, probes: np.ndarray, rtol: float = 1e-6) -> None:
        """Verify dxi against finite differences and the divergence-free flag."""
        vals = self.xi(probes)
        scale = max(1.0, float(np.abs(vals).max()))
        if self.dxi is not None:
            got = self.dxi(probes)
            fd = np.empty_like(got)
            for l in range(self.dim):
                e = np.zeros(self.dim)
                e[l] = FD_STEP
                diff = (self.xi(probes + e) - self.xi(probes - e)) / (2 * FD_STEP)
                fd[:, :, :, l] = np.swapaxes(diff, 1, 2)
            if np.abs(got - fd).max() > rtol * scale:
                raise ParameterError(
                    f"differentials of {self.name!r} disagree with finite differences"
                )
        if self.divergence_free:
            div = self.divergence_values(probes)
            if np.abs(div).max() > 1e-10 * scale:
                raise ParameterError(
                    f"{self.name!r} is flagged divergence-free but has "
                    f"sampled divergence {np.abs(div).max():.2e}"
                )

    def divergence_values(self, x: np.ndarray) -> np.ndarray:
        if self.divergence is not None:
            return self.divergence(x)
        dxi = self.differentials(x)
        return np.einsum("nkii->nk", dxi)


@dataclass(frozen=True)
class DriftField:
    """Drift b(t, x) with the bounds used by the Osgood diagnostics.

    ``g_bound`` dominates |b_t(x)| on the working box, ``modulus`` is the
    Osgood modulus of the spatial dependence, ``div_sup`` bounds the
    divergence sup-norm; the last two may be None when not needed.
    """

    dim: int
    evaluator: Callable[[float, np.ndarray], np.ndarray]
    g_bound: Callable[[float], float] | None = None
    modulus: OsgoodModulus | None = None
    divergence: Callable[[float, np.ndarray], np.ndarray] | None = None
    div_sup: Callable[[float], float] | None = None
    autonomous: bool = True
    name: str = "custom"

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.evaluator(t, x)

    def g_integral(self, t0: float, t1: float, n: int = 256) -> float:
        """Trapezoid of the bound schedule, for Bihari envelopes."""
        if self.g_bound is None:
            raise ParameterError(f"drift {self.name!r} carries no bound schedule")
        ts = np.linspace(t0, t1, n + 1)
        gs = np.array([self.g_bound(s) for s in ts])
        return float(_trapezoid(gs, ts))


# ---------------------------------------------------------------------------
# builtin fields


def constant_noise(sigma: np.ndarray) -> VectorFieldSet:
    """xi(x) = sigma constant; the second-order map vanishes identically."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d, m = sigma.shape

    def xi(x):
        return np.broadcast_to(sigma, (x.shape[0], d, m))

    return VectorFieldSet(
        dim=d,
        count=m,
        xi=xi,
        divergence=lambda x: np.zeros((x.shape[0], m)),
        divergence_free=True,
        constant_matrix=sigma,
        name=f"constant({d}x{m})",
    )


def solenoidal_sine_noise(amplitude: float = 0.2, wavenumber: float = 1.0) -> VectorFieldSet:
    """Two divergence-free shear fields on R^2:
    xi_1 = (a sin(k y2), 0), xi_2 = (0, a sin(k y1))."""
    a, k = float(amplitude), float(wavenumber)

    def xi(x):
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = a * np.sin(k * x[:, 1])
        out[:, 1, 1] = a * np.sin(k * x[:, 0])
        return out

    def dxi(x):
        out = np.zeros((x.shape[0], 2, 2, 2))
        out[:, 0, 0, 1] = a * k * np.cos(k * x[:, 1])
        out[:, 1, 1, 0] = a * k * np.cos(k * x[:, 0])
        return out

    return VectorFieldSet(
        dim=2,
        count=2,
        xi=xi,
        dxi=dxi,
        divergence=lambda x: np.zeros((x.shape[0], 2)),
        divergence_free=True,
        name=f"solenoidal_sine(a={a},k={k})",
    )


def zero_drift(dim: int) -> DriftField:
    return DriftField(
        dim=dim,
        evaluator=lambda t, x: np.zeros_like(x),
        g_bound=lambda t: 0.0,
        modulus=builtin_modulus("linear", 1e-12),
        divergence=lambda t, x: np.zeros(x.shape[0]),
        div_sup=lambda t: 0.0,
        name="zero",
    )


def rotation_drift(omega: float = 1.0, box_radius: float = 10.0) -> DriftField:
    """Rigid rotation b(y) = omega (-y2, y1); the stated bound g is only
    valid on the centred box of the given radius."""

    def ev(t, x):
        return omega * np.stack([-x[:, 1], x[:, 0]], axis=1)

    return DriftField(
        dim=2,
        evaluator=ev,
        g_bound=lambda t: abs(omega) * box_radius,
        modulus=builtin_modulus("linear", max(abs(omega), 1e-12)),
        divergence=lambda t, x: np.zeros(x.shape[0]),
        div_sup=lambda t: 0.0,
        name=f"rotation({omega})",
    )


def linear_drift(matrix: np.ndarray, box_radius: float = 10.0) -> DriftField:
    a = np.asarray(matrix, dtype=float)
    d = a.shape[0]
    norm = float(np.linalg.norm(a, 2))
    return DriftField(
        dim=d,
        evaluator=lambda t, x: x @ a.T,
        g_bound=lambda t: norm * box_radius,
        modulus=builtin_modulus("linear", max(norm, 1e-12)),
        divergence=lambda t, x: np.full(x.shape[0], float(np.trace(a))),
        div_sup=lambda t: abs(float(np.trace(a))),
        name="linear",
    )


def expansion_drift(c: float, dim: int = 2, box_radius: float = 10.0) -> DriftField:
    return linear_drift(c * np.eye(dim), box_radius)


def shear_drift(amplitude: float = 1.0, wavenumber: float = 1.0) -> DriftField:
    """Divergence-free shear b(y) = (a sin(k y2), 0) on R^2; globally bounded."""
    a, k = float(amplitude), float(wavenumber)

    def ev(t, x):
        out = np.zeros_like(x)
        out[:, 0] = a * np.sin(k * x[:, 1])
        return out

    return DriftField(
        dim=2,
        evaluator=ev,
        g_bound=lambda t: abs(a) * max(1.0, k),
        modulus=builtin_modulus("linear", abs(a) * k + 1e-12),
        divergence=lambda t, x: np.zeros(x.shape[0]),
        div_sup=lambda t: 0.0,
        name=f"shear(a={a},k={k})",
    )


def log_lipschitz_drift(dim: int = 1) -> DriftField:
    """Contracting drift b(y) = -y min(1, -ln(min(|y|, 0.9))).

    Osgood but not Lipschitz at the origin; its modulus of continuity is the
    log-Lipschitz one (up to a constant).
    """

    def ev(t, x):
        r = np.linalg.norm(x, axis=1)
        r_c = np.minimum(np.maximum(r, 1e-300), 0.9)
        factor = np.minimum(1.0, -np.log(r_c))
        return -x * factor[:, None]

    return DriftField(
        dim=dim,
        evaluator=ev,
        g_bound=lambda t: 1.0,
        modulus=builtin_modulus("log-lipschitz"),
        name="log_lipschitz",
    )


# ---------------------------------------------------------------------------
# trajectories and flows


@dataclass(frozen=True)
class Trajectory:
    """States on the driver grid.  ``remainder_norms`` holds the per-step
    expansion defect, identically zero for the scheme itself by construction;
    cross-grid estimates live in :func:`cross_grid_remainder`."""

    grid: TimeGrid
    states: np.ndarray
    remainder_norms: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class FlowMap:
    """One trajectory per seed on a shared grid; states are (n_times, N, d)."""

    grid: TimeGrid
    seeds: np.ndarray
    states: np.ndarray
    direction: str = "forward"
    diverged: np.ndarray = field(default=None, repr=False)

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(
            self.grid, self.states[:, k], np.zeros(len(self.grid) - 1)
        )

    def at_time_index(self, i: int) -> np.ndarray:
        return self.states[i]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def _drift_eval(b, t: float, x: np.ndarray) -> np.ndarray:
    if b is None:
        return np.zeros_like(x)
    return b(t, x)


def _step_batch(
    y: np.ndarray,
    b,
    vfs: VectorFieldSet | None,
    t_i: float,
    dt: float,
    dz: np.ndarray,
    zz: np.ndarray,
) -> np.ndarray:
    out = y + dt * _drift_eval(b, t_i, y)
    if vfs is not None:
        if vfs.constant_matrix is not None:
            out = out + dz @ vfs.constant_matrix.T
        else:
            out = out + np.einsum("ndm,m->nd", vfs.xi(y), dz)
            out = out + vfs.second_order_term(y, zz)
    return out


def davie_step(
    y: np.ndarray,
    b,
    vfs: VectorFieldSet | None,
    rp: RoughPath,
    step: tuple[int, int],
) -> np.ndarray:
    """One forward step over the adjacent grid pair ``step``."""
    i, j = step
    if j != i + 1:
        raise ParameterError("davie_step needs an adjacent grid pair")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    batch = y[None, :] if single else y
    t = rp.grid.times
    out = _step_batch(
        batch, b, vfs, t[i], t[j] - t[i], rp.increment(i, j), rp.second_adjacent[i]
    )
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"state became non-finite over step ({i}, {j})")
    return out[0] if single else out


def _integrate(
    seeds: np.ndarray,
    b,
    vfs: VectorFieldSet | None,
    rp: RoughPath,
    store_all: bool = True,
    div_accumulator: np.ndarray | None = None,
    b_div=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance all seeds across the grid; freeze seeds that diverge.

    Optionally accumulates int div b(t, y_t) dt along each trajectory
    (left-endpoint rule, matching the drift freezing).
    """
    t = rp.grid.times
    n = len(rp.grid)
    y = np.array(seeds, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    alive = np.ones(y.shape[0], dtype=bool)
    states = np.empty((n, *y.shape)) if store_all else None
    if store_all:
        states[0] = y
    for i in range(n - 1):
        dt = t[i + 1] - t[i]
        dz = rp.increment(i, i + 1)
        zz = rp.second_adjacent[i]
        if alive.all():
            if b_div is not None and div_accumulator is not None:
                div_accumulator += dt * b_div(t[i], y)
            new = _step_batch(y, b, vfs, t[i], dt, dz, zz)
            bad = ~np.isfinite(new).all(axis=1) | (
                np.abs(new).max(axis=1) > DIVERGENCE_THRESHOLD
            )
            if bad.any():
                new[bad] = y[bad]  # freeze at the last finite state
                alive[bad] = False
            y = new
        else:
            idx = np.flatnonzero(alive)
            if idx.size:
                if b_div is not None and div_accumulator is not None:
                    div_accumulator[idx] += dt * b_div(t[i], y[idx])
                new = _step_batch(y[idx], b, vfs, t[i], dt, dz, zz)
                bad = ~np.isfinite(new).all(axis=1) | (
                    np.abs(new).max(axis=1) > DIVERGENCE_THRESHOLD
                )
                if bad.any():
                    new[bad] = y[idx[bad]]
                    alive[idx[bad]] = False
                y = y.copy()
                y[idx] = new
        if store_all:
            states[i + 1] = y
    return (states if store_all else y), alive


def solve_rde(
    y0: np.ndarray, b, vfs: VectorFieldSet | None, rp: RoughPath
) -> Trajectory:
    """Iterate the one-step scheme over the whole grid for a single state."""
    states, alive = _integrate(np.atleast_1d(np.asarray(y0, dtype=float)), b, vfs, rp)
    if not alive[0]:
        raise DivergenceError("trajectory diverged; see flow solver for context")
    return Trajectory(rp.grid, states[:, 0], np.zeros(len(rp.grid) - 1))


def solve_flow(
    seeds: np.ndarray, b, vfs: VectorFieldSet | None, rp: RoughPath
) -> FlowMap:
    """Advance every seed against the shared driver, one pass over the grid."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[0] == 0:
        raise ParameterError("solve_flow needs at least one seed")
    states, alive = _integrate(seeds, b, vfs, rp)
    return FlowMap(rp.grid, seeds, states, "forward", ~alive)


def reversed_drift(b: DriftField | None, t_end: float, t0: float = 0.0):
    """Drift of the time-reversed equation: bback_s(x) = -b_{t_end - s}(x)."""
    if b is None:
        return None

    def ev(s, x):
        return -b(t_end - (s - t0), x)

    return ev


def inverse_flow(
    targets: np.ndarray,
    b,
    vfs: VectorFieldSet | None,
    rp: RoughPath,
    t: float | None = None,
) -> np.ndarray:
    """Map states at time t back to time 0 through the reversed driver."""
    grid = rp.grid
    it = len(grid) - 1 if t is None else grid.index_of(t)
    if it == 0:
        return np.atleast_2d(np.asarray(targets, dtype=float)).copy()
    sub = restrict(rp, (0, it)) if it < len(grid) - 1 else rp
    back = time_reverse(sub)
    t_end = grid.times[it]
    bback = reversed_drift(b, t_end, grid.times[0]) if b is not None else None
    final, _ = _integrate(
        np.atleast_2d(np.asarray(targets, dtype=float)),
        bback,
        vfs,
        back,
        store_all=False,
    )
    return final


def jacobian_probe_seeds(x: np.ndarray, fd_step: float) -> np.ndarray:
    """The 2d seeds x +- fd_step e_i needed by the determinant probe."""
    x = np.asarray(x, dtype=float)
    d = x.size
    seeds = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = fd_step
        seeds.append(x + e)
        seeds.append(x - e)
    return np.array(seeds)


def jacobian_determinant(
    flow: FlowMap, t: float, x: np.ndarray, fd_step: float
) -> float:
    """Central finite-difference determinant of y -> Phi_t(y) at x.

    The flow must have been seeded with x +- fd_step e_i; a missing probe
    seed raises.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    it = flow.grid.index_of(t)
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = fd_step
        plus = _find_seed(flow, x + e)
        minus = _find_seed(flow, x - e)
        cols.append(
            (flow.states[it, plus] - flow.states[it, minus]) / (2 * fd_step)
        )
    return float(np.linalg.det(np.stack(cols, axis=1)))


def _find_seed(flow: FlowMap, x: np.ndarray) -> int:
    d2 = np.sum((flow.seeds - x[None, :]) ** 2, axis=1)
    k = int(np.argmin(d2))
    if d2[k] > 1e-24:
        raise ParameterError(
            "flow was not seeded with the finite-difference probe points"
        )
    return k


def flow_modulus_diagnostic(
    flow: FlowMap,
    h: OsgoodModulus,
    g_total: float,
    ladder: np.ndarray | None = None,
) -> tuple[float | None, list]:
    """Smallest ladder constant C with
    sup_t |Phi_t(x) - Phi_t(x')| <= M^h(C |x - x'|, C g_total) for all pairs.

    Returns (C, violations-at-largest-C); C is None when even the largest
    candidate fails.
    """
    if flow.seeds.shape[0] < 2:
        raise ParameterError("modulus diagnostic needs at least two seeds")
    if ladder is None:
        ladder = 2.0 ** np.arange(-3, 11)
    seeds = flow.seeds
    n_seed = seeds.shape[0]
    pairs = [(i, j) for i in range(n_seed) for j in range(i + 1, n_seed)]
    sup_dist = {
        (i, j): float(
            np.max(np.linalg.norm(flow.states[:, i] - flow.states[:, j], axis=1))
        )
        for (i, j) in pairs
    }
    slack = 1e-9
    last_violations: list = []
    for c in ladder:
        violations = []
        for (i, j) in pairs:
            alpha = c * float(np.linalg.norm(seeds[i] - seeds[j]))
            bound = bihari_bound(h, alpha, c * g_total)
            if sup_dist[(i, j)] > bound * (1 + slack) + slack:
                violations.append((i, j, sup_dist[(i, j)], bound))
        if not violations:
            return float(c), []
        last_violations = violations
    return None, last_violations


def cocycle_check(
    b: DriftField | None,
    vfs: VectorFieldSet | None,
    rp: RoughPath,
    split_index: int,
    seeds: np.ndarray,
) -> float:
    """Deviation between Phi_{0->T} and Phi_{u->T} o Phi_{0->u}, the second
    leg driven by the translated rough path.  Grid-aligned splitting makes
    this float-noise only."""
    if b is not None and not b.autonomous:
        raise ParameterError("the cocycle property needs an autonomous drift")
    n = len(rp.grid)
    if not (0 <= split_index <= n - 1):
        raise ParameterError("split index out of range")
    full = solve_flow(seeds, b, vfs, rp)
    if split_index in (0, n - 1):
        leg = solve_flow(seeds, b, vfs, rp)
        return float(np.max(np.abs(leg.terminal - full.terminal)))
    first = solve_flow(seeds, b, vfs, restrict(rp, (0, split_index)))
    shifted = translate(rp, split_index)
    second = solve_flow(first.terminal, b, vfs, shifted)
    return float(np.max(np.abs(second.terminal - full.terminal)))


def cross_grid_remainder(
    traj: Trajectory,
    b,
    vfs: VectorFieldSet | None,
    rp: RoughPath,
    min_span: int = 2,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Fitted decay exponent of the expansion defect on dyadic windows.

    For windows (s, t) spanning 2, 4, 8, ... grid steps, measures

        y_def = dy_{st} - int_s^t b(u, y_u) du - xi(y_s) dZ_{st} - Xi(y_s) zz_{st}

    with the drift integral evaluated by the trapezoid rule on the stored
    states.  Returns (exponent, window lengths, mean defect per length); the
    remainder class of the solution concept corresponds to exponents > 1.
    """
    grid = rp.grid
    t = grid.times
    n = len(grid)
    y = traj.states
    scales, sizes = [], []
    span = min_span
    while span <= (n - 1) // 2:
        defects = []
        for s in range(0, n - span, span):
            e = s + span
            ys = y[s : e + 1]
            drift = np.zeros(y.shape[1])
            if b is not None:
                vals = np.stack([b(t[k], ys[k - s][None, :])[0] for k in range(s, e + 1)])
                drift = _trapezoid(vals, t[s : e + 1], axis=0)
            dz = rp.increment(s, e)
            zz = rp.second(s, e)
            expansion = drift.copy()
            if vfs is not None:
                pt = y[s][None, :]
                if vfs.constant_matrix is not None:
                    expansion += vfs.constant_matrix @ dz
                else:
                    expansion += np.einsum("ndm,m->nd", vfs.xi(pt), dz)[0]
                    expansion += vfs.second_order_term(pt, zz)[0]
            defects.append(float(np.linalg.norm(y[e] - y[s] - expansion)))
        mean = float(np.mean(defects))
        if mean > 0:
            scales.append(t[span] - t[0])
            sizes.append(mean)
        span *= 2
    scales = np.asarray(scales)
    sizes = np.asarray(sizes)
    if sizes.size < 2:
        return np.inf, scales, sizes
    slope = float(np.polyfit(np.log(scales), np.log(sizes), 1)[0])
    return slope, scales, sizes
