"""Batch harness: scenario configs in, CSV/JSON artifacts and SVG plots out.

Configs are INI-style sections of flat key = value pairs (# comments allowed);
a JSON object of the same two-level shape is accepted interchangeably.
``validate`` and ``run`` share one schema, so whatever validates also runs.

Exit codes: 0 success, 2 config problem, 3 numerical divergence, 4 I/O.
All randomness flows from the single scenario seed through counter-based
per-module streams; re-running a config with --threads 1 reproduces every
CSV byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .euler2d import (
    Kernel,
    discretize_vorticity,
    pair_period_oracle,
    simulate,
    step_rough_euler,
    wong_zakai_study,
)
from .gridfield import GridField, bump_field, gaussian_field
from .osgood import builtin_modulus
from .particles import ParticleEnsemble
from .rde import (
    DivergenceError,
    constant_noise,
    expansion_drift,
    inverse_flow,
    linear_drift,
    log_lipschitz_drift,
    rotation_drift,
    shear_drift,
    solenoidal_sine_noise,
    solve_flow,
    solve_rde,
    zero_drift,
)
from .rough_core import ParameterError, TimeGrid
from .rough_path import NoiseSpec, canonical_lift, chen_defect, sample_noise
from .transport import (
    DensityField,
    duality_check,
    mass_conservation_check,
    solve_rce_lagrangian,
    solve_rte_lagrangian,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

COMMANDS = (
    "lift",
    "rde",
    "flow",
    "transport",
    "euler",
    "study-wongzakai",
    "study-convergence",
)

DRIFT_BUILTINS = ("none", "zero", "rotation", "linear", "expansion", "shear", "log_lipschitz")
XI_BUILTINS = ("none", "constant", "solenoidal")
NOISE_KINDS = ("none", "brownian", "fbm")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(f"{p}: {m}" for p, m in violations))


# ---------------------------------------------------------------------------
# config loading and validation


def load_config(path: str | Path) -> dict:
    """Read INI or JSON into {section: {key: str-value}}."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        return {
            str(sec): {str(k): str(v) for k, v in kv.items()}
            for sec, kv in doc.items()
        }
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(text)
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}


def _get(cfg: dict, section: str, key: str, default=None):
    return cfg.get(section, {}).get(key, default)


def _as_float(violations, cfg, section, key, default=None, required=False):
    raw = _get(cfg, section, key)
    if raw is None:
        if required:
            violations.append((f"{section}.{key}", "required field is missing"))
        return default
    try:
        return float(raw)
    except ValueError:
        violations.append((f"{section}.{key}", f"not a number: {raw!r}"))
        return default


def _as_int(violations, cfg, section, key, default=None, required=False):
    raw = _get(cfg, section, key)
    if raw is None:
        if required:
            violations.append((f"{section}.{key}", "required field is missing"))
        return default
    try:
        return int(raw)
    except ValueError:
        violations.append((f"{section}.{key}", f"not an integer: {raw!r}"))
        return default


def validate_config(cfg: dict) -> list[tuple[str, str]]:
    """Full schema validation; returns all violations as (path, message)."""
    v: list[tuple[str, str]] = []
    command = _get(cfg, "scenario", "command")
    if command is None:
        v.append(("scenario.command", "required field is missing"))
        return v
    if command not in COMMANDS:
        v.append(("scenario.command", f"unknown command {command!r}; known: {COMMANDS}"))
        return v

    noise_kind = _get(cfg, "noise", "kind", "none")
    if noise_kind not in NOISE_KINDS:
        v.append(("noise.kind", f"unknown noise kind {noise_kind!r}; known: {NOISE_KINDS}"))
    if noise_kind != "none":
        _as_int(v, cfg, "noise", "dimension", default=2)
        if _get(cfg, "scenario", "seed") is None:
            v.append(("scenario.seed", "seed is required for stochastic noise"))
        else:
            _as_int(v, cfg, "scenario", "seed", required=True)
    if noise_kind == "fbm":
        hurst = _as_float(v, cfg, "noise", "hurst", required=True)
        if hurst is not None and not (1 / 3 < hurst <= 1):
            v.append(("noise.hurst", f"hurst {hurst} outside (1/3, 1]"))

    drift = _get(cfg, "fields", "drift", "none")
    if drift not in DRIFT_BUILTINS:
        v.append(("fields.drift", f"unknown drift {drift!r}; known: {DRIFT_BUILTINS}"))
    xi = _get(cfg, "fields", "xi", "none")
    if xi not in XI_BUILTINS:
        v.append(("fields.xi", f"unknown noise field {xi!r}; known: {XI_BUILTINS}"))
    if noise_kind != "none" and xi == "none":
        v.append(("fields.xi", "stochastic noise needs a noise field (xi)"))

    t0 = _as_float(v, cfg, "time", "t0", default=0.0)
    t1 = _as_float(v, cfg, "time", "t1", default=1.0)
    steps = _as_int(v, cfg, "time", "steps", default=256)
    if t1 is not None and t0 is not None and t1 <= t0:
        v.append(("time.t1", "horizon must exceed t0"))
    if steps is not None and steps < 1:
        v.append(("time.steps", "need at least one step"))
    outputs = _get(cfg, "time", "outputs")
    if outputs is not None and None not in (t0, t1, steps):
        dt = (t1 - t0) / steps
        for tok in str(outputs).split(","):
            try:
                t_out = float(tok)
            except ValueError:
                v.append(("time.outputs", f"not a number: {tok!r}"))
                continue
            k = (t_out - t0) / dt
            if abs(k - round(k)) > 1e-9 or not (0 <= round(k) <= steps):
                v.append(
                    ("time.outputs", f"output time {t_out} is not a multiple of dt on the grid")
                )

    if command == "lift":
        levels = _as_int(v, cfg, "lift", "levels", default=10)
        if levels is not None and not (2 <= levels <= 14):
            v.append(("lift.levels", "levels must lie in [2, 14]"))
        source = _get(cfg, "lift", "source", "circle")
        if source not in ("circle", "noise"):
            v.append(("lift.source", f"unknown lift source {source!r}"))
        if source == "noise" and noise_kind == "none":
            v.append(("noise.kind", "lift from noise needs a stochastic noise kind"))
    if command == "euler":
        source = _get(cfg, "euler", "source", "gaussian")
        if source not in ("gaussian", "pair"):
            v.append(("euler.source", f"unknown euler source {source!r}"))
        if source == "pair":
            gamma = _as_float(v, cfg, "euler", "gamma", default=1.0)
            dist = _as_float(v, cfg, "euler", "d", default=0.5)
            if gamma is not None and gamma <= 0:
                v.append(("euler.gamma", "pair strength must be positive"))
            if dist is not None and dist <= 0:
                v.append(("euler.d", "pair distance must be positive"))
    if command == "study-wongzakai":
        lo = _as_int(v, cfg, "study", "level_lo", default=6)
        hi = _as_int(v, cfg, "study", "level_hi", default=10)
        if None not in (lo, hi) and not (2 <= lo < hi <= 13):
            v.append(("study.level_lo", "need 2 <= level_lo < level_hi <= 13"))
        if noise_kind == "none":
            v.append(("noise.kind", "the Wong-Zakai study needs stochastic noise"))
    return v


# ---------------------------------------------------------------------------
# builders


def _build_grid(cfg: dict) -> TimeGrid:
    t0 = float(_get(cfg, "time", "t0", 0.0))
    t1 = float(_get(cfg, "time", "t1", 1.0))
    steps = int(_get(cfg, "time", "steps", 256))
    return TimeGrid.uniform(t0, t1, steps)


def _output_indices(cfg: dict, grid: TimeGrid) -> list[int]:
    outputs = _get(cfg, "time", "outputs")
    if outputs is None:
        n = len(grid) - 1
        return sorted({0, n // 4, n // 2, (3 * n) // 4, n})
    return [grid.index_of(float(tok)) for tok in str(outputs).split(",")]


def _build_drift(cfg: dict):
    name = _get(cfg, "fields", "drift", "none")
    if name in ("none",):
        return None
    if name == "zero":
        return zero_drift(2)
    if name == "rotation":
        return rotation_drift(float(_get(cfg, "fields", "drift_omega", 1.0)))
    if name == "linear":
        a = float(_get(cfg, "fields", "drift_a", -0.5))
        return linear_drift(np.array([[a, 0.0], [0.0, a]]))
    if name == "expansion":
        return expansion_drift(float(_get(cfg, "fields", "drift_c", 0.1)))
    if name == "shear":
        return shear_drift(
            float(_get(cfg, "fields", "drift_amplitude", 1.0)),
            float(_get(cfg, "fields", "drift_wavenumber", 1.0)),
        )
    if name == "log_lipschitz":
        return log_lipschitz_drift(2)
    raise ConfigError([("fields.drift", f"unknown drift {name!r}")])


def _build_xi(cfg: dict):
    name = _get(cfg, "fields", "xi", "none")
    if name == "none":
        return None
    if name == "constant":
        sigma = float(_get(cfg, "fields", "xi_sigma", 0.3))
        return constant_noise(sigma * np.eye(2))
    if name == "solenoidal":
        return solenoidal_sine_noise(
            float(_get(cfg, "fields", "xi_amplitude", 0.3)),
            float(_get(cfg, "fields", "xi_wavenumber", 1.0)),
        )
    raise ConfigError([("fields.xi", f"unknown noise field {name!r}")])


def _build_noise(cfg: dict, grid: TimeGrid):
    kind = _get(cfg, "noise", "kind", "none")
    if kind == "none":
        return canonical_lift(grid, np.zeros((len(grid), 2)))
    dim = int(_get(cfg, "noise", "dimension", 2))
    seed = int(_get(cfg, "scenario", "seed"))
    if kind == "brownian":
        return sample_noise(NoiseSpec("brownian", dim, grid, seed=seed))
    return sample_noise(
        NoiseSpec("fbm", dim, grid, seed=seed, hurst=float(_get(cfg, "noise", "hurst")))
    )


def _build_box(cfg: dict) -> tuple[float, float, float, float]:
    return (
        float(_get(cfg, "box", "x0", -2.0)),
        float(_get(cfg, "box", "x1", 2.0)),
        float(_get(cfg, "box", "y0", -2.0)),
        float(_get(cfg, "box", "y1", 2.0)),
    )


# ---------------------------------------------------------------------------
# artifact helpers


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class ArtifactWriter:
    def __init__(self, out_dir: Path, cfg: dict, fmt: str = "csv"):
        self.out_dir = out_dir
        self.cfg = cfg
        self.fmt = fmt
        self.hash = _config_hash(cfg)
        self.files: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header: list[str], rows, units: str = "") -> Path:
        """Deterministically formatted CSV (or JSON) with a provenance line."""
        if self.fmt == "json":
            path = self.out_dir / f"{name}.json"
            doc = {
                "provenance": {"config_hash": self.hash, "units": units},
                "columns": header,
                "rows": [[_fmt(x) for x in row] for row in rows],
            }
            path.write_text(json.dumps(doc, indent=1))
        else:
            path = self.out_dir / f"{name}.csv"
            lines = [f"# roughflow config_hash={self.hash} units={units}"]
            lines.append(",".join(header))
            for row in rows:
                lines.append(",".join(_fmt(x) for x in row))
            path.write_text("\n".join(lines) + "\n")
        self.files.append(path.name)
        return path

    def field(self, name: str, field: GridField) -> None:
        path = self.out_dir / f"{name}.bin"
        field.save(path)
        self.files.extend([path.name, path.name + ".json"])

    def plot(self, name: str, x, ys: dict, xlabel: str, ylabel: str) -> None:
        """Optional SVG line chart; failures never propagate."""
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots(figsize=(5, 3.4))
            for label, y in ys.items():
                ax.plot(x, y, label=label)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if len(ys) > 1:
                ax.legend()
            fig.tight_layout()
            path = self.out_dir / f"{name}.svg"
            fig.savefig(path)
            plt.close(fig)
            self.files.append(path.name)
        except Exception as exc:  # pragma: no cover - plotting must never fail a run
            print(f"plotting {name} skipped: {exc}", file=sys.stderr)

    def manifest(self, command: str, wall_time: float) -> None:
        doc = {
            "tool": "roughflow",
            "version": __version__,
            "numpy": np.__version__,
            "command": command,
            "config": self.cfg,
            "config_hash": self.hash,
            "seed": _get(self.cfg, "scenario", "seed"),
            "wall_time_s": wall_time,
            "artifacts": self.files,
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(doc, indent=1))


# ---------------------------------------------------------------------------
# scenario runners


def _run_lift(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    top = int(_get(cfg, "lift", "levels", 10))
    source = _get(cfg, "lift", "source", "circle")
    rows = []
    for lev in range(4, top + 1):
        grid = TimeGrid.dyadic(lev)
        if source == "circle":
            theta = 2 * np.pi * grid.times
            z = np.stack([np.cos(theta), np.sin(theta)], axis=1)
            rp = canonical_lift(grid, z)
        else:
            rp = _build_noise(cfg, grid)
        zz = rp.second(0, len(grid) - 1)
        area = 0.5 * (zz[0, 1] - zz[1, 0])
        defect = chen_defect(rp)
        rows.append((lev, len(grid) - 1, area, area - np.pi, defect))
    w.table(
        "lift",
        ["level", "n_steps", "levy_area", "area_minus_pi", "chen_defect"],
        rows,
        units="dimensionless",
    )
    if plots:
        rows_a = np.array([[r[0], abs(r[3])] for r in rows])
        w.plot("levy_area_error", rows_a[:, 0], {"abs error": rows_a[:, 1]}, "level", "|area - pi|")


def _run_rde(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    grid = _build_grid(cfg)
    rp = _build_noise(cfg, grid)
    b = _build_drift(cfg)
    vfs = _build_xi(cfg)
    y0 = np.array(
        [float(tok) for tok in str(_get(cfg, "rde", "y0", "1.0,0.0")).split(",")]
    )
    traj = solve_rde(y0, b, vfs, rp)
    rows = [
        (0, t, *traj.states[i]) for i, t in enumerate(grid.times)
    ]
    w.table(
        "trajectory",
        ["seed_id", "t", *[f"y_{k+1}" for k in range(y0.size)]],
        rows,
        units="state",
    )
    if plots:
        w.plot(
            "trajectory",
            grid.times,
            {f"y_{k+1}": traj.states[:, k] for k in range(y0.size)},
            "t",
            "state",
        )


def _run_flow(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    grid = _build_grid(cfg)
    rp = _build_noise(cfg, grid)
    b = _build_drift(cfg)
    vfs = _build_xi(cfg)
    box = _build_box(cfg)
    n_side = int(_get(cfg, "flow", "seeds_per_side", 5))
    xs = np.linspace(box[0], box[1], n_side)
    ys = np.linspace(box[2], box[3], n_side)
    seeds = np.array([[x, y] for x in xs for y in ys])
    out = _output_indices(cfg, grid)
    flow = solve_flow(seeds, b, vfs, rp)
    rows = []
    for it in out:
        for k in range(seeds.shape[0]):
            rows.append((k, grid.times[it], *flow.states[it, k]))
    w.table("flow", ["seed_id", "t", "y_1", "y_2"], rows, units="position")
    back = inverse_flow(flow.terminal, b, vfs, rp)
    err = np.linalg.norm(back - seeds, axis=1)
    w.table(
        "inverse_error",
        ["seed_id", "error"],
        [(k, err[k]) for k in range(seeds.shape[0])],
        units="position",
    )
    if plots:
        w.plot("inverse_error", np.arange(err.size), {"|inv o fwd - id|": err}, "seed", "error")


def _run_transport(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    grid = _build_grid(cfg)
    rp = _build_noise(cfg, grid)
    b = _build_drift(cfg)
    vfs = _build_xi(cfg)
    box = _build_box(cfg)
    nx = int(_get(cfg, "box", "nx", 128))
    ny = int(_get(cfg, "box", "ny", nx))
    rho0 = gaussian_field(
        box, nx, ny,
        center=(float(_get(cfg, "transport", "rho_cx", 0.3)),
                float(_get(cfg, "transport", "rho_cy", 0.0))),
        width=float(_get(cfg, "transport", "rho_width", 0.35)),
    )
    f0 = bump_field(
        box, nx, ny,
        center=(float(_get(cfg, "transport", "f_cx", 0.0)),
                float(_get(cfg, "transport", "f_cy", -0.2))),
        radius=float(_get(cfg, "transport", "f_radius", 0.9)),
    )
    out = _output_indices(cfg, grid)
    rho_seq = solve_rce_lagrangian(DensityField(grid=rho0), b, vfs, rp, out,
                                   b_divergence=(b.divergence if b is not None else None))
    f_seq = solve_rte_lagrangian(f0, b, vfs, rp, out)
    masses, mdrift = mass_conservation_check(rho_seq)
    pairings, pdrift = duality_check(rho_seq, f_seq)
    rows = []
    for k, it in enumerate(out):
        g = rho_seq[k].grid
        rows.append(
            (grid.times[it], masses[k], g.norm("l1"), g.norm("l2"), g.norm("linf"), pairings[k])
        )
    w.table(
        "transport_series",
        ["t", "mass", "l1", "l2", "linf", "duality_pairing"],
        rows,
        units="field_norms",
    )
    w.field("rho_final", rho_seq[-1].grid)
    w.field("f_final", f_seq[-1])
    if plots:
        arr = np.array(rows)
        w.plot(
            "transport_series",
            arr[:, 0],
            {"mass": arr[:, 1], "l2": arr[:, 3], "pairing": arr[:, 5]},
            "t",
            "value",
        )


def _run_euler(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    source = _get(cfg, "euler", "source", "gaussian")
    vfs = _build_xi(cfg)
    if source == "pair":
        gamma = float(_get(cfg, "euler", "gamma", 1.0))
        dist = float(_get(cfg, "euler", "d", 0.5))
        period_closed = 2 * np.pi**2 * dist**2 / gamma
        n_steps = int(_get(cfg, "euler", "steps_per_period", 4000))
        delta = dist / float(_get(cfg, "euler", "delta_divisor", 200.0))
        grid = TimeGrid.uniform(0.0, 1.25 * period_closed, int(1.25 * n_steps))
        rp = canonical_lift(grid, np.zeros((len(grid), 2)))
        ens = ParticleEnsemble(
            np.array([[-dist / 2, 0.0], [dist / 2, 0.0]]), np.array([gamma, gamma])
        )
        kern = Kernel.blob(delta)
        angle_prev, total, period = 0.0, 0.0, np.nan
        pos = ens
        for i in range(len(grid) - 1):
            pos = step_rough_euler(pos, vfs, rp, (i, i + 1), kern)
            sep = pos.positions[1] - pos.positions[0]
            ang = float(np.arctan2(sep[1], sep[0]))
            dang = ang - angle_prev
            if dang < -np.pi:
                dang += 2 * np.pi
            if dang > np.pi:
                dang -= 2 * np.pi
            total += dang
            angle_prev = ang
            if abs(total) >= 2 * np.pi:
                over = (abs(total) - 2 * np.pi) / abs(dang)
                period = grid.times[i + 1] - over * (grid.times[1] - grid.times[0])
                break
        oracle = pair_period_oracle(gamma, dist)
        w.table(
            "pair_period",
            ["period_simulated", "period_closed_form", "period_ode_oracle", "rel_err"],
            [(period, period_closed, oracle, abs(period - period_closed) / period_closed)],
            units="seconds",
        )
        return
    box = _build_box(cfg)
    nx = int(_get(cfg, "box", "nx", 64))
    width = float(_get(cfg, "euler", "width", 0.5))
    threshold = float(_get(cfg, "euler", "threshold", 1e-3))
    omega0 = gaussian_field(box, nx, nx, width=width)
    ens = discretize_vorticity(omega0, threshold)
    kern = Kernel.blob(ens.delta)
    grid = _build_grid(cfg)
    rp = _build_noise(cfg, grid)
    out = _output_indices(cfg, grid)
    recon_n = int(_get(cfg, "euler", "recon_n", 96))
    recon = GridField.empty(box, recon_n, recon_n)
    res = simulate(ens, kern, vfs, rp, out, recon)
    rows = [
        (res.times[k], res.total_circulation[k], res.norms_l1[k], res.norms_l2[k],
         res.norms_linf[k])
        for k in range(res.times.size)
    ]
    w.table(
        "conserved",
        ["t", "total_circulation", "l1", "l2", "linf"],
        rows,
        units="circulation_and_norms",
    )
    snap_rows = []
    for k in range(res.times.size):
        e = res.snapshots[k]
        for i in range(len(e)):
            snap_rows.append(
                (res.times[k], i, e.positions[i, 0], e.positions[i, 1], e.circulations[i])
            )
    w.table("snapshots", ["t", "particle_id", "x", "y", "gamma"], snap_rows, units="position")
    w.field("omega_final", res.fields[-1])
    if plots:
        arr = np.array(rows)
        w.plot("conserved", arr[:, 0], {"l1": arr[:, 2], "l2": arr[:, 3]}, "t", "norm")


def _run_wongzakai(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    lo = int(_get(cfg, "study", "level_lo", 6))
    hi = int(_get(cfg, "study", "level_hi", 10))
    box = _build_box(cfg)
    nx = int(_get(cfg, "box", "nx", 32))
    omega0 = gaussian_field(box, nx, nx, width=float(_get(cfg, "euler", "width", 0.5)))
    ens = discretize_vorticity(omega0, float(_get(cfg, "euler", "threshold", 1e-3)))
    kern = Kernel.blob(ens.delta)
    vfs = _build_xi(cfg)
    base_grid = TimeGrid.dyadic(hi)
    base = _build_noise(cfg, base_grid).first_level
    recon_n = int(_get(cfg, "euler", "recon_n", 48))
    recon = GridField.empty(box, recon_n, recon_n)
    study = wong_zakai_study(
        ens, kern, vfs, base, base_grid, list(range(lo, hi + 1)), hi, recon
    )
    d = study["distances"]
    rows = [
        (study["levels"][i], study["levels"][i + 1], d[i]) for i in range(d.size)
    ]
    w.table("wongzakai", ["level_a", "level_b", "sup_l2_distance"], rows, units="l2_field")
    if plots:
        w.plot(
            "wongzakai",
            [r[0] for r in rows],
            {"consecutive distance": d},
            "level",
            "sup-t L2 distance",
        )


def _run_convergence(cfg: dict, w: ArtifactWriter, plots: bool) -> None:
    """Davie refinement study on the exponential benchmark dy = y dZ."""
    from .rde import VectorFieldSet

    lo = int(_get(cfg, "study", "level_lo", 5))
    hi = int(_get(cfg, "study", "level_hi", 9))

    def xi(x):
        return x[:, :, None]

    def dxi(x):
        return np.ones((x.shape[0], 1, 1, 1))

    v1 = VectorFieldSet(1, 1, xi, dxi)
    rows = []
    prev = None
    for lev in range(lo, hi + 1):
        grid = TimeGrid.dyadic(lev)
        rp = canonical_lift(grid, grid.times.copy())
        traj = solve_rde(np.array([1.0]), None, v1, rp)
        err = abs(float(traj.terminal[0]) - np.e)
        ratio = prev / err if (prev is not None and err > 0) else np.nan
        rows.append((lev, 1.0 / 2**lev, err, ratio))
        prev = err
    w.table(
        "convergence",
        ["level", "dt", "terminal_error", "error_ratio"],
        rows,
        units="state_error",
    )
    if plots:
        arr = np.array([(r[0], r[2]) for r in rows])
        w.plot("convergence", arr[:, 0], {"terminal error": arr[:, 1]}, "level", "error")


RUNNERS = {
    "lift": _run_lift,
    "rde": _run_rde,
    "flow": _run_flow,
    "transport": _run_transport,
    "euler": _run_euler,
    "study-wongzakai": _run_wongzakai,
    "study-convergence": _run_convergence,
}


# ---------------------------------------------------------------------------
# entry points


def _error_record(out_dir: Path | None, kind: str, detail: str) -> None:
    record = {"error": kind, "detail": detail}
    print(json.dumps(record), file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(json.dumps(record, indent=1))
        except OSError:
            pass


def _merge_overrides(cfg: dict, args) -> dict:
    cfg = {sec: dict(kv) for sec, kv in cfg.items()}
    cfg.setdefault("scenario", {})
    if args.seed is not None:
        cfg["scenario"]["seed"] = str(args.seed)
    if args.command_name is not None:
        cfg["scenario"]["command"] = args.command_name
    for section, key, value in args.extra or []:
        cfg.setdefault(section, {})[key] = value
    return cfg


def run(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else {}
    except OSError as exc:
        _error_record(None, "io", f"cannot read config: {exc}")
        return EXIT_IO
    except (configparser.Error, json.JSONDecodeError) as exc:
        _error_record(None, "config", f"cannot parse config: {exc}")
        return EXIT_CONFIG
    cfg = _merge_overrides(cfg, args)
    violations = validate_config(cfg)
    if violations:
        for path, msg in violations:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(
        os.environ.get("ROUGHFLOW_OUT")
        or args.out
        or _get(cfg, "scenario", "out", "roughflow_out")
    )
    command = _get(cfg, "scenario", "command")
    plots = (args.plots or _get(cfg, "scenario", "plots", "off")) == "on"
    fmt = args.format or _get(cfg, "scenario", "format", "csv")
    writer = ArtifactWriter(out_dir, cfg, fmt)
    start = time.time()
    try:
        RUNNERS[command](cfg, writer, plots)
    except (DivergenceError,) as exc:
        _error_record(out_dir, "numeric", str(exc))
        return EXIT_NUMERIC
    except (ParameterError, ConfigError) as exc:
        _error_record(out_dir, "config", str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _error_record(out_dir, "io", str(exc))
        return EXIT_IO
    try:
        writer.manifest(command, time.time() - start)
    except OSError as exc:
        _error_record(out_dir, "io", str(exc))
        return EXIT_IO
    return EXIT_OK


def validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        _error_record(None, "io", f"cannot read config: {exc}")
        return EXIT_CONFIG
    except (configparser.Error, json.JSONDecodeError) as exc:
        _error_record(None, "config", f"cannot parse config: {exc}")
        return EXIT_CONFIG
    cfg = _merge_overrides(cfg, args)
    violations = validate_config(cfg)
    if not violations:
        print("config ok")
        return EXIT_OK
    for path, msg in violations:
        print(f"config error at {path}: {msg}")
    return EXIT_CONFIG


class _KeyValue(argparse.Action):
    """--set section.key=value overrides."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = getattr(namespace, "extra", None) or []
        for raw in values:
            try:
                path, value = raw.split("=", 1)
                section, key = path.split(".", 1)
            except ValueError:
                parser.error(f"--set expects section.key=value, got {raw!r}")
            items.append((section, key, value))
        namespace.extra = items


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughflow",
        description="rough-path dynamics scenarios: drivers, flows, transport, vortex runs",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    prun = sub.add_parser("run", help="execute a scenario")
    prun.add_argument("command_name", nargs="?", choices=COMMANDS, default=None)
    prun.add_argument("--config", default=None)
    prun.add_argument("--out", default=None)
    prun.add_argument("--seed", type=int, default=None)
    prun.add_argument("--threads", type=int, default=1,
                      help="BLAS threading hint; orchestration stays single-threaded")
    prun.add_argument("--format", choices=("csv", "json"), default=None)
    prun.add_argument("--plots", choices=("on", "off"), default=None)
    prun.add_argument("--set", dest="extra", nargs="+", action=_KeyValue, metavar="SEC.KEY=VAL",
                      help="override config entries")
    # convenience shortcuts used in the docs
    prun.add_argument("--circle", action="store_true", help="lift: circle source")
    prun.add_argument("--levels", type=int, default=None, help="lift: top dyadic level")
    prun.add_argument("--pair", action="store_true", help="euler: co-rotating pair source")
    prun.add_argument("--gamma", type=float, default=None, help="euler pair strength")
    prun.add_argument("--d", type=float, default=None, help="euler pair distance")
    prun.set_defaults(func=run)

    pval = sub.add_parser("validate", help="validate a config without running")
    pval.add_argument("--config", required=True)
    pval.add_argument("--seed", type=int, default=None)
    pval.add_argument("--set", dest="extra", nargs="+", action=_KeyValue, metavar="SEC.KEY=VAL")
    pval.set_defaults(func=validate, command_name=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "mode", None) == "run":
        extra = list(args.extra or [])
        if args.circle:
            extra.append(("lift", "source", "circle"))
        if args.levels is not None:
            extra.append(("lift", "levels", str(args.levels)))
        if args.pair:
            extra.append(("euler", "source", "pair"))
        if args.gamma is not None:
            extra.append(("euler", "gamma", str(args.gamma)))
        if args.d is not None:
            extra.append(("euler", "d", str(args.d)))
        args.extra = extra
    code = args.func(args)
    return code


if __name__ == "__main__":
    sys.exit(main())
