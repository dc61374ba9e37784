"""Uniform rectangular scalar fields with interpolation and flat-binary I/O.

Values live at the lattice points x0 + i dx, y0 + j dy and double as cell
centres for quadrature.  The computational domain is a finite box; callers
are responsible for keeping supports inside it (mass near the edge triggers
warnings downstream, never wrapping).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rough_core import ParameterError

__all__ = ["GridField", "gaussian_field", "bump_field"]


@dataclass(frozen=True)
class GridField:
    """Scalar samples on a uniform lattice; values indexed [ix, iy]."""

    values: np.ndarray
    x0: float
    y0: float
    dx: float
    dy: float
    _norms: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ParameterError("grid field values must be 2-d")
        if not np.all(np.isfinite(v)):
            raise ParameterError("grid field values must be finite")
        if self.dx <= 0 or self.dy <= 0:
            raise ParameterError("grid spacing must be positive")
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def nodes(self) -> np.ndarray:
        """All lattice points as an (nx * ny, 2) array, x-major."""
        xx, yy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(values, self.x0, self.y0, self.dx, self.dy)

    # -- interpolation -----------------------------------------------------

    def interpolate(self, points: np.ndarray, order: str = "bilinear") -> np.ndarray:
        """Sample the field at arbitrary points; outside the box -> 0."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if order == "bilinear":
            return self._bilinear(points)
        if order == "bicubic":
            from scipy.interpolate import RegularGridInterpolator

            rgi = RegularGridInterpolator(
                (self.xs, self.ys),
                self.values,
                method="cubic",
                bounds_error=False,
                fill_value=0.0,
            )
            return rgi(points)
        raise ParameterError(f"unknown interpolation order {order!r}")

    def _bilinear(self, points: np.ndarray) -> np.ndarray:
        fx = (points[:, 0] - self.x0) / self.dx
        fy = (points[:, 1] - self.y0) / self.dy
        inside = (fx >= 0) & (fx <= self.nx - 1) & (fy >= 0) & (fy <= self.ny - 1)
        fx = np.clip(fx, 0, self.nx - 1 - 1e-12)
        fy = np.clip(fy, 0, self.ny - 1 - 1e-12)
        ix = np.minimum(fx.astype(int), self.nx - 2)
        iy = np.minimum(fy.astype(int), self.ny - 2)
        tx = fx - ix
        ty = fy - iy
        v = self.values
        out = (
            v[ix, iy] * (1 - tx) * (1 - ty)
            + v[ix + 1, iy] * tx * (1 - ty)
            + v[ix, iy + 1] * (1 - tx) * ty
            + v[ix + 1, iy + 1] * tx * ty
        )
        return np.where(inside, out, 0.0)

    # -- quadrature and norms ----------------------------------------------

    def _trapezoid_weights(self) -> np.ndarray:
        wx = np.ones(self.nx)
        wx[0] = wx[-1] = 0.5
        wy = np.ones(self.ny)
        wy[0] = wy[-1] = 0.5
        return np.outer(wx, wy) * self.dx * self.dy

    def integral(self) -> float:
        """Trapezoidal integral over the box."""
        return float(np.sum(self.values * self._trapezoid_weights()))

    def pairing(self, other: "GridField") -> float:
        """Trapezoidal <self, other>; grids must coincide."""
        if self.values.shape != other.values.shape:
            raise ParameterError("pairing requires matching grids")
        return float(np.sum(self.values * other.values * self._trapezoid_weights()))

    def norm(self, which: str) -> float:
        if which not in self._norms:
            w = self._trapezoid_weights()
            if which == "l1":
                self._norms[which] = float(np.sum(np.abs(self.values) * w))
            elif which == "l2":
                self._norms[which] = float(np.sqrt(np.sum(self.values**2 * w)))
            elif which == "linf":
                self._norms[which] = float(np.abs(self.values).max())
            else:
                raise ParameterError(f"unknown norm {which!r}")
        return self._norms[which]

    def boundary_mass_fraction(self) -> float:
        """|mass| on the outermost node ring relative to total |mass|."""
        a = np.abs(self.values)
        total = a.sum()
        if total == 0:
            return 0.0
        edge = a[0, :].sum() + a[-1, :].sum() + a[1:-1, 0].sum() + a[1:-1, -1].sum()
        return float(edge / total)

    # -- I/O -----------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Row-major float64 binary at ``path`` plus a JSON sidecar."""
        path = Path(path)
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path)
        sidecar = {
            "nx": self.nx,
            "ny": self.ny,
            "x0": self.x0,
            "y0": self.y0,
            "dx": self.dx,
            "dy": self.dy,
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))

    @staticmethod
    def load(path: str | Path) -> "GridField":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        values = np.fromfile(path, dtype="<f8").reshape(meta["nx"], meta["ny"])
        return GridField(values, meta["x0"], meta["y0"], meta["dx"], meta["dy"])

    @staticmethod
    def empty(box: tuple[float, float, float, float], nx: int, ny: int) -> "GridField":
        """Zero field on [x0, x1] x [y0, y1] with nx x ny nodes."""
        x0, x1, y0, y1 = box
        return GridField(
            np.zeros((nx, ny)), x0, y0, (x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1)
        )


def gaussian_field(
    box: tuple[float, float, float, float],
    nx: int,
    ny: int,
    center: tuple[float, float] = (0.0, 0.0),
    width: float = 0.5,
    amplitude: float = 1.0,
) -> GridField:
    base = GridField.empty(box, nx, ny)
    pts = base.nodes()
    r2 = (pts[:, 0] - center[0]) ** 2 + (pts[:, 1] - center[1]) ** 2
    vals = amplitude * np.exp(-r2 / (2 * width**2))
    return base.with_values(vals.reshape(nx, ny))


def bump_field(
    box: tuple[float, float, float, float],
    nx: int,
    ny: int,
    center: tuple[float, float] = (0.0, 0.0),
    radius: float = 1.0,
    amplitude: float = 1.0,
) -> GridField:
    """Compactly supported C^inf bump, exp(1 - 1/(1 - r^2)) inside its ball."""
    base = GridField.empty(box, nx, ny)
    pts = base.nodes()
    u = ((pts[:, 0] - center[0]) ** 2 + (pts[:, 1] - center[1]) ** 2) / radius**2
    vals = np.zeros(pts.shape[0])
    inside = u < 1.0
    vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - u[inside]))
    return base.with_values(vals.reshape(nx, ny))
