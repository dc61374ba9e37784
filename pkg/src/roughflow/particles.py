"""Weighted particle clouds representing signed densities Lagrangianly.

Circulation weights are set once at construction and never written again;
the weight array is frozen so that total circulation is bitwise constant
across a run by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridfield import GridField
from .rough_core import ParameterError

__all__ = ["ParticleEnsemble", "blob_reconstruct"]


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions (N, 2) with signed circulation weights (N,)."""

    positions: np.ndarray
    circulations: np.ndarray
    delta: float = 0.0
    source: str = ""

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.positions, dtype=float))
        g = np.asarray(self.circulations, dtype=float)
        if x.shape[0] != g.shape[0]:
            raise ParameterError("positions and circulations disagree in length")
        if not np.all(np.isfinite(x)):
            raise ParameterError("particle positions must be finite")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "circulations", g)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def total_circulation(self) -> float:
        return float(np.sum(self.circulations))

    def moved_to(self, positions: np.ndarray) -> "ParticleEnsemble":
        """Same weights at new positions (the only mutation a run performs)."""
        return ParticleEnsemble(positions, self.circulations, self.delta, self.source)


def blob_reconstruct(
    ensemble: ParticleEnsemble,
    template: GridField,
    delta: float | None = None,
    chunk: int = 2048,
) -> GridField:
    """Smooth the cloud onto the template lattice with the algebraic blob.

    The mollifier eta_delta(z) = delta^2 / (pi (|z|^2 + delta^2)^2) is the
    vorticity profile whose induced velocity is the regularised kernel
    z_perp / (2 pi (|z|^2 + delta^2)); using the same delta as the dynamics
    keeps reconstruction and transport consistent.
    """
    d = ensemble.delta if delta is None else delta
    if d <= 0:
        raise ParameterError("blob reconstruction needs delta > 0")
    pts = template.nodes()
    out = np.zeros(pts.shape[0])
    x = ensemble.positions
    g = ensemble.circulations
    d2 = d * d
    for lo in range(0, pts.shape[0], chunk):
        hi = min(lo + chunk, pts.shape[0])
        diff = pts[lo:hi, None, :] - x[None, :, :]
        r2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
        out[lo:hi] = (d2 / np.pi) * np.sum(g[None, :] / (r2 + d2) ** 2, axis=1)
    return template.with_values(out.reshape(template.nx, template.ny))
