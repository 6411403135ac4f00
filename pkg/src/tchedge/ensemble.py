"""One simulated path ensemble shared by every downstream computation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intensity import IntensityPath, IntensitySpec, TimeGrid, simulate_intensity
from .market import MarketCoefficients, MarketPath, ResolvedCoefficients, simulate_market
from .noise import JumpMeasureSpec, NoisePath, simulate_noise
from .streams import DEFAULT_BLOCK, PathStreams


@dataclass(frozen=True)
class Ensemble:
    noise: NoisePath
    coeffs: ResolvedCoefficients
    market: MarketPath
    seed: int

    @property
    def grid(self) -> TimeGrid:
        return self.noise.grid

    @property
    def intensity(self) -> IntensityPath:
        return self.noise.intensity

    @property
    def nu(self) -> JumpMeasureSpec:
        return self.noise.nu

    @property
    def n_paths(self) -> int:
        return self.noise.n_paths

    @property
    def discount(self) -> np.ndarray:
        """``exp(-int r)`` per node, shape (P, N + 1)."""
        return 1.0 / self.market.s0


def simulate_ensemble(
    grid: TimeGrid,
    intensity_spec: IntensitySpec,
    nu: JumpMeasureSpec,
    coeffs: MarketCoefficients,
    n_paths: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK,
) -> Ensemble:
    streams = PathStreams(seed, n_paths, block_size)
    intensity = simulate_intensity(intensity_spec, grid, streams)
    noise = simulate_noise(intensity, nu, streams)
    resolved = coeffs.resolve(intensity, nu)
    market = simulate_market(resolved, noise)
    return Ensemble(noise, resolved, market, int(seed))
