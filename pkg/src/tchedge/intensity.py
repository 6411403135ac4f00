"""Stochastic time-distortion rates and the random measure they induce."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

import numpy as np

from .streams import PathStreams


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_N = T``."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (within rounding)."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.n_steps or abs(i * self.dt - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"t={t} is not a grid node")
        return i


# -- intensity models -------------------------------------------------------


@dataclass(frozen=True)
class ConstantIntensity:
    level: float

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"intensity level must be >= 0, got {self.level}")

    @property
    def is_random(self) -> bool:
        return False

    def rates(self, grid: TimeGrid, normals=None) -> np.ndarray:
        return np.full(grid.n_steps + 1, float(self.level))


@dataclass(frozen=True)
class PiecewiseIntensity:
    """Right-continuous step function: ``level_k`` holds from ``time_k`` on."""

    pieces: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pieces = tuple((float(t), float(v)) for t, v in self.pieces)
        if not pieces:
            raise ValueError("piecewise intensity needs at least one piece")
        times = [t for t, _ in pieces]
        if times[0] != 0.0:
            raise ValueError("first piece must start at time 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("piece times must be strictly increasing")
        if any(v < 0 for _, v in pieces):
            raise ValueError("piecewise levels must be >= 0")
        object.__setattr__(self, "pieces", pieces)

    @property
    def is_random(self) -> bool:
        return False

    def rates(self, grid: TimeGrid, normals=None) -> np.ndarray:
        times = np.array([t for t, _ in self.pieces])
        levels = np.array([v for _, v in self.pieces])
        # small slack so that a breakpoint sitting on a node switches there
        idx = np.searchsorted(times, grid.nodes + 1e-12, side="right") - 1
        return levels[idx]


@dataclass(frozen=True)
class CIRIntensity:
    """Square-root mean-reverting rate simulated by full-truncation Euler.

    x_{i+1} = x_i + speed (mean - x_i^+) dt + vol sqrt(x_i^+ dt) Z_i,
    and the rate used everywhere is x^+.
    """

    speed: float
    mean: float
    vol: float
    initial: float

    def __post_init__(self):
        for name in ("speed", "mean", "vol"):
            if getattr(self, name) < 0:
                raise ValueError(f"cir {name} must be >= 0")
        if not self.initial > 0:
            raise ValueError("cir initial level must be positive")

    @property
    def is_random(self) -> bool:
        return self.vol > 0

    def rates(self, grid: TimeGrid, normals=None) -> np.ndarray:
        dt = grid.dt
        if normals is None:
            normals = np.zeros((1, grid.n_steps))
        normals = np.atleast_2d(normals)
        x = np.empty((normals.shape[0], grid.n_steps + 1))
        x[:, 0] = self.initial
        sq = np.sqrt(dt)
        for i in range(grid.n_steps):
            xp = np.maximum(x[:, i], 0.0)
            x[:, i + 1] = x[:, i] + self.speed * (self.mean - xp) * dt + self.vol * np.sqrt(xp) * sq * normals[:, i]
        return np.maximum(x, 0.0)

    def mean_path(self, t: np.ndarray) -> np.ndarray:
        """Exact mean of the continuous-time process."""
        e = np.exp(-self.speed * np.asarray(t))
        return self.initial * e + self.mean * (1.0 - e)


IntensityModel = Union[ConstantIntensity, PiecewiseIntensity, CIRIntensity]


def intensity_model(kind: str, **params) -> IntensityModel:
    """Build a model from a kind name and its parameters (config helper)."""
    if kind == "constant":
        return ConstantIntensity(**params)
    if kind in ("piecewise", "piecewise-constant"):
        return PiecewiseIntensity(tuple(tuple(p) for p in params["pieces"]))
    if kind == "cir":
        return CIRIntensity(**params)
    raise ValueError(f"unknown intensity kind {kind!r}")


@dataclass(frozen=True)
class IntensitySpec:
    lambda_B: IntensityModel
    lambda_H: IntensityModel


@dataclass(frozen=True)
class IntensityPath:
    """Rates per node for an ensemble, shape ``(n_paths, N + 1)``.

    ``cum_B[:, i]`` is the left-point sum of ``lambda_B * dt`` over cells
    ``k < i``; same for ``cum_H``.
    """

    grid: TimeGrid
    lambda_B: np.ndarray
    lambda_H: np.ndarray

    def __post_init__(self):
        shape = (self.lambda_B.shape[0], self.grid.n_steps + 1)
        for arr in (self.lambda_B, self.lambda_H):
            if arr.shape != shape:
                raise ValueError(f"rate array has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0):
                raise ValueError("intensities must be nonnegative")

    @property
    def n_paths(self) -> int:
        return self.lambda_B.shape[0]

    @cached_property
    def cum_B(self) -> np.ndarray:
        return _left_cumsum(self.lambda_B, self.grid.dt)

    @cached_property
    def cum_H(self) -> np.ndarray:
        return _left_cumsum(self.lambda_H, self.grid.dt)

    @property
    def cell_B(self) -> np.ndarray:
        """``lambda_B`` at left endpoints of the N cells."""
        return self.lambda_B[:, :-1]

    @property
    def cell_H(self) -> np.ndarray:
        return self.lambda_H[:, :-1]


def _left_cumsum(rates: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(rates)
    np.cumsum(rates[:, :-1] * dt, axis=1, out=out[:, 1:])
    return out


def simulate_intensity(spec: IntensitySpec, grid: TimeGrid, streams: PathStreams) -> IntensityPath:
    n = streams.n_paths
    rates = []
    for tag, model in (("intensity_B", spec.lambda_B), ("intensity_H", spec.lambda_H)):
        if model.is_random:
            lam = model.rates(grid, streams.normal(tag, (grid.n_steps,)))
        else:
            lam = np.broadcast_to(model.rates(grid), (n, grid.n_steps + 1)).copy()
        rates.append(lam)
    return IntensityPath(grid, rates[0], rates[1])


def lambda_measure(path: IntensityPath, cells: Iterable[int], marks: Iterable[float], nu) -> np.ndarray:
    """Value of the random measure on ``cells x marks`` for every path.

    ``marks`` is a subset of ``{0} U nu.marks``; the value 0 selects the
    Gaussian component. Returns an array of shape ``(n_paths,)``.
    """
    cells = np.asarray(sorted(set(int(c) for c in cells)), dtype=int)
    if cells.size and (cells.min() < 0 or cells.max() >= path.grid.n_steps):
        raise IndexError("cell index outside the grid")
    dt = path.grid.dt
    total = np.zeros(path.n_paths)
    if cells.size == 0:
        return total
    mass = 0.0
    with_zero = False
    for m in set(float(m) for m in marks):
        if m == 0.0:
            with_zero = True
            continue
        j = nu.index_of(m)
        mass += nu.weights[j]
    if with_zero:
        total += path.lambda_B[:, cells].sum(axis=1) * dt
    if mass:
        total += mass * path.lambda_H[:, cells].sum(axis=1) * dt
    return total
