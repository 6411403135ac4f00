"""Least-squares conditional expectations on polynomial features.

A :class:`RegressionBasis` turns per-node state variables into a design
matrix; :class:`Projector` holds a thin QR factorization of that matrix so
several targets can be projected at the cost of one factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Mapping, Optional

import numpy as np
import scipy.linalg

F = "F"
G = "G"


class RegressionError(RuntimeError):
    """The design matrix at a node cannot support a least-squares fit."""


def check_filtration(flag: str) -> str:
    flag = str(flag).upper()
    if flag not in (F, G):
        raise ValueError(f"filtration must be 'F' or 'G', got {flag!r}")
    return flag


@dataclass
class Projector:
    """Orthogonal projector onto the column span of one node's design."""

    q: np.ndarray
    node: int
    columns: list
    condition: float

    @property
    def n_features(self) -> int:
        return self.q.shape[1]

    def fit(self, target: np.ndarray) -> np.ndarray:
        """Fitted values of ``target`` (shape (P,) or (P, k))."""
        return self.q @ (self.q.T @ target)

    @property
    def leverage(self) -> np.ndarray:
        return np.einsum("pk,pk->p", self.q, self.q)

    def residual_ss(self, target: np.ndarray) -> float:
        res = target - self.fit(target)
        return float(np.sum(res * res))

    def fit_with_se(self, target: np.ndarray):
        """Fitted values plus a per-path standard error ``s * sqrt(h)``."""
        fitted = self.fit(target)
        res = target - fitted
        dof = max(self.q.shape[0] - self.n_features, 1)
        s2 = np.sum(res * res, axis=0) / dof
        se = np.sqrt(np.multiply.outer(self.leverage, s2)) if np.ndim(s2) else np.sqrt(self.leverage * s2)
        return fitted, se


@dataclass
class RegressionBasis:
    """Polynomial features of node state variables.

    ``state`` maps names to arrays of shape (P, N + 1) read at the current
    node; ``static`` maps names to (P,) arrays present at every node (used
    for intensity-path functionals in the G filtration). ``hinges`` maps
    state names to a knot count: the features ``max(x - q_k, 0)`` at
    evenly spaced sample quantiles ``q_k`` of that variable are added, which
    turns the polynomial part into a linear spline in that direction (useful
    for kinked payoffs). ``extra`` is an
    optional callable ``extra(i) -> (P, m)`` appended to the features after
    the polynomial expansion. Columns with zero sample variance are dropped
    before expansion; linearly dependent columns left after expansion are
    removed by pivoted QR unless ``strict`` is set.
    """

    state: Mapping[str, np.ndarray]
    static: Mapping[str, np.ndarray] = field(default_factory=dict)
    degree: int = 2
    extra: Optional[Callable[[int], np.ndarray]] = None
    hinges: Mapping[str, int] = field(default_factory=dict)
    strict: bool = False
    rank_tol: float = 1e-10

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        sizes = {v.shape[0] for v in self.state.values()} | {v.shape[0] for v in self.static.values()}
        if len(sizes) > 1:
            raise ValueError("state variables disagree on the number of paths")
        if not sizes:
            raise ValueError("basis needs at least one state or static variable")
        self._n_paths = sizes.pop()

    @property
    def n_paths(self) -> int:
        return self._n_paths

    def raw(self, i: int) -> tuple[list, np.ndarray]:
        names, cols = [], []
        for k, v in self.state.items():
            names.append(k)
            cols.append(v[:, i])
        for k, v in self.static.items():
            names.append(k)
            cols.append(v)
        return names, np.column_stack(cols) if cols else np.zeros((self.n_paths, 0))

    def design(self, i: int) -> tuple[list, np.ndarray]:
        names, x = self.raw(i)
        if not np.all(np.isfinite(x)):
            raise RegressionError(f"non-finite state variable at node {i}")
        mean = x.mean(axis=0)
        sd = x.std(axis=0)
        keep = sd > 1e-12 * (1.0 + np.abs(mean))
        names = [n for n, k in zip(names, keep) if k]
        xs = (x[:, keep] - mean[keep]) / sd[keep]
        feats, labels = [np.ones(self.n_paths)], ["1"]
        for d in range(1, self.degree + 1):
            for combo in combinations_with_replacement(range(xs.shape[1]), d):
                feats.append(np.prod(xs[:, list(combo)], axis=1))
                labels.append("*".join(names[c] for c in combo))
        for name, n_knots in self.hinges.items():
            if name not in names or n_knots < 1:
                continue
            col = xs[:, names.index(name)]
            knots = np.unique(np.quantile(col, np.linspace(0, 1, n_knots + 2)[1:-1]))
            for q in knots:
                h = np.maximum(col - q, 0.0)
                if h.std() > 1e-12:
                    feats.append((h - h.mean()) / h.std())
                    labels.append(f"hinge({name},{q:.3g})")
        if self.extra is not None:
            ex = np.atleast_2d(np.asarray(self.extra(i), dtype=float).T).T
            if ex.shape[0] != self.n_paths:
                raise RegressionError(f"extra features at node {i} have the wrong number of rows")
            for c in range(ex.shape[1]):
                col = ex[:, c]
                s = col.std()
                if s > 1e-12 * (1.0 + abs(col.mean())):
                    feats.append((col - col.mean()) / s)
                    labels.append(f"extra{c}")
        return labels, np.column_stack(feats)

    def projector(self, i: int) -> Projector:
        labels, x = self.design(i)
        p, k = x.shape
        if p <= k:
            raise RegressionError(f"node {i}: {p} paths cannot support {k} features")
        q, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > self.rank_tol * diag[0])) if diag.size else 0
        if rank == 0:
            raise RegressionError(f"node {i}: design matrix has rank 0")
        if rank < k and self.strict:
            raise RegressionError(f"node {i}: design matrix is rank deficient ({rank} < {k})")
        cond = float(diag[0] / diag[rank - 1])
        return Projector(q[:, :rank], i, [labels[j] for j in piv[:rank]], cond)


def markov_basis(
    ensemble, filtration: str = F, degree: int = 2, extra=None, strict: bool = False, hinges: Optional[Mapping[str, int]] = None
) -> RegressionBasis:
    """Default basis: noise state, log stock, nodewise intensities and their integrals.

    In the G filtration the terminal integrals ``Lambda^B_T`` and
    ``Lambda^H_T`` are added as static features, which realizes
    conditioning on the intensity path through two summary functionals.
    """
    filtration = check_filtration(filtration)
    ip = ensemble.intensity
    state = {
        "B": ensemble.noise.B,
        "eta": ensemble.noise.eta,
        "logS": np.log(ensemble.market.s1),
        "lamB": ip.lambda_B,
        "lamH": ip.lambda_H,
        "cumB": ip.cum_B,
        "cumH": ip.cum_H,
    }
    static = {}
    if filtration == G:
        static = {"LamB_T": ip.cum_B[:, -1], "LamH_T": ip.cum_H[:, -1]}
    return RegressionBasis(state, static, degree, extra, dict(hinges or {}), strict)


def residual_profile(basis: RegressionBasis, targets: Mapping[int, np.ndarray]) -> dict:
    """Residual sum of squares of each node's target on the basis."""
    return {i: basis.projector(i).residual_ss(y) for i, y in targets.items()}
