"""Drifting data sources with known ground truth, plus CSV panel streams.

All samplers are pure functions of ``(seed, stream, n, k)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from adaseq.core.rng import Stream, keyed_generator
from adaseq.losses import (
    excess_risk_quadratic,
    exact_minimizer_quadratic,
    exact_risk_quadratic,
    hinge_minimizer_gaussian,
    hinge_risk_gaussian,
)


def _plane_point(radius: float, angle: float, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[0] = radius * math.cos(angle)
    v[1] = radius * math.sin(angle)
    return v


@dataclass(frozen=True)
class RegressionDrift:
    """Gaussian linear model whose minimizer walks a circle with chord ``rho``.

    ``x ~ N(0, sigma_x2 I)`` and ``y = x.beta_n + noise``; the cross-covariance
    ``r_n = sigma_x2 beta_n`` rotates in the first coordinate plane so that the
    penalized minimizer ``r_n / (sigma_x2 + lam)`` moves exactly ``rho`` per
    step. ``sigma_y2 = |r_n|^2 / sigma_x2 + noise_var`` keeps the joint
    covariance positive definite with a constant margin.
    """

    rho: float = 1.0
    sigma_x2: float = 1.0
    lam: float = 0.0
    circle_radius: float = 2.0
    noise_var: float = 1.0
    dimension: int = 3

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("need dimension >= 2 for the rotating path")
        if self.sigma_x2 <= 0 or self.noise_var <= 0 or self.circle_radius <= 0:
            raise ValueError("sigma_x2, noise_var and circle_radius must be positive")
        if not 0 <= self.rho <= 2 * self.circle_radius:
            raise ValueError(f"rho={self.rho} must lie in [0, 2*circle_radius]")

    @property
    def angle_step(self) -> float:
        return 2.0 * math.asin(self.rho / (2.0 * self.circle_radius))

    def minimizer(self, n: int, lam: Optional[float] = None) -> np.ndarray:
        lam = self.lam if lam is None else lam
        return exact_minimizer_quadratic(self.sigma_x2, lam, self.law(n)[0])

    def law(self, n: int) -> tuple[np.ndarray, float]:
        """``(r_n, sigma_y2_n)``."""
        w_star = _plane_point(self.circle_radius, (n - 1) * self.angle_step, self.dimension)
        r = (self.sigma_x2 + self.lam) * w_star
        sigma_y2 = float(r @ r) / self.sigma_x2 + self.noise_var
        return r, sigma_y2

    def covariance(self, n: int) -> np.ndarray:
        r, sy2 = self.law(n)
        d = self.dimension
        cov = np.zeros((d + 1, d + 1))
        cov[:d, :d] = self.sigma_x2 * np.eye(d)
        cov[:d, d] = r
        cov[d, :d] = r
        cov[d, d] = sy2
        return cov

    def draw(self, n: int, count: int, seed: int, stream: int = Stream.TRAIN):
        r, _ = self.law(n)
        beta = r / self.sigma_x2
        Z = keyed_generator(seed, stream, n).standard_normal((count, self.dimension + 1))
        X = math.sqrt(self.sigma_x2) * Z[:, : self.dimension]
        y = X @ beta + math.sqrt(self.noise_var) * Z[:, self.dimension]
        return X, y

    def risk(self, n: int, w, lam: Optional[float] = None) -> float:
        lam = self.lam if lam is None else lam
        r, sy2 = self.law(n)
        return exact_risk_quadratic(w, self.sigma_x2, sy2, r, lam)

    def excess_risk(self, n: int, w, lam: Optional[float] = None) -> float:
        lam = self.lam if lam is None else lam
        r, sy2 = self.law(n)
        return excess_risk_quadratic(w, self.sigma_x2, sy2, r, lam)


@dataclass(frozen=True)
class ClassificationDrift:
    """Two Gaussian classes whose means rotate on the unit circle.

    Class +1 has mean at angle ``(n-1) theta``; class -1 sits ``separation``
    radians further along the same circle (antipodal by default).
    """

    theta: float = 0.1
    sigma2: float = 0.5
    lam: float = 0.1
    dimension: int = 2
    separation: float = math.pi
    prior_pos: float = 0.5

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("need dimension >= 2")
        if self.sigma2 < 0 or not 0 < self.prior_pos < 1:
            raise ValueError("need sigma2 >= 0 and prior in (0, 1)")

    @property
    def priors(self) -> tuple[float, float]:
        return (self.prior_pos, 1.0 - self.prior_pos)

    def means(self, n: int) -> np.ndarray:
        phi = (n - 1) * self.theta
        return np.stack([
            _plane_point(1.0, phi, self.dimension),
            _plane_point(1.0, phi + self.separation, self.dimension),
        ])

    def draw(self, n: int, count: int, seed: int, stream: int = Stream.TRAIN):
        mu = self.means(n)
        u = keyed_generator(seed, stream, n, sub=1).random(count)
        y = np.where(u < self.prior_pos, 1.0, -1.0)
        Z = keyed_generator(seed, stream, n, sub=0).standard_normal((count, self.dimension))
        X = np.where((y > 0)[:, None], mu[0], mu[1]) + math.sqrt(self.sigma2) * Z
        return X, y

    @cached_property
    def _base_minimizer(self) -> np.ndarray:
        return hinge_minimizer_gaussian(self.means(1), self.sigma2, self.priors, self.lam)

    def minimizer(self, n: int) -> np.ndarray:
        # the law at step n is the step-1 law rotated by (n-1) theta
        phi = (n - 1) * self.theta
        c, s = math.cos(phi), math.sin(phi)
        w = self._base_minimizer.copy()
        w[0], w[1] = c * w[0] - s * w[1], s * w[0] + c * w[1]
        return w

    @property
    def minimizer_drift(self) -> float:
        return 2.0 * float(np.linalg.norm(self._base_minimizer)) * math.sin(abs(self.theta) / 2.0)

    def risk(self, n: int, w) -> float:
        return hinge_risk_gaussian(w, self.means(n), self.sigma2, self.priors, self.lam)

    def excess_risk(self, n: int, w) -> float:
        return self.risk(n, w) - self.risk(n, self.minimizer(n))


def theta_for_drift(rho: float, sigma2: float = 0.5, lam: float = 0.1, dimension: int = 2,
                    separation: float = math.pi, prior_pos: float = 0.5) -> float:
    """Angular step whose induced minimizer drift equals ``rho``."""
    probe = ClassificationDrift(0.0, sigma2, lam, dimension, separation, prior_pos)
    radius = float(np.linalg.norm(probe.minimizer(1)))
    if rho > 2 * radius:
        raise ValueError(f"drift {rho} exceeds the minimizer circle diameter {2 * radius:.4g}")
    return 2.0 * math.asin(rho / (2.0 * radius))


class CsvError(ValueError):
    pass


class PoolExhausted(RuntimeError):
    pass


@dataclass
class CsvStream:
    """Per-step row pools read from ``step,y,x1..xd`` CSV files.

    Each run shuffles a step's pool with its own seed and hands rows out
    without replacement. With ``test_fraction > 0`` the tail of every
    shuffled pool is reserved for the test stream.
    """

    path: str
    test_fraction: float = 0.0
    pools: dict = field(default_factory=dict, repr=False)
    dimension: int = 0

    def __post_init__(self):
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must be in [0, 1)")
        self._load()

    def _load(self):
        path = Path(self.path)
        rows: dict[int, list] = {}
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise CsvError(f"{path}: empty file") from None
            if len(header) < 3 or header[0] != "step" or header[1] != "y":
                raise CsvError(f"{path}: header must be step,y,x1..xd, got {header}")
            xcols = header[2:]
            if xcols != [f"x{j}" for j in range(1, len(xcols) + 1)]:
                raise CsvError(f"{path}: feature columns must be x1..x{len(xcols)}, got {xcols}")
            for lineno, rec in enumerate(reader, start=2):
                if not rec or all(not c.strip() for c in rec):
                    continue
                if len(rec) != len(header):
                    raise CsvError(f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}")
                try:
                    step = int(rec[0])
                    vals = [float(c) for c in rec[1:]]
                except ValueError:
                    raise CsvError(f"{path}:{lineno}: non-numeric cell in {rec}") from None
                if not all(math.isfinite(v) for v in vals):
                    raise CsvError(f"{path}:{lineno}: non-finite value")
                rows.setdefault(step, []).append(vals)
        if not rows:
            raise CsvError(f"{path}: no data rows")
        steps = sorted(rows)
        expected = list(range(1, steps[-1] + 1))
        if steps != expected:
            missing = sorted(set(expected) - set(steps))
            raise CsvError(f"{path}: steps must be contiguous from 1; missing {missing or steps[:1]}")
        self.dimension = len(xcols)
        self.pools = {s: np.asarray(v, float) for s, v in rows.items()}

    @property
    def horizon(self) -> int:
        return len(self.pools)

    def _split(self, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        if n not in self.pools:
            raise CsvError(f"no rows for step {n}")
        pool = self.pools[n]
        order = keyed_generator(seed, Stream.SHUFFLE, n).permutation(len(pool))
        n_test = int(math.floor(self.test_fraction * len(pool)))
        return order[: len(pool) - n_test], order[len(pool) - n_test:]

    def draw(self, n: int, count: int, seed: int, stream: int = Stream.TRAIN):
        train, test = self._split(n, seed)
        if stream == Stream.TEST:
            idx = test if len(test) else train
            if count > len(idx):
                raise PoolExhausted(f"step {n}: requested {count} test rows, pool has {len(idx)}")
            # test rows may be reused across evaluations
            idx = idx[: count]
        else:
            if count > len(train):
                raise PoolExhausted(f"step {n}: requested K={count} rows, pool has {len(train)}")
            idx = train[:count]
        block = self.pools[n][idx]
        return block[:, 1:], block[:, 0]
