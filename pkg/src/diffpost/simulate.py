"""Low-frequency observations of reflected diffusions.

Two samplers:

* :func:`sample_chain` draws the Markov chain of the discretized model
  exactly: each transition is an inverse-CDF draw from the bilinear
  interpolant of the tabulated transition density, the same density the
  likelihood uses.
* :func:`euler_reflected` runs Euler-Maruyama for the extension of the
  coefficients to the real line (even ``sigma``, odd ``b``, both
  2-periodic) and folds the path back into [0, 1].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .gridfn import GridFn
from .generator import TransitionKernel
from .model import DiffusionParams


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Observations ``X_0, X_Delta, ..., X_{n Delta}`` in [0, 1]."""

    delta: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 1:
            raise ValueError("a path needs at least one observation")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("observations must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        """Number of transitions."""
        return len(self.values) - 1

    def head(self, n: int) -> "SamplePath":
        """First ``n`` transitions."""
        return SamplePath(self.delta, self.values[: n + 1], dict(self.meta, truncated=n))

    def save(self, path: str | Path) -> None:
        """CSV ``index,time,value`` plus a JSON sidecar with the metadata."""
        path = Path(path)
        idx = np.arange(len(self.values))
        with open(path, "w") as fh:
            fh.write("index,time,value\n")
            for i, v in zip(idx, self.values):
                fh.write(f"{i},{i * self.delta:.17g},{v:.17g}\n")
        meta = dict(self.meta, delta=self.delta, n=self.n)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=1, default=str))

    @classmethod
    def load(cls, path: str | Path) -> "SamplePath":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        return cls(float(meta["delta"]), data[:, 2], meta)


def params_hash(p: DiffusionParams) -> str:
    """Short content hash of the coefficient tables."""
    h = hashlib.sha256()
    h.update(p.sigma2.values.tobytes())
    h.update(p.b.values.tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# inverse CDF of piecewise-linear densities
# ---------------------------------------------------------------------------


def _cell_inverse(u_rem, left, right, h):
    """Solve ``h (a t + (c - a) t^2 / 2) = u_rem`` for ``t`` in [0, 1]."""
    a = np.maximum(left, 0.0)
    c = np.maximum(right, 0.0)
    q = u_rem / h
    disc = np.maximum(a * a + 2.0 * (c - a) * q, 0.0)
    denom = a + np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, 2.0 * q / denom, 0.5)
    return np.clip(t, 0.0, 1.0)


def _cdf_table(dens: np.ndarray, h: float) -> np.ndarray:
    """Row-wise cumulative trapezoid integrals of nonnegative densities."""
    d = np.maximum(dens, 0.0)
    cells = 0.5 * h * (d[..., :-1] + d[..., 1:])
    cdf = np.concatenate([np.zeros(d.shape[:-1] + (1,)), np.cumsum(cells, axis=-1)], axis=-1)
    return cdf / cdf[..., -1:]


def sample_stationary(mu: GridFn, rng: np.random.Generator, size=None):
    """Inverse-CDF draws from the piecewise-linear density ``mu``."""
    g = mu.grid
    cdf = _cdf_table(mu.values, g.h)
    u = rng.random(size)
    i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, g.M - 2)
    pos = np.maximum(mu.values, 0.0)
    d = pos / (0.5 * g.h * np.sum(pos[:-1] + pos[1:]))
    t = _cell_inverse(u - cdf[i], d[i], d[i + 1], g.h)
    x = (i + t) * g.h
    return float(x) if size is None else np.clip(x, 0.0, 1.0)


class ChainSampler:
    """Precomputed row CDFs for repeated chain simulation."""

    def __init__(self, kernel: TransitionKernel):
        g = kernel.grid
        self.grid = g
        self.kernel = kernel
        dens = np.maximum(kernel.p, 0.0)
        cells = 0.5 * g.h * (dens[:, :-1] + dens[:, 1:])
        cum = np.concatenate([np.zeros((g.M, 1)), np.cumsum(cells, axis=1)], axis=1)
        totals = cum[:, -1:]
        self.cdf = cum / totals
        self.dens = dens / totals
        # rows offset by 2 * row so a single searchsorted handles all rows
        self._flat = (self.cdf + 2.0 * np.arange(g.M)[:, None]).ravel()

    def step(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        g = self.grid
        M = g.M
        u = rng.random((2, len(x)))
        i, theta = g.locate(x)
        row = i + (u[0] < theta)
        pos = np.searchsorted(self._flat, u[1] + 2.0 * row, side="right") - 1
        col = np.clip(pos - row * M, 0, M - 2)
        rem = u[1] - self.cdf[row, col]
        t = _cell_inverse(rem, self.dens[row, col], self.dens[row, col + 1], g.h)
        return np.clip((col + t) * g.h, 0.0, 1.0)

    def run(self, x0: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        """Paths of shape ``(len(x0), n + 1)``."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        out = np.empty((len(x0), n + 1))
        out[:, 0] = x0
        x = x0
        for k in range(1, n + 1):
            x = self.step(x, rng)
            out[:, k] = x
        return out


def sample_chain(kernel: TransitionKernel, mu: GridFn, n: int,
                 rng: np.random.Generator, seed=None) -> SamplePath:
    """Stationary chain of ``n`` transitions from the tabulated kernel."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = sample_stationary(mu, rng, size=1)
    vals = ChainSampler(kernel).run(x0, n, rng)[0]
    meta = {"sampler": "chain", "seed": seed, "m": kernel.grid.m}
    return SamplePath(kernel.delta, vals, meta)


def sample_chains(kernel: TransitionKernel, mu: GridFn, n: int, replicates: int,
                  rng: np.random.Generator, x0=None) -> np.ndarray:
    """Independent chains as rows; stationary start unless ``x0`` is given."""
    if x0 is None:
        x0 = sample_stationary(mu, rng, size=replicates)
    else:
        x0 = np.full(replicates, float(x0))
    return ChainSampler(kernel).run(x0, n, rng)


# ---------------------------------------------------------------------------
# reflected Euler-Maruyama by folding
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _fold(y):
    """Map ``y`` to ``|y + 2k|`` with ``y + 2k`` in (-1, 1]; returns (x, sign)."""
    z = y - 2.0 * np.floor((y + 1.0) / 2.0)
    if z <= -1.0:
        z += 2.0
    if z < 0.0:
        return -z, -1.0
    return z, 1.0


@numba.njit(cache=True)
def _interp(values, x):
    M = values.shape[0]
    s = x * (M - 1)
    i = int(np.floor(s))
    if i < 0:
        i = 0
    if i > M - 2:
        i = M - 2
    t = s - i
    return (1.0 - t) * values[i] + t * values[i + 1]


@numba.njit(cache=True)
def _euler_block(y0, sigma, drift, dt, normals):
    """Advance one path through a block of observations.

    ``normals`` has shape (n_obs, steps_per_obs); returns the folded states
    after each observation interval and the final unfolded state.
    """
    n_obs, steps = normals.shape
    out = np.empty(n_obs)
    y = y0
    sq = np.sqrt(dt)
    for k in range(n_obs):
        for j in range(steps):
            x, sgn = _fold(y)
            y = y + sgn * _interp(drift, x) * dt + _interp(sigma, x) * sq * normals[k, j]
        out[k] = _fold(y)[0]
    return out, y


def fold(y):
    """Vectorized folding map into [0, 1]."""
    y = np.asarray(y, dtype=float)
    z = y - 2.0 * np.floor((y + 1.0) / 2.0)
    z = np.where(z <= -1.0, z + 2.0, z)
    return np.abs(z)


def euler_reflected(p: DiffusionParams, delta: float, n: int, fine_step: float,
                    rng: np.random.Generator, seed=None, chunk: int = 2000) -> SamplePath:
    """Folded Euler-Maruyama observations at spacing ``delta``.

    ``fine_step`` must divide ``delta``.
    """
    if fine_step <= 0 or fine_step > delta:
        raise ValueError("need 0 < fine_step <= delta")
    ratio = delta / fine_step
    steps = int(round(ratio))
    if abs(ratio - steps) > 1e-9 * ratio:
        raise ValueError(f"fine_step {fine_step} does not divide delta {delta}")
    sigma = np.sqrt(p.sigma2.values)
    drift = np.ascontiguousarray(p.b.values)
    y = sample_stationary(p.mu, rng)
    out = [np.array([y])]
    done = 0
    while done < n:
        block = min(chunk, n - done)
        normals = rng.standard_normal((block, steps))
        obs, y = _euler_block(y, sigma, drift, fine_step, normals)
        out.append(obs)
        done += block
    meta = {"sampler": "euler", "seed": seed, "fine_step": fine_step,
            "params_hash": params_hash(p)}
    return SamplePath(delta, np.concatenate(out), meta)
