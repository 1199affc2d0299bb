"""Tabulated Daubechies wavelet bases on [0, 1].

Two bases are provided.

``WaveletBasis``
    Periodized Daubechies wavelets organised by level, with the interior
    index set, analysis/synthesis and the weighted-coefficient norms. Used
    for the prior series, the truth fixtures and all norm computations.

``FoldedBasis``
    Even-symmetrized periodized scaling functions on a circle of length 2,
    restricted to [0, 1]. Its elements satisfy the reflecting boundary
    condition and it is used by the spectral estimator, whose target
    eigenfunction is not periodic on [0, 1].

Filters are obtained by spectral factorization of the Daubechies
polynomial, so no external wavelet package is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np

from .gridfn import Grid, GridFn, write_csv

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# filters and cascade
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def daubechies_filter(N: int) -> tuple[float, ...]:
    """Minimum-phase Daubechies low-pass filter with ``N`` vanishing moments.

    Normalized so that the taps sum to ``sqrt(2)``; length ``2N``.
    """
    if N < 1:
        raise ValueError(f"vanishing moments must be >= 1, got {N}")
    if N == 1:
        return (1 / SQRT2, 1 / SQRT2)
    # P(y) = sum_k C(N-1+k, k) y^k with y = sin^2(w/2); z + 1/z = 2 - 4y
    coeffs = [comb(N - 1 + k, k) for k in range(N)]
    poly = np.array([1.0 + 0j])
    for y in np.roots(coeffs[::-1]):
        z_pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z = z_pair[np.argmin(np.abs(z_pair))]
        poly = np.convolve(poly, [1.0, -z])
    for _ in range(N):
        poly = np.convolve(poly, [1.0, 1.0])
    h = np.real(poly)
    h = h / h.sum() * SQRT2
    return tuple(float(v) for v in h)


def highpass(h: np.ndarray) -> np.ndarray:
    """Quadrature mirror filter ``g_k = (-1)^k h_{2N-1-k}``."""
    L = len(h)
    return np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])


def _upsample_filter(seq: np.ndarray, filt: np.ndarray) -> np.ndarray:
    up = np.zeros(2 * len(seq) - 1)
    up[::2] = seq
    return np.convolve(up, filt)


@lru_cache(maxsize=None)
def cascade_sequence(N: int, r: int, wavelet: bool) -> np.ndarray:
    """Delta-started cascade after ``r`` refinements.

    ``2**(r/2) * seq[i]`` approximates the mother scaling function (or
    wavelet) at ``i / 2**r``. The periodized translates are exactly
    orthonormal under the discrete inner product at resolution ``2**-r``.
    """
    if r < 1:
        raise ValueError("cascade needs at least one refinement")
    h = np.asarray(daubechies_filter(N))
    seq = highpass(h) if wavelet else h.copy()
    for _ in range(r - 1):
        seq = _upsample_filter(seq, h)
    seq = seq.copy()
    seq.setflags(write=False)
    return seq


def scaling_integer_values(N: int) -> np.ndarray:
    """Exact values of the scaling function at the integers ``0..2N-1``."""
    h = np.asarray(daubechies_filter(N))
    L = len(h)
    T = np.zeros((L, L))
    for i in range(L):
        for j in range(L):
            if 0 <= 2 * i - j < L:
                T[i, j] = SQRT2 * h[2 * i - j]
    w, V = np.linalg.eig(T)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


@lru_cache(maxsize=None)
def scaling_samples(N: int, r: int) -> np.ndarray:
    """Exact samples of the scaling function at ``i / 2**r``, ``i = 0..(2N-1)2^r``."""
    h = np.asarray(daubechies_filter(N))
    L = len(h)
    v = scaling_integer_values(N)
    for q in range(1, r + 1):
        n = (L - 1) * 2**q + 1
        new = np.zeros(n)
        step = 2 ** (q - 1)
        for k, hk in enumerate(h):
            idx = np.arange(n) - k * step
            ok = (idx >= 0) & (idx < len(v))
            new[ok] += SQRT2 * hk * v[idx[ok]]
        v = new
    v.setflags(write=False)
    return v


# ---------------------------------------------------------------------------
# periodized basis
# ---------------------------------------------------------------------------


class TabulatedBasis:
    """Rows of ``table`` are basis functions sampled on ``grid``."""

    grid: Grid
    table: np.ndarray

    def evaluate(self, x, rows: int | None = None) -> np.ndarray:
        """Linear interpolation of the first ``rows`` basis functions at ``x``.

        Returns an array of shape ``(rows, len(x))``.
        """
        tab = self.table if rows is None else self.table[:rows]
        i, t = self.grid.locate(np.atleast_1d(x))
        return tab[:, i] * (1.0 - t) + tab[:, i + 1] * t


@dataclass(frozen=True)
class IndexSet:
    """Indices ``(l, k)`` of wavelets supported inside ``[A, B]``.

    ``rows`` are positions in the owning basis table.
    """

    indices: tuple[tuple[int, int], ...]
    rows: tuple[int, ...]
    A: float
    B: float

    def __len__(self):
        return len(self.indices)

    def levels(self) -> list[int]:
        return sorted({l for l, _ in self.indices})

    def at_level(self, l: int) -> list[tuple[int, int]]:
        return [(ll, k) for ll, k in self.indices if ll == l]


class WaveletBasis(TabulatedBasis):
    """Periodized Daubechies basis on [0, 1].

    Row layout: first the ``2**J0`` scaling functions ``phi_{J0,k}``
    (carrying the level label ``J0 - 1``), then the wavelets
    ``psi_{l,k}``, ``0 <= k < 2**l`` for ``l = J0..Jmax``. The first
    ``2**(J+1)`` rows span the approximation space at level ``J + 1``.

    Parameters
    ----------
    N : int
        Vanishing moments (``N = 1`` gives the Haar basis).
    J0 : int
        Coarsest wavelet level.
    Jmax : int
        Finest tabulated level; at least eight grid points per finest wavelet
        shift are required, so ``Jmax <= grid.m - 3``.
    grid : Grid
    """

    def __init__(self, N: int, J0: int, Jmax: int, grid: Grid):
        if N < 1:
            raise ValueError(f"vanishing moments must be >= 1, got {N}")
        if J0 < 1:
            raise ValueError(f"J0 must be >= 1, got {J0}")
        if Jmax < J0:
            raise ValueError(f"Jmax={Jmax} below J0={J0}")
        if Jmax > grid.m - 3:
            raise ValueError(
                f"Jmax={Jmax} too fine for grid m={grid.m} (need Jmax <= m - 3)"
            )
        self.N, self.J0, self.Jmax, self.grid = N, J0, Jmax, grid
        levels, shifts, scaling, lo, hi, rows = [], [], [], [], [], []
        P = 2**grid.m
        # scaling functions phi_{J0,k}, then wavelets
        specs = [(J0, J0 - 1, False)] + [(l, l, True) for l in range(J0, Jmax + 1)]
        for scale, label, is_wav in specs:
            r = grid.m - scale
            seq = cascade_sequence(N, r, is_wav) * 2 ** (grid.m / 2)
            for k in range(2**scale):
                per = np.zeros(P)
                np.add.at(per, (np.arange(len(seq)) + k * 2**r) % P, seq)
                rows.append(np.append(per, per[0]))
                levels.append(label)
                shifts.append(k)
                scaling.append(not is_wav)
                # continuous support [k, k + 2N - 1] 2^-scale; the cascade
                # samples vanish on its last 2N - 2 fine-grid points
                lo.append(k * 2**r)
                hi.append((k + 2 * N - 1) * 2**r)
        self.table = np.array(rows)
        self.table.setflags(write=False)
        self.levels = np.array(levels)
        self.shifts = np.array(shifts)
        self.is_scaling = np.array(scaling)
        # support in grid-index units (may exceed P when wrapping)
        self.support_lo = np.array(lo)
        self.support_hi = np.array(hi)

    @property
    def size(self) -> int:
        return self.table.shape[0]

    def dim(self, J: int) -> int:
        """Number of rows with level label at most ``J``."""
        self._check_level(J)
        return 2 ** (J + 1)

    def _check_level(self, J: int) -> None:
        if not (self.J0 - 1 <= J <= self.Jmax):
            raise ValueError(f"level {J} outside [{self.J0 - 1}, {self.Jmax}]")

    def row(self, l: int, k: int) -> int:
        """Table row of the wavelet ``psi_{l,k}`` (``l >= J0``)."""
        if not (self.J0 <= l <= self.Jmax and 0 <= k < 2**l):
            raise IndexError(f"no wavelet ({l}, {k}) in basis")
        return 2**l + k

    def function(self, l: int, k: int) -> GridFn:
        return GridFn(self.grid, self.table[self.row(l, k)])

    def support(self, row: int) -> tuple[float, float]:
        """Support of the continuous basis function (may exceed 1 if wrapped)."""
        h = self.grid.h
        return self.support_lo[row] * h, self.support_hi[row] * h


@dataclass(frozen=True)
class WaveletCoeffs:
    """Coefficients of the first ``2**(J+1)`` rows of a :class:`WaveletBasis`."""

    J: int
    coeffs: np.ndarray
    levels: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if len(c) != 2 ** (self.J + 1):
            raise ValueError(f"expected {2 ** (self.J + 1)} coefficients, got {len(c)}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def level(self, l: int) -> np.ndarray:
        return self.coeffs[self.levels[: len(self.coeffs)] == l]


def build_basis(N: int = 6, J0: int = 2, Jmax: int | None = None,
                grid: Grid | None = None) -> WaveletBasis:
    """Build a periodized Daubechies basis (``Jmax`` defaults to ``m - 3``)."""
    grid = grid or Grid()
    if Jmax is None:
        Jmax = grid.m - 3
    return WaveletBasis(N, J0, Jmax, grid)


def interior_index_set(basis: WaveletBasis, A: float, B: float) -> IndexSet:
    """All wavelets whose support lies in ``[A, B]``.

    Scaling functions are never included. Raises ``ValueError`` if no
    wavelet up to ``Jmax`` fits.
    """
    if not (0.0 < A < B < 1.0):
        raise ValueError(f"need 0 < A < B < 1, got [{A}, {B}]")
    P = 2**basis.grid.m
    lo_ok = basis.support_lo >= A * P - 1e-9
    hi_ok = basis.support_hi <= B * P + 1e-9
    mask = lo_ok & hi_ok & ~basis.is_scaling
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise ValueError(
            f"no wavelet with {basis.N} vanishing moments up to level "
            f"{basis.Jmax} is supported in [{A}, {B}]"
        )
    idx = tuple((int(basis.levels[r]), int(basis.shifts[r])) for r in rows)
    return IndexSet(idx, tuple(int(r) for r in rows), A, B)


def analyze(f: GridFn, basis: WaveletBasis, J: int | None = None) -> WaveletCoeffs:
    """Quadrature inner products of ``f`` with all rows up to level ``J``."""
    J = basis.Jmax if J is None else J
    n = basis.dim(J)
    c = basis.table[:n] @ (basis.grid.weights * f.values)
    return WaveletCoeffs(J, c, basis.levels)


def synthesize(c: WaveletCoeffs, basis: WaveletBasis) -> GridFn:
    n = len(c.coeffs)
    if n > basis.size:
        raise ValueError("coefficients exceed the basis range")
    return GridFn(basis.grid, c.coeffs @ basis.table[:n])


def series(basis: WaveletBasis, rows, values) -> GridFn:
    """Sum of selected table rows weighted by ``values``."""
    rows = np.asarray(rows, dtype=int)
    vals = np.asarray(values, dtype=float)
    if len(rows) == 0:
        return GridFn(basis.grid, np.zeros(basis.grid.M))
    return GridFn(basis.grid, vals @ basis.table[rows])


def _weight_levels(basis: WaveletBasis) -> np.ndarray:
    """Level used in norm weights: wavelets by level, scaling functions as 0."""
    return np.where(basis.is_scaling, 0, basis.levels)


def _level_maxima(f: GridFn, basis: WaveletBasis) -> tuple[np.ndarray, np.ndarray]:
    c = np.abs(analyze(f, basis).coeffs)
    wl = _weight_levels(basis)
    labels = np.unique(wl)
    return labels, np.array([c[wl == l].max() for l in labels])


def besov_dual_bound(f: GridFn, s: float, basis: WaveletBasis) -> float:
    """Upper bound ``sum_l 2^{-l(s-1/2)} max_k |<f, psi_lk>|`` for the dual norm.

    The scaling coefficients enter with unit weight, as in the standard
    sequence-space norm; the bound is then the dual of
    ``max(sum_k |a_k|, sup_l 2^{l(s-1/2)} sum_k |c_lk|)``.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    labels, maxima = _level_maxima(f, basis)
    return float(np.sum(2.0 ** (-labels * (s - 0.5)) * maxima))


def besov_1inf_norm(f: GridFn, s: float, basis: WaveletBasis) -> float:
    """Sequence norm of ``f`` in ``B^s_{1,inf}`` (scaling row unweighted)."""
    c = np.abs(analyze(f, basis).coeffs)
    wl = _weight_levels(basis)
    return float(max(2.0 ** (l * (s - 0.5)) * c[wl == l].sum() for l in np.unique(wl)))


def holder_norm(f: GridFn, t: float, gamma: float = 2.0,
                basis: WaveletBasis | None = None) -> float:
    """Weighted sup ``sup_{l,k} 2^{l(t+1/2)} l^gamma |<f, psi_lk>|``.

    Scaling coefficients enter with unit weight.
    """
    if t <= 0 or gamma < 0:
        raise ValueError("need t > 0 and gamma >= 0")
    labels, maxima = _level_maxima(f, basis)
    w = np.where(labels == 0, 1.0,
                 2.0 ** (labels * (t + 0.5)) * np.maximum(labels, 1) ** gamma)
    return float(np.max(w * maxima))


def sobolev_norm(f: GridFn, t: float, basis: WaveletBasis) -> float:
    """Wavelet characterization ``(sum 2^{2lt} <f, psi_lk>^2)^{1/2}``."""
    c = analyze(f, basis).coeffs
    return float(np.sqrt(np.sum(2.0 ** (2 * _weight_levels(basis) * t) * c**2)))


def export_basis(basis: WaveletBasis, directory: str | Path) -> None:
    """Write one CSV per row plus ``index.json`` with supports."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = []
    for r in range(basis.size):
        l, k = int(basis.levels[r]), int(basis.shifts[r])
        kind = "scaling" if basis.is_scaling[r] else "wavelet"
        name = f"{kind}_{l}_{k}.csv"
        write_csv(GridFn(basis.grid, basis.table[r]), d / name)
        lo, hi = basis.support(r)
        manifest.append({"l": l, "k": k, "kind": kind, "support_lo": lo,
                         "support_hi": hi, "file": name})
    meta = {"N": basis.N, "J0": basis.J0, "Jmax": basis.Jmax,
            "m": basis.grid.m, "functions": manifest}
    (d / "index.json").write_text(json.dumps(meta, indent=1))


# ---------------------------------------------------------------------------
# reflection-symmetric basis for the estimator
# ---------------------------------------------------------------------------


class FoldedBasis(TabulatedBasis):
    """Even-symmetrized Daubechies scaling functions on a circle of length 2.

    A function on [0, 1] whose derivative vanishes at both ends extends to
    an even, 2-periodic function, the same extension used to build the
    reflected diffusion. This basis spans (up to truncation) the even part of
    the periodized approximation space of that circle at resolution
    ``2**-(J+1)`` per unit length, restricted to [0, 1] and orthonormalized
    in ``L^2([0, 1])``.

    Folding pairs ``phi_k(x) + phi_k(-x)``; combinations that are nearly odd
    have almost no even part and are dropped when their Gram eigenvalue is
    below ``rel_tol`` times the largest. Daubechies filters are not
    symmetric, so a reflected translate is not another translate and the
    default cutoff keeps ``3 * 2**J`` functions for ``N = 6``.

    Parameters
    ----------
    N : int
        Vanishing moments of the generating scaling function.
    J : int
        Level, ``J >= 0``.
    grid : Grid
    rel_tol : float
        Relative Gram-eigenvalue cutoff.
    """

    def __init__(self, N: int, J: int, grid: Grid, rel_tol: float = 1e-3):
        if J < 0:
            raise ValueError("level must be >= 0")
        fine = grid.m + 1
        scale = J + 2
        r = fine - scale
        if r < 3:
            raise ValueError(f"level {J} too fine for grid m={grid.m}")
        samples = scaling_samples(N, r) * 2 ** (scale / 2)
        P = 2**fine
        i = np.arange(grid.M)
        rows = []
        for k in range(2**scale):
            per = np.zeros(P)
            np.add.at(per, (np.arange(len(samples)) + k * 2**r) % P, samples)
            per = np.append(per, per[0])
            rows.append(per[i] + per[P - i])
        raw = np.array(rows)
        gram = (raw * grid.weights) @ raw.T
        w, V = np.linalg.eigh(gram)
        keep = w > rel_tol * w.max()
        table = np.diag(w[keep] ** -0.5) @ V[:, keep].T @ raw
        self.N, self.J, self.grid, self.rel_tol = N, J, grid, rel_tol
        self.table = np.ascontiguousarray(table)
        self.table.setflags(write=False)

    @property
    def size(self) -> int:
        return self.table.shape[0]


@lru_cache(maxsize=64)
def folded_basis(N: int, J: int, m: int, rel_tol: float = 1e-3) -> FoldedBasis:
    """Cached :class:`FoldedBasis` on the grid with exponent ``m``."""
    return FoldedBasis(N, J, Grid(m), rel_tol)
