"""Wavelet shrinkage denoising for sampled trajectories.

Pipeline: multi-level DWT with an orthogonal Daubechies filter bank, a
level-dependent threshold on every detail band, a piecewise shrink that
interpolates between hard and soft thresholding, and reconstruction.
The approximation band is never modified.

Boundary convention: half-sample symmetric extension (``x[-1] = x[0]``).
Each level of an ``n``-sample input yields ``(n + F - 1) // 2`` coefficients
per band for a length-``F`` filter, which is enough to make reconstruction
exact for any ``n``, power of two or not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Sequence

import numpy as np

RULE_SQRT_FINEST = "sqrt_finest"
RULE_SQRT_COARSEST = "sqrt_coarsest"
RULES = (RULE_SQRT_FINEST, RULE_SQRT_COARSEST)

MAD_SCALE = 0.6745


@lru_cache(maxsize=None)
def daubechies_lowpass(order: int) -> tuple:
    """Decomposition lowpass taps of the Daubechies wavelet with ``order`` vanishing moments.

    Built by spectral factorisation: the roots of the Daubechies polynomial in
    ``y = sin^2(w/2)`` are mapped to ``z`` and the minimum-phase half is kept.
    Taps are returned in minimum-phase order, largest taps first.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    p = order
    # P(y) = sum_k C(p-1+k, k) y^k ; numpy wants highest degree first
    poly_y = [math.comb(p - 1 + k, k) for k in range(p)][::-1]
    z_roots = []
    for y in np.roots(poly_y) if p > 1 else []:
        # y = (2 - z - 1/z) / 4  ->  z^2 - (2 - 4y) z + 1 = 0
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z_roots.append(pair[np.argmin(np.abs(pair))])
    h = np.array([1.0])
    for _ in range(p):
        h = np.convolve(h, [1.0, 1.0])
    for z in z_roots:
        h = np.convolve(h, [1.0, -z])
    h = np.real(h)
    h = h * math.sqrt(2.0) / h.sum()
    return tuple(float(c) for c in h)


@dataclass(frozen=True)
class WaveletBasis:
    name: str
    lowpass: tuple
    highpass: tuple
    rec_lowpass: tuple
    rec_highpass: tuple

    @property
    def filter_length(self) -> int:
        return len(self.lowpass)

    @classmethod
    def from_scaling(cls, name: str, scaling: Sequence[float]) -> "WaveletBasis":
        """Filter bank from scaling taps ``h`` (minimum-phase order).

        Same tap order as the usual published tables: decomposition filters are
        time-reversed reconstruction filters and ``g[k] = (-1)^k h[F-1-k]``.
        """
        h = np.asarray(scaling, dtype=float)
        f = len(h)
        g = np.array([(-1) ** k * h[f - 1 - k] for k in range(f)])
        return cls(
            name=name,
            lowpass=tuple(h[::-1]),
            highpass=tuple(g[::-1]),
            rec_lowpass=tuple(h),
            rec_highpass=tuple(g),
        )

    @classmethod
    def named(cls, name: str) -> "WaveletBasis":
        key = name.lower()
        if key == "haar":
            return cls.from_scaling("haar", daubechies_lowpass(1))
        if key.startswith("db") and key[2:].isdigit():
            return cls.from_scaling(key, daubechies_lowpass(int(key[2:])))
        raise ValueError(f"unknown wavelet basis {name!r}")


@dataclass(frozen=True)
class WaveletPipelineConfig:
    basis: WaveletBasis = field(default_factory=lambda: WaveletBasis.named("db3"))
    levels: int = 3
    alpha: float = 0.5
    rule_assignment: str = RULE_SQRT_FINEST

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.rule_assignment not in RULES:
            raise ValueError(f"rule_assignment must be one of {RULES}")

    @classmethod
    def build(cls, basis: str = "db3", levels: int = 3, alpha: float = 0.5,
              rule_assignment: str = RULE_SQRT_FINEST) -> "WaveletPipelineConfig":
        return cls(WaveletBasis.named(basis), levels, alpha, rule_assignment)


@dataclass
class WaveletCoeffs:
    approx: np.ndarray
    details: List[np.ndarray]  # details[0] is the finest band d_1
    n_original: int

    @property
    def levels(self) -> int:
        return len(self.details)


def band_lengths(n: int, filter_length: int, levels: int) -> List[int]:
    """Signal length at every level: ``[n, n_1, ..., n_J]``."""
    lengths = [n]
    for _ in range(levels):
        lengths.append((lengths[-1] + filter_length - 1) // 2)
    return lengths


def _analysis(x: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    f = len(lo)
    n_out = (len(x) + f - 1) // 2
    xp = np.pad(x, f - 1, mode="symmetric")
    # out[k] = sum_j filt[j] * x[2k + 1 - j], x indexed before padding
    a = np.convolve(xp, lo)[f: f + 2 * n_out: 2]
    d = np.convolve(xp, hi)[f: f + 2 * n_out: 2]
    return a, d


def _synthesis(a: np.ndarray, d: np.ndarray, basis: WaveletBasis, n: int) -> np.ndarray:
    f = basis.filter_length
    # x[n] = sum_k a[k] lo[2k + 1 - n] + d[k] hi[2k + 1 - n]
    ua = np.zeros(2 * len(a) + 1)
    ud = np.zeros(2 * len(d) + 1)
    ua[1::2] = a
    ud[1::2] = d
    y = np.convolve(ua, basis.rec_lowpass) + np.convolve(ud, basis.rec_highpass)
    return y[f - 1: f - 1 + n]


def dwt(signal: Sequence[float], cfg: WaveletPipelineConfig) -> WaveletCoeffs:
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    n = len(x)
    if n < 2 ** cfg.levels:
        raise ValueError(f"signal of length {n} too short for {cfg.levels} levels")
    lo = np.asarray(cfg.basis.lowpass)
    hi = np.asarray(cfg.basis.highpass)
    details = []
    a = x
    for _ in range(cfg.levels):
        a, d = _analysis(a, lo, hi)
        details.append(d)
    return WaveletCoeffs(approx=a, details=details, n_original=n)


def idwt(coeffs: WaveletCoeffs, cfg: WaveletPipelineConfig) -> np.ndarray:
    f = cfg.basis.filter_length
    lengths = band_lengths(coeffs.n_original, f, coeffs.levels)
    if len(coeffs.approx) != lengths[-1]:
        raise ValueError("approximation band length inconsistent with n_original")
    for j, d in enumerate(coeffs.details, start=1):
        if len(d) != lengths[j]:
            raise ValueError(f"detail band d_{j} has length {len(d)}, expected {lengths[j]}")
    a = np.asarray(coeffs.approx, dtype=float)
    for j in range(coeffs.levels, 0, -1):
        a = _synthesis(a, np.asarray(coeffs.details[j - 1], dtype=float), cfg.basis, lengths[j - 1])
    return a


def noise_sigma(finest_detail: Sequence[float]) -> float:
    """Robust noise scale ``median(|w|) / 0.6745``."""
    w = np.abs(np.asarray(finest_detail, dtype=float))
    if w.size == 0:
        raise ValueError("cannot estimate noise from an empty band")
    return float(np.median(w)) / MAD_SCALE


def threshold_level(j: int, levels: int, sigma: float, n: int,
                    rule_assignment: str = RULE_SQRT_FINEST) -> float:
    """Threshold for detail band ``j`` (1 = finest) of a ``levels``-deep decomposition.

    Two forms share the universal factor ``sigma * sqrt(2 ln n)``: one divides
    by ``sqrt(j)``, the other by ``ln(j + 1)``. ``rule_assignment`` decides
    which bands get the square-root form: only the finest band
    (``sqrt_finest``) or only the coarsest (``sqrt_coarsest``).
    """
    if not 1 <= j <= levels:
        raise ValueError(f"level {j} outside 1..{levels}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if n < 2:
        raise ValueError("n must be >= 2")
    universal = sigma * math.sqrt(2.0 * math.log(n))
    if rule_assignment == RULE_SQRT_FINEST:
        sqrt_form = j == 1
    elif rule_assignment == RULE_SQRT_COARSEST:
        sqrt_form = j == levels
    else:
        raise ValueError(f"unknown rule assignment {rule_assignment!r}")
    if sqrt_form:
        return universal / math.sqrt(j)
    return universal / math.log(j + 1)


def shrink(w, t: float, alpha: float):
    """Piecewise shrink: zero inside ``(-t, t)``, pull toward zero by ``alpha * t`` outside.

    ``alpha = 0`` is hard thresholding, ``alpha = 1`` soft thresholding.
    Works elementwise on arrays; scalars in, scalar out.
    """
    if t < 0:
        raise ValueError("threshold must be non-negative")
    arr = np.asarray(w, dtype=float)
    out = np.where(arr >= t, arr - alpha * t, np.where(arr <= -t, arr + alpha * t, 0.0))
    if np.ndim(w) == 0:
        return float(out)
    return out


def denoise(noisy: Sequence[float], cfg: WaveletPipelineConfig | None = None) -> np.ndarray:
    cfg = cfg or WaveletPipelineConfig()
    x = np.asarray(noisy, dtype=float)
    coeffs = dwt(x, cfg)
    sigma = noise_sigma(coeffs.details[0])
    n = len(x)
    shrunk = [
        shrink(d, threshold_level(j, cfg.levels, sigma, n, cfg.rule_assignment), cfg.alpha)
        for j, d in enumerate(coeffs.details, start=1)
    ]
    return idwt(WaveletCoeffs(coeffs.approx, shrunk, n), cfg)
