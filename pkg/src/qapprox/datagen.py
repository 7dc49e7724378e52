"""Dataset generators for the bundled experiments.

Three families: a coagulation-kernel matrix whose entries involve the
modified Bessel function of order zero (computed here by a
series/asymptotic split with exponential scaling, so no entry over- or
underflows), the packaged Gaussian-mixture vector whose TT-SVD at
tolerance 1e-2 has a fixed rank vector, and integer-quantized Gaussian
low-rank objects. Every generator is a deterministic function of its
parameters and the seed.
"""

import json
import math
from importlib import resources

import numpy as np

from .tt import QttVector

__all__ = [
    "gen_gaussian_mixture",
    "gen_quantized_matrix",
    "gen_quantized_tt",
    "gen_smoluchowski",
    "i0_scaled",
    "mixture_parameters",
    "round_half_away",
]

_SERIES_CUTOFF = 15.0


def i0_scaled(z):
    """Exponentially scaled modified Bessel function e^{-z} * I_0(z).

    Below z = 15 the power series sum_k (z^2/4)^k / (k!)^2 is summed to
    machine precision and scaled by e^{-z}; at and above 15 the
    asymptotic expansion of e^{-z} I_0(z) ~ (2 pi z)^{-1/2} sum_k u_k
    with u_0 = 1 and u_{k+1} = u_k (2k+1)^2 / (8 (k+1) z) is truncated
    at its smallest term. Relative accuracy is 1e-14 or better across
    the seam.

    Parameters
    ----------
    z : array_like
        Nonnegative argument(s).

    Returns
    -------
    ndarray or float
        Scaled Bessel values, matching the input shape; a scalar input
        yields a float.
    """
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("z must be finite and nonnegative")
    out = np.empty_like(arr)

    small = arr < _SERIES_CUTOFF
    zs = arr[small]
    q = 0.25 * zs * zs
    term = np.ones_like(zs)
    total = np.ones_like(zs)
    k = 0
    while k < 120:
        k += 1
        term = term * q / (k * k)
        total = total + term
        if k > 4 and np.all(term <= 1e-17 * total):
            break
    out[small] = np.exp(-zs) * total

    zl = arr[~small]
    term = np.ones_like(zl)
    total = np.ones_like(zl)
    active = np.ones(zl.shape, dtype=bool)
    k = 0
    while np.any(active) and k < 40:
        new = term * (2 * k + 1) ** 2 / (8.0 * (k + 1) * zl)
        # An asymptotic series is summed only while its terms decrease.
        active &= new < term
        total = np.where(active, total + new, total)
        term = np.where(active, new, term)
        active &= new > 1e-18 * total
        k += 1
    out[~small] = total / np.sqrt(2.0 * math.pi * zl)

    return float(out[0]) if scalar else out


def gen_smoluchowski(n, step, t):
    """Coagulation-kernel matrix on an equidistant grid at time t.

    Entry (i, j) is nu(v_1, v_2, t) with v_1 = step * i, v_2 = step * j:

        nu = e^{-v_1 - v_2} * I_0(z) / (1 + t/2)^2,
        z = 2 * sqrt(v_1 * v_2 * t / (t + 2)).

    Computed as e^{z - v_1 - v_2} * (e^{-z} I_0(z)) / (1 + t/2)^2, and
    z <= v_1 + v_2 keeps the exponent nonpositive, so nothing overflows.
    At t = 0 the matrix is the separable e^{-v_1 - v_2}, exactly rank
    one; all entries are positive for every t >= 0.

    Parameters
    ----------
    n : int
        Grid size; the matrix is n x n.
    step : float
        Grid spacing, positive.
    t : float
        Time, nonnegative.

    Returns
    -------
    ndarray
        The n x n kernel matrix.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    step = float(step)
    if not math.isfinite(step) or step <= 0:
        raise ValueError(f"step must be a finite value > 0, got {step}")
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"t must be a finite value >= 0, got {t}")
    v = step * np.arange(n)
    root = np.sqrt(v)
    z = (2.0 * math.sqrt(t / (t + 2.0))) * np.outer(root, root)
    exponent = z - (v[:, None] + v[None, :])
    return np.exp(exponent) * i0_scaled(z) / (1.0 + 0.5 * t) ** 2


def mixture_parameters():
    """Parsed parameters of the packaged Gaussian mixture data file."""
    text = resources.files("qapprox").joinpath("data/mixture.json").read_text()
    return json.loads(text)


def gen_gaussian_mixture(length=1024):
    """Discretized Gaussian mixture as a quantized-tensor vector.

    Evaluates the packaged mixture (see mixture_parameters) on a uniform
    grid over its domain. All entries are nonnegative. At the canonical
    length 1024 the TT-SVD at relative tolerance 1e-2 has the internal
    rank vector (2, 2, 2, 3, 3, 4, 5, 4, 2).

    Parameters
    ----------
    length : int
        Number of grid points, a power of two >= 2.

    Returns
    -------
    QttVector
        The mixture values on the grid.
    """
    params = mixture_parameters()
    lo, hi = (float(a) for a in params["domain"])
    x = np.linspace(lo, hi, int(length))
    v = np.zeros_like(x)
    for comp in params["components"]:
        w = float(comp["weight"])
        mu = float(comp["mean"])
        s = float(comp["stddev"])
        v += w * np.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    return QttVector(v)


def round_half_away(x):
    """Round entrywise to the nearest integer, halves away from zero.

    The fractional part is computed exactly and compared against 0.5, so
    values just below a half never round up (adding 0.5 first would).
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    base = np.floor(ax)
    return np.sign(x) * np.where(ax - base >= 0.5, base + 1.0, base)


def _check_quantized_args(n, r, rng):
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    r = int(r)
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if rng is None and r > 0:
        raise ValueError("an RngStream is required")
    return n, r


def gen_quantized_matrix(n, r, rng, return_exact=False):
    """Integer matrix: a Gaussian rank-r product rounded half away from zero.

    Draws two n x r standard normal factors, forms their product and
    rounds entrywise. The unrounded product has rank exactly r (with
    probability one) and the rounding moves no entry by more than 0.5.
    r = 0 yields the zero matrix.

    Parameters
    ----------
    n : int
        Side length.
    r : int
        Rank of the unrounded product, >= 0.
    rng : RngStream
        Source of the Gaussian factors.
    return_exact : bool
        When True, also return the unrounded product.

    Returns
    -------
    ndarray or (ndarray, ndarray)
        The quantized matrix, plus the exact product if requested.
    """
    n, r = _check_quantized_args(n, r, rng)
    if r == 0:
        exact = np.zeros((n, n))
    else:
        gen = rng.generator
        f = gen.standard_normal((n, r))
        g = gen.standard_normal((n, r))
        exact = f @ g.T
    quantized = round_half_away(exact)
    return (quantized, exact) if return_exact else quantized


def gen_quantized_tt(n, r, rng, return_exact=False):
    """Integer tensor: a Gaussian TT of ranks (r, r) rounded half away from zero.

    Draws three standard normal cores of shapes (1, n, r), (r, n, r) and
    (r, n, 1), contracts them to a dense n x n x n tensor and rounds
    entrywise. The unrounded tensor has TT ranks exactly (r, r) (with
    probability one). r = 0 yields the zero tensor.

    Parameters
    ----------
    n : int
        Mode size of all three modes.
    r : int
        Internal TT rank of the unrounded tensor, >= 0.
    rng : RngStream
        Source of the Gaussian cores.
    return_exact : bool
        When True, also return the unrounded tensor.

    Returns
    -------
    ndarray or (ndarray, ndarray)
        The quantized tensor, plus the exact contraction if requested.
    """
    n, r = _check_quantized_args(n, r, rng)
    if r == 0:
        exact = np.zeros((n, n, n))
    else:
        gen = rng.generator
        c1 = gen.standard_normal((n, r))
        c2 = gen.standard_normal((r, n, r))
        c3 = gen.standard_normal((r, n))
        exact = np.einsum("ia,ajb,bk->ijk", c1, c2, c3)
    quantized = round_half_away(exact)
    return (quantized, exact) if return_exact else quantized
