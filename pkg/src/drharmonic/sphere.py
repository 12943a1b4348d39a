"""Stratified Monte-Carlo averages over the unit sphere of a Damek-Ricci space.

A uniform point of S^{n-1} is split as omega = (V, Z, b) with V in the
v-part, Z in the z-part and b the a-coordinate.  Every integrand used in
this package depends on omega mostly through b, and it concentrates near
the poles b = +-1 when R is large.  So the sampler stratifies b, with
geometrically graded strata towards both poles, and draws exactly from
the conditional laws of |Z|^2 and the directions of V and Z.

With y = (1 - b)/2 (upper half) or y = (1 + b)/2 (lower half), y follows
a Beta((n-1)/2, (n-1)/2) law.  Small y values and their CDF values are
handled directly, so strata close to a pole keep full relative precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import betainc, betaincinv


@dataclass(frozen=True)
class SphereBatch:
    """Sample of sphere directions, with the pole distances kept exactly.

    ``one_minus_b`` and ``one_plus_b`` are stored separately so that
    1 - b is not lost to cancellation when b is within 1e-12 of 1.
    """

    b: np.ndarray
    one_minus_b: np.ndarray
    one_plus_b: np.ndarray
    z_sq: np.ndarray
    V: np.ndarray | None = None
    Z: np.ndarray | None = None

    def __len__(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class SphereMean:
    """Normalised sphere average (1/nu_n) * integral of f d omega."""

    mean: float
    stderr: float
    n_samples: int


def default_edges() -> np.ndarray:
    """Stratum edges in y in [0, 1/2]: geometric near the pole, uniform after."""
    geometric = np.geomspace(1e-15, 0.05, 43)
    uniform = np.linspace(0.05, 0.5, 10)[1:]
    return np.concatenate(([0.0], geometric, uniform))


def _unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _draw(rng, m_v, m_z, half, y_lo_cdf, y_hi_cdf, count, full):
    n = m_v + m_z + 1
    shape = (n - 1) / 2
    u = rng.uniform(y_lo_cdf, y_hi_cdf, size=count)
    y = betaincinv(shape, shape, u)
    y = np.clip(y, 0.0, 0.5)
    if half > 0:
        one_minus_b = 2 * y
        one_plus_b = 2 - 2 * y
        b = 1 - 2 * y
    else:
        one_plus_b = 2 * y
        one_minus_b = 2 - 2 * y
        b = -1 + 2 * y
    transverse = 4 * y * (1 - y)  # 1 - b^2
    frac_z = rng.beta(m_z / 2, m_v / 2, size=count)
    z_sq = transverse * frac_z
    V = Z = None
    if full:
        v_norm = np.sqrt(transverse * (1 - frac_z))
        V = _unit_vectors(rng, count, m_v) * v_norm[:, None]
        Z = _unit_vectors(rng, count, m_z) * np.sqrt(z_sq)[:, None]
    return SphereBatch(b, one_minus_b, one_plus_b, z_sq, V, Z)


def stratified_mean(
    m_v: int,
    m_z: int,
    integrand: Callable[[SphereBatch], np.ndarray],
    n_samples: int,
    seed: int | np.random.SeedSequence,
    *,
    full: bool = False,
    edges: np.ndarray | None = None,
    pilot_fraction: float = 0.1,
) -> SphereMean:
    """Estimate (1/nu_n) int f d omega by stratified sampling in b.

    A pilot pass (``pilot_fraction`` of the budget) estimates per-stratum
    standard deviations; the main pass allocates samples in proportion to
    p_k * sigma_k (Neyman allocation).  Only main-pass samples enter the
    estimate, which is therefore unbiased.
    """
    if n_samples <= 0:
        raise ValueError("Monte-Carlo sample budget must be positive")
    n = m_v + m_z + 1
    shape = (n - 1) / 2
    edges = default_edges() if edges is None else np.asarray(edges, dtype=float)
    cdf = betainc(shape, shape, edges)
    strata = [(half, cdf[i], cdf[i + 1]) for half in (1, -1) for i in range(len(edges) - 1)]
    probs = np.array([hi - lo for _, lo, hi in strata])
    keep = probs > 0
    strata = [s for s, k in zip(strata, keep) if k]
    probs = probs[keep]
    rng = np.random.default_rng(seed)

    n_strata = len(strata)
    pilot_each = max(16, int(pilot_fraction * n_samples / n_strata))
    sigmas = np.empty(n_strata)
    for k, (half, lo, hi) in enumerate(strata):
        vals = np.asarray(integrand(_draw(rng, m_v, m_z, half, lo, hi, pilot_each, full)), dtype=float)
        sigmas[k] = vals.std(ddof=1)

    main_budget = max(n_samples - pilot_each * n_strata, 2 * n_strata)
    score = probs * sigmas
    if score.sum() > 0:
        alloc = np.maximum(2, np.floor(main_budget * score / score.sum())).astype(int)
    else:
        alloc = np.full(n_strata, max(2, main_budget // n_strata))

    mean = 0.0
    var = 0.0
    used = 0
    for k, (half, lo, hi) in enumerate(strata):
        vals = np.asarray(integrand(_draw(rng, m_v, m_z, half, lo, hi, alloc[k], full)), dtype=float)
        mean += probs[k] * vals.mean()
        var += probs[k] ** 2 * vals.var(ddof=1) / alloc[k]
        used += alloc[k]
    return SphereMean(float(mean), float(np.sqrt(var)), int(used + pilot_each * n_strata))


def uniform_directions(n: int, count: int, seed) -> np.ndarray:
    """Plain uniform points of S^{n-1} (normalised Gaussians), shape (count, n)."""
    rng = np.random.default_rng(seed)
    return _unit_vectors(rng, count, n)
