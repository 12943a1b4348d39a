"""Special functions on Damek-Ricci spaces.

Spherical functions phi_lambda(r) = 2F1(Q/2 - i lam, Q/2 + i lam; n/2; -sinh^2(r/2))
depend on the space only through (m_v, m_z).  They are Jacobi functions
phi^{(alpha, beta)}_{2 lam}(r/2) with alpha = (n-2)/2 and beta = (m_z-1)/2,
and two evaluation routes are provided:

* ``series``: the Pfaff-transformed hypergeometric series (``hyp2f1``).
  Exact in principle, but for large |lam| tanh(r/2) the terms grow like
  exp(2 |lam| tanh(r/2)) before cancelling, and near r -> infinity it
  needs about 1/(1 - tanh^2(r/2)) terms.
* ``integral``: the Mehler-type Abel representation

      phi_lam(r) = C (sinh r)^{-2 alpha} cosh(r/2)^{alpha-beta}
                   * int_0^{r/2} cos(2 lam s) (cosh r - cosh 2s)^{alpha-1/2}
                     2F1(alpha+beta, alpha-beta; alpha+1/2; y(s)) ds,

  y(s) = (cosh(r/2) - cosh s) / (2 cosh(r/2)) in [0, 1/2) and
  C = 2^{alpha+3/2} Gamma(alpha+1) / (sqrt(pi) Gamma(alpha+1/2)).
  The kernel is nonnegative, so the absolute error stays at roundoff
  relative to phi_0(r) for all lam.  The endpoint factor
  (r/2 - s)^{alpha-1/2} is absorbed into Gauss-Jacobi weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import jv, loggamma, roots_jacobi


class Dims(NamedTuple):
    """(m_v, m_z) of a (possibly formal) Damek-Ricci space."""

    m_v: int
    m_z: int

    @property
    def n(self) -> int:
        return self.m_v + self.m_z + 1

    @property
    def Q(self) -> float:
        return self.m_z + self.m_v / 2


def dims(S) -> Dims:
    return Dims(S.m_v, S.m_z)


def enlarged(S) -> Dims:
    """The (m_v, m_z + 2) space whose spherical function appears in phi'."""
    return Dims(S.m_v, S.m_z + 2)


class HypergeometricConvergenceError(RuntimeError):
    def __init__(self, message, partial_sums):
        super().__init__(message)
        self.partial_sums = partial_sums


@dataclass(frozen=True)
class SeriesInfo:
    value: complex
    n_terms: int
    sum_abs: float  # sum of |terms|; sum_abs/|value| bounds the cancellation


# -- Gamma -------------------------------------------------------------------


def _is_pole(z) -> bool:
    return np.imag(z) == 0 and np.real(z) <= 0 and float(np.real(z)).is_integer()


def log_gamma_complex(z):
    """Principal branch of log Gamma for complex z (array-friendly)."""
    z = np.asarray(z, dtype=complex)
    poles = (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))
    if np.any(poles):
        raise ValueError("log Gamma has a pole at nonpositive integers")
    out = loggamma(z)
    return out if out.ndim else complex(out)


# -- Gauss hypergeometric function on x <= 0 ----------------------------------


def hyp2f1(a, b, c, x, *, tol=1e-13, max_terms=1_000_000, info=False):
    """2F1(a, b; c; x) for real x <= 0 via the Pfaff transformation.

    2F1(a, b; c; x) = (1-x)^{-a} 2F1(a, c-b; c; x/(x-1)), and x/(x-1) lies
    in [0, 1).  The pair (a, b) is ordered so that the transformed series
    has coefficients decaying like k^{Re(a-b)-1}.  Terms are summed with
    compensated (Neumaier) summation until the geometric tail bound
    drops below ``tol`` times the partial sum.
    """
    if _is_pole(c):
        raise ValueError(f"c = {c} is a pole of 2F1")
    if x > 0:
        raise ValueError("hyp2f1 is implemented for x <= 0 only")
    a, b, c = complex(a), complex(b), complex(c)
    if x == 0:
        return SeriesInfo(1.0 + 0j, 0, 1.0) if info else 1.0 + 0j
    # canonical order, so that 2F1(a, b) and 2F1(b, a) run the same series
    if (a.real, a.imag) > (b.real, b.imag):
        a, b = b, a
    z = x / (x - 1.0)
    bb = c - b
    s_re = s_im = 0.0
    comp_re = comp_im = 0.0
    term = 1.0 + 0j
    sum_abs = 0.0
    partial = []
    k = 0

    def add(val, s, comp):
        t = s + val
        if abs(s) >= abs(val):
            comp += (s - t) + val
        else:
            comp += (val - t) + s
        return t, comp

    while True:
        s_re, comp_re = add(term.real, s_re, comp_re)
        s_im, comp_im = add(term.imag, s_im, comp_im)
        sum_abs += abs(term)
        total = complex(s_re + comp_re, s_im + comp_im)
        nxt = term * (a + k) * (bb + k) / ((c + k) * (k + 1)) * z
        k += 1
        if nxt == 0:
            break
        ratio = abs(nxt) / abs(term) if term != 0 else 0.0
        if ratio < 1 and abs(nxt) / (1 - ratio) <= tol * abs(total):
            s_re, comp_re = add(nxt.real, s_re, comp_re)
            s_im, comp_im = add(nxt.imag, s_im, comp_im)
            sum_abs += abs(nxt)
            k += 1
            break
        if k % 100_000 == 0:
            partial.append((k, total))
        if k >= max_terms:
            raise HypergeometricConvergenceError(
                f"2F1({a}, {b}; {c}; {x}) series did not converge in {max_terms} terms "
                f"(last |term| = {abs(nxt):.3e}, partial sum {total})",
                partial + [(k, total)],
            )
        term = nxt
    value = (1.0 - x) ** (-a) * complex(s_re + comp_re, s_im + comp_im)
    if info:
        return SeriesInfo(value, k, abs((1.0 - x) ** (-a)) * sum_abs)
    return value


def hyp2f1_euler(a, b, c, x):
    """Euler integral for 2F1; needs Re b > 0 and Re(c - b) > 0.

    The endpoint factors t^{b-1} and (1-t)^{c-b-1} oscillate in log t when
    b or c - b is complex, so the two halves of [0, 1] are mapped to
    half-lines by t = e^u and 1 - t = e^v, where the integrands are smooth
    and decay exponentially.
    """
    a, b, c = complex(a), complex(b), complex(c)
    if not (b.real > 0 and (c - b).real > 0):
        raise ValueError("the Euler integral needs Re b > 0 and Re(c-b) > 0")
    half = math.log(0.5)

    def left(u):
        t = math.exp(u)
        return np.exp(b * u) * (1 - t) ** (c - b - 1) * (1 - t * x) ** (-a)

    def right(v):
        t = -math.expm1(v)
        return np.exp((c - b) * v) * t ** (b - 1) * (1 - t * x) ** (-a)

    opts = dict(limit=400, epsabs=1e-15, epsrel=1e-13)
    total = 0j
    for fn in (left, right):
        re, _ = integrate.quad(lambda u: fn(u).real, -np.inf, half, **opts)
        im, _ = integrate.quad(lambda u: fn(u).imag, -np.inf, half, **opts)
        total += re + 1j * im
    pref = np.exp(loggamma(c) - loggamma(b) - loggamma(c - b))
    return complex(pref * total)


# -- spherical functions -------------------------------------------------------


@lru_cache(maxsize=256)
def _jacobi_rule(n_nodes: int, w_exp: float):
    x, w = roots_jacobi(n_nodes, w_exp, 0.0)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _inner_2f1(a, b, c, y):
    """2F1(a, b; c; y) for y in [0, 1/2): positive-term series."""
    total = np.ones_like(y)
    term = np.ones_like(y)
    for k in range(400):
        term = term * ((a + k) * (b + k) / ((c + k) * (k + 1))) * y
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return total


def mehler_node_count(lam_max: float, r: float) -> int:
    n = 48 + int(math.ceil(0.55 * abs(lam_max) * r))
    return 8 * ((n + 7) // 8)


def mehler_nodes(d: Dims, r: float, n_nodes: int):
    """Nodes sigma in [0, r] and weights W with phi_lam(r) = sum W cos(lam sigma)."""
    alpha = (d.n - 2) / 2
    beta = (d.m_z - 1) / 2
    x, w = _jacobi_rule(n_nodes, alpha - 0.5)
    h = r / 2
    s = h * (1 + x) / 2
    gap = h - s
    with np.errstate(invalid="ignore", divide="ignore"):
        sinhc = np.where(gap > 1e-8, np.sinh(gap) / np.where(gap > 0, gap, 1.0), 1.0 + gap**2 / 6)
    # (cosh r - cosh 2s) / (h - s) = 2 sinh(h+s) sinh(gap)/gap
    ratio = 2 * np.sinh(h + s) * sinhc
    y = np.sinh((h + s) / 2) * np.sinh(gap / 2) / np.cosh(h)
    F = _inner_2f1(alpha + beta, alpha - beta, alpha + 0.5, y)
    C = 2 ** (alpha + 1.5) * math.gamma(alpha + 1) / (math.sqrt(math.pi) * math.gamma(alpha + 0.5))
    log_pre = math.log(C) - 2 * alpha * math.log(math.sinh(r)) + (alpha - beta) * math.log(math.cosh(h))
    log_pre += (alpha + 0.5) * math.log(h / 2)
    W = w * np.exp(log_pre) * ratio ** (alpha - 0.5) * F
    return 2 * s, W


SERIES_RADIUS = 1e-3


def _phi_series_one(d: Dims, lam: complex, r: float) -> complex:
    return hyp2f1(d.Q / 2 - 1j * lam, d.Q / 2 + 1j * lam, d.n / 2, -math.sinh(r / 2) ** 2)


def _phi_integral_one_r(d: Dims, lam: np.ndarray, r: float) -> np.ndarray:
    if r == 0:
        return np.ones(lam.shape, dtype=complex)
    if r < SERIES_RADIUS:
        # the Abel-integral nodes degenerate as r -> 0; the series has x ~ -r^2/4 there
        return np.array([_phi_series_one(d, lv, r) for lv in lam.ravel()], dtype=complex).reshape(lam.shape)
    lam_max = float(np.abs(lam).max(initial=0.0))
    sigma, W = mehler_nodes(d, r, mehler_node_count(lam_max, r))
    return np.cos(np.multiply.outer(lam, sigma)) @ W


def phi(d: Dims, lam, r, method: str = "integral"):
    """phi_lam(r) on broadcast arrays; complex dtype."""
    lam_b, r_b = np.broadcast_arrays(np.asarray(lam, dtype=complex), np.asarray(r, dtype=float))
    if np.any(r_b < 0):
        raise ValueError("r must be nonnegative")
    out = np.empty(lam_b.shape, dtype=complex)
    flat_l, flat_r, flat_o = lam_b.ravel(), r_b.ravel(), out.reshape(-1)
    if method == "series":
        for i, (lv, rv) in enumerate(zip(flat_l, flat_r)):
            flat_o[i] = _phi_series_checked(d, lv, rv)
    elif method in ("integral", "auto"):
        for rv in np.unique(flat_r):
            idx = np.nonzero(flat_r == rv)[0]
            flat_o[idx] = _phi_integral_one_r(d, flat_l[idx], float(rv))
    else:
        raise ValueError(f"unknown method {method!r}")
    return out if out.ndim else complex(out)


SERIES_ROUNDOFF_TOL = 1e-9


def _phi_series_checked(d: Dims, lam: complex, r: float) -> complex:
    """Series route with a roundoff guard.

    For large lam*r the Pfaff series cancels heavily; the rounding error is
    about eps * sum|terms|.  It is compared with phi_0(r) (a positive-term
    series, hence accurate), which bounds |phi_lam| for real lam.
    """
    x = -math.sinh(r / 2) ** 2
    res = hyp2f1(d.Q / 2 - 1j * lam, d.Q / 2 + 1j * lam, d.n / 2, x, info=True)
    scale = max(abs(res.value), hyp2f1(d.Q / 2, d.Q / 2, d.n / 2, x).real)
    err = 4 * np.finfo(float).eps * res.sum_abs
    if err > SERIES_ROUNDOFF_TOL * scale:
        raise HypergeometricConvergenceError(
            f"series for phi at lam={lam}, r={r} loses precision: roundoff estimate {err:.2e} "
            f"against scale {scale:.2e}; use the integral route",
            [(res.n_terms, res.value)],
        )
    return res.value


_GROUND_CACHE: dict = {}


def ground_phi(d: Dims, r) -> np.ndarray:
    """phi_0 on a grid of radii (real), cached per grid."""
    r = np.ascontiguousarray(r, dtype=float)
    key = (d, r.size, hash(r.tobytes()))
    out = _GROUND_CACHE.get(key)
    if out is None:
        if len(_GROUND_CACHE) > 32:
            _GROUND_CACHE.clear()
        out = phi(d, 0.0, r).real
        out.setflags(write=False)
        _GROUND_CACHE[key] = out
    return out


def spherical_phi(S, lam, r, method: str = "auto"):
    """Spherical function phi_lam(r); real for real lam (returned complex)."""
    return phi(dims(S), lam, r, method)


def spherical_phi_dr(S, lam, r, method: str = "auto"):
    """d/dr phi_lam(r) = -(Q^2 + 4 lam^2)/(4n) sinh r * phi^{(m_v, m_z+2)}_lam(r)."""
    d = dims(S)
    r = np.asarray(r, dtype=float)
    lam = np.asarray(lam, dtype=complex)
    pref = -(d.Q**2 + 4 * lam**2) / (4 * d.n) * np.sinh(r)
    out = pref * phi(enlarged(S), lam, r, method)
    return out if np.ndim(out) else complex(out)


def _phase_rows(starts: np.ndarray, sigma: np.ndarray, block: int = 16) -> np.ndarray:
    """exp(i starts_p sigma_k); for uniform starts built as a product of two
    small exponential tables, which avoids most complex exponentials."""
    P = starts.size
    step = starts[1] - starts[0] if P > 1 else 0.0
    uniform = P > 2 * block and np.allclose(starts, starts[0] + step * np.arange(P), rtol=0, atol=1e-12 * abs(starts[-1]))
    if not uniform:
        return np.exp(1j * np.multiply.outer(starts, sigma))
    coarse = np.exp(1j * np.multiply.outer(starts[0] + step * block * np.arange(-(-P // block)), sigma))
    fine = np.exp(1j * np.multiply.outer(step * np.arange(block), sigma))
    return (coarse[:, None, :] * fine[None, :, :]).reshape(-1, sigma.size)[:P]


def phi_matrix(d: Dims, lam: np.ndarray, r: np.ndarray, *, panels=None) -> np.ndarray:
    """phi_{lam_i}(r_j) for real lam, shape (len(lam), len(r)).

    With ``panels = (starts, offsets)`` the lambda grid is
    (starts[:, None] + offsets[None, :]).ravel(); the cosines are then
    assembled from e^{i start sigma} e^{i offset sigma} with one complex
    matrix product per r instead of len(lam) * len(sigma) cosines.
    """
    lam = np.asarray(lam, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.empty((lam.size, r.size))
    lam_max = float(np.abs(lam).max(initial=0.0))
    for j, rv in enumerate(r):
        if rv == 0:
            out[:, j] = 1.0
            continue
        sigma, W = mehler_nodes(d, float(rv), mehler_node_count(lam_max, float(rv)))
        if panels is None:
            out[:, j] = np.cos(np.multiply.outer(lam, sigma)) @ W
        else:
            starts, offsets = panels
            E = _phase_rows(starts, sigma)
            D = np.exp(1j * np.multiply.outer(sigma, offsets)) * W[:, None]
            out[:, j] = (E @ D).real.ravel()
    return out


# -- c-function and Plancherel density ----------------------------------------


def _check_real(lam):
    lam = np.asarray(lam)
    if np.iscomplexobj(lam) and np.any(np.imag(lam) != 0):
        raise ValueError("lambda must be real here")
    return np.asarray(np.real(lam), dtype=float)


def c_function(S, lam):
    """Harish-Chandra c-function, computed through log Gamma."""
    d = dims(S)
    lam = _check_real(lam)
    if np.any(lam == 0):
        raise ValueError("c(lambda) has a pole at lambda = 0")
    il = 1j * lam
    logc = (
        (d.Q - 2 * il) * math.log(2)
        + loggamma(2 * il)
        + math.lgamma(d.n / 2)
        - loggamma(d.Q / 2 + il)
        - loggamma(d.m_v / 4 + 0.5 + il)
    )
    out = np.exp(logc)
    return out if out.ndim else complex(out)


def _log_sinh(x):
    x = np.abs(np.asarray(x, dtype=float))
    small = np.minimum(x, 20.0)
    with np.errstate(divide="ignore"):
        return np.where(x < 20, np.log(np.sinh(small)), x + np.log1p(-np.exp(-2 * x)) - math.log(2))


def log_plancherel_density(S, lam):
    d = dims(S)
    lam = np.abs(_check_real(lam))
    with np.errstate(divide="ignore"):
        # |Gamma(2 i lam)|^{-2} = 2 lam sinh(2 pi lam) / pi
        log_g2 = np.log(2 * lam) + _log_sinh(2 * math.pi * lam) - math.log(math.pi)
    return (
        -2 * d.Q * math.log(2)
        + 2 * loggamma(d.Q / 2 + 1j * lam).real
        + 2 * loggamma(d.m_v / 4 + 0.5 + 1j * lam).real
        - 2 * math.lgamma(d.n / 2)
        + log_g2
    )


def plancherel_density(S, lam):
    """|c(lam)|^{-2}, continuous and even, vanishing like lam^2 at 0."""
    out = np.exp(log_plancherel_density(S, lam))
    return out if np.ndim(out) else float(out)


def inversion_constant(S) -> float:
    d = dims(S)
    return 2.0 ** (d.m_z - 2) * math.gamma(d.n / 2) / math.pi ** (d.n / 2 + 1)


def c_asymptotic_constant(S) -> float:
    """2^{Q-1} pi^{-1/2} Gamma(n/2), the limit of |c(lam)| lam^{(n-1)/2}."""
    d = dims(S)
    return 2 ** (d.Q - 1) * math.gamma(d.n / 2) / math.sqrt(math.pi)


# -- Bessel functions and the leading terms of both expansions ----------------


def bessel_j(mu, x):
    """Bessel function of the first kind J_mu(x), mu >= 0, x >= 0."""
    if np.any(np.asarray(mu) < 0):
        raise ValueError("order must be nonnegative")
    out = jv(mu, x)
    return out if np.ndim(out) else float(out)


def bessel_asymptotic(mu, x):
    """Leading large-x term (pi x / 2)^{-1/2} cos(x - pi mu/2 - pi/4)."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(2 / (math.pi * x)) * np.cos(x - math.pi * mu / 2 - math.pi / 4)


def expansion_constant(S) -> float:
    """c_n = 2^{(n-1)/2} pi^{-1/2} Gamma(n/2)."""
    n = dims(S).n
    return 2 ** ((n - 1) / 2) * math.gamma(n / 2) / math.sqrt(math.pi)


def _leading(S, t, lam, derivative):
    d = dims(S)
    from .htype import volume_density

    lam = np.asarray(lam, dtype=float)
    amp = expansion_constant(S) * volume_density(S, t) ** -0.5
    phase = lam * t - (d.n - 1) * math.pi / 4
    if derivative:
        return -amp * lam ** (-(d.n - 3) / 2) * np.sin(phase)
    return amp * lam ** (-(d.n - 1) / 2) * np.cos(phase)


def hc_leading(S, t, lam, derivative: bool = False):
    """Leading term of phi_lam(t) (or of phi'_lam(t)) for t > 1, lam >= 1."""
    if not t > 1 or np.any(np.asarray(lam) < 1):
        raise ValueError("the long-time expansion needs t > 1 and lam >= 1")
    return _leading(S, t, lam, derivative)


def bessel_leading(S, t, lam, derivative: bool = False):
    """Same leading form in the short-time regime 0 < t <= 1, lam t >= 1."""
    if not 0 < t <= 1 or np.any(np.asarray(lam) * t < 1):
        raise ValueError("the short-time expansion needs 0 < t <= 1 and lam t >= 1")
    return _leading(S, t, lam, derivative)


def bessel_series_leading(S, t, lam):
    """First Bessel term of the short-time series:
    2^{n/2-1} Gamma(n/2) t^{(n-1)/2} A(t)^{-1/2} J_{n/2-1}(lam t) (lam t)^{1-n/2}."""
    from .htype import volume_density

    n = dims(S).n
    x = np.asarray(lam, dtype=float) * t
    return (
        2 ** (n / 2 - 1) * math.gamma(n / 2) * t ** ((n - 1) / 2) * volume_density(S, t) ** -0.5
        * jv(n / 2 - 1, x) * x ** (1 - n / 2)
    )


# -- remainder decay ----------------------------------------------------------


@dataclass(frozen=True)
class ExpansionReport:
    lambda_grid: np.ndarray
    remainder_abs: np.ndarray
    fitted_slope: float
    residual: float
    leading_constant_check: float
    envelope_x: np.ndarray
    envelope_y: np.ndarray
    cross_check_slope: float = float("nan")


def envelope_slope(x, y, bins_per_octave: int = 1):
    """Log-log least-squares slope through the per-bin maxima of |y|.

    The x range is cut into bins of equal width in log2(x); in each bin
    the largest |y| and its abscissa are kept.  Returns (slope, residual
    rms, bin abscissae, bin maxima).
    """
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    lx = np.log2(x)
    nb = max(2, int(math.ceil((lx.max() - lx.min()) * bins_per_octave)))
    edges = np.linspace(lx.min(), lx.max(), nb + 1)
    ex, ey = [], []
    for i in range(nb):
        m = (lx >= edges[i]) & ((lx < edges[i + 1]) if i < nb - 1 else (lx <= edges[i + 1]))
        if m.sum() == 0:
            continue
        k = np.argmax(np.where(m, y, -np.inf))
        ex.append(x[k])
        ey.append(y[k])
    ex, ey = np.array(ex), np.array(ey)
    A = np.vstack([np.log(ex), np.ones_like(ex)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(ey), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(ey)) ** 2)))
    return float(coef[0]), resid, ex, ey


def long_time_report(S, t: float, lam_grid, derivative: bool = False) -> ExpansionReport:
    lam_grid = np.asarray(lam_grid, dtype=float)
    exact = (spherical_phi_dr(S, lam_grid, t) if derivative else spherical_phi(S, lam_grid, t)).real
    rem = np.abs(exact - hc_leading(S, t, lam_grid, derivative))
    slope, resid, ex, ey = envelope_slope(lam_grid, rem)
    lam_big = 200.0
    const = abs(c_function(S, lam_big)) * lam_big ** ((dims(S).n - 1) / 2) / c_asymptotic_constant(S)
    return ExpansionReport(lam_grid, rem, slope, resid, const, ex, ey)


def short_time_report(S, t: float, lt_grid, derivative: bool = False) -> ExpansionReport:
    """Remainder decay in the variable lam*t for fixed 0 < t <= 1."""
    lt_grid = np.asarray(lt_grid, dtype=float)
    lam = lt_grid / t
    exact = (spherical_phi_dr(S, lam, t) if derivative else spherical_phi(S, lam, t)).real
    rem = np.abs(exact - bessel_leading(S, t, lam, derivative))
    slope, resid, ex, ey = envelope_slope(lt_grid, rem)
    # Bessel cross-check: the first term of the Bessel series is built from
    # bessel_j; its own remainder must decay at least as fast, and its
    # amplitude must reproduce c_n through the large-argument form of J.
    bes = bessel_series_leading(S, t, lam)
    cross_slope, *_ = envelope_slope(lt_grid, np.abs(exact - bes))
    top = lt_grid >= lt_grid.max() / 2
    n = dims(S).n
    from .htype import volume_density

    amp = np.abs(bes[top]).max() * lam[top][np.argmax(np.abs(bes[top]))] ** ((n - 1) / 2)
    const = amp * volume_density(S, t) ** 0.5 / expansion_constant(S)
    return ExpansionReport(lt_grid, rem, slope, resid, float(const), ex, ey, float(cross_slope))
