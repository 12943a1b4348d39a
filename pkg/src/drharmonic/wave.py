"""Wave propagators of the distinguished Laplacian on twisted-radial data.

For f = delta^{1/2} w(R(x)) the functional calculus of L reduces to the
radial calculus of Delta_Q:

    psi(sqrt L) f = delta^{1/2} [psi(sqrt Delta_Q) w](R(x)),

so every propagator below is a spherical-transform multiplier acting on
the radial factor w.  Norms on S come back to one-dimensional integrals
through the sphere averages of powers of delta:

    || delta^{1/2} w ||_{L^p(d rho)}^p = nu_n int |w|^p phi_{lam(p)} A dr,
    lam(p) = -i Q (p - 1) / 2.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import special, sphere
from .htype import (
    GroupPoint,
    distance_to_identity,
    distances_to_identity,
    modular,
    polar_points,
    sphere_average_modular_power,
    volume_density,
)
from .transform import (
    RadialGrid,
    RadialSamples,
    SphericalBasis,
    TaperSensitivityError,
    get_basis,
    inverse,
    radial_grid,
    spectral_grid,
)

P_HYPERGEOMETRIC = (6 / 5, 6.0)


def critical_regularity(n: int, p: float) -> tuple[float, float]:
    """alpha_0 = (n-1)|1/p - 1/2| and alpha_1 = alpha_0 - 1."""
    if n < 4 or not 1 < p < math.inf:
        raise ValueError("need n >= 4 and 1 < p < infinity")
    a0 = (n - 1) * abs(1 / p - 0.5)
    return a0, a0 - 1


# -- symbols -----------------------------------------------------------------------


@dataclass(frozen=True)
class WaveSymbol:
    """(1+lam^2)^{-alpha/2} cos(t lam) or (1+lam^2)^{-alpha/2} sin(t lam)/lam."""

    kind: str
    t: float
    alpha: float

    def __post_init__(self):
        if self.kind not in ("cosine", "sinc"):
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "cosine" and self.alpha < 0:
            raise ValueError("the cosine symbol needs alpha >= 0")
        if self.kind == "sinc" and self.alpha < -1:
            raise ValueError("the sinc symbol needs alpha >= -1")

    @property
    def order(self) -> float:
        return -self.alpha

    def __call__(self, lam):
        lam = np.abs(np.asarray(lam, dtype=float))
        reg = (1 + lam**2) ** (-self.alpha / 2)
        if self.kind == "cosine":
            return reg * np.cos(self.t * lam)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(lam > 0, np.sin(self.t * lam) / np.where(lam > 0, lam, 1), self.t)
        return reg * s


def wave_symbol(kind: str, t: float, alpha: float) -> WaveSymbol:
    return WaveSymbol(kind, float(t), float(alpha))


def symbol_seminorms(m: Callable, order: float, lam_max: float = 50.0, k_max: int = 2, n_points: int = 20001):
    """Sampled seminorms sup_{0 <= lam <= lam_max} |m^{(k)}(lam)| (1+lam^2)^{(k-order)/2}.

    Derivatives are central finite differences on a uniform grid.
    Returns a list indexed by k.
    """
    lam = np.linspace(0.0, lam_max, n_points)
    h = lam[1] - lam[0]
    ext = np.concatenate((-lam[k_max:0:-1], lam, lam_max + h * np.arange(1, k_max + 1)))
    vals = np.asarray(m(ext), dtype=float)
    out = []
    d = vals
    for k in range(k_max + 1):
        core = d[k_max - k: d.size - (k_max - k)] if k < k_max else d
        out.append(float(np.max(np.abs(core) * (1 + lam**2) ** ((k - order) / 2))))
        d = np.gradient(d, h)[1:-1] if k < k_max else d
    return out


# -- grids for propagation -----------------------------------------------------------


def wave_basis(S, t_max: float, cutoff: float, r_extra: float = 12.0, r_max: float | None = None) -> SphericalBasis:
    """Grid pair for propagating data supported near the origin up to time t_max.

    The regularised propagators have kernels decaying like e^{-(Q/2+1) r}
    past the light cone, so r_extra beyond t_max covers the tails.
    """
    if r_max is None:
        r_max = t_max + r_extra
    rg = radial_grid(r_max=r_max, panel_width=min(0.16, 10.0 / cutoff))
    lg = spectral_grid(cutoff, t_max, r_max)
    return get_basis(S, rg, lg)


# -- kernels ----------------------------------------------------------------------------


@dataclass
class KernelReport:
    kernel: RadialSamples
    taper_sensitivity: float
    weighted_l1: float
    mass_outside_1: float
    cutoff: float


def weighted_l1(S, f: RadialSamples, r_min: float = 0.0) -> float:
    """nu_n int_{r >= r_min} |f| phi_0 A dr, i.e. || delta^{1/2} f ||_{L^1(d rho)}."""
    r = f.r_grid
    phi0 = special.ground_phi(special.dims(S), r)
    w = S.nu * np.abs(f.values) * phi0 * volume_density(S, r) * f.weights
    return float(w[r >= r_min].sum())


def kernel_kappa(S, psi: Callable, r_grid: RadialGrid, cutoff: float = 200.0, *, t_max: float | None = None,
                 taper_tol: float = 1e-8, raise_on_taper: bool = False) -> KernelReport:
    """kappa_psi on r_grid with its taper sensitivity and twisted L^1 norm."""
    if t_max is None:
        t_max = getattr(psi, "t", 0.0)
    lg = spectral_grid(cutoff, t_max, r_grid.r_max)
    rep: dict = {}
    try:
        k = inverse(S, psi, r_grid, lambda_grid=lg, check_taper=True, taper_tol=taper_tol, report=rep)
    except TaperSensitivityError:
        if raise_on_taper:
            raise
        k = inverse(S, psi, r_grid, lambda_grid=lg)
    total = weighted_l1(S, k)
    outside = weighted_l1(S, k, r_min=1.0)
    return KernelReport(k, rep["taper_sensitivity"], total, outside / total if total else 0.0, cutoff)


# -- solver -------------------------------------------------------------------------------


def solve_wave_twisted_radial(
    S,
    f_tilde: RadialSamples | None,
    g_tilde: RadialSamples | None,
    t,
    alpha0: float,
    alpha1: float,
    basis: SphericalBasis,
):
    """u~(t) = cos-multiplier(alpha0) f~ + sinc-multiplier(alpha1) g~.

    ``t`` may be a scalar (returns RadialSamples) or a sequence (returns a
    list); all times share one forward transform per datum.
    """
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    lam = basis.lgrid.nodes
    spec_vals = np.zeros((lam.size, ts.size), dtype=complex)
    for datum, kind, alpha in ((f_tilde, "cosine", alpha0), (g_tilde, "sinc", alpha1)):
        if datum is None:
            continue
        if datum.r_grid.shape != basis.rgrid.nodes.shape:
            raise ValueError("data must live on the basis r-grid")
        F = basis.forward_values(datum.values)
        for j, tv in enumerate(ts):
            spec_vals[:, j] += WaveSymbol(kind, tv, alpha)(lam) * F
    out = basis.inverse_values(spec_vals)
    sols = [RadialSamples.on_grid(basis.rgrid, out[:, j]) for j in range(ts.size)]
    return sols[0] if scalar else sols


def apply_symbol(S, m: Callable, f: RadialSamples, basis: SphericalBasis) -> RadialSamples:
    F = basis.forward_values(f.values)
    return RadialSamples.on_grid(basis.rgrid, basis.inverse_values(m(basis.lgrid.nodes) * F))


# -- L^p norms ------------------------------------------------------------------------------


@dataclass(frozen=True)
class LpNorm:
    value: float
    stderr: float
    method: str


def _lp_support(values, weights, p, rel=1e-16):
    mass = np.abs(values) ** p * weights
    return mass > rel * mass.max() if mass.max() > 0 else np.zeros(mass.shape, dtype=bool)


def lp_norm_twisted_detail(S, w: RadialSamples, p: float, method: str = "hypergeometric",
                           n_samples: int = 20000, seed=0) -> LpNorm:
    if not 1 < p < math.inf:
        raise ValueError("need 1 < p < infinity")
    if method == "hypergeometric" and not (P_HYPERGEOMETRIC[0] <= p <= P_HYPERGEOMETRIC[1]):
        warnings.warn(f"p = {p} outside the hypergeometric domain, using Monte Carlo", RuntimeWarning)
        method = "monte_carlo"
    r = w.r_grid
    base = np.abs(w.values) ** p * volume_density(S, r) * w.weights * S.nu
    if p == 2:
        return LpNorm(float(np.sum(base)) ** 0.5, 0.0, "exact")
    if method == "hypergeometric":
        lam = -1j * S.Q * (p - 1) / 2
        avg = special.phi(special.dims(S), lam, r).real
        return LpNorm(float(np.sum(base * avg)) ** (1 / p), 0.0, method)
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    keep = _lp_support(w.values, volume_density(S, r) * w.weights, p)
    seeds = np.random.SeedSequence(seed).spawn(int(keep.sum()))
    total = 0.0
    var = 0.0
    for rv, bv, ss in zip(r[keep], base[keep], seeds):
        if rv == 0:
            total += bv
            continue
        a = sphere_average_modular_power(S, p / 2 - 1, float(rv), method="monte_carlo", n_samples=n_samples, seed=ss)
        total += bv * a.value
        var += (bv * a.stderr) ** 2
    value = total ** (1 / p)
    # delta method for the p-th root
    stderr = value / (p * total) * math.sqrt(var) if total > 0 else 0.0
    return LpNorm(float(value), float(stderr), method)


def lp_norm_twisted(S, w: RadialSamples, p: float, method: str = "hypergeometric", **kw) -> float:
    """|| delta^{1/2} w(R(.)) ||_{L^p(d rho)}."""
    return lp_norm_twisted_detail(S, w, p, method, **kw).value


def growth_exponent_fit(t_values, norms) -> tuple[float, float]:
    """Least-squares slope of log(norm) against log(1+t), with rms residual."""
    t = np.asarray(t_values, dtype=float)
    y = np.asarray(norms, dtype=float)
    if t.size < 4 or np.any(t < 1):
        raise ValueError("need at least 4 points with t >= 1")
    if np.any(y <= 0):
        raise ValueError("norms must be positive")
    ly = np.log(y)
    if np.ptp(ly) == 0:
        return 0.0, 0.0
    A = np.vstack([np.log1p(t), np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(coef[0]), resid


@dataclass
class WaveSolutionReport:
    t_values: np.ndarray
    p: float
    norms: np.ndarray
    fitted_exponent: float
    residual: float
    alpha0: float
    alpha1: float
    config: dict = field(default_factory=dict)

    def to_rows(self):
        return [dict(t=float(t), p=self.p, norm=float(v), alpha0=self.alpha0, alpha1=self.alpha1)
                for t, v in zip(self.t_values, self.norms)]

    def to_json(self) -> str:
        d = dict(self.config)
        d.update(t_values=list(map(float, self.t_values)), p=self.p, norms=list(map(float, self.norms)),
                 fitted_exponent=self.fitted_exponent, residual=self.residual, alpha0=self.alpha0, alpha1=self.alpha1)
        return json.dumps(d, sort_keys=True)


def default_t_values():
    return np.geomspace(2.0, 20.0, 8)


def gaussian_profile(width: float = 0.5) -> Callable:
    """exp(-r^2 / (2 width^2)); width 0.5 gives exp(-2 r^2)."""
    return lambda r: np.exp(-np.asarray(r) ** 2 / (2 * width**2))


def wave_norm_run(S, p: float, alpha0: float, t_values=None, *, profile: Callable | None = None,
                  cutoff: float = 30.0, basis: SphericalBasis | None = None, method: str = "hypergeometric",
                  alpha1: float | None = None) -> WaveSolutionReport:
    """||(Id+L)^{-alpha0/2} cos(t sqrt L) f||_p over t for twisted-radial f."""
    t_values = default_t_values() if t_values is None else np.asarray(t_values, dtype=float)
    profile = gaussian_profile() if profile is None else profile
    if basis is None:
        basis = wave_basis(S, float(np.max(t_values)), cutoff)
    f = RadialSamples.from_function(basis.rgrid, profile)
    sols = solve_wave_twisted_radial(S, f, None, t_values, alpha0, alpha0 - 1 if alpha1 is None else alpha1, basis)
    norms = np.array([lp_norm_twisted(S, u, p, method) for u in sols])
    exponent, resid = growth_exponent_fit(t_values, norms)
    config = dict(space=S.descriptor(), cutoff=basis.lgrid.cutoff, r_max=basis.rgrid.r_max, method=method,
                  r_nodes=int(basis.rgrid.nodes.size), lambda_nodes=int(basis.lgrid.nodes.size))
    return WaveSolutionReport(t_values, p, norms, exponent, resid, alpha0,
                              alpha0 - 1 if alpha1 is None else alpha1, config)


# -- spherical means ------------------------------------------------------------------------


@dataclass(frozen=True)
class SphericalMeanResult:
    lhs: float
    rhs: float
    mc_error: float

    @property
    def sigmas(self) -> float:
        diff = abs(self.lhs - self.rhs)
        if self.mc_error == 0:
            return 0.0 if diff < 1e-12 * max(1.0, abs(self.lhs)) else math.inf
        return diff / self.mc_error


def _group_mul_batch(S, z: GroupPoint, v, zz, a):
    """z * (v, zz, a) for a fixed left factor and stacked right factors."""
    from .htype import bracket

    sa = math.sqrt(z.a)
    v_out = z.v[None, :] + sa * v
    br = bracket(S, np.broadcast_to(z.v, v.shape), v)
    z_out = z.z[None, :] + z.a * zz + 0.5 * sa * br
    return v_out, z_out, z.a * a


def spherical_mean_check(S, t: float, w: Callable, z: GroupPoint, samples: int = 1_000_000, seed=0,
                         *, cutoff: float = 40.0, batch: int = 200_000) -> SphericalMeanResult:
    """Both sides of phi_{sqrt L}(t) f (z) = (1/nu_n) int delta(x(t,w))^{-1/2} f(z x(t,w)) dw
    for f = delta^{1/2} w(R(.)).

    The left side is delta(z)^{1/2} times the multiplier phi_lam(t) applied
    to w, evaluated at R(z).  The right side is a Monte-Carlo sphere mean,
    where the integrand reduces to delta(z)^{1/2} w(R(z x(t, omega))).
    """
    if samples <= 0:
        raise ValueError("Monte-Carlo sample budget must be positive")
    Rz = distance_to_identity(S, z)
    r_max = 20.0 + 2 * t
    rg = radial_grid(r_max=r_max, panel_width=min(0.16, 10.0 / cutoff))
    lg = spectral_grid(cutoff, t + Rz, r_max)
    wf = RadialSamples.from_function(rg, w)
    F = get_basis(S, rg, lg).forward_values(wf.values)
    psi_vals = special.phi(special.dims(S), lg.nodes, t).real * F
    phi_z = special.phi_matrix(special.dims(S), lg.nodes, np.array([Rz]), panels=(lg.starts, lg.offsets))[:, 0]
    weights = special.inversion_constant(S) * special.plancherel_density(S, lg.nodes) * lg.weights * lg.taper()
    twist = modular(S, z) ** 0.5
    lhs = twist * float(np.sum(weights * psi_vals * phi_z).real)

    rng = np.random.default_rng(seed)
    n = S.n
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        g = rng.standard_normal((m, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        V, Z, b = g[:, : S.m_v], g[:, S.m_v: S.m_v + S.m_z], g[:, -1]
        xv, xz, xa = polar_points(S, t, V, Z, b)
        pv, pz, pa = _group_mul_batch(S, z, xv, xz, xa)
        vals = twist * w(distances_to_identity(pv, pz, pa))
        acc += vals.sum()
        acc2 += (vals**2).sum()
        done += m
    mean = acc / samples
    var = max(acc2 / samples - mean**2, 0.0)
    return SphericalMeanResult(lhs, float(mean), float(math.sqrt(var / samples)))


# -- atoms ------------------------------------------------------------------------------------


def ball_volume(S, radius: float, order: int = 64) -> float:
    """rho(B(e, radius)) = nu_n int_0^radius A dr (right and left Haar measures agree on balls about e)."""
    x, wq = np.polynomial.legendre.leggauss(order)
    r = radius * (x + 1) / 2
    return float(S.nu * np.sum(wq * volume_density(S, r)) * radius / 2)


@dataclass
class Atom:
    profile: RadialSamples
    ball_radius: float
    kind: str
    family: str = "poly"
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dict(ball_radius=self.ball_radius, kind=self.kind, family=self.family,
                               params=self.params, profile=json.loads(self.profile.to_json())))

    @classmethod
    def from_json(cls, text: str) -> "Atom":
        d = json.loads(text)
        prof = RadialSamples.from_json(json.dumps(d["profile"]))
        return cls(prof, d["ball_radius"], d["kind"], d["family"], d["params"])


def _bump(r, radius, power, coeffs):
    u = np.clip(1 - (np.asarray(r) / radius) ** 2, 0, None)
    poly = np.polynomial.polynomial.polyval((np.asarray(r) / radius) ** 2, coeffs)
    return np.where(np.asarray(r) < radius, u**power * poly, 0.0)


def _cancellation(S, prof: RadialSamples) -> float:
    phi0 = special.ground_phi(special.dims(S), prof.r_grid)
    return float(np.sum(S.nu * prof.values.real * phi0 * volume_density(S, prof.r_grid) * prof.weights))


def make_twisted_atom(S, radius: float, kind: str = "standard", profile_family: str = "poly", *,
                      grid: RadialGrid | None = None, seed=0, power: int = 8) -> Atom:
    """Twisted-radial atom a = delta^{1/2} w(R(.)) supported in B(e, radius).

    The radial factor is (1 - (r/radius)^2)^power times a random quadratic
    in (r/radius)^2.  Standard atoms are projected to nu_n int w phi_0 A = 0
    against a second bump; all atoms are then scaled to
    ||a||_{L^2(d rho)} = rho(B)^{-1/2}.
    """
    if not 0 < radius <= 1:
        raise ValueError("atom radius must lie in (0, 1]")
    if kind == "standard" and radius >= 1:
        raise ValueError("standard atoms live on balls of radius < 1")
    if kind == "global" and radius != 1:
        raise ValueError("global atoms live on balls of radius 1")
    if kind not in ("standard", "global"):
        raise ValueError(f"unknown atom kind {kind!r}")
    if profile_family != "poly":
        raise ValueError(f"unknown profile family {profile_family!r}")
    if grid is None:
        grid = radial_grid(r_max=max(2.0, 2 * radius))
    rng = np.random.default_rng(seed)
    c1 = [1.0, *rng.uniform(-0.8, 0.8, size=2)]
    b1 = RadialSamples.on_grid(grid, _bump(grid.nodes, radius, power, c1))
    params = dict(power=power, c1=c1, radius=radius)
    if kind == "standard":
        c2 = [1.0, -rng.uniform(1.5, 3.0)]
        b2 = RadialSamples.on_grid(grid, _bump(grid.nodes, radius, power, c2))
        m1, m2 = _cancellation(S, b1), _cancellation(S, b2)
        w = RadialSamples.on_grid(grid, b1.values - (m1 / m2) * b2.values)
        params["c2"] = c2
        params["mix"] = m1 / m2
    else:
        w = b1
    norm2 = lp_norm_twisted(S, w, 2.0)
    scale = ball_volume(S, radius) ** -0.5 / norm2
    return Atom(w.scaled(scale), float(radius), kind, profile_family, params)


def verify_atom(S, atom: Atom) -> dict:
    """Independent re-check of support, size and cancellation."""
    prof = atom.profile
    outside = np.abs(prof.values[prof.r_grid >= atom.ball_radius])
    size = lp_norm_twisted(S, prof, 2.0) * ball_volume(S, atom.ball_radius) ** 0.5
    l1 = weighted_l1(S, prof) * ball_volume(S, atom.ball_radius) ** 0.5
    cancel = _cancellation(S, prof) if atom.kind == "standard" else 0.0
    # cancellation relative to the size scale nu_n int |w| phi_0 A
    return dict(
        support=float(outside.max(initial=0.0)),
        size=float(size),
        cancellation=abs(cancel) / max(weighted_l1(S, prof), 1e-300),
        l1_over_size_bound=float(l1),
    )


@dataclass
class ProbeTable:
    t_values: np.ndarray
    max_ratio: np.ndarray
    window: float
    alpha: float
    status: str
    ratios: np.ndarray  # (n_t, n_atoms)
    config: dict = field(default_factory=dict)

    def to_rows(self):
        return [dict(t=float(t), max_ratio=float(m), alpha=self.alpha) for t, m in zip(self.t_values, self.max_ratio)]


def window_status(window: float, pass_at: float = 2.0, info_at: float = 4.0) -> str:
    if window <= pass_at:
        return "pass"
    if window <= info_at:
        return "info"
    return "fail"


def atom_growth_probe(S, t_list, alpha: float, *, n_atoms: int = 6, seed=0, radii=(0.4, 0.95),
                      cutoff: float = 60.0, basis: SphericalBasis | None = None,
                      pass_at: float = 2.0, info_at: float = 4.0) -> ProbeTable:
    """max over random atoms of ||u(t)||_{L^1(d rho)} / (1+t) for the regularised cosine propagator."""
    t_list = np.asarray(t_list, dtype=float)
    if np.any(t_list < 1) or np.any(t_list > 20):
        raise ValueError("probe times must lie in [1, 20]")
    if basis is None:
        basis = wave_basis(S, float(t_list.max()), cutoff)
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    atoms = []
    for i, child in enumerate(ss.spawn(n_atoms)):
        radius = float(rng.uniform(*radii))
        atoms.append(make_twisted_atom(S, radius, "standard", grid=basis.rgrid, seed=child))
    ratios = np.empty((t_list.size, n_atoms))
    for k, atom in enumerate(atoms):
        sols = solve_wave_twisted_radial(S, atom.profile, None, t_list, alpha, alpha - 1, basis)
        for j, (tv, u) in enumerate(zip(t_list, sols)):
            ratios[j, k] = weighted_l1(S, u) / (1 + tv)
    mx = ratios.max(axis=1)
    window = float(mx.max() / mx.min())
    return ProbeTable(t_list, mx, window, alpha, window_status(window, pass_at, info_at), ratios,
                      dict(n_atoms=n_atoms, seed=int(seed) if np.isscalar(seed) else None,
                           cutoff=basis.lgrid.cutoff, r_max=basis.rgrid.r_max,
                           radii=[a.ball_radius for a in atoms]))
