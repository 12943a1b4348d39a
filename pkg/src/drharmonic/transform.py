"""Spherical Fourier transform of radial functions and its inverse.

    F(f)(lam) = nu_n int_0^inf f(r) phi_lam(r) A(r) dr
    f(r)      = c_S int_0^inf F(f)(lam) phi_lam(r) |c(lam)|^{-2} dlam,
    c_S       = 2^{m_z-2} Gamma(n/2) / pi^{n/2+1}.

Both integrals use composite Gauss-Legendre rules.  The r-grid has a few
geometrically graded panels near 0 and a uniform tail; the lambda-grid
consists of equal panels on [0, Lambda] so that the smooth cutoff starts
on a panel boundary.  A ``SphericalBasis`` caches the matrix
phi_{lam_i}(r_j) for a pair of grids, which turns every transform into a
matrix product and lets many profiles / times share one evaluation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import special
from .htype import volume_density

TAPER_START = 0.8
RADIAL_SCHEMA = "drharmonic.radial/1"
SPECTRAL_SCHEMA = "drharmonic.spectral/1"


class TailToleranceError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


class TaperSensitivityError(RuntimeError):
    def __init__(self, message, sensitivity):
        super().__init__(message)
        self.sensitivity = sensitivity


# -- grids ---------------------------------------------------------------------


def _composite(edges: np.ndarray, order: int):
    x, w = leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (a + b) / 2 + (b - a) / 2 * x
    weights = (b - a) / 2 * w
    return nodes.ravel(), weights.ravel()


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray
    spec: dict

    @property
    def r_max(self) -> float:
        return self.spec["r_max"]

    def key(self):
        return ("r",) + tuple(sorted((k, v) for k, v in self.spec.items() if not isinstance(v, list)))


def radial_grid(
    r_max: float = 20.0,
    panel_width: float = 0.16,
    order: int = 16,
    geometric_panels: int = 5,
    geometric_end: float = 0.2,
) -> RadialGrid:
    """Composite Gauss-Legendre grid on [0, r_max].

    ``geometric_panels`` panels halve in width towards r = 0 and end at
    ``geometric_end``; the rest of [0, r_max] is cut into equal panels of
    width at most ``panel_width``.
    """
    if r_max <= geometric_end:
        raise ValueError("r_max must exceed the geometric zone")
    geo = geometric_end * 2.0 ** -np.arange(geometric_panels, 0, -1)
    n_uniform = int(math.ceil((r_max - geometric_end) / panel_width))
    edges = np.concatenate(([0.0], geo, np.linspace(geometric_end, r_max, n_uniform + 1)))
    nodes, weights = _composite(edges, order)
    spec = dict(
        r_max=float(r_max), panel_width=float(panel_width), order=int(order),
        geometric_panels=int(geometric_panels), geometric_end=float(geometric_end),
        n_nodes=int(nodes.size),
    )
    return RadialGrid(nodes, weights, spec)


def radial_grid_from_spec(spec: dict) -> RadialGrid:
    keys = ("r_max", "panel_width", "order", "geometric_panels", "geometric_end")
    return radial_grid(**{k: spec[k] for k in keys})


def tail_bound(S, r_max: float) -> float:
    """e^{-Q r_max / 2} (1 + r_max): size of phi_0 at the end of the grid."""
    return math.exp(-S.Q * r_max / 2) * (1 + r_max)


@dataclass(frozen=True)
class SpectralGrid:
    nodes: np.ndarray
    weights: np.ndarray
    spec: dict
    starts: np.ndarray
    offsets: np.ndarray

    @property
    def cutoff(self) -> float:
        return self.spec["cutoff"]

    def taper(self) -> np.ndarray:
        return taper(self.nodes, self.cutoff, self.spec["taper"])

    def key(self):
        return ("lam",) + tuple(sorted(self.spec.items()))


def spectral_grid(
    cutoff: float = 200.0,
    t_max: float = 0.0,
    r_max: float = 20.0,
    order: int = 16,
    taper_kind: str = "smooth",
    phase_per_panel: float = 12.0,
) -> SpectralGrid:
    """Equal Gauss-Legendre panels on [0, cutoff].

    The integrands oscillate like cos(lam (t + r)); the panel width is
    phase_per_panel / (t_max + r_max), which keeps the mean node spacing
    below pi / (4 t_max).  The panel count is a multiple of 5 so that
    TAPER_START * cutoff is a panel boundary.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    h_max = phase_per_panel / max(t_max + r_max, 1e-9)
    if t_max > 0:
        h_max = min(h_max, order * math.pi / (4 * t_max))
    n_taper = max(1, int(math.ceil((1 - TAPER_START) * cutoff / h_max)))
    h = (1 - TAPER_START) * cutoff / n_taper
    n_panels = 5 * n_taper
    x, w = leggauss(order)
    starts = h * np.arange(n_panels)
    offsets = h * (x + 1) / 2
    nodes = (starts[:, None] + offsets[None, :]).ravel()
    weights = np.tile(h / 2 * w, n_panels)
    spec = dict(
        cutoff=float(cutoff), t_max=float(t_max), r_max=float(r_max), order=int(order),
        taper=taper_kind, phase_per_panel=float(phase_per_panel), panel_width=float(h),
        n_nodes=int(nodes.size),
    )
    return SpectralGrid(nodes, weights, spec, starts, offsets)


def spectral_grid_from_spec(spec: dict) -> SpectralGrid:
    return spectral_grid(
        spec["cutoff"], spec["t_max"], spec["r_max"], spec["order"], spec["taper"], spec["phase_per_panel"]
    )


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(x > 0, np.exp(-1 / np.where(x > 0, x, 1)), 0.0)
        g = np.where(x < 1, np.exp(-1 / np.where(x < 1, 1 - x, 1)), 0.0)
    return f / (f + g)


def taper(lam, cutoff: float, kind: str = "smooth"):
    """Cutoff equal to 1 on [0, 0.8 cutoff] and 0 beyond cutoff."""
    u = (np.abs(np.asarray(lam, dtype=float)) - TAPER_START * cutoff) / ((1 - TAPER_START) * cutoff)
    if kind == "smooth":
        return 1 - _smooth_step(u)
    if kind == "raised_cosine":
        u = np.clip(u, 0, 1)
        return 0.5 * (1 + np.cos(np.pi * u))
    if kind == "none":
        return (u <= 1).astype(float)
    raise ValueError(f"unknown taper {kind!r}")


# -- samples -------------------------------------------------------------------


def _to_csv(grid, values) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["grid", "re", "im"])
    for g, v in zip(grid, values):
        wr.writerow([repr(float(g)), repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()


def _from_csv(text: str):
    rows = list(csv.DictReader(io.StringIO(text)))
    grid = np.array([float(r["grid"]) for r in rows])
    values = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return grid, values


@dataclass(frozen=True)
class RadialSamples:
    """Radial profile on a quadrature grid; ``weights`` are the dr weights."""

    r_grid: np.ndarray
    values: np.ndarray
    grid_spec: dict
    weights: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.r_grid) <= 0) or np.any(self.r_grid < 0):
            raise ValueError("r-grid must be strictly increasing and nonnegative")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("radial values must be finite")

    @classmethod
    def on_grid(cls, grid: RadialGrid, values) -> "RadialSamples":
        return cls(grid.nodes, np.asarray(values, dtype=complex), dict(grid.spec), grid.weights)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn: Callable) -> "RadialSamples":
        return cls.on_grid(grid, fn(grid.nodes))

    def scaled(self, c) -> "RadialSamples":
        return RadialSamples(self.r_grid, c * self.values, self.grid_spec, self.weights)

    def to_csv(self) -> str:
        return _to_csv(self.r_grid, self.values)

    def to_json(self, extra: dict | None = None) -> str:
        env = dict(
            schema=RADIAL_SCHEMA, grid_spec=self.grid_spec, grid=self.r_grid.tolist(),
            re=self.values.real.tolist(), im=self.values.imag.tolist(),
        )
        if extra:
            env["meta"] = extra
        return json.dumps(env)

    @classmethod
    def from_json(cls, text: str) -> "RadialSamples":
        env = json.loads(text)
        if env.get("schema") != RADIAL_SCHEMA:
            raise ValueError(f"unexpected schema {env.get('schema')!r}")
        grid = np.array(env["grid"])
        weights = None
        spec = env["grid_spec"]
        if "order" in spec:
            g = radial_grid_from_spec(spec)
            if g.nodes.shape == grid.shape and np.allclose(g.nodes, grid, rtol=0, atol=1e-14):
                weights = g.weights
        return cls(grid, np.array(env["re"]) + 1j * np.array(env["im"]), spec, weights)

    @classmethod
    def from_csv(cls, text: str, grid_spec: dict) -> "RadialSamples":
        grid, values = _from_csv(text)
        g = radial_grid_from_spec(grid_spec)
        return cls(grid, values, grid_spec, g.weights if g.nodes.shape == grid.shape else None)


@dataclass(frozen=True)
class PointMass:
    """Normalised spherical measure d sigma_t (radial point mass at r = t)."""

    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("point mass radius must be positive")


@dataclass(frozen=True)
class SpectralSamples:
    lambda_grid: np.ndarray
    values: np.ndarray
    cutoff: dict
    weights: np.ndarray | None = None

    @classmethod
    def on_grid(cls, grid: SpectralGrid, values) -> "SpectralSamples":
        return cls(grid.nodes, np.asarray(values, dtype=complex), dict(grid.spec), grid.weights)

    def to_csv(self) -> str:
        return _to_csv(self.lambda_grid, self.values)

    def to_json(self, extra: dict | None = None) -> str:
        env = dict(
            schema=SPECTRAL_SCHEMA, cutoff=self.cutoff, grid=self.lambda_grid.tolist(),
            re=self.values.real.tolist(), im=self.values.imag.tolist(),
        )
        if extra:
            env["meta"] = extra
        return json.dumps(env)

    @classmethod
    def from_json(cls, text: str) -> "SpectralSamples":
        env = json.loads(text)
        if env.get("schema") != SPECTRAL_SCHEMA:
            raise ValueError(f"unexpected schema {env.get('schema')!r}")
        grid = np.array(env["grid"])
        weights = None
        if "order" in env["cutoff"]:
            g = spectral_grid_from_spec(env["cutoff"])
            if g.nodes.shape == grid.shape:
                weights = g.weights
        return cls(grid, np.array(env["re"]) + 1j * np.array(env["im"]), env["cutoff"], weights)


# -- basis ---------------------------------------------------------------------


@dataclass
class SphericalBasis:
    """phi_{lam_i}(r_j) on a (spectral, radial) grid pair, with transform weights."""

    S: Any
    rgrid: RadialGrid
    lgrid: SpectralGrid
    _phi: np.ndarray | None = field(default=None, repr=False)

    @property
    def phi(self) -> np.ndarray:
        if self._phi is None:
            self._phi = special.phi_matrix(
                special.dims(self.S), self.lgrid.nodes, self.rgrid.nodes,
                panels=(self.lgrid.starts, self.lgrid.offsets),
            )
        return self._phi

    @property
    def radial_weights(self) -> np.ndarray:
        """nu_n A(r_j) w_j."""
        return self.S.nu * volume_density(self.S, self.rgrid.nodes) * self.rgrid.weights

    @property
    def spectral_weights(self) -> np.ndarray:
        """c_S |c(lam_i)|^{-2} w_i (taper not included)."""
        return special.inversion_constant(self.S) * special.plancherel_density(self.S, self.lgrid.nodes) * self.lgrid.weights

    def forward_values(self, values: np.ndarray) -> np.ndarray:
        """Transforms of one profile (n_r,) or many (n_r, m)."""
        values = np.asarray(values)
        w = self.radial_weights
        wv = values * (w if values.ndim == 1 else w[:, None])
        if np.iscomplexobj(wv):
            return self.phi @ wv.real + 1j * (self.phi @ wv.imag)
        return self.phi @ wv

    def inverse_values(self, values: np.ndarray, apply_taper: bool = True) -> np.ndarray:
        """Inverse transforms of spectral values (n_lam,) or (n_lam, m)."""
        values = np.asarray(values)
        w = self.spectral_weights * (self.lgrid.taper() if apply_taper else 1.0)
        wv = values * (w if values.ndim == 1 else w[:, None])
        if np.iscomplexobj(wv):
            return self.phi.T @ wv.real + 1j * (self.phi.T @ wv.imag)
        return self.phi.T @ wv


_BASIS_CACHE: dict = {}


def get_basis(S, rgrid: RadialGrid, lgrid: SpectralGrid) -> SphericalBasis:
    key = (special.dims(S), rgrid.key(), lgrid.key())
    basis = _BASIS_CACHE.get(key)
    if basis is None:
        if len(_BASIS_CACHE) > 8:
            _BASIS_CACHE.clear()
        basis = _BASIS_CACHE[key] = SphericalBasis(S, rgrid, lgrid)
    return basis


# -- transforms ------------------------------------------------------------------


def check_tail(S, f: RadialSamples, tol: float = 1e-6) -> float:
    """Share of the plain weighted mass nu_n int |f| phi_0 A in the last 5% of the grid."""
    if f.weights is None:
        raise ValueError("radial samples need quadrature weights")
    r = f.r_grid
    w = volume_density(S, r) * special.ground_phi(special.dims(S), r) * f.weights * np.abs(f.values)
    total = w.sum()
    if total == 0:
        return 0.0
    share = float(w[r > 0.95 * r[-1]].sum() / total)
    if share > tol:
        raise TailToleranceError(f"profile does not decay within the grid (tail share {share:.2e})")
    return share


def forward(S, f, lambda_grid, *, basis: SphericalBasis | None = None, tail_tol: float = 1e-6) -> SpectralSamples:
    """Spherical transform of radial samples or of a PointMass."""
    lg = lambda_grid if isinstance(lambda_grid, SpectralGrid) else None
    lam = lg.nodes if lg is not None else np.asarray(lambda_grid, dtype=float)
    meta = dict(lg.spec) if lg is not None else {"cutoff": None}
    weights = lg.weights if lg is not None else None
    if isinstance(f, PointMass):
        vals = special.phi(special.dims(S), lam, f.t)
        return SpectralSamples(lam, vals.real.astype(complex), meta, weights)
    check_tail(S, f, tail_tol)
    if basis is not None and lg is not None and basis.lgrid.key() == lg.key() and basis.rgrid.nodes.shape == f.r_grid.shape:
        vals = basis.forward_values(f.values)
    else:
        phi = special.phi_matrix(special.dims(S), lam, f.r_grid)
        wv = S.nu * volume_density(S, f.r_grid) * f.weights * f.values
        vals = phi @ wv.real + 1j * (phi @ wv.imag)
    return SpectralSamples(lam, vals, meta, weights)


def forward_function(S, fn: Callable, lam, *, r_max: float = 20.0, tol: float = 1e-9, max_refine: int = 5):
    """Transform of a callable profile with panel refinement until two successive
    refinements agree to ``tol`` (relative sup norm)."""
    lam = np.asarray(lam, dtype=float)
    width = 0.32
    prev = None
    for _ in range(max_refine):
        g = radial_grid(r_max=r_max, panel_width=width)
        vals = forward(S, RadialSamples.from_function(g, fn), lam, tail_tol=1.0).values
        if prev is not None:
            scale = max(np.abs(vals).max(), 1e-300)
            if np.abs(vals - prev).max() <= tol * scale:
                return vals
        prev = vals
        width /= 2
    raise QuadratureError("forward quadrature did not converge under panel refinement")


def _inverse_on(S, lg: SpectralGrid, values: np.ndarray, rgrid, basis):
    if basis is not None and isinstance(rgrid, RadialGrid) and basis.rgrid.key() == rgrid.key() and basis.lgrid.key() == lg.key():
        return basis.inverse_values(values)
    r = rgrid.nodes if isinstance(rgrid, RadialGrid) else np.asarray(rgrid, dtype=float)
    phi = special.phi_matrix(special.dims(S), lg.nodes, r, panels=(lg.starts, lg.offsets))
    w = special.inversion_constant(S) * special.plancherel_density(S, lg.nodes) * lg.weights * lg.taper()
    wv = w * values
    return phi.T @ wv.real + 1j * (phi.T @ wv.imag)


def _wrap_radial(rgrid, vals) -> RadialSamples:
    if isinstance(rgrid, RadialGrid):
        return RadialSamples.on_grid(rgrid, vals)
    r = np.asarray(rgrid, dtype=float)
    return RadialSamples(r, vals, {"r_max": float(r[-1]) if r.size else 0.0})


def inverse(
    S,
    psi,
    r_grid,
    *,
    lambda_grid: SpectralGrid | None = None,
    basis: SphericalBasis | None = None,
    check_taper: bool = False,
    taper_tol: float = 1e-8,
    report: dict | None = None,
) -> RadialSamples:
    """Inverse spherical transform (the kernel kappa_psi) with a smooth cutoff.

    ``psi`` is SpectralSamples on a SpectralGrid, or a callable of lambda.
    With ``check_taper`` a callable is also integrated with a 1.25x larger
    cutoff; if the sup-norm change relative to sup |kappa| exceeds
    ``taper_tol`` a TaperSensitivityError is raised.  The measured value is
    stored in ``report['taper_sensitivity']`` when a dict is passed.
    """
    if isinstance(psi, SpectralSamples):
        if psi.weights is None or "order" not in psi.cutoff:
            raise ValueError("spectral samples must live on a SpectralGrid")
        lg = spectral_grid_from_spec(psi.cutoff)
        vals = _inverse_on(S, lg, psi.values, r_grid, basis)
        return _wrap_radial(r_grid, vals)
    if lambda_grid is None:
        r_max = r_grid.r_max if isinstance(r_grid, RadialGrid) else float(np.max(r_grid))
        lambda_grid = spectral_grid(r_max=r_max)
    vals = _inverse_on(S, lambda_grid, np.asarray(psi(lambda_grid.nodes), dtype=complex), r_grid, basis)
    if check_taper:
        spec = dict(lambda_grid.spec)
        big = spectral_grid(1.25 * spec["cutoff"], spec["t_max"], spec["r_max"], spec["order"], spec["taper"], spec["phase_per_panel"])
        vals_big = _inverse_on(S, big, np.asarray(psi(big.nodes), dtype=complex), r_grid, None)
        scale = max(np.abs(vals).max(), 1e-300)
        sens = float(np.abs(vals - vals_big).max() / scale)
        if report is not None:
            report["taper_sensitivity"] = sens
        if sens > taper_tol:
            raise TaperSensitivityError(
                f"cutoff {spec['cutoff']} too small: relative change {sens:.2e} under 1.25x cutoff", sens
            )
    return _wrap_radial(r_grid, vals)


def multiplier_apply(S, psi: Callable, f: RadialSamples, lambda_grid: SpectralGrid, *, basis=None) -> RadialSamples:
    """psi(sqrt(Delta_Q)) f for radial f, through the spherical transform."""
    F = forward(S, f, lambda_grid, basis=basis)
    rg = basis.rgrid if basis is not None else radial_grid_from_spec(f.grid_spec)
    out = SpectralSamples(F.lambda_grid, np.asarray(psi(F.lambda_grid)) * F.values, F.cutoff, F.weights)
    return inverse(S, out, rg, basis=basis)


def spectral_l2(S, lg: SpectralGrid, values) -> float:
    """(c_S int |v|^2 |c|^{-2} dlam)^{1/2} on the grid."""
    w = special.inversion_constant(S) * special.plancherel_density(S, lg.nodes) * lg.weights
    return float(np.sqrt(np.sum(w * np.abs(values) ** 2)))


def radial_l2(S, f: RadialSamples) -> float:
    """(nu_n int |f|^2 A dr)^{1/2}."""
    return float(np.sqrt(np.sum(S.nu * volume_density(S, f.r_grid) * f.weights * np.abs(f.values) ** 2)))


def default_grids(S, psi_cutoff: float = 12.0, resolution: int = 1, r_max: float | None = None):
    """Grids for roundtrip checks; ``resolution`` shrinks both panel widths."""
    if r_max is None:
        # phi_0 tail below 1e-12 at r_max: (1 + r) e^{-Q r / 2}
        r_max = 20.0
        while tail_bound(S, r_max) > 1e-12 and r_max < 60:
            r_max += 2.0
    rg = radial_grid(r_max=r_max, panel_width=0.32 / resolution, order=16)
    lg = spectral_grid(psi_cutoff, 0.0, r_max, order=16, phase_per_panel=24.0 / resolution)
    return rg, lg


def roundtrip_error(S, psi: Callable, resolution: int = 1, *, cutoff: float = 12.0, order: int | None = None) -> float:
    """Relative L^2(|c|^{-2} dlam) error of forward(inverse(psi)) on the lambda grid."""
    rg, lg = default_grids(S, cutoff, resolution)
    if order is not None:
        rg = radial_grid(r_max=rg.r_max, panel_width=rg.spec["panel_width"], order=order)
        lg = spectral_grid(cutoff, 0.0, rg.r_max, order=order, phase_per_panel=lg.spec["phase_per_panel"])
    basis = get_basis(S, rg, lg)
    target = np.asarray(psi(lg.nodes), dtype=complex)
    kappa = basis.inverse_values(target)
    back = basis.forward_values(kappa)
    ref = target * lg.taper()
    denom = spectral_l2(S, lg, ref)
    if denom == 0:
        return 0.0
    return spectral_l2(S, lg, back - ref) / denom
