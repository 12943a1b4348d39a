"""Validation suites: one named check per measured quantity.

Every check compares a measured value against a threshold with a fixed
comparison, so its status is mechanical.  The suite names follow the
acceptance criteria (c01 ... c11).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import htype as H
from . import special as sp
from . import transform as T
from . import wave as W

_OPS = {
    "le": lambda v, th: v <= th,
    "lt": lambda v, th: v < th,
    "ge": lambda v, th: v >= th,
    "info": lambda v, th: False,
}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    comparison: str = "le"
    runtime: float = 0.0
    info_threshold: float | None = None  # values between threshold and this are "info"

    @property
    def status(self) -> str:
        if self.comparison == "info":
            return "info"
        if not math.isfinite(self.value):
            return "fail"
        if _OPS[self.comparison](self.value, self.threshold):
            return "pass"
        if self.info_threshold is not None and _OPS[self.comparison](self.value, self.info_threshold):
            return "info"
        return "fail"

    def row(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        return d


@dataclass
class SuiteReport:
    checks: list[Check] = field(default_factory=list)

    def __post_init__(self):
        self.checks = sorted(self.checks, key=lambda c: c.name)

    @property
    def failed(self) -> list[Check]:
        return [c for c in self.checks if c.status == "fail"]

    @property
    def ok(self) -> bool:
        return not self.failed

    def rows(self) -> list[dict]:
        return [c.row() for c in self.checks]


def _timed(fn: Callable[[], list[tuple]]) -> list[Check]:
    t0 = time.perf_counter()
    items = fn()
    dt = time.perf_counter() - t0
    return [Check(*it, runtime=dt) if len(it) <= 4 else Check(*it[:4], runtime=dt, info_threshold=it[4]) for it in items]


# -- c01 geometry -----------------------------------------------------------------------------


def _random_point(S, rng):
    return H.GroupPoint(rng.uniform(-10, 10, S.m_v), rng.uniform(-10, 10, S.m_z), float(np.exp(rng.uniform(-3, 3))))


def geometry_checks(S, seed=0, n_trials: int = 200) -> list[tuple]:
    rng = np.random.default_rng(seed)
    tag = f"c01.geometry.{S}"
    e = H.identity(S)
    assoc = inv = ident = hom = 0.0
    for _ in range(n_trials):
        x, y, z = (_random_point(S, rng) for _ in range(3))
        lhs = H.group_mul(S, H.group_mul(S, x, y), z).as_array()
        rhs = H.group_mul(S, x, H.group_mul(S, y, z)).as_array()
        assoc = max(assoc, np.abs(lhs - rhs).max() / max(1.0, np.abs(lhs).max()))
        xi = H.group_mul(S, x, H.group_inv(S, x)).as_array()
        ix = H.group_mul(S, H.group_inv(S, x), x).as_array()
        inv = max(inv, np.abs(xi - e.as_array()).max(), np.abs(ix - e.as_array()).max())
        ident = max(ident, np.abs(H.group_mul(S, x, e).as_array() - x.as_array()).max(),
                    np.abs(H.group_mul(S, e, x).as_array() - x.as_array()).max())
        dxy = H.modular(S, H.group_mul(S, x, y))
        hom = max(hom, abs(dxy - H.modular(S, x) * H.modular(S, y)) / (H.modular(S, x) * H.modular(S, y)))
    J = np.asarray(S.structure.j_maps)
    cliff = 0.0
    for i in range(S.m_z):
        for j in range(S.m_z):
            ac = J[i] @ J[j] + J[j] @ J[i] + 2 * (i == j) * np.eye(S.m_v)
            cliff = max(cliff, np.abs(ac).max())
        cliff = max(cliff, np.abs(J[i].T @ J[i] - np.eye(S.m_v)).max(), np.abs(J[i].T + J[i]).max())
    htype = 0.0
    for _ in range(n_trials):
        zv, vv = rng.standard_normal(S.m_z), rng.standard_normal(S.m_v)
        htype = max(htype, abs(np.linalg.norm(S.structure.j_of(zv) @ vv) - np.linalg.norm(zv) * np.linalg.norm(vv)))
    polar = 0.0
    for _ in range(n_trials):
        R = float(rng.uniform(0, 5))
        omega = H.SphereDirection.from_vector(S, rng.standard_normal(S.n))
        polar = max(polar, abs(H.distance_to_identity(S, H.polar_point(S, R, omega)) - R))
    return [
        (f"{tag}.associativity", assoc, 1e-12),
        (f"{tag}.clifford", cliff, 1e-12),
        (f"{tag}.htype_norm", htype, 1e-12),
        (f"{tag}.identity", ident, 1e-12),
        (f"{tag}.inverse", inv, 1e-12),
        (f"{tag}.modular_hom", hom, 1e-12),
        (f"{tag}.polar_roundtrip", polar, 1e-10),
    ]


# -- c02 spherical functions ------------------------------------------------------------------


def spherical_checks(S) -> list[tuple]:
    tag = f"c02.spherical.{S}"
    d = sp.dims(S)
    lam0 = np.array([0.0, 1.0, 5.0, 20.0, 0.5j, 1j * S.Q / 2])
    at_zero = float(np.abs(sp.phi(d, lam0, 0.0) - 1).max())
    lam = np.linspace(0, 30, 50)
    r = np.linspace(0, 8, 50)
    grid = sp.phi(d, lam[:, None], r[None, :]).real
    phi0 = grid[0]
    bound = float(np.max(np.abs(grid) - phi0[None, :]))
    fd = 0.0
    h = 1e-4
    for lv in (0.0, 1.0, 2.5, 7.0):
        for rv in (0.3, 1.0, 2.0, 5.0):
            exact = sp.spherical_phi_dr(S, lv, rv).real
            num = (sp.spherical_phi(S, lv, rv + h).real - sp.spherical_phi(S, lv, rv - h).real) / (2 * h)
            scale = (d.Q**2 + 4 * lv**2) / (4 * d.n) * math.sinh(rv) * sp.phi(sp.enlarged(S), 0.0, rv).real
            fd = max(fd, abs(num - exact) / max(abs(exact), scale))
    lam_e = np.array([0.0, 1.3, 9.0, 0.4j])
    r_e = np.array([0.2, 1.5, 4.0])
    pref = -(d.Q**2 + 4 * lam_e[:, None] ** 2) / (4 * d.n) * np.sinh(r_e[None, :])
    factor = sp.spherical_phi_dr(S, lam_e[:, None], r_e[None, :]) / pref
    enl = sp.phi(sp.enlarged(S), lam_e[:, None], r_e[None, :])
    enlarged = float(np.abs(factor - enl).max() / np.abs(enl).max())
    return [
        (f"{tag}.bound_by_phi0", bound, 1e-12),
        (f"{tag}.derivative_fd", fd, 1e-6),
        (f"{tag}.enlarged_space", enlarged, 1e-12),
        (f"{tag}.phi_at_zero", at_zero, 1e-12),
    ]


# -- c03 c-function ---------------------------------------------------------------------------


def cfunction_checks(S) -> list[tuple]:
    tag = f"c03.cfunction.{S}"
    lam = np.geomspace(50, 500, 200)
    dens = sp.plancherel_density(S, lam)
    slope = np.polyfit(np.log(lam), np.log(dens), 1)[0]
    const = abs(sp.c_function(S, 200.0)) * 200.0 ** ((S.n - 1) / 2) / sp.c_asymptotic_constant(S)
    return [
        (f"{tag}.density_slope_dev", abs(slope - (S.n - 1)), 0.05),
        (f"{tag}.leading_constant_dev", abs(const - 1), 0.01),
    ]


# -- c04 / c05 expansions -----------------------------------------------------------------------


def long_time_checks(S, n_lambda: int = 4000) -> list[tuple]:
    tag = f"c04.long_time.{S}"
    lam = np.linspace(5, 100, n_lambda)
    out = []
    for t in (2.0, 4.0):
        rep = sp.long_time_report(S, t, lam)
        drep = sp.long_time_report(S, t, lam, derivative=True)
        out.append((f"{tag}.t{t:g}.remainder_slope", rep.fitted_slope, -(S.n + 1) / 2 + 0.3))
        out.append((f"{tag}.t{t:g}.derivative_slope", drep.fitted_slope, -(S.n - 1) / 2 + 0.3))
    return out


def short_time_checks(S, t: float = 0.5, n_lambda: int = 4000) -> list[tuple]:
    tag = f"c05.short_time.{S}"
    lt = np.linspace(5, 100, n_lambda)
    rep = sp.short_time_report(S, t, lt)
    x = np.linspace(10, 200, 5000)
    bes_slope = sp.envelope_slope(x, sp.bessel_j(S.n / 2 - 1, x) - sp.bessel_asymptotic(S.n / 2 - 1, x))[0]
    return [
        (f"{tag}.remainder_slope", rep.fitted_slope, -(S.n + 1) / 2 + 0.3),
        (f"{tag}.bessel_term_remainder_slope", rep.cross_check_slope, -(S.n + 1) / 2 + 0.3),
        (f"{tag}.bessel_constant_dev", abs(rep.leading_constant_check - 1), 0.01),
        (f"{tag}.bessel_asymptotic_slope", bes_slope, -1.5 + 0.1),
    ]


# -- c06 transform ----------------------------------------------------------------------------


def transform_checks(S, tol: float) -> list[tuple]:
    tag = f"c06.transform.{S}"
    gauss = lambda lam: np.exp(-np.asarray(lam) ** 2)
    rt = T.roundtrip_error(S, gauss)
    _, lg = T.default_grids(S)
    cal = 0.0
    for t in (0.5, 2.0, 5.0):
        F = T.forward(S, T.PointMass(t), lg)
        ref = sp.phi_matrix(sp.dims(S), lg.nodes, np.array([t]))[:, 0]
        cal = max(cal, float(np.abs(F.values - ref).max()))
    return [
        (f"{tag}.roundtrip_gaussian", rt, tol, "lt"),
        (f"{tag}.point_mass_calibration", cal, 1e-8),
    ]


# -- c07 sphere averages ----------------------------------------------------------------------


def sphere_average_checks(S, n_samples: int = 1_000_000, seed: int = 0, lemma_samples: int = 400_000) -> list[tuple]:
    tag = f"c07.sphere_average.{S}"
    worst = 0.0
    ss = np.random.SeedSequence(seed)
    seeds = iter(ss.spawn(16))
    for s in (-0.5, 0.25, 1.0):
        for R in (0.5, 3.0, 6.0):
            hyp = H.sphere_average_modular_power(S, s, R).value
            mc = H.sphere_average_modular_power(S, s, R, method="monte_carlo", n_samples=n_samples, seed=next(seeds))
            worst = max(worst, abs(hyp - mc.value) / mc.stderr)
    prof = H.lemma_bound_profile(S, np.linspace(1, 10, 10), seed=seed, n_samples=lemma_samples)
    ratio = prof["decay_ratio"]
    small = H.lemma_bound_profile(S, np.array([0.05, 0.25, 0.5, 1.0]), seed=seed + 100, n_samples=lemma_samples)
    return [
        (f"{tag}.lemma_ratio_window", float(ratio.max() / ratio.min()), 5.0, "lt"),
        # |d/dR a^{Q/2}| <= (Q/2) e^{QR/2} since log a is 1-Lipschitz in the distance
        (f"{tag}.lemma_small_R_sup", float(small["I"].max()), S.nu * S.Q / 2 * math.exp(S.Q / 2)),
        (f"{tag}.mc_vs_hypergeometric_sigmas", worst, 3.0),
    ]


# -- c08 / c09 wave norms ---------------------------------------------------------------------------


def wave_l2_checks(S, cutoff: float = 30.0) -> list[tuple]:
    tag = f"c08.wave_l2.{S}"
    rep = W.wave_norm_run(S, 2.0, 0.0, cutoff=cutoff)
    return [(f"{tag}.abs_exponent", abs(rep.fitted_exponent), 0.02)]


def wave_rate_checks(S, cutoff: float = 30.0) -> list[tuple]:
    tag = f"c09.wave_rate.{S}"
    out = []
    exps = {}
    basis = W.wave_basis(S, 20.0, cutoff)
    for p in (4.0, 4.0 / 3.0):
        a0 = W.critical_regularity(S.n, p)[0] + 0.1
        rep = W.wave_norm_run(S, p, a0, basis=basis)
        exps[p] = rep.fitted_exponent
        out.append((f"{tag}.p{p:.4g}.exponent", rep.fitted_exponent, 2 * abs(1 / p - 0.5) + 0.15))
    out.append((f"{tag}.duality_gap", abs(exps[4.0] - exps[4.0 / 3.0]), 0.05))
    return out


# -- c10 spherical means ------------------------------------------------------------------------------


def spherical_mean_checks(S, n_samples: int = 1_000_000, seed: int = 0) -> list[tuple]:
    tag = f"c10.spherical_mean.{S}"
    w = W.gaussian_profile(1 / math.sqrt(2))
    e1 = np.zeros(S.m_v)
    e1[0] = 1.0
    worst = 0.0
    seeds = iter(np.random.SeedSequence(seed).spawn(4))
    for t in (1.0, 3.0):
        for z in (H.identity(S), H.GroupPoint(e1, np.zeros(S.m_z), 1.0)):
            res = W.spherical_mean_check(S, t, w, z, samples=n_samples, seed=next(seeds))
            worst = max(worst, res.sigmas)
    return [(f"{tag}.max_sigmas", worst, 3.0)]


# -- c11 atoms ----------------------------------------------------------------------------------------


def atom_checks(S, seed: int = 0, cutoff: float = 60.0, n_atoms: int = 6,
                pass_window: float = 2.0, info_window: float = 4.0) -> list[tuple]:
    tag = f"c11.atoms.{S}"
    basis = W.wave_basis(S, 20.0, cutoff)
    worst_size = worst_cancel = worst_support = 0.0
    worst_l1 = 0.0
    seeds = np.random.SeedSequence(seed).spawn(5)
    specs = [(0.3, "standard"), (0.6, "standard"), (0.9, "standard"), (0.99, "standard"), (1.0, "global")]
    for (radius, kind), ss in zip(specs, seeds):
        atom = W.make_twisted_atom(S, radius, kind, grid=basis.rgrid, seed=ss)
        atom = W.Atom.from_json(atom.to_json())
        v = W.verify_atom(S, atom)
        worst_size = max(worst_size, abs(v["size"] - 1))
        worst_cancel = max(worst_cancel, v["cancellation"])
        worst_support = max(worst_support, v["support"])
        worst_l1 = max(worst_l1, v["l1_over_size_bound"])
    ts = W.default_t_values()
    probe = W.atom_growth_probe(S, ts, (S.n - 1) / 2, n_atoms=n_atoms, seed=seed, basis=basis)
    glob = W.make_twisted_atom(S, 1.0, "global", grid=basis.rgrid, seed=seed)
    u = W.solve_wave_twisted_radial(S, glob.profile, None, 10.0, (S.n - 1) / 2, (S.n - 3) / 2, basis)
    g_ratio = W.weighted_l1(S, u) / 11.0
    return [
        (f"{tag}.cancellation", worst_cancel, 1e-8),
        (f"{tag}.global_atom_ratio_finite", g_ratio if math.isfinite(g_ratio) else math.inf, 1e6),
        (f"{tag}.l1_cauchy_schwarz", worst_l1, 1.0 + 1e-8),
        (f"{tag}.probe_window", probe.window, pass_window, "le", info_window),
        (f"{tag}.size", worst_size, 1e-8),
        (f"{tag}.support", worst_support, 1e-8),
    ]


# -- registry -----------------------------------------------------------------------------------------

CRITERIA = {
    "c01": "geometry",
    "c02": "spherical",
    "c03": "cfunction",
    "c04": "long_time",
    "c05": "short_time",
    "c06": "transform",
    "c07": "sphere_average",
    "c08": "wave_l2",
    "c09": "wave_rate",
    "c10": "spherical_mean",
    "c11": "atoms",
}


def suite_tasks(S, cfg) -> dict[str, Callable[[], list[tuple]]]:
    """name -> zero-argument callable producing check tuples, for the space S."""
    seed = cfg.seed
    mc = cfg.mc_samples
    tasks = {
        "geometry": lambda: geometry_checks(S, seed),
        "spherical": lambda: spherical_checks(S),
        "cfunction": lambda: cfunction_checks(S),
        "long_time": lambda: long_time_checks(S),
        "short_time": lambda: short_time_checks(S),
        "transform": lambda: transform_checks(S, cfg.tolerances.get("roundtrip", 1e-6 if S.m_z == 1 else 1e-4)),
        "sphere_average": lambda: sphere_average_checks(S, mc, seed),
        "wave_l2": lambda: wave_l2_checks(S, cfg.wave_cutoff),
        "wave_rate": lambda: wave_rate_checks(S, cfg.wave_cutoff),
        "spherical_mean": lambda: spherical_mean_checks(S, mc, seed),
        "atoms": lambda: atom_checks(S, seed, cfg.atom_cutoff, cfg.n_atoms,
                                     cfg.tolerances.get("atom_window_pass", 2.0),
                                     cfg.tolerances.get("atom_window_info", 4.0)),
    }
    return tasks


def run_suites(S, cfg, names=None, workers: int = 1) -> SuiteReport:
    tasks = suite_tasks(S, cfg)
    names = list(tasks) if names is None else list(names)
    unknown = [n for n in names if n not in tasks]
    if unknown:
        raise ValueError(f"unknown suites: {', '.join(unknown)}")
    if not names:
        return SuiteReport([Check("info.empty_selection", 0.0, 0.0, "info")])
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda n: _timed(tasks[n]), names))
    else:
        results = [_timed(tasks[n]) for n in names]
    return SuiteReport([c for group in results for c in group])
