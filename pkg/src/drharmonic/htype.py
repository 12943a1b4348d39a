"""H-type structures, the Damek-Ricci group law, polar coordinates and measures.

Points of S = N x| R_+ are written (v, z, a) in exponential coordinates.
The bracket on v is encoded by the maps J_1..J_{m_z}:
component i of [v, v'] is <J_i v, v'>.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import sphere

CLIFFORD_TOL = 1e-12


class CliffordError(ValueError):
    """Generators fail to be orthogonal, skew or anticommuting."""

    def __init__(self, message: str, pair: tuple[int, int], residual: float):
        super().__init__(f"{message} (pair {pair}, residual {residual:.3e})")
        self.pair = pair
        self.residual = residual


class StructureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class HTypeStructure:
    m_v: int
    m_z: int
    j_maps: np.ndarray = field(repr=False)  # shape (m_z, m_v, m_v)

    def j_of(self, z: np.ndarray) -> np.ndarray:
        """J_z as a matrix (or a stack of matrices for z of shape (k, m_z))."""
        return np.tensordot(np.asarray(z, dtype=float), self.j_maps, axes=([-1], [0]))


def build_htype(m_v: int, m_z: int, j_maps: Sequence, tol: float = CLIFFORD_TOL) -> HTypeStructure:
    """Validate Clifford generators and return the H-type structure."""
    if m_z < 1:
        raise ValueError("m_z must be >= 1 (nonabelian N)")
    if m_v < 2 or m_v % 2:
        raise ValueError(f"m_v must be a positive even integer, got {m_v}")
    J = np.asarray(j_maps, dtype=float)
    if J.ndim == 2:
        J = J[None]
    if J.shape != (m_z, m_v, m_v):
        raise ValueError(f"j_maps has shape {J.shape}, expected {(m_z, m_v, m_v)}")
    eye = np.eye(m_v)
    for i in range(m_z):
        res = np.abs(J[i].T @ J[i] - eye).max()
        if res > tol:
            raise CliffordError("J_i is not orthogonal", (i, i), res)
        res = np.abs(J[i].T + J[i]).max()
        if res > tol:
            raise CliffordError("J_i is not skew-symmetric", (i, i), res)
    worst, worst_pair = 0.0, (0, 0)
    for i in range(m_z):
        for j in range(i, m_z):
            target = -2 * eye if i == j else 0 * eye
            res = np.abs(J[i] @ J[j] + J[j] @ J[i] - target).max()
            if res > worst:
                worst, worst_pair = res, (i, j)
    if worst > tol:
        raise CliffordError("anticommutation J_i J_j + J_j J_i = -2 delta_ij fails", worst_pair, worst)
    J.setflags(write=False)
    return HTypeStructure(m_v, m_z, J)


_J2 = np.array([[0.0, -1.0], [1.0, 0.0]])

# left multiplication by i, j, k on H = span(1, i, j, k)
_QI = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
_QJ = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
_QK = np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float)


def heisenberg_structure(k: int = 1) -> HTypeStructure:
    if k < 1:
        raise ValueError("k must be >= 1")
    return build_htype(2 * k, 1, [np.kron(np.eye(k), _J2)])


def quaternionic_structure(k: int = 1) -> HTypeStructure:
    if k < 1:
        raise ValueError("k must be >= 1")
    return build_htype(4 * k, 3, [np.kron(np.eye(k), q) for q in (_QI, _QJ, _QK)])


@dataclass(frozen=True)
class DamekRicciSpace:
    structure: HTypeStructure
    family: str | None = None
    k: int | None = None

    @property
    def m_v(self) -> int:
        return self.structure.m_v

    @property
    def m_z(self) -> int:
        return self.structure.m_z

    @property
    def n(self) -> int:
        return self.m_v + self.m_z + 1

    @property
    def Q(self) -> float:
        return self.m_z + self.m_v / 2

    @property
    def nu(self) -> float:
        """Surface area of S^{n-1}."""
        return 2 * math.pi ** (self.n / 2) / math.gamma(self.n / 2)

    def descriptor(self) -> dict[str, Any]:
        if self.family is not None:
            return {"family": self.family, "k": self.k}
        return {"m_v": self.m_v, "m_z": self.m_z, "j_maps": self.structure.j_maps.tolist()}

    def __str__(self) -> str:
        if self.family:
            return f"{self.family}({self.k})"
        return f"DR(m_v={self.m_v}, m_z={self.m_z})"


def heisenberg(k: int = 1) -> DamekRicciSpace:
    return DamekRicciSpace(heisenberg_structure(k), "heisenberg", k)


def quaternionic(k: int = 1) -> DamekRicciSpace:
    return DamekRicciSpace(quaternionic_structure(k), "quaternionic", k)


def space_from_descriptor(desc: dict[str, Any]) -> DamekRicciSpace:
    """Build a space from {"family": ..., "k": ...} or explicit generators."""
    if "family" in desc:
        fam = desc["family"]
        k = int(desc.get("k", 1))
        if fam == "heisenberg":
            return heisenberg(k)
        if fam == "quaternionic":
            return quaternionic(k)
        raise ValueError(f"unknown family {fam!r}")
    try:
        m_v, m_z, j = int(desc["m_v"]), int(desc["m_z"]), desc["j_maps"]
    except KeyError as exc:
        raise ValueError(f"space descriptor is missing field {exc.args[0]!r}") from None
    return DamekRicciSpace(build_htype(m_v, m_z, j))


def parse_space(text: str) -> DamekRicciSpace:
    """Parse the ``heisenberg:k=2`` / ``quaternionic`` shorthand."""
    name, _, rest = text.partition(":")
    desc: dict[str, Any] = {"family": name.strip()}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        desc[key.strip()] = int(val)
    return space_from_descriptor(desc)


# -- group law ---------------------------------------------------------------


@dataclass(frozen=True)
class GroupPoint:
    v: np.ndarray
    z: np.ndarray
    a: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.z, [self.a]])


def identity(S: DamekRicciSpace) -> GroupPoint:
    return GroupPoint(np.zeros(S.m_v), np.zeros(S.m_z), 1.0)


def _check_point(S: DamekRicciSpace, x: GroupPoint) -> None:
    if x.v.shape != (S.m_v,) or x.z.shape != (S.m_z,):
        raise StructureMismatch(f"point with dims ({x.v.size}, {x.z.size}) used on {S}")


def bracket(S: DamekRicciSpace, v, w) -> np.ndarray:
    """[v, w] in z; also works row-wise on stacks of shape (k, m_v)."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape[-1] != S.m_v or w.shape[-1] != S.m_v:
        raise ValueError(f"bracket expects vectors of length {S.m_v}")
    Jv = np.einsum("iab,...b->...ia", S.structure.j_maps, v)
    return np.einsum("...ia,...a->...i", Jv, w)


def group_mul(S: DamekRicciSpace, x: GroupPoint, y: GroupPoint) -> GroupPoint:
    _check_point(S, x)
    _check_point(S, y)
    ra = math.sqrt(x.a)
    return GroupPoint(
        x.v + ra * y.v,
        x.z + x.a * y.z + 0.5 * ra * bracket(S, x.v, y.v),
        x.a * y.a,
    )


def group_inv(S: DamekRicciSpace, x: GroupPoint) -> GroupPoint:
    _check_point(S, x)
    return GroupPoint(-x.v / math.sqrt(x.a), -x.z / x.a, 1.0 / x.a)


def modular(S: DamekRicciSpace, x: GroupPoint) -> float:
    return x.a ** (-S.Q)


def _sinh_half_sq(v_sq, z_sq, a):
    """sinh^2(R/2) = cosh^2(R/2) - 1 written without cancellation near x = e."""
    u = v_sq / 4
    return ((1 - a) ** 2 + 2 * u * (1 + a) + u**2 + z_sq) / (4 * a)


def distance_to_identity(S: DamekRicciSpace, x: GroupPoint) -> float:
    _check_point(S, x)
    s2 = _sinh_half_sq(x.v @ x.v, x.z @ x.z, x.a)
    return 2 * math.asinh(math.sqrt(max(s2, 0.0)))


def distances_to_identity(v, z, a) -> np.ndarray:
    """Vectorised distance for stacks v (k, m_v), z (k, m_z), a (k,)."""
    v_sq = np.einsum("ij,ij->i", v, v)
    z_sq = np.einsum("ij,ij->i", z, z)
    s2 = _sinh_half_sq(v_sq, z_sq, np.asarray(a))
    return 2 * np.arcsinh(np.sqrt(np.maximum(s2, 0.0)))


def distance(S: DamekRicciSpace, x: GroupPoint, y: GroupPoint) -> float:
    return distance_to_identity(S, group_mul(S, group_inv(S, x), y))


# -- polar coordinates -------------------------------------------------------


@dataclass(frozen=True)
class SphereDirection:
    V: np.ndarray
    Z: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float))
        object.__setattr__(self, "Z", np.asarray(self.Z, dtype=float))
        norm = self.V @ self.V + self.Z @ self.Z + self.b**2
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"direction is not a unit vector (|omega|^2 = {norm!r})")

    @classmethod
    def from_vector(cls, S: DamekRicciSpace, omega) -> "SphereDirection":
        omega = np.asarray(omega, dtype=float)
        omega = omega / np.linalg.norm(omega)
        return cls(omega[: S.m_v], omega[S.m_v : S.m_v + S.m_z], float(omega[-1]))


def polar_point(S: DamekRicciSpace, R: float, omega: SphereDirection) -> GroupPoint:
    """x(R, omega) = F^{-1}(tanh(R/2) omega)."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    v, z, a = polar_points(S, R, omega.V[None], omega.Z[None], np.array([omega.b]))
    return GroupPoint(v[0], z[0], float(a[0]))


def _log_a(R, one_minus_b, z_sq):
    """log of the a-coordinate of x(R, omega); depends on omega through b, |Z|."""
    rho = np.tanh(R / 2)
    one_minus_rho = 2 / (np.exp(R) + 1)
    one_minus_rho_b = one_minus_rho + rho * one_minus_b
    D = one_minus_rho_b**2 + rho**2 * z_sq
    log_one_minus_rho_sq = -2 * (R / 2 + np.log1p(np.exp(-R)) - math.log(2))
    return log_one_minus_rho_sq - np.log(D)


def polar_points(S: DamekRicciSpace, R, V, Z, b, one_minus_b=None):
    """Vectorised x(R, omega) for direction stacks V (k, m_v), Z (k, m_z), b (k,)."""
    V = np.asarray(V, dtype=float)
    Z = np.asarray(Z, dtype=float)
    b = np.asarray(b, dtype=float)
    if one_minus_b is None:
        one_minus_b = 1 - b
    rho = math.tanh(R / 2)
    one_minus_rho = 2 / (math.exp(R) + 1) if R < 700 else 0.0
    one_minus_rho_b = one_minus_rho + rho * one_minus_b
    z_sq = np.einsum("ij,ij->i", Z, Z)
    D = one_minus_rho_b**2 + rho**2 * z_sq
    JZV = np.einsum("kab,kb->ka", S.structure.j_of(Z), V)
    v = 2 * rho * (one_minus_rho_b[:, None] * V + rho * JZV) / D[:, None]
    z = 2 * rho * Z / D[:, None]
    a = np.exp(_log_a(R, one_minus_b, z_sq))
    return v, z, a


def volume_density(S: DamekRicciSpace, r):
    """A(r) = 2^{m_v+m_z} sinh^{m_v+m_z}(r/2) cosh^{m_z}(r/2)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    out = (2 * np.sinh(r / 2)) ** (S.m_v + S.m_z) * np.cosh(r / 2) ** S.m_z
    return out if out.ndim else float(out)


# -- sphere averages of powers of the modular function ----------------------


@dataclass(frozen=True)
class SphereAverage:
    value: float
    stderr: float
    method: str
    n_samples: int = 0


def sphere_average_modular_power(
    S: DamekRicciSpace,
    s: float,
    R: float,
    method: str = "hypergeometric",
    *,
    n_samples: int = 1_000_000,
    seed: int = 0,
) -> SphereAverage:
    """(1/nu_n) * integral over S^{n-1} of delta(x(R, omega))^s d omega.

    The hypergeometric route evaluates phi_lambda(R) at lambda = -iQ(s+1/2),
    where the 2F1 parameters are real; if the series does not converge it
    warns and falls back to Monte Carlo.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if method == "hypergeometric":
        from .special import HypergeometricConvergenceError, spherical_phi

        lam = -1j * S.Q * (s + 0.5)
        try:
            val = spherical_phi(S, lam, R, method="series")
            return SphereAverage(float(np.real(val)), 0.0, "hypergeometric")
        except HypergeometricConvergenceError as exc:
            warnings.warn(f"hypergeometric route failed ({exc}); falling back to Monte Carlo")
            method = "monte_carlo"
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")

    Q = S.Q

    def integrand(batch: sphere.SphereBatch) -> np.ndarray:
        return np.exp(-Q * s * _log_a(R, batch.one_minus_b, batch.z_sq))

    res = sphere.stratified_mean(S.m_v, S.m_z, integrand, n_samples, seed)
    return SphereAverage(res.mean, res.stderr, "monte_carlo", res.n_samples)


@dataclass(frozen=True)
class DerivativeAverage:
    """I(R) = int |d/dR delta(x(R, omega))^{-1/2}| d omega (unnormalised)."""

    value: float
    stderr: float
    richardson_gap: float
    n_samples: int


def _sqrt_inverse_modular(Q, R, batch):
    return np.exp(0.5 * Q * _log_a(R, batch.one_minus_b, batch.z_sq))


def sphere_average_abs_dR_modular_sqrt(
    S: DamekRicciSpace,
    R: float,
    *,
    n_samples: int = 400_000,
    seed: int = 0,
    fd_tol: float = 1e-5,
) -> DerivativeAverage:
    """Monte-Carlo estimate of I(R), differentiating each sample in R.

    Central differences with h = 1e-5 max(1, R) and h/2 are combined by
    Richardson extrapolation; the largest relative gap between the two is
    reported and must stay below ``fd_tol``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    Q = S.Q
    h = 1e-5 * max(1.0, R)
    h = min(h, R / 4)
    gaps: list[float] = []

    def integrand(batch):
        def cdiff(step):
            return (_sqrt_inverse_modular(Q, R + step, batch) - _sqrt_inverse_modular(Q, R - step, batch)) / (2 * step)

        d1 = cdiff(h)
        d2 = cdiff(h / 2)
        rich = (4 * d2 - d1) / 3
        scale = np.abs(rich).max() or 1.0
        gaps.append(float(np.abs(d1 - d2).max() / scale))
        return np.abs(rich)

    res = sphere.stratified_mean(S.m_v, S.m_z, integrand, n_samples, seed)
    gap = max(gaps)
    if gap > fd_tol:
        raise RuntimeError(f"finite differences did not settle at R={R}: relative gap {gap:.2e}, h={h:.1e}")
    return DerivativeAverage(S.nu * res.mean, S.nu * res.stderr, gap, res.n_samples)


def lemma_bound_profile(S: DamekRicciSpace, R_values, **kw) -> dict[str, Any]:
    """I(R) over a grid with the fitted constant C in I <= C*(1 or R e^{-QR/2})."""
    R_values = np.asarray(R_values, dtype=float)
    vals, errs = [], []
    for i, R in enumerate(R_values):
        res = sphere_average_abs_dR_modular_sqrt(S, float(R), seed=kw.get("seed", 0) + i, n_samples=kw.get("n_samples", 400_000))
        vals.append(res.value)
        errs.append(res.stderr)
    vals = np.array(vals)
    bound = np.where(R_values > 1, R_values * np.exp(-S.Q * R_values / 2), 1.0)
    ratio = vals / bound
    # I(R) e^{QR/2} / R on the whole grid, R = 1 included
    decay_ratio = vals * np.exp(S.Q * R_values / 2) / R_values
    return {
        "R": R_values, "I": vals, "stderr": np.array(errs), "ratio": ratio, "C": float(ratio.max()),
        "decay_ratio": decay_ratio,
    }
