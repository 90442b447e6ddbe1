"""Potential-harmonics coupled-channel matrices and the adiabatic eigenpotential.

Lengths are in oscillator units, energies in hbar*omega.  For a hyperradius
``r`` the effective matrix in the potential-harmonics basis K = 0..k_max is

    M_KK'(r) = f_K f_K' V_KK'(r) / sqrt(h_K h_K')
               + [L_K (L_K + 1) / r^2 + r^2 / 4] delta_KK'

with ``L_K = 2K + l + (3A - 6)/2`` and

    V_KK'(r) = int P_K(z) V(r sqrt((1+z)/2)) P_K'(z) (1-z)^alpha (1+z)^beta dz.

Its lowest eigenvalue is the adiabatic potential omega_0(r).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError
from .specfun import (
    MAX_RULE_SIZE,
    JacobiParams,
    QuadratureRule,
    gauss_jacobi_rule,
    jacobi_P,
    jacobi_table,
    log_jacobi_norm,
)
from .twobody import GaussianPotential

F2_CLAMP = 1e-9
ADAPTIVE_START = 16
ADAPTIVE_RTOL = 1e-10
# below this f^2 a channel has no overlap with the pair function and is left out
ACTIVE_F2 = 1e-9


class DegeneracyWarning(RuntimeWarning):
    pass


def default_r_max(particle_count: int) -> float:
    # the free ground state decays like exp(-(r^2 - 4E)/4) past the turning point 2 sqrt(E)
    energy = 1.5 * particle_count + 8.0
    return max(12.0, math.sqrt(4.0 * energy + 120.0))


def default_r_grid(particle_count: int, points: int = 2000, r_min: float = 0.01,
                   r_max: float | None = None) -> np.ndarray:
    """Geometric grid; its first step is ~4e-5, fine enough for r0 >= 0.005."""
    if r_max is None:
        r_max = default_r_max(particle_count)
    return np.geomspace(r_min, r_max, points)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    particle_count: int
    k_max: int
    potential: GaussianPotential
    angular_momentum: int = 0
    r_grid: np.ndarray | None = None
    quad_points: int | str = "adaptive"

    def __post_init__(self):
        a, l, k = self.particle_count, self.angular_momentum, self.k_max
        if int(a) != a or a < 3:
            raise DomainError(f"particle count must be an integer >= 3, got {a!r}")
        if int(l) != l or l < 0:
            raise DomainError(f"angular momentum must be a non-negative integer, got {l!r}")
        if int(k) != k or k < 0:
            raise DomainError(f"k_max must be a non-negative integer, got {k!r}")
        if self.quad_points != "adaptive":
            n = self.quad_points
            if isinstance(n, bool) or int(n) != n or not 1 <= n <= MAX_RULE_SIZE:
                raise DomainError(f"quad_points must be 'adaptive' or 1..{MAX_RULE_SIZE}, got {n!r}")
        grid = default_r_grid(a) if self.r_grid is None else np.asarray(self.r_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
            raise DomainError("r_grid must be strictly increasing and positive")
        grid = grid.copy()
        grid.setflags(write=False)
        object.__setattr__(self, "r_grid", grid)

    @property
    def alpha(self) -> float:
        return (3 * self.particle_count - 8) / 2.0

    @property
    def beta(self) -> float:
        return self.angular_momentum + 0.5

    @property
    def grand_orbital(self) -> float:
        return self.angular_momentum + (3 * self.particle_count - 6) / 2.0

    @property
    def dimension(self) -> int:
        return 3 * (self.particle_count - 1)

    def with_k_max(self, k_max: int) -> "SystemSpec":
        return SystemSpec(self.particle_count, k_max, self.potential, self.angular_momentum,
                          self.r_grid, self.quad_points)


def _overlap(particle_count, l, p_half, p_minus, p_plus):
    """f^2 from the three endpoint values; correction terms vanish at A = 2."""
    a = particle_count
    same_pair = 2.0 * (a - 2) * (-0.5) ** l * p_half
    disjoint = (a - 2) * (a - 3) / 2.0 * p_minus if l == 0 else 0.0
    return 1.0 + (same_pair + disjoint) / p_plus


def f_squared(K: int, l: int, A: int) -> float:
    """Weight of the pair (ij) harmonic in the symmetrised sum over all pairs."""
    if int(A) != A or A < 3:
        raise DomainError(f"particle count must be an integer >= 3, got {A!r}")
    params = JacobiParams((3 * A - 8) / 2.0, l + 0.5, K)
    vals = jacobi_table(K, params.alpha, params.beta, np.array([-0.5, -1.0, 1.0]))[-1]
    if vals[2] == 0.0:  # pragma: no cover - P_K(1) > 0 for alpha > -1
        raise ArithmeticError("P_K(1) vanished")
    f2 = _overlap(A, l, vals[0], vals[1], vals[2])
    if f2 < -F2_CLAMP:
        raise ArithmeticError(f"negative f^2 = {f2:.3e} for K={K}, l={l}, A={A}")
    return max(f2, 0.0)


def _channel_weights(spec: SystemSpec):
    ks = range(spec.k_max + 1)
    f = np.sqrt([f_squared(k, spec.angular_momentum, spec.particle_count) for k in ks])
    log_h = np.array([log_jacobi_norm(JacobiParams(spec.alpha, spec.beta, k)) for k in ks])
    return f, log_h


def _cutoff_fraction(spec: SystemSpec, r: float) -> float:
    """(1 + z_c)/2 beyond which the Gaussian is below exp(-GAUSS_TAIL); 1 means no cut."""
    reach = spec.potential.support_radius()
    if reach == 0.0:
        return 1.0
    return min(1.0, (reach / r) ** 2)


def _sampled_integrand(spec: SystemSpec, r: float, n: int):
    """Nodes z_j and log-weights so that V_KK' = sum_j exp(lw_j) V(z_j) P_K(z_j) P_K'(z_j).

    If the Gaussian has died out before z = 1, the rule is placed on
    [-1, z_c] only: with z = -1 + s (1 + y), the weight (1+z)^beta becomes
    s^(beta+1) (1+y)^beta dy and (1-z)^alpha is sampled as an ordinary factor.
    """
    s = _cutoff_fraction(spec, r)
    if s > 0.75:
        rule = gauss_jacobi_rule(n, spec.alpha, spec.beta)
        with np.errstate(divide="ignore"):
            lw = np.log(rule.weights) + rule.log_scale
        return rule.nodes, lw
    rule = gauss_jacobi_rule(n, 0.0, spec.beta)
    z = -1.0 + s * (1.0 + rule.nodes)
    with np.errstate(divide="ignore"):
        lw = (np.log(rule.weights) + rule.log_scale + (spec.beta + 1.0) * math.log(s)
              + spec.alpha * np.log1p(-z))
    return z, lw


def _raw_block(spec: SystemSpec, r: float, n: int):
    z, lw = _sampled_integrand(spec, r, n)
    pot = spec.potential
    # the log of |V| is folded into the weights so huge v0 and tiny weights combine safely
    lw = lw + math.log(abs(pot.v0)) - (r * r * (1.0 + z) / 2.0) / pot.r0 ** 2
    polys = jacobi_table(spec.k_max, spec.alpha, spec.beta, z)
    return polys, lw, math.copysign(1.0, pot.v0)


def _scaled_raw(spec, r, n, log_h):
    """V_KK' / sqrt(h_K h_K'), exact symmetry from a single upper-triangle pass."""
    pot = spec.potential
    size = spec.k_max + 1
    if pot.v0 == 0.0:
        return np.zeros((size, size))
    polys, lw, sign = _raw_block(spec, r, n)
    out = np.zeros((size, size))
    for k in range(size):
        for k2 in range(k, size):
            shift = 0.5 * (log_h[k] + log_h[k2])
            out[k, k2] = sign * float(np.sum(np.exp(lw - shift) * polys[k] * polys[k2]))
    return np.triu(out) + np.triu(out, 1).T


def _converged_scaled_raw(spec, r, log_h):
    if spec.quad_points != "adaptive":
        return _scaled_raw(spec, r, int(spec.quad_points), log_h), int(spec.quad_points)
    n = ADAPTIVE_START
    prev_prev, prev = None, _scaled_raw(spec, r, n, log_h)
    while True:
        n2 = 2 * n
        if n2 > MAX_RULE_SIZE:
            raise ConvergenceError(
                f"matrix elements at r={r:g} not converged with {n} nodes",
                last_values=(prev_prev, prev),
            )
        cur = _scaled_raw(spec, r, n2, log_h)
        scale = max(np.max(np.abs(cur)), np.finfo(float).tiny)
        if np.max(np.abs(cur - prev)) <= ADAPTIVE_RTOL * scale:
            return cur, n2
        prev_prev, prev, n = prev, cur, n2


def raw_matrix_element(K: int, K2: int, spec: SystemSpec, r: float,
                       rule: QuadratureRule | None = None) -> float:
    """V_KK'(r), the bare potential integral between two Jacobi polynomials.

    With an explicit ``rule`` (built for the spec's alpha, beta) that rule is
    used as given; otherwise the node count follows ``spec.quad_points``.
    """
    if not (0 <= K <= spec.k_max and 0 <= K2 <= spec.k_max):
        raise DomainError(f"channel indices must lie in 0..{spec.k_max}")
    if not r > 0:
        raise DomainError("hyperradius must be positive")
    if rule is not None:
        if rule.alpha != spec.alpha or rule.beta != spec.beta:
            raise DomainError("quadrature rule exponents do not match the system")
        vals = spec.potential(r * np.sqrt((1.0 + rule.nodes) / 2.0))
        pk = jacobi_P(JacobiParams(spec.alpha, spec.beta, K), rule.nodes)
        pk2 = jacobi_P(JacobiParams(spec.alpha, spec.beta, K2), rule.nodes)
        return rule.integrate(vals * pk * pk2)
    _, log_h = _channel_weights(spec)
    scaled, _ = _converged_scaled_raw(spec, r, log_h)
    return float(scaled[K, K2] * math.exp(0.5 * (log_h[K] + log_h[K2])))


@dataclass
class ChannelMatrix:
    r: float
    entries: np.ndarray
    active: np.ndarray = None
    nodes_used: int = 0

    def __post_init__(self):
        if self.active is None:
            self.active = np.ones(len(self.entries), dtype=bool)


def symmetrized_matrix(spec: SystemSpec, r: float) -> ChannelMatrix:
    """f_K V_KK' f_K' / sqrt(h_K h_K')."""
    if not r > 0:
        raise DomainError("hyperradius must be positive")
    f, log_h = _channel_weights(spec)
    scaled, nodes = _converged_scaled_raw(spec, r, log_h)
    entries = scaled * np.outer(f, f)
    return ChannelMatrix(float(r), entries, f * f > ACTIVE_F2, nodes)


def centrifugal(spec: SystemSpec) -> np.ndarray:
    """L_K (L_K + 1) for K = 0..k_max."""
    lk = 2.0 * np.arange(spec.k_max + 1) + spec.grand_orbital
    return lk * (lk + 1.0)


def effective_matrix(spec: SystemSpec, r: float) -> ChannelMatrix:
    mat = symmetrized_matrix(spec, r)
    idx = np.arange(spec.k_max + 1)
    mat.entries[idx, idx] += centrifugal(spec) / (r * r) + r * r / 4.0
    return mat


def lowest_channel(matrix: ChannelMatrix, previous_chi=None):
    """(omega_0, chi): lowest eigenpair over the active channels.

    chi has zeros in inactive channels.  Its sign makes the overlap with
    ``previous_chi`` non-negative, or else the first nonzero entry positive.
    """
    entries = np.asarray(matrix.entries, dtype=float)
    active = np.asarray(matrix.active, dtype=bool)
    sub = entries[np.ix_(active, active)]
    vals, vecs = np.linalg.eigh(sub)
    chi = np.zeros(len(entries))
    chi[active] = vecs[:, 0]
    if len(vals) > 1:
        scale = max(np.max(np.abs(vals)), 1.0)
        if vals[1] - vals[0] < 1e-12 * scale:
            warnings.warn(f"near-degenerate lowest eigenvalue at r={matrix.r:g}", DegeneracyWarning,
                          stacklevel=2)
            if previous_chi is not None:
                # pick the combination in the degenerate pair closest to the previous vector
                pair = np.zeros((len(entries), 2))
                pair[active] = vecs[:, :2]
                coef = pair.T @ np.asarray(previous_chi)
                if np.linalg.norm(coef) > 0:
                    chi = pair @ (coef / np.linalg.norm(coef))
    if previous_chi is not None:
        if np.dot(chi, previous_chi) < 0:
            chi = -chi
    else:
        lead = chi[np.flatnonzero(np.abs(chi) > 1e-14)[0]]
        if lead < 0:
            chi = -chi
    return float(vals[0]), chi


@dataclass
class AdiabaticTable:
    r_grid: np.ndarray
    omega0: np.ndarray
    chi: np.ndarray
    derivative_term: np.ndarray
    spec: SystemSpec
    diagnostics: dict = field(default_factory=dict)


def _point(args):
    spec, r = args
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always", DegeneracyWarning)
        mat = effective_matrix(spec, r)
        omega, chi = lowest_channel(mat)
    return omega, chi, mat.nodes_used, any(issubclass(w.category, DegeneracyWarning) for w in rec)


def build_adiabatic_table(spec: SystemSpec, workers: int = 1) -> AdiabaticTable:
    """omega_0, chi and sum_K (d chi_K / dr)^2 on ``spec.r_grid``.

    Grid points are independent and may be farmed out to ``workers``
    processes; the sign-continuity pass afterwards is sequential.
    """
    r = spec.r_grid
    if len(r) < 3:
        raise ConfigError("the r grid needs at least 3 points for the derivative term")
    jobs = [(spec, float(x)) for x in r]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_point(job) for job in jobs]
    omega = np.array([res[0] for res in results])
    chi = np.array([res[1] for res in results])
    for i in range(1, len(r)):
        if np.dot(chi[i], chi[i - 1]) < 0:
            chi[i] = -chi[i]
    grad = np.gradient(chi, r, axis=0)
    deriv = np.sum(grad * grad, axis=1)
    degenerate = [float(r[i]) for i, res in enumerate(results) if res[3]]
    diagnostics = {
        "max_quad_nodes": int(max(res[2] for res in results)),
        "degenerate_points": degenerate,
        "active_channels": [int(k) for k in np.flatnonzero(np.any(chi != 0.0, axis=0))],
    }
    return AdiabaticTable(r.copy(), omega, chi, deriv, spec, diagnostics)
