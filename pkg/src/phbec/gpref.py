"""Spherical Gross-Pitaevskii ground state in oscillator units.

Solves [-1/2 lap + r^2/2 + g |phi|^2] phi = mu phi with g = 4 pi a_sc and
int |phi|^2 d^3r = A, by Crank-Nicolson imaginary-time steps on u = r phi.
The Laplacian is a fourth-order central difference; u is continued as an
odd function through r = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import CollapseError, ConvergenceError, DomainError

# critical A |a| / a_ho for the spherical attractive condensate
GP_COLLAPSE = 0.5746


@dataclass(frozen=True)
class GpProblem:
    particle_count: int
    a_sc: float
    r_max: float = 12.0
    points: int = 2000
    dt: float = 1e-3
    tol: float = 1e-9
    residual_tol: float = 1e-8
    max_steps: int = 200000

    def __post_init__(self):
        if int(self.particle_count) != self.particle_count or self.particle_count < 1:
            raise DomainError("particle count must be a positive integer")
        if not math.isfinite(self.a_sc):
            raise DomainError("scattering length must be finite")
        if self.points < 200 or self.r_max <= 0 or self.dt <= 0:
            raise DomainError("need points >= 200, r_max > 0 and dt > 0")

    @property
    def coupling(self) -> float:
        return 4.0 * math.pi * self.a_sc

    @property
    def grid(self) -> np.ndarray:
        # u(0) = u(r_max) = 0 are implied; only interior points are stored
        return np.linspace(0.0, self.r_max, self.points + 1)[1:-1]


@dataclass
class GpResult:
    energy_per_particle: float
    mu: float
    phi: np.ndarray
    r: np.ndarray
    kinetic: float
    trap: float
    interaction: float
    steps: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def interaction_shift(self) -> float:
        """E/A - 3/2."""
        return self.energy_per_particle - 1.5


def _laplacian_bands(n, h):
    """Bands of -1/2 d^2/dr^2 (fourth order) in solve_banded layout, with u(-r) = -u(r)."""
    c = 1.0 / (24.0 * h * h)
    ab = np.zeros((5, n))
    ab[0, 2:] = c           # u_{j+2}
    ab[1, 1:] = -16.0 * c   # u_{j+1}
    ab[2, :] = 30.0 * c
    ab[3, :-1] = -16.0 * c  # u_{j-1}
    ab[4, :-2] = c          # u_{j-2}
    # row 0 (r = h) sees u(-h) = -u(h) through the u_{j-2} stencil entry
    ab[2, 0] -= c
    return ab


def _apply(ab, diag, u):
    """(banded kinetic + diag) @ u."""
    out = (ab[2] + diag) * u
    out[:-1] += ab[1, 1:] * u[1:]
    out[:-2] += ab[0, 2:] * u[2:]
    out[1:] += ab[3, :-1] * u[:-1]
    out[2:] += ab[4, :-2] * u[:-2]
    return out


def _energies(prob, r, h, ab, u):
    """Kinetic, trap and interaction energies for u = r phi (4 pi r^2 measure folded in)."""
    w = 4.0 * math.pi * h
    kin = w * float(np.dot(u, _apply(ab, np.zeros_like(u), u)))
    trap = w * float(np.dot(u, 0.5 * r * r * u))
    inter = w * 0.5 * prob.coupling * float(np.sum(u ** 4 / (r * r)))
    return kin, trap, inter


def _gaussian_width(prob):
    """Width b minimising the Gaussian-ansatz energy."""
    if prob.a_sc == 0.0:
        return 1.0
    k = prob.coupling * prob.particle_count / (2.0 * (2.0 * math.pi) ** 1.5)
    bs = np.linspace(0.3, 4.0, 3701)
    e = 0.75 * (1.0 / bs ** 2 + bs ** 2) + k / bs ** 3
    return float(bs[np.argmin(e)])


def solve_gp(problem: GpProblem) -> GpResult:
    """Ground state by imaginary-time Crank-Nicolson with renormalisation each step.

    Stops when mu changes by less than ``tol`` in one step and the residual
    |H u - mu u| / |u| is below ``residual_tol``.  The step is halved
    whenever the energy goes up by more than rounding.
    """
    prob = problem
    a = prob.particle_count
    if prob.a_sc < 0 and a * abs(prob.a_sc) > GP_COLLAPSE:
        raise CollapseError(f"A|a| = {a * abs(prob.a_sc):.4g} exceeds the collapse threshold {GP_COLLAPSE}",
                            region=(0.0, prob.r_max))
    r = prob.grid
    n = len(r)
    h = r[1] - r[0]
    ab = _laplacian_bands(n, h)
    trap = 0.5 * r * r

    b = _gaussian_width(prob)
    u = r * np.exp(-r * r / (2.0 * b * b))

    def normalise(v):
        return v * math.sqrt(a / (4.0 * math.pi * h * float(np.dot(v, v))))

    u = normalise(u)
    dt = prob.dt
    # rounding floor of the kinetic sum: stencil weights 64/(24 h^2) over norm A
    noise = 16.0 * np.finfo(float).eps * 64.0 / (24.0 * h * h) * a
    energy = sum(_energies(prob, r, h, ab, u))
    mu = math.nan
    for step in range(1, prob.max_steps + 1):
        pot = trap + prob.coupling * (u / r) ** 2
        lhs = ab * (0.5 * dt)
        lhs[2] += 1.0 + 0.5 * dt * pot
        rhs = u - 0.5 * dt * _apply(ab, pot, u)
        trial = normalise(solve_banded((2, 2), lhs, rhs))
        if not np.all(np.isfinite(trial)):
            raise CollapseError("imaginary-time evolution diverged", region=(0.0, prob.r_max))
        e_trial = sum(_energies(prob, r, h, ab, trial))
        # increases at the rounding level are not instabilities
        if e_trial > energy + 1e-12 * abs(energy) + noise:
            dt *= 0.5
            if dt < 1e-12:
                raise ConvergenceError("time step underflow while lowering the energy",
                                       last_values=(energy, e_trial))
            continue
        u, energy = trial, e_trial
        pot = trap + prob.coupling * (u / r) ** 2
        hu = _apply(ab, pot, u)
        mu_new = float(np.dot(u, hu) / np.dot(u, u))
        resid = float(np.linalg.norm(hu - mu_new * u) / np.linalg.norm(u))
        if abs(mu_new - mu) < prob.tol and resid < prob.residual_tol:
            mu = mu_new
            break
        mu = mu_new
    else:
        raise ConvergenceError(f"no convergence in {prob.max_steps} steps (residual {resid:.3e})",
                               last_values=(mu, resid))
    kin, trp, inter = _energies(prob, r, h, ab, u)
    phi = u / r
    return GpResult(
        energy_per_particle=(kin + trp + inter) / a,
        mu=mu,
        phi=phi,
        r=r,
        kinetic=kin,
        trap=trp,
        interaction=inter,
        steps=step,
        diagnostics={"dt_final": dt, "residual": resid, "gaussian_width": b},
    )
