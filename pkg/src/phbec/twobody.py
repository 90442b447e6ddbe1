"""Two-body calibration of the Gaussian pair potential in oscillator units.

The zero-energy radial equation is integrated with Numerov's method in
ratio form (so that strongly repulsive cores cannot overflow), and the
scattering length is read off from the free asymptote ``u ~ r - a``.

Kinetic convention: the relative equation is ``u'' = 2 mu V u`` with the
reduced mass ``mu`` in units of the atom mass.  ``reduced_mass=1`` is the
default because it is the convention behind the Born formula
``a_B = sqrt(pi) v0 r0^3 / 2`` and the calibration pairs quoted for this
model (e.g. ``V0 = 20, r0 = 0.1 -> a = 0.01553``).  Pass ``reduced_mass=0.5``
for two free bosons of equal mass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import constants
from scipy.optimize import brentq

from .errors import DomainError, PoleError

# 87Rb
RB87_MASS = 1.4432e-25
BOHR_RADIUS = constants.physical_constants["Bohr radius"][0]

# exp(-GAUSS_TAIL) is treated as zero when truncating the Gaussian
GAUSS_TAIL = 41.5


class PairPotential(Protocol):
    def __call__(self, r): ...

    def support_radius(self) -> float: ...


@dataclass(frozen=True)
class GaussianPotential:
    """V(r) = v0 exp(-r^2 / r0^2); energies in hbar*omega, lengths in o.u."""

    v0: float
    r0: float

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError(f"Gaussian range must be positive, got r0={self.r0!r}")
        if not math.isfinite(self.v0):
            raise DomainError(f"Gaussian strength must be finite, got v0={self.v0!r}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self.v0 * np.exp(-(r / self.r0) ** 2)
        return float(out) if out.ndim == 0 else out

    def support_radius(self) -> float:
        """Distance beyond which |V| < 1e-18 |v0|; zero for v0 = 0."""
        if self.v0 == 0.0:
            return 0.0
        return self.r0 * math.sqrt(GAUSS_TAIL)


@dataclass
class ScatteringResult:
    a_sc: float
    bound_state_count: int
    node_positions: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrapUnits:
    """Conversion between SI and oscillator units for an isotropic trap."""

    atom_mass: float
    trap_frequency: float

    def __post_init__(self):
        if not (self.atom_mass > 0 and self.trap_frequency > 0):
            raise DomainError("atom mass and trap frequency must be positive")

    @property
    def angular_frequency(self) -> float:
        return 2.0 * math.pi * self.trap_frequency

    @property
    def oscillator_length(self) -> float:
        return math.sqrt(constants.hbar / (self.atom_mass * self.angular_frequency))

    @property
    def energy_quantum(self) -> float:
        return constants.hbar * self.angular_frequency


def to_oscillator_units(units: TrapUnits, length_m: float) -> float:
    return length_m / units.oscillator_length


def default_extraction_radius(r0: float) -> float:
    return max(10.0 * r0, 1e-2)


def default_step(r0: float) -> float:
    return r0 / 400.0


def _zero_energy_ratios(potential, r_max, step, coupling):
    """Numerov pivots for u'' = coupling * V u with u(0) = 0.

    Returns d_i = R_i - 1 where R_i = F_{i+1} / F_i and F = (1 - T) u.
    Carrying R - 1 and U - 2 = 12 T / (1 - T) keeps weak potentials from
    being swamped by rounding in U = 2 + O(h^2 V).
    """
    n = int(math.ceil(r_max / step))
    h = r_max / n
    r = h * np.arange(n + 1)
    t = (h * h / 12.0) * coupling * np.asarray(potential(r), dtype=float)
    excess = (12.0 * t / (1.0 - t)).tolist()
    dev = [0.0] * n
    prev = math.inf
    for i in range(1, n):
        # R_i = U_i - 1/R_{i-1}  <=>  d_i = (U_i - 2) + d_{i-1} / (1 + d_{i-1})
        carry = 1.0 if prev == math.inf else prev / (1.0 + prev)
        prev = excess[i] + carry
        dev[i] = prev
    return r, h, t, dev


def _tail_slope(h, t, dev):
    """u'(r*) h / u(r*) from the last pivot, assuming V ~ 0 over the final step."""
    n = len(t) - 1
    d = dev[n - 1]
    # u_n/u_{n-1} - 1, written without cancellation
    excess = (d * (1.0 - t[n - 1]) + t[n] - t[n - 1]) / (1.0 - t[n])
    return excess / (1.0 + excess)


def scattering_length(potential: GaussianPotential, r_max: float | None = None,
                      step: float | None = None, reduced_mass: float = 1.0) -> ScatteringResult:
    """Zero-energy s-wave scattering length of ``potential``.

    ``r_max`` is the extraction radius r* (default max(10 r0, 0.01)) and
    ``step`` the Numerov step (default r0/400).  The bound-state count is
    the number of zeros of the zero-energy solution on (0, inf), i.e. the
    branch index of a_sc(v0).
    """
    r0 = potential.r0
    r_max = default_extraction_radius(r0) if r_max is None else float(r_max)
    step = default_step(r0) if step is None else float(step)
    if r_max < 10.0 * r0 * (1 - 1e-12):
        raise DomainError(f"extraction radius {r_max} is inside 10*r0 = {10 * r0}")
    if not step > 0:
        raise DomainError("step must be positive")
    diagnostics = {"r_star": r_max, "step": step, "warnings": []}
    if step > r0 / 50.0:
        msg = f"step {step:g} is coarser than r0/50 = {r0 / 50:g}; a_sc may be inaccurate"
        diagnostics["warnings"].append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if potential.v0 == 0.0:
        return ScatteringResult(0.0, 0, [], diagnostics)

    coupling = 2.0 * reduced_mass
    r, h, t, dev = _zero_energy_ratios(potential, r_max, step, coupling)
    n = len(r) - 1
    nodes = []
    for i in range(1, n):
        if dev[i] < -1.0:
            # zero of u between r_i and r_{i+1}; F = (1 - t) u keeps the sign of u
            nodes.append(float(r[i] - h / dev[i]))
    slope = _tail_slope(h, t, dev)
    if abs(slope) < 1e-12:
        raise PoleError(f"zero-energy resonance at v0={potential.v0!r}: u'(r*) vanishes",
                        interval=(potential.v0, potential.v0))
    a_sc = float(r[n] - h / slope)
    count = len(nodes) + (1 if a_sc > r[n] else 0)
    diagnostics["n_steps"] = n
    return ScatteringResult(a_sc, count, nodes, diagnostics)


def born_scattering_length(potential: GaussianPotential, reduced_mass: float = 1.0) -> float:
    """First Born estimate 2 mu int V r^2 dr = mu sqrt(pi) v0 r0^3 / 2."""
    return reduced_mass * math.sqrt(math.pi) * potential.v0 * potential.r0 ** 3 / 2.0


def _inverse_length(v0, r0, reduced_mass):
    """1/a_sc, which passes continuously through zero at a pole."""
    try:
        return 1.0 / scattering_length(GaussianPotential(v0, r0), reduced_mass=reduced_mass).a_sc
    except PoleError:
        return 0.0


def find_poles(r0: float, count: int = 1, reduced_mass: float = 1.0,
               rtol: float = 1e-10) -> list[float]:
    """Negative strengths at which the first ``count`` bound states appear.

    Scans v0 downward geometrically until the bound-state count increments,
    then refines each crossing on the sign change of 1/a_sc.
    """
    if not r0 > 0:
        raise DomainError("r0 must be positive")
    poles = []
    scale = 1.0 / (2.0 * reduced_mass * r0 * r0)
    prev_v = -0.5 * scale
    prev_n = scattering_count(prev_v, r0, reduced_mass)
    if prev_n:  # pragma: no cover - 0.5/r0^2 is below the first threshold
        raise RuntimeError("scan started beyond the first pole")
    factor = 1.05
    while len(poles) < count:
        v = prev_v * factor
        n = scattering_count(v, r0, reduced_mass)
        if n > prev_n:
            lo, hi = v, prev_v
            pole = brentq(_inverse_length, lo, hi, args=(r0, reduced_mass),
                          xtol=abs(lo) * rtol, maxiter=200)
            poles.append(pole)
        prev_v, prev_n = v, n
    return poles


def scattering_count(v0, r0, reduced_mass=1.0):
    try:
        return scattering_length(GaussianPotential(v0, r0), reduced_mass=reduced_mass).bound_state_count
    except PoleError:
        return scattering_count(v0 * (1 + 1e-9), r0, reduced_mass)


def find_first_pole(r0: float, reduced_mass: float = 1.0) -> float:
    """Most shallow attractive v0 at which a_sc diverges (first bound state)."""
    return find_poles(r0, 1, reduced_mass)[0]


def _off_pole(pole, direction, mismatch, want_negative):
    """Step off ``pole`` (shallower for direction -1) until the mismatch has the wanted sign."""
    for eps in (1e-9, 1e-7, 1e-5, 1e-3):
        v = pole * (1.0 + direction * eps)
        m = mismatch(v)
        if (m < 0.0) == want_negative and math.isfinite(m):
            return v
    return None


def invert_v0(a_target: float, r0: float, branch: int = 0, reduced_mass: float = 1.0,
              rtol: float = 1e-10) -> float:
    """Strength v0 whose scattering length equals ``a_target``.

    ``branch`` counts two-body bound states (0 for a stable condensate).
    On branch 0 the search is confined to v0 above the first pole, where
    a_sc(v0) increases monotonically from -inf.
    """
    if int(branch) != branch or branch < 0:
        raise DomainError(f"branch must be a non-negative integer, got {branch!r}")

    def mismatch(v):
        try:
            return scattering_length(GaussianPotential(v, r0), reduced_mass=reduced_mass).a_sc - a_target
        except PoleError:
            return -math.inf

    if branch == 0:
        if a_target == 0.0:
            return 0.0
        if a_target > 0.0:
            lo, hi = 0.0, 1.0 / (reduced_mass * r0 * r0)
            while mismatch(hi) < 0.0:
                lo, hi = hi, hi * 4.0
                if hi > 1e15:
                    raise DomainError(f"a_sc = {a_target} is not reachable with r0 = {r0} on branch 0")
        else:
            pole = find_first_pole(r0, reduced_mass)
            lo, hi = _off_pole(pole, -1.0, mismatch, want_negative=True), 0.0
            if lo is None:
                raise DomainError(f"a_sc = {a_target} lies beyond the first pole at v0 = {pole:.10g}")
    else:
        poles = find_poles(r0, branch + 1, reduced_mass)
        lo = _off_pole(poles[branch], -1.0, mismatch, want_negative=True)
        hi = _off_pole(poles[branch - 1], 1.0, mismatch, want_negative=False)
        if lo is None or hi is None:
            raise DomainError(f"a_sc = {a_target} not bracketed on branch {branch} "
                              f"(poles {poles[branch]:.6g}, {poles[branch - 1]:.6g})")
    return brentq(mismatch, lo, hi, xtol=1e-300, rtol=rtol * 1e-2, maxiter=500)
