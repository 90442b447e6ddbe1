"""Bound states of -zeta'' + W(r) zeta = E zeta on a tabulated adiabatic potential.

The equation is solved on a grid uniform in x = ln r.  With zeta = sqrt(r) y,

    y'' = [r^2 (W - E) + 1/4] y,

which is integrated with the renormalized Numerov method (ratios of
successive Numerov amplitudes, so nothing overflows).  The number of
negative outward ratios equals the number of eigenvalues below E; energies
are bracketed by bisection on that count and then refined on the mismatch
of inward and outward ratios at the matching point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import CollapseError, ConvergenceError, DomainError
from .phem import AdiabaticTable

DEFAULT_POINTS = 6000
MAX_POINTS = 10000
ENERGY_RTOL = 1e-10
MODES = ("EAA", "UAA")


@dataclass
class SpectrumResult:
    energies_rel: list
    energies_total_per_particle: list
    r_grid: np.ndarray
    zeta0: np.ndarray
    mode: str
    node_counts: list
    shortage: bool = False
    wavefunctions: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def _local_extrema(w):
    """Indices of interior local maxima and minima of a sampled curve."""
    d = np.diff(w)
    rising = d > 0
    maxima = np.flatnonzero(rising[:-1] & ~rising[1:]) + 1
    minima = np.flatnonzero(~rising[:-1] & rising[1:]) + 1
    return maxima, minima


def metastable_window(table: AdiabaticTable):
    """(r_barrier, r_min_local) if omega_0 has a barrier followed by a local well, else None.

    Barrier and well must differ by more than 1e-8 of the barrier scale so
    that rounding ripples are not mistaken for structure.
    """
    w = np.asarray(table.omega0)
    r = np.asarray(table.r_grid)
    maxima, minima = _local_extrema(w)
    for i in maxima:
        later = minima[minima > i]
        if later.size == 0:
            continue
        j = later[0]
        if w[i] - w[j] > 1e-8 * max(abs(w[i]), 1.0):
            return float(r[i]), float(r[j])
    return None


def _free_minimum(table):
    lam = table.spec.grand_orbital
    c = lam * (lam + 1.0)
    return (4.0 * c) ** 0.25, math.sqrt(c)


class _Numerov:
    """Ratio-form Numerov for y'' = (g(x) - E r^2) y on a uniform x grid, y = 0 at both ends."""

    def __init__(self, x, g, r2):
        self.x = x
        self.h = x[1] - x[0]
        self.c = self.h * self.h / 12.0
        self.g = g
        self.r2 = r2
        self.n = len(x)

    def _t(self, energy):
        return self.c * (self.g - energy * self.r2)

    def outward(self, energy, stop=None):
        """R_i = F_{i+1}/F_i for i = 1..stop-1 and the count of negative R."""
        t = self._t(energy)
        u = ((2.0 + 10.0 * t) / (1.0 - t)).tolist()
        stop = self.n - 1 if stop is None else stop
        ratios = [0.0] * self.n
        prev = math.inf
        neg = 0
        for i in range(1, stop):
            prev = u[i] - 1.0 / prev
            ratios[i] = prev
            if prev < 0.0:
                neg += 1
        return ratios, neg, u, t

    def inward(self, energy, stop):
        """S_i = F_{i-1}/F_i for i = n-2 down to stop+1."""
        t = self._t(energy)
        u = ((2.0 + 10.0 * t) / (1.0 - t)).tolist()
        ratios = [0.0] * self.n
        prev = math.inf
        for i in range(self.n - 2, stop, -1):
            prev = u[i] - 1.0 / prev
            ratios[i] = prev
        return ratios

    def count_below(self, energy):
        return self.outward(energy)[1]

    def mismatch(self, energy, m):
        out, _, u, _ = self.outward(energy, stop=m)
        inn = self.inward(energy, stop=m)
        return u[m] - 1.0 / out[m - 1] - 1.0 / inn[m + 1]

    def wavefunction(self, energy, m):
        """Numerov amplitudes y normalised to 1 at m, built from both sides in log form."""
        out, _, u, t = self.outward(energy, stop=m)
        inn = self.inward(energy, stop=m)
        log_f = np.zeros(self.n)
        sign = np.ones(self.n)
        for i in range(m - 1, 0, -1):
            rho = out[i]
            log_f[i] = log_f[i + 1] - math.log(abs(rho))
            sign[i] = sign[i + 1] * (1.0 if rho > 0 else -1.0)
        for i in range(m + 1, self.n - 1):
            rho = inn[i]
            log_f[i] = log_f[i - 1] - math.log(abs(rho))
            sign[i] = sign[i - 1] * (1.0 if rho > 0 else -1.0)
        f = sign * np.exp(log_f - log_f.max())
        f[0] = f[-1] = 0.0
        return f / (1.0 - np.asarray(t))


def _effective(table, mode):
    w = np.asarray(table.omega0, dtype=float)
    if mode == "UAA":
        w = w + np.asarray(table.derivative_term, dtype=float)
    return w


def solve_bound_states(table: AdiabaticTable, n_states: int = 1, mode: str = "UAA",
                       points: int = DEFAULT_POINTS, window="auto") -> SpectrumResult:
    """Lowest ``n_states`` levels of the hyperradial equation.

    ``mode`` is "EAA" (omega_0 alone) or "UAA" (omega_0 plus the
    non-negative derivative term).  With ``window="auto"`` a metastable
    well of omega_0 restricts the domain to r beyond its barrier; a deep
    inner well without such a window is reported as collapse.
    """
    mode = str(mode).upper()
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if int(n_states) != n_states or n_states < 1:
        raise DomainError(f"n_states must be a positive integer, got {n_states!r}")
    if not 100 <= points <= MAX_POINTS:
        raise DomainError(f"points must lie in 100..{MAX_POINTS}, got {points!r}")
    r_tab = np.asarray(table.r_grid, dtype=float)
    w_tab = _effective(table, mode)

    lo_r = r_tab[0]
    found = metastable_window(table) if window == "auto" else window
    if found is not None:
        lo_r = found[0]
    else:
        r_free, w_free = _free_minimum(table)
        k = int(np.argmin(w_tab))
        if r_tab[k] < 0.5 * r_free and w_tab[k] < w_free:
            below = w_tab < w_free
            left = k
            while left > 0 and below[left - 1]:
                left -= 1
            right = k
            while right < len(w_tab) - 1 and below[right + 1]:
                right += 1
            region = (float(r_tab[left]), float(r_tab[right]))
            raise CollapseError(
                f"no metastable window: the effective potential has an inner well "
                f"reaching {w_tab[k]:.6g} at r={r_tab[k]:.4g} in ({region[0]:.4g}, {region[1]:.4g})",
                region=region,
            )

    spline = CubicSpline(np.log(r_tab), r_tab ** 2 * w_tab)
    x = np.linspace(math.log(lo_r), math.log(r_tab[-1]), int(points))
    r = np.exp(x)
    r2 = r * r
    g = spline(x) + 0.25
    solver = _Numerov(x, g, r2)
    w_grid = (g - 0.25) / r2

    e_floor = float(np.min(w_grid))
    ceiling = float(min(w_grid[0], w_grid[-1]))

    # upper bracket: enough eigenvalues below it
    e_hi = max(e_floor + 1.0, 1.0)
    while solver.count_below(e_hi) < n_states:
        e_hi = e_floor + 2.0 * (e_hi - e_floor)
        if e_hi - e_floor > 1e8:
            raise ConvergenceError("could not bracket the requested levels", last_values=(e_floor, e_hi))

    energies, nodes, waves = [], [], []
    for n in range(n_states):
        lo, hi = e_floor, e_hi
        # bisection on the eigenvalue count until n-th level is isolated in (lo, hi]
        for _ in range(200):
            if hi - lo <= 1e-6 * max(1.0, abs(hi)):
                break
            mid = 0.5 * (lo + hi)
            if solver.count_below(mid) <= n:
                lo = mid
            else:
                hi = mid
        energy = _refine(solver, lo, hi, n)
        energies.append(energy)
        y = solver.wavefunction(energy, _match_index(solver, energy))
        zeta = np.sqrt(r) * y
        norm = math.sqrt(np.trapezoid(zeta * zeta, r))
        zeta = zeta / norm
        peak = int(np.argmax(np.abs(zeta)))
        # sign convention: positive near the inner turning region
        first = np.flatnonzero(np.abs(zeta) > 1e-8 * abs(zeta[peak]))[0]
        if zeta[first] < 0:
            zeta = -zeta
        waves.append(zeta)
        big = np.abs(zeta) > 1e-8 * abs(zeta[peak])
        nodes.append(int(np.count_nonzero(np.diff(np.sign(zeta[big])) != 0)))

    shortage = bool(energies[-1] >= ceiling)
    diagnostics = {
        "points": int(points),
        "step_ln_r": float(x[1] - x[0]),
        "r_min": float(r[0]),
        "r_max": float(r[-1]),
        "window": found,
        "bound_limit": ceiling,
    }
    if shortage:
        kept = [e < ceiling for e in energies]
        diagnostics["unbound_levels"] = [i for i, ok in enumerate(kept) if not ok]
    a = table.spec.particle_count
    return SpectrumResult(
        energies_rel=energies,
        energies_total_per_particle=[(e + 1.5) / a for e in energies],
        r_grid=r,
        zeta0=waves[0],
        mode=mode,
        node_counts=nodes,
        shortage=shortage,
        wavefunctions=waves,
        diagnostics=diagnostics,
    )


def _match_index(solver, energy):
    """Outer classical turning point, where both solutions are well conditioned."""
    t = solver._t(energy)
    allowed = np.flatnonzero(t[1:-1] < 0.0) + 1
    m = int(allowed[-1]) if allowed.size else solver.n // 2
    return min(max(m, 2), solver.n - 3)


def _refine(solver, lo, hi, n):
    """Root of the matching function inside a bracket that isolates level n."""
    m = _match_index(solver, 0.5 * (lo + hi))
    d_lo = solver.mismatch(lo, m)
    d_hi = solver.mismatch(hi, m)
    if np.isfinite(d_lo) and np.isfinite(d_hi) and d_lo * d_hi < 0:
        try:
            root = brentq(solver.mismatch, lo, hi, args=(m,), xtol=1e-14, rtol=ENERGY_RTOL * 1e-2,
                          maxiter=200)
            if solver.count_below(root * (1 - 1e-9) - 1e-12) <= n < solver.count_below(
                    root * (1 + 1e-9) + 1e-12):
                return root
        except ValueError:
            pass
    # the matching function has a pole in the bracket; finish on the count alone
    for _ in range(200):
        if hi - lo <= ENERGY_RTOL * 1e-2 * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if solver.count_below(mid) <= n:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
