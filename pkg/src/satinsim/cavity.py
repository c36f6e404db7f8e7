"""Closed-form cavity-QED model of light-mediated one-axis twisting.

Detunings are normalized: ``x_a = 2*Delta/Gamma`` (probe vs. atomic line) and
``x_c = 2*delta/kappa`` (probe vs. cavity). With the cavity tuned onto the
atomic line a single laser detuning moves both, ``x_c = x_a * Gamma/kappa``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np

TWO_PI = 2 * math.pi

# Scattered photons per transmitted photon, in units of N*eta*L_a(x_a).
# Writing chi*tau in terms of the free-space scattered photon number and
# Q_tilde in terms of transmitted photons describe the same shearing; equating
# the two fixes n_sc = n_tr * N * eta * L_a / 4, independent of x_c.
SCATTER_PER_TRANSMITTED = 0.25


class NoSolutionError(ValueError):
    """Requested twisting strength cannot be reached with finite light."""


@dataclass(frozen=True)
class CavityConfig:
    eta: float = 7.7
    kappa: float = TWO_PI * 530e3
    gamma: float = TWO_PI * 184e3
    finesse: float = 11400.0
    n_atoms: int = 220
    x_a: float = 0.0
    x_c: float = 0.0
    n_tr_tot: float = 0.0

    def __post_init__(self):
        for name in ("eta", "kappa", "gamma", "finesse"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be finite and > 0, got {val}")
        if self.n_atoms < 0:
            raise ValueError(f"n_atoms must be >= 0, got {self.n_atoms}")
        if not (math.isfinite(self.n_tr_tot) and self.n_tr_tot >= 0):
            raise ValueError(f"n_tr_tot must be finite and >= 0, got {self.n_tr_tot}")
        if not (math.isfinite(self.x_a) and math.isfinite(self.x_c)):
            raise ValueError("detunings must be finite")

    @property
    def tie_ratio(self) -> float:
        """x_c / x_a when one laser detuning is swept with cavity on the atoms."""
        return self.gamma / self.kappa

    def with_laser_detuning(self, x_a: float) -> "CavityConfig":
        return replace(self, x_a=x_a, x_c=x_a * self.tie_ratio)

    def mirrored(self) -> "CavityConfig":
        return replace(self, x_a=-self.x_a, x_c=-self.x_c)


@dataclass(frozen=True)
class TwistBudget:
    q_tilde: float
    excess_broadening: float
    n_scattered: float
    contrast_sc: float


def lorentz_dispersive(x):
    return -x / (1 + x * x)


def lorentz_absorptive(x):
    return 1 / (1 + x * x)


def _transmission(n_atoms, eta, x_a, x_c):
    h = 0.5 * n_atoms * eta
    return 1 / (
        (1 + h * lorentz_absorptive(x_a)) ** 2 + (x_c + h * lorentz_dispersive(x_a)) ** 2
    )


def symmetric_transmission(cfg: CavityConfig) -> float:
    """Power transmission of a symmetric lossless cavity loaded with N/2 atoms."""
    return float(_transmission(cfg.n_atoms, cfg.eta, cfg.x_a, cfg.x_c))


def _q_per_photon(n_atoms, eta, x_a, x_c):
    h = 0.5 * n_atoms * eta
    return (
        lorentz_dispersive(x_a)
        * lorentz_absorptive(x_a)
        * h
        * eta
        * (1 + h - x_a * x_c)
        * _transmission(n_atoms, eta, x_a, x_c)
        / np.sqrt(n_atoms)
    )


def _i_per_photon(n_atoms, eta, x_a, x_c):
    h = 0.5 * n_atoms * eta
    return (
        2
        * lorentz_absorptive(x_a) ** 2
        * h
        * eta
        * (1 + h + x_a**2)
        * _transmission(n_atoms, eta, x_a, x_c)
    )


def _sc_per_photon(n_atoms, eta, x_a):
    return SCATTER_PER_TRANSMITTED * n_atoms * eta * lorentz_absorptive(x_a)


def shearing_strength(cfg: CavityConfig) -> float:
    """Signed normalized twisting strength produced by ``cfg.n_tr_tot`` photons."""
    if cfg.n_atoms == 0 or cfg.n_tr_tot == 0:
        return 0.0
    return float(cfg.n_tr_tot * _q_per_photon(cfg.n_atoms, cfg.eta, cfg.x_a, cfg.x_c))


def excess_broadening(cfg: CavityConfig) -> float:
    """Light-induced phase broadening, in units of the CSS phase variance."""
    if cfg.n_tr_tot == 0:
        return 0.0
    return float(cfg.n_tr_tot * _i_per_photon(cfg.n_atoms, cfg.eta, cfg.x_a, cfg.x_c))


def scattered_photons(cfg: CavityConfig) -> float:
    """Photons scattered into free space while ``cfg.n_tr_tot`` are transmitted."""
    if cfg.n_tr_tot == 0:
        return 0.0
    return float(cfg.n_tr_tot * _sc_per_photon(cfg.n_atoms, cfg.eta, cfg.x_a))


def contrast_from_scattering(n_scattered: float, n_atoms: int) -> float:
    return math.exp(-2.0 * n_scattered / n_atoms)


def twist_budget(cfg: CavityConfig) -> TwistBudget:
    n_sc = scattered_photons(cfg)
    return TwistBudget(
        q_tilde=shearing_strength(cfg),
        excess_broadening=excess_broadening(cfg),
        n_scattered=n_sc,
        contrast_sc=contrast_from_scattering(n_sc, cfg.n_atoms) if cfg.n_atoms else 1.0,
    )


def photons_for(cfg: CavityConfig, q_target: float) -> float:
    """Transmitted photons needed at cfg's detuning to reach |q_target|."""
    per = _q_per_photon(cfg.n_atoms, cfg.eta, cfg.x_a, cfg.x_c)
    n = abs(q_target) / abs(per) if per != 0 else math.inf
    if not math.isfinite(n):
        raise NoSolutionError(
            f"|Q|={abs(q_target)} unreachable at x_a={cfg.x_a}, x_c={cfg.x_c}"
        )
    return float(n)


def pulse_pair(cfg: CavityConfig, q_plus: float, q_minus: float):
    """Twist at cfg's detuning and untwist at the mirrored detuning.

    Returns the (TwistBudget, TwistBudget) of the two pulses. Each pulse gets the
    photon number that produces its requested magnitude; the sign comes from the
    detuning, so cfg must produce Q with the sign of q_plus.
    """
    twist = replace(cfg, n_tr_tot=photons_for(cfg, q_plus) if q_plus else 0.0)
    untwist_cfg = cfg.mirrored()
    untwist = replace(untwist_cfg, n_tr_tot=photons_for(untwist_cfg, q_minus) if q_minus else 0.0)
    return twist_budget(twist), twist_budget(untwist)


# -- detuning optimizer -----------------------------------------------------

X_MIN, X_MAX, N_GRID = 0.1, 1e4, 400


def _pair_gain(n, eta, x_a, x_c, q, sigma_meas_sq):
    # vectorized model gain of a |q| twist at (x_a, x_c) plus its mirrored
    # untwist; -inf where (x_a, x_c) twists with the wrong sign
    from .noise import sigma_y_from_phase
    from .protocol import amplification_analytic

    qpp = _q_per_photon(n, eta, x_a, x_c)
    with np.errstate(divide="ignore", invalid="ignore"):
        photons = abs(q) / np.abs(qpp)
    ok = np.isfinite(photons) & (np.sign(qpp) == np.sign(q))
    photons = np.where(ok, photons, 0.0)
    i_tot = 2 * photons * _i_per_photon(n, eta, x_a, x_c)
    n_sc = 2 * photons * _sc_per_photon(n, eta, x_a)
    contrast = np.exp(-2 * n_sc / n)
    m = amplification_analytic(abs(q), n, contrast)
    s0 = n / 2
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        dtau = (1 + i_tot) / (2 * contrast * s0)
        var = sigma_y_from_phase(dtau, s0, contrast) + sigma_meas_sq
        g = 10 * np.log10(m**2 / var)
    return np.where(ok & np.isfinite(g), g, -np.inf)


def _tied_gain(cfg, q, x_a, sigma_meas_sq):
    x_a = np.asarray(x_a, dtype=float)
    return _pair_gain(cfg.n_atoms, cfg.eta, x_a, x_a * cfg.tie_ratio, q, sigma_meas_sq)


def golden_max(f, lo, hi, tol=1e-7, max_iter=200):
    """Golden-section search for the maximum of a unimodal f on [lo, hi]."""
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (abs(a) + abs(b) + 1e-12):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _refine(f, grid, i):
    lo = math.log(grid[max(i - 1, 0)])
    hi = math.log(grid[min(i + 1, len(grid) - 1)])
    u, val = golden_max(lambda u: f(math.exp(u)), lo, hi)
    if val < f(grid[i]):
        return grid[i]
    return math.exp(u)


def optimize_detuning(
    cfg_base: CavityConfig,
    q_target: float,
    sigma_meas_sq: float = 0.15,
    n_grid: int = N_GRID,
) -> CavityConfig:
    """Tied laser detuning and photon number maximizing the model gain at |Q|.

    The twist uses the returned detuning, the untwist its mirror image. A coarse
    log grid over |x_a| on both sides of resonance is refined by golden section.
    """
    if not (math.isfinite(q_target) and q_target != 0):
        raise ValueError(f"q_target must be finite and non-zero, got {q_target}")
    if cfg_base.n_atoms < 1:
        raise NoSolutionError("no atoms, no twisting")
    q = abs(q_target)
    grid = np.geomspace(X_MIN, X_MAX, n_grid)
    best = None
    for sign in (1.0, -1.0):
        g = _tied_gain(cfg_base, q, sign * grid, sigma_meas_sq)
        i = int(np.argmax(g))
        if not np.isfinite(g[i]):
            continue

        def f(x, sign=sign):
            return float(_tied_gain(cfg_base, q, sign * x, sigma_meas_sq))

        x = _refine(f, grid, i)
        val = f(x)
        if best is None or val > best[0]:
            best = (val, sign * x)
    if best is None:
        raise NoSolutionError(f"no detuning reaches |Q|={q}")
    cfg = cfg_base.with_laser_detuning(best[1])
    if q_target < 0:
        cfg = cfg.mirrored()
    return replace(cfg, n_tr_tot=photons_for(cfg, q_target))


def model_gain_db(cfg: CavityConfig, q: float, sigma_meas_sq: float = 0.15) -> float:
    """Model gain of a matched twist/untwist pair, twist at cfg's detuning.

    -inf when cfg's detuning shears with the opposite sign to q.
    """
    return float(_pair_gain(cfg.n_atoms, cfg.eta, cfg.x_a, cfg.x_c, q, sigma_meas_sq))
