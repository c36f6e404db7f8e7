"""Algebraic decoherence overlay: phase noise, contrast loss, detection noise.

Variances are normalized to the CSS projection noise, so a CSS has 1.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .cavity import CavityConfig, pulse_pair
from .dicke import css_x, measure_distribution, sample_shots

SIGMA_MEAS_SQ = 0.15
SIGMA_D_SQ = 0.15


@dataclass(frozen=True)
class NoiseBudget:
    i_plus: float = 0.0
    i_minus: float = 0.0
    contrast_sc: float = 1.0
    sigma_meas_sq: float = SIGMA_MEAS_SQ
    sigma_d_sq: float = SIGMA_D_SQ

    def __post_init__(self):
        for name in ("i_plus", "i_minus", "sigma_meas_sq", "sigma_d_sq"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {val}")
        if not (0 < self.contrast_sc <= 1):
            raise ValueError(f"contrast_sc must be in (0, 1], got {self.contrast_sc}")

    @property
    def i_tot(self) -> float:
        return self.i_plus + self.i_minus

    @classmethod
    def from_cavity(cls, cfg: CavityConfig, q_plus: float, q_minus: float,
                    sigma_meas_sq: float = SIGMA_MEAS_SQ,
                    sigma_d_sq: float = SIGMA_D_SQ) -> "NoiseBudget":
        plus, minus = pulse_pair(_aligned(cfg, q_plus), q_plus, q_minus)
        n_sc = plus.n_scattered + minus.n_scattered
        return cls(
            i_plus=plus.excess_broadening,
            i_minus=minus.excess_broadening,
            contrast_sc=math.exp(-2 * n_sc / cfg.n_atoms),
            sigma_meas_sq=sigma_meas_sq,
            sigma_d_sq=sigma_d_sq,
        )


@dataclass(frozen=True)
class VariancePrediction:
    delta_tau_sq: float
    sigma_y_sq: float
    sigma_y_sq_hp: float


def _aligned(cfg, q_plus):
    # put the twist on the side of resonance that shears with q_plus's sign
    from .cavity import _q_per_photon

    if q_plus == 0:
        return cfg
    sign = np.sign(_q_per_photon(cfg.n_atoms, cfg.eta, cfg.x_a, cfg.x_c))
    return cfg if sign == np.sign(q_plus) else cfg.mirrored()


def phase_variance(s0, i_tot, q_tot, contrast=1.0):
    """Spin phase variance after twist/untwist with residual twist q_tot."""
    if np.any(np.asarray(contrast) <= 0):
        raise ValueError("contrast must be > 0")
    if np.any(np.asarray(s0) <= 0):
        raise ValueError("s0 must be > 0")
    return (1 + i_tot) / (2 * contrast * s0) + np.square(q_tot)


def sigma_y_from_phase(delta_tau_sq, s0, contrast=1.0):
    """Normalized S_y variance of the coherent/incoherent mixture.

    The scattered fraction 1 - C contributes CSS-like projection noise; the
    coherent part maps the phase variance through the sphere's curvature.
    """
    return 1 - contrast + s0 * contrast**2 * (-np.expm1(-2 * np.asarray(delta_tau_sq)))


def hp_variance(s0, i_tot, q_tot, contrast=1.0):
    """Small-fluctuation (Holstein-Primakoff) limit of the mixture variance."""
    return 1 + 2 * s0 * contrast**2 * np.square(q_tot) + contrast * i_tot


def predict_untwist_variance(
    cfg: CavityConfig,
    q_plus: float,
    q_minus: float,
    sigma_meas_sq: float = SIGMA_MEAS_SQ,
    ideal: bool = False,
) -> VariancePrediction:
    """Model S_y variance after twist q_plus and untwist q_minus.

    The twist is applied at cfg's detuning (mirrored if needed to match the
    sign of q_plus), the untwist at the mirror image with photons scaled to
    |q_minus|. ``ideal`` drops light-induced broadening and scattering.
    """
    s0 = cfg.n_atoms / 2
    q_tot = q_plus + q_minus
    if ideal:
        noise = NoiseBudget(sigma_meas_sq=sigma_meas_sq)
    else:
        noise = NoiseBudget.from_cavity(cfg, q_plus, q_minus, sigma_meas_sq)
    c = noise.contrast_sc
    dtau = phase_variance(s0, noise.i_tot, q_tot, c)
    sig = sigma_y_from_phase(dtau, s0, c) + sigma_meas_sq
    hp = hp_variance(s0, noise.i_tot, q_tot, c) + sigma_meas_sq
    return VariancePrediction(float(dtau), float(sig), float(hp))


def untwist_decomposition(cfg: CavityConfig, q_plus: float,
                          sigma_meas_sq: float = SIGMA_MEAS_SQ) -> dict:
    """Split the matched-untwist excess variance into its model sources.

    ``contrast_net`` is the variance change caused by contrast loss at fixed
    broadening; ``contrast_dilution`` is only the -(1 - C) incoherent term.
    """
    noise = NoiseBudget.from_cavity(cfg, q_plus, -q_plus, sigma_meas_sq)
    s0 = cfg.n_atoms / 2
    c = noise.contrast_sc
    with_c = sigma_y_from_phase(phase_variance(s0, noise.i_tot, 0.0, c), s0, c)
    no_c = sigma_y_from_phase(phase_variance(s0, noise.i_tot, 0.0, 1.0), s0, 1.0)
    return {
        "i_tot": noise.i_tot,
        "contrast": c,
        "resolution": sigma_meas_sq,
        "contrast_net": float(with_c - no_c),
        "contrast_dilution": -(1 - c),
        "sigma_y_sq": float(with_c + sigma_meas_sq),
    }


def apply_overlay(mean_norm: float, sigma_y_sq: float, noise: NoiseBudget):
    """Put contrast dilution, broadening and detection noise on exact moments.

    mean_norm is <S_y>/S0 and sigma_y_sq the normalized variance of the
    noiseless state. Returns the noisy (mean_norm, sigma_y_sq).
    """
    c = noise.contrast_sc
    sig = (1 - c) + c * sigma_y_sq + c * noise.i_tot + noise.sigma_meas_sq
    return c * mean_norm, sig


def projection_noise_slope(eta: float, sigma_d_sq: float) -> float:
    """Slope of var(eta*S_z) against N*eta for a CSS on the equator."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return eta * (1 + sigma_d_sq) / 4


def simulate_projection_noise(eta, sigma_d_sq, n_list, n_shots, seed):
    """Monte Carlo of the cooperativity calibration.

    For each N, CSS shots of S_z are drawn from the exact Dicke distribution,
    Gaussian detection noise of variance sigma_d^2 * N/4 is added, and the
    variance of eta*S_z is fit linearly (and quadratically) against N*eta.
    """
    seqs = np.random.SeedSequence(seed).spawn(len(n_list))
    x, y, w = [], [], []
    for n, ss in zip(n_list, seqs):
        shot_seed, noise_seed = ss.generate_state(2)
        sz = sample_shots(measure_distribution(css_x(n), "z"), n_shots, int(shot_seed))
        rng = np.random.default_rng(int(noise_seed))
        sz = sz + rng.normal(0.0, math.sqrt(sigma_d_sq * n / 4), size=n_shots)
        v = np.var(eta * sz, ddof=1)
        x.append(n * eta)
        y.append(v)
        # sample-variance standard error for the weighted fit
        w.append(1.0 / (projection_noise_slope(eta, sigma_d_sq) * n * eta) ** 2 * (n_shots - 1) / 2)
    x, y, w = map(np.asarray, (x, y, w))

    def wls(design):
        a = design * np.sqrt(w)[:, None]
        b = y * np.sqrt(w)
        coef, *_ = np.linalg.lstsq(a, b, rcond=None)
        cov = np.linalg.inv(a.T @ a)
        return coef, np.sqrt(np.diag(cov))

    lin, lin_se = wls(x[:, None])
    quad, quad_se = wls(np.column_stack([x, x**2]))
    return {
        "n_eta": x,
        "variance": y,
        "slope": float(lin[0]),
        "slope_se": float(lin_se[0]),
        "quad_coef": float(quad[1]),
        "quad_se": float(quad_se[1]),
    }
