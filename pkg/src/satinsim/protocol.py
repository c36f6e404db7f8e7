"""SATIN sequences on exact Dicke states, amplification and metrological gain."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Optional, Sequence, Union

import numpy as np

from . import dicke
from .analysis import bootstrap_ci
from .cavity import CavityConfig, optimize_detuning, NoSolutionError
from .noise import (
    NoiseBudget,
    SIGMA_MEAS_SQ,
    apply_overlay,
    phase_variance,
    sigma_y_from_phase,
)

# light shift of the zero-order (S_z-linear) term, radians per unit Q_tilde
LIGHTSHIFT_PER_Q = 8 * math.pi


# -- sequence steps ---------------------------------------------------------

@dataclass(frozen=True)
class Rotate:
    axis: str
    angle: float


@dataclass(frozen=True)
class Twist:
    q_tilde: float


@dataclass(frozen=True)
class ImprintPhase:
    """Signal phase: a rotation about z."""
    phi: float


@dataclass(frozen=True)
class LightShift:
    """Global z-rotation that accompanies a twist of strength q_tilde."""
    q_tilde: float


@dataclass(frozen=True)
class EchoPi:
    axis: str = "x"


@dataclass(frozen=True)
class Measure:
    axis: str = "y"


Step = Union[Rotate, Twist, ImprintPhase, LightShift, EchoPi, Measure]


@dataclass(frozen=True)
class ProtocolSequence:
    steps: tuple

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps or not isinstance(steps[-1], Measure):
            raise ValueError("sequence must end with a Measure step")
        if sum(isinstance(s, Measure) for s in steps) != 1:
            raise ValueError("sequence must contain exactly one Measure step")
        for s in steps:
            if not isinstance(s, (Rotate, Twist, ImprintPhase, LightShift, EchoPi, Measure)):
                raise ValueError(f"unknown step {s!r}")
            for val in vars(s).values():
                if isinstance(val, float) and not math.isfinite(val):
                    raise ValueError(f"non-finite parameter in {s!r}")
            if isinstance(s, (Rotate, EchoPi, Measure)) and s.axis not in dicke.AXES:
                raise ValueError(f"bad axis in {s!r}")

    @property
    def measure_axis(self) -> str:
        return self.steps[-1].axis


@dataclass
class RunResult:
    mean_sy_norm: float
    sigma_y_sq: float
    amplification_m: Optional[float] = None
    gain_db: Optional[float] = None
    shots: Optional[np.ndarray] = None
    ci: dict = field(default_factory=dict)
    moments: Optional[dicke.SpinMoments] = None
    state: Optional[dicke.DickeState] = None

    def __post_init__(self):
        if self.amplification_m is not None and self.gain_db is None and self.sigma_y_sq > 0:
            self.gain_db = gain(self.amplification_m, self.sigma_y_sq)


@dataclass
class ScalingResult:
    atom_numbers: list
    gains_db: list
    fit_slope: float
    hl_distance_db: list
    q_opt: list = field(default_factory=list)


def evolve(seq: ProtocolSequence, n_atoms: int) -> dicke.DickeState:
    """Apply every step but the final measurement to CSS_x."""
    psi = dicke.css_x(n_atoms)
    for step in seq.steps[:-1]:
        if isinstance(step, Rotate):
            psi = dicke.rotate(psi, dicke.RotationSpec(step.axis, step.angle))
        elif isinstance(step, Twist):
            psi = dicke.oat_evolve(psi, step.q_tilde)
        elif isinstance(step, ImprintPhase):
            psi = dicke.rotate_z(psi, step.phi)
        elif isinstance(step, LightShift):
            psi = dicke.rotate_z(psi, LIGHTSHIFT_PER_Q * step.q_tilde)
        elif isinstance(step, EchoPi):
            psi = dicke.rotate(psi, dicke.RotationSpec(step.axis, math.pi))
    return psi


def _axis_moments(mom: dicke.SpinMoments, axis: str):
    return getattr(mom, f"mean_s{axis}"), getattr(mom, f"var_s{axis}")


def run_sequence(
    seq: ProtocolSequence,
    n_atoms: int,
    noise: Optional[NoiseBudget] = None,
    seed: Optional[int] = None,
    n_shots: int = 150,
    n_resamples: int = 1000,
) -> RunResult:
    """Run seq on an exact state; optionally overlay noise and sample shots.

    mean_sy_norm and sigma_y_sq refer to the measured axis (y for SATIN).
    """
    if not isinstance(seq, ProtocolSequence):
        raise ValueError("seq must be a ProtocolSequence")
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    psi = evolve(seq, n_atoms)
    axis = seq.measure_axis
    mom = dicke.moments(psi)
    s0 = n_atoms / 2
    mean, var = _axis_moments(mom, axis)
    mean_norm, sig = mean / s0, 2 * var / s0
    exact_sig = sig
    if noise is not None:
        mean_norm, sig = apply_overlay(mean_norm, sig, noise)
    result = RunResult(mean_sy_norm=float(mean_norm), sigma_y_sq=float(sig), moments=mom, state=psi)
    if seed is not None:
        ss = np.random.SeedSequence(seed)
        shot_seed, noise_seed, boot_seed = (int(x) for x in ss.generate_state(3))
        outcomes = dicke.sample_shots(dicke.measure_distribution(psi, axis), n_shots, shot_seed)
        if noise is not None:
            c = noise.contrast_sc
            extra = (s0 / 2) * (sig - c**2 * exact_sig)
            rng = np.random.default_rng(noise_seed)
            outcomes = c * outcomes + rng.normal(0.0, math.sqrt(max(extra, 0.0)), n_shots)
        result.shots = np.asarray(outcomes, dtype=float)
        norm = result.shots / s0
        result.ci = {
            "mean_sy_norm": bootstrap_ci(norm, "mean", n_resamples, boot_seed),
            "sigma_y_sq": bootstrap_ci(result.shots * math.sqrt(2 / s0), "variance", n_resamples, boot_seed),
        }
    return result


# -- amplification ------------------------------------------------------------

def amplification_analytic(q_tilde, n_atoms, contrast=1.0):
    """Large-N amplification C * N * sin(mu) * cos(mu)^N with mu = Q/sqrt(N)."""
    if np.any(np.asarray(n_atoms) < 1):
        raise ValueError("n_atoms must be >= 1")
    mu = np.asarray(q_tilde, dtype=float) / np.sqrt(n_atoms)
    c = np.cos(mu)
    with np.errstate(divide="ignore"):
        cos_pow = np.exp(n_atoms * np.log(np.abs(c))) * np.where(c < 0, (-1.0) ** n_atoms, 1.0)
    out = contrast * n_atoms * np.sin(mu) * cos_pow
    return out if np.ndim(out) else float(out)


def gain(m, sigma_y_sq):
    """Metrological gain over the SQL in dB, 10 log10(m^2 / sigma_y^2)."""
    if np.any(np.asarray(sigma_y_sq) <= 0):
        raise ValueError("sigma_y_sq must be > 0")
    out = 10 * np.log10(np.square(m) / np.asarray(sigma_y_sq))
    return out if np.ndim(out) else float(out)


def satin_sequence(q_plus: float, phi: float, q_minus: Optional[float] = None,
                   measure: str = "y") -> ProtocolSequence:
    q_minus = -q_plus if q_minus is None else q_minus
    return ProtocolSequence((Twist(q_plus), Rotate("y", phi), Twist(q_minus), Measure(measure)))


def css_sequence(phi: float) -> ProtocolSequence:
    """SQL reference: displace a CSS and read the displaced quadrature."""
    return ProtocolSequence((Rotate("y", phi), Measure("z")))


def fit_slope(phis, signal) -> float:
    """Least-squares slope at phi=0 of an odd response, b*phi + c*phi^3 + d*phi^5."""
    phis = np.asarray(phis, dtype=float)
    design = np.column_stack([phis, phis**3, phis**5])
    coef, *_ = np.linalg.lstsq(design, np.asarray(signal, dtype=float), rcond=None)
    return float(coef[0])


def fit_window(m_guess: float, n_points: int = 6) -> np.ndarray:
    phi_max = 0.05 / max(abs(m_guess), 1.0)
    return phi_max * np.arange(1, n_points + 1) / n_points


def signal_curve(build, n_atoms: int, phis) -> np.ndarray:
    """<S_axis>/S0 of build(phi) for each phi, noiseless."""
    out = []
    for phi in phis:
        seq = build(phi)
        psi = evolve(seq, n_atoms)
        out.append(_axis_moments(dicke.moments(psi), seq.measure_axis)[0] / (n_atoms / 2))
    return np.asarray(out)


def amplification_exact(q_plus: float, n_atoms: int, q_minus: Optional[float] = None,
                        theta: float = 0.0) -> float:
    """Small-signal amplification from the exact simulation.

    The slope of <S_y>/S0 against phi over [0, 0.05/m_guess]. With theta != 0
    the signal is read along cos(theta) S_y + sin(theta) S_z instead.
    """
    phis = fit_window(amplification_analytic(q_plus, n_atoms))
    sig = []
    for phi in phis:
        mom = dicke.moments(evolve(satin_sequence(q_plus, phi, q_minus), n_atoms))
        sig.append((math.cos(theta) * mom.mean_sy + math.sin(theta) * mom.mean_sz) / (n_atoms / 2))
    return abs(fit_slope(phis, sig))


def css_reference(n_atoms: int) -> RunResult:
    """SQL baseline: rotate a CSS and read the displaced quadrature."""
    phis = fit_window(1.0)
    m = abs(fit_slope(phis, signal_curve(css_sequence, n_atoms, phis)))
    res = run_sequence(css_sequence(0.0), n_atoms)
    res.amplification_m = m
    res.gain_db = gain(m, res.sigma_y_sq)
    return res


def optimal_readout_angle(m: float) -> float:
    """Readout direction tilt from S_y that maximizes small-Q signal.

    Negative because R_y(+phi) carries +x toward -z in the active convention.
    """
    return -math.atan(1 / m) if m != 0 else -math.pi / 2


def ideal_gain_db(q_plus: float, n_atoms: int) -> float:
    """Noiseless exact gain; the untwisted variance is the CSS value."""
    m = amplification_exact(q_plus, n_atoms)
    sig = dicke.moments(evolve(satin_sequence(q_plus, 0.0), n_atoms)).sigma_y_sq
    return gain(m, sig)


# -- cavity noise model -----------------------------------------------------------

@dataclass
class ModelPoint:
    q_plus: float
    gain_db: float
    m: float
    m_ideal: float
    sigma_y_sq: float
    contrast: float
    i_tot: float
    cavity: CavityConfig


def model_point(cfg_base: CavityConfig, q_plus: float,
                sigma_meas_sq: float = SIGMA_MEAS_SQ) -> ModelPoint:
    """Forward model at optimized detuning: algebraic noise on analytic m."""
    cfg = optimize_detuning(cfg_base, q_plus, sigma_meas_sq)
    noise = NoiseBudget.from_cavity(cfg, q_plus, -q_plus, sigma_meas_sq)
    n = cfg.n_atoms
    c = noise.contrast_sc
    m_ideal = amplification_analytic(q_plus, n)
    dtau = phase_variance(n / 2, noise.i_tot, 0.0, c)
    sig = float(sigma_y_from_phase(dtau, n / 2, c)) + sigma_meas_sq
    m = c * m_ideal
    return ModelPoint(q_plus, gain(m, sig), m, m_ideal, sig, c, noise.i_tot, cfg)


def golden_argmax(f, lo, hi, tol=1e-4):
    from .cavity import golden_max

    return golden_max(f, lo, hi, tol=tol)


def optimize_model_q(cfg_base: CavityConfig, sigma_meas_sq: float = SIGMA_MEAS_SQ,
                     q_lo: float = 0.2, q_hi: float = 1.6) -> ModelPoint:
    grid = np.linspace(q_lo, q_hi, 15)
    vals = [model_point(cfg_base, q, sigma_meas_sq).gain_db for q in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    q, _ = golden_argmax(lambda q: model_point(cfg_base, q, sigma_meas_sq).gain_db, lo, hi)
    return model_point(cfg_base, q, sigma_meas_sq)


def optimize_ideal_q(n_atoms: int, q_lo: float = 0.5, q_hi: float = 1.5):
    q, g = golden_argmax(lambda q: ideal_gain_db(q, n_atoms), q_lo, q_hi)
    return q, g


def hl_budget(cfg_base: CavityConfig, sigma_meas_sq: float = SIGMA_MEAS_SQ) -> dict:
    """Distance from the Heisenberg limit split into its sources, in dB.

    ideal: best noiseless SATIN; q_shift: running at the noisy optimum Q
    instead of the ideal one; contrast: signal loss C^2; non_unitary: the
    untwisted variance (broadening, resolution, mixture).
    """
    n = cfg_base.n_atoms
    point = optimize_model_q(cfg_base, sigma_meas_sq)
    q_id, _ = golden_argmax(lambda q: float(gain(amplification_analytic(q, n), 1.0)), 0.3, 2.0)
    ideal = 10 * math.log10(n) - gain(amplification_analytic(q_id, n), 1.0)
    q_shift = gain(amplification_analytic(q_id, n), 1.0) - gain(point.m_ideal, 1.0)
    contrast = -20 * math.log10(point.contrast)
    non_unitary = 10 * math.log10(point.sigma_y_sq)
    return {
        "n_atoms": n,
        "q_opt": point.q_plus,
        "gain_db": point.gain_db,
        "hl_distance_db": 10 * math.log10(n) - point.gain_db,
        "ideal": ideal,
        "q_shift": q_shift,
        "contrast": contrast,
        "non_unitary": non_unitary,
    }


def _scaling_fit(ns, gains):
    x = 10 * np.log10(np.asarray(ns, dtype=float))
    slope, _ = np.polyfit(x, np.asarray(gains), 1)
    return float(slope), list(x - np.asarray(gains))


def heisenberg_sweep(n_list: Sequence[int], noise_source="ideal",
                     sigma_meas_sq: float = SIGMA_MEAS_SQ, map_fn=map) -> ScalingResult:
    """Optimized gain against atom number and its log-log slope.

    noise_source is "ideal" (exact noiseless simulation) or a CavityConfig
    whose n_atoms is replaced per point (cavity noise model, optimized detuning).
    map_fn lets a caller fan the per-N tasks out to a pool.
    """
    ns = [int(n) for n in n_list]
    if any(n < 10 for n in ns):
        raise ValueError("all atom numbers must be >= 10")
    if isinstance(noise_source, str) and noise_source == "ideal":
        results = list(map_fn(optimize_ideal_q, ns))
        qs = [r[0] for r in results]
        gains = [r[1] for r in results]
    elif isinstance(noise_source, CavityConfig):
        from dataclasses import replace

        cfgs = [replace(noise_source, n_atoms=n) for n in ns]
        points = list(map_fn(_model_task, [(c, sigma_meas_sq) for c in cfgs]))
        qs = [p.q_plus for p in points]
        gains = [p.gain_db for p in points]
    else:
        raise ValueError(f"unknown noise source {noise_source!r}")
    slope, dist = _scaling_fit(ns, gains)
    return ScalingResult(ns, [float(g) for g in gains], slope, [float(d) for d in dist], qs)


def _model_task(args):
    cfg, sigma_meas_sq = args
    return optimize_model_q(cfg, sigma_meas_sq)


# -- Ramsey spin echo -------------------------------------------------------

def ramsey_sequence(q_tilde: float, phase: float, static_phase: float = 0.0,
                    measure: str = "y") -> ProtocolSequence:
    """Spin-echo SATIN Ramsey interferometer.

    The ac signal changes sign with the echo pulse so its two halves add; a
    static z-phase enters both halves with the same sign and cancels.
    """
    return ProtocolSequence((
        Twist(q_tilde),
        Rotate("x", math.pi / 2),
        ImprintPhase(phase / 2 + static_phase),
        EchoPi("x"),
        ImprintPhase(-phase / 2 + static_phase),
        Rotate("x", -math.pi / 2),
        Twist(-q_tilde),
        Measure(measure),
    ))


def ramsey_echo_run(q_tilde: float, phase: float, n_atoms: int,
                    noise: Optional[NoiseBudget], seed: Optional[int],
                    n_shots: int = 150, static_phase: float = 0.0) -> RunResult:
    """Run the echo Ramsey sequence; m is the phase-slope of the read-out.

    With a twist the signal is read in S_y after the untwist. Without one the
    sequence is a plain CSS Ramsey whose signal sits in S_z, so that is read.
    """
    axis = "y" if q_tilde else "z"
    res = run_sequence(ramsey_sequence(q_tilde, phase, static_phase, axis), n_atoms, noise, seed, n_shots)
    phis = fit_window(amplification_analytic(q_tilde, n_atoms))
    sig = signal_curve(lambda p: ramsey_sequence(q_tilde, p, static_phase, axis), n_atoms, phis)
    m = abs(fit_slope(phis, sig))
    base = run_sequence(ramsey_sequence(q_tilde, 0.0, static_phase, axis), n_atoms, noise)
    if noise is not None:
        m *= noise.contrast_sc
    res.amplification_m = m
    res.gain_db = gain(m, base.sigma_y_sq)
    return res


@dataclass
class LightShiftCheck:
    reference: RunResult
    echo_off: RunResult
    echo_on: RunResult


def lightshift_echo_check(q_tilde: float, n_atoms: int) -> LightShiftCheck:
    """Twist with its light shift, with and without a splitting echo pulse."""
    if not math.isfinite(q_tilde):
        raise ValueError("q_tilde must be finite")
    half = q_tilde / 2
    ref = ProtocolSequence((Twist(q_tilde), Measure("y")))
    off = ProtocolSequence((Twist(q_tilde), LightShift(q_tilde), Measure("y")))
    on = ProtocolSequence((
        Twist(half), LightShift(half), EchoPi("x"),
        Twist(half), LightShift(half), EchoPi("x"),
        Measure("y"),
    ))
    return LightShiftCheck(*(run_sequence(s, n_atoms) for s in (ref, off, on)))


def phase_record(result: RunResult, n_atoms: int) -> np.ndarray:
    """Per-shot phase estimates S_y / (m S0) from a run with shots."""
    if result.shots is None or not result.amplification_m:
        raise ValueError("run has no shots or no amplification")
    return result.shots / (result.amplification_m * n_atoms / 2)
