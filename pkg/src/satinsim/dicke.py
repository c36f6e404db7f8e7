"""Exact collective-spin states in the symmetric (Dicke) subspace.

A state of N spin-1/2 particles that is symmetric under exchange lives in the
(N+1)-dimensional spin-S representation, S = N/2. Amplitudes are stored over
the S_z eigenbasis in ascending order, index k <-> m = k - S.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

AXES = ("x", "y", "z")
NORM_TOL = 1e-12


@dataclass(frozen=True)
class DickeState:
    n_atoms: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if int(self.n_atoms) < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_atoms + 1,):
            raise ValueError(
                f"expected {self.n_atoms + 1} amplitudes, got shape {amps.shape}"
            )
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def spin(self) -> float:
        return self.n_atoms / 2

    @property
    def m(self) -> np.ndarray:
        return m_values(self.n_atoms)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def overlap(self, other: "DickeState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class SpinMoments:
    mean_sx: float
    mean_sy: float
    mean_sz: float
    var_sx: float
    var_sy: float
    var_sz: float
    contrast: float
    s0: float

    @property
    def sigma_y_sq(self) -> float:
        """S_y variance normalized to the CSS projection noise S0/2."""
        return 2.0 * self.var_sy / self.s0


@dataclass(frozen=True)
class RotationSpec:
    axis: str
    angle: float

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not math.isfinite(self.angle):
            raise ValueError(f"rotation angle must be finite, got {self.angle}")


def m_values(n_atoms: int) -> np.ndarray:
    return np.arange(n_atoms + 1) - n_atoms / 2


def log_binomial(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def make_css(n_atoms: int, polar: float, azimuth: float) -> DickeState:
    """Coherent spin state pointing along (polar, azimuth) on the Bloch sphere.

    polar=0 is the +z pole, (pi/2, 0) points along +x.
    """
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    if not (math.isfinite(polar) and math.isfinite(azimuth)):
        raise ValueError("CSS angles must be finite")
    k = np.arange(n_atoms + 1)
    c, s = math.cos(polar / 2), math.sin(polar / 2)
    # product of (s|dn> + c|up>) per atom, k = number of up spins, then R_z(az)
    log_mag = 0.5 * log_binomial(n_atoms, k)
    for power, amp in ((k, c), (n_atoms - k, s)):
        if amp == 0.0:
            log_mag = np.where(power > 0, -np.inf, log_mag)
        else:
            log_mag = log_mag + power * math.log(abs(amp))
    mag = np.exp(log_mag)
    sign = np.where((c < 0) & (k % 2 == 1), -1.0, 1.0)
    sign = sign * np.where((s < 0) & ((n_atoms - k) % 2 == 1), -1.0, 1.0)
    m = k - n_atoms / 2
    amps = sign * mag * np.exp(-1j * azimuth * m)
    return DickeState(n_atoms, amps / np.linalg.norm(amps))


def css_x(n_atoms: int) -> DickeState:
    return make_css(n_atoms, math.pi / 2, 0.0)


@lru_cache(maxsize=64)
def _wigner_d_cached(n_atoms: int, beta: float) -> np.ndarray:
    d = _wigner_d_recursive(n_atoms, beta)
    d.setflags(write=False)
    return d


def _wigner_d_recursive(n_atoms: int, beta: float) -> np.ndarray:
    # Builds d^{j} from d^{j-1/2} by coupling one more spin-1/2:
    #   d^j_{m'm} = sum_{s',s} w(m',s') w(m,s) d^{j-1/2}_{m'-s', m-s} d^{1/2}_{s's}
    # Each entry is a weighted sum of bounded entries, so nothing overflows.
    p, q = math.cos(beta / 2), math.sin(beta / 2)
    d = np.ones((1, 1))
    for two_j in range(1, n_atoms + 1):
        j = two_j / 2
        m = np.arange(two_j + 1) - j
        w_up = np.sqrt((j + m) / two_j)[1:]
        w_dn = np.sqrt((j - m) / two_j)[:-1]
        new = np.zeros((two_j + 1, two_j + 1))
        new[1:, 1:] += p * np.outer(w_up, w_up) * d
        new[1:, :-1] -= q * np.outer(w_up, w_dn) * d
        new[:-1, 1:] += q * np.outer(w_dn, w_up) * d
        new[:-1, :-1] += p * np.outer(w_dn, w_dn) * d
        d = new
    return d


def wigner_small_d(n_atoms: int, beta: float) -> np.ndarray:
    """Matrix d^S_{m'm}(beta) = <S m'| exp(-i beta S_y) |S m>, ascending m."""
    return _wigner_d_cached(int(n_atoms), float(beta))


def wigner_small_d_factorial(n_atoms: int, beta: float) -> np.ndarray:
    """Explicit factorial-sum formula. Overflows past N ~ 170; tests only."""
    j = n_atoms / 2
    ms = m_values(n_atoms)
    c, s = math.cos(beta / 2), math.sin(beta / 2)
    d = np.zeros((n_atoms + 1, n_atoms + 1))
    for a, mp in enumerate(ms):
        for b, m in enumerate(ms):
            pref = math.sqrt(
                math.factorial(round(j + mp))
                * math.factorial(round(j - mp))
                * math.factorial(round(j + m))
                * math.factorial(round(j - m))
            )
            total = 0.0
            for kk in range(0, n_atoms + 1):
                e1 = round(j + m - kk)
                e2 = kk
                e3 = round(j - kk - mp)
                e4 = round(kk - m + mp)
                if min(e1, e2, e3, e4) < 0:
                    continue
                den = (
                    math.factorial(e1)
                    * math.factorial(e2)
                    * math.factorial(e3)
                    * math.factorial(e4)
                )
                total += (
                    (-1) ** e4
                    * c ** round(2 * j + m - mp - 2 * kk)
                    * s ** round(mp - m + 2 * kk)
                    / den
                )
            d[a, b] = pref * total
    return d


def _check_angle(angle):
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle}")


def rotate_z(state: DickeState, angle: float) -> DickeState:
    _check_angle(angle)
    return DickeState(state.n_atoms, state.amplitudes * np.exp(-1j * angle * state.m))


@lru_cache(maxsize=32)
def _sy_eigensystem(n_atoms: int):
    # With D = diag(i^k), D^dag S_y D is a real symmetric tridiagonal
    # matrix; its eigenvalues are exactly m = -S..S.
    c = _ladder_coeffs(n_atoms)
    evals, vecs = eigh_tridiagonal(np.zeros(n_atoms + 1), -0.5 * c)
    phase = 1j ** np.arange(n_atoms + 1)
    evals = np.round(2 * evals) / 2
    vecs.setflags(write=False)
    return evals, vecs, phase


def rotate_y(state: DickeState, angle: float) -> DickeState:
    _check_angle(angle)
    if angle == 0.0:
        return state
    evals, vecs, phase = _sy_eigensystem(state.n_atoms)
    # exp(-i a S_y) = D V exp(-i a lambda) V^T D^dag
    coeffs = vecs.T @ (phase.conj() * state.amplitudes)
    out = phase * (vecs @ (np.exp(-1j * angle * evals) * coeffs))
    return DickeState(state.n_atoms, out)


def rotate_x(state: DickeState, angle: float) -> DickeState:
    _check_angle(angle)
    # R_x(a) = R_z(-pi/2) R_y(a) R_z(pi/2)
    psi = rotate_z(state, math.pi / 2)
    psi = rotate_y(psi, angle)
    return rotate_z(psi, -math.pi / 2)


def rotate(state: DickeState, spec: RotationSpec) -> DickeState:
    """Active rotation exp(-i angle S_axis)."""
    if spec.axis == "z":
        return rotate_z(state, spec.angle)
    if spec.axis == "y":
        return rotate_y(state, spec.angle)
    return rotate_x(state, spec.angle)


def oat_evolve(state: DickeState, q_tilde: float) -> DickeState:
    """Apply exp(-i (q_tilde / sqrt(N)) S_z^2). Negative q_tilde reverses time."""
    if not math.isfinite(q_tilde):
        raise ValueError(f"q_tilde must be finite, got {q_tilde}")
    mu = q_tilde / math.sqrt(state.n_atoms)
    return DickeState(state.n_atoms, state.amplitudes * np.exp(-1j * mu * state.m**2))


def _ladder_coeffs(n_atoms):
    # S_+ |m> = c_m |m+1>, c_m = sqrt(S(S+1) - m(m+1)), for m = -S..S-1
    s = n_atoms / 2
    m = m_values(n_atoms)[:-1]
    return np.sqrt(s * (s + 1) - m * (m + 1))


def apply_splus(state_amps: np.ndarray, n_atoms: int) -> np.ndarray:
    c = _ladder_coeffs(n_atoms)
    out = np.zeros_like(state_amps, dtype=complex)
    out[1:] = c * state_amps[:-1]
    return out


def apply_sminus(state_amps: np.ndarray, n_atoms: int) -> np.ndarray:
    c = _ladder_coeffs(n_atoms)
    out = np.zeros_like(state_amps, dtype=complex)
    out[:-1] = c * state_amps[1:]
    return out


def apply_spin(state_amps: np.ndarray, n_atoms: int, axis: str) -> np.ndarray:
    """S_axis acting on a raw amplitude vector."""
    if axis == "z":
        return m_values(n_atoms) * state_amps
    up = apply_splus(state_amps, n_atoms)
    dn = apply_sminus(state_amps, n_atoms)
    if axis == "x":
        return 0.5 * (up + dn)
    if axis == "y":
        return -0.5j * (up - dn)
    raise ValueError(f"axis must be one of {AXES}, got {axis!r}")


def moments(state: DickeState) -> SpinMoments:
    """First and second moments of S_x, S_y, S_z."""
    a = state.amplitudes
    n = state.n_atoms
    means, variances = [], []
    for axis in AXES:
        v = apply_spin(a, n, axis)
        mean = np.vdot(a, v).real
        second = np.vdot(v, v).real  # <S^2> = ||S psi||^2 for Hermitian S
        means.append(float(mean))
        variances.append(float(max(second - mean**2, 0.0)))
    s0 = n / 2
    contrast = float(np.linalg.norm(means) / s0)
    return SpinMoments(*means, *variances, contrast=min(contrast, 1.0), s0=s0)


def _rotation_onto_z(axis: str):
    # rotation that maps the measurement axis onto +z
    if axis == "z":
        return None
    if axis == "x":
        return RotationSpec("y", -math.pi / 2)
    return RotationSpec("x", math.pi / 2)


def measure_distribution(state: DickeState, axis: str) -> np.ndarray:
    """Outcome probabilities of S_axis over m = -S..S."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    rot = _rotation_onto_z(axis)
    psi = state if rot is None else rotate(state, rot)
    p = np.abs(psi.amplitudes) ** 2
    return p / p.sum()


def sample_shots(dist: np.ndarray, n_shots: int, seed: int) -> np.ndarray:
    """Draw n_shots outcomes m from a distribution over m = -S..S."""
    p = np.asarray(dist, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("distribution must be a 1-D vector of length N+1 >= 2")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("distribution entries must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"distribution must sum to 1, got {p.sum():.12g}")
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    rng = np.random.default_rng(seed)
    n_atoms = p.size - 1
    idx = rng.choice(p.size, size=n_shots, p=p / p.sum())
    return idx - n_atoms / 2
