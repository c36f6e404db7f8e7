"""Spherical Wigner function of symmetric N-spin states via multipole expansion.

W(theta, phi) = sqrt((2S+1)/4pi) * sum_kq rho_kq Y_kq(theta, phi), with
rho = sum_kq rho_kq T_kq and orthonormal tensor operators T_kq. The k=0 term
makes W integrate to one over the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math
import struct

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .dicke import DickeState

MIN_GRID = 8
BIN_MAGIC = int.from_bytes(b"SATINWG1", "little")
BIN_VERSION = 1
_RESCALE = 1e150


@dataclass(frozen=True)
class SphereGrid:
    n_atoms: int
    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray
    imag_residue: float = 0.0

    @property
    def n_polar(self):
        return len(self.theta)

    @property
    def n_azimuth(self):
        return len(self.phi)

    def integrate(self) -> float:
        """Sphere integral, exact for band limit < n_azimuth and degree < n_polar."""
        w_theta = clenshaw_curtis_weights(self.n_polar)
        return float(w_theta @ self.values.sum(axis=1) * (2 * math.pi / self.n_azimuth))

    def argmax(self):
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.theta[i]), float(self.phi[j])


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Weights for int_0^pi f(theta) sin(theta) dtheta on theta_i = pi*i/(n-1)."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    deg = n - 1
    theta = np.pi * np.arange(n) / deg
    w = np.zeros(n)
    for i, t in enumerate(theta):
        s = 0.0
        for j in range(1, deg // 2 + 1):
            b = 1.0 if 2 * j == deg else 2.0
            s += b * math.cos(2 * j * t) / (4 * j * j - 1)
        c = 1.0 if i in (0, deg) else 2.0
        w[i] = c / deg * (1 - s)
    return w


def sphere_nodes(n_polar: int, n_azimuth: int):
    theta = np.pi * np.arange(n_polar) / (n_polar - 1)
    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    return theta, phi


# -- tensor operators ---------------------------------------------------------

def _raise_coeff(spin, m):
    return np.sqrt(np.maximum(spin * (spin + 1) - m * (m + 1), 0.0))


@lru_cache(maxsize=4)
def tensor_diagonals(n_atoms: int):
    """Orthonormal T_kq for q >= 0, stored by q as matrices v[q][i, k - q].

    Entry i sits at (m + q, m) with m = i - S. Each diagonal block holds the
    eigenvectors of the Casimir superoperator sum_a [S_a, [S_a, .]], whose
    eigenvalue is k(k+1). Phases: T_k0 positive at m = S and
    [S_+, T_kq] = +sqrt(k(k+1) - q(q+1)) T_k,q+1.
    """
    spin = n_atoms / 2
    out = []
    prev = None
    for q in range(n_atoms + 1):
        m = np.arange(n_atoms + 1 - q) - spin
        diag = 2 * spin * (spin + 1) - 2 * m * (m + q)
        off = -_raise_coeff(spin, m[:-1] + q) * _raise_coeff(spin, m[:-1])
        if len(m) == 1:
            vecs = np.ones((1, 1))
        else:
            _, vecs = eigh_tridiagonal(diag, off)
        if q == 0:
            vecs = vecs * np.sign(vecs[-1])
        else:
            pm = np.arange(n_atoms + 2 - q) - spin
            # commutator [S_+, T_k,q-1] restricted to the q-th diagonal
            y = _raise_coeff(spin, pm[:-1] + q - 1)[:, None] * prev[:-1, 1:] \
                - prev[1:, 1:] * _raise_coeff(spin, pm[:-1])[:, None]
            s = np.sign(np.einsum("ik,ik->k", y, vecs))
            vecs = vecs * np.where(s == 0, 1.0, s)
        out.append(vecs)
        prev = vecs
    return tuple(out)


def multipoles(state: DickeState) -> np.ndarray:
    """rho_kq = Tr(T_kq^dag rho) for q >= 0, as an array r[q, k]."""
    n = state.n_atoms
    a = state.amplitudes
    diags = tensor_diagonals(n)
    r = np.zeros((n + 1, n + 1), dtype=complex)
    for q, v in enumerate(diags):
        coh = a[q:] * np.conj(a[: n + 1 - q])
        r[q, q:] = coh @ v
    return r


def tensor_matrix(n_atoms: int, k: int, q: int) -> np.ndarray:
    """Dense T_kq; negative q from T_k,-q = (-1)^q T_kq^dag."""
    if not (0 <= k <= n_atoms and abs(q) <= k):
        raise ValueError(f"need 0 <= k <= N and |q| <= k, got k={k}, q={q}")
    aq = abs(q)
    v = tensor_diagonals(n_atoms)[aq][:, k - aq]
    t = np.zeros((n_atoms + 1, n_atoms + 1))
    idx = np.arange(n_atoms + 1 - aq)
    t[idx + aq, idx] = v
    return t if q >= 0 else (-1) ** aq * t.T


# -- spherical harmonics -----------------------------------------------------

def _legendre_sums(r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """F[t, q] = sum_k r[q, k] * Pbar_k^q(x_t), fully normalized with CS phase.

    Runs the k-recursion for all orders at once; every (q, x) track carries a
    log scale so sin^q(theta) seeds at large q neither underflow nor overflow.
    """
    n = r.shape[0] - 1
    x = np.asarray(x, dtype=float)
    m = np.arange(n + 1)[:, None].astype(float)
    sin_t = np.sqrt(np.maximum(1 - x * x, 0.0))[None, :]
    # log |Pbar_m^m|
    log_seed = 0.5 * (np.log(2 * m + 1) - np.log(4 * np.pi)
                      + gammaln(2 * m + 1) - 2 * m * np.log(2) - 2 * gammaln(m + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_seed = log_seed + np.where(m > 0, m * np.log(sin_t), 0.0)
    sign = np.where(m % 2 == 1, -1.0, 1.0)
    scale = np.where(np.isfinite(log_seed), log_seed, 0.0)
    cur = np.where(np.isfinite(log_seed), sign, 0.0) * np.ones_like(scale)
    prev = np.zeros_like(cur)
    mm = m[:, 0]
    F = np.zeros((len(x), n + 1), dtype=complex)
    for j in range(n + 1):
        k = mm + j
        live = k <= n
        if not live.any():
            break
        kl = k[live].astype(int)
        val = cur[live] * np.exp(scale[live])
        F[:, live] += (r[live.nonzero()[0], kl][:, None] * val).T
        # advance to k + 1
        kn = k + 1
        with np.errstate(divide="ignore", invalid="ignore"):
            a_n = np.sqrt((4 * kn**2 - 1) / (kn**2 - mm**2))
            a_c = np.sqrt((4 * k**2 - 1) / np.maximum(k**2 - mm**2, 1e-300))
        if j == 0:
            nxt = x[None, :] * np.sqrt(2 * mm + 3)[:, None] * cur
        else:
            nxt = a_n[:, None] * (x[None, :] * cur - prev / a_c[:, None])
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if big.any():
            f = np.where(big, np.abs(cur), 1.0)
            cur, prev = cur / f, prev / f
            scale = scale + np.log(f)
    return F


def wigner_grid(state: DickeState, n_polar: int = 64, n_azimuth: int = 128) -> SphereGrid:
    """Wigner function on theta_i = pi*i/(n_polar-1), phi_j = 2pi*j/n_azimuth."""
    if n_polar < MIN_GRID or n_azimuth < MIN_GRID:
        raise ValueError(f"grid must be at least {MIN_GRID}x{MIN_GRID}, got {n_polar}x{n_azimuth}")
    n = state.n_atoms
    theta, phi = sphere_nodes(n_polar, n_azimuth)
    r = multipoles(state)
    Fpos = _legendre_sums(r, np.cos(theta))
    q = np.arange(1, n + 1)
    # rho_k,-q Y_k,-q = conj(rho_kq Y_kq)
    Fneg = np.conj(Fpos[:, 1:])
    E_pos = np.exp(1j * np.outer(np.arange(n + 1), phi))
    E_neg = np.exp(-1j * np.outer(q, phi))
    W = Fpos @ E_pos + Fneg @ E_neg
    W *= math.sqrt((n + 1) / (4 * math.pi))
    resid = float(np.max(np.abs(W.imag)) / max(np.max(np.abs(W.real)), 1e-300))
    if resid > 1e-10:
        raise FloatingPointError(f"Wigner imaginary residue {resid:.3e}")
    return SphereGrid(n, theta, phi, np.ascontiguousarray(W.real), resid)


def wigner_point_bruteforce(state: DickeState, theta: float, phi: float, kernel=None) -> float:
    """W at one point as <psi|R Delta(z) R^dag|psi>, Delta diagonal. For checks."""
    from .dicke import rotate_y, rotate_z

    if kernel is None:
        kernel = np.diag(sum(
            math.sqrt((2 * k + 1) / (4 * math.pi)) * tensor_matrix(state.n_atoms, k, 0)
            for k in range(state.n_atoms + 1)
        ))
    back = rotate_y(rotate_z(state, -phi), -theta).amplitudes
    return float(math.sqrt((state.n_atoms + 1) / (4 * math.pi)) * np.sum(kernel * np.abs(back) ** 2))


# -- export -------------------------------------------------------------------

def write_csv(grid: SphereGrid, path) -> None:
    tt, pp = np.meshgrid(grid.theta, grid.phi, indexing="ij")
    data = np.column_stack([tt.ravel(), pp.ravel(), grid.values.ravel()])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header="theta_rad,phi_rad,W_per_sr", comments="")


def write_binary(grid: SphereGrid, path) -> None:
    """Little-endian: 8 uint64 header words, then float64 values row-major (theta, phi)."""
    header = struct.pack("<8Q", BIN_MAGIC, BIN_VERSION, grid.n_atoms, grid.n_polar, grid.n_azimuth, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_binary(path) -> SphereGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 64:
        raise ValueError("file too short for header")
    magic, version, n, n_polar, n_azimuth, *_ = struct.unpack("<8Q", raw[:64])
    if magic != BIN_MAGIC or version != BIN_VERSION:
        raise ValueError("not a Wigner grid file or unsupported version")
    vals = np.frombuffer(raw[64:], dtype="<f8")
    if vals.size != n_polar * n_azimuth:
        raise ValueError("payload size does not match header")
    theta, phi = sphere_nodes(n_polar, n_azimuth)
    return SphereGrid(int(n), theta, phi, vals.reshape(n_polar, n_azimuth).copy())
