import math

import numpy as np
from hypothesis import given, settings, strategies as st

from satinsim import cavity, dicke, wigner
from satinsim.cavity import CavityConfig

EXAMPLES = settings(max_examples=1000)
angles = st.floats(-10.0, 10.0, allow_nan=False)
detunings = st.floats(-1e4, 1e4, allow_nan=False).filter(lambda x: abs(x) > 1e-3)
atom_counts = st.integers(1, 50)


@st.composite
def states(draw, n_max=50):
    n = draw(st.integers(1, n_max))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    return dicke.DickeState(n, a / np.linalg.norm(a))


@EXAMPLES
@given(states(), st.sampled_from("xyz"), angles)
def test_rotation_unitary(psi, axis, angle):
    out = dicke.rotate(psi, dicke.RotationSpec(axis, angle))
    assert abs(out.norm() - 1) < 1e-12


@EXAMPLES
@given(states(), angles)
def test_oat_unitary_and_keeps_sz_distribution(psi, q):
    out = dicke.oat_evolve(psi, q)
    assert abs(out.norm() - 1) < 1e-12
    np.testing.assert_allclose(np.abs(out.amplitudes) ** 2, np.abs(psi.amplitudes) ** 2, atol=1e-14)


@EXAMPLES
@given(states(), angles, angles)
def test_rotation_composition(psi, a, b):
    two = dicke.rotate_y(dicke.rotate_y(psi, a), b)
    one = dicke.rotate_y(psi, a + b)
    np.testing.assert_allclose(two.amplitudes, one.amplitudes, atol=1e-10)


@EXAMPLES
@given(states())
def test_heisenberg_robertson(psi):
    mo = dicke.moments(psi)
    tol = 1e-9 * (1 + psi.n_atoms**2)
    assert mo.var_sy * mo.var_sz >= 0.25 * mo.mean_sx**2 - tol
    assert mo.var_sz * mo.var_sx >= 0.25 * mo.mean_sy**2 - tol
    assert mo.var_sx * mo.var_sy >= 0.25 * mo.mean_sz**2 - tol


@EXAMPLES
@given(st.integers(1, 2000), st.floats(0.1, 100), detunings, st.floats(0, 1e4))
def test_shear_odd_broadening_even(n, eta, x_a, n_tr):
    cfg = CavityConfig(n_atoms=n, eta=eta, n_tr_tot=n_tr).with_laser_detuning(x_a)
    mir = cfg.mirrored()
    q, i = cavity.shearing_strength(cfg), cavity.excess_broadening(cfg)
    assert math.isclose(cavity.shearing_strength(mir), -q, rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(cavity.excess_broadening(mir), i, rel_tol=1e-12, abs_tol=1e-300)
    assert i >= 0


@EXAMPLES
@given(st.integers(1, 2000), detunings, st.floats(1e-3, 1e4), st.floats(0.1, 10))
def test_linear_in_photons(n, x_a, n_tr, scale):
    cfg = CavityConfig(n_atoms=n, n_tr_tot=n_tr).with_laser_detuning(x_a)
    big = CavityConfig(n_atoms=n, n_tr_tot=n_tr * scale).with_laser_detuning(x_a)
    assert math.isclose(cavity.shearing_strength(big), scale * cavity.shearing_strength(cfg), rel_tol=1e-12)
    assert math.isclose(cavity.excess_broadening(big), scale * cavity.excess_broadening(cfg), rel_tol=1e-12)


@EXAMPLES
@given(st.integers(0, 2000), st.floats(0.1, 100), st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
def test_transmission_in_unit_interval(n, eta, x_a, x_c):
    t = cavity.symmetric_transmission(CavityConfig(n_atoms=n, eta=eta, x_a=x_a, x_c=x_c))
    assert 0 < t <= 1


@EXAMPLES
@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_lorentzian_parity(x):
    assert cavity.lorentz_dispersive(-x) == -cavity.lorentz_dispersive(x)
    assert cavity.lorentz_absorptive(-x) == cavity.lorentz_absorptive(x)


@EXAMPLES
@given(states(n_max=7), st.integers(8, 12), st.integers(4, 7))
def test_wigner_real_and_normalized(psi, n_polar, half_az):
    # N < n_azimuth and N < n_polar keep both quadratures exact
    g = wigner.wigner_grid(psi, n_polar, 2 * half_az)
    assert g.imag_residue < 1e-10
    assert abs(g.integrate() - 1) < 1e-6


@EXAMPLES
@given(states(n_max=6), st.integers(0, 15))
def test_wigner_rotation_covariance(psi, j):
    n_p, n_a = 9, 16
    g = wigner.wigner_grid(psi, n_p, n_a).values
    rz = wigner.wigner_grid(dicke.rotate_z(psi, 2 * math.pi * j / n_a), n_p, n_a).values
    np.testing.assert_allclose(rz, np.roll(g, j, axis=1), atol=1e-9)
    ry = wigner.wigner_grid(dicke.rotate_y(psi, math.pi), n_p, n_a).values
    np.testing.assert_allclose(ry, g[::-1][:, (n_a // 2 - np.arange(n_a)) % n_a], atol=1e-9)


ALL_PROPERTIES = [
    test_rotation_unitary, test_oat_unitary_and_keeps_sz_distribution, test_rotation_composition,
    test_heisenberg_robertson, test_shear_odd_broadening_even, test_linear_in_photons,
    test_transmission_in_unit_interval, test_lorentzian_parity, test_wigner_real_and_normalized,
    test_wigner_rotation_covariance,
]
