"""Discrete structure of the alignment operator.

The brute-force oracles below evaluate the literal double sums (and an
explicit DFT derivative for the singular-cell term) independently of the
convolution fast path.
"""

import numpy as np
import pytest

from euler_align.alignment import AlignmentForm
from euler_align.fields import FieldShapeError, Grid
from euler_align.kernel import KernelConfig, build_kernel_table

from conftest import smooth_random_field


def dft_derivative_oracle(grid, f):
    """O(N^2) trig-sum derivative, independent of numpy.fft."""
    N = grid.N
    x = grid.axis_coords()
    out = np.zeros(N)
    for k in range(1, N // 2):
        ck = 2.0 / N * np.sum(f * np.cos(k * x))
        sk = 2.0 / N * np.sum(f * np.sin(k * x))
        out += -k * ck * np.sin(k * x) + k * sk * np.cos(k * x)
    return out


def bilinear_oracle(form, rho, u, phi):
    """Literal pair loop plus the gradient near-field term."""
    g = form.grid
    N = g.N
    h = g.cell_volume
    total = 0.0
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            K = form.kernel.table[(i - j) % N]
            total += 0.5 * h * h * rho[i] * rho[j] * (u[i] - u[j]) * (phi[i] - phi[j]) * K
    du = dft_derivative_oracle(g, u)
    dphi = dft_derivative_oracle(g, phi)
    total += form.kernel.grad_coeff * h * np.sum(rho * rho * du * dphi)
    return total


@pytest.fixture(scope="module")
def fields64(grid64):
    rng = np.random.default_rng(7)
    cases = []
    for _ in range(20):
        rho = 1.5 + 0.5 * np.tanh(smooth_random_field(grid64, rng))
        u = smooth_random_field(grid64, rng)
        phi = smooth_random_field(grid64, rng)
        cases.append((rho, u, phi))
    return cases


def test_commutator_zero_cases(form64, grid64):
    rho = 1.0 + 0.3 * np.cos(grid64.coords()[0])
    const_u = np.full(grid64.shape, 0.7)
    assert np.max(np.abs(form64.commutator(rho, const_u))) < 1e-14
    zero_rho = np.zeros(grid64.shape)
    u = np.sin(grid64.coords()[0])
    assert np.max(np.abs(form64.commutator(zero_rho, u))) < 1e-20


def test_commutator_spectral_cross_validation():
    # rho = 1, u = cos x: commutator = -c(lam, 1) cos x up to quadrature error
    from euler_align.kernel import calibrate_constant
    for lam in (0.25, 0.5, 0.75):
        grid = Grid(1, 256)
        form = AlignmentForm(build_kernel_table(
            KernelConfig(d=1, lam=lam, M=8, N=256), grid), grid)
        x = grid.coords()[0]
        c = calibrate_constant(lam, 1, 256, check_refinement=False)
        L = form.commutator(np.ones(grid.shape), np.cos(x))
        err = np.max(np.abs(L + c * np.cos(x))) / c
        assert err < 0.02


def test_duality_momentum_dissipativity_galilean(form64, grid64, fields64):
    h = grid64.cell_volume
    for rho, u, phi in fields64:
        L = form64.commutator(rho, u)
        lhs = h * np.sum(L * phi)
        rhs = -form64.alignment_bilinear(rho, u, phi)
        scale = max(abs(rhs), 1e-30)
        assert abs(lhs - rhs) / scale < 1e-10
        assert abs(h * np.sum(L)) < 1e-12 * max(1.0, np.max(np.abs(L)))
        pair = h * np.sum(L * u)
        rate = form64.dissipation_rate(rho, u)
        assert rate >= 0.0
        assert abs(pair + rate) / max(rate, 1e-30) < 1e-10
        L_shift = form64.commutator(rho, u + 11.0)
        assert np.max(np.abs(L_shift - L)) < 1e-10 * max(1.0, np.max(np.abs(L)))


def test_bilinear_symmetry_and_bilinearity(form64, grid64, fields64):
    rho, u, phi = fields64[0]
    b1 = form64.alignment_bilinear(rho, u, phi)
    b2 = form64.alignment_bilinear(rho, phi, u)
    assert b1 == pytest.approx(b2, rel=1e-12)
    b3 = form64.alignment_bilinear(rho, 2.0 * u, phi)
    assert b3 == pytest.approx(2.0 * b1, rel=1e-12)
    # phi constant: exact zero of the pair sum, round-off in the fast path
    const = np.full(grid64.shape, 4.2)
    assert abs(form64.alignment_bilinear(rho, u, const)) < 1e-12 * abs(b1)


def test_bilinear_against_brute_force_small():
    # N = 8 hand-checkable instance: oracle equivalence at 1e-12 relative
    grid = Grid(1, 8)
    form = AlignmentForm(build_kernel_table(
        KernelConfig(d=1, lam=0.5, M=2, N=8, near_shells=1), grid), grid)
    rng = np.random.default_rng(11)
    for _ in range(5):
        rho = 1.0 + 0.4 * rng.random(8)
        u = rng.normal(size=8)
        phi = rng.normal(size=8)
        fast = form.alignment_bilinear(rho, u, phi)
        slow = bilinear_oracle(form, rho, u, phi)
        assert fast == pytest.approx(slow, rel=1e-12, abs=1e-13)


def test_two_point_hand_formula(form8, grid8):
    # density and velocity supported on two antipodal nodes: the kernel part
    # collapses to one pair term 1/2 h^2 * 2 (a-b)^2 K[4]
    a, b = 1.3, -0.4
    rho = np.zeros(8)
    rho[0] = rho[4] = 1.0
    u = np.zeros(8)
    u[0], u[4] = a, b
    h = grid8.cell_volume
    K4 = form8.kernel.table[4]
    kernel_part = h * h * (a - b) ** 2 * K4
    du = dft_derivative_oracle(grid8, u)
    grad_part = form8.kernel.grad_coeff * h * np.sum(rho ** 2 * du ** 2)
    assert form8.dissipation_rate(rho, u) == pytest.approx(
        kernel_part + grad_part, rel=1e-12)


def test_relative_dissipation_identities(form64, grid64, fields64):
    rho, u, phi = fields64[1]
    U = phi
    rel = form64.relative_alignment_dissipation(rho, u, U)
    assert rel == pytest.approx(form64.dissipation_rate(rho, u - U), rel=1e-12)
    assert form64.relative_alignment_dissipation(rho, u, u) == 0.0
    const = np.full(grid64.shape, -2.2)
    assert form64.relative_alignment_dissipation(rho, u, const) == pytest.approx(
        form64.dissipation_rate(rho, u), rel=1e-12)


def test_relative_dissipation_brute_force_n8(form8):
    rng = np.random.default_rng(13)
    rho = 1.0 + 0.3 * rng.random(8)
    u = rng.normal(size=8)
    U = rng.normal(size=8)
    fast = form8.relative_alignment_dissipation(rho, u, U)
    slow = bilinear_oracle(form8, rho, u - U, u - U)
    assert fast == pytest.approx(slow, rel=1e-12)


def test_fft_path_matches_direct(form64, fields64):
    rho, u, phi = fields64[2]
    L_fft = form64.commutator(rho, u)
    L_dir = form64.commutator_direct(rho, u)
    assert np.max(np.abs(L_fft - L_dir)) < 1e-10 * np.max(np.abs(L_dir))
    b_fft = form64.alignment_bilinear(rho, u, phi)
    b_dir = form64.alignment_bilinear_direct(rho, u, phi)
    assert b_fft == pytest.approx(b_dir, rel=1e-10)


def test_shape_mismatch_raises(form64):
    with pytest.raises(FieldShapeError):
        form64.commutator(np.ones(32), np.ones(32))
    with pytest.raises(FieldShapeError):
        form64.alignment_bilinear(np.ones(64), np.ones(64), np.ones(32))


def test_2d_duality_and_dissipativity():
    grid = Grid(2, 16)
    form = AlignmentForm(build_kernel_table(
        KernelConfig(d=2, lam=0.5, M=2, N=16, near_shells=2), grid), grid)
    rng = np.random.default_rng(17)
    x, y = grid.coords()
    rho = 1.2 + 0.2 * np.cos(x) * np.sin(y)
    u = np.stack([np.sin(x + y) + 0.3 * np.cos(2 * y), np.cos(x) * np.sin(2 * y)])
    phi = np.stack([np.cos(y), np.sin(x)])
    L = form.commutator(rho, u)
    h = grid.cell_volume
    lhs = h * np.sum(L * phi)
    rhs = -form.alignment_bilinear(rho, u, phi)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    assert form.dissipation_rate(rho, u) >= 0.0
    L_dir = form.commutator_direct(rho, u)
    assert np.max(np.abs(L - L_dir)) < 1e-10 * np.max(np.abs(L_dir))
