"""Periodized singular alignment kernel on the torus.

The kernel is the lattice periodization of |x|^(-d-2*lam),

    kappa(x) = sum_{n in Z^d} |x - 2 pi n|^(-d-2*lam),   0 < lam < 1,

and enters every nonlocal form through a translation-invariant table of
quadrature weights indexed by wrapped grid offset.  Three ingredients make
the offset table an accurate quadrature of kappa while keeping every entry
nonnegative:

* image sums:  the |n| <= M images are summed directly; for d = 1 the
  discarded far images have the exact Hurwitz-zeta closed form
      sum_{n>M} (2 pi n +- z)^(-s) = (2 pi)^(-s) zeta(s, M+1 +- z/(2 pi)),
  so the table carries the full periodization to machine precision.  A
  certified bound on the far sum (the value the table would lose if the
  completion were dropped) is attached as ``tail_bound``.

* near cells:  plain midpoint weights misrepresent the |z|^(-d-2*lam) cusp
  over the first few cells.  For d = 1 the principal-kernel mass of cells
  1..near_shells is redistributed onto neighboring integer shells so that
  the cell moments  int z^2 kappa dz  and  int z^4 kappa dz  are preserved
  exactly; the redistribution weights are nonnegative by construction.
  For d = 2 the near weights are exact cell averages of the principal
  kernel (fixed-order Gauss product rule per cell).

* singular cell:  the cell containing the singularity is excluded from the
  table (diagonal entry 0) and its contribution for locally smooth fields,
      (1/2) int_cell |f(x) - f(y)|^2 kappa ~ (A2 / 2d) |grad f|^2,
      A2 = int_cell |z|^2 |z|^(-d-2*lam) dz,
  is restored through the gradient coefficient ``grad_coeff`` = A2/(2d)
  that every bilinear form applies to spectral gradients.  This keeps the
  quadrature exact for linear fields near the singularity and positive for
  all fields.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import roots_legendre, zeta

from .fields import TWO_PI, Grid

#: shells receiving redistributed near-cell mass (d = 1) / exact cell
#: averages (d = 2); chosen so the quadrature-vs-spectral seminorm error
#: stays ~1% up to mode N/4
DEFAULT_NEAR_SHELLS = 6


class KernelError(ValueError):
    pass


class SingularPointError(KernelError):
    """Offset congruent to 0 on the 2 pi lattice."""


class CalibrationError(KernelError):
    """Calibration constant failed to converge under refinement."""


@dataclass(frozen=True)
class KernelConfig:
    """Kernel parameters: dimension, exponent, image truncation, grid size."""

    d: int
    lam: float
    M: int = 8
    N: int = 256
    near_shells: int = DEFAULT_NEAR_SHELLS

    def __post_init__(self):
        if self.d not in (1, 2):
            raise KernelError(f"d must be 1 or 2, got {self.d}")
        if not 0.0 < self.lam < 1.0:
            raise KernelError(f"lam must lie in (0, 1), got {self.lam}")
        if self.M < 1:
            raise KernelError(f"M must be >= 1, got {self.M}")
        if self.N < 8 or self.N % 2:
            raise KernelError(f"N must be even and >= 8, got {self.N}")
        if self.near_shells < 1:
            raise KernelError("near_shells must be >= 1")

    @property
    def s(self):
        """Kernel exponent d + 2*lam."""
        return self.d + 2.0 * self.lam


def image_lattice(d, M):
    """All n in Z^d with Euclidean |n| <= M, as an (n_images, d) array."""
    r = np.arange(-M, M + 1)
    if d == 1:
        pts = r[:, None]
    else:
        pts = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    keep = np.sum(pts * pts, axis=1) <= M * M
    return pts[keep]


def lattice_kernel_value(offset, cfg):
    """Truncated lattice sum  sum_{|n| <= M} |offset - 2 pi n|^(-d-2*lam).

    offset is a point of (-2pi, 2pi)^d not congruent to 0 on the lattice.
    """
    off = np.atleast_1d(np.asarray(offset, dtype=float))
    if off.shape != (cfg.d,):
        raise KernelError(f"offset must have {cfg.d} components")
    imgs = image_lattice(cfg.d, cfg.M)
    diff = off[None, :] - TWO_PI * imgs
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    if np.min(dist) < 1e-12:
        raise SingularPointError("offset congruent to 0 modulo the 2 pi lattice")
    return float(np.sum(dist ** (-cfg.s)))


def tail_bound(cfg):
    """Certified uniform bound on the discarded far image sum.

    Returns  sum_{|n| > M} (2 pi)^(-d-2*lam) (|n| - 1)^(-d-2*lam),  which
    dominates kappa's far part uniformly over the fundamental cell because
    |x - y - 2 pi n| >= 2 pi (|n| - 1) there.  Monotone nonincreasing in M
    and -> 0 as M -> infinity.
    """
    s = cfg.s
    if cfg.d == 1:
        # sum_{|n|>M} (|n|-1)^(-s) = 2 sum_{j>=M} j^(-s) = 2 zeta(s, M)
        return float(TWO_PI ** (-s) * 2.0 * zeta(s, cfg.M))
    # d = 2: explicit box sum plus an integral bound on the box remainder
    B = max(4 * cfg.M, 64)
    r = np.arange(-B, B + 1)
    nx, ny = np.meshgrid(r, r, indexing="ij")
    norm = np.sqrt(nx.astype(float) ** 2 + ny.astype(float) ** 2)
    sel = norm > cfg.M
    partial = np.sum((norm[sel] - 1.0) ** (-s))
    # remainder over |n|_inf > B: associate unit squares, |n| >= |w| - sqrt2/2
    rho0 = B - np.sqrt(0.5)
    shift = 1.0 + np.sqrt(0.5)
    rem = 2.0 * np.pi * ((rho0 - shift) ** (2 - s) / (s - 2)
                         + shift * (rho0 - shift) ** (1 - s) / (s - 1))
    return float(TWO_PI ** (-s) * (partial + rem))


def far_completion_1d(z, cfg):
    """Exact d = 1 far image sum over |n| > M via Hurwitz zeta."""
    s = cfg.s
    q = np.abs(z) / TWO_PI
    a = cfg.M + 1.0
    return TWO_PI ** (-s) * (zeta(s, a + q) + zeta(s, a - q))


def _principal_cell_moment(j, h, lam, p, d):
    """int over cell j of |z|^p |z|^(-d-2*lam) dz, d = 1 cells [j-1/2, j+1/2]*h."""
    assert d == 1
    a, b = (j - 0.5) * h, (j + 0.5) * h
    e = p - 2.0 * lam
    return (b ** e - a ** e) / e


def singular_cell_second_moment(cfg, h):
    """A2 = int_{cell(0)} |z|^2 |z|^(-d-2*lam) dz, analytic."""
    lam = cfg.lam
    if cfg.d == 1:
        return (h / 2.0) ** (2.0 - 2.0 * lam) / (1.0 - lam)
    # square cell, polar reduction: 8 int_0^{pi/4} ((h/2)/cos t)^(2-2lam)/(2-2lam) dt
    nodes, weights = roots_legendre(32)
    t = 0.125 * np.pi * (nodes + 1.0)
    w = 0.125 * np.pi * weights
    integrand = np.cos(t) ** (2.0 * lam - 2.0)
    return float(8.0 * (h / 2.0) ** (2.0 - 2.0 * lam) / (2.0 - 2.0 * lam)
                 * np.sum(w * integrand))


@dataclass
class PeriodizedKernel:
    """Quadrature table for the periodized kernel, plus its certificates.

    table[offset] is symmetric, nonnegative, zero at offset 0, and indexed
    by wrapped grid offset (fftn layout).  nearfield_correction holds the
    additive adjustment applied to the near shells; grad_coeff is the
    singular-cell gradient coefficient A2/(2d).
    """

    config: KernelConfig
    table: np.ndarray
    nearfield_correction: np.ndarray
    grad_coeff: float
    tail_bound: float
    completion_residual: float = 0.0
    _weight_hat: np.ndarray = field(default=None, repr=False)

    @property
    def grid(self):
        return Grid(self.config.d, self.config.N)

    def row_sum(self):
        """h^d sum of table entries; enters the explicit stability bound."""
        return self.grid.cell_volume * float(np.sum(self.table))

    def weight_hat(self):
        """rfftn of the h^d-weighted table, cached; used by convolutions."""
        if self._weight_hat is None:
            g = self.grid
            wh = np.fft.rfftn(self.table) * g.cell_volume
            self._weight_hat = wh
        return self._weight_hat


def _near_redistribution_1d(cfg, h, J):
    """Nonnegative shell weights replacing midpoint values on cells 1..J.

    Each cell's principal-kernel mass is split between the two integer
    shells bracketing its effective position sqrt(m4/m2), preserving the
    z^2 and z^4 cell moments.
    """
    add = np.zeros(J + 2)  # shell weights (quadrature weights, not / h yet)
    for j in range(1, J + 1):
        m2 = _principal_cell_moment(j, h, cfg.lam, 2, 1)
        m4 = _principal_cell_moment(j, h, cfg.lam, 4, 1)
        z2 = m4 / m2
        lo = j
        hi = j + 1 if z2 >= (j * h) ** 2 else j - 1
        if hi < 1:
            add[j] += m2 / (j * h) ** 2
            continue
        zl2, zh2 = (lo * h) ** 2, (hi * h) ** 2
        t = (z2 - zl2) / (zh2 - zl2)
        add[lo] += m2 * (1.0 - t) / zl2
        add[hi] += m2 * t / zh2
    return add


def _cell_average_2d(jx, jy, h, s):
    """Cell average of |z|^(-s) over the square cell at (jx, jy)*h (16x16 GL)."""
    nodes, weights = roots_legendre(16)
    zx = (jx + 0.5 * nodes[:, None]) * h
    zy = (jy + 0.5 * nodes[None, :]) * h
    w2 = weights[:, None] * weights[None, :] * 0.25
    r = np.sqrt(zx ** 2 + zy ** 2)
    return float(np.sum(w2 * r ** (-s)))


def build_kernel_table(cfg, grid=None):
    """Construct the PeriodizedKernel quadrature table for a grid.

    Raises KernelError when the grid does not match the config.
    """
    if grid is None:
        grid = Grid(cfg.d, cfg.N)
    if grid.d != cfg.d or grid.N != cfg.N:
        raise KernelError("grid does not match kernel config")
    h = grid.h
    s = cfg.s
    jj = np.fft.fftfreq(cfg.N, d=1.0 / cfg.N).astype(int)  # wrapped offsets

    if cfg.d == 1:
        z = jj * h
        nz = jj != 0
        table = np.zeros(cfg.N)
        midpoint = np.zeros(cfg.N)
        midpoint[nz] = np.abs(z[nz]) ** (-s)
        # truncated images 1 <= |n| <= M plus exact Hurwitz far completion
        images = np.zeros(cfg.N)
        for n in range(1, cfg.M + 1):
            images[nz] += (np.abs(z[nz] - TWO_PI * n) ** (-s)
                           + np.abs(z[nz] + TWO_PI * n) ** (-s))
        images[nz] += far_completion_1d(z[nz], cfg)
        table[nz] = midpoint[nz] + images[nz]
        # replace midpoint principal weights on near shells by the
        # moment-preserving redistribution (spills onto shell J+1)
        J = min(cfg.near_shells, cfg.N // 2 - 2)
        add = _near_redistribution_1d(cfg, h, J)
        correction = np.zeros(cfg.N)
        for sh in range(1, J + 2):
            old = (sh * h) ** (-s) if sh <= J else 0.0
            delta = add[sh] / h - old
            for signed in (sh, -sh):
                i = int(np.where(jj == signed)[0][0])
                correction[i] = delta
                table[i] += delta
        completion_residual = 1e-14  # Hurwitz evaluation is machine precision
    else:
        # d = 2: explicit dense image sum out to M_eff, constant mean-tail
        # completion, exact cell averages on the near block
        M_eff = max(cfg.M, 24)
        ox, oy = np.meshgrid(jj, jj, indexing="ij")
        z = np.stack([ox * h, oy * h], axis=-1).reshape(-1, 2)
        imgs = image_lattice(2, M_eff) * TWO_PI
        table = np.zeros(z.shape[0])
        chunk = 4096
        for start in range(0, z.shape[0], chunk):
            blk = z[start:start + chunk]
            diff = blk[:, None, :] - imgs[None, :, :]
            dist2 = np.sum(diff * diff, axis=-1)
            zero = dist2 < 1e-24
            dist2[zero] = 1.0
            vals = dist2 ** (-0.5 * s)
            vals[zero] = 0.0
            table[start:start + chunk] = np.sum(vals, axis=1)
        table = table.reshape(cfg.N, cfg.N)
        table[0, 0] = 0.0
        # the summation order differs between +-offsets; enforce the exact
        # even symmetry the kernel has analytically
        flipped = np.roll(table[::-1, ::-1], (1, 1), axis=(0, 1))
        table = 0.5 * (table + flipped)
        # mean of the discarded far images (isotropic integral estimate)
        A = TWO_PI * (M_eff + 0.5)
        mean_tail = A ** (-2.0 * cfg.lam) / (2.0 * cfg.lam * TWO_PI)
        nz = ~((ox == 0) & (oy == 0))
        table[nz] += mean_tail
        correction = np.zeros_like(table)
        J = min(cfg.near_shells, cfg.N // 2 - 2)
        for jx in range(-J, J + 1):
            for jy in range(-J, J + 1):
                if jx == 0 and jy == 0:
                    continue
                if max(abs(jx), abs(jy)) > J:
                    continue
                avg = _cell_average_2d(jx, jy, h, s)
                mid = (np.hypot(jx, jy) * h) ** (-s)
                ix = np.where(jj == jx)[0][0]
                iy = np.where(jj == jy)[0][0]
                correction[ix, iy] = avg - mid
                table[ix, iy] += avg - mid
        completion_residual = mean_tail  # crude estimate, reported not certified

    if np.min(table) < 0:
        raise KernelError("kernel table has negative entries")
    A2 = singular_cell_second_moment(cfg, h)
    return PeriodizedKernel(
        config=cfg,
        table=table,
        nearfield_correction=correction,
        grad_coeff=A2 / (2.0 * cfg.d),
        tail_bound=tail_bound(cfg),
        completion_residual=completion_residual,
    )


def exact_multiplier_constant(lam, d=1):
    """Continuum constant C with  int (1-cos k.z) |z|^(-d-2 lam) dz = C |k|^(2 lam).

    Closed form for d = 1 (C = Gamma(1-2 lam) cos(pi lam)/lam, C = pi at
    lam = 1/2).  Used only as an independent test oracle, never inside the
    quadrature itself.
    """
    if d != 1:
        raise NotImplementedError("closed form implemented for d = 1")
    if abs(lam - 0.5) < 1e-9:
        return np.pi
    return float(gamma_fn(1.0 - 2.0 * lam) * np.cos(np.pi * lam) / lam)


def calibrate_constant(lam, d, N, M=8, near_shells=DEFAULT_NEAR_SHELLS,
                       check_refinement=True, rtol=0.01):
    """Ratio of the quadrature seminorm to the Fourier seminorm on cos(x_1).

    The paper's kernel is unnormalized; the spectral multiplier |k|^(2 lam)
    differs from the kernel form by this dimensional constant.  Raises
    CalibrationError when the ratio moves by more than rtol under N -> 2N.
    """
    from .alignment import AlignmentForm  # local import, avoids cycle
    from .fields import fractional_seminorm_fourier

    def one(n):
        cfg = KernelConfig(d=d, lam=lam, M=M, N=n, near_shells=near_shells)
        grid = Grid(d, n)
        form = AlignmentForm(build_kernel_table(cfg, grid), grid)
        x = grid.coords()
        f = np.cos(x[0])
        quad = form.quadrature_seminorm(f)
        four = fractional_seminorm_fourier(grid, f, lam)
        return quad / four

    c = one(N)
    if check_refinement:
        c2 = one(2 * N)
        if abs(c2 - c) > rtol * abs(c):
            raise CalibrationError(
                f"calibration unstable: c({N})={c:.6g}, c({2*N})={c2:.6g}")
    if c <= 0:
        raise CalibrationError("calibration constant must be positive")
    return float(c)


def symmetry_defect(kern):
    """max over offsets of |K[o] - K[-o]| (must vanish: even symmetry)."""
    t = kern.table
    if kern.config.d == 1:
        flipped = np.roll(t[::-1], 1)
    else:
        flipped = np.roll(t[::-1, ::-1], (1, 1), axis=(0, 1))
    return float(np.max(np.abs(t - flipped)))


@dataclass
class KernelCertificate:
    """One self-test row: symmetry, tail, calibration, spectral equivalence."""

    lam: float
    d: int
    M: int
    N: int
    tail_bound: float
    calibration: float
    max_symmetry_defect: float
    spectral_rel_error: float
    monotone: bool
    status: str          # "pass" | "partial" | "fail"

    @property
    def poincare_constant(self):
        """Calibrated C_lam for the fractional Poincare check (5% headroom)."""
        return 1.05 / self.calibration


def certify_kernel(cfg, equivalence_tol=0.02, max_mode_frac=0.25):
    """Run the kernel self-checks and return a KernelCertificate.

    The spectral-equivalence check compares the quadrature seminorm with
    the calibrated Fourier seminorm on every single mode k <= N/4; it is
    skipped (status "partial") when the grid cannot resolve mode 8.
    """
    from .alignment import AlignmentForm
    from .fields import fractional_seminorm_fourier

    grid = Grid(cfg.d, cfg.N)
    kern = build_kernel_table(cfg, grid)
    form = AlignmentForm(kern, grid)

    sym = symmetry_defect(kern)
    if cfg.d == 1:
        mono = bool(np.all(np.diff(kern.table[1:cfg.N // 2 + 1]) <= 1e-12))
    else:
        ax = kern.table[0, 1:cfg.N // 2 + 1]
        mono = bool(np.all(np.diff(ax) <= 1e-12))

    x = grid.coords()
    f1 = np.cos(x[0])
    c = form.quadrature_seminorm(f1) / fractional_seminorm_fourier(grid, f1, cfg.lam)

    kmax = int(max_mode_frac * cfg.N)
    if kmax < 8:
        return KernelCertificate(cfg.lam, cfg.d, cfg.M, cfg.N, kern.tail_bound,
                                 float(c), sym, float("nan"), mono, "partial")
    worst = 0.0
    for k in range(1, kmax + 1):
        f = np.cos(k * x[0])
        quad = form.quadrature_seminorm(f)
        four = c * fractional_seminorm_fourier(grid, f, cfg.lam)
        worst = max(worst, abs(quad - four) / quad)
    status = "pass" if (worst <= equivalence_tol and sym < 1e-12 and mono) else "fail"
    return KernelCertificate(cfg.lam, cfg.d, cfg.M, cfg.N, kern.tail_bound,
                             float(c), sym, float(worst), mono, status)
