"""Nonlocal alignment commutator and its symmetric weak-form pairings.

All four operations share one kernel quadrature (offset table plus
singular-cell gradient coefficient), so the discrete identities hold to
round-off by construction:

  summation by parts   <commutator(rho, u), phi> = -bilinear(rho, u, phi)
  momentum neutrality  <commutator(rho, u), 1>   = 0
  dissipativity        <commutator(rho, u), u>   = -dissipation_rate <= 0
  Galilean invariance  commutator(rho, u + c)    = commutator(rho, u)

The default evaluation path expands the double sums into circular
convolutions (FFT, O(N^d log N)); `*_direct` twins evaluate the literal
O(N^(2d)) double sums for cross-validation.
"""

import numpy as np

from .fields import FieldShapeError, gradient, spectral_derivative


class AlignmentForm:
    """Alignment operator bound to one grid and one kernel table."""

    def __init__(self, kernel, grid):
        if kernel.config.d != grid.d or kernel.config.N != grid.N:
            raise FieldShapeError("kernel table does not match grid")
        self.kernel = kernel
        self.grid = grid
        self._axes = tuple(range(-grid.d, 0))

    # -- building blocks ---------------------------------------------------

    def convolve(self, f):
        """(K (*) f)_i = h^d sum_j K[i-j] f_j via circular convolution."""
        fh = np.fft.rfftn(f, axes=self._axes)
        out = np.fft.irfftn(fh * self.kernel.weight_hat(), s=self.grid.shape,
                            axes=self._axes)
        return out

    def _as_vector(self, f):
        f = np.asarray(f, dtype=float)
        if f.ndim == self.grid.d:
            f = f[np.newaxis]
        if f.shape[0] not in (1, self.grid.d) or f.shape[1:] != self.grid.shape:
            raise FieldShapeError(f"bad vector field shape {f.shape}")
        return f

    # -- operations ----------------------------------------------------------

    def commutator(self, rho, u):
        """Discrete rho(x) int rho(y) (u(y)-u(x)) kappa(x-y) dy.

        Returns a field with the shape of u.  The spatial mean of each
        component is removed: it vanishes identically for the pair sum and
        the cleanup keeps the float evaluation momentum-neutral.
        """
        self.grid.check(rho)
        scalar_input = np.asarray(u).ndim == self.grid.d
        u = self._as_vector(u)
        conv_rho = self.convolve(rho)
        out = np.empty_like(u)
        for a in range(u.shape[0]):
            ru = rho * u[a]
            out[a] = rho * (self.convolve(ru) - u[a] * conv_rho)
            out[a] += self.kernel.grad_coeff * _div_rho2_grad(
                self.grid, rho, u[a])
            out[a] -= np.mean(out[a])
        return out[0] if scalar_input else out

    def alignment_bilinear(self, rho, u, phi):
        """(1/2) h^(2d) sum_{i != j} rho_i rho_j (u_i-u_j).(phi_i-phi_j) K_ij.

        Symmetric and bilinear in (u, phi); the singular-cell part pairs the
        spectral gradients with weight grad_coeff * rho^2.
        """
        self.grid.check(rho)
        u = self._as_vector(u)
        phi = self._as_vector(phi)
        if u.shape != phi.shape:
            raise FieldShapeError("u and phi must share a shape")
        hd = self.grid.cell_volume
        conv_rho = self.convolve(rho)
        total = 0.0
        for a in range(u.shape[0]):
            ru, rp = rho * u[a], rho * phi[a]
            total += hd * np.sum(rho * u[a] * phi[a] * conv_rho)
            total -= 0.5 * hd * (np.sum(ru * self.convolve(rp))
                                 + np.sum(rp * self.convolve(ru)))
            du = gradient(self.grid, u[a])
            dphi = gradient(self.grid, phi[a])
            total += self.kernel.grad_coeff * hd * np.sum(
                rho * rho * du * dphi)
        return float(total)

    def dissipation_rate(self, rho, u):
        """Alignment energy dissipation, >= 0, zero iff u is constant
        wherever rho > 0."""
        return self.alignment_bilinear(rho, u, u)

    def relative_alignment_dissipation(self, rho, u, U):
        """Dissipation of the deviation field: identical to
        dissipation_rate(rho, u - U)."""
        u = self._as_vector(u)
        U = self._as_vector(U)
        return self.dissipation_rate(rho, u - U)

    def quadrature_seminorm(self, f):
        """Kernel-quadrature fractional seminorm of a scalar or vector field
        (the rho = 1 dissipation rate)."""
        f = self._as_vector(f)
        return self.dissipation_rate(np.ones(self.grid.shape), f)

    def explicit_stability_radius(self, rho_max):
        """Gershgorin-type bound on the alignment operator spectrum.

        The kernel rows contribute 2 rho_max h^d sum K; the gradient term
        adds its largest multiplier rho_max * grad_coeff * d * (pi/h)^2 / d.
        """
        g = self.grid
        return rho_max * (2.0 * self.kernel.row_sum()
                          + self.kernel.grad_coeff * rho_max
                          * g.d * (np.pi / g.h) ** 2)

    # -- literal double-sum twins (cross-validation) -------------------------

    def _dense_kernel_matrix(self):
        g = self.grid
        if g.size > 4096:
            raise MemoryError("dense kernel matrix limited to N^d <= 4096")
        idx = np.arange(g.N)
        if g.d == 1:
            off = (idx[:, None] - idx[None, :]) % g.N
            return self.kernel.table[off]
        ij = np.stack(np.meshgrid(idx, idx, indexing="ij")).reshape(2, -1)
        ox = (ij[0][:, None] - ij[0][None, :]) % g.N
        oy = (ij[1][:, None] - ij[1][None, :]) % g.N
        return self.kernel.table[ox, oy]

    def commutator_direct(self, rho, u):
        """O(N^(2d)) evaluation of the commutator; must match `commutator`
        to 1e-10 relative."""
        g = self.grid
        scalar_input = np.asarray(u).ndim == g.d
        u = self._as_vector(u)
        K = self._dense_kernel_matrix()
        r = rho.reshape(-1)
        out = np.empty_like(u)
        for a in range(u.shape[0]):
            ua = u[a].reshape(-1)
            s = K @ (r * ua) - ua * (K @ r)
            la = (g.cell_volume * r * s).reshape(g.shape)
            la += self.kernel.grad_coeff * _div_rho2_grad(g, rho, u[a])
            out[a] = la - np.mean(la)
        return out[0] if scalar_input else out

    def alignment_bilinear_direct(self, rho, u, phi):
        g = self.grid
        u = self._as_vector(u)
        phi = self._as_vector(phi)
        K = self._dense_kernel_matrix()
        r = rho.reshape(-1)
        total = 0.0
        for a in range(u.shape[0]):
            ua, pa = u[a].reshape(-1), phi[a].reshape(-1)
            du = ua[:, None] - ua[None, :]
            dp = pa[:, None] - pa[None, :]
            total += 0.5 * g.cell_volume ** 2 * np.sum(
                r[:, None] * r[None, :] * du * dp * K)
            gu = gradient(g, u[a])
            gp = gradient(g, phi[a])
            total += self.kernel.grad_coeff * g.cell_volume * np.sum(
                rho * rho * gu * gp)
        return float(total)


def _div_rho2_grad(grid, rho, f):
    """div(rho^2 grad f) with spectral derivatives (singular-cell term)."""
    out = np.zeros(grid.shape)
    r2 = rho * rho
    for a in range(grid.d):
        out += spectral_derivative(grid, r2 * spectral_derivative(grid, f, a), a)
    return out
