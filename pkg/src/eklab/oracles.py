"""Independent reference computations used to cross-check the main solvers.

Nothing here imports the soliton or operator modules: the grey soliton is
taken in closed form and the transverse eigenproblem is posed for the
defocusing cubic NLS, i psi_t = -psi_xx/2 - psi_yy/2 + (|psi|^2 - 1) psi,
whose Madelung form is the model K = a/(4 rho), g0 = b rho.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla


def grey_soliton_density(z, rho_inf=1.0, u_inf=0.0, c=0.5, a=1.0, b=1.0):
    """Closed-form soliton density for K = a/(4 rho), g0 = b rho.

    rho = rho_inf - (rho_inf - rho_*) sech^2(sqrt(b (rho_inf - rho_*)/a) z) with
    rho_* = rho_inf^2 (u_inf - c)^2 / (b rho_inf^2) = (u_inf - c)^2 / b.
    """
    rho_star = (u_inf - c) ** 2 / b
    depth = rho_inf - rho_star
    return rho_inf - depth / np.cosh(np.sqrt(b * depth / a) * np.asarray(z)) ** 2


def fourier_matrices(n, half_length):
    """First and second derivative matrices built by transforming the identity."""
    xi = np.pi / half_length * np.fft.fftfreq(n, 1.0 / n)
    xi1 = xi.copy()
    xi1[n // 2] = 0.0
    eye = np.eye(n)
    F = np.fft.fft(eye, axis=0)
    D1 = np.fft.ifft(1j * xi1[:, None] * F, axis=0).real
    D2 = np.fft.ifft(-(xi ** 2)[:, None] * F, axis=0).real
    return D1, D2


def nls_transverse_matrix(k, n, half_length, v=0.5):
    """Real 2n x 2n matrix of the NLS linearisation about the grey soliton of speed v.

    The perturbation is written in the co-moving, phase-rotated frame
    zeta = exp(-i theta) delta_psi with theta the soliton phase, and split
    into real and imaginary parts.
    """
    x = -half_length + 2.0 * half_length * np.arange(n) / n
    a = np.sqrt(1.0 - v * v)
    S = 1.0 / np.cosh(a * x) ** 2
    rho = 1.0 - a * a * S
    th1 = -v * a * a * S / rho
    D1, D2 = fourier_matrices(n, half_length)
    I = np.eye(n)
    A = -v * np.diag(th1) - 0.5 * D2 + 0.5 * np.diag(th1 ** 2) + 0.5 * k * k * I + np.diag(2.0 * rho - 1.0)
    B = v * D1 - 0.5 * (D1 * th1[None, :] + th1[:, None] * D1)
    R = np.diag(rho)
    return np.block([[B, A - R], [-(A + R), B]])


def nls_growth_rate(k, n=512, half_length=16.0, v=0.5):
    """Largest real part among eigenvalues of the NLS transverse linearisation."""
    ev = sla.eigvals(nls_transverse_matrix(k, n, half_length, v))
    return float(np.max(ev.real))


def nls_most_unstable(n=512, half_length=16.0, v=0.5, bracket=(0.3, 0.7), tol=1e-6):
    """(k0, sigma0) of the NLS transverse growth curve by golden-section search."""
    g = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = bracket
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = nls_growth_rate(c, n, half_length, v), nls_growth_rate(d, n, half_length, v)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = nls_growth_rate(c, n, half_length, v)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = nls_growth_rate(d, n, half_length, v)
    k0 = 0.5 * (lo + hi)
    return k0, nls_growth_rate(k0, n, half_length, v)
