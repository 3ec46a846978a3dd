"""Periodic Fourier grid on [-X, X), spectral derivatives and Sobolev-type norms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import toeplitz

from .errors import GridMismatchError, ParameterError


@dataclass(frozen=True)
class Grid1D:
    n: int
    half_length: float

    def __post_init__(self):
        n = int(self.n)
        if n < 64 or n & (n - 1):
            raise ParameterError(f"grid.n must be a power of two >= 64, got {self.n}")
        if not self.half_length > 0:
            raise ParameterError(f"grid.half_length must be positive, got {self.half_length}")

    @cached_property
    def x(self):
        return -self.half_length + 2.0 * self.half_length * np.arange(self.n) / self.n

    @property
    def dx(self):
        return 2.0 * self.half_length / self.n

    @cached_property
    def xi(self):
        return np.pi / self.half_length * np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def xi_odd(self):
        # odd-order multipliers drop the Nyquist mode so real data stays real
        xi = self.xi.copy()
        xi[self.n // 2] = 0.0
        return xi

    @cached_property
    def D1(self):
        n, h = self.n, 2 * np.pi / self.n
        k = np.arange(1, n)
        col = np.zeros(n)
        col[1:] = 0.5 * (-1.0) ** k / np.tan(0.5 * k * h)
        return (np.pi / self.half_length) * toeplitz(col, -col)

    @cached_property
    def D2(self):
        n, h = self.n, 2 * np.pi / self.n
        k = np.arange(1, n)
        col = np.empty(n)
        col[0] = -np.pi ** 2 / (3 * h * h) - 1.0 / 6.0
        col[1:] = -0.5 * (-1.0) ** k / np.sin(0.5 * k * h) ** 2
        return (np.pi / self.half_length) ** 2 * toeplitz(col)

    def same_as(self, other: "Grid1D") -> bool:
        return self.n == other.n and self.half_length == other.half_length


def derivative(f, grid: Grid1D, order: int = 1, axis: int = -1):
    """Spectral derivative of a periodic grid function."""
    if order not in (1, 2):
        raise ParameterError(f"derivative order must be 1 or 2, got {order}")
    f = np.asarray(f)
    mult = 1j * grid.xi_odd if order == 1 else -grid.xi ** 2
    shape = [1] * f.ndim
    shape[axis] = grid.n
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * mult.reshape(shape), axis=axis)
    return out if np.iscomplexobj(f) else out.real


def divgrad_matrix(f, grid: Grid1D):
    """Matrix of v -> d/dx (f dv/dx), in the symmetric form (f v)''/2 + f v''/2 - f'' v/2.

    The form avoids the spurious Nyquist kernel of D1 diag(f) D1 and has zero
    column sums, so it conserves the mean exactly.
    """
    f = np.asarray(f, dtype=float)
    D2 = grid.D2
    return 0.5 * (D2 * f[None, :] + f[:, None] * D2) - 0.5 * np.diag(D2 @ f)


def apply_divgrad(f, v, grid: Grid1D):
    """Matrix-free counterpart of :func:`divgrad_matrix`."""
    return 0.5 * (derivative(f * v, grid, 2) + f * derivative(v, grid, 2) - derivative(f, grid, 2) * v)


@dataclass(frozen=True)
class ModePair:
    """Transverse Fourier mode e^{iky} (U1, U2)(x): density and potential parts."""

    U1: np.ndarray
    U2: np.ndarray
    k: float

    def __post_init__(self):
        u1 = np.asarray(self.U1, dtype=complex)
        u2 = np.asarray(self.U2, dtype=complex)
        if u1.shape != u2.shape or u1.ndim != 1:
            raise GridMismatchError(f"mode components must be equal-length vectors, got {u1.shape} and {u2.shape}")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise ParameterError("mode components must be finite")
        object.__setattr__(self, "U1", u1)
        object.__setattr__(self, "U2", u2)

    def stacked(self):
        return np.concatenate([self.U1, self.U2])

    @classmethod
    def from_stacked(cls, v, k):
        n = len(v) // 2
        return cls(v[:n], v[n:], k)


def _weighted_sq(f, grid: Grid1D, weight):
    fh = np.fft.fft(np.asarray(f))
    return grid.dx / grid.n * float(np.sum(weight * np.abs(fh) ** 2))


def hs_norm(U, grid: Grid1D, s: int = 0, squared: bool = False):
    """H^s norm with multiplier (1 + xi^2)^s; a ModePair sums both components."""
    if int(s) != s or s < 0:
        raise ParameterError(f"Sobolev index must be a whole number, got {s}")
    weight = (1.0 + grid.xi ** 2) ** s
    parts = (U.U1, U.U2) if isinstance(U, ModePair) else (U,)
    val = sum(_weighted_sq(p, grid, weight) for p in parts)
    return val if squared else np.sqrt(val)


def xjk_norm(U: ModePair, grid: Grid1D, j: int = 0, squared: bool = True):
    """Mode semi-norm |U1|^2_{H^{j+1}} + |dx U2|^2_{H^j} + k^2 |U|^2_{H^j}.

    Returned squared by default; ``squared=False`` gives its square root.
    """
    wj = (1.0 + grid.xi ** 2) ** j
    val = (_weighted_sq(U.U1, grid, wj * (1.0 + grid.xi ** 2))
           + _weighted_sq(U.U2, grid, wj * grid.xi_odd ** 2)
           + U.k ** 2 * (_weighted_sq(U.U1, grid, wj) + _weighted_sq(U.U2, grid, wj)))
    return val if squared else np.sqrt(val)


def l2_norm(U, grid: Grid1D):
    return hs_norm(U, grid, 0)
