"""Independent analytic oracles used by the tests.

Everything here is derived in closed form, separately from the code under
test: free Gaussian evolution from the exact k-space integral, the
two-Gaussian convolution for the ground-state form factor, the overlap
normalization of the two-packet superposition, and high-order
finite-difference momentum moments.
"""

from __future__ import annotations

import numpy as np


def free_gaussian(x: np.ndarray, t: float, sigma: float, k0: float,
                  hbar: float = 1.0, M: float = 1.0) -> np.ndarray:
    """Exact free evolution of the unit-norm packet
    (pi sigma^2)^(-1/4) exp(-x^2/2sigma^2 + i k0 x).

    Completing the square in k-space gives a complex width
    alpha(t) = sigma^2 + i hbar t / M:
    psi(x,t) = (sigma^2/pi)^(1/4) alpha^(-1/2)
               exp(i k0 (x - v0 t / 2) - (x - v0 t)^2 / (2 alpha)).
    """
    alpha = sigma ** 2 + 1j * hbar * t / M
    v0 = hbar * k0 / M
    pref = (sigma ** 2 / np.pi) ** 0.25 / np.sqrt(alpha)
    return pref * np.exp(1j * k0 * (x - 0.5 * v0 * t) - (x - v0 * t) ** 2 / (2.0 * alpha))


def free_two_packet(x: np.ndarray, t: float, sigma: float, P0: float,
                    hbar: float = 1.0, M: float = 1.0) -> np.ndarray:
    """Freely evolved psi+ + psi-, normalized from its t=0 values on x."""
    k0 = P0 / hbar
    psi0 = free_gaussian(x, 0.0, sigma, k0, hbar, M) + free_gaussian(x, 0.0, sigma, -k0, hbar, M)
    dx = x[1] - x[0]
    norm = np.sqrt(np.sum(np.abs(psi0) ** 2) * dx)
    psi_t = free_gaussian(x, t, sigma, k0, hbar, M) + free_gaussian(x, t, sigma, -k0, hbar, M)
    return psi_t / norm


def spread_law(sigma: float, t: float, hbar: float = 1.0, M: float = 1.0) -> float:
    return sigma * np.sqrt(1.0 + (hbar * t / (M * sigma ** 2)) ** 2)


def spherical_wave_norm_sq(sigma: float, P0: float, hbar: float = 1.0) -> float:
    """Exact L2 norm squared of (1/sqrt(sigma)) e^{-R^2/2sigma^2} 2 cos(P0 R/hbar).

    integral e^{-R^2/sigma^2} dR = sigma sqrt(pi) and the cosine cross term
    contributes the Gaussian-damped overlap factor e^{-(P0 sigma/hbar)^2}.
    """
    return 2.0 * np.sqrt(np.pi) * (1.0 + np.exp(-((P0 * sigma / hbar) ** 2)))


def gaussian_form_factor_00(r: np.ndarray, a: float, delta: float, ell: float) -> np.ndarray:
    """Closed form of <phi_0| exp(-((R-r)/delta)^2/2) |phi_0>.

    Two-Gaussian integral: (1 + ell^2/(2 delta^2))^(-1/2)
    exp(-(R-a)^2 / (2 delta^2 + ell^2)).
    """
    pref = (1.0 + ell ** 2 / (2.0 * delta ** 2)) ** -0.5
    return pref * np.exp(-((r - a) ** 2) / (2.0 * delta ** 2 + ell ** 2))


def fd_momentum_moments(values: np.ndarray, dx: float, hbar: float = 1.0
                        ) -> tuple[float, float]:
    """(mean p, delta p) from 6th-order periodic finite differences.

    <p> = hbar Im integral conj(psi) psi' dx, <p^2> = hbar^2 integral |psi'|^2 dx.
    """
    d = (45.0 * (np.roll(values, -1) - np.roll(values, 1))
         - 9.0 * (np.roll(values, -2) - np.roll(values, 2))
         + (np.roll(values, -3) - np.roll(values, 3))) / (60.0 * dx)
    mean_p = hbar * float(np.sum(np.imag(np.conj(values) * d)) * dx)
    p2 = hbar ** 2 * float(np.sum(np.abs(d) ** 2) * dx)
    return mean_p, float(np.sqrt(max(p2 - mean_p ** 2, 0.0)))
