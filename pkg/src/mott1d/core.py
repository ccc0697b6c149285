"""Grids, wave packets, oscillator eigenbasis and position-space diagnostics.

Model conventions used throughout the package:

* 1D position grid for the test particle coordinate R, uniform with a
  power-of-two point count so FFTs are cheap and mirror symmetry about the
  origin is exact (``x_j = x_min + j*dx`` with ``x_min = -x_max``).
* momentum p = hbar*k with k the standard DFT wavenumbers
  ``2*pi*fftfreq(n, dx)`` (spacing 2*pi/L).
* harmonic oscillator eigenfunctions are evaluated with the normalized
  three-term recurrence on Hermite *functions* (Gaussian weight included),
  which is stable far beyond the truncation levels used here; raw Hermite
  polynomials times an exponential overflow near n ~ 300.
* natural units hbar = M = v0 = 1 are convenient but not assumed: every
  formula carries hbar and the masses explicitly.  ``ModelParams.to_natural``
  rescales an arbitrary parameter set into natural units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np


class GridError(ValueError):
    """Grid too narrow, mismatched grids, or interval outside the grid."""


class QuadratureError(RuntimeError):
    """A quadrature rule failed to converge within its node/step budget."""


def _require_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not (value > 0) or not math.isfinite(value):
            raise ValueError(f"{name} must be strictly positive and finite, got {value!r}")


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the Hamiltonian and the initial state.

    A test particle of mass ``M`` moves along R in a symmetric two-packet
    superposition (width ``sigma``, momenta ±``P0``) and couples with
    strength ``lam`` and range ``delta`` to two harmonic oscillators
    (mass ``m``, angular frequency ``omega``) centered at ``a1 > 0`` and
    ``a2 != 0``.  The geometry a2 < 0 < a1 puts the oscillators on opposite
    sides of the origin; 0 < a1 < a2 puts them on the same side.
    """

    M: float
    m: float
    omega: float
    lam: float
    delta: float
    sigma: float
    P0: float
    a1: float
    a2: float
    hbar: float = 1.0

    def __post_init__(self) -> None:
        _require_positive(M=self.M, m=self.m, omega=self.omega, delta=self.delta,
                          sigma=self.sigma, P0=self.P0, hbar=self.hbar)
        # lam = 0 is the decoupled diagnostic case and must stay constructible
        if not (self.lam >= 0) or not math.isfinite(self.lam):
            raise ValueError(f"lam must be >= 0 and finite, got {self.lam!r}")
        # a1 > 0 is a scenario-level convention (see experiments.ScenarioSpec);
        # the mirrored setup (-a1, -a2) must stay constructible for parity runs
        if self.a1 == 0 or self.a2 == 0:
            raise ValueError("oscillator centers must be nonzero")
        if self.a2 == self.a1:
            raise ValueError("a1 and a2 must differ")

    @property
    def v0(self) -> float:
        """Packet group velocity P0/M."""
        return self.P0 / self.M

    @property
    def tau1(self) -> float:
        """Classical transit time from the origin to a1."""
        return abs(self.a1) / self.v0

    @property
    def tau2(self) -> float:
        """Classical transit time from the origin to a2."""
        return abs(self.a2) / self.v0

    @property
    def oscillator_length(self) -> float:
        return math.sqrt(self.hbar / (self.m * self.omega))

    def to_natural(self) -> "ModelParams":
        """Rescale to hbar = M = v0 = 1 (lengths in hbar/(M v0), etc.)."""
        length = self.hbar / (self.M * self.v0)
        energy = self.M * self.v0 ** 2
        time = self.hbar / energy
        return ModelParams(
            M=1.0,
            m=self.m / self.M,
            omega=self.omega * time,
            lam=self.lam / energy,
            delta=self.delta / length,
            sigma=self.sigma / length,
            P0=1.0,
            a1=self.a1 / length,
            a2=self.a2 / length,
            hbar=1.0,
        )

    def mirrored(self) -> "ModelParams":
        """Parameters of the spatially reflected setup (a1, a2) -> (-a1, -a2)."""
        return replace(self, a1=-self.a1, a2=-self.a2)


@dataclass(frozen=True)
class DimensionlessGroup:
    """The coupling ratio and the five small-parameter ratios, per oscillator."""

    lambda0: float
    m_over_M: float
    hbar_omega_over_M_v0_sq: float
    sigma_over_a1: float
    sigma_over_a2: float
    delta_over_a1: float
    delta_over_a2: float
    v0_over_omega_a1: float
    v0_over_omega_a2: float
    epsilon: float

    @classmethod
    def from_params(cls, params: ModelParams, epsilon: float) -> "DimensionlessGroup":
        if not (epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {epsilon!r}")
        v0 = params.v0
        e_kin = params.M * v0 ** 2
        return cls(
            lambda0=params.lam / e_kin,
            m_over_M=params.m / params.M,
            hbar_omega_over_M_v0_sq=params.hbar * params.omega / e_kin,
            sigma_over_a1=params.sigma / abs(params.a1),
            sigma_over_a2=params.sigma / abs(params.a2),
            delta_over_a1=params.delta / abs(params.a1),
            delta_over_a2=params.delta / abs(params.a2),
            v0_over_omega_a1=v0 / (params.omega * abs(params.a1)),
            v0_over_omega_a2=v0 / (params.omega * abs(params.a2)),
            epsilon=epsilon,
        )

    def epsilon_ratios(self) -> dict[str, float]:
        """The small-parameter ratios (everything except lambda0 and epsilon)."""
        return {
            "m_over_M": self.m_over_M,
            "hbar_omega_over_M_v0_sq": self.hbar_omega_over_M_v0_sq,
            "sigma_over_a1": self.sigma_over_a1,
            "sigma_over_a2": self.sigma_over_a2,
            "delta_over_a1": self.delta_over_a1,
            "delta_over_a2": self.delta_over_a2,
            "v0_over_omega_a1": self.v0_over_omega_a1,
            "v0_over_omega_a2": self.v0_over_omega_a2,
        }

    def as_dict(self) -> dict[str, float]:
        out = {"lambda0": self.lambda0, "epsilon": self.epsilon}
        out.update(self.epsilon_ratios())
        return out


# ---------------------------------------------------------------------------
# grid and fields


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic R-grid, n_points a power of two, x_max excluded."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self) -> None:
        if not self.x_min < self.x_max:
            raise ValueError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        n = self.n_points
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 2, got {n}")

    @classmethod
    def symmetric(cls, x_max: float, n_points: int) -> "SpatialGrid":
        return cls(-x_max, x_max, n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def is_symmetric(self) -> bool:
        return self.x_min == -self.x_max

    def mirror(self, values: np.ndarray) -> np.ndarray:
        """values at -x for each grid point x (exact on a symmetric grid).

        Index 0 maps to itself (x_min is identified with x_max by
        periodicity); index j maps to n - j.
        """
        out = np.empty_like(values)
        out[..., 0] = values[..., 0]
        out[..., 1:] = values[..., :0:-1]
        return out


@dataclass(frozen=True)
class ComplexField:
    """A complex amplitude per grid point; values are frozen on construction."""

    grid: SpatialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (self.grid.n_points,):
            raise GridError(
                f"values shape {values.shape} does not match grid ({self.grid.n_points},)")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.values) ** 2)) * self.grid.dx)

    def normalized(self) -> "ComplexField":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero field")
        return ComplexField(self.grid, self.values / n)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def inner(self, other: "ComplexField") -> complex:
        _check_same_grid(self, other)
        return complex(np.vdot(self.values, other.values) * self.grid.dx)


def _check_same_grid(a: ComplexField, b: ComplexField) -> None:
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


def _check_boundary(grid: SpatialGrid, envelope: np.ndarray, tol: float) -> None:
    peak = float(np.max(envelope))
    edge = max(float(envelope[0]), float(envelope[-1]))
    if edge > tol * peak:
        raise GridError(
            f"grid too narrow: boundary amplitude {edge:.3e} exceeds {tol:.1e} of peak {peak:.3e}")


def free_spread(sigma: float, t: float, hbar: float, M: float) -> float:
    """Width sigma(t) of a freely evolving Gaussian packet."""
    return sigma * math.sqrt(1.0 + (hbar * t / (M * sigma ** 2)) ** 2)


def suggest_grid(params: ModelParams, t_max: float, n_points: int | None = None,
                 pad_sigmas: float = 8.0) -> SpatialGrid:
    """Symmetric grid wide enough that nothing reaches the boundary by t_max.

    Half-width rule: farthest oscillator + ballistic distance v0*t_max +
    pad_sigmas spread widths.  The default point count keeps dx at least
    4x finer than the shortest wavelength carried by the state.
    """
    spread = free_spread(params.sigma, t_max, params.hbar, params.M)
    x_max = max(abs(params.a1), abs(params.a2)) + params.v0 * t_max + pad_sigmas * spread
    x_max = float(math.ceil(x_max))
    if n_points is None:
        k_need = params.P0 / params.hbar + 8.0 / params.sigma
        dx_target = math.pi / (4.0 * k_need)
        n_points = 1 << max(8, math.ceil(math.log2(2.0 * x_max / dx_target)))
    return SpatialGrid.symmetric(x_max, n_points)


# ---------------------------------------------------------------------------
# packets


def make_gaussian_packet(grid: SpatialGrid, sigma: float, P0: float,
                         momentum_sign: int = +1, hbar: float = 1.0,
                         boundary_tol: float = 1e-12) -> ComplexField:
    """Unit-norm Gaussian packet exp(-R^2/2sigma^2) exp(+-i P0 R / hbar).

    Raises GridError when the envelope at the grid edge exceeds
    ``boundary_tol`` of its peak (grid too narrow for this packet).
    """
    _require_positive(sigma=sigma, hbar=hbar)
    if P0 < 0:
        raise ValueError("P0 must be >= 0; use momentum_sign for the direction")
    if momentum_sign not in (+1, -1):
        raise ValueError(f"momentum_sign must be +1 or -1, got {momentum_sign!r}")
    x = grid.points
    envelope = np.exp(-x ** 2 / (2.0 * sigma ** 2)) / math.sqrt(sigma)
    _check_boundary(grid, envelope, boundary_tol)
    psi = envelope * np.exp(1j * momentum_sign * P0 * x / hbar)
    return ComplexField(grid, psi).normalized()


def make_spherical_wave_1d(grid: SpatialGrid, sigma: float, P0: float,
                           hbar: float = 1.0, boundary_tol: float = 1e-12) -> ComplexField:
    """The 1D stand-in for an isotropically emitted wave: psi+ + psi-.

    Equal-weight superposition of two Gaussian packets with opposite momenta,
    i.e. a cosine-modulated Gaussian, normalized numerically on the grid (the
    normalization constant depends on the psi+/psi- overlap).
    """
    _require_positive(sigma=sigma, hbar=hbar)
    x = grid.points
    envelope = np.exp(-x ** 2 / (2.0 * sigma ** 2)) / math.sqrt(sigma)
    _check_boundary(grid, envelope, boundary_tol)
    psi = envelope * 2.0 * np.cos(P0 * x / hbar)
    return ComplexField(grid, psi).normalized()


# ---------------------------------------------------------------------------
# oscillator eigenbasis


def hermite_functions(xi: np.ndarray, n_max: int) -> np.ndarray:
    """Orthonormal Hermite functions h_0..h_n_max at dimensionless xi.

    Stable recurrence with the Gaussian weight carried along:
    h_{n+1} = sqrt(2/(n+1)) xi h_n - sqrt(n/(n+1)) h_{n-1}.
    Rows are unit-normalized w.r.t. integration over xi.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    xi = np.asarray(xi, dtype=float)
    h = np.zeros((n_max + 1,) + xi.shape)
    h[0] = np.pi ** -0.25 * np.exp(-xi ** 2 / 2.0)
    if n_max >= 1:
        h[1] = math.sqrt(2.0) * xi * h[0]
    for n in range(1, n_max):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * xi * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


@dataclass(frozen=True)
class OscillatorBasis:
    """Truncated eigenbasis of a harmonic oscillator centered at ``a``."""

    a: float
    m: float
    omega: float
    hbar: float
    n_max: int

    def __post_init__(self) -> None:
        _require_positive(m=self.m, omega=self.omega, hbar=self.hbar)
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    @classmethod
    def for_oscillator(cls, params: ModelParams, index: int, n_max: int) -> "OscillatorBasis":
        if index not in (1, 2):
            raise ValueError(f"oscillator index must be 1 or 2, got {index!r}")
        a = params.a1 if index == 1 else params.a2
        return cls(a=a, m=params.m, omega=params.omega, hbar=params.hbar, n_max=n_max)

    @property
    def length(self) -> float:
        """Oscillator length sqrt(hbar / m omega)."""
        return math.sqrt(self.hbar / (self.m * self.omega))

    @property
    def energies(self) -> np.ndarray:
        return self.hbar * self.omega * (np.arange(self.n_max + 1) + 0.5)

    def eigenfunctions(self, r: np.ndarray) -> np.ndarray:
        """All phi_0..phi_n_max evaluated at positions r, shape (n_max+1, len(r))."""
        xi = (np.asarray(r, dtype=float) - self.a) / self.length
        return hermite_functions(xi, self.n_max) / math.sqrt(self.length)


def oscillator_eigenfunction(basis: OscillatorBasis, n: int, r_grid: SpatialGrid) -> ComplexField:
    """Eigenfunction phi_n of ``basis`` sampled on ``r_grid`` (real-valued)."""
    if not 0 <= n <= basis.n_max:
        raise ValueError(f"level {n} outside basis range 0..{basis.n_max}")
    return ComplexField(r_grid, basis.eigenfunctions(r_grid.points)[n].astype(np.complex128))


# ---------------------------------------------------------------------------
# diagnostics


def _check_normalized(psi: ComplexField, rtol: float = 1e-6) -> None:
    n = psi.norm()
    if abs(n - 1.0) > rtol:
        raise ValueError(f"field is not normalized (norm {n!r})")


def born_probability(psi: ComplexField, omega_set: Sequence[tuple[float, float]]) -> float:
    """Probability that the position lies in the union of intervals.

    Quadrature treats |psi_j|^2 as constant on the cell
    [x_j - dx/2, x_j + dx/2), so the result is exactly additive over
    disjoint intervals and monotone under inclusion.
    """
    _check_normalized(psi)
    grid = psi.grid
    x = grid.points
    dx = grid.dx
    total = 0.0
    density = psi.density()
    for lo, hi in omega_set:
        if not lo <= hi:
            raise ValueError(f"interval has lo > hi: ({lo}, {hi})")
        if lo < grid.x_min - 1e-12 * grid.length or hi > grid.x_max + 1e-12 * grid.length:
            raise GridError(f"interval ({lo}, {hi}) outside grid [{grid.x_min}, {grid.x_max}]")
        cell_lo = np.maximum(x - 0.5 * dx, lo)
        cell_hi = np.minimum(x + 0.5 * dx, hi)
        overlap = np.clip(cell_hi - cell_lo, 0.0, None)
        total += float(np.sum(density * overlap))
    return total


class InterferenceParts(NamedTuple):
    """Pointwise decomposition of |psi1 + psi2|^2 (all real arrays)."""

    total: np.ndarray
    part1: np.ndarray
    part2: np.ndarray
    cross: np.ndarray


def interference_decomposition(psi1: ComplexField, psi2: ComplexField) -> InterferenceParts:
    """|psi1 + psi2|^2 = |psi1|^2 + |psi2|^2 + 2 Re(psi1 conj(psi2))."""
    _check_same_grid(psi1, psi2)
    part1 = psi1.density()
    part2 = psi2.density()
    cross = 2.0 * np.real(psi1.values * np.conj(psi2.values))
    total = np.abs(psi1.values + psi2.values) ** 2
    return InterferenceParts(total=total, part1=part1, part2=part2, cross=cross)


class UncertaintyResult(NamedTuple):
    delta_x: float
    delta_p: float
    product: float


def uncertainty_product(psi: ComplexField, hbar: float = 1.0) -> UncertaintyResult:
    """Position and momentum spreads; the momentum side is spectral.

    Momentum moments come from the discrete Fourier transform with
    p = hbar * k, normalized so the k-space density integrates to one.
    """
    _check_normalized(psi)
    grid = psi.grid
    x = grid.points
    rho_x = psi.density() * grid.dx
    mean_x = float(np.sum(rho_x * x))
    var_x = float(np.sum(rho_x * (x - mean_x) ** 2))

    p = hbar * grid.wavenumbers
    psi_k = np.fft.fft(psi.values)
    rho_p = np.abs(psi_k) ** 2
    rho_p /= rho_p.sum()
    mean_p = float(np.sum(rho_p * p))
    var_p = float(np.sum(rho_p * (p - mean_p) ** 2))

    dx_ = math.sqrt(max(var_x, 0.0))
    dp_ = math.sqrt(max(var_p, 0.0))
    return UncertaintyResult(delta_x=dx_, delta_p=dp_, product=dx_ * dp_)


def field_to_csv(psi: ComplexField, path) -> None:
    """Dump a field as CSV rows (x, Re, Im) for debugging."""
    with open(path, "w", newline="") as fh:
        fh.write("x,re,im\n")
        for x, v in zip(psi.grid.points, psi.values):
            fh.write(f"{x:.17g},{v.real:.17g},{v.imag:.17g}\n")
