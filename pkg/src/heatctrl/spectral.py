"""Eigenstructure of d^2/ds^2 on an interval, plus shared grids and containers.

The operator acts on (0, L) with a Dirichlet or Neumann condition at the left
end and a Dirichlet *control* condition at the right end.  Its eigenpairs are
explicit:

* Dirichlet left:  k_n = n*pi/L,          e_n(s) = sqrt(2/L)*sin(k_n*s)
* Neumann left:    k_n = (n - 1/2)*pi/L,  e_n(s) = sqrt(2/L)*cos(k_n*s)

with n = 1, 2, ... and eigenvalues mu_n = -k_n^2.  (For the Neumann case we
take the full analytic spectrum, whose lowest wavenumber is pi/(2L).)

Conventions fixed here and used by every other module:

* quadrature is composite trapezoid, so discrete norms and inner products
  satisfy the asserted invariants exactly;
* states and controls are complex arrays even at angle 0 (a single code
  path); angle-0 results must come out real to roundoff;
* under a boundary value u(t) imposed at s = L the mode coefficients obey

      dc_n/dt = lambda_n c_n + b_n u(t),
      lambda_n = exp(i*theta) * mu_n,
      b_n = -exp(i*theta) * e_n'(L) = exp(i*theta) * sqrt(2/L) * k_n * (-1)^(n+1),

  obtained by integrating the weak form by parts twice.  The sign of b_n is
  locked by the finite-difference cross-check in the simulator tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "LeftKind", "BoundaryConfig", "Mode", "ModeBasis", "TimeGrid",
    "ControlSignal", "StateCoeffs", "build_basis", "project_state",
    "synthesize", "free_evolution", "trapezoid_weights",
]


class LeftKind(IntEnum):
    """Boundary condition at the uncontrolled (left) end."""

    DIRICHLET = 0
    NEUMANN = 1


@dataclass(frozen=True)
class BoundaryConfig:
    """Interval length, left boundary kind, and rotation angle theta."""

    length: float
    left: LeftKind = LeftKind.DIRICHLET
    angle: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length <= 0.0:
            raise ValueError(f"interval length must be positive and finite, got {self.length}")
        if not np.isfinite(self.angle) or abs(self.angle) >= np.pi / 2:
            raise ValueError(f"angle must lie strictly inside (-pi/2, pi/2), got {self.angle}")
        if self.left not in (LeftKind.DIRICHLET, LeftKind.NEUMANN):
            raise ValueError(f"unknown left boundary kind: {self.left!r}")


@dataclass(frozen=True)
class Mode:
    """A single eigenmode with its control coupling."""

    index: int                 # 1-based
    wavenumber: float          # k_n > 0
    eigenvalue: float          # mu_n = -k_n^2
    rotated_exponent: complex  # lambda_n = exp(i*theta) * mu_n
    boundary_flux: complex     # b_n, coupling of the right-end value into mode n


@dataclass(frozen=True)
class ModeBasis:
    """Truncated orthonormal eigenbasis of the interval operator."""

    config: BoundaryConfig
    modes: tuple[Mode, ...]

    @property
    def truncation(self) -> int:
        return len(self.modes)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.array([m.wavenumber for m in self.modes])

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([m.eigenvalue for m in self.modes])

    @property
    def exponents(self) -> np.ndarray:
        return np.array([m.rotated_exponent for m in self.modes])

    @property
    def fluxes(self) -> np.ndarray:
        return np.array([m.boundary_flux for m in self.modes])

    def eval_modes(self, s: np.ndarray) -> np.ndarray:
        """Eigenfunction values, shape (len(s), truncation)."""
        s = np.asarray(s, dtype=float)
        phase = np.outer(s, self.wavenumbers)
        amp = np.sqrt(2.0 / self.config.length)
        if self.config.left == LeftKind.DIRICHLET:
            return amp * np.sin(phase)
        return amp * np.cos(phase)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with samples >= 2."""

    start: float
    end: float
    samples: int

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError(f"a time grid needs at least 2 samples, got {self.samples}")
        if not (np.isfinite(self.start) and np.isfinite(self.end)) or self.end <= self.start:
            raise ValueError(f"grid end must exceed start, got [{self.start}, {self.end}]")

    @property
    def spacing(self) -> float:
        return (self.end - self.start) / (self.samples - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.start, self.end, self.samples)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.samples, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(eq=False)
class ControlSignal:
    """Complex time samples of a boundary input, with trapezoid L2 norm."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.samples,):
            raise ValueError(
                f"signal has {self.values.shape} values for a grid of {self.grid.samples} samples"
            )

    def norm_sq(self) -> float:
        return float(np.real(self.grid.weights @ (np.abs(self.values) ** 2)))

    def norm(self) -> float:
        return np.sqrt(self.norm_sq())


@dataclass(eq=False)
class StateCoeffs:
    """State expressed by its coefficients in a ModeBasis (Parseval norm)."""

    basis: ModeBasis
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.basis.truncation,):
            raise ValueError(
                f"{self.values.shape} coefficients for a basis of {self.basis.truncation} modes"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights for (possibly nonuniform) sorted nodes."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need at least two quadrature nodes")
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def build_basis(config: BoundaryConfig, truncation: int) -> ModeBasis:
    """First `truncation` eigenmodes of the interval operator.

    The boundary flux is b_n = -exp(i*theta) * e_n'(L); for both left kinds
    e_n'(L) = sqrt(2/L) * k_n * (-1)^n, so |b_n| = sqrt(2/L) * k_n.
    """
    if truncation < 1:
        raise ValueError(f"truncation must be at least 1, got {truncation}")
    L = config.length
    n = np.arange(1, truncation + 1)
    if config.left == LeftKind.DIRICHLET:
        k = n * np.pi / L
    else:
        k = (n - 0.5) * np.pi / L
    mu = -(k ** 2)
    rot = np.exp(1j * config.angle)
    lam = rot * mu
    deriv_at_L = np.sqrt(2.0 / L) * k * ((-1.0) ** n)
    b = -rot * deriv_at_L
    modes = tuple(
        Mode(int(n[i]), float(k[i]), float(mu[i]), complex(lam[i]), complex(b[i]))
        for i in range(truncation)
    )
    return ModeBasis(config=config, modes=modes)


def _check_uniform(s: np.ndarray) -> float:
    ds = np.diff(s)
    if not np.allclose(ds, ds[0], rtol=1e-9, atol=0.0):
        raise ValueError("sample grid must be uniform")
    return float(ds[0])


def project_state(values: np.ndarray, s: np.ndarray, basis: ModeBasis) -> StateCoeffs:
    """Trapezoid projection of samples on [0, L] onto the basis.

    Requires at least 8 sample points per wavelength of the shortest retained
    eigenfunction.
    """
    s = np.asarray(s, dtype=float)
    values = np.asarray(values, dtype=complex)
    if s.shape != values.shape:
        raise ValueError("sample grid and values must have matching shapes")
    L = basis.config.length
    if not (np.isclose(s[0], 0.0, atol=1e-12 * L) and np.isclose(s[-1], L, rtol=1e-12)):
        raise ValueError("sample grid must span [0, L]")
    _check_uniform(s)
    kmax = basis.wavenumbers[-1]
    intervals = s.size - 1
    needed = 8.0 * L * kmax / (2.0 * np.pi)
    if intervals < needed:
        raise ValueError(
            f"grid too coarse: {intervals} intervals but the shortest retained "
            f"wavelength needs at least {int(np.ceil(needed))}"
        )
    w = trapezoid_weights(s)
    coeffs = basis.eval_modes(s).T @ (w * values)
    return StateCoeffs(basis=basis, values=coeffs)


def synthesize(state: StateCoeffs, s: np.ndarray) -> np.ndarray:
    """Pointwise reconstruction sum_n c_n e_n(s)."""
    return state.basis.eval_modes(s) @ state.values


def free_evolution(state: StateCoeffs, t: float) -> StateCoeffs:
    """Uncontrolled forward evolution: c_n -> exp(lambda_n t) c_n, t >= 0."""
    if t < 0:
        raise ValueError(f"the semigroup is forward-only, got t = {t}")
    return StateCoeffs(
        basis=state.basis,
        values=state.values * np.exp(state.basis.exponents * t),
    )
