"""Independent forward solvers used as oracles for every control pipeline.

Two deliberately different routes for each system:

* spectral: exact per-mode propagation with composite-trapezoid Duhamel
  quadrature of the boundary input (the recurrence is evaluated with an IIR
  filter, so it is bit-identical to the cumulative trapezoid sum);
* finite difference: Crank-Nicolson stepping for the first-order equation
  with the Dirichlet boundary value substituted at the control node and the
  stencil's reference to it moved to the right-hand side; explicit leapfrog
  for the second-order equation under the CFL limit dt <= ds.

Accuracy gate for the implicit scheme (declared budget): at least 8 spatial
nodes per shortest retained wavelength when projecting onto a basis, and
dt * max|Re lambda| <= 0.5.  The scheme itself is unconditionally stable;
the gate protects accuracy, not stability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.signal import lfilter

from .spectral import (
    ControlSignal,
    LeftKind,
    ModeBasis,
    StateCoeffs,
    TimeGrid,
    trapezoid_weights,
)

__all__ = [
    "SimConfig", "FirstOrderRun", "SecondOrderRun",
    "simulate_first_order", "simulate_second_order",
    "mode_energies", "trajectory_to_csv",
]

SCHEME_SPECTRAL = "spectral"
SCHEME_FD = "finite_difference"


@dataclass(frozen=True)
class SimConfig:
    """Scheme choice, spatial resolution (finite difference only), time grid."""

    scheme: str
    nodes: int
    grid: TimeGrid
    theta: float = 0.0

    def __post_init__(self):
        if self.scheme not in (SCHEME_SPECTRAL, SCHEME_FD):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(eq=False)
class FirstOrderRun:
    times: np.ndarray
    coeffs: np.ndarray        # (samples, modes)
    terminal: StateCoeffs
    field: np.ndarray | None = None   # (samples, nodes), finite difference only
    s: np.ndarray | None = None


@dataclass(eq=False)
class SecondOrderRun:
    times: np.ndarray
    coeffs: np.ndarray        # (samples, modes) positions
    velocity: np.ndarray      # (samples, modes)
    terminal_energy: float    # sum |z_n|^2 + |zdot_n / omega_n|^2 at the end
    field: np.ndarray | None = None
    s: np.ndarray | None = None


def _resample(u: ControlSignal, grid: TimeGrid) -> np.ndarray:
    if u.grid == grid:
        return u.values
    t = grid.times
    if t[0] < u.grid.start - 1e-12 or t[-1] > u.grid.end + 1e-12:
        raise ValueError("control signal does not cover the simulation grid")
    src = u.grid.times
    return np.interp(t, src, u.values.real) + 1j * np.interp(t, src, u.values.imag)


def _check_theta(basis: ModeBasis, sim: SimConfig):
    if not np.isclose(basis.config.angle, sim.theta, rtol=0.0, atol=1e-14):
        raise ValueError(
            f"SimConfig.theta={sim.theta} disagrees with the basis angle {basis.config.angle}"
        )


def _filter_recurrence(factor: np.ndarray, driven: np.ndarray) -> np.ndarray:
    """c_i = factor * c_{i-1} + driven_i per column, c entering via driven_0."""
    out = np.empty_like(driven)
    for j in range(driven.shape[1]):
        out[:, j] = lfilter([1.0], [1.0, -factor[j]], driven[:, j])
    return out


def simulate_first_order(x0: StateCoeffs, u: ControlSignal, sim: SimConfig) -> FirstOrderRun:
    """Forward trajectory of dc/dt = lambda c + b u from x0 under input u."""
    basis = x0.basis
    _check_theta(basis, sim)
    if sim.scheme == SCHEME_SPECTRAL:
        return _first_order_spectral(x0, u, sim)
    return _first_order_fd(x0, u, sim)


def _first_order_spectral(x0: StateCoeffs, u: ControlSignal, sim: SimConfig) -> FirstOrderRun:
    basis = x0.basis
    grid = sim.grid
    t = grid.times
    dt = grid.spacing
    lam = basis.exponents
    b = basis.fluxes
    uu = _resample(u, grid)

    E = np.exp(lam * dt)
    f = uu[:, None] * b[None, :]
    driven = np.empty((grid.samples, basis.truncation), dtype=complex)
    driven[0] = x0.values
    driven[1:] = 0.5 * dt * (E[None, :] * f[:-1] + f[1:])
    coeffs = _filter_recurrence(E, driven)
    terminal = StateCoeffs(basis=basis, values=coeffs[-1].copy())
    return FirstOrderRun(times=t, coeffs=coeffs, terminal=terminal)


def _fd_grid(basis: ModeBasis, nodes: int):
    L = basis.config.length
    kmax = basis.wavenumbers[-1]
    needed = int(np.ceil(8.0 * L * kmax / (2.0 * np.pi)))
    if nodes - 1 < needed:
        raise ValueError(
            f"accuracy gate: {nodes} nodes but the basis needs at least {needed + 1}"
        )
    return np.linspace(0.0, L, nodes)


def _first_order_fd(x0: StateCoeffs, u: ControlSignal, sim: SimConfig) -> FirstOrderRun:
    basis = x0.basis
    grid = sim.grid
    s = _fd_grid(basis, sim.nodes)
    ds = s[1] - s[0]
    dt = grid.spacing
    rate = float(np.max(np.abs(basis.exponents.real)))
    if dt * rate > 0.5:
        raise ValueError(
            f"accuracy gate: dt*max|Re lambda| = {dt * rate:.3g} exceeds 0.5"
        )
    uu = _resample(u, grid)
    from .spectral import synthesize

    field = np.empty((grid.samples, sim.nodes), dtype=complex)
    field[0] = synthesize(x0, s)
    field[0, -1] = uu[0]
    dirichlet_left = basis.config.left == LeftKind.DIRICHLET
    if dirichlet_left:
        field[0, 0] = 0.0

    # unknowns: interior nodes, plus the left node itself for a Neumann wall
    lo = 1 if dirichlet_left else 0
    n_un = sim.nodes - 1 - lo
    r = np.exp(1j * basis.config.angle) * dt / (2.0 * ds * ds)

    main = np.full(n_un, 1.0 + 2.0 * r, dtype=complex)
    upper = np.full(n_un, -r, dtype=complex)
    lower = np.full(n_un, -r, dtype=complex)
    if not dirichlet_left:
        upper[1] = -2.0 * r   # mirrored neighbor at the Neumann wall
    ab = np.zeros((3, n_un), dtype=complex)
    ab[0, 1:] = upper[1:]
    ab[1, :] = main
    ab[2, :-1] = lower[:-1]

    def explicit_half(vec, left_bc, right_bc):
        out = (1.0 - 2.0 * r) * vec
        out[1:] += r * vec[:-1]
        out[:-1] += r * vec[1:]
        if dirichlet_left:
            out[0] += r * left_bc
        else:
            out[0] = (1.0 - 2.0 * r) * vec[0] + 2.0 * r * vec[1]
        out[-1] += r * right_bc
        return out

    for i in range(1, grid.samples):
        prev = field[i - 1, lo:-1]
        rhs = explicit_half(prev, 0.0, field[i - 1, -1])
        rhs[-1] += r * uu[i]           # implicit half sees the new boundary value
        if dirichlet_left:
            rhs[0] += r * 0.0
        vec = solve_banded((1, 1), ab, rhs)
        field[i, lo:-1] = vec
        field[i, -1] = uu[i]
        if dirichlet_left:
            field[i, 0] = 0.0

    w = trapezoid_weights(s)
    modes = basis.eval_modes(s)
    coeffs = field @ (w[:, None] * modes)
    terminal = StateCoeffs(basis=basis, values=coeffs[-1].copy())
    return FirstOrderRun(times=grid.times, coeffs=coeffs, terminal=terminal,
                         field=field, s=s)


def simulate_second_order(z0: StateCoeffs, v: ControlSignal, sim: SimConfig) -> SecondOrderRun:
    """Forward trajectory of d^2 z/dt^2 = mu z + b v from (z0, 0)."""
    basis = z0.basis
    if not np.isclose(basis.config.angle, 0.0, atol=1e-14):
        raise ValueError("second-order runs use an angle-0 basis")
    if sim.theta != 0.0:
        raise ValueError("second-order runs require theta = 0")
    if sim.scheme == SCHEME_SPECTRAL:
        return _second_order_spectral(z0, v, sim)
    return _second_order_fd(z0, v, sim)


def _second_order_spectral(z0: StateCoeffs, v: ControlSignal, sim: SimConfig) -> SecondOrderRun:
    # w_pm = zdot +- i omega z obey dw/dt = +-i omega w + b v: two scalar
    # filters per mode reproduce trapezoid Duhamel exactly.
    basis = z0.basis
    grid = sim.grid
    dt = grid.spacing
    omega = basis.wavenumbers
    b = basis.fluxes.real  # angle 0: real coupling
    vv = _resample(v, grid)
    f = vv[:, None] * b[None, :]

    runs = []
    for sign in (+1.0, -1.0):
        lam = 1j * sign * omega
        E = np.exp(lam * dt)
        driven = np.empty((grid.samples, basis.truncation), dtype=complex)
        driven[0] = sign * 1j * omega * z0.values
        driven[1:] = 0.5 * dt * (E[None, :] * f[:-1] + f[1:])
        runs.append(_filter_recurrence(E, driven))
    wp, wm = runs
    coeffs = (wp - wm) / (2j * omega[None, :])
    velocity = 0.5 * (wp + wm)
    energy = float(np.sum(np.abs(coeffs[-1]) ** 2 + np.abs(velocity[-1] / omega) ** 2))
    return SecondOrderRun(times=grid.times, coeffs=coeffs, velocity=velocity,
                          terminal_energy=energy)


def _second_order_fd(z0: StateCoeffs, v: ControlSignal, sim: SimConfig) -> SecondOrderRun:
    basis = z0.basis
    grid = sim.grid
    s = _fd_grid(basis, sim.nodes)
    ds = s[1] - s[0]
    dt = grid.spacing
    if dt > ds:
        raise ValueError(f"leapfrog CFL violated: dt = {dt:.3g} > ds = {ds:.3g}")
    vv = _resample(v, grid)
    from .spectral import synthesize

    c2 = (dt / ds) ** 2
    dirichlet_left = basis.config.left == LeftKind.DIRICHLET

    def lap(z):
        out = np.zeros_like(z)
        out[1:-1] = z[2:] - 2.0 * z[1:-1] + z[:-2]
        if not dirichlet_left:
            out[0] = 2.0 * (z[1] - z[0])
        return out

    field = np.empty((grid.samples, sim.nodes), dtype=complex)
    z_prev = synthesize(z0, s)
    z_prev[-1] = vv[0]
    if dirichlet_left:
        z_prev[0] = 0.0
    # zdot(0) = 0: first step by the second-order Taylor start
    z_cur = z_prev + 0.5 * c2 * lap(z_prev)
    z_cur[-1] = vv[1] if grid.samples > 1 else vv[0]
    if dirichlet_left:
        z_cur[0] = 0.0
    field[0] = z_prev
    if grid.samples > 1:
        field[1] = z_cur
    for i in range(2, grid.samples):
        z_new = 2.0 * z_cur - z_prev + c2 * lap(z_cur)
        z_new[-1] = vv[i]
        if dirichlet_left:
            z_new[0] = 0.0
        field[i] = z_new
        z_prev, z_cur = z_cur, z_new

    w = trapezoid_weights(s)
    modes = basis.eval_modes(s)
    coeffs = field @ (w[:, None] * modes)
    velocity = np.gradient(coeffs, dt, axis=0)
    omega = basis.wavenumbers
    energy = float(np.sum(np.abs(coeffs[-1]) ** 2 + np.abs(velocity[-1] / omega) ** 2))
    return SecondOrderRun(times=grid.times, coeffs=coeffs, velocity=velocity,
                          terminal_energy=energy, field=field, s=s)


def mode_energies(run: SecondOrderRun, basis: ModeBasis) -> np.ndarray:
    """Classical per-mode energies omega^2 |z|^2 + |zdot|^2 over time."""
    omega = basis.wavenumbers
    return (np.abs(run.coeffs) ** 2) * omega[None, :] ** 2 + np.abs(run.velocity) ** 2


def _format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def trajectory_to_csv(times: np.ndarray, frames: np.ndarray, path,
                      header_lines: list[str] | None = None,
                      column_label: str = "node"):
    """CSV export: one row per time, first column t, then node values."""
    with open(path, "w") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        cols = ",".join(f"{column_label}{j}" for j in range(frames.shape[1]))
        fh.write(f"t,{cols}\n")
        for t, row in zip(times, frames):
            vals = ",".join(_format_complex(z) for z in row)
            fh.write(f"{t:.17g},{vals}\n")
