"""Transmutation of wave controls into rotated-diffusion controls.

Given the Dirac-seeded kernel k on [0, T] x [-L, L] and the even-reflected
wave pair (zbar, vbar) on [-L, L], the transmuted trajectory and input are

    x(t) = integral k(t, s) zbar(s) ds,     u(t) = integral k(t, s) vbar(s) ds,

computed by the declared trapezoid quadrature on the shared s-grid.  The t=0
Dirac marker gives x(0) = zbar(0) = x0 and u(0) = vbar(0) exactly.

No extra phase multiplies u: with the boundary coupling convention
b_n = -exp(i*theta) e_n'(L0) (the input is the physical Dirichlet trace), the
rotation factor already lives inside b_n, and integrating the kernel equation
d_t k = exp(+i*theta) d_s^2 k by parts against the wave identity
d_s^2 zbar = mu zbar + b_wave vbar closes the first-order system with u as
written.  `verify_weak_solution` adjudicates this empirically: under the
plus_theta convention the residual sits at the discretization floor, while
either the minus_theta kernel or an extra exp(i*theta) phase on u leaves an
O(1) residual at theta != 0.

Magnitudes: the kernel inherits values of order exp(c L^2/T), c ~ 0.7, from
its control phase.  The full chain is verifiable at desk scale only while
those magnitudes stay well below 1/eps; `end_to_end` reports honestly either
way and `TransmutationReport.bound_rhs` records what the cost inequality
claims.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import KernelGrid, build_kernel, fit_cost_constants, kernel_l2_norm
from .simulate import SimConfig, simulate_first_order
from .spectral import (
    BoundaryConfig,
    ControlSignal,
    ModeBasis,
    StateCoeffs,
    TimeGrid,
    build_basis,
)
from .wave import WaveProblem, WaveTrajectory, extend_by_reflection, solve_wave_control

__all__ = [
    "TransmutationReport", "TransmutationRun", "transmute_control",
    "transmute_state", "verify_weak_solution", "end_to_end",
]


@dataclass(eq=False)
class TransmutationReport:
    """Outcome of one end-to-end transmutation."""

    terminal_norm_ratio: float   # |x(T)| / |x0| from the simulator replay
    weak_residual: float         # max relative first-order residual over modes
    control_cost: float          # integral |u|^2
    bound_rhs: float             # 2 kappa2 gamma exp(alpha L^2/T) |x0|^2
    bound_satisfied: bool
    kappa2: float
    kernel_l2_sq: float
    vbar_norm_sq: float
    wave_cost: float             # integral_0^L |v|^2
    direct_cost: float           # min-norm cost of the same state, direct route
    cauchy_product: float        # kernel_l2_sq * vbar_norm_sq
    fitted_gamma: float
    fitted_alpha: float
    x0_norm: float
    precision_limited: bool

    def to_dict(self) -> dict:
        return {k: (v if not isinstance(v, (np.floating, np.bool_)) else v.item())
                for k, v in self.__dict__.items()}


@dataclass(eq=False)
class TransmutationRun:
    """Report plus the artifacts it was computed from."""

    report: TransmutationReport
    control: ControlSignal
    times: np.ndarray
    state_traj: np.ndarray       # (len(times), modes) transmuted trajectory
    kernel: KernelGrid
    wave: WaveTrajectory


def _check_shared_grid(kernel: KernelGrid, wave: WaveTrajectory):
    if kernel.s.shape != wave.s.shape or not np.allclose(kernel.s, wave.s,
                                                         rtol=0.0, atol=1e-12):
        raise ValueError("kernel and wave trajectory must share the s-grid")


def _wall_derivative_vectors(kernel: KernelGrid) -> np.ndarray:
    """Rows of ee_n'(+-L) over the kernel's twofold modes, orthonormalized.

    During the kernel's control phase the projected wall forcing acts on a
    test function phi through sum_n ee_n'(+-L) <ee_n, phi>, the wall
    derivative of the *projected* phi.  The continuum identity sends the true
    wall derivatives of the reflected wave state to zero (terminal flatness),
    but a finite mode family leaks O(1/k_N^2); projecting the pairings onto
    the complement of these two vectors restores the cancellation exactly,
    with an O(|leak| / |k|) perturbation of the test data.
    """
    n = np.arange(1, kernel.truncation + 1)
    k = kernel.basis.wavenumbers
    amp = np.sqrt(1.0 / kernel.L) * k
    g_plus = amp * ((-1.0) ** n)
    g_minus = amp.copy()
    basis_rows = []
    for g in (g_plus, g_minus):
        v = g.astype(complex)
        for b in basis_rows:
            v = v - b * np.vdot(b, v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-12 * np.linalg.norm(g):
            basis_rows.append(v / nrm)
    return np.array(basis_rows)


def _compatible_pairings(kernel: KernelGrid, phi: np.ndarray) -> np.ndarray:
    p = kernel.test_function_pairings(phi)
    for b in _wall_derivative_vectors(kernel):
        p = p - b * np.vdot(b, p)
    return p


def transmute_control(kernel: KernelGrid, wave: WaveTrajectory,
                      samples: int | None = None) -> ControlSignal:
    """u(t) = integral k(t, s) vbar(s) ds on [0, T], u(0) = vbar(0).

    With `samples` the control is evaluated on a denser uniform grid through
    the kernel's exact mode coefficients paired against vbar; the pairing is
    the same trapezoid quadrature, reassociated, so both routes agree to
    roundoff on shared nodes.
    """
    _check_shared_grid(kernel, wave)
    mid = wave.s.size // 2
    u0 = wave.vbar[mid]
    if samples is None:
        grid = TimeGrid(0.0, kernel.T, kernel.times.size + 1)
        w = kernel.s_weights
        inner = kernel.values @ (w * wave.vbar)
    else:
        grid = TimeGrid(0.0, kernel.T, samples)
        pair = kernel.test_function_pairings(wave.vbar)
        inner = kernel.mode_coefficients(grid.times[1:]) @ pair
    return ControlSignal(grid, np.concatenate([[u0], inner]))


def transmute_state(kernel: KernelGrid, wave: WaveTrajectory,
                    compatible: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """x_m(t) = integral k(t, s) zbar_m(s) ds; x(0) = zbar(0) = x0 exactly.

    With `compatible` (default) the state rows are paired through the
    wall-compatibility projection (see _wall_derivative_vectors), which the
    continuum formula satisfies identically and which removes the truncated
    wall-forcing leak from the transmuted dynamics.  Returns (times including
    0, trajectory of shape (len(times), modes)).
    """
    _check_shared_grid(kernel, wave)
    mid = wave.s.size // 2
    x0_row = wave.zbar[:, mid]
    times = np.concatenate([[0.0], kernel.times])
    if compatible:
        P = np.stack([_compatible_pairings(kernel, wave.zbar[m])
                      for m in range(wave.zbar.shape[0])], axis=1)
        rows = kernel.mode_coefficients(kernel.times) @ P
    else:
        w = kernel.s_weights
        rows = kernel.values @ (w[:, None] * wave.zbar.T)
    return times, np.vstack([x0_row, rows])


def verify_weak_solution(times: np.ndarray, traj: np.ndarray, u: np.ndarray,
                         basis: ModeBasis,
                         exclude: np.ndarray | None = None) -> float:
    """Max over modes of the relative first-order residual.

    r_m(t) = D_t x_m - lambda_m x_m - b_m u(t) with centered time differences;
    each mode's residual L2 norm is scaled by the L2 size of the equation's
    own terms.  `exclude` masks rows (e.g. around the kernel's phase seam,
    where u has a kink and centered differences lose an order).
    """
    times = np.asarray(times, dtype=float)
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-9):
        raise ValueError("weak residual needs a uniform time grid")
    dx = np.gradient(traj, dt, axis=0)
    lam = basis.exponents
    b = basis.fluxes
    r = dx - lam[None, :] * traj - b[None, :] * np.asarray(u)[:, None]
    keep = np.ones(times.size, dtype=bool)
    keep[[0, -1]] = False
    if exclude is not None:
        keep[np.asarray(exclude, dtype=int)] = False
    num = np.sqrt(np.sum(np.abs(r[keep]) ** 2, axis=0) * dt)
    den = np.sqrt(np.sum((np.abs(lam[None, :] * traj[keep])
                          + np.abs(b[None, :] * np.asarray(u)[keep, None])) ** 2,
                         axis=0) * dt)
    return float(np.max(num / np.maximum(den, 1e-300)))


def _seam_exclusion(kernel: KernelGrid, width: int = 2) -> np.ndarray:
    seam_full = kernel.seam_index + 1      # +1: trajectory rows include t = 0
    return np.arange(seam_full - width, seam_full + width + 1)


def end_to_end(x0: StateCoeffs, wave_horizon: float, T: float,
               resolution: float = 1.0,
               precision: str = "extended", dps: int | None = None,
               split: float = 0.5,
               fit_factors: tuple = (1.0, 1.5, 2.25),
               cost_constants: tuple | None = None,
               replay_samples: int = 65537,
               kernel_kwargs: dict | None = None) -> TransmutationRun:
    """Wave control -> reflection -> kernel -> transmutation -> replay.

    `x0` lives in the target basis on (0, L0) at angle theta; the wave runs on
    the same interval at angle 0.  The report's bound constants (gamma, alpha)
    are fitted from kernel norms at `fit_factors` * T unless given explicitly.
    """
    basis = x0.basis
    L0 = basis.config.length
    theta = basis.config.angle
    if wave_horizon < 2.0 * L0 * (1 - 1e-12):
        raise ValueError(
            f"wave horizon {wave_horizon} is below the 1D geometric control time {2 * L0}"
        )
    norm0 = x0.norm()
    kernel_kwargs = dict(kernel_kwargs or {})
    kernel_kwargs.setdefault("resolution", resolution)
    kernel_kwargs.setdefault("precision", precision)
    kernel_kwargs.setdefault("dps", dps)
    kernel_kwargs.setdefault("split", split)
    kernel = build_kernel(wave_horizon, T, theta, **kernel_kwargs)

    wave_basis = build_basis(BoundaryConfig(L0, basis.config.left, 0.0),
                             basis.truncation)
    z0 = StateCoeffs(basis=wave_basis, values=x0.values.copy())
    problem = WaveProblem(basis=wave_basis, z0=z0, horizon=wave_horizon)
    solved = solve_wave_control(problem)
    mid = kernel.s.size // 2
    wave = extend_by_reflection(problem, solved, kernel.s[mid:])

    control = transmute_control(kernel, wave, samples=replay_samples)
    times, traj = transmute_state(kernel, wave)
    u_on_grid = transmute_control(kernel, wave)
    weak = verify_weak_solution(times, traj, u_on_grid.values, basis,
                                exclude=_seam_exclusion(kernel))

    if norm0 == 0.0:
        zero = ControlSignal(control.grid, np.zeros_like(control.values))
        report = TransmutationReport(
            terminal_norm_ratio=0.0, weak_residual=0.0, control_cost=0.0,
            bound_rhs=0.0, bound_satisfied=True, kappa2=solved.kappa2,
            kernel_l2_sq=kernel_l2_norm(kernel) ** 2, vbar_norm_sq=0.0,
            wave_cost=0.0, direct_cost=0.0, cauchy_product=0.0,
            fitted_gamma=0.0, fitted_alpha=0.0, x0_norm=0.0,
            precision_limited=kernel.precision_limited)
        return TransmutationRun(report=report, control=zero, times=times,
                                state_traj=traj, kernel=kernel, wave=wave)

    sim = SimConfig(scheme="spectral", nodes=0, grid=control.grid, theta=theta)
    replay = simulate_first_order(x0, control, sim)
    terminal_ratio = replay.terminal.norm() / norm0

    control_cost = control.norm_sq()
    k2 = kernel_l2_norm(kernel) ** 2
    vbar2 = wave.vbar_norm_sq
    if cost_constants is None:
        gamma, alpha, _, _ = fit_cost_constants(
            wave_horizon, theta, [f * T for f in fit_factors], **kernel_kwargs)
    else:
        gamma, alpha = cost_constants
    bound_rhs = 2.0 * solved.kappa2 * gamma * np.exp(alpha * wave_horizon ** 2 / T) * norm0 ** 2
    dproblem_cost = _direct_cost_of_state(x0, T)

    report = TransmutationReport(
        terminal_norm_ratio=float(terminal_ratio),
        weak_residual=float(weak),
        control_cost=float(control_cost),
        bound_rhs=float(bound_rhs),
        bound_satisfied=bool(control_cost <= bound_rhs),
        kappa2=float(solved.kappa2),
        kernel_l2_sq=float(k2),
        vbar_norm_sq=float(vbar2),
        wave_cost=float(solved.norm_sq),
        direct_cost=float(dproblem_cost),
        cauchy_product=float(k2 * vbar2),
        fitted_gamma=float(gamma),
        fitted_alpha=float(alpha),
        x0_norm=float(norm0),
        precision_limited=bool(kernel.precision_limited),
    )
    return TransmutationRun(report=report, control=control, times=times,
                            state_traj=traj, kernel=kernel, wave=wave)


def _direct_cost_of_state(x0: StateCoeffs, T: float) -> float:
    from .moments import gram_matrix, moment_targets, solve_min_norm

    problem = moment_targets(x0, T)
    gram = gram_matrix(problem, precision="extended")
    solved = solve_min_norm(problem, gram, samples=2)
    return solved.norm_sq
