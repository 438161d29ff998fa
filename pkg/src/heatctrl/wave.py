"""Exact null control of the 1D second-order (wave) system, plus the
reflection-extended trajectory consumed by the transmutation step.

The system on (0, L0) with Dirichlet control at the right end reads, per mode,

    d^2 z_n/dt^2 = mu_n z_n + b_n v(t),   z_n(0) = z0_n,  zdot_n(0) = 0,

with real coupling b_n = -e_n'(L0) (angle-0 basis).  Nulling both z_n and
zdot_n at the horizon H is equivalent to the oscillatory moments

    integral_0^H v(t) exp(+-i w_n (H - t)) dt = d_n^{+-},
    d_n^{+-} = -+ i (w_n z0_n / b_n) exp(+-i w_n H),      w_n = k_n.

The min-norm v lives in the span of the conjugate kernels and solves the same
Hermitian normal equations as the parabolic moment problem; at the shortest
admissible horizon H = 2 L0 the Gram is exactly diagonal with entries H
(full-period orthogonality of the harmonics), and the cost bound comes out
kappa_2 = L0 / H for every mode.

Horizons below 2 L0 are rejected: a boundary ray needs two traversals of the
interval, and the missing constraints make the infinite problem rank
deficient there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .moments import exp_gram, exp_integral, _cutoff_solve, CUTOFF_STANDARD
from .spectral import (
    ControlSignal,
    ModeBasis,
    StateCoeffs,
    TimeGrid,
    trapezoid_weights,
)

__all__ = [
    "WaveProblem", "OscillatoryMoments", "WaveControl", "WaveTrajectory",
    "wave_moment_targets", "solve_wave_control", "wave_trajectory",
    "extend_by_reflection",
]


@dataclass(eq=False)
class WaveProblem:
    """Second-order null-control problem: basis (angle 0), state, horizon."""

    basis: ModeBasis
    z0: StateCoeffs
    horizon: float

    def __post_init__(self):
        if not np.isclose(self.basis.config.angle, 0.0, atol=1e-14):
            raise ValueError("the second-order system uses an angle-0 basis")
        if self.z0.basis is not self.basis:
            raise ValueError("initial state must live in the problem basis")
        L0 = self.basis.config.length
        if self.horizon < 2.0 * L0 - 1e-12 * L0:
            raise ValueError(
                f"horizon {self.horizon} is below the 1D geometric control time {2 * L0}"
            )


@dataclass(eq=False)
class OscillatoryMoments:
    """Purely oscillatory analogue of a moment problem (wave constraints)."""

    exponents: np.ndarray   # interleaved (+i w_1, -i w_1, +i w_2, ...)
    targets: np.ndarray
    horizon: float


@dataclass(eq=False)
class WaveControl:
    """Min-norm wave input with its Gram data and cost estimate."""

    control: ControlSignal
    coefficients: np.ndarray
    moments: OscillatoryMoments
    kappa2: float
    gram_condition: float
    norm_sq: float

    def sample(self, times: np.ndarray) -> np.ndarray:
        tail = self.moments.horizon - np.asarray(times, dtype=float)
        ex = np.exp(np.conj(self.moments.exponents)[None, :] * tail[:, None])
        return ex @ self.coefficients


@dataclass(eq=False)
class WaveTrajectory:
    """Even-reflected trajectory on [-H, H]: state rows per mode, input, cost."""

    basis: ModeBasis
    s: np.ndarray             # symmetric grid, odd length, s[mid] = 0
    zbar: np.ndarray          # (modes, len(s))
    dzbar_ds: np.ndarray      # (modes, len(s))
    vbar: np.ndarray          # (len(s),)
    kappa2: float

    @property
    def vbar_norm_sq(self) -> float:
        w = trapezoid_weights(self.s)
        return float(np.real(w @ (np.abs(self.vbar) ** 2)))


def wave_moment_targets(z0: StateCoeffs, horizon: float) -> OscillatoryMoments:
    """Oscillatory constraints equivalent to z(H) = 0 and zdot(H) = 0."""
    basis = z0.basis
    omega = basis.wavenumbers
    b = basis.fluxes
    if np.max(np.abs(b.imag)) > 1e-14 * np.max(np.abs(b.real)):
        raise ValueError("wave coupling must be real; use an angle-0 basis")
    b = b.real
    n = basis.truncation
    exponents = np.empty(2 * n, dtype=complex)
    targets = np.empty(2 * n, dtype=complex)
    ratio = omega * z0.values / b
    exponents[0::2] = 1j * omega
    exponents[1::2] = -1j * omega
    targets[0::2] = -1j * ratio * np.exp(1j * omega * horizon)
    targets[1::2] = +1j * ratio * np.exp(-1j * omega * horizon)
    return OscillatoryMoments(exponents=exponents, targets=targets, horizon=horizon)


def solve_wave_control(problem: WaveProblem, samples: int | None = None,
                       cutoff: float = CUTOFF_STANDARD) -> WaveControl:
    """Min-norm input over the oscillatory moment family.

    At horizon = 2 L0 the Gram is diagonal (entries = horizon) and the solve
    is a division; generic admissible horizons go through the cutoff solve.
    """
    moments = wave_moment_targets(problem.z0, problem.horizon)
    H = exp_gram(moments.exponents, moments.horizon)
    cond = float(np.linalg.cond(H))
    a = _cutoff_solve(H, moments.targets, cutoff)
    norm_sq = float(np.real(np.vdot(a, moments.targets)))

    # kappa_2 = sup over unit states of the min-norm input cost
    omega = problem.basis.wavenumbers
    b = problem.basis.fluxes.real
    M = np.zeros((2 * problem.basis.truncation, problem.basis.truncation), dtype=complex)
    ratio = omega / b
    idx = np.arange(problem.basis.truncation)
    M[2 * idx, idx] = -1j * ratio * np.exp(1j * omega * moments.horizon)
    M[2 * idx + 1, idx] = +1j * ratio * np.exp(-1j * omega * moments.horizon)
    K = M.conj().T @ np.linalg.solve(H, M)
    K = 0.5 * (K + K.conj().T)
    kappa2 = float(np.linalg.eigvalsh(K)[-1])

    if samples is None:
        samples = 8 * 64 * max(1, int(np.ceil(moments.horizon))) + 1
    grid = TimeGrid(0.0, moments.horizon, samples)
    tail = moments.horizon - grid.times
    values = np.exp(np.conj(moments.exponents)[None, :] * tail[:, None]) @ a
    control = ControlSignal(grid=grid, values=values)
    return WaveControl(control=control, coefficients=a, moments=moments,
                       kappa2=kappa2, gram_condition=cond, norm_sq=norm_sq)


def wave_trajectory(problem: WaveProblem, solved: WaveControl,
                    times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (z, zdot) rows per mode at the requested times.

    Uses w_pm = zdot +- i omega z, whose Duhamel integral against the
    exponential-sum input has the explicit primitive exp_integral; the result
    is exact up to roundoff, so terminal flatness at the horizon reflects the
    moment solve alone, not quadrature.
    """
    basis = problem.basis
    omega = basis.wavenumbers
    b = basis.fluxes.real
    a = solved.coefficients
    eps_c = np.conj(solved.moments.exponents)
    H = solved.moments.horizon
    times = np.asarray(times, dtype=float)

    w = {}
    for sign in (+1.0, -1.0):
        lam = 1j * sign * omega
        # integral_0^t exp(lam (t-tau)) exp(eps_c (H - tau)) d tau
        #   = exp(eps_c (H - t)) * exp_integral(lam + eps_c, t)
        z = lam[:, None] + eps_c[None, :]
        phi = exp_integral(z[None, :, :], times[:, None, None])
        tailf = np.exp(eps_c[None, :] * (H - times)[:, None])
        forced = np.einsum("m,tnm,tm->tn", a, phi, tailf)
        free = np.exp(lam[None, :] * times[:, None]) * (sign * 1j * omega * problem.z0.values)[None, :]
        w[sign] = free + b[None, :] * forced
    z = ((w[+1.0] - w[-1.0]) / (2j * omega[None, :])).T
    zdot = (0.5 * (w[+1.0] + w[-1.0])).T
    return z, zdot


def extend_by_reflection(problem: WaveProblem, solved: WaveControl,
                         s_half: np.ndarray,
                         flatness_tol: float = 1e-8) -> WaveTrajectory:
    """Even extension of (z, v) to [-H, H] on a sign-symmetric grid.

    `s_half` are the nonnegative nodes (0 ... H); the full grid is the exact
    mirror, so evenness holds bitwise.  Terminal flatness at the horizon is
    checked (velocity weighted by 1/omega) and violations are reported with
    the measured defect.
    """
    s_half = np.asarray(s_half, dtype=float)
    if not (np.isclose(s_half[0], 0.0, atol=1e-14) and
            np.isclose(s_half[-1], solved.moments.horizon, rtol=1e-12)):
        raise ValueError("s_half must run from 0 to the wave horizon")
    z, zdot = wave_trajectory(problem, solved, s_half)
    omega = problem.basis.wavenumbers
    scale = max(problem.z0.norm(), 1e-300)
    defect = max(
        float(np.max(np.abs(z[:, -1]))),
        float(np.max(np.abs(zdot[:, -1] / omega))),
    )
    if defect > flatness_tol * scale:
        raise ValueError(
            f"terminal flatness violated: defect {defect:.3e} exceeds "
            f"{flatness_tol:.1e} * |z0| = {flatness_tol * scale:.3e}"
        )
    s = np.concatenate([-s_half[::-1], s_half[1:]])
    zbar = np.concatenate([z[:, ::-1], z[:, 1:]], axis=1)
    dz = np.concatenate([-zdot[:, ::-1], zdot[:, 1:]], axis=1)
    v_half = solved.sample(s_half)
    vbar = np.concatenate([v_half[::-1], v_half[1:]])
    return WaveTrajectory(basis=problem.basis, s=s, zbar=zbar, dzbar_ds=dz,
                          vbar=vbar, kappa2=solved.kappa2)
