"""Min-norm null control by the exponential moment method.

Driving mode n to zero at time T under dc_n/dt = lambda_n c_n + b_n u(t)
is equivalent to the moment constraints

    integral_0^T u(t) g_n(t) dt = d_n,
    g_n(t) = exp(lambda_n (T - t)),   d_n = -exp(lambda_n T) c_n / b_n.

The minimum-norm solution lies in span{conj(g_m)}; writing
u(t) = sum_m a_m conj(g_m(t)) turns the constraints into the Hermitian
normal equations H a = d with

    H[n, m] = integral_0^T g_n conj(g_m) dt
            = (exp((lambda_n + conj(lambda_m)) T) - 1) / (lambda_n + conj(lambda_m)),

evaluated in closed form (series branch near a vanishing denominator).
H is assembled exactly Hermitian.  The solve runs either in double
precision with a relative eigenvalue cutoff, or in extended precision
(mpmath) for short horizons where cond(H) exceeds the double budget.

The controllability cost at truncation N is

    kappa = sup_{|c| = 1} |u_min(c)|^2 = lambda_max(M^H H^{-1} M),

with M = diag(-exp(lambda_n T)/b_n), and the report carries the forward
simulated terminal norm of the worst-case state so the achieved accuracy
is visible rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import xprec
from .spectral import (
    BoundaryConfig,
    ControlSignal,
    StateCoeffs,
    TimeGrid,
    build_basis,
)

__all__ = [
    "MomentProblem", "GramSystem", "CostReport", "MinNormResult",
    "moment_targets", "gram_matrix", "solve_min_norm", "controllability_cost",
    "replay_min_norm", "exp_integral", "exp_gram",
]

CUTOFF_STANDARD = 1e-13
SERIES_BRANCH = 1e-6
NORM_CONSISTENCY_RTOL = 1e-4


def exp_integral(z: np.ndarray, t) -> np.ndarray:
    """integral_0^t exp(z*tau) d tau = (exp(z*t) - 1)/z, series branch for |z*t| < 1e-6."""
    z = np.asarray(z, dtype=complex)
    t = np.asarray(t, dtype=float)
    zt = z * t
    small = np.abs(zt) < SERIES_BRANCH
    zsafe = np.where(small, 1.0, z)
    with np.errstate(over="ignore"):
        closed = (np.exp(zt) - 1.0) / zsafe
    series = t * (1.0 + zt / 2.0 + zt * zt / 6.0 + zt * zt * zt / 24.0)
    return np.where(small, series, closed)


def exp_gram(exponents: np.ndarray, horizon: float) -> np.ndarray:
    """Gram matrix of {exp(lam_n (T-t))} on [0, T], exactly Hermitian."""
    lam = np.asarray(exponents, dtype=complex)
    z = lam[:, None] + np.conj(lam)[None, :]
    H = exp_integral(z, horizon)
    return 0.5 * (H + H.conj().T)


@dataclass(eq=False)
class MomentProblem:
    """Exponents, targets and horizon of one moment problem."""

    exponents: np.ndarray
    targets: np.ndarray
    horizon: float

    def __post_init__(self):
        self.exponents = np.asarray(self.exponents, dtype=complex)
        self.targets = np.asarray(self.targets, dtype=complex)
        if self.exponents.shape != self.targets.shape:
            raise ValueError("exponents and targets must have equal length")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if np.any(self.exponents.real >= 0):
            raise ValueError("moment exponents must have strictly negative real part")


@dataclass(eq=False)
class GramSystem:
    """Assembled normal equations with conditioning and solve policy."""

    matrix: np.ndarray
    condition: float
    precision: str           # "standard" | "extended"
    cutoff: float            # relative eigenvalue threshold (standard mode)
    dps: int = 0             # significant digits (extended mode)
    _mp: tuple | None = field(default=None, repr=False)


@dataclass(eq=False)
class MinNormResult:
    """Min-norm control with its reported and measured norms."""

    control: ControlSignal
    coefficients: np.ndarray
    norm_sq: float            # re(a^H d), the Gram-predicted squared norm
    quadrature_norm_sq: float
    moment_residual: float    # max |H a - d|

    @property
    def norm_consistent(self) -> bool:
        scale = max(self.norm_sq, 1e-300)
        return abs(self.quadrature_norm_sq - self.norm_sq) <= NORM_CONSISTENCY_RTOL * scale


@dataclass(eq=False)
class CostReport:
    """Controllability cost at one horizon, with achieved-accuracy residual."""

    T: float
    kappa: float
    truncation: int
    residual: float           # simulated terminal norm of the worst-case unit state
    condition: float
    worst_state: np.ndarray
    precision: str


def moment_targets(state: StateCoeffs, horizon: float) -> MomentProblem:
    """Null-control moment problem for an initial state over [0, horizon]."""
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    basis = state.basis
    b = basis.fluxes
    if np.any(b == 0):
        raise ValueError("degenerate boundary coupling: some mode has zero flux")
    lam = basis.exponents
    targets = -np.exp(lam * horizon) * state.values / b
    return MomentProblem(exponents=lam, targets=targets, horizon=horizon)


def gram_matrix(problem: MomentProblem, precision: str = "standard",
                cutoff: float | None = None, dps: int | None = None) -> GramSystem:
    """Assemble the Hermitian Gram system, attaching a condition estimate.

    Standard mode keeps the closed-form double matrix and solves through a
    relative eigenvalue cutoff.  Extended mode additionally assembles and
    inverts the matrix in software floats, escalating the working precision
    until the inverse verifies; the cutoff is then irrelevant (the full
    system is solved).
    """
    H = exp_gram(problem.exponents, problem.horizon)
    if precision == "standard":
        cond = float(np.linalg.cond(H))
        return GramSystem(matrix=H, condition=cond, precision=precision,
                          cutoff=CUTOFF_STANDARD if cutoff is None else cutoff)
    if precision == "extended":
        dps = xprec.DEFAULT_DPS if dps is None else dps
        Hinv, cond, dps_used = xprec.invert_gram(problem.exponents,
                                                 problem.horizon, dps)
        Hmp = xprec.gram_mp(problem.exponents, problem.horizon, dps_used)
        return GramSystem(matrix=H, condition=cond, precision=precision,
                          cutoff=0.0, dps=dps_used, _mp=(Hmp, Hinv))
    raise ValueError(f"unknown precision mode {precision!r}")


def _cutoff_solve(H: np.ndarray, rhs: np.ndarray, cutoff: float) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    wmax = max(w[-1], 0.0)
    keep = w > cutoff * wmax
    if wmax <= 0.0 or not np.any(keep):
        raise RuntimeError(
            "horizon too small for precision mode: raise precision or T"
        )
    y = V.conj().T @ rhs
    return V[:, keep] @ (y[keep] / w[keep])


def default_samples(exponents: np.ndarray, horizon: float) -> int:
    """At least 20 samples per e-folding time of the fastest retained mode."""
    rate = float(np.max(np.abs(np.real(exponents)))) if len(exponents) else 0.0
    return int(min(200001, max(1025, math.ceil(20.0 * rate * horizon) + 1)))


def sample_exponential_sum(coefficients: np.ndarray, exponents: np.ndarray,
                           horizon: float, times: np.ndarray) -> np.ndarray:
    """u(t) = sum_m a_m exp(conj(lam_m) (T - t)) on the given times."""
    tail = horizon - np.asarray(times, dtype=float)
    return np.exp(np.conj(exponents)[None, :] * tail[:, None]) @ coefficients


def solve_min_norm(problem: MomentProblem, gram: GramSystem,
                   samples: int | None = None,
                   grid: TimeGrid | None = None) -> MinNormResult:
    """Min-norm control meeting the moments, sampled on a time grid.

    In extended mode the coefficient solve runs in mpmath and the samples are
    evaluated in double precision afterwards; wild coefficient cancellation at
    very short horizons then shows up honestly in `quadrature_norm_sq` and in
    downstream replay residuals.
    """
    d = problem.targets
    if gram.precision == "extended":
        a, residual = xprec.apply_inverse(gram._mp[0], gram._mp[1], d, gram.dps)
    else:
        a = _cutoff_solve(gram.matrix, d, gram.cutoff)
        residual = float(np.max(np.abs(gram.matrix @ a - d))) if len(d) else 0.0
    if grid is None:
        n = default_samples(problem.exponents, problem.horizon) if samples is None else samples
        grid = TimeGrid(0.0, problem.horizon, n)
    values = sample_exponential_sum(a, problem.exponents, problem.horizon, grid.times)
    control = ControlSignal(grid=grid, values=values)
    norm_sq = float(np.real(np.vdot(a, d)))
    return MinNormResult(control=control, coefficients=a, norm_sq=norm_sq,
                         quadrature_norm_sq=control.norm_sq(),
                         moment_residual=residual)


def exponential_sum_trajectory(lambdas: np.ndarray, fluxes: np.ndarray,
                               c0: np.ndarray, coefficients: np.ndarray,
                               exponents: np.ndarray, window: float,
                               sigmas: np.ndarray) -> np.ndarray:
    """Exact trajectory of dc_j/ds = lam_j c_j + b_j u under an exponential-sum input.

    With u(sigma) = sum_m a_m exp(conj(eps_m) (window - sigma)) the Duhamel
    integral has the primitive exp_integral, so the returned (len(sigmas),
    len(lambdas)) array is exact up to roundoff; terminal values reflect the
    coefficient solve alone, not quadrature.
    """
    eps_c = np.conj(np.asarray(exponents, dtype=complex))
    lam = np.asarray(lambdas, dtype=complex)
    sig = np.asarray(sigmas, dtype=float)
    z = lam[:, None] + eps_c[None, :]
    phi = exp_integral(z[None, :, :], sig[:, None, None])
    tailf = np.exp(eps_c[None, :] * (window - sig)[:, None])
    forced = np.einsum("m,tjm,tm->tj", coefficients, phi, tailf)
    free = np.exp(lam[None, :] * sig[:, None]) * np.asarray(c0, dtype=complex)[None, :]
    return free + np.asarray(fluxes, dtype=complex)[None, :] * forced


def replay_min_norm(x0: StateCoeffs, problem: MomentProblem, result: MinNormResult,
                    tail: float | None = None,
                    samples: tuple[int, int] = (131073, 262145)) -> float:
    """Terminal norm after forward-simulating the min-norm control from x0.

    The exact min-norm control of a truncated moment set carries a stiff
    transient of width ~1/max|Re lambda| before T, so the replay grid splits
    there and resolves the transient with the finer segment.  Both segments
    run the spectral simulator (trapezoid Duhamel); chaining two uniform
    grids is the same quadrature rule on a piecewise-uniform grid.
    """
    from .simulate import SimConfig, simulate_first_order

    T = problem.horizon
    rate = float(np.max(np.abs(problem.exponents.real)))
    tail = min(T / 4.0, 12.0 / rate) if tail is None else tail
    a = result.coefficients
    state = x0
    for (lo, hi, n) in ((0.0, T - tail, samples[0]), (T - tail, T, samples[1])):
        grid = TimeGrid(lo, hi, n)
        u = ControlSignal(grid, sample_exponential_sum(a, problem.exponents, T, grid.times))
        sim = SimConfig(scheme="spectral", nodes=0, grid=grid,
                        theta=x0.basis.config.angle)
        state = simulate_first_order(state, u, sim).terminal
    return state.norm()


def controllability_cost(config: BoundaryConfig, truncation: int, horizon: float,
                         precision: str = "standard", cutoff: float | None = None,
                         dps: int | None = None,
                         replay_samples: tuple[int, int] = (16385, 32769)) -> CostReport:
    """kappa = lambda_max(M^H H^{-1} M) plus a worst-case replay residual."""
    basis = build_basis(config, truncation)
    lam = basis.exponents
    mvec = -np.exp(lam * horizon) / basis.fluxes
    template = MomentProblem(exponents=lam, targets=np.zeros_like(lam), horizon=horizon)
    gram = gram_matrix(template, precision=precision, cutoff=cutoff, dps=dps)

    if gram.precision == "extended":
        _, Hinv = gram._mp
        K = xprec.weighted_inverse_entrywise(Hinv, mvec, mvec, gram.dps)
        if not np.all(np.isfinite(K)):
            raise RuntimeError("kappa overflows double precision at these parameters")
    else:
        w, V = np.linalg.eigh(gram.matrix)
        wmax = max(w[-1], 0.0)
        keep = w > gram.cutoff * wmax
        if wmax <= 0.0 or not np.any(keep):
            raise RuntimeError("horizon too small for precision mode: raise precision or T")
        Hplus = (V[:, keep] / w[keep]) @ V[:, keep].conj().T
        K = np.conj(mvec)[:, None] * Hplus * mvec[None, :]
    K = 0.5 * (K + K.conj().T)
    evals, evecs = np.linalg.eigh(K)
    kappa = float(evals[-1])
    worst = evecs[:, -1]

    problem = MomentProblem(exponents=lam, targets=mvec * worst, horizon=horizon)
    solved = solve_min_norm(problem, gram, samples=257)
    residual = replay_min_norm(StateCoeffs(basis=basis, values=worst), problem,
                               solved, samples=replay_samples)
    return CostReport(T=horizon, kappa=kappa, truncation=truncation,
                      residual=residual, condition=gram.condition,
                      worst_state=worst, precision=gram.precision)
