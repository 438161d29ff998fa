"""Extended-precision linear algebra for brutally ill-conditioned Gram solves.

Backed by mpmath.  The Gram matrices of decaying complex exponentials over a
short window have condition numbers far beyond double precision at moderate
truncations, so assembly, inversion and coefficient solves run in software
floats.  Because the required precision is not known in advance, every
operation verifies itself (solve residual, inverse residual) and escalates
the working precision, reassembling the matrix from its exponents, until the
verification passes.  Results are downcast to complex128; callers report the
achieved accuracy through explicit residual fields rather than assuming it.

mpmath's precision state is process-global; the helpers scope it with
``mp.workdps``, so concurrent extended solves serialize on that context.
"""

from __future__ import annotations

import warnings

import numpy as np
from mpmath import mp

__all__ = [
    "DEFAULT_DPS", "MAX_DPS", "gram_mp", "invert_gram", "apply_inverse",
    "weighted_inverse_entrywise", "to_numpy",
]

DEFAULT_DPS = 60
MAX_DPS = 2400
INVERSE_TARGET = 1e-25   # max |H Hinv - I| entry


def _mpc(z: complex):
    return mp.mpc(float(np.real(z)), float(np.imag(z)))


def gram_mp(exponents: np.ndarray, horizon: float, dps: int = DEFAULT_DPS):
    """Hermitian Gram of t -> exp(lam_n (T - t)) over [0, T] at `dps` digits.

    Entry (n, m) is (exp(z T) - 1)/z with z = lam_n + conj(lam_m), and T when
    z = 0 exactly.
    """
    n = len(exponents)
    with mp.workdps(dps):
        T = mp.mpf(float(horizon))
        lams = [_mpc(z) for z in exponents]
        H = mp.matrix(n, n)
        for i in range(n):
            for j in range(i + 1):
                z = lams[i] + mp.conj(lams[j])
                val = T if z == 0 else mp.expm1(z * T) / z
                H[i, j] = val
                if i != j:
                    H[j, i] = mp.conj(val)
        return H


def _max_abs(M) -> float:
    return float(max(abs(M[i, j]) for i in range(M.rows) for j in range(M.cols)))


def invert_gram(exponents: np.ndarray, horizon: float,
                dps: int = DEFAULT_DPS) -> tuple[object, float, int]:
    """Invert the Gram with precision escalation.

    Returns (Hinv as an mp matrix, 2-norm condition estimate, dps used).
    The condition estimate comes from power iterations on H and Hinv.
    """
    d = dps
    while True:
        H = gram_mp(exponents, horizon, d)
        with mp.workdps(d):
            Hinv = H ** -1
            n = H.rows
            R = H * Hinv
            for i in range(n):
                R[i, i] -= 1
            defect = _max_abs(R)
        if defect <= INVERSE_TARGET or d >= MAX_DPS:
            if d >= MAX_DPS and defect > INVERSE_TARGET:
                warnings.warn(
                    f"extended inverse hit the {MAX_DPS}-digit cap with defect "
                    f"{defect:.3e}", stacklevel=2)
            with mp.workdps(d):
                hi = _power_lambda_max(H, n)
                lo_inv = _power_lambda_max(Hinv, n)
                try:
                    cond = float(hi * lo_inv)
                except OverflowError:
                    cond = float("inf")
            return Hinv, cond, d
        d *= 2


def _power_lambda_max(H, n: int, iters: int = 60):
    """Largest |eigenvalue| of a Hermitian mp matrix by power iteration."""
    v = mp.matrix([mp.mpf(1) / mp.sqrt(n)] * n)
    lam = mp.mpf(0)
    for _ in range(iters):
        w = H * v
        nrm = mp.sqrt(sum((abs(w[i]) ** 2 for i in range(n)), mp.mpf(0)))
        if nrm == 0:
            return mp.mpf(0)
        v = w / nrm
        lam = nrm
    return lam


def apply_inverse(H, Hinv, rhs: np.ndarray, dps: int) -> tuple[np.ndarray, float]:
    """a = Hinv rhs with the max-norm residual of H a - rhs, downcast."""
    with mp.workdps(dps):
        b = mp.matrix([_mpc(z) for z in rhs])
        a = Hinv * b
        r = H * a - b
        residual = float(max((abs(r[i]) for i in range(len(rhs))), default=0.0))
        return np.array([complex(a[i]) for i in range(len(rhs))]), residual


def weighted_inverse_entrywise(Hinv, left: np.ndarray, right: np.ndarray,
                               dps: int) -> np.ndarray:
    """K = diag(left)^H * Hinv * diag(right), downcast to complex128.

    Entries that overflow a double become +-inf; the caller decides whether
    that is fatal.
    """
    n = len(left)
    with mp.workdps(dps):
        l = [_mpc(z) for z in left]
        r = [_mpc(z) for z in right]
        K = np.empty((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                val = mp.conj(l[i]) * Hinv[i, j] * r[j]
                try:
                    K[i, j] = complex(val)
                except OverflowError:
                    K[i, j] = complex(np.inf, 0.0)
        return K


def to_numpy(A) -> np.ndarray:
    out = np.empty((A.rows, A.cols), dtype=complex)
    for i in range(A.rows):
        for j in range(A.cols):
            out[i, j] = complex(A[i, j])
    return out
