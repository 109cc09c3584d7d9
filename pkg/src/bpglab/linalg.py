"""Symmetric positive-definite solves with an escalating jitter ladder.

Policy used package-wide: a failed Cholesky factorization gets ``1e-6``
added to the diagonal, escalating by factors of 10 up to ``1e-2``, after
which the solve aborts.  Fisher information matrices are jittered *before*
the first attempt (they are often estimated from few samples and genuinely
rank-deficient); kernel systems are tried clean first so that algebraically
equivalent routes (dense vs. sparsified) agree to tight tolerances.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from bpglab.errors import FactorizationError

JITTER_FIRST = 1e-6
JITTER_MAX = 1e-2


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


class CholFactor:
    """Cholesky factor of ``A + jitter*I`` with the jitter actually used."""

    def __init__(self, a: np.ndarray, preemptive_jitter: float = 0.0):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected square matrix, got shape {a.shape}")
        jitter = float(preemptive_jitter)
        while True:
            try:
                self._cf = sla.cho_factor(
                    a + jitter * np.eye(a.shape[0]) if jitter else a, lower=True
                )
                break
            except np.linalg.LinAlgError:
                jitter = JITTER_FIRST if jitter == 0.0 else jitter * 10.0
                if jitter > JITTER_MAX * (1 + 1e-12):
                    raise FactorizationError(
                        f"matrix of size {a.shape[0]} not PD at max jitter {JITTER_MAX}"
                    ) from None
        self.jitter = jitter
        self.n = a.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._cf, np.asarray(b, dtype=float))

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._cf[0]))))


def solve_psd(a: np.ndarray, b: np.ndarray, preemptive_jitter: float = 0.0) -> np.ndarray:
    return CholFactor(a, preemptive_jitter).solve(b)


def chol_lower(a: np.ndarray, preemptive_jitter: float = 0.0) -> tuple[np.ndarray, float]:
    """Explicit lower Cholesky factor under the package jitter ladder."""
    a = np.asarray(a, dtype=float)
    jitter = float(preemptive_jitter)
    while True:
        try:
            l = np.linalg.cholesky(a + jitter * np.eye(a.shape[0]) if jitter else a)
            return l, jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_FIRST if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-12):
                raise FactorizationError(
                    f"matrix of size {a.shape[0]} not PD at max jitter {JITTER_MAX}"
                ) from None


def clamp_scalar_var(v: float, floor_tol: float = 1e-10) -> float:
    """Clamp a tiny negative variance to zero; larger negatives are the caller's error."""
    if v < -floor_tol:
        return v
    return max(v, 0.0)


def clamp_psd(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by clipping eigenvalues at zero.

    Only eigenvalues above ``-tol`` (relative to the matrix scale) are expected;
    anything more negative is passed through untouched so callers can detect it.
    """
    a = sym(np.asarray(a, dtype=float))
    w, v = np.linalg.eigh(a)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and w[0] < -tol * scale:
        return a
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


def min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(sym(a))[0])
