"""Exact logarithmic negativity of bipartite truncated states.

The logarithmic negativity is log2 of the trace norm of the partially
transposed density matrix.  It serves as ground truth for the certified
lower bounds produced elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import TOL_HERM, TruncatedState, partial_transpose


@dataclass(frozen=True, eq=False)
class NegativityResult:
    """Trace norm of the partial transpose and its base-2 logarithm.

    log_negativity is clamped at 0 (the trace norm of a valid state's
    partial transpose never falls below 1 beyond numerical noise).
    symmetrized records that the input was replaced by (rho + rho†)/2
    before the eigendecomposition.
    """

    log_negativity: float
    trace_norm: float
    negative_eigenvalues: tuple
    symmetrized: bool = True


def exact_log_negativity(state: TruncatedState, cut: int = 0) -> NegativityResult:
    """Logarithmic negativity across the bipartition at the given mode.

    Eigendecomposition of the partial transpose of (rho + rho†)/2; the
    trace norm is the sum of absolute eigenvalues and the result is its
    base-2 logarithm, clamped below at 0.
    """
    if state.space.n_modes != 2:
        raise ValueError("bipartite state expected")
    mat = state.matrix
    herm = np.max(np.abs(mat - mat.conj().T))
    if herm > TOL_HERM:
        raise ValueError(f"input not Hermitian: deviation {herm:.3e}")
    sym = TruncatedState._trusted(state.space, 0.5 * (mat + mat.conj().T))
    pt = partial_transpose(sym, subsystem=cut).matrix
    w = np.linalg.eigvalsh(pt)
    trace_norm = float(np.sum(np.abs(w)))
    log_neg = max(0.0, float(np.log2(trace_norm)))
    negs = tuple(float(x) for x in w[w < 0.0])
    return NegativityResult(log_neg, trace_norm, negs, True)


def closed_form_squeezed_ln(lam: float) -> float:
    """log2((1 + lambda)/(1 - lambda)): untruncated two-mode squeezed vacuum value."""
    return float(np.log2((1.0 + lam) / (1.0 - lam)))
