"""Time-multiplexed click detector and weak-homodyne POVM model.

A time-multiplexed detector (TMD) splits a pulse over `bins` modes read by
binary avalanche photodiodes; the click-count statistics are k = C L r with
L a binomial loss matrix and C the bin-occupancy convolution matrix.  A weak
homodyne detector interferes the signal with a coherent local oscillator
(LO) on a beam splitter of reflectivity R and reads the two output arms with
TMDs.  The signal-mode POVM element for click outcome beta at setting gamma
is

    Pi_{beta,gamma} = Tr_LO[ (|alpha><alpha| (x) 1) U† (Pi_c (x) Pi_d) U ]

which reproduces Tr(rho Pi_{beta,gamma}) for every signal state rho.  In the
unbalanced configuration the LO-arm detector efficiency is set to zero and
outcomes carry the live detector's click count only (bins + 1 outcomes per
setting).  Wigner functions of POVM elements are evaluated from the
Fock-basis displacement kernel (associated Laguerre polynomials).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import comb, eval_genlaguerre, gammaln

from .fock import (
    TAIL_TOL,
    TOL_PSD,
    FockOperator,
    HilbertSpec,
    _sector_unitary,
    adaptive_lo_cutoff,
    coherent_amplitudes,
)

TOL_COMPLETE = 1e-6


@dataclass(frozen=True)
class TmdConfig:
    """Bin count, detection efficiency and optional per-bin splitting probabilities."""

    bins: int = 8
    efficiency: float = 1.0
    bin_probabilities: tuple | None = None

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not (0.0 <= self.efficiency <= 1.0):
            raise ValueError("efficiency must lie in [0, 1]")
        if self.bin_probabilities is not None:
            q = tuple(float(x) for x in self.bin_probabilities)
            if len(q) != self.bins:
                raise ValueError("bin_probabilities length must equal bins")
            if any(x < 0 for x in q):
                raise ValueError("bin_probabilities must be nonnegative")
            if abs(sum(q) - 1.0) > 1e-12:
                raise ValueError("bin_probabilities must sum to 1")
            object.__setattr__(self, "bin_probabilities", q)

    @property
    def probabilities(self) -> np.ndarray:
        if self.bin_probabilities is None:
            return np.full(self.bins, 1.0 / self.bins)
        return np.asarray(self.bin_probabilities)


@dataclass(frozen=True)
class DetectorConfig:
    """One weak-homodyne setting: LO amplitude/phase, BS reflectivity, two TMDs.

    R is the fraction of signal intensity reaching the live (tmd_c) detector
    arm.  With `unbalanced` set, the LO-arm detector (tmd_d) is treated as
    having zero efficiency and outcomes are single click counts.
    """

    lo_amplitude: float
    lo_phase: float
    reflectivity: float
    tmd_c: TmdConfig
    tmd_d: TmdConfig
    unbalanced: bool = True

    def __post_init__(self):
        if self.lo_amplitude < 0:
            raise ValueError("lo_amplitude must be >= 0")
        if not (0.0 <= self.reflectivity <= 1.0):
            raise ValueError("reflectivity must lie in [0, 1]")
        object.__setattr__(self, "lo_phase", float(np.mod(self.lo_phase, 2.0 * np.pi)))

    @property
    def lo_alpha(self) -> complex:
        return self.lo_amplitude * np.exp(1j * self.lo_phase)


@dataclass(frozen=True, eq=False)
class PovmElement:
    """One detector outcome: PSD operator with spectrum in [0, 1] on the signal mode."""

    outcome: object
    setting: object
    operator: FockOperator

    def __post_init__(self):
        w = np.linalg.eigvalsh(0.5 * (self.operator.matrix + self.operator.matrix.conj().T))
        if w[0] < -TOL_PSD:
            raise ValueError(f"POVM element not PSD: min eigenvalue {w[0]:.3e}")
        if w[-1] > 1.0 + 1e-8:
            raise ValueError(f"POVM element norm {w[-1]:.10f} exceeds 1")


@dataclass(frozen=True, eq=False)
class PovmSet:
    """Outcome elements of one setting; must sum to the identity within TOL_COMPLETE."""

    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if len(self.elements) == 0:
            raise ValueError("empty POVM")
        total = sum(e.operator.matrix for e in self.elements)
        deficit = float(np.max(np.abs(total - np.eye(total.shape[0]))))
        if deficit > TOL_COMPLETE:
            raise ValueError(f"POVM completeness deficit {deficit:.3e} exceeds {TOL_COMPLETE:.1e}")

    @property
    def setting(self):
        return self.elements[0].setting

    def completeness_deficit(self) -> float:
        total = sum(e.operator.matrix for e in self.elements)
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))


# ---------------------------------------------------------------------------
# click statistics


def loss_matrix(n_in: int, efficiency: float) -> np.ndarray:
    """L[m][n] = Binom(n, m) eta^m (1 - eta)^(n - m); columns sum to 1."""
    if not (0.0 <= efficiency <= 1.0):
        raise ValueError("efficiency must lie in [0, 1]")
    n = np.arange(n_in + 1)
    m = n[:, None]
    surv = np.where(m <= n[None, :], n[None, :] - m, 0)
    mat = comb(n[None, :], m) * efficiency**m * (1.0 - efficiency) ** surv
    return np.where(m <= n[None, :], mat, 0.0)


def convolution_matrix(config: TmdConfig, n_max_photons: int) -> np.ndarray:
    """C[k][n] = P(n photons, thrown independently over the bins, occupy
    exactly k distinct bins); inclusion-exclusion over bin subsets."""
    q = config.probabilities
    bins = config.bins
    n = np.arange(n_max_photons + 1)
    c = np.zeros((bins + 1, n_max_photons + 1))
    c[0, 0] = 1.0
    for k in range(1, bins + 1):
        acc = np.zeros(n_max_photons + 1)
        for subset in itertools.combinations(range(bins), k):
            for r in range(k + 1):
                sign = (-1.0) ** (k - r)
                for sub2 in itertools.combinations(subset, r):
                    acc += sign * float(np.sum(q[list(sub2)])) ** n
        c[k] = acc
    return np.clip(c, 0.0, None)


def click_matrix(config: TmdConfig, cutoff: int) -> np.ndarray:
    """(C L)[k][n]: probability of k clicks given n incident photons."""
    return convolution_matrix(config, cutoff) @ loss_matrix(cutoff, config.efficiency)


def tmd_povm(config: TmdConfig, cutoff: int) -> PovmSet:
    """Diagonal click POVM of a bare TMD on one mode."""
    d = click_matrix(config, cutoff)
    elements = [
        PovmElement(k, config, FockOperator(HilbertSpec((cutoff,)), np.diag(d[k]).astype(complex)))
        for k in range(config.bins + 1)
    ]
    return PovmSet(tuple(elements))


# ---------------------------------------------------------------------------
# weak homodyne POVM


@lru_cache(maxsize=64)
def _bs_columns(reflectivity: float, lo_cutoff: int, signal_cutoff: int) -> np.ndarray:
    """Beam splitter columns for inputs (a <= lo_cutoff photons in the LO
    mode, b <= signal_cutoff in the signal mode), rows on the padded output
    space with per-mode cutoff lo_cutoff + signal_cutoff.  Exact on every
    total-photon-number sector, so the columns are orthonormal."""
    chi = float(np.arccos(np.sqrt(reflectivity)))
    pad = lo_cutoff + signal_cutoff
    d_lo, d_sig, d_pad = lo_cutoff + 1, signal_cutoff + 1, pad + 1
    out = np.zeros((d_pad * d_pad, d_lo * d_sig), dtype=complex)
    for total in range(pad + 1):
        u_sec = _sector_unitary(chi, total)
        cols_a = [a for a in range(total + 1) if a <= lo_cutoff and total - a <= signal_cutoff]
        col_idx = [a * d_sig + (total - a) for a in cols_a]
        row_idx = [na * d_pad + (total - na) for na in range(total + 1)]
        out[np.ix_(row_idx, col_idx)] = u_sec[:, cols_a]
    out.setflags(write=False)
    return out


def homodyne_povm(
    det: DetectorConfig,
    signal_cutoff: int,
    lo_cutoff: int | None = None,
    lo_components=None,
) -> PovmSet:
    """Signal-mode POVM of one weak-homodyne setting.

    lo_components optionally replaces the pure LO by a mixture of coherent
    states, given as (weight, complex amplitude) pairs with weights summing
    to 1 (used for phase-averaged LO models).  The LO cutoff defaults to the
    adaptive rule (tail mass below TAIL_TOL, at least 12).  Raises when the
    POVM misses completeness by more than TOL_COMPLETE.
    """
    if lo_components is None:
        lo_components = [(1.0, det.lo_alpha)]
    weights = np.array([w for w, _ in lo_components], dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("LO component weights must be nonnegative and sum to 1")
    amax = max(abs(a) for _, a in lo_components)
    if lo_cutoff is None:
        lo_cutoff = adaptive_lo_cutoff(amax)

    tmd_d = det.tmd_d if not det.unbalanced else replace(det.tmd_d, efficiency=0.0)
    pad = lo_cutoff + signal_cutoff
    d_pad, d_sig = pad + 1, signal_cutoff + 1
    d_live = click_matrix(det.tmd_c, pad)
    d_dead = click_matrix(tmd_d, pad)

    u_cols = _bs_columns(float(det.reflectivity), int(lo_cutoff), int(signal_cutoff))
    u_r = u_cols.reshape(d_pad * d_pad, lo_cutoff + 1, d_sig)

    if det.unbalanced:
        outcomes = list(range(det.tmd_c.bins + 1))
    else:
        outcomes = [(bc, bd) for bc in range(det.tmd_c.bins + 1) for bd in range(tmd_d.bins + 1)]
    ops = [np.zeros((d_sig, d_sig), dtype=complex) for _ in outcomes]

    for w, alpha in lo_components:
        vec, tail = coherent_amplitudes(alpha, lo_cutoff)
        if tail > TAIL_TOL:
            raise ValueError(f"LO tail mass {tail:.3e} exceeds {TAIL_TOL:.1e}; raise lo_cutoff")
        wv = np.einsum("rab,a->rb", u_r, vec).reshape(d_pad, d_pad, d_sig)
        # wv[na, nb, b]: na photons on the LO-aligned arm, nb on the signal-aligned arm
        for i, outc in enumerate(outcomes):
            if det.unbalanced:
                t_live = d_live[outc]
                op = np.einsum("abi,b,abj->ij", wv.conj(), t_live, wv, optimize=True)
            else:
                bc, bd = outc
                op = np.einsum(
                    "abi,a,b,abj->ij", wv.conj(), d_dead[bd], d_live[bc], wv, optimize=True
                )
            ops[i] += w * op

    elements = []
    for outc, op in zip(outcomes, ops):
        op = 0.5 * (op + op.conj().T)
        elements.append(PovmElement(outc, det, FockOperator(HilbertSpec((signal_cutoff,)), op)))
    total = sum(op.operator.matrix for op in elements)
    deficit = float(np.max(np.abs(total - np.eye(d_sig))))
    if deficit > TOL_COMPLETE:
        raise ValueError(f"homodyne POVM completeness deficit {deficit:.3e}: cutoffs too small")
    return PovmSet(tuple(elements))


# ---------------------------------------------------------------------------
# Wigner functions


def _disp_element(n_row: int, m_col: int, beta: np.ndarray, abs2: np.ndarray) -> np.ndarray:
    """<n|D(beta)|m> on arrays of beta, via the associated Laguerre form."""
    if n_row >= m_col:
        k = n_row - m_col
        pref = np.exp(0.5 * (gammaln(m_col + 1) - gammaln(n_row + 1)))
        lag = eval_genlaguerre(m_col, k, abs2)
        return pref * beta**k * np.exp(-0.5 * abs2) * lag
    k = m_col - n_row
    pref = np.exp(0.5 * (gammaln(n_row + 1) - gammaln(m_col + 1)))
    lag = eval_genlaguerre(n_row, k, abs2)
    return pref * (-np.conj(beta)) ** k * np.exp(-0.5 * abs2) * lag


def wigner_of_operator(op: FockOperator, xs=None, ps=None) -> np.ndarray:
    """W(x, p) of a single-mode operator on a grid; W[i, j] = W(xs[i], ps[j]).

    Normalization: for a density matrix the grid integrates to 1 and the
    vacuum gives W(0, 0) = 1/pi; alpha = (x + i p) / sqrt(2).
    """
    if op.space.n_modes != 1:
        raise ValueError("single-mode operator expected")
    if xs is None:
        xs = np.linspace(-5.0, 5.0, 201)
    if ps is None:
        ps = np.linspace(-5.0, 5.0, 201)
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    rho = op.matrix
    d = rho.shape[0]
    beta = np.sqrt(2.0) * (xs[:, None] + 1j * ps[None, :])  # 2 alpha
    abs2 = np.abs(beta) ** 2
    w = np.zeros(beta.shape, dtype=complex)
    for m in range(d):
        for n in range(d):
            if rho[m, n] == 0:
                continue
            w += rho[m, n] * (-1.0) ** m * _disp_element(n, m, beta, abs2)
    return np.real(w) / np.pi


# ---------------------------------------------------------------------------
# serialization


def _complex_matrix_to_json(mat: np.ndarray):
    return [[[float(z.real), float(z.imag)] for z in row] for row in mat]


def _complex_matrix_from_json(data) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data])


def _tmd_to_json(t: TmdConfig) -> dict:
    return {
        "bins": t.bins,
        "efficiency": t.efficiency,
        "bin_probabilities": list(t.bin_probabilities) if t.bin_probabilities else None,
    }


def _tmd_from_json(d) -> TmdConfig:
    probs = d.get("bin_probabilities")
    return TmdConfig(d["bins"], d["efficiency"], tuple(probs) if probs else None)


def povm_set_to_json(povm: PovmSet) -> dict:
    """Structured JSON document: setting metadata and row-major re/im matrices."""
    setting = povm.setting
    if isinstance(setting, DetectorConfig):
        meta = {
            "kind": "homodyne",
            "lo_amplitude": setting.lo_amplitude,
            "lo_phase": setting.lo_phase,
            "reflectivity": setting.reflectivity,
            "unbalanced": setting.unbalanced,
            "tmd_c": _tmd_to_json(setting.tmd_c),
            "tmd_d": _tmd_to_json(setting.tmd_d),
        }
    else:
        meta = {"kind": "tmd", "tmd": _tmd_to_json(setting)}
    return {
        "setting": meta,
        "elements": [
            {
                "outcome": list(e.outcome) if isinstance(e.outcome, tuple) else e.outcome,
                "matrix": _complex_matrix_to_json(e.operator.matrix),
            }
            for e in povm.elements
        ],
    }


def povm_set_from_json(doc: dict) -> PovmSet:
    meta = doc["setting"]
    if meta["kind"] == "homodyne":
        setting = DetectorConfig(
            meta["lo_amplitude"],
            meta["lo_phase"],
            meta["reflectivity"],
            _tmd_from_json(meta["tmd_c"]),
            _tmd_from_json(meta["tmd_d"]),
            meta["unbalanced"],
        )
    else:
        setting = _tmd_from_json(meta["tmd"])
    elements = []
    for e in doc["elements"]:
        mat = _complex_matrix_from_json(e["matrix"])
        outcome = tuple(e["outcome"]) if isinstance(e["outcome"], list) else e["outcome"]
        cutoff = mat.shape[0] - 1
        elements.append(PovmElement(outcome, setting, FockOperator(HilbertSpec((cutoff,)), mat)))
    return PovmSet(tuple(elements))
