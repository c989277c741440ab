"""Per-stream MSE design objectives, QAM error rates and majorization.

Every objective is written as a function of the log-MSE vector ``l``
(``l_i = ln MSE_i``) so that it can be checked for Schur-convexity in
``l``.  All of them accept stacked inputs with streams on the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc
from scipy.stats import norm

from .errors import DomainError, LengthMismatch

SUPPORTED_M = (2, 4, 16, 64)

# majorization slack on partial sums
MAJORIZATION_SLACK = 1e-9


def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def _check_m(m):
    if m not in SUPPORTED_M:
        raise DomainError(f"unsupported constellation size {m}; use one of {SUPPORTED_M}")


def qam_ber(snr, m=16):
    """Approximate Gray-coded BER of BPSK or square M-QAM at symbol SNR ``snr``.

    BPSK is exact, ``Q(sqrt(2 snr))``.  For ``m >= 4`` the nearest-neighbour
    approximation ``(4/log2 m)(1 - 1/sqrt m) Q(sqrt(3 snr/(m-1)))`` is used,
    clipped to ``[0, 0.5]``.
    """
    _check_m(m)
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0):
        raise DomainError("snr must be non-negative")
    if m == 2:
        return qfunc(np.sqrt(2.0 * snr))
    coeff = 4.0 / np.log2(m) * (1.0 - 1.0 / np.sqrt(m))
    return np.clip(coeff * qfunc(np.sqrt(3.0 * snr / (m - 1))), 0.0, 0.5)


def _gray_bits(levels):
    n_bits = int(np.log2(levels))
    labels = np.arange(levels) ^ (np.arange(levels) >> 1)
    bits = (labels[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1
    return bits


def qam_ber_exact(snr, m=16):
    """Exact Gray-coded BER of square M-QAM (or BPSK) with ML slicing.

    Each axis is an independent Gray-labelled PAM; the probability of every
    decision region is integrated in closed form with the normal CDF and the
    bit disagreements are averaged over levels and bits.
    """
    _check_m(m)
    snr = np.asarray(snr, dtype=float)
    if m == 2:
        return qfunc(np.sqrt(2.0 * snr))
    levels = int(round(np.sqrt(m)))
    es_axis = (levels ** 2 - 1) / 3.0  # per-axis energy of odd-integer levels
    # per-axis noise std with levels on the odd integers
    with np.errstate(divide="ignore"):
        std = np.sqrt(es_axis / np.where(snr > 0, snr, np.nan))
    amps = 2.0 * np.arange(levels) - (levels - 1)
    edges = np.concatenate(([-np.inf], 0.5 * (amps[:-1] + amps[1:]), [np.inf]))
    bits = _gray_bits(levels)
    n_bits = bits.shape[1]
    flips = (bits[:, None, :] != bits[None, :, :]).sum(axis=-1)  # [sent, decided]
    stds = np.atleast_1d(std)
    out = np.empty(stds.shape)
    for idx, s in np.ndenumerate(stds):
        if not np.isfinite(s):
            out[idx] = 0.5
            continue
        cdf = norm.cdf((edges[None, :] - amps[:, None]) / s)
        probs = np.diff(cdf, axis=1)  # [sent, decided]
        out[idx] = (probs * flips).sum() / (levels * n_bits)
    return out.reshape(np.shape(snr)) if np.ndim(snr) else float(out[0])


@dataclass(frozen=True)
class Objective:
    """One member of the objective registry.

    ``name`` is one of ``sum-mse``, ``max-mse``, ``avg-ber``, ``mutual-info``
    and ``prod-mse``; ``m`` is the constellation size used by ``avg-ber``.
    """

    name: str
    m: int = 16

    def __post_init__(self):
        if self.name not in OBJECTIVES:
            raise DomainError(f"unknown objective {self.name!r}; choose from {sorted(OBJECTIVES)}")
        if self.name == "avg-ber":
            _check_m(self.m)

    def __call__(self, log_mse):
        return eval_objective(self, log_mse)

    @property
    def schur_convex(self) -> bool:
        return self.name in SCHUR_CONVEX

    @property
    def schur_concave(self) -> bool:
        return self.name in SCHUR_CONCAVE


def _sum_mse(l, m):
    return np.exp(l).sum(axis=-1)


def _max_mse(l, m):
    return np.exp(l).max(axis=-1)


def _avg_ber(l, m):
    return qam_ber(np.exp(-l), m).mean(axis=-1)


def _neg_mutual_info(l, m):
    # log2(1 + e^{-l}) computed stably for large |l|
    return -(np.logaddexp(0.0, -l) / np.log(2.0)).sum(axis=-1)


def _prod_mse(l, m):
    return l.sum(axis=-1)


OBJECTIVES = {
    "sum-mse": _sum_mse,
    "max-mse": _max_mse,
    "avg-ber": _avg_ber,
    "mutual-info": _neg_mutual_info,
    "prod-mse": _prod_mse,
}

# Shape of each objective as a function of l.  -log(1 + e^{-l}) is concave,
# so the mutual-information objective is Schur-concave; avg-ber is
# Schur-convex only where every stream SNR is at least (m - 1) / 3.
SCHUR_CONVEX = ("sum-mse", "max-mse", "avg-ber", "prod-mse")
SCHUR_CONCAVE = ("mutual-info", "prod-mse")


def as_objective(kind) -> Objective:
    if isinstance(kind, Objective):
        return kind
    return Objective(str(kind))


def eval_objective(kind, log_mse):
    """Evaluate ``kind`` on a log-MSE vector (or stack of vectors).

    Rows containing ``+inf`` (infeasible designs) evaluate to ``+inf``.
    """
    obj = as_objective(kind)
    l = np.asarray(log_mse, dtype=float)
    bad = np.isinf(l).any(axis=-1) if l.ndim else np.isinf(l)
    with np.errstate(over="ignore", invalid="ignore"):
        val = OBJECTIVES[obj.name](np.where(np.isinf(l), 0.0, l), obj.m)
    val = np.where(bad, np.inf, val)
    return float(val) if np.ndim(val) == 0 else val


def majorizes(a, b, slack=MAJORIZATION_SLACK) -> bool:
    """True when ``b`` majorizes ``a`` (``a`` is majorized by ``b``)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    ca = np.cumsum(np.sort(a)[::-1])
    cb = np.cumsum(np.sort(b)[::-1])
    if abs(ca[-1] - cb[-1]) > slack:
        return False
    return bool(np.all(ca[:-1] <= cb[:-1] + slack))
