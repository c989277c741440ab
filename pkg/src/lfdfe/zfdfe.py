"""Zero-forcing DFE receiver design, MSE analysis and the optimal precoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .channel import ChannelMatrix, eig_basis
from .errors import DomainError, RankDeficient
from .gmd import equal_diag_rotation

# smallest/largest singular value of HP below this => no zero forcing
SV_TOL = 1e-10
# Cholesky pivots below this fraction of the trace => no zero forcing
PIVOT_TOL = 1e-14


@dataclass(frozen=True)
class Precoder:
    """Transmit precoder.

    With ``normalized=True`` the columns of ``p`` are orthonormal; the
    transmitted precoder is then ``sqrt(p_total / k) * p``.
    """

    p: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        p = np.array(self.p, dtype=complex)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2:
            raise DomainError("precoder must be a 2-D matrix")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return self.p.shape[1]

    def scaled(self, p_total: float) -> "Precoder":
        if not self.normalized:
            return self
        return Precoder(np.sqrt(p_total / self.k) * self.p, normalized=False)

    def normalize(self) -> "Precoder":
        """Orthonormal-column version spanning the same space (via QR)."""
        if self.normalized:
            return self
        q, r = np.linalg.qr(self.p)
        q = q * np.sign(np.real(np.diag(r)) + (np.diag(r) == 0))
        return Precoder(q, normalized=True)

    def power(self) -> float:
        return float(np.real(np.trace(self.p.conj().T @ self.p)))


@dataclass(frozen=True)
class MseAnalysis:
    """Error statistics of a zero-forcing receiver for one (H, P) pair.

    ``receiver`` is ``"dfe"`` (per-stream MSEs ``L_ii**2``) or ``"linear"``
    (per-stream MSEs ``N_ii``).  ``l_chol`` is always the Cholesky factor of
    ``n``.
    """

    n: np.ndarray
    l_chol: np.ndarray
    log_mse: np.ndarray
    snr: np.ndarray
    eigs_n: np.ndarray
    receiver: str = "dfe"

    @property
    def mse(self) -> np.ndarray:
        return np.exp(self.log_mse)


@dataclass(frozen=True)
class DfeDesign:
    g: np.ndarray
    b: np.ndarray
    c: np.ndarray
    analysis: MseAnalysis
    precoder: Precoder


def _effective(channel: ChannelMatrix, precoder: Precoder) -> np.ndarray:
    p = precoder.scaled(channel.config.p_total).p
    if p.shape[0] != channel.config.nt:
        raise DomainError(f"precoder has {p.shape[0]} rows, channel has nt={channel.config.nt}")
    return channel.h @ p


def _gram_factor(hp: np.ndarray):
    s = np.linalg.svd(hp, compute_uv=False)
    if s.size == 0 or not s[0] > 0 or s[-1] < SV_TOL * s[0] or hp.shape[1] > hp.shape[0]:
        raise RankDeficient("HP does not have full column rank")
    gram = hp.conj().T @ hp
    try:
        factor = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("Gram matrix of HP is not positive definite") from exc
    pivots = np.abs(np.diag(factor[0])) ** 2
    if pivots.min() < PIVOT_TOL * np.real(np.trace(gram)):
        raise RankDeficient("Cholesky pivot of the Gram matrix too small")
    return gram, factor


def _analysis_from_n(n: np.ndarray, receiver: str) -> MseAnalysis:
    n = 0.5 * (n + n.conj().T)
    l_chol = np.linalg.cholesky(n)
    eigs = np.linalg.eigvalsh(n)[::-1]
    if receiver == "dfe":
        log_mse = 2.0 * np.log(np.real(np.diag(l_chol)))
    else:
        log_mse = np.log(np.real(np.diag(n)))
    return MseAnalysis(n=n, l_chol=l_chol, log_mse=log_mse, snr=np.exp(-log_mse),
                       eigs_n=eigs, receiver=receiver)


def mse_analysis(channel: ChannelMatrix, precoder: Precoder) -> MseAnalysis:
    """N = sigma^2 (P^H H^H H P)^{-1}, its Cholesky factor and per-stream MSEs.

    Normalized precoders are power-scaled with the channel's ``p_total``
    before use.
    """
    hp = _effective(channel, precoder)
    _, factor = _gram_factor(hp)
    n = channel.config.sigma2_n * cho_solve(factor, np.eye(hp.shape[1], dtype=complex))
    return _analysis_from_n(n, "dfe")


def linear_zf_analysis(channel: ChannelMatrix, precoder: Precoder) -> MseAnalysis:
    """MSE analysis for the linear zero-forcing receiver (B = 0).

    Per-stream MSEs are the diagonal entries of ``N``; ``eigs_n`` carries the
    eigenvalues of ``N`` for comparison against the DFE log-MSE vector.
    """
    hp = _effective(channel, precoder)
    _, factor = _gram_factor(hp)
    n = channel.config.sigma2_n * cho_solve(factor, np.eye(hp.shape[1], dtype=complex))
    return _analysis_from_n(n, "linear")


def design_receiver(channel: ChannelMatrix, precoder: Precoder) -> DfeDesign:
    """Feedforward G = C (HP)^+ and feedback B = C - I of the ZF-DFE.

    ``C = Diag(L_11, ..., L_kk) L^{-1}`` whitens the error so that
    ``C N C^H = Diag(L_ii^2)``.
    """
    hp = _effective(channel, precoder)
    _, factor = _gram_factor(hp)
    k = hp.shape[1]
    n = channel.config.sigma2_n * cho_solve(factor, np.eye(k, dtype=complex))
    analysis = _analysis_from_n(n, "dfe")
    l = analysis.l_chol
    c = np.diag(np.diag(l)) @ solve_triangular(l, np.eye(k), lower=True)
    c = np.tril(c)
    np.fill_diagonal(c, 1.0)
    pinv = cho_solve(factor, hp.conj().T)
    g = c @ pinv
    b = c - np.eye(k)
    return DfeDesign(g=g, b=b, c=c, analysis=analysis, precoder=precoder.scaled(channel.config.p_total))


def linear_receiver(channel: ChannelMatrix, precoder: Precoder) -> DfeDesign:
    """Linear ZF receiver G = (HP)^+, B = 0, packaged like a DFE design."""
    hp = _effective(channel, precoder)
    _, factor = _gram_factor(hp)
    k = hp.shape[1]
    n = channel.config.sigma2_n * cho_solve(factor, np.eye(k, dtype=complex))
    return DfeDesign(g=cho_solve(factor, hp.conj().T), b=np.zeros((k, k), dtype=complex),
                     c=np.eye(k, dtype=complex), analysis=_analysis_from_n(n, "linear"),
                     precoder=precoder.scaled(channel.config.p_total))


def optimal_rotation(lambda1) -> np.ndarray:
    """Rotation V making the QR factor of Lambda^{-1/2} V equal-diagonal."""
    return equal_diag_rotation(np.asarray(lambda1, dtype=float) ** -0.5).v


def optimal_precoder(channel: ChannelMatrix, k: int | None = None) -> Precoder:
    """Power-scaled precoder sqrt(p_total/k) U_1 V that equalizes all stream MSEs.

    The same precoder is optimal for every objective that is Schur-convex
    in the log-MSE vector.
    """
    cfg = channel.config
    k = cfg.k if k is None else k
    basis = eig_basis(channel, k)
    pbar = basis.u1 @ optimal_rotation(basis.lambda1)
    return Precoder(np.sqrt(cfg.p_total / k) * pbar, normalized=False)


def optimal_normalized_precoder(channel: ChannelMatrix, k: int | None = None) -> Precoder:
    cfg = channel.config
    k = cfg.k if k is None else k
    basis = eig_basis(channel, k)
    return Precoder(basis.u1 @ optimal_rotation(basis.lambda1), normalized=True)


def batch_log_mse(h: np.ndarray, entries: np.ndarray, p_total: float, sigma2_n: float,
                  receiver: str = "dfe") -> np.ndarray:
    """Log-MSE vectors for a stack of normalized precoders.

    Parameters
    ----------
    h : (nr, nt) complex array
    entries : (n, nt, k) complex array of normalized precoders
    receiver : {"dfe", "linear"}

    Returns
    -------
    (n, k) array; rows of rank-deficient entries are ``+inf``.
    """
    entries = np.asarray(entries)
    n_entries, _, k = entries.shape
    hp = np.sqrt(p_total / k) * np.einsum("rt,ntk->nrk", h, entries)
    s = np.linalg.svd(hp, compute_uv=False)
    ok = (s[:, 0] > 0) & (s[:, -1] >= SV_TOL * s[:, 0]) & (hp.shape[1] >= k)
    out = np.full((n_entries, k), np.inf)
    if not ok.any():
        return out
    hp_ok = hp[ok]
    gram = np.einsum("nrk,nrj->nkj", hp_ok.conj(), hp_ok)
    n_mat = sigma2_n * np.linalg.inv(gram)
    n_mat = 0.5 * (n_mat + np.conj(np.swapaxes(n_mat, -1, -2)))
    if receiver == "dfe":
        try:
            l = np.linalg.cholesky(n_mat)
            diag = np.real(np.diagonal(l, axis1=-2, axis2=-1))
            out[ok] = 2.0 * np.log(diag)
        except np.linalg.LinAlgError:
            rows = np.flatnonzero(ok)
            for row, mat in zip(rows, n_mat):
                try:
                    diag = np.real(np.diag(np.linalg.cholesky(mat)))
                except np.linalg.LinAlgError:
                    continue
                out[row] = 2.0 * np.log(diag)
    elif receiver == "linear":
        out[ok] = np.log(np.real(np.diagonal(n_mat, axis1=-2, axis2=-1)))
    else:
        raise DomainError(f"unknown receiver {receiver!r}")
    return out


LINEAR_DESIGNS = ("sum-mse", "max-mse", "avg-ber", "prod-mse")


def optimal_linear_precoder(channel: ChannelMatrix, objective: str = "sum-mse",
                            k: int | None = None) -> Precoder:
    """Perfect-CSI precoder for the linear zero-forcing receiver.

    The precoder is ``U_1 Diag(sqrt(phi)) W`` with power loading ``phi``
    and rotation ``W``:

    * ``sum-mse``: ``phi ~ lambda^{-1/2}``, ``W = I``
    * ``max-mse``: ``phi ~ lambda^{-1}`` (equal MSEs), ``W = I``
    * ``avg-ber``: sum-MSE loading followed by a unitary DFT rotation, which
      spreads the MSEs evenly over the streams
    * ``prod-mse``: equal power, ``W = I``
    """
    if objective not in LINEAR_DESIGNS:
        raise DomainError(f"linear design supports {LINEAR_DESIGNS}, got {objective!r}")
    cfg = channel.config
    k = cfg.k if k is None else k
    basis = eig_basis(channel, k)
    lam = basis.lambda1
    if objective in ("sum-mse", "avg-ber"):
        weights = lam ** -0.5
    elif objective == "max-mse":
        weights = 1.0 / lam
    else:
        weights = np.ones(k)
    phi = cfg.p_total * weights / weights.sum()
    p = basis.u1 * np.sqrt(phi)
    if objective == "avg-ber":
        idx = np.arange(k)
        dft = np.exp(-2j * np.pi * np.outer(idx, idx) / k) / np.sqrt(k)
        p = p @ dft
    return Precoder(p, normalized=False)
