"""Receiver-side precoder selection and codebook distortion estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, SystemConfig, eig_basis, generate_channel
from .codebook import (Codebook, build_permutation_codebook, min_pairwise_distance,
                       permutation_index, permutation_matrix)
from .errors import AllInfeasible, DomainError, MissingDensity, RankDeficient, ShapeMismatch
from .objectives import as_objective, eval_objective
from .zfdfe import batch_log_mse

DISTORTION_KINDS = ("min-snr-loss", "det-loss")


@dataclass(frozen=True)
class SelectionResult:
    index: int
    log_mse: np.ndarray
    objective_value: float
    per_entry_values: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "index": int(self.index),
            "log_mse": [float(x) for x in self.log_mse],
            "objective_value": float(self.objective_value),
        }
        if self.per_entry_values is not None:
            out["per_entry_values"] = [float(x) if math.isfinite(x) else None
                                       for x in self.per_entry_values]
        return out


@dataclass(frozen=True)
class DistortionEstimate:
    mean_gap: float
    std_error: float
    n_samples: int
    kind: str
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {"mean_gap": self.mean_gap, "std_error": self.std_error,
                "n_samples": self.n_samples, "kind": self.kind, "n_skipped": self.n_skipped}


def _check_shapes(channel: ChannelMatrix, cb: Codebook):
    if cb.nt != channel.config.nt or cb.k != channel.config.k:
        raise ShapeMismatch(
            f"codebook is {cb.nt}x{cb.k}, config expects {channel.config.nt}x{channel.config.k}")


def codebook_log_mse(channel: ChannelMatrix, cb: Codebook, receiver: str = "dfe") -> np.ndarray:
    """Log-MSE vector of every entry, ``+inf`` rows for rank-deficient ones."""
    _check_shapes(channel, cb)
    cfg = channel.config
    return batch_log_mse(channel.h, cb.entries, cfg.p_total, cfg.sigma2_n, receiver)


def select_precoder(channel: ChannelMatrix, cb: Codebook, kind="sum-mse",
                    receiver: str = "dfe", keep_values: bool = False) -> SelectionResult:
    """Index of the codebook entry minimizing the objective.

    Entries that leave HP rank deficient score ``+inf``; ties go to the
    lowest index.  ``receiver="linear"`` scores entries with the linear
    zero-forcing MSEs instead of the DFE ones.
    """
    logs = codebook_log_mse(channel, cb, receiver)
    values = np.atleast_1d(eval_objective(as_objective(kind), logs))
    if not np.isfinite(values).any():
        raise AllInfeasible("every codebook entry is rank deficient for this channel")
    idx = int(np.argmin(values))
    return SelectionResult(index=idx, log_mse=logs[idx], objective_value=float(values[idx]),
                           per_entry_values=values if keep_values else None)


def _ordering_result(channel, order, kind, receiver):
    cfg = channel.config
    p = permutation_matrix(order, cfg.nt)
    logs = batch_log_mse(channel.h, p[None], cfg.p_total, cfg.sigma2_n, receiver)[0]
    value = eval_objective(as_objective(kind), logs)
    return SelectionResult(index=permutation_index(order, cfg.nt), log_mse=logs,
                           objective_value=float(value))


def norm_order(h: np.ndarray, k: int) -> tuple:
    """Columns with the k largest norms, strongest first, ties to lower index."""
    norms = np.linalg.norm(h, axis=0)
    order = sorted(range(h.shape[1]), key=lambda j: (-norms[j], j))
    return tuple(order[:k])


def greedy_order(h: np.ndarray, k: int) -> tuple:
    """Sorted-QR ordering: repeatedly take the column with the largest
    component orthogonal to the columns already chosen."""
    residual = np.array(h, dtype=complex)
    chosen = []
    for _ in range(k):
        norms = np.linalg.norm(residual, axis=0)
        norms[chosen] = -np.inf
        j = int(np.argmax(norms))
        chosen.append(j)
        q = residual[:, j] / norms[j] if norms[j] > 0 else residual[:, j]
        residual = residual - np.outer(q, q.conj() @ residual)
    return tuple(chosen)


def select_ordering_norm(channel: ChannelMatrix, k: int | None = None, kind="sum-mse",
                         receiver: str = "dfe") -> SelectionResult:
    """Ordering feedback baseline driven by the column norms of H.

    ``index`` points into ``build_permutation_codebook(nt, k)``.
    """
    k = channel.config.k if k is None else k
    return _ordering_result(channel, norm_order(channel.h, k), kind, receiver)


def select_ordering_greedy(channel: ChannelMatrix, k: int | None = None, kind="sum-mse",
                           receiver: str = "dfe") -> SelectionResult:
    """Ordering feedback baseline driven by a greedy QR of H."""
    k = channel.config.k if k is None else k
    return _ordering_result(channel, greedy_order(channel.h, k), kind, receiver)


def ordering_codebook(nt: int, k: int) -> Codebook:
    return build_permutation_codebook(nt, k)


def _mean_and_se(samples):
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def estimate_distortion(cb: Codebook, kind: str, config: SystemConfig, n_samples: int,
                        seed: int) -> DistortionEstimate:
    """Monte Carlo estimate of the average loss from quantizing the precoder.

    ``kind="min-snr-loss"``: optimal minimum stream SNR minus the best
    minimum stream SNR reachable with the codebook.
    ``kind="det-loss"``: ``(det Lambda_1 - max_j det(Pj^H H^H H Pj)) / sigma^2``.

    Channels for which the optimal design is rank deficient are skipped
    and counted in ``n_skipped``.
    """
    if kind not in DISTORTION_KINDS:
        raise DomainError(f"kind must be one of {DISTORTION_KINDS}")
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    if cb.nt != config.nt or cb.k != config.k:
        raise ShapeMismatch("codebook shape does not match config")
    k = config.k
    gaps = []
    skipped = 0
    for i in range(n_samples):
        channel = generate_channel(config, seed, i)
        try:
            basis = eig_basis(channel, k)
        except RankDeficient:
            skipped += 1
            continue
        if kind == "min-snr-loss":
            opt = np.exp(np.mean(np.log(basis.lambda1))) * config.p_total / (k * config.sigma2_n)
            logs = codebook_log_mse(channel, cb)
            quant = np.max(np.exp(-logs).min(axis=1))
            gaps.append(opt - quant)
        else:
            hp = np.einsum("rt,ntk->nrk", channel.h, cb.entries)
            gram = np.einsum("nrk,nrj->nkj", hp.conj(), hp)
            dets = np.real(np.linalg.det(gram))
            gaps.append((np.prod(basis.lambda1) - dets.max()) / config.sigma2_n)
    mean, se = _mean_and_se(gaps)
    return DistortionEstimate(mean_gap=mean, std_error=se, n_samples=len(gaps), kind=kind,
                              n_skipped=skipped)


@dataclass(frozen=True)
class ChannelMoments:
    """Monte Carlo means (and standard errors) of the channel statistics
    entering the distortion bounds."""

    geo_mean_det: float
    geo_mean_det_se: float
    sigma_k_sq: float
    sigma_k_sq_se: float
    det: float
    det_se: float
    n_samples: int


def channel_moments(config: SystemConfig, n_samples: int, seed: int) -> ChannelMoments:
    k = config.k
    geo, smin, dets = [], [], []
    for i in range(n_samples):
        channel = generate_channel(config, seed, i)
        lam = np.clip(np.linalg.eigvalsh(channel.gram)[::-1][:k], 0.0, None)
        geo.append(np.prod(lam) ** (1.0 / k))
        smin.append(lam[k - 1])
        dets.append(np.prod(lam))
    g, gse = _mean_and_se(geo)
    s, sse = _mean_and_se(smin)
    d, dse = _mean_and_se(dets)
    return ChannelMoments(g, gse, s, sse, d, dse, n_samples)


def evaluate_distortion_bound(cb: Codebook | float, kind: str, config: SystemConfig,
                              density_d: float | None = None, n_samples: int = 2000,
                              seed: int = 0, moments: ChannelMoments | None = None) -> float:
    """Packing-based upper bound on the distortion.

    ``min-snr-loss`` uses the projection 2-norm packing distance ``d``:
    ``(p_total/k) (E{det(L1)^(1/k)} - E{sigma_k^2(H)} D (1 - d^2/4)) / sigma^2``.
    ``det-loss`` uses the Fubini-Study distance:
    ``E{det L1} (1 - D cos^2(d/2)) / sigma^2``.

    ``cb`` may also be a bare packing distance.  ``density_d`` is the packing
    density D, which must be supplied by the caller.
    """
    if kind not in DISTORTION_KINDS:
        raise DomainError(f"kind must be one of {DISTORTION_KINDS}")
    if density_d is None:
        raise MissingDensity("the packing density D must be supplied")
    if not 0 < density_d <= 1:
        raise DomainError("density must lie in (0, 1]")
    if isinstance(cb, Codebook):
        metric = "proj2" if kind == "min-snr-loss" else "fs"
        if cb.metric == metric and math.isfinite(cb.min_distance):
            d = cb.min_distance
        else:
            d = min_pairwise_distance(cb, metric)
    else:
        d = float(cb)
    if moments is None:
        moments = channel_moments(config, n_samples, seed)
    if kind == "min-snr-loss":
        scale = config.p_total / (config.k * config.sigma2_n)
        return scale * (moments.geo_mean_det - moments.sigma_k_sq * density_d * (1.0 - d * d / 4.0))
    return moments.det * (1.0 - density_d * np.cos(d / 2.0) ** 2) / config.sigma2_n
