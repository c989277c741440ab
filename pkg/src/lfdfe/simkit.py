"""Monte Carlo BER and mutual-information campaigns.

Every channel draw ``c`` is generated from ``(master_seed, c)`` and the
symbols/noise at SNR point ``j`` from ``(master_seed, c, j + 1)``, so a
campaign gives the same numbers for any split of the draws across workers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelMatrix, SystemConfig, complex_gaussian, derive_rng, generate_channel
from .codebook import Codebook, permutation_matrix
from .errors import AllInfeasible, CampaignInfeasible, DomainError, RankDeficient
from .objectives import SUPPORTED_M
from .selection import greedy_order, norm_order, select_precoder
from .zfdfe import (Precoder, design_receiver, linear_receiver, optimal_linear_precoder,
                    optimal_precoder)

log = logging.getLogger(__name__)

SCHEMES = (
    "perfect-csi-zfdfe",
    "grassmann-zfdfe",
    "ordering-norm-zfdfe",
    "ordering-greedy-zfdfe",
    "lin-zf-grassmann",
    "perfect-csi-lin-zf",
)
CSV_COLUMNS = ("snr_db", "scheme", "ber", "bits", "errors", "mi_bits", "n_channels")
MAX_SKIP_FRACTION = 1e-3


# ---------------------------------------------------------------- QAM

def _axis_levels(m: int) -> int:
    if m not in SUPPORTED_M:
        raise DomainError(f"unsupported constellation size {m}")
    return 2 if m == 2 else int(round(math.sqrt(m)))


def _norm(m: int) -> float:
    if m == 2:
        return 1.0
    levels = _axis_levels(m)
    return math.sqrt(2.0 * (levels ** 2 - 1) / 3.0)


def _bits_per_axis(m: int) -> int:
    return 1 if m == 2 else int(round(math.log2(_axis_levels(m))))


def _gray_to_level(bits: np.ndarray) -> np.ndarray:
    # bits [..., b] MSB first -> level index n with gray(n) == bits
    n = np.zeros(bits.shape[:-1], dtype=np.int64)
    acc = np.zeros(bits.shape[:-1], dtype=np.int64)
    for b in range(bits.shape[-1]):
        acc ^= bits[..., b]
        n = (n << 1) | acc
    return n


def _level_to_gray(n: np.ndarray, nbits: int) -> np.ndarray:
    g = n ^ (n >> 1)
    shifts = np.arange(nbits - 1, -1, -1)
    return (g[..., None] >> shifts) & 1


def qam_modulate(bits, m: int = 16) -> np.ndarray:
    """Gray-mapped square QAM (or BPSK) with unit average energy.

    Each symbol consumes ``log2(m)`` bits: the first half select the
    in-phase level, the second half the quadrature level.  For 16-QAM the
    per-axis map is ``00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3`` (over sqrt(10)).
    """
    bits = np.asarray(bits, dtype=np.int64)
    bps = int(round(math.log2(m))) if m in SUPPORTED_M else None
    if bps is None:
        raise DomainError(f"unsupported constellation size {m}")
    if bits.size % bps:
        raise DomainError(f"bit count {bits.size} not divisible by {bps}")
    if np.any((bits != 0) & (bits != 1)):
        raise DomainError("bits must be 0 or 1")
    groups = bits.reshape(-1, bps)
    levels = _axis_levels(m)
    if m == 2:
        return (2.0 * groups[:, 0] - 1.0).astype(complex)
    half = bps // 2
    i_idx = _gray_to_level(groups[:, :half])
    q_idx = _gray_to_level(groups[:, half:])
    amp = 2.0 * np.arange(levels) - (levels - 1)
    return (amp[i_idx] + 1j * amp[q_idx]) / _norm(m)


def _slice_axis(x: np.ndarray, levels: int) -> np.ndarray:
    # ties (exact decision boundaries) go to the lower level
    n = np.ceil((x + levels - 1) / 2.0 - 0.5)
    return np.clip(n, 0, levels - 1).astype(np.int64)


def qam_slice(y, m: int = 16):
    """Nearest constellation point of each sample and its Gray bits.

    Returns
    -------
    symbols : complex array shaped like ``y``
    bits : int array of shape ``y.shape + (log2 m,)``
    """
    y = np.asarray(y, dtype=complex)
    levels = _axis_levels(m)
    scale = _norm(m)
    amp = 2.0 * np.arange(levels) - (levels - 1)
    if m == 2:
        n = _slice_axis(y.real, 2)
        return amp[n].astype(complex), n[..., None]
    nb = _bits_per_axis(m)
    ni = _slice_axis(y.real * scale, levels)
    nq = _slice_axis(y.imag * scale, levels)
    sym = (amp[ni] + 1j * amp[nq]) / scale
    bits = np.concatenate([_level_to_gray(ni, nb), _level_to_gray(nq, nb)], axis=-1)
    return sym, bits


def qam_demodulate(symbols, m: int = 16) -> np.ndarray:
    """Hard-decision bits of ``symbols`` as a flat vector."""
    return qam_slice(symbols, m)[1].reshape(-1)


# ---------------------------------------------------------------- schemes

@dataclass(frozen=True)
class Scheme:
    """A transmission scheme of the campaign.

    ``codebook`` is required by the Grassmann schemes; ``objective`` is the
    selection criterion (codebook schemes) or the linear design criterion
    (``perfect-csi-lin-zf``).
    """

    tag: str
    codebook: Codebook | None = field(default=None, repr=False)
    objective: str = "sum-mse"

    def __post_init__(self):
        if self.tag not in SCHEMES:
            raise DomainError(f"unknown scheme {self.tag!r}; choose from {SCHEMES}")
        if self.tag in ("grassmann-zfdfe", "lin-zf-grassmann") and self.codebook is None:
            raise DomainError(f"scheme {self.tag} needs a codebook")

    @property
    def label(self) -> str:
        if self.tag in ("grassmann-zfdfe", "lin-zf-grassmann", "perfect-csi-lin-zf"):
            return f"{self.tag}[{self.objective}]"
        return self.tag

    @property
    def linear(self) -> bool:
        return self.tag in ("lin-zf-grassmann", "perfect-csi-lin-zf")

    def check(self, config: SystemConfig):
        cb = self.codebook
        if cb is not None and (cb.nt != config.nt or cb.k != config.k):
            raise DomainError(
                f"codebook {cb.nt}x{cb.k} incompatible with nt={config.nt}, k={config.k}")

    def design(self, channel: ChannelMatrix):
        """Precoder plus receiver for one channel; raises on infeasibility."""
        k = channel.config.k
        tag = self.tag
        if tag == "perfect-csi-zfdfe":
            return design_receiver(channel, optimal_precoder(channel))
        if tag == "perfect-csi-lin-zf":
            return linear_receiver(channel, optimal_linear_precoder(channel, self.objective))
        if tag in ("ordering-norm-zfdfe", "ordering-greedy-zfdfe"):
            order = (norm_order if tag == "ordering-norm-zfdfe" else greedy_order)(channel.h, k)
            return design_receiver(channel, Precoder(permutation_matrix(order, channel.config.nt),
                                                     normalized=True))
        receiver = "linear" if self.linear else "dfe"
        sel = select_precoder(channel, self.codebook, self.objective, receiver=receiver)
        build = linear_receiver if self.linear else design_receiver
        return build(channel, self.codebook.precoder(sel.index))


# ---------------------------------------------------------------- results

@dataclass
class CampaignPoint:
    snr_db: float
    bits_sent: int
    bit_errors: int
    ber: float | None
    mean_mutual_info_bits: float
    n_channels: int
    n_skipped: int = 0

    @property
    def ber_std(self) -> float:
        """Binomial standard error of ``ber``."""
        if not self.bits_sent:
            return math.nan
        p = self.ber
        return math.sqrt(max(p * (1 - p), 0.0) / self.bits_sent)


@dataclass
class CampaignResult:
    scheme: str
    points: list
    master_seed: int
    genie: bool = False
    kind: str = "ber"
    config: dict | None = None

    @property
    def snr_db_points(self):
        return [p.snr_db for p in self.points]

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "kind": self.kind,
            "genie": self.genie,
            "master_seed": self.master_seed,
            "config": self.config,
            "points": [vars(p).copy() for p in self.points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_rows(self):
        scheme = self.scheme + ("+genie" if self.genie else "")
        for p in self.points:
            yield {
                "snr_db": p.snr_db,
                "scheme": scheme,
                "ber": "" if p.ber is None else repr(p.ber),
                "bits": p.bits_sent,
                "errors": p.bit_errors,
                "mi_bits": repr(p.mean_mutual_info_bits),
                "n_channels": p.n_channels,
            }


def results_to_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for res in results:
        for row in res.csv_rows():
            writer.writerow(row)
    return buf.getvalue()


def snr_to_noise(p_total: float, nr: int, snr_db: float) -> float:
    """Per-antenna noise variance giving P_total / E{n^H n} = snr."""
    return p_total / (nr * 10.0 ** (snr_db / 10.0))


# ---------------------------------------------------------------- engine

def detect(z: np.ndarray, b: np.ndarray, m: int, truth: np.ndarray | None = None):
    """Successive detection of the streams of ``z = G y`` (shape k x frames).

    Stream ``i`` is decided from ``z[i] - sum_{j<i} B[i, j] s_j`` where
    ``s_j`` are the earlier decisions, or the true symbols ``truth`` for
    genie-aided detection.  Returns decided symbols and bits
    (``k x frames x log2 m``).
    """
    k, frames = z.shape
    decided = np.empty((k, frames), dtype=complex)
    bps = int(round(math.log2(m)))
    bits = np.empty((k, frames, bps), dtype=np.int64)
    ref = decided if truth is None else truth
    for i in range(k):
        u = z[i] - b[i, :i] @ ref[:i] if i else z[i]
        decided[i], bits[i] = qam_slice(u, m)
    return decided, bits


def _simulate_channel(config, scheme, snr_db_points, n_frames, genie, master_seed, m, c):
    """Per-SNR (bits, errors, mi, skipped) for channel draw ``c``."""
    npts = len(snr_db_points)
    bits_out = np.zeros(npts, dtype=np.int64)
    err_out = np.zeros(npts, dtype=np.int64)
    mi_out = np.zeros(npts)
    skip_out = np.zeros(npts, dtype=np.int64)
    h = generate_channel(config, master_seed, c).h
    k, nr = config.k, config.nr
    bps = int(round(math.log2(m)))
    for j, snr_db in enumerate(snr_db_points):
        sigma2 = snr_to_noise(config.p_total, nr, snr_db)
        channel = ChannelMatrix(h, config.replace(sigma2_n=sigma2))
        try:
            design = scheme.design(channel)
        except (AllInfeasible, RankDeficient):
            skip_out[j] = 1
            continue
        mi_out[j] = np.log2(1.0 + design.analysis.snr).sum()
        if not n_frames:
            continue
        rng = derive_rng(master_seed, c, j + 1)
        tx_bits = rng.integers(0, 2, size=(k, n_frames, bps))
        s = qam_modulate(tx_bits.reshape(-1), m).reshape(k, n_frames)
        noise = complex_gaussian(rng, (nr, n_frames), sigma2)
        y = h @ (design.precoder.p @ s) + noise
        z = design.g @ y
        _, rx_bits = detect(z, design.b, m, truth=s if genie else None)
        bits_out[j] = tx_bits.size
        err_out[j] = int(np.count_nonzero(rx_bits != tx_bits))
    return bits_out, err_out, mi_out, skip_out


def _run_chunk(args):
    config, scheme, snr_db_points, n_frames, genie, master_seed, m, start, stop = args
    rows = [_simulate_channel(config, scheme, snr_db_points, n_frames, genie, master_seed, m, c)
            for c in range(start, stop)]
    return [np.stack(col) for col in zip(*rows)]


def _run(config, scheme, snr_db_points, n_channels, n_frames, genie, master_seed, m, workers,
         kind):
    if n_channels < 1:
        raise DomainError("n_channels must be at least 1")
    scheme.check(config)
    snr_db_points = [float(s) for s in snr_db_points]
    workers = max(1, int(workers))
    bounds = np.linspace(0, n_channels, min(workers * 4, n_channels) + 1).astype(int)
    tasks = [(config, scheme, snr_db_points, n_frames, genie, master_seed, m, a, b)
             for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers == 1:
        parts = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    bits, errs, mis, skips = (np.concatenate([p[i] for p in parts]) for i in range(4))
    points = []
    for j, snr_db in enumerate(snr_db_points):
        skipped = int(skips[:, j].sum())
        if skipped > MAX_SKIP_FRACTION * n_channels:
            raise CampaignInfeasible(
                f"{skipped} of {n_channels} channel draws infeasible at {snr_db} dB")
        used = n_channels - skipped
        ok = skips[:, j] == 0
        total_bits = int(bits[:, j].sum())
        total_errs = int(errs[:, j].sum())
        ber = (total_errs / total_bits) if (kind == "ber" and total_bits) else None
        mi = float(mis[ok, j].sum() / used) if used else math.nan
        points.append(CampaignPoint(snr_db=snr_db, bits_sent=total_bits, bit_errors=total_errs,
                                    ber=ber, mean_mutual_info_bits=mi, n_channels=used,
                                    n_skipped=skipped))
        if skipped:
            log.warning("%s: skipped %d channel draws at %.1f dB", scheme.label, skipped, snr_db)
    return CampaignResult(scheme=scheme.label, points=points, master_seed=master_seed,
                          genie=genie, kind=kind, config=config.to_dict())


def run_ber_campaign(config: SystemConfig, scheme: Scheme, snr_db_points, n_channels: int,
                     n_frames_per_channel: int, genie: bool = False, master_seed: int = 0,
                     m: int = 16, workers: int = 1) -> CampaignResult:
    """Bit error rate of ``scheme`` with true (or genie) error propagation.

    SNR is ``p_total / (nr sigma^2)``; ``config.sigma2_n`` is ignored and
    replaced per SNR point.
    """
    if n_frames_per_channel < 1:
        raise DomainError("n_frames_per_channel must be at least 1")
    return _run(config, scheme, snr_db_points, n_channels, n_frames_per_channel, genie,
                master_seed, m, workers, "ber")


def run_mi_campaign(config: SystemConfig, scheme: Scheme, snr_db_points, n_channels: int,
                    master_seed: int = 0, workers: int = 1) -> CampaignResult:
    """Average Gaussian mutual information sum_k log2(1 + SNR_k) per channel use."""
    return _run(config, scheme, snr_db_points, n_channels, 0, False, master_seed, 16, workers,
                "mi")


def per_channel_mi(config: SystemConfig, scheme: Scheme, snr_db: float, n_channels: int,
                   master_seed: int = 0) -> np.ndarray:
    """Mutual information of each channel draw (NaN where infeasible)."""
    out = np.full(n_channels, np.nan)
    for c in range(n_channels):
        _, _, mi, skip = _simulate_channel(config, scheme, [snr_db], 0, False, master_seed, 16, c)
        if not skip[0]:
            out[c] = mi[0]
    return out
