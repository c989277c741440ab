"""Property suites run by ``lfdfe verify``.

Each suite draws its own random cases from a seed and returns a
:class:`SuiteReport` listing every property with its worst observed value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, derive_rng, generate_channel
from .codebook import make_codebook, random_stiefel
from .errors import DomainError
from .gmd import equal_diag_rotation
from .objectives import OBJECTIVES, eval_objective, majorizes
from .selection import codebook_log_mse
from .zfdfe import Precoder, design_receiver, mse_analysis, optimal_normalized_precoder, optimal_precoder

SUITES = ("majorization", "gmd", "zero-forcing", "isotropy", "lemma3")
DEFAULT_SAMPLES = {"majorization": 1000, "gmd": 1000, "zero-forcing": 1000,
                   "isotropy": 20000, "lemma3": 500}


@dataclass
class PropertyCheck:
    name: str
    worst: float
    tolerance: float
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.worst <= self.tolerance

    def to_dict(self) -> dict:
        return {"name": self.name, "worst": self.worst, "tolerance": self.tolerance,
                "failures": self.failures, "passed": self.passed}


@dataclass
class SuiteReport:
    suite: str
    n_cases: int
    seed: int
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"suite": self.suite, "n_cases": self.n_cases, "seed": self.seed,
                "passed": self.passed, "seconds": self.seconds,
                "checks": [c.to_dict() for c in self.checks]}


def random_unitary(rng, n: int) -> np.ndarray:
    """Haar-distributed n x n unitary (QR of a Gaussian with phase fix)."""
    return random_stiefel(rng, n, n)


def random_gmd_case(rng, k_max: int = 8, cond_max: float = 1e6) -> np.ndarray:
    """Positive diagonal with 1 <= k <= k_max entries and condition <= cond_max."""
    k = int(rng.integers(1, k_max + 1))
    cond = 10.0 ** rng.uniform(0.0, np.log10(cond_max))
    return np.exp(rng.uniform(0.0, np.log(cond), size=k))


def gmd_residuals(delta) -> tuple[float, float, float]:
    """(relative diagonal spread, reconstruction residual, unitarity residual)."""
    delta = np.asarray(delta, dtype=float)
    res = equal_diag_rotation(delta)
    k = delta.size
    d = np.diag(res.r)
    spread = float((d.max() - d.min()) / d.max())
    recon = float(np.linalg.norm(np.diag(delta) @ res.v - res.q @ res.r) / np.linalg.norm(delta))
    eye = np.eye(k)
    unit = float(max(np.linalg.norm(res.v.T @ res.v - eye), np.linalg.norm(res.q.T @ res.q - eye)))
    lower = float(np.abs(np.tril(res.r, -1)).max()) if k > 1 else 0.0
    return spread, max(recon, lower), unit


def _suite_gmd(n, seed):
    rng = derive_rng(seed)
    worst = np.zeros(3)
    for _ in range(n):
        worst = np.maximum(worst, gmd_residuals(random_gmd_case(rng)))
    return [PropertyCheck("equal-diagonal spread", worst[0], 1e-8),
            PropertyCheck("reconstruction", worst[1], 1e-9),
            PropertyCheck("unitarity", worst[2], 1e-9)]


def _random_pair(rng, seed, i):
    k = int(rng.integers(2, 5))
    cfg = SystemConfig(4, 4, k, p_total=float(k), sigma2_n=float(rng.uniform(0.05, 2.0)))
    channel = generate_channel(cfg, seed, i)
    p = Precoder(random_unitary(rng, 4)[:, :k], normalized=True)
    return channel, p


def _suite_majorization(n, seed):
    rng = derive_rng(seed, 0)
    fail_upper = fail_lower = 0
    spread = 0.0
    for i in range(n):
        channel, p = _random_pair(rng, seed, i)
        a = mse_analysis(channel, p)
        ell = a.log_mse
        mean = np.full_like(ell, np.log(np.prod(a.eigs_n)) / ell.size)
        fail_upper += not majorizes(ell, np.log(a.eigs_n))
        fail_lower += not majorizes(mean, ell)
        opt = mse_analysis(channel, optimal_precoder(channel)).log_mse
        spread = max(spread, float(opt.max() - opt.min()))
    return [PropertyCheck("log-MSE majorized by log-eigenvalues of N", 0.0, 0.0, fail_upper),
            PropertyCheck("log-MSE majorizes its mean", 0.0, 0.0, fail_lower),
            PropertyCheck("optimal precoder log-MSE spread", spread, 1e-8)]


def _suite_zero_forcing(n, seed):
    rng = derive_rng(seed, 0)
    worst_zf = worst_diag = 0.0
    for i in range(n):
        channel, p = _random_pair(rng, seed, i)
        d = design_receiver(channel, p)
        k = d.b.shape[0]
        worst_zf = max(worst_zf, float(np.linalg.norm(d.g @ channel.h @ d.precoder.p - d.b - np.eye(k))))
        e = d.c @ d.analysis.n @ d.c.conj().T
        off = e - np.diag(np.diag(e))
        worst_diag = max(worst_diag, float(np.abs(off).max() / np.abs(np.diag(e)).max()))
    return [PropertyCheck("||GHP - B - I||", worst_zf, 1e-9),
            PropertyCheck("error covariance off-diagonal (relative)", worst_diag, 1e-9)]


def isotropy_mean(n, seed, nt=4, nr=4, k=2) -> np.ndarray:
    """Sample mean of Pbar Pbar^H over ``n`` channel draws."""
    cfg = SystemConfig(nt, nr, k)
    acc = np.zeros((nt, nt), dtype=complex)
    for i in range(n):
        p = optimal_normalized_precoder(generate_channel(cfg, seed, i)).p
        acc += p @ p.conj().T
    return acc / n


def _suite_isotropy(n, seed):
    nt, k = 4, 2
    mean = isotropy_mean(n, seed, nt=nt, k=k)
    dev = float(np.abs(mean - (k / nt) * np.eye(nt)).max())
    return [PropertyCheck("max |mean(PP^H) - (k/nt) I|", dev, 0.02)]


def dfe_linear_gaps(n, seed, nt=5, nr=4, k=4, codebook=None, size=16):
    """Worst ``min_j g(DFE) - min_j g(linear)`` per objective over ``n`` channels."""
    cfg = SystemConfig(nt, nr, k, p_total=float(k))
    if codebook is None:
        rng = derive_rng(seed, 0)
        codebook = make_codebook(np.stack([random_stiefel(rng, nt, k) for _ in range(size)]),
                                 None, seed, "random")
    worst = {name: -np.inf for name in OBJECTIVES}
    for i in range(n):
        channel = generate_channel(cfg, seed, i)
        dfe = codebook_log_mse(channel, codebook, "dfe")
        lin = codebook_log_mse(channel, codebook, "linear")
        for name in OBJECTIVES:
            gap = np.min(eval_objective(name, dfe)) - np.min(eval_objective(name, lin))
            worst[name] = max(worst[name], float(gap))
    return worst


def _suite_dfe_vs_linear(n, seed):
    worst = dfe_linear_gaps(n, seed)
    return [PropertyCheck(f"DFE <= linear ({name})", gap, 1e-12) for name, gap in worst.items()]


_RUNNERS = {
    "majorization": _suite_majorization,
    "gmd": _suite_gmd,
    "zero-forcing": _suite_zero_forcing,
    "isotropy": _suite_isotropy,
    "lemma3": _suite_dfe_vs_linear,
}


def run_suite(name: str, n_cases: int | None = None, seed: int = 0) -> SuiteReport:
    if name not in _RUNNERS:
        raise DomainError(f"unknown suite {name!r}; choose from {SUITES}")
    n = DEFAULT_SAMPLES[name] if n_cases is None else int(n_cases)
    if n < 1:
        raise DomainError("n_cases must be at least 1")
    t0 = time.perf_counter()
    checks = _RUNNERS[name](n, seed)
    return SuiteReport(suite=name, n_cases=n, seed=seed, checks=checks,
                       seconds=time.perf_counter() - t0)
