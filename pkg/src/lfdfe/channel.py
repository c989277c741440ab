"""Rayleigh channel realizations, system configuration and eigen bases."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, RankDeficient

# lambda_k below this fraction of lambda_1 counts as rank deficient
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, stream count, power budget and noise level.

    All quantities are on a linear scale.
    """

    nt: int
    nr: int
    k: int
    p_total: float = 1.0
    sigma2_n: float = 1.0

    def __post_init__(self):
        for name in ("nt", "nr", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
        if self.k > min(self.nt, self.nr):
            raise DomainError(
                f"k={self.k} exceeds min(nt, nr)={min(self.nt, self.nr)}")
        if not (np.isfinite(self.p_total) and self.p_total > 0):
            raise DomainError(f"p_total must be positive, got {self.p_total!r}")
        if not (np.isfinite(self.sigma2_n) and self.sigma2_n > 0):
            raise DomainError(f"sigma2_n must be positive, got {self.sigma2_n!r}")

    def replace(self, **changes) -> "SystemConfig":
        values = asdict(self)
        values.update(changes)
        return SystemConfig(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {"nt", "nr", "k", "p_total", "sigma2_n"}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for the stream ``(seed, *keys)``.

    Streams for different key tuples are statistically independent, so a
    draw indexed by ``keys`` is reproducible no matter which worker
    produces it.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples of given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChannelMatrix:
    h: np.ndarray
    config: SystemConfig

    def __post_init__(self):
        h = np.array(self.h, dtype=complex)
        if h.shape != (self.config.nr, self.config.nt):
            raise DomainError(
                f"channel shape {h.shape} does not match "
                f"(nr, nt)=({self.config.nr}, {self.config.nt})")
        if not np.all(np.isfinite(h)):
            raise DomainError("channel entries must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def gram(self) -> np.ndarray:
        """H^H H."""
        return self.h.conj().T @ self.h


def generate_channel(config: SystemConfig, seed: int, index: int | None = None) -> ChannelMatrix:
    """Draw an i.i.d. CN(0, 1) channel.

    ``index`` selects one draw of an ensemble sharing the master ``seed``.
    """
    rng = derive_rng(seed) if index is None else derive_rng(seed, index)
    return ChannelMatrix(complex_gaussian(rng, (config.nr, config.nt)), config)


@dataclass(frozen=True)
class EigBasis:
    u1: np.ndarray
    lambda1: np.ndarray
    lambda_all: np.ndarray = field(repr=False, default=None)


def fix_column_phases(u: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(u), axis=0)
    pivots = u[idx, np.arange(u.shape[1])]
    return u * (np.abs(pivots) / pivots)


def eig_basis(channel: ChannelMatrix, k: int | None = None) -> EigBasis:
    """Top-``k`` eigenpairs of H^H H in descending order.

    Raises
    ------
    RankDeficient
        If the k-th eigenvalue is below ``RANK_TOL`` times the largest.
    """
    if k is None:
        k = channel.config.k
    nt, nr = channel.config.nt, channel.config.nr
    if not 1 <= k <= min(nt, nr):
        raise DomainError(f"k={k} must lie in [1, min(nt, nr)]")
    w, u = np.linalg.eigh(channel.gram)
    w = w[::-1]
    u = u[:, ::-1]
    if not w[0] > 0 or w[k - 1] < RANK_TOL * w[0]:
        raise RankDeficient(
            f"lambda_{k}={w[k - 1]:.3e} too small relative to lambda_1={w[0]:.3e}")
    u1 = fix_column_phases(u[:, :k])
    lam = np.clip(w, 0.0, None)
    return EigBasis(u1=u1, lambda1=lam[:k].copy(), lambda_all=lam)
