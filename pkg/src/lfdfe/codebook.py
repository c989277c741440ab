"""Precoder codebooks: subspace distances, Grassmann packings, permutations.

Codebook entries are normalized precoders (``nt x k`` with orthonormal
columns) stored as one ``(size, nt, k)`` complex array.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .channel import complex_gaussian, derive_rng
from .errors import DomainError, ShapeMismatch, TooFewEntries, TooLarge
from .zfdfe import Precoder

METRICS = ("proj2", "fs")
PERMUTATION_CAP = 10_000
DEFAULT_BUDGET = 50_000
ORTHO_TOL = 1e-10


def _as_matrix(p) -> np.ndarray:
    return p.p if isinstance(p, Precoder) else np.asarray(p, dtype=complex)


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"precoder shapes differ: {a.shape} vs {b.shape}")


def dist_proj2(p1, p2) -> float:
    """Projection 2-norm distance ``|| P1 P1^H - P2 P2^H ||_2``."""
    a, b = _as_matrix(p1), _as_matrix(p2)
    _check_pair(a, b)
    diff = a @ a.conj().T - b @ b.conj().T
    return float(min(np.linalg.norm(diff, 2), 1.0))


def dist_fs(p1, p2) -> float:
    """Fubini-Study distance ``arccos |det(P1^H P2)|``."""
    a, b = _as_matrix(p1), _as_matrix(p2)
    _check_pair(a, b)
    return float(np.arccos(np.clip(abs(np.linalg.det(a.conj().T @ b)), 0.0, 1.0)))


def _pairwise_to(entries: np.ndarray, x: np.ndarray, metric: str) -> np.ndarray:
    """Distances from the point ``x`` to every entry (vectorized)."""
    m = np.einsum("nti,tj->nij", entries.conj(), x)
    if metric == "proj2":
        smin = np.linalg.svd(m, compute_uv=False)[:, -1]
        return np.sqrt(np.clip(1.0 - smin ** 2, 0.0, 1.0))
    if metric == "fs":
        return np.arccos(np.clip(np.abs(np.linalg.det(m)), 0.0, 1.0))
    raise DomainError(f"unknown metric {metric!r}")


def _metric_fn(metric):
    if metric == "proj2":
        return dist_proj2
    if metric == "fs":
        return dist_fs
    raise DomainError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class Codebook:
    """Ordered collection of normalized precoders.

    ``min_distance`` is ``inf`` for single-entry codebooks.  Permutation
    codebooks carry ``metric=None`` and report their distance under proj2.
    """

    entries: np.ndarray
    metric: str | None
    min_distance: float
    build_seed: int | None
    kind: str

    def __post_init__(self):
        e = np.array(self.entries, dtype=complex)
        if e.ndim != 3 or e.shape[0] < 1:
            raise DomainError("entries must be a non-empty (size, nt, k) array")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self):
        return self.entries.shape[0]

    @property
    def nt(self) -> int:
        return self.entries.shape[1]

    @property
    def k(self) -> int:
        return self.entries.shape[2]

    def precoder(self, index: int) -> Precoder:
        return Precoder(self.entries[index], normalized=True)

    def subset(self, indices) -> "Codebook":
        e = self.entries[list(indices)]
        return make_codebook(e, self.metric, self.build_seed, self.kind)

    def to_json(self) -> str:
        size, nt, k = self.entries.shape
        flat = self.entries.reshape(size, nt * k)
        doc = {
            "nt": nt,
            "k": k,
            "kind": self.kind,
            "metric": self.metric if self.metric is not None else "none",
            "build_seed": self.build_seed,
            "min_distance": self.min_distance if math.isfinite(self.min_distance) else "inf",
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in flat],
        }
        return json.dumps(doc)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        doc = json.loads(text)
        nt, k = int(doc["nt"]), int(doc["k"])
        raw = np.asarray(doc["entries"], dtype=float)
        entries = (raw[..., 0] + 1j * raw[..., 1]).reshape(-1, nt, k)
        metric = None if doc["metric"] in (None, "none") else doc["metric"]
        md = doc["min_distance"]
        md = math.inf if md in ("inf", None) else float(md)
        cb = cls(entries=entries, metric=metric, min_distance=md,
                 build_seed=doc.get("build_seed"), kind=doc["kind"])
        return cb

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def validate(self, tol=ORTHO_TOL):
        """Largest orthonormality residual; ``DomainError`` if it exceeds ``tol``."""
        gram = np.einsum("nti,ntj->nij", self.entries.conj(), self.entries)
        err = np.abs(gram - np.eye(self.k)).max()
        if err > tol:
            raise DomainError(f"codebook entry deviates from orthonormality by {err:.2e}")
        return float(err)


def min_pairwise_distance(cb: Codebook, metric=None) -> float:
    """Exact minimum distance over all unordered pairs of entries."""
    metric = metric or cb.metric or "proj2"
    fn = _metric_fn(metric)
    e = cb.entries
    if len(e) < 2:
        raise TooFewEntries("need at least two entries")
    best = math.inf
    for i in range(len(e) - 1):
        for j in range(i + 1, len(e)):
            best = min(best, fn(e[i], e[j]))
    return best


def make_codebook(entries, metric, build_seed, kind) -> Codebook:
    entries = np.asarray(entries, dtype=complex)
    tmp = Codebook(entries=entries, metric=metric, min_distance=math.inf,
                   build_seed=build_seed, kind=kind)
    if len(tmp) < 2:
        return tmp
    return Codebook(entries=entries, metric=metric, min_distance=min_pairwise_distance(tmp),
                    build_seed=build_seed, kind=kind)


def random_stiefel(rng, nt, k) -> np.ndarray:
    """Isotropically distributed ``nt x k`` matrix with orthonormal columns."""
    q, r = np.linalg.qr(complex_gaussian(rng, (nt, k)))
    d = np.diag(r)
    return q * (d / np.abs(d))


def _retract(x: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(x)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _repulsion_direction(x, others, dists, metric, temperature, max_neighbours=8):
    """Tangent direction at ``x`` that moves away from its nearest neighbours."""
    order = np.argsort(dists, kind="stable")[:max_neighbours]
    weights = np.exp(-(dists[order] - dists[order[0]]) / temperature)
    keep = order[weights > 1e-3]
    weights = weights[weights > 1e-3]
    ys = others[keep]
    m = np.einsum("ti,ntj->nij", x.conj(), ys)
    if metric == "proj2":
        # d sigma_min / dX = Y b a^H for the smallest singular triplet
        a, _, bh = np.linalg.svd(m)
        yb = np.einsum("ntj,nj->nt", ys, bh[:, -1, :].conj())
        grads = np.einsum("nt,ni->nti", yb, a[:, :, -1].conj())
    else:
        # gradient of |det M|^2 is 2 |det M|^2 Y M^{-1}
        det = np.linalg.det(m)
        good = np.abs(det) > 1e-12
        if not good.any():
            return np.zeros_like(x)
        ys, m, det, weights = ys[good], m[good], det[good], weights[good]
        grads = (np.abs(det) ** 2)[:, None, None] * np.einsum(
            "ntj,nji->nti", ys, np.linalg.inv(m))
    grad = np.einsum("n,nti->ti", weights, grads)
    # project onto the tangent space, descend the similarity
    grad = grad - x @ (x.conj().T @ grad)
    nrm = np.linalg.norm(grad)
    return -grad / nrm if nrm > 0 else grad


class _PackingState:
    def __init__(self, entries, metric):
        self.entries = entries
        self.metric = metric
        n = len(entries)
        self.dist = np.full((n, n), np.inf)
        for i in range(n):
            row = _pairwise_to(entries, entries[i], metric)
            row[i] = np.inf
            self.dist[i] = row
        self.dist = np.minimum(self.dist, self.dist.T)

    def min_distance(self) -> float:
        return float(self.dist.min())

    def closest_pair(self):
        flat = int(np.argmin(self.dist))
        return divmod(flat, self.dist.shape[0])

    def row_with(self, i, x):
        row = _pairwise_to(self.entries, x, self.metric)
        row[i] = np.inf
        return row

    def replace(self, i, x, row):
        self.entries[i] = x
        self.dist[i] = row
        self.dist[:, i] = row


def build_grassmann_codebook(nt: int, k: int, size: int, metric: str = "proj2",
                             budget: int = DEFAULT_BUDGET, seed: int = 0,
                             history: list | None = None) -> Codebook:
    """Max-min subspace packing by greedy seeding and pairwise repulsion.

    The budget counts candidate evaluations, where evaluating a candidate
    means computing its distances to the rest of the codebook.  About a
    tenth of it seeds the packing greedily (each slot keeps the best of
    several random Stiefel samples); the remainder repeatedly nudges one
    member of the closest pair away from its nearest neighbours along the
    manifold and keeps the move only if that member's nearest-neighbour
    distance grows.

    Parameters
    ----------
    history : list, optional
        If given, the best-so-far minimum distance is appended after every
        candidate evaluation.
    """
    if metric not in METRICS:
        raise DomainError(f"metric must be one of {METRICS}")
    if not (1 <= k <= nt):
        raise DomainError(f"need 1 <= k <= nt, got k={k}, nt={nt}")
    if size < 1:
        raise DomainError("size must be at least 1")
    if budget < size:
        raise DomainError(f"budget {budget} is smaller than the codebook size {size}")
    rng = derive_rng(seed, 0)
    if size == 1:
        return Codebook(entries=random_stiefel(rng, nt, k)[None], metric=metric,
                        min_distance=math.inf, build_seed=seed, kind="grassmann")

    # greedy seeding
    tries = max(1, min(32, (budget // 10) // size))
    entries = np.empty((size, nt, k), dtype=complex)
    entries[0] = random_stiefel(rng, nt, k)
    spent = 1
    for slot in range(1, size):
        best, best_d = None, -1.0
        for _ in range(tries):
            cand = random_stiefel(rng, nt, k)
            d = _pairwise_to(entries[:slot], cand, metric).min()
            spent += 1
            if d > best_d:
                best, best_d = cand, d
        entries[slot] = best
    state = _PackingState(entries, metric)
    best_min = state.min_distance()
    if history is not None:
        history.extend([best_min] * spent)

    step = 0.2
    temperature = 0.02 if metric == "proj2" else 0.03
    flip = 0
    while spent < budget:
        i, j = state.closest_pair()
        target = (i, j)[flip % 2]
        x = state.entries[target]
        row = state.dist[target]
        direction = _repulsion_direction(x, np.delete(state.entries, target, axis=0),
                                         np.delete(row, target), metric, temperature)
        cand = _retract(x + step * direction)
        new_row = state.row_with(target, cand)
        spent += 1
        if new_row.min() > row.min():
            state.replace(target, cand, new_row)
            step = min(step * 1.3, 0.5)
        else:
            step *= 0.6
            flip += 1
            if step < 1e-5:
                # stuck: random kick of a closest-pair member
                kick = random_stiefel(rng, nt, k)
                cand = _retract(x + 0.05 * kick)
                new_row = state.row_with(target, cand)
                spent += 1
                if new_row.min() >= row.min():
                    state.replace(target, cand, new_row)
                step = 0.05
        best_min = max(best_min, state.min_distance())
        if history is not None:
            history.extend([best_min] * (spent - len(history)))

    final = state.entries
    cb = Codebook(entries=final, metric=metric, min_distance=math.inf,
                  build_seed=seed, kind="grassmann")
    return Codebook(entries=final, metric=metric, min_distance=min_pairwise_distance(cb, metric),
                    build_seed=seed, kind="grassmann")


def permutation_tuples(nt: int, k: int):
    """All ordered k-tuples of distinct antenna indices, lexicographic."""
    return list(itertools.permutations(range(nt), k))


def permutation_index(order, nt: int) -> int:
    """Position of ``order`` in the lexicographic list of k-permutations of nt."""
    order = [int(o) for o in order]
    k = len(order)
    remaining = list(range(nt))
    index = 0
    for pos, o in enumerate(order):
        rank = remaining.index(o)
        # each choice at this position fixes (nt-pos-1)!/(nt-k)! completions
        index += rank * math.perm(nt - pos - 1, k - pos - 1)
        remaining.pop(rank)
    return index


def permutation_matrix(order, nt: int) -> np.ndarray:
    p = np.zeros((nt, len(order)), dtype=complex)
    p[list(order), np.arange(len(order))] = 1.0
    return p


def build_permutation_codebook(nt: int, k: int, cap: int = PERMUTATION_CAP) -> Codebook:
    """Every column-selection/ordering matrix, in lexicographic tuple order."""
    if not (1 <= k <= nt):
        raise DomainError(f"need 1 <= k <= nt, got k={k}, nt={nt}")
    count = math.perm(nt, k)
    if count > cap:
        raise TooLarge(f"{count} permutation matrices exceed the cap of {cap}")
    entries = np.stack([permutation_matrix(t, nt) for t in permutation_tuples(nt, k)])
    if count < 2:
        md = math.inf
    else:
        # any two tuples over the same column set span the same subspace
        same_span = math.comb(nt, k) < count
        md = 0.0 if same_span else 1.0
    return Codebook(entries=entries, metric=None, min_distance=md, build_seed=None,
                    kind="permutation")
