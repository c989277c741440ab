"""Equal-diagonal QR rotation of a positive diagonal matrix.

Given ``A = Diag(delta)`` the routine finds an orthogonal ``V`` such that
``A V = Q R`` with every diagonal entry of ``R`` equal to the geometric
mean of ``delta``.  The construction sweeps down the diagonal and at each
step uses one pair of 2x2 Givens rotations (one from the left, one from
the right) to pin the current pivot to the geometric mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GmdResult:
    v: np.ndarray
    q: np.ndarray
    r: np.ndarray


def pair_rotation(dp: float, dq: float, target: float) -> tuple[float, float]:
    """Cosine/sine of the right rotation mapping Diag(dp, dq) to pivot ``target``.

    Requires ``dp >= target >= dq > 0``.  The rotated first column of
    ``Diag(dp, dq) @ [[c, -s], [s, c]]`` has norm ``target``.
    """
    if dp - dq <= 1e-15 * dp:
        return 1.0, 0.0
    # factored differences keep precision when target is close to dp or dq
    c2 = (target - dq) * (target + dq) / ((dp - dq) * (dp + dq))
    c2 = min(max(c2, 0.0), 1.0)
    return float(np.sqrt(c2)), float(np.sqrt(1.0 - c2))


def _swap(r, v, q, a, b):
    if a == b:
        return
    r[:, [a, b]] = r[:, [b, a]]
    r[[a, b], :] = r[[b, a], :]
    v[:, [a, b]] = v[:, [b, a]]
    q[:, [a, b]] = q[:, [b, a]]


def equal_diag_rotation(delta) -> GmdResult:
    """Rotate ``Diag(delta)`` so its QR factor has a constant diagonal.

    Parameters
    ----------
    delta : array_like
        Strictly positive, finite diagonal entries.

    Returns
    -------
    GmdResult
        ``v`` and ``q`` are real orthogonal, ``r`` is upper triangular with
        ``r[i, i] == prod(delta) ** (1 / k)`` up to rounding and
        ``Diag(delta) @ v == q @ r``.
    """
    d = np.asarray(delta, dtype=float).ravel()
    if d.size == 0:
        raise DomainError("delta must be non-empty")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DomainError("delta entries must be finite and positive")
    k = d.size
    r = np.diag(d)
    v = np.eye(k)
    q = np.eye(k)
    if k == 1:
        return GmdResult(v=v, q=q, r=r)

    sigma = float(np.exp(np.mean(np.log(d))))
    spread_tol = 1e-14
    for i in range(k - 1):
        tail = np.diag(r)[i:]
        if tail.max() - tail.min() <= spread_tol * tail.max():
            break
        p = i + int(np.argmax(tail))
        qi = i + int(np.argmin(tail))
        _swap(r, v, q, i, p)
        if qi == i:
            qi = p
        _swap(r, v, q, i + 1, qi)

        dp, dq = r[i, i], r[i + 1, i + 1]
        c, s = pair_rotation(dp, dq, sigma)
        if s == 0.0:
            continue
        g_right = np.array([[c, -s], [s, c]])
        # left rotation sends the rotated first column onto (sigma, 0)
        g_left = np.array([[c * dp, -s * dq], [s * dq, c * dp]]) / sigma
        cols = [i, i + 1]
        r[:, cols] = r[:, cols] @ g_right
        r[cols, :] = g_left.T @ r[cols, :]
        v[:, cols] = v[:, cols] @ g_right
        q[:, cols] = q[:, cols] @ g_left
        r[i + 1, i] = 0.0
        r[i, i] = sigma
        r[i + 1, i + 1] = dp * dq / sigma
    return GmdResult(v=v, q=q, r=r)
