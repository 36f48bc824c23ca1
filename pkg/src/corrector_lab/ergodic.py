"""Sublinearity profiles, Poincare and Holder diagnostics, nearest multiples.

Balls are taxicab balls ``|n| = sum_i |n_i| <= R`` centred at the origin.
Radii are guarded so a ball never wraps onto itself on the torus:
``R <= L // 2 - 1``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from corrector_lab.cocycle import evaluate, potential

__all__ = [
    "RadiusError",
    "SublinearityProfile",
    "HolderEstimate",
    "PoincareResult",
    "DirectionalAverage",
    "ball_mask",
    "ball_size",
    "max_radius",
    "sublinearity_profile",
    "directional_average",
    "poincare_check",
    "holder_radii",
    "holder_exponent",
    "oscillation_constant_stat",
    "nearest_multiple",
    "multiple_bounds_hold",
]


class RadiusError(ValueError):
    """Radius too large for the torus (the ball would wrap)."""


def max_radius(L):
    return L // 2 - 1


def _guard(r, L, what="radius"):
    if r > max_radius(L):
        raise RadiusError(f"{what} {r} exceeds torus guard floor(L/2) - 1 = {max_radius(L)} for L={L}")


def ball_mask(radius, d, box=None):
    """Boolean mask of ``|n| <= radius`` on the box ``[-box, box]^d``."""
    box = radius if box is None else box
    ax = np.abs(np.arange(-box, box + 1))
    norm = np.zeros((1,) * d, dtype=np.int64)
    for j in range(d):
        shape = [1] * d
        shape[j] = -1
        norm = norm + ax.reshape(shape)
    return np.broadcast_to(norm <= radius, (2 * box + 1,) * d)


def ball_size(radius, d):
    return int(ball_mask(radius, d).sum())


def _torus_ball_values(u, radius, center=None):
    """Values of a torus field on the box ``[-radius, radius]^d`` around ``center``."""
    d, L = u.ndim, u.shape[0]
    center = np.zeros(d, dtype=np.int64) if center is None else np.asarray(center, dtype=np.int64)
    offs = np.arange(-radius, radius + 1)
    return u[np.ix_(*[np.mod(center[j] + offs, L) for j in range(d)])]


@dataclass(frozen=True)
class SublinearityProfile:
    """``values[k] = max_{|n| <= radii[k]} |S_n - <n, y>| / radii[k]``."""

    radii: np.ndarray
    values: np.ndarray
    exact: bool = True

    def rows(self):
        return [(int(r), float(v)) for r, v in zip(self.radii, self.values)]


def sublinearity_profile(S, y, radii):
    """Exact sublinearity profile over nested taxicab balls.

    The potential is computed once on the box of the largest radius, so
    every ball is enumerated exactly.

    Raises
    ------
    RadiusError
        If the largest radius exceeds ``L // 2 - 1``.
    """
    radii = np.array(sorted({int(r) for r in radii}), dtype=np.int64)
    if radii.size == 0 or radii[0] < 1:
        raise ValueError("radii must be positive integers")
    rmax = int(radii[-1])
    _guard(rmax, S.L)
    d = S.d
    y = np.asarray(y, dtype=np.float64).reshape(d)
    u = potential(S, rmax)
    offs = np.arange(-rmax, rmax + 1, dtype=np.float64)
    linear = np.zeros((1,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = -1
        linear = linear + y[j] * offs.reshape(shape)
    dev = np.abs(u - linear)
    full = ball_mask(rmax, d)
    norm = np.zeros(full.shape, dtype=np.int64)
    for j in range(d):
        shape = [1] * d
        shape[j] = -1
        norm = norm + np.abs(np.arange(-rmax, rmax + 1)).reshape(shape)
    # running max over shells |n| = t gives every nested ball at once
    shell_max = np.zeros(rmax * d + 1)
    np.maximum.at(shell_max, norm.ravel(), dev.ravel())
    ball_max = np.maximum.accumulate(shell_max)
    values = ball_max[radii] / radii
    return SublinearityProfile(radii, values, True)


class DirectionalAverage(NamedTuple):
    value: float
    wrapped: bool


def directional_average(S, n, k):
    """``S_{k n} / (k |n|)``; ``wrapped`` is set when the path crosses the torus."""
    n = np.asarray(n, dtype=np.int64).reshape(S.d)
    norm = int(np.abs(n).sum())
    if norm == 0:
        raise ValueError("direction n must be nonzero")
    if k < 1:
        raise ValueError("k must be >= 1")
    kn = k * n
    wrapped = bool(np.any(np.abs(kn) >= S.L))
    return DirectionalAverage(evaluate(S, kn) / (k * norm), wrapped)


class PoincareResult(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def poincare_check(u, R, center=None):
    """Both sides of the discrete Poincare inequality on the ball of radius ``R``.

    ``lhs = sum_{|n|<=R} (u(n) - mean_R)^2`` and
    ``rhs = 4 R^2 sum_{|n|<=R+1} sum_i (d_i u(n))^2 + (d*_i u(n))^2``
    for a torus field ``u``.
    """
    u = np.asarray(u, dtype=np.float64)
    d, L = u.ndim, u.shape[0]
    if R < 1:
        raise ValueError("R must be >= 1")
    _guard(R + 1, L, "R + 1")
    inner = ball_mask(R, d)
    vals = _torus_ball_values(u, R, center)[inner]
    lhs = float(np.sum((vals - vals.mean()) ** 2))
    grad_sq = np.zeros(u.shape)
    for i in range(d):
        grad_sq += (np.roll(u, -1, axis=i) - u) ** 2 + (np.roll(u, 1, axis=i) - u) ** 2
    outer = ball_mask(R + 1, d)
    rhs = float(4 * R**2 * np.sum(_torus_ball_values(grad_sq, R + 1, center)[outer]))
    return PoincareResult(lhs, rhs, lhs <= rhs)


@dataclass(frozen=True)
class HolderEstimate:
    """Log-log fit ``osc(B_r) ~ C_hat * (r / R) ** alpha_hat``.

    ``C_hat`` is the fitted oscillation at ``r = R``; ``fit_quality`` is the
    coefficient of determination.  ``degenerate`` marks a constant field
    (zero oscillation), for which the exponent is undefined.
    """

    alpha_hat: float
    C_hat: float
    R: int
    fit_quality: float
    radii: tuple = ()
    osc: tuple = ()
    degenerate: bool = False


def holder_radii(R):
    return tuple(sorted({max(1, int(round(R / q))) for q in (8, 4, 2, 1)}))


def _box_generator_residual(env, u_box, radius):
    """Max net current ``|sum_i c_i(n)(u(n+e_i)-u(n)) - c_i(n-e_i)(u(n)-u(n-e_i))|`` on ``|n| <= radius``."""
    d = u_box.ndim
    rho = (u_box.shape[0] - 1) // 2
    L = env.L
    inner = tuple(slice(rho - radius, rho + radius + 1) for _ in range(d))
    offs = np.arange(-radius, radius + 1)
    net = np.zeros((2 * radius + 1,) * d)
    for i in range(d):
        fwd = list(inner)
        fwd[i] = slice(rho - radius + 1, rho + radius + 2)
        bwd = list(inner)
        bwd[i] = slice(rho - radius - 1, rho + radius)
        idx = [np.mod(offs, L) for _ in range(d)]
        c_here = env.conductances[i][np.ix_(*idx)]
        idx[i] = np.mod(offs - 1, L)
        c_back = env.conductances[i][np.ix_(*idx)]
        u0 = u_box[inner]
        net += c_here * (u_box[tuple(fwd)] - u0) - c_back * (u0 - u_box[tuple(bwd)])
    return float(np.abs(net[ball_mask(radius, d)]).max())


def holder_exponent(env, u, R, harmonic_tol=1e-6):
    """Fit the oscillation exponent of a harmonic function on nested balls.

    Parameters
    ----------
    env : Environment
        Environment in which ``u`` is harmonic (read periodically).
    u : ndarray
        Values on the box ``[-rho, rho]^d`` centred at the origin, with
        ``rho >= 2 R + 1``; e.g. ``cocycle.potential(S, 2 * R + 1)``.
    R : int
        Outer radius; the fit uses :func:`holder_radii`.
    harmonic_tol : float
        Bound on the net nodal current over the ball of radius ``2 R``.

    Raises
    ------
    ValueError
        If ``u`` is not harmonic on the ball of radius ``2 R``, or fewer than
        four distinct radii are available.
    RadiusError
        If ``2 R`` exceeds the torus guard.
    """
    u = np.asarray(u, dtype=np.float64)
    d = u.ndim
    rho = (u.shape[0] - 1) // 2
    if d != env.d or u.shape != (2 * rho + 1,) * d:
        raise ValueError(f"u must be a centred box of dimension {env.d}")
    _guard(2 * R, env.L, "2R")
    if rho < 2 * R + 1:
        raise ValueError(f"box radius {rho} too small; need >= {2 * R + 1}")
    radii = holder_radii(R)
    if len(radii) < 4:
        raise ValueError(f"R={R} gives only {len(radii)} distinct fit radii; need R >= 8")
    resid = _box_generator_residual(env, u, 2 * R)
    if resid > harmonic_tol:
        raise ValueError(f"input is not harmonic on the ball of radius {2 * R}: residual {resid:.3e}")

    osc = []
    for r in radii:
        sl = tuple(slice(rho - r, rho + r + 1) for _ in range(d))
        vals = u[sl][ball_mask(r, d)]
        osc.append(float(vals.max() - vals.min()))
    osc = np.array(osc)
    if osc[-1] == 0.0:
        return HolderEstimate(float("nan"), 0.0, R, 0.0, radii, tuple(osc), degenerate=True)
    keep = osc > 0
    x = np.log(np.array(radii, dtype=np.float64)[keep])
    z = np.log(osc[keep])
    slope, intercept = np.polyfit(x, z, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    ss_res = float(np.sum((z - pred) ** 2))
    quality = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    C_hat = float(np.exp(intercept) * R**slope)
    return HolderEstimate(float(slope), C_hat, int(R), quality, radii, tuple(osc))


def oscillation_constant_stat(env, S, R):
    """``C'(R) / R`` with the two unknown regularity constants set to 1.

    ``C'(R)^2 = (4R)^2 / |B_{4R}| * 4 * sum_{|n| <= 4R+1} sum_i f_i(n)^2 + f_i(n - e_i)^2``
    """
    if S.shape != env.shape:
        raise ValueError("cocycle and environment live on different tori")
    if R < 1:
        raise ValueError("R must be >= 1")
    _guard(4 * R + 1, env.L, "4R + 1")
    d = S.d
    f = S.increments
    sq = np.zeros(S.shape.grid)
    for i in range(d):
        sq += f[i] ** 2 + np.roll(f[i], 1, axis=i) ** 2
    total = float(np.sum(_torus_ball_values(sq, 4 * R + 1)[ball_mask(4 * R + 1, d)]))
    return float(np.sqrt((4 * R) ** 2 / ball_size(4 * R, d) * 4 * total) / R)


def nearest_multiple(m, n):
    """Point ``l = k v`` with ``|v| = n``, ``|l| <= |m|`` and ``|l - m| <= n + |m| d / n``.

    ``k = |m| // n`` and ``v`` rounds ``m n / |m|`` to an integer vector of
    norm ``n``: floor the absolute coordinates, then add one to the ``K``
    coordinates with the largest fractional parts (ties to the lower
    index), and restore signs.  Integer arithmetic only.

    Examples
    --------
    >>> nearest_multiple([7], 2).tolist()
    [6]
    >>> nearest_multiple([1, -1], 3).tolist()
    [0, 0]
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    m = np.asarray(m, dtype=np.int64).ravel()
    M = int(np.abs(m).sum())
    if M < n:
        return np.zeros_like(m)
    k = M // n
    scaled = [abs(int(c)) * n for c in m]
    floors = [s // M for s in scaled]
    rems = [s % M for s in scaled]
    K = n - sum(floors)
    order = sorted(range(len(m)), key=lambda i: (-rems[i], i))
    v = list(floors)
    for i in order[:K]:
        v[i] += 1
    v = np.array([vi if c >= 0 else -vi for vi, c in zip(v, m)], dtype=np.int64)
    return k * v


def multiple_bounds_hold(m, ell, n):
    """Exact check of ``|l| <= |m|`` and ``n |l - m| <= n^2 + |m| d``."""
    m = np.asarray(m, dtype=np.int64)
    ell = np.asarray(ell, dtype=np.int64)
    Mn = int(np.abs(m).sum())
    return int(np.abs(ell).sum()) <= Mn and n * int(np.abs(ell - m).sum()) <= n * n + Mn * m.size
