"""Random walk among random conductances and the martingale harness.

Moves are ordered ``(+e_0, -e_0, +e_1, -e_1, ...)``.  From site ``n`` the
walk jumps to ``n + e_i`` with probability ``c_i(n) / bar_c(n)`` and to
``n - e_i`` with probability ``c_i(n - e_i) / bar_c(n)``.  Walks live on
unwrapped Z^d; the environment is read modulo ``L``.

Step ``t`` of a walk with seed ``s`` uses the uniform ``hash(s, t)``;
walk ``w`` of an ensemble with seed ``seed`` has seed ``hash(seed, w)``.
An ensemble member can therefore be replayed alone with :func:`simulate`.
"""

from dataclasses import asdict, dataclass

import numpy as np

from corrector_lab import _rng
from corrector_lab.cocycle import potential
from corrector_lab.solver import apply_operator

__all__ = [
    "WalkTrajectory",
    "WalkEnsembleStats",
    "transition_probabilities",
    "apply_generator",
    "simulate",
    "walk_seed",
    "simulate_ensemble",
    "ensemble_stats",
    "clt_ensemble",
    "clt_ensembles",
    "martingale_residual",
    "detailed_balance_residual",
]


@dataclass(frozen=True, eq=False)
class WalkTrajectory:
    start: np.ndarray
    steps: np.ndarray  # move indices into (+e_0, -e_0, ...)
    positions: np.ndarray  # (k + 1, d), unwrapped
    seed: int


@dataclass(frozen=True)
class WalkEnsembleStats:
    k: int
    n_walks: int
    mean_Y: float
    var_Y: float
    var_over_k: float
    max_sublinear_gap: float
    normality_stat: float
    seed: int = 0

    def to_record(self):
        rec = asdict(self)
        for key, val in rec.items():
            if isinstance(val, float) and not np.isfinite(val):
                rec[key] = None
        return rec


def transition_probabilities(env, site=None):
    """Jump probabilities, shape ``(2d,) + grid`` or ``(2d,)`` at one site."""
    c = env.conductances
    bar = env.bar_c()
    probs = []
    for i in range(env.d):
        probs.append(c[i] / bar)
        probs.append(np.roll(c[i], 1, axis=i) / bar)
    P = np.stack(probs)
    if site is None:
        return P
    return P[(slice(None),) + tuple(env.shape.wrap(site))]


def apply_generator(env, u, form="expectation"):
    """Generator of the walk on a torus field ``u``.

    ``form="expectation"`` computes ``E[u(X_{k+1}) - u(X_k) | X_k = n]`` from
    the jump probabilities; ``form="divergence"`` computes the divergence
    form ``A u / bar_c``.
    """
    u = np.asarray(u, dtype=np.float64)
    if form == "divergence":
        return apply_operator(env, u, weighted=True)
    if form != "expectation":
        raise ValueError(f"unknown form {form!r}")
    P = transition_probabilities(env)
    out = np.zeros(env.shape.grid)
    for i in range(env.d):
        out += P[2 * i] * (np.roll(u, -1, axis=i) - u)
        out += P[2 * i + 1] * (np.roll(u, 1, axis=i) - u)
    return out


def _cumulative_table(env):
    """Per-site cumulative move probabilities, rows in C-order site index."""
    P = transition_probabilities(env)
    flat = P.reshape(2 * env.d, -1).T
    cum = np.cumsum(flat, axis=1)
    cum[:, -1] = 1.0
    return cum


def _flat_index(env, X):
    w = np.mod(X, env.L)
    return np.ravel_multi_index(tuple(w.T), env.shape.grid)


def _apply_moves(X, moves):
    axis = moves // 2
    sign = np.where(moves % 2 == 0, 1, -1)
    X[np.arange(X.shape[0]), axis] += sign


def simulate(env, start, k, seed):
    """Trajectory of ``k`` steps from ``start`` by inverse-CDF sampling."""
    if k < 0:
        raise ValueError("k must be >= 0")
    d = env.d
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    cum = _cumulative_table(env)
    pos = np.zeros((k + 1, d), dtype=np.int64)
    pos[0] = np.asarray(start, dtype=np.int64).reshape(d)
    steps = np.zeros(k, dtype=np.int64)
    if k:
        U = _rng.uniform(seed, np.arange(k))
    X = pos[:1].copy()
    for t in range(k):
        row = cum[_flat_index(env, X)[0]]
        mv = min(int(np.searchsorted(row, U[t], side="right")), 2 * d - 1)
        steps[t] = mv
        _apply_moves(X, np.array([mv]))
        pos[t + 1] = X[0]
    return WalkTrajectory(pos[0].copy(), steps, pos, seed)


def walk_seed(seed, w):
    """Seed of walk ``w`` within an ensemble."""
    return _rng.hash_u64(int(seed) & 0xFFFFFFFFFFFFFFFF, w)


def _increment_table(env, S):
    """Cocycle increment for each (site, move): ``+f_i(n)`` or ``-f_i(n - e_i)``."""
    f = S.increments
    cols = []
    for i in range(env.d):
        cols.append(f[i].ravel())
        cols.append(-np.roll(f[i], 1, axis=i).ravel())
    return np.stack(cols, axis=1)


def simulate_ensemble(env, S, horizons, n_walks, seed, start=None):
    """Run ``n_walks`` walks from ``start`` and record ``(X, Y)`` at each horizon.

    ``Y`` accumulates cocycle increments along the path, so
    ``Y_k = S_{X_k}`` seen from ``start``.

    Returns
    -------
    dict
        ``{k: (X_k, Y_k)}`` with ``X_k`` of shape ``(n_walks, d)``.
    """
    if S.shape != env.shape:
        raise ValueError("cocycle and environment live on different tori")
    horizons = sorted({int(h) for h in horizons})
    if horizons and horizons[0] < 0:
        raise ValueError("horizons must be >= 0")
    d = env.d
    cum = _cumulative_table(env)
    inc = _increment_table(env, S)
    seeds = walk_seed(seed, np.arange(n_walks))
    X = np.zeros((n_walks, d), dtype=np.int64)
    if start is not None:
        X += np.asarray(start, dtype=np.int64).reshape(d)
    Y = np.zeros(n_walks)
    out = {}
    kmax = horizons[-1] if horizons else 0
    pending = list(horizons)
    rows = np.arange(n_walks)
    for t in range(kmax + 1):
        while pending and pending[0] == t:
            out[t] = (X.copy(), Y.copy())
            pending.pop(0)
        if t == kmax:
            break
        U = _rng.uniform(seeds, t)
        idx = _flat_index(env, X)
        moves = np.minimum((U[:, None] >= cum[idx]).sum(axis=1), 2 * d - 1)
        Y += inc[idx, moves]
        _apply_moves(X, moves)
    return out


def ensemble_stats(X, Y, k, seed=0):
    """Summary statistics of ``Y_k`` and the gap to the first coordinate."""
    n = Y.size
    mean = float(Y.mean())
    centred = Y - mean
    m2 = float(np.mean(centred**2))
    m4 = float(np.mean(centred**4))
    norm = np.maximum(1, np.abs(X).sum(axis=1))
    gap = float(np.max(np.abs(Y - X[:, 0]) / norm))
    return WalkEnsembleStats(
        k=int(k),
        n_walks=int(n),
        mean_Y=mean,
        var_Y=m2,
        var_over_k=m2 / k if k > 0 else 0.0,
        max_sublinear_gap=gap,
        normality_stat=abs(m4 / m2**2 - 3.0) if m2 > 0 else float("nan"),
        seed=int(seed),
    )


def clt_ensemble(env, S, k, n_walks, seed):
    """Ensemble statistics of ``Y_k = S_{X_k}`` for walks started at the origin."""
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    X, Y = simulate_ensemble(env, S, [k], n_walks, seed)[k]
    return ensemble_stats(X, Y, k, seed)


def clt_ensembles(env, S, horizons, n_walks, seed):
    """:func:`clt_ensemble` at several horizons from one shared run."""
    runs = simulate_ensemble(env, S, horizons, n_walks, seed)
    return {k: ensemble_stats(X, Y, k, seed) for k, (X, Y) in runs.items()}


def martingale_residual(env, S):
    """Max over sites of ``|E[Y_{k+1} - Y_k | X_k = n]|`` for ``Y = S_X``.

    Uses the path-summed potential over a full period and the jump
    probabilities, not the increments' divergence directly.
    """
    L, d = env.L, env.d
    r = L // 2 + 1
    u = potential(S, r)
    P = transition_probabilities(env)
    offs = np.arange(-r + 1, r)
    idx = [np.mod(offs, L) for _ in range(d)]
    inner = tuple(slice(1, 2 * r) for _ in range(d))
    drift = np.zeros((2 * r - 1,) * d)
    for i in range(d):
        fwd = list(inner)
        fwd[i] = slice(2, 2 * r + 1)
        bwd = list(inner)
        bwd[i] = slice(0, 2 * r - 1)
        drift += P[2 * i][np.ix_(*idx)] * (u[tuple(fwd)] - u[inner])
        drift += P[2 * i + 1][np.ix_(*idx)] * (u[tuple(bwd)] - u[inner])
    return float(np.abs(drift).max())


def detailed_balance_residual(env):
    """Max over edges of ``|bar_c(n) P(n -> n+e_i) - bar_c(n+e_i) P(n+e_i -> n)|``."""
    P = transition_probabilities(env)
    bar = env.bar_c()
    worst = 0.0
    for i in range(env.d):
        forward = bar * P[2 * i]
        backward = np.roll(bar * P[2 * i + 1], -1, axis=i)
        worst = max(worst, float(np.abs(forward - backward).max()))
    return worst
