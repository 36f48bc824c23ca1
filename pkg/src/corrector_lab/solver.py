"""Periodic cell problem for the harmonic cocycle and the effective tensor.

The divergence-form operator on a site field ``u`` is

    (A u)(n) = sum_i c_i(n) (u(n+e_i) - u(n)) - c_i(n-e_i) (u(n) - u(n-e_i)),

the net current into ``n`` (node law with Ohm currents).  ``A`` is
symmetric negative semidefinite with kernel the constants, and
``A u / bar_c`` is the generator of the walk.

For each coordinate ``j`` the corrector ``chi_j`` makes ``n_j + chi_j(n)``
harmonic, i.e. ``A chi_j = c_j(n - e_j) - c_j(n)``; the harmonic cocycle
with mean ``y`` has increments

    f_i(n) = y_i + sum_j y_j (chi_j(n + e_i) - chi_j(n)).
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from corrector_lab.cocycle import CocycleField
from corrector_lab.environment import LoadError, TorusShape

__all__ = [
    "CorrectorSolution",
    "EffectiveTensor",
    "ConvergenceError",
    "apply_operator",
    "corrector_rhs",
    "solve_corrector",
    "dense_oracle_solve",
    "harmonic_cocycle",
    "harmonicity_residual",
    "effective_tensor",
    "average_tensors",
    "voigt_reuss_bounds",
    "save_corrector",
    "load_corrector",
    "DENSE_MAX_SITES",
]

DENSE_MAX_SITES = 4096


class ConvergenceError(RuntimeError):
    """CG did not reach ``tol``; ``solution`` holds the best iterate."""

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True, eq=False)
class CorrectorSolution:
    """Mean-zero correctors ``chi[j]`` for each basis direction ``e_j``.

    ``residual_l2[j]`` is the relative residual ``||r|| / ||rhs||`` of the
    solve for direction ``j`` (0 when the right-hand side vanishes).
    """

    shape: TorusShape
    chi: np.ndarray
    residual_l2: np.ndarray
    iterations: np.ndarray
    tol: float
    method: str = "cg"

    @property
    def converged(self):
        return bool(np.all(self.residual_l2 <= self.tol))

    def cocycle(self, y):
        """Harmonic cocycle with mean ``y`` built from the correctors."""
        d = self.shape.d
        y = np.asarray(y, dtype=np.float64).reshape(d)
        f = np.empty((d,) + self.shape.grid)
        phi = np.tensordot(y, self.chi, axes=1)
        for i in range(d):
            f[i] = y[i] + (np.roll(phi, -1, axis=i) - phi)
        return CocycleField(self.shape, f, y)


@dataclass(frozen=True)
class EffectiveTensor:
    A_hom: np.ndarray
    L: int
    seeds: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def to_record(self, env=None):
        rec = {}
        if env is not None:
            rec.update(d=env.d, L=env.L, a=env.bounds[0], b=env.bounds[1], model=env.model.describe())
        else:
            rec.update(d=int(self.A_hom.shape[0]), L=self.L)
        rec.update(
            seeds=[int(s) for s in self.seeds],
            A_hom=[float(x) for x in np.ravel(self.A_hom)],
            residuals=[float(r) for r in self.residuals],
        )
        return rec


def _grad(u, i):
    return np.roll(u, -1, axis=i) - u


def apply_operator(env, u, weighted=False):
    """Apply ``A`` (or the generator ``A / bar_c`` when ``weighted``).

    Examples
    --------
    >>> from corrector_lab.environment import TorusShape, GeneratorModel, generate_environment
    >>> env = generate_environment(TorusShape(1, 4), GeneratorModel.constant(1.0), (0.5, 2), 0)
    >>> apply_operator(env, np.array([0.0, 1.0, 0.0, 0.0])).tolist()
    [1.0, -2.0, 1.0, 0.0]
    """
    u = np.asarray(u, dtype=np.float64)
    c = env.conductances
    out = np.zeros(env.shape.grid)
    for i in range(env.d):
        flux = c[i] * _grad(u, i)
        out += flux - np.roll(flux, 1, axis=i)
    if weighted:
        out /= env.bar_c()
    return out


def corrector_rhs(env, j):
    """Right-hand side ``c_j(n - e_j) - c_j(n)`` of the cell problem for ``e_j``."""
    cj = env.conductances[j]
    return np.roll(cj, 1, axis=j) - cj


def _project(v):
    return v - v.mean()


def _cg(env, rhs, tol, max_iter, x0=None, precondition=True):
    """Projected (Jacobi-)PCG for ``-A x = -rhs`` on mean-zero fields.

    Returns ``(x, relative_residual, iterations)``; relative residual is
    recomputed from the final iterate.
    """
    b = -_project(rhs)
    if abs(rhs.sum()) > 1e-9 * max(1.0, np.abs(rhs).sum()):
        raise ValueError("right-hand side has nonzero sum; cell problem is not solvable")
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else _project(np.asarray(x0, dtype=np.float64).copy())
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0

    def K(v):
        return -apply_operator(env, v)

    inv_diag = 1.0 / env.bar_c() if precondition else None
    r = _project(b - K(x))
    z = _project(inv_diag * r) if precondition else r
    p = z.copy()
    rz = np.vdot(r, z)
    best = (np.linalg.norm(r) / bnorm, x.copy())
    it = 0
    while it < max_iter:
        rel = np.linalg.norm(r) / bnorm
        if rel < best[0]:
            best = (rel, x.copy())
        if rel <= tol:
            break
        Kp = K(p)
        alpha = rz / np.vdot(p, Kp)
        x = _project(x + alpha * p)
        r = _project(r - alpha * Kp)
        z = _project(inv_diag * r) if precondition else r
        rz_new = np.vdot(r, z)
        p = _project(z + (rz_new / rz) * p)
        rz = rz_new
        it += 1

    true_rel = np.linalg.norm(_project(b - K(x))) / bnorm
    if true_rel > best[0] and best[0] > tol:
        x = best[1]
        true_rel = np.linalg.norm(_project(b - K(x))) / bnorm
    return x, float(true_rel), it


def solve_corrector(env, tol=1e-10, max_iter=None, x0=None, precondition=True, raise_on_failure=True):
    """Solve the periodic cell problem for every basis direction.

    Parameters
    ----------
    env : Environment
    tol : float
        Relative residual target ``||r||_2 / ||rhs||_2``.
    max_iter : int, optional
        Defaults to ``20 * L * d``.
    x0 : ndarray, optional
        Initial guesses, shape ``(d,) + grid``; projected to mean zero.
    precondition : bool
        Jacobi preconditioner with diagonal ``bar_c``.
    raise_on_failure : bool
        Raise :class:`ConvergenceError` if any direction misses ``tol``;
        otherwise return the unconverged solution.

    Returns
    -------
    CorrectorSolution
    """
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    d = env.d
    if max_iter is None:
        max_iter = 20 * env.L * d
    chi = np.zeros((d,) + env.shape.grid)
    res = np.zeros(d)
    its = np.zeros(d, dtype=np.int64)
    for j in range(d):
        guess = None if x0 is None else x0[j]
        chi[j], res[j], its[j] = _cg(env, corrector_rhs(env, j), tol, max_iter, guess, precondition)
    sol = CorrectorSolution(env.shape, chi, res, its, float(tol))
    if raise_on_failure and not sol.converged:
        raise ConvergenceError(
            f"CG did not converge within {max_iter} iterations: relative residuals {res.tolist()}", sol
        )
    return sol


def _dense_system(env, j):
    """Edge-by-edge assembly of the Kirchhoff matrix and the cell-problem rhs."""
    shape = env.shape
    N, d = shape.n_sites, shape.d
    K = np.zeros((N, N))
    rhs = np.zeros(N)
    sites = np.array(np.unravel_index(np.arange(N), shape.grid, order="F")).T
    for s, n in enumerate(sites):
        for i in range(d):
            m = n.copy()
            m[i] += 1
            t = int(shape.linear_index(m))
            c = env.conductances[(i,) + tuple(n)]
            K[s, s] += c
            K[t, t] += c
            K[s, t] -= c
            K[t, s] -= c
            if i == j:
                # unit potential drop along e_j drives current c from n to n + e_j
                rhs[s] += c
                rhs[t] -= c
    return K, rhs


def dense_oracle_solve(env, y=None):
    """Direct solve of the cell problems with an explicit mean-zero row.

    Independent of :func:`apply_operator`: the matrix is assembled edge by
    edge and the bordered system ``[[K, 1], [1^T, 0]]`` is factorized.

    Raises
    ------
    ValueError
        If ``L**d`` exceeds ``DENSE_MAX_SITES``.
    """
    shape = env.shape
    N = shape.n_sites
    if N > DENSE_MAX_SITES:
        raise ValueError(f"dense oracle limited to {DENSE_MAX_SITES} sites, got {N}")
    chi = np.zeros((shape.d,) + shape.grid)
    res = np.zeros(shape.d)
    for j in range(shape.d):
        K, rhs = _dense_system(env, j)
        M = np.zeros((N + 1, N + 1))
        M[:N, :N] = K
        M[:N, N] = 1.0
        M[N, :N] = 1.0
        sol = np.linalg.solve(M, np.append(rhs, 0.0))
        x = sol[:N]
        nb = np.linalg.norm(rhs)
        res[j] = np.linalg.norm(K @ x - rhs) / nb if nb > 0 else 0.0
        chi[j] = x.reshape(shape.grid, order="F")
    return CorrectorSolution(shape, chi, res, np.zeros(shape.d, dtype=np.int64), 1e-12, method="dense")


def harmonic_cocycle(env, y, **kwargs):
    """Solve and return ``(CocycleField, CorrectorSolution)`` for mean ``y``."""
    sol = solve_corrector(env, **kwargs)
    return sol.cocycle(y), sol


def harmonicity_residual(env, S):
    """Max over sites of ``|sum_i c_i(n-e_i) f_i(n-e_i) - c_i(n) f_i(n)|``.

    This is the net Ohm current out of each node; zero for a harmonic cocycle.
    """
    c = env.conductances
    f = S.increments
    net = np.zeros(env.shape.grid)
    for i in range(env.d):
        j = c[i] * f[i]
        net += np.roll(j, 1, axis=i) - j
    return float(np.abs(net).max())


def effective_tensor(env, sol, seeds=None):
    """Energy of corrected gradients averaged over the torus.

    ``A_hom[j, k] = mean_n sum_i c_i(n) (delta_ij + d_i chi_j(n)) (delta_ik + d_i chi_k(n))``
    """
    d = env.d
    chi = sol.chi
    if chi.shape[0] != d:
        raise ValueError(f"need correctors for all {d} basis directions, got {chi.shape[0]}")
    c = env.conductances
    A = np.zeros((d, d))
    grads = np.stack([np.stack([_grad(chi[j], i) for i in range(d)]) for j in range(d)])
    eye = np.eye(d)
    for j in range(d):
        for k in range(j, d):
            total = 0.0
            for i in range(d):
                total += np.sum(c[i] * (eye[i, j] + grads[j, i]) * (eye[i, k] + grads[k, i]))
            A[j, k] = A[k, j] = total / env.shape.n_sites
    return EffectiveTensor(A, env.L, [env.seed] if seeds is None else list(seeds), list(sol.residual_l2))


def average_tensors(tensors):
    tensors = list(tensors)
    if not tensors:
        raise ValueError("no tensors to average")
    A = np.mean([t.A_hom for t in tensors], axis=0)
    seeds = [s for t in tensors for s in t.seeds]
    residuals = [max(t.residuals) if t.residuals else 0.0 for t in tensors]
    return EffectiveTensor(A, tensors[0].L, seeds, residuals)


def voigt_reuss_bounds(env):
    """Per-direction (harmonic mean, arithmetic mean) of the conductances."""
    c = env.conductances.reshape(env.d, -1)
    return 1.0 / np.mean(1.0 / c, axis=1), np.mean(c, axis=1)


# -- persistence -------------------------------------------------------------

_COR_HEADER = struct.Struct("<4sIIId")
_COR_ROW = struct.Struct("<dQ")


def save_corrector(sol, path):
    """COR1: magic, u32 version, u32 d, u32 L, f64 tol, d fields, d x (f64 residual, u64 iterations)."""
    from corrector_lab.environment import fields_to_bytes

    with open(path, "wb") as fh:
        fh.write(_COR_HEADER.pack(b"COR1", 1, sol.shape.d, sol.shape.L, sol.tol))
        fh.write(fields_to_bytes(sol.chi))
        for r, k in zip(sol.residual_l2, sol.iterations):
            fh.write(_COR_ROW.pack(float(r), int(k)))


def load_corrector(path):
    from corrector_lab.environment import fields_from_bytes

    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _COR_HEADER.size:
        raise LoadError("file too short for COR1 header")
    magic, version, d, L, tol = _COR_HEADER.unpack_from(data)
    if magic != b"COR1":
        raise LoadError(f"bad magic {magic!r}, expected b'COR1'")
    if version != 1:
        raise LoadError(f"unsupported version {version}")
    shape = TorusShape(d, L)
    nfield = 8 * d * shape.n_sites
    expected = _COR_HEADER.size + nfield + d * _COR_ROW.size
    if len(data) != expected:
        raise LoadError(f"file length {len(data)} does not match expected {expected}")
    chi = fields_from_bytes(data[_COR_HEADER.size:], d, shape)
    rows = [_COR_ROW.unpack_from(data, _COR_HEADER.size + nfield + k * _COR_ROW.size) for k in range(d)]
    return CorrectorSolution(
        shape, chi, np.array([r for r, _ in rows]), np.array([k for _, k in rows], dtype=np.int64), tol
    )
