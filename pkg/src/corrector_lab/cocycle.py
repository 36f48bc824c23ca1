"""Degree-1 cocycles stored by their edge increments.

A cocycle ``(S_n)`` over the torus shift is determined by the increments
``f_i = S_{e_i}``: ``f[i][n]`` is the increment across the edge
``[n, n + e_i]``.  ``S_n`` seen from a base point is recovered by summing
increments along a lattice path, ``+f_i(p)`` for a step ``p -> p + e_i``
and ``-f_i(p - e_i)`` for a step ``p -> p - e_i``.  Closed fields give
path-independent sums.
"""

from dataclasses import dataclass

import numpy as np

from corrector_lab.environment import (
    HEADER,
    LoadError,
    TorusShape,
    fields_from_bytes,
    fields_to_bytes,
    pack_header,
    unpack_header,
)

__all__ = [
    "CocycleField",
    "PathError",
    "canonical_path",
    "evaluate",
    "potential",
    "closedness_residual",
    "coboundary",
    "mean_vector",
    "save_cocycle",
    "load_cocycle",
]


class PathError(ValueError):
    """A path does not connect the requested endpoints."""


@dataclass(frozen=True, eq=False)
class CocycleField:
    """Increments ``f`` of shape ``(d,) + (L,) * d`` and target mean ``y``.

    If ``mean`` is omitted it is taken as the spatial average of each
    increment array.  A supplied ``mean`` must agree with that average.
    """

    shape: TorusShape
    increments: np.ndarray
    mean: np.ndarray = None

    def __post_init__(self):
        f = np.array(self.increments, dtype=np.float64, copy=True)
        expected = (self.shape.d,) + self.shape.grid
        if f.shape != expected:
            raise ValueError(f"increments have shape {f.shape}, expected {expected}")
        f.setflags(write=False)
        object.__setattr__(self, "increments", f)
        avg = _spatial_mean(f)
        if self.mean is None:
            y = avg
        else:
            y = np.array(self.mean, dtype=np.float64).reshape(self.shape.d)
            scale = max(1.0, float(np.abs(f).max(initial=0.0)))
            if np.max(np.abs(y - avg)) > 1e-12 * scale:
                raise ValueError(f"mean {y} disagrees with spatial average {avg}")
        y = np.array(y, dtype=np.float64)
        y.setflags(write=False)
        object.__setattr__(self, "mean", y)

    @property
    def d(self):
        return self.shape.d

    @property
    def L(self):
        return self.shape.L


def _spatial_mean(f):
    axes = tuple(range(1, f.ndim))
    return f.mean(axis=axes)


def canonical_path(n):
    """Steps ``(axis, sign)`` adjusting coordinate 0 fully, then 1, and so on."""
    steps = []
    for axis, k in enumerate(np.asarray(n, dtype=np.int64)):
        sign = 1 if k > 0 else -1
        steps.extend([(axis, sign)] * abs(int(k)))
    return steps


def evaluate(S, n, base=None, path=None):
    """``S_n`` seen from ``base``: the increment sum from ``base`` to ``base + n``.

    Parameters
    ----------
    S : CocycleField
    n : sequence of int
    base : sequence of int, optional
        Start point; defaults to the origin.
    path : list of (axis, sign), optional
        Explicit path; must end at ``base + n``.  Defaults to
        :func:`canonical_path`.

    Raises
    ------
    PathError
        If ``path`` does not end at ``base + n``.
    """
    d = S.d
    n = np.asarray(n, dtype=np.int64).reshape(d)
    pos = np.zeros(d, dtype=np.int64) if base is None else np.asarray(base, dtype=np.int64).reshape(d).copy()
    if path is None:
        path = canonical_path(n)
    else:
        disp = np.zeros(d, dtype=np.int64)
        for axis, sign in path:
            if not 0 <= axis < d or sign not in (1, -1):
                raise PathError(f"invalid step {(axis, sign)}")
            disp[axis] += sign
        if not np.array_equal(disp, n):
            raise PathError(f"path displacement {disp.tolist()} != {n.tolist()}")
    f = S.increments
    L = S.L
    total = 0.0
    for axis, sign in path:
        if sign > 0:
            total += f[(axis,) + tuple(np.mod(pos, L))]
            pos[axis] += 1
        else:
            pos[axis] -= 1
            total -= f[(axis,) + tuple(np.mod(pos, L))]
    return float(total)


def _signed_line_sums(vals, r, axis):
    """Cumulative sums from offset 0 along ``axis`` for offsets -r..r."""
    vals = np.moveaxis(vals, axis, -1)
    out = np.zeros(vals.shape)
    if r > 0:
        out[..., r + 1:] = np.cumsum(vals[..., r:2 * r], axis=-1)
        out[..., :r] = -np.cumsum(vals[..., r - 1::-1][..., :r], axis=-1)[..., ::-1]
    return np.moveaxis(out, -1, axis)


def potential(S, radius, base=None):
    """``S`` evaluated on the box ``[-radius, radius]^d`` around ``base``.

    Returns an array ``u`` of shape ``(2 * radius + 1,) * d`` with
    ``u[n + radius] = evaluate(S, n, base)`` computed along canonical paths.
    The box may exceed the torus; increments are read modulo ``L``.
    """
    d, L = S.d, S.L
    r = int(radius)
    if r < 0:
        raise ValueError("radius must be >= 0")
    base = np.zeros(d, dtype=np.int64) if base is None else np.asarray(base, dtype=np.int64).reshape(d)
    offsets = np.arange(-r, r + 1)
    u = np.zeros((1,) * d)
    for j in range(d):
        index = []
        for k in range(d):
            if k <= j:
                index.append(np.mod(base[k] + offsets, L))
            else:
                index.append(np.array([base[k] % L]))
        vals = S.increments[j][np.ix_(*index)]
        u = u + _signed_line_sums(vals, r, j)
    return np.broadcast_to(u, (2 * r + 1,) * d).copy()


def closedness_residual(S):
    """Max over sites and ``i < j`` of ``|f_i(n) + f_j(n+e_i) - f_j(n) - f_i(n+e_j)|``."""
    f = S.increments
    worst = 0.0
    for i in range(S.d):
        for j in range(i + 1, S.d):
            defect = f[i] + np.roll(f[j], -1, axis=i) - f[j] - np.roll(f[i], -1, axis=j)
            worst = max(worst, float(np.abs(defect).max()))
    return worst


def coboundary(g):
    """Cocycle ``S_n = g(. + n) - g``: increments ``f_i(n) = g(n + e_i) - g(n)``.

    ``g`` is a site field of shape ``(L,) * d``.

    Examples
    --------
    >>> coboundary(np.array([0.0, 1.0, 0.0, 2.0])).increments[0].tolist()
    [1.0, -1.0, 2.0, -2.0]
    """
    g = np.asarray(g, dtype=np.float64)
    shape = TorusShape(g.ndim, g.shape[0])
    if g.shape != shape.grid:
        raise ValueError(f"site field must be a hypercube, got {g.shape}")
    f = np.stack([np.roll(g, -1, axis=i) - g for i in range(shape.d)])
    return CocycleField(shape, f)


def mean_vector(S):
    """Spatial average of each increment array (the torus stand-in for ``int f_i dP``)."""
    return _spatial_mean(S.increments)


def save_cocycle(S, path):
    """Write the CCF1 format: RCM1-style header, ``d`` f64 mean values, increments."""
    header = pack_header(b"CCF1", S.d, S.L, 0.0, 0.0, 0, 255)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(S.mean, dtype="<f8").tobytes())
        fh.write(fields_to_bytes(S.increments))


def load_cocycle(path):
    with open(path, "rb") as fh:
        data = fh.read()
    d, L, _, _, _, _ = unpack_header(data, b"CCF1")
    shape = TorusShape(d, L)
    expected = HEADER.size + 8 * d + 8 * d * shape.n_sites
    if len(data) != expected:
        raise LoadError(f"file length {len(data)} does not match expected {expected}")
    y = np.frombuffer(data, dtype="<f8", count=d, offset=HEADER.size).astype(np.float64)
    f = fields_from_bytes(data[HEADER.size + 8 * d:], d, shape)
    try:
        return CocycleField(shape, f, y)
    except ValueError as exc:
        raise LoadError(str(exc)) from exc
