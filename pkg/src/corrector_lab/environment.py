"""Stationary elliptic random conductance environments on the torus Z_L^d.

An environment holds one conductance array per lattice direction.  Array
``i`` stores the conductance of the edge ``[n, n + e_i]`` at every site
``n``; arrays are indexed ``c[i, n_0, ..., n_{d-1}]`` and every lookup is
taken modulo ``L``, so the torus shift plays the role of the lattice
action on the environment.

Directions and coordinates are 0-based throughout the package.

Linearized site index (used by the file format and by the random
generator) is ``s = sum_j n_j * L**j``, first coordinate fastest, which is
``ravel(order="F")`` of a site field.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from corrector_lab import _rng

__all__ = [
    "TorusShape",
    "GeneratorModel",
    "Environment",
    "InvalidEnvironment",
    "LoadError",
    "generate_environment",
    "conductance",
    "bar_c",
    "save_environment",
    "load_environment",
    "MODEL_IDS",
]


class InvalidEnvironment(ValueError):
    """Invalid environment parameters (bounds, model range, shape)."""


class LoadError(ValueError):
    """Corrupt or inconsistent environment / field file."""


@dataclass(frozen=True)
class TorusShape:
    """Periodized lattice Z_L^d."""

    d: int
    L: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidEnvironment(f"dimension must be >= 1, got {self.d}")
        if int(self.L) != self.L or self.L < 2:
            raise InvalidEnvironment(f"side must be >= 2, got {self.L}")

    @property
    def n_sites(self):
        return self.L**self.d

    @property
    def grid(self):
        """numpy shape of a site field."""
        return (self.L,) * self.d

    def wrap(self, site):
        site = np.asarray(site, dtype=np.int64)
        if site.shape[-1] != self.d:
            raise InvalidEnvironment(f"site must have {self.d} coordinates, got {site.shape[-1]}")
        return np.mod(site, self.L)

    def linear_index(self, site):
        """Linearized index of (wrapped) site coordinates, first coordinate fastest."""
        w = self.wrap(site)
        strides = self.L ** np.arange(self.d, dtype=np.int64)
        return w @ strides

    def site_indices(self):
        """Field of linear site indices, shape ``grid``."""
        return np.arange(self.n_sites, dtype=np.int64).reshape(self.grid, order="F")


MODEL_IDS = {
    "constant": 0,
    "iid-uniform": 1,
    "iid-two-point": 2,
    "checkerboard-random": 3,
    "smooth-correlated": 4,
}


@dataclass(frozen=True)
class GeneratorModel:
    """Conductance law.

    ``params`` by kind:

    * ``constant``: ``c``
    * ``iid-uniform``: none (uniform on the bounds, pulled in by eps0)
    * ``iid-two-point``: ``p`` (probability of ``high``), ``low``, ``high``
    * ``checkerboard-random``: ``low``, ``high`` (each with probability 1/2)
    * ``smooth-correlated``: ``radius`` (periodic box average of an iid
      uniform field over a cube of side ``2 * radius + 1``)

    Missing ``low``/``high`` default to the eps0-shrunk bounds.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_IDS:
            raise InvalidEnvironment(f"unknown model {self.kind!r}; expected one of {sorted(MODEL_IDS)}")
        object.__setattr__(self, "params", dict(self.params))

    @property
    def model_id(self):
        return MODEL_IDS[self.kind]

    @classmethod
    def constant(cls, c):
        return cls("constant", {"c": float(c)})

    @classmethod
    def iid_uniform(cls):
        return cls("iid-uniform")

    @classmethod
    def two_point(cls, p=0.5, low=None, high=None):
        params = {"p": float(p)}
        if low is not None:
            params["low"] = float(low)
        if high is not None:
            params["high"] = float(high)
        return cls("iid-two-point", params)

    @classmethod
    def checkerboard_random(cls, low=None, high=None):
        params = {}
        if low is not None:
            params["low"] = float(low)
        if high is not None:
            params["high"] = float(high)
        return cls("checkerboard-random", params)

    @classmethod
    def smooth_correlated(cls, radius):
        return cls("smooth-correlated", {"radius": int(radius)})

    def describe(self):
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})"


@dataclass(frozen=True, eq=False)
class Environment:
    """Immutable conductance environment.

    Attributes
    ----------
    shape : TorusShape
    conductances : ndarray, shape ``(d,) + (L,) * d``
        ``conductances[i][n]`` is the conductance of edge ``[n, n + e_i]``.
    bounds : (float, float)
        Ellipticity bounds ``0 < a < b``; every conductance lies strictly
        inside ``(a, b)``.
    model : GeneratorModel
    seed : int
    """

    shape: TorusShape
    conductances: np.ndarray
    bounds: tuple
    model: GeneratorModel
    seed: int = 0

    def __post_init__(self):
        a, b = _check_bounds(self.bounds)
        object.__setattr__(self, "bounds", (a, b))
        c = np.array(self.conductances, dtype=np.float64, copy=True)
        expected = (self.shape.d,) + self.shape.grid
        if c.shape != expected:
            raise InvalidEnvironment(f"conductance array has shape {c.shape}, expected {expected}")
        if not (np.all(c > a) and np.all(c < b)):
            raise InvalidEnvironment(
                f"conductances violate strict ellipticity: range [{c.min()}, {c.max()}] not inside ({a}, {b})"
            )
        c.setflags(write=False)
        object.__setattr__(self, "conductances", c)
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    @property
    def d(self):
        return self.shape.d

    @property
    def L(self):
        return self.shape.L

    def shifted(self, m):
        """Environment seen from site ``m``: ``c'(n) = c(n + m)``."""
        m = np.asarray(m, dtype=np.int64)
        axes = tuple(range(1, self.d + 1))
        c = np.roll(self.conductances, tuple(-int(x) for x in m), axis=axes)
        return Environment(self.shape, c, self.bounds, self.model, self.seed)

    def bar_c(self):
        """Node normalization ``sum_i c_i(n) + c_i(n - e_i)`` as a site field."""
        c = self.conductances
        total = np.zeros(self.shape.grid)
        for i in range(self.d):
            total += c[i] + np.roll(c[i], 1, axis=i)
        return total


def _check_bounds(bounds):
    try:
        a, b = (float(x) for x in bounds)
    except (TypeError, ValueError):
        raise InvalidEnvironment(f"bounds must be a pair of reals, got {bounds!r}") from None
    if not (np.isfinite(a) and np.isfinite(b)):
        raise InvalidEnvironment("bounds must be finite")
    if a <= 0:
        raise InvalidEnvironment(f"lower bound must be > 0, got a={a}")
    if a >= b:
        raise InvalidEnvironment(f"bounds must satisfy a < b, got a={a}, b={b}")
    return a, b


def _inner_bounds(a, b):
    eps0 = 1e-12 * (b - a)
    return a + eps0, b - eps0


def _check_value(name, v, a, b):
    if not (a < v < b):
        raise InvalidEnvironment(f"model value {name}={v} outside ({a}, {b})")


def _two_point(u, p, low, high, a, b):
    _check_value("low", low, a, b)
    _check_value("high", high, a, b)
    if not 0.0 <= p <= 1.0:
        raise InvalidEnvironment(f"two-point probability must be in [0, 1], got {p}")
    return np.where(u < p, high, low)


def _box_average(field, radius):
    out = field.copy()
    for ax in range(field.ndim):
        acc = np.zeros_like(out)
        for s in range(-radius, radius + 1):
            acc += np.roll(out, s, axis=ax)
        out = acc / (2 * radius + 1)
    return out


def generate_environment(shape, model, bounds, seed):
    """Generate a stationary elliptic environment.

    Conductance ``c_i(n)`` is drawn from the uniform ``hash(seed, i, s(n))``
    so the field does not depend on generation order.

    Parameters
    ----------
    shape : TorusShape
    model : GeneratorModel
    bounds : (a, b)
        Strict ellipticity bounds, ``0 < a < b``.
    seed : int
        64-bit unsigned seed.

    Returns
    -------
    Environment

    Raises
    ------
    InvalidEnvironment
        Bad bounds, or a model whose values fall outside ``(a, b)``.

    Examples
    --------
    >>> env = generate_environment(TorusShape(2, 4), GeneratorModel.constant(1.0), (0.5, 2.0), 7)
    >>> float(env.conductances.min()), float(env.conductances.max())
    (1.0, 1.0)
    """
    a, b = _check_bounds(bounds)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    lo, hi = _inner_bounds(a, b)
    d = shape.d
    sites = shape.site_indices()
    u = np.stack([_rng.uniform(seed, i, sites) for i in range(d)])
    p = model.params

    if model.kind == "constant":
        c_val = float(p.get("c", 0.5 * (a + b)))
        _check_value("c", c_val, a, b)
        c = np.full(u.shape, c_val)
    elif model.kind == "iid-uniform":
        c = lo + (hi - lo) * u
    elif model.kind == "iid-two-point":
        c = _two_point(u, float(p.get("p", 0.5)), float(p.get("low", lo)), float(p.get("high", hi)), a, b)
    elif model.kind == "checkerboard-random":
        c = _two_point(u, 0.5, float(p.get("low", lo)), float(p.get("high", hi)), a, b)
    elif model.kind == "smooth-correlated":
        r = int(p.get("radius", 1))
        if r < 0:
            raise InvalidEnvironment(f"smoothing radius must be >= 0, got {r}")
        c = np.stack([_box_average(lo + (hi - lo) * u[i], r) for i in range(d)])
        c = np.clip(c, lo, hi)
    else:  # pragma: no cover - guarded by GeneratorModel
        raise InvalidEnvironment(model.kind)

    return Environment(shape, c, (a, b), model, seed)


def conductance(env, site, direction):
    """Conductance of the edge ``[site, site + e_direction]`` (site taken mod L)."""
    if not 0 <= direction < env.d:
        raise InvalidEnvironment(f"direction must be in 0..{env.d - 1}, got {direction}")
    w = env.shape.wrap(site)
    return float(env.conductances[(direction,) + tuple(w)])


def bar_c(env, site=None):
    """Node normalization ``sum_i c_i(n) + c_i(n - e_i)``.

    Returns the whole site field when ``site`` is None.
    """
    field_ = env.bar_c()
    if site is None:
        return field_
    return float(field_[tuple(env.shape.wrap(site))])


# -- persistence -------------------------------------------------------------

# magic, version, d, L, a, b, seed, model id, 7 reserved bytes
HEADER = struct.Struct("<4sIIIddQB7s")
VERSION = 1
_MODEL_FROM_ID = {v: k for k, v in MODEL_IDS.items()}


def pack_header(magic, d, L, a, b, seed, model_id):
    return HEADER.pack(magic, VERSION, d, L, a, b, seed, model_id, b"\0" * 7)


def unpack_header(data, magic):
    """Validate and unpack a header; returns ``(d, L, a, b, seed, model_id)``."""
    if len(data) < HEADER.size:
        raise LoadError(f"file too short for header ({len(data)} < {HEADER.size} bytes)")
    got, version, d, L, a, b, seed, model_id, reserved = HEADER.unpack_from(data)
    if got != magic:
        raise LoadError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise LoadError(f"unsupported version {version}")
    if reserved != b"\0" * 7:
        raise LoadError("reserved header bytes are not zero")
    if d < 1 or L < 2:
        raise LoadError(f"invalid shape d={d}, L={L}")
    return d, L, a, b, seed, model_id


def fields_to_bytes(arrays):
    """Serialize ``(k,) + grid`` arrays as k consecutive F-order f64 blocks."""
    return b"".join(np.ascontiguousarray(np.ravel(x, order="F"), dtype="<f8").tobytes() for x in arrays)


def fields_from_bytes(buf, k, shape):
    n = shape.n_sites
    flat = np.frombuffer(buf, dtype="<f8", count=k * n)
    return np.stack([flat[j * n:(j + 1) * n].reshape(shape.grid, order="F") for j in range(k)]).astype(np.float64)


def save_environment(env, path):
    """Write ``env`` in the RCM1 binary format."""
    header = pack_header(b"RCM1", env.d, env.L, env.bounds[0], env.bounds[1], env.seed, env.model.model_id)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(fields_to_bytes(env.conductances))


def load_environment(path):
    """Read an RCM1 file.

    Model parameters are not part of the format; the loaded environment
    carries the model kind only.

    Raises
    ------
    LoadError
        Bad magic, version, length, bounds, or ellipticity.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    d, L, a, b, seed, model_id = unpack_header(data, b"RCM1")
    if model_id not in _MODEL_FROM_ID:
        raise LoadError(f"unknown model id {model_id}")
    shape = TorusShape(d, L)
    expected = HEADER.size + 8 * d * shape.n_sites
    if len(data) != expected:
        raise LoadError(f"file length {len(data)} does not match expected {expected}")
    c = fields_from_bytes(data[HEADER.size:], d, shape)
    try:
        return Environment(shape, c, (a, b), GeneratorModel(_MODEL_FROM_ID[model_id]), seed)
    except InvalidEnvironment as exc:
        raise LoadError(str(exc)) from exc
