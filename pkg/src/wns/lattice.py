"""Space-time lattice, arrow fields and random environments.

Forward sites are the ``(x, t)`` with ``x + t`` even; every forward site
carries an arrow code pointing to ``(x - 1, t + 1)``, ``(x + 1, t + 1)``, both
or neither.  Dual fields live on the odd sublattice and point backward in time.
Arrays are indexed ``[t - t_min, x - x_min]``; entries off the sublattice are 0
and never read.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .mu import MuSpec, mu_draw
from .rng import TAG_ARROWS, TAG_ENV_WEB, TAG_OMEGA, SeedSpec, as_seed, site_uniform

NONE, LEFT, RIGHT, BOTH = 0, 1, 2, 3
CODE_NAMES = {NONE: "none", LEFT: "left", RIGHT: "right", BOTH: "both"}

KINDS = ("web", "net", "kill")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}
_ENV_CODE = 16
MAGIC = b"WNS1"
_HEADER = struct.Struct("<4sBBBBqqqqQQddd")


@dataclass(frozen=True)
class LatticeWindow:
    """Closed box ``[x_min, x_max] x [t_min, t_max]`` of one sublattice."""

    x_min: int
    x_max: int
    t_min: int
    t_max: int
    parity: int = 0  # 0: x + t even (forward), 1: odd (dual)

    def __post_init__(self):
        if self.x_max <= self.x_min or self.t_max <= self.t_min:
            raise ValueError("window needs x_min < x_max and t_min < t_max")
        if self.parity not in (0, 1):
            raise ValueError("parity must be 0 or 1")

    @classmethod
    def centered(cls, half_width: int, t_max: int, t_min: int = 0, parity: int = 0):
        return cls(-half_width, half_width, t_min, t_max, parity)

    @property
    def nx(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def nt(self) -> int:
        return self.t_max - self.t_min + 1

    @property
    def shape(self):
        return (self.nt, self.nx)

    def is_site(self, x: int, t: int) -> bool:
        return (
            self.x_min <= x <= self.x_max
            and self.t_min <= t <= self.t_max
            and (x + t - self.parity) % 2 == 0
        )

    def sites_at(self, t: int) -> np.ndarray:
        x0 = self.x_min + ((self.x_min + t - self.parity) % 2)
        return np.arange(x0, self.x_max + 1, 2, dtype=np.int64)

    def mask(self) -> np.ndarray:
        x = np.arange(self.x_min, self.x_max + 1)
        t = np.arange(self.t_min, self.t_max + 1)
        return ((x[None, :] + t[:, None] - self.parity) % 2) == 0

    def n_sites(self) -> int:
        return int(self.mask().sum())

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "t_min": self.t_min,
                "t_max": self.t_max, "parity": self.parity}


@dataclass(eq=False)
class ArrowField:
    window: LatticeWindow
    arrows: np.ndarray
    kind: str = "web"
    dual: bool = False
    seed: SeedSpec | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arrows.shape != self.window.shape:
            raise ValueError("arrow array does not match window")
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        self.arrows = np.ascontiguousarray(self.arrows, dtype=np.uint8)

    @property
    def kind_label(self) -> str:
        return "dual" if self.dual else {"kill": "net-with-killing"}.get(self.kind, self.kind)

    def code(self, x: int, t: int) -> int:
        w = self.window
        if not w.is_site(x, t):
            raise KeyError((x, t))
        return int(self.arrows[t - w.t_min, x - w.x_min])

    def codes_at(self, t: int):
        xs = self.window.sites_at(t)
        return xs, self.arrows[t - self.window.t_min, xs - self.window.x_min]

    def sites_with(self, code: int) -> np.ndarray:
        """Array of (x, t) rows of on-lattice sites carrying ``code``."""
        m = self.window.mask() & (self.arrows == code)
        ti, xi = np.nonzero(m)
        return np.column_stack([xi + self.window.x_min, ti + self.window.t_min])

    def counts(self) -> dict:
        vals = self.arrows[self.window.mask()]
        return {CODE_NAMES[c]: int(np.sum(vals == c)) for c in range(4)}

    def copy(self):
        return ArrowField(self.window, self.arrows.copy(), self.kind, self.dual,
                          self.seed, dict(self.params))

    def __eq__(self, other):
        if not isinstance(other, ArrowField):
            return NotImplemented
        m = self.window.mask()
        return (self.window == other.window and self.dual == other.dual
                and np.array_equal(self.arrows[m], other.arrows[m]))


@dataclass(eq=False)
class Environment:
    window: LatticeWindow
    omega: np.ndarray
    mu: MuSpec | None = None
    seed: SeedSpec | None = None

    def __post_init__(self):
        if self.omega.shape != self.window.shape:
            raise ValueError("omega array does not match window")
        m = self.window.mask()
        if np.any((self.omega[m] < 0) | (self.omega[m] > 1)):
            raise ValueError("omega must lie in [0, 1]")

    def at(self, x: int, t: int) -> float:
        w = self.window
        if not w.is_site(x, t):
            raise KeyError((x, t))
        return float(self.omega[t - w.t_min, x - w.x_min])


# ---------------------------------------------------------------------------
# Generators

def thresholds(kind: str, eps: float = 0.0, b: float = 0.0, kappa: float = 0.0):
    """Cut points (a1, a2, a3): left if u < a1, right if u < a2, both if u < a3."""
    if kind == "web":
        return 0.5, 1.0, 1.0
    if kind == "net":
        if not 0 <= eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        return 0.5 * (1 - eps), 1 - eps, 1.0
    if kind == "kill":
        if b < 0 or kappa < 0 or b + kappa > 1:
            raise ValueError("need b, kappa >= 0 and b + kappa <= 1")
        return 0.5 * (1 - b - kappa), 1 - b - kappa, 1 - kappa
    raise ValueError(f"no generator for kind {kind!r}")


@njit(cache=True, inline="always")
def code_from_u(u, a1, a2, a3):
    if u < a1:
        return LEFT
    if u < a2:
        return RIGHT
    if u < a3:
        return BOTH
    return NONE


@njit(cache=True, inline="always")
def lazy_code(key, x, t, a1, a2, a3):
    return code_from_u(site_uniform(key, x, t, 0), a1, a2, a3)


@njit(cache=True)
def _gen_codes(key, x_min, t_min, nx, nt, parity, a1, a2, a3):
    out = np.zeros((nt, nx), np.uint8)
    for i in range(nt):
        t = t_min + i
        j0 = (x_min + t - parity) % 2
        for j in range(j0, nx, 2):
            out[i, j] = lazy_code(key, x_min + j, t, a1, a2, a3)
    return out


def _generate(window, kind, seed, **params):
    if window.parity != 0:
        raise ValueError("forward fields live on the even sublattice")
    seed = as_seed(seed)
    a = thresholds(kind, **params)
    arr = _gen_codes(seed.key(TAG_ARROWS), window.x_min, window.t_min,
                     window.nx, window.nt, window.parity, *a)
    return ArrowField(window, arr, kind, False, seed, dict(params))


def gen_web_field(window: LatticeWindow, seed) -> ArrowField:
    return _generate(window, "web", seed)


def gen_net_field(window: LatticeWindow, eps: float, seed) -> ArrowField:
    """Branching with probability eps; eps = 0 reproduces the web field."""
    return _generate(window, "net", seed, eps=float(eps))


def gen_kill_field(window: LatticeWindow, b: float, kappa: float, seed) -> ArrowField:
    return _generate(window, "kill", seed, b=float(b), kappa=float(kappa))


@njit(cache=True)
def _gen_omega(key, x_min, t_min, nx, nt, parity, cum, q0, q1, kind, pa, pb):
    out = np.zeros((nt, nx))
    for i in range(nt):
        t = t_min + i
        j0 = (x_min + t - parity) % 2
        for j in range(j0, nx, 2):
            out[i, j] = mu_draw(cum, q0, q1, kind, pa, pb, key, x_min + j, t)
    return out


def gen_environment(window: LatticeWindow, mu: MuSpec, seed) -> Environment:
    seed = as_seed(seed)
    om = _gen_omega(seed.key(TAG_OMEGA), window.x_min, window.t_min, window.nx,
                    window.nt, window.parity, *mu.sampler().arrays())
    return Environment(window, om, mu, seed)


@njit(cache=True)
def _sample_env_web(key, omega, x_min, t_min, parity):
    nt, nx = omega.shape
    out = np.zeros((nt, nx), np.uint8)
    for i in range(nt):
        t = t_min + i
        j0 = (x_min + t - parity) % 2
        for j in range(j0, nx, 2):
            u = site_uniform(key, x_min + j, t, 0)
            out[i, j] = RIGHT if u < omega[i, j] else LEFT
    return out


def sample_web_from_env(env: Environment, seed) -> ArrowField:
    """Quenched web: the arrow at z points right with probability omega_z."""
    seed = as_seed(seed)
    w = env.window
    arr = _sample_env_web(seed.key(TAG_ENV_WEB), env.omega, w.x_min, w.t_min, w.parity)
    return ArrowField(w, arr, "web", False, seed)


# ---------------------------------------------------------------------------
# Duality

def mirror_codes(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint8)
    return ((a & 1) << 1) | ((a >> 1) & 1)


def dual_field(f: ArrowField) -> ArrowField:
    """Dual field on the odd sublattice, one time step above ``f``.

    The dual arrow at ``(x, s)`` is the mirror image of the forward arrow at
    ``(x, s - 1)``, so that dual paths never cross forward paths.
    """
    if f.dual:
        raise ValueError("field is already a dual field")
    if f.kind == "kill":
        raise ValueError("dual rule is undefined for fields with killing")
    w = f.window
    dw = LatticeWindow(w.x_min, w.x_max, w.t_min + 1, w.t_max + 1, 1 - w.parity)
    return ArrowField(dw, mirror_codes(f.arrows), f.kind, True, f.seed, dict(f.params))


def rotate_dual(d: ArrowField) -> ArrowField:
    """Rotate a dual field by 180 degrees into a forward field.

    The dual site ``(x, s)`` maps to ``(1 - x, -s)``, which lands on the even
    sublattice.  The rotated field has the law of a forward field of the same
    kind.
    """
    if not d.dual:
        raise ValueError("expected a dual field")
    w = d.window
    rw = LatticeWindow(1 - w.x_max, 1 - w.x_min, -w.t_max, -w.t_min, 0)
    arr = mirror_codes(d.arrows[::-1, ::-1])
    return ArrowField(rw, np.ascontiguousarray(arr), d.kind, False, d.seed, dict(d.params))


# ---------------------------------------------------------------------------
# Serialization

def _pack2(codes: np.ndarray) -> bytes:
    n = codes.size
    pad = (-n) % 4
    c = np.concatenate([codes.astype(np.uint8), np.zeros(pad, np.uint8)]).reshape(-1, 4)
    return (c[:, 0] | (c[:, 1] << 2) | (c[:, 2] << 4) | (c[:, 3] << 6)).astype(np.uint8).tobytes()


def _unpack2(buf: bytes, n: int) -> np.ndarray:
    b = np.frombuffer(buf, dtype=np.uint8)
    c = np.stack([(b >> s) & 3 for s in (0, 2, 4, 6)], axis=1).reshape(-1)
    if c.size < n:
        raise ValueError("truncated payload")
    return c[:n]


def _header(kind_code, dual, w, seed, params):
    flags = (1 if dual else 0) | (2 if seed is not None else 0)
    s = seed if seed is not None else SeedSpec(0, 0)
    return _HEADER.pack(MAGIC, kind_code, flags, w.parity, 0, w.x_min, w.x_max,
                        w.t_min, w.t_max, s.master_seed, s.stream_id,
                        params.get("eps", np.nan), params.get("b", np.nan),
                        params.get("kappa", np.nan))


def to_bytes(obj) -> bytes:
    """Binary form of an ArrowField (2-bit codes) or Environment (float64)."""
    w = obj.window
    m = w.mask()
    if isinstance(obj, ArrowField):
        head = _header(_KIND_CODE[obj.kind], obj.dual, w, obj.seed, obj.params)
        return head + _pack2(obj.arrows[m])
    if isinstance(obj, Environment):
        head = _header(_ENV_CODE, False, w, obj.seed, {})
        return head + obj.omega[m].astype("<f8").tobytes()
    raise TypeError(type(obj))


def from_bytes(buf: bytes):
    if len(buf) < _HEADER.size:
        raise ValueError("buffer shorter than header")
    (magic, kind, flags, parity, _, x0, x1, t0, t1, ms, sid, eps, b, kap) = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    w = LatticeWindow(x0, x1, t0, t1, parity)
    seed = SeedSpec(ms, sid) if flags & 2 else None
    m = w.mask()
    body = buf[_HEADER.size:]
    if kind == _ENV_CODE:
        vals = np.frombuffer(body, dtype="<f8")
        if vals.size != m.sum():
            raise ValueError("payload size mismatch")
        om = np.zeros(w.shape)
        om[m] = vals
        return Environment(w, om, None, seed)
    if kind >= len(KINDS):
        raise ValueError(f"unknown kind code {kind}")
    n = int(m.sum())
    if len(body) != (n + 3) // 4:
        raise ValueError("payload size mismatch")
    arr = np.zeros(w.shape, np.uint8)
    arr[m] = _unpack2(body, n)
    params = {k: v for k, v in (("eps", eps), ("b", b), ("kappa", kap)) if not np.isnan(v)}
    return ArrowField(w, arr, KINDS[kind], bool(flags & 1), seed, params)


def save(obj, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(obj))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def to_json(obj) -> str:
    w = obj.window
    d = {"format": "wns-json-1", "window": w.to_dict(),
         "seed": None if obj.seed is None else [obj.seed.master_seed, obj.seed.stream_id]}
    if isinstance(obj, ArrowField):
        d.update(kind=obj.kind, dual=obj.dual, params=obj.params,
                 rows=[[int(c) for c in obj.arrows[i, w.sites_at(w.t_min + i) - w.x_min]]
                       for i in range(w.nt)])
    elif isinstance(obj, Environment):
        d.update(kind="environment",
                 rows=[[float(v) for v in obj.omega[i, w.sites_at(w.t_min + i) - w.x_min]]
                       for i in range(w.nt)])
    else:
        raise TypeError(type(obj))
    return json.dumps(d)


def from_json(s: str):
    d = json.loads(s)
    if d.get("format") != "wns-json-1":
        raise ValueError("not a wns-json-1 document")
    w = LatticeWindow(**d["window"])
    seed = None if d["seed"] is None else SeedSpec(*d["seed"])
    if len(d["rows"]) != w.nt:
        raise ValueError("row count mismatch")
    if d["kind"] == "environment":
        om = np.zeros(w.shape)
        for i, row in enumerate(d["rows"]):
            om[i, w.sites_at(w.t_min + i) - w.x_min] = row
        return Environment(w, om, None, seed)
    arr = np.zeros(w.shape, np.uint8)
    for i, row in enumerate(d["rows"]):
        arr[i, w.sites_at(w.t_min + i) - w.x_min] = row
    return ArrowField(w, arr, d["kind"], d["dual"], seed, d.get("params", {}))
