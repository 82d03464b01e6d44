"""Circle geometry in turn coordinates.

Angles are stored as fractions of a full revolution ("turns"), so that
nu-adic endpoints stay exact when given as ``fractions.Fraction``.  Every
routine here also accepts plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real

import numpy as np
from scipy import integrate

TAU = 2.0 * math.pi


def wrap_turn(t):
    """Reduce a turn value into [0, 1); exact for Fractions."""
    w = t % 1
    # float modulo can round up to exactly 1.0 for tiny negative inputs
    if isinstance(w, float) and w >= 1.0:
        w = 0.0
    return w


def turn_to_point(t):
    """Map turns to points on the unit circle (vectorised)."""
    if isinstance(t, Fraction):
        t = float(wrap_turn(t))
    return np.exp(1j * TAU * np.asarray(t, dtype=float))


def point_to_turn(z):
    return np.mod(np.angle(z) / TAU, 1.0)


def _as_complex(z) -> complex:
    if isinstance(z, (tuple, list)):
        return complex(z[0], z[1])
    return complex(z)


@dataclass(frozen=True)
class Arc:
    """Closed arc ``[start, start + length]`` in turns.

    ``length == 1`` encodes the whole circle.
    """

    start: Real
    length: Real

    def __post_init__(self):
        if not (0 < self.length <= 1):
            raise ValueError(f"arc length must lie in (0, 1], got {self.length}")
        object.__setattr__(self, "start", wrap_turn(self.start))

    @classmethod
    def full(cls) -> "Arc":
        return cls(Fraction(0), Fraction(1))

    @property
    def is_full(self) -> bool:
        return self.length == 1

    @property
    def end(self):
        """Anticlockwise endpoint in turns, not wrapped (may exceed 1)."""
        return self.start + self.length

    @property
    def center(self):
        return wrap_turn(self.start + self.length / 2)

    @property
    def z_minus(self) -> complex:
        return complex(turn_to_point(self.start))

    @property
    def z_plus(self) -> complex:
        return complex(turn_to_point(self.end))

    def offset_of(self, t):
        """Anticlockwise offset of turn ``t`` from ``start`` in [0, 1)."""
        return wrap_turn(t - self.start)

    def contains_turn(self, t) -> bool:
        return self.is_full or self.offset_of(t) <= self.length

    def contains(self, other: "Arc") -> bool:
        if self.is_full:
            return True
        if other.is_full:
            return False
        off = self.offset_of(other.start)
        return off + other.length <= self.length

    def subarc(self, offset, length) -> "Arc":
        """Subarc starting ``offset`` turns after ``start``."""
        if offset < 0 or offset + length > self.length:
            raise ValueError("subarc does not fit inside the arc")
        return Arc(self.start + offset, length)

    def sample(self, count: int, endpoints: bool = True) -> np.ndarray:
        """Evenly spaced turns across the arc (floats, wrapped)."""
        if endpoints:
            u = np.linspace(0.0, 1.0, count)
        else:
            u = (np.arange(count) + 0.5) / count
        return np.mod(float(self.start) + u * float(self.length), 1.0)


def arcs_overlap(a: Arc, b: Arc) -> bool:
    """True when the interiors of two arcs intersect."""
    if a.is_full or b.is_full:
        return True
    off = b.offset_of(a.start)
    if off < b.length:
        return True
    off = a.offset_of(b.start)
    return off < a.length


def poisson_kernel(z, xi) -> float:
    """Poisson kernel (1-|z|^2)/|xi - z|^2 with ``xi`` given in turns."""
    z = _as_complex(z)
    r2 = abs(z) ** 2
    if r2 >= 1.0:
        raise ValueError("poisson_kernel requires |z| < 1")
    pt = turn_to_point(xi)
    return (1.0 - r2) / np.abs(pt - z) ** 2


def harmonic_measure(z, arcs, tol: float = 1e-10) -> float:
    """Harmonic measure of a union of pairwise disjoint arcs seen from ``z``."""
    z = _as_complex(z)
    if abs(z) >= 1.0:
        raise ValueError("harmonic_measure requires |z| < 1")
    arcs = list(arcs)
    for i in range(len(arcs)):
        for j in range(i + 1, len(arcs)):
            if arcs_overlap(arcs[i], arcs[j]):
                raise ValueError(f"arcs {i} and {j} overlap")
    total = 0.0
    # the kernel peaks at the turn of z; tell quad where
    peak = float(point_to_turn(z)) if z != 0 else None
    for arc in arcs:
        if arc.is_full:
            total += 1.0
            continue
        a = float(arc.start)
        b = a + float(arc.length)
        pts = None
        if peak is not None:
            pts = [p for p in (peak, peak + 1.0, peak - 1.0) if a < p < b] or None
        val, _ = integrate.quad(
            lambda t: poisson_kernel(z, t), a, b, points=pts,
            epsabs=tol, epsrel=0.0, limit=500,
        )
        total += val
    return float(total)


def arc_center_point(arc: Arc) -> complex:
    """z(I) = (1 - m(I)) * centre; the full circle maps to the origin."""
    if arc.is_full:
        return 0j
    return (1.0 - float(arc.length)) * complex(turn_to_point(arc.center))


def arc_of_point(z) -> Arc:
    """I(z): closed arc centred at z/|z| of length 1 - |z|."""
    z = _as_complex(z)
    r = abs(z)
    if r >= 1.0:
        raise ValueError("arc_of_point requires |z| < 1")
    if r == 0.0:
        return Arc.full()
    length = 1.0 - r
    center = float(point_to_turn(z))
    return Arc(center - length / 2, length)


def scale_arc(arc: Arc, c) -> Arc:
    """Concentric arc of length c*m(I), or the full circle if that exceeds 1."""
    if c <= 0:
        raise ValueError("scale factor must be positive")
    new_len = c * arc.length
    if new_len >= 1:
        return Arc.full()
    return Arc(arc.center - new_len / 2, new_len)


def pseudohyperbolic_distance(z, w) -> float:
    z, w = _as_complex(z), _as_complex(w)
    if abs(z) >= 1 or abs(w) >= 1:
        raise ValueError("both points must lie in the open disk")
    return abs((z - w) / (1 - w.conjugate() * z))


# ---------------------------------------------------------------- gauges

@dataclass(frozen=True)
class GaugeFunction:
    """Measure function phi together with psi(t) = phi(t)/t.

    kinds:
      ``power``      phi(t) = t**s
      ``power_log``  phi(t) = t**s * log(e/t)**p   (0 < t <= 1)
      ``table``      log-log interpolation through (t_i, phi_i) on a log grid
    """

    kind: str
    s: float = 1.0
    p: float = 0.0
    table_t: tuple = field(default=())
    table_phi: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("power", "power_log", "table"):
            raise ValueError(f"unknown gauge kind {self.kind!r}")
        if self.kind in ("power", "power_log") and not (0 < self.s <= 1):
            raise ValueError("gauge exponent s must lie in (0, 1]")
        if self.kind == "table":
            t = np.asarray(self.table_t, dtype=float)
            ph = np.asarray(self.table_phi, dtype=float)
            if t.size < 3 or t.size != ph.size:
                raise ValueError("table gauge needs matching arrays of length >= 3")
            if np.any(np.diff(t) <= 0) or np.any(t <= 0) or np.any(ph <= 0):
                raise ValueError("table gauge needs increasing positive grid and values")
            ratios = np.diff(np.log(t))
            if not np.allclose(ratios, ratios[0], rtol=1e-6):
                raise ValueError("table gauge must be sampled on a logarithmic grid")

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return t ** self.s
        if self.kind == "power_log":
            with np.errstate(divide="ignore"):
                return t ** self.s * np.log(np.e / t) ** self.p
        lt, lp = np.log(self.table_t), np.log(self.table_phi)
        with np.errstate(divide="ignore"):
            out = np.exp(np.interp(np.log(t), lt, lp, left=np.nan, right=np.nan))
        # extend linearly in log-log outside the table
        lo = np.log(t) < lt[0]
        if np.any(lo):
            slope = (lp[1] - lp[0]) / (lt[1] - lt[0])
            out = np.where(lo, np.exp(lp[0] + slope * (np.log(t) - lt[0])), out)
        hi = np.log(t) > lt[-1]
        if np.any(hi):
            slope = (lp[-1] - lp[-2]) / (lt[-1] - lt[-2])
            out = np.where(hi, np.exp(lp[-1] + slope * (np.log(t) - lt[-1])), out)
        return out

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return t ** (self.s - 1.0)
        if self.kind == "power_log":
            return t ** (self.s - 1.0) * np.log(np.e / t) ** self.p
        return self.phi(t) / t

    def probe_grid(self) -> np.ndarray:
        if self.kind == "table":
            return np.asarray(self.table_t, dtype=float)
        return np.logspace(-300, 0, 601)

    def check(self) -> dict:
        """Grid checks of the measure-function axioms."""
        grid = self.probe_grid()
        ph, ps = self.phi(grid), self.psi(grid)
        return {
            "phi_increasing": bool(np.all(np.diff(ph) > 0)),
            "psi_nonincreasing": bool(np.all(np.diff(ps) <= ps[1:] * 1e-12)),
            # finite surrogate: psi keeps growing as t decreases across the grid
            "psi_unbounded": bool(ps[0] > ps[-1] * (1 + 1e-6) and np.all(np.diff(ps) < 0)),
        }

    def log_psi_neglog(self, x):
        """log psi(e^-x), usable far below float underflow of t."""
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return (1.0 - self.s) * x
        if self.kind == "power_log":
            return (1.0 - self.s) * x + self.p * np.log1p(x)
        lt, lp = np.log(self.table_t), np.log(self.table_phi)
        logt = -x
        slope = (lp[1] - lp[0]) / (lt[1] - lt[0])
        inside = np.interp(logt, lt, lp)
        log_phi = np.where(logt < lt[0], lp[0] + slope * (logt - lt[0]), inside)
        return log_phi - logt

    def to_config(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "s": self.s}
        if self.kind == "power_log":
            return {"kind": "power_log", "s": self.s, "p": self.p}
        return {"kind": "table", "t": list(self.table_t), "phi": list(self.table_phi)}

    @classmethod
    def from_config(cls, cfg: dict) -> "GaugeFunction":
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        allowed = {"power": {"s"}, "power_log": {"s", "p"}, "table": {"t", "phi"}}
        if kind not in allowed:
            raise ValueError(f"unknown gauge kind {kind!r}")
        extra = set(cfg) - allowed[kind]
        if extra:
            raise ValueError(f"unknown gauge keys {sorted(extra)}")
        if kind == "table":
            return cls("table", table_t=tuple(cfg["t"]), table_phi=tuple(cfg["phi"]))
        return cls(kind, s=float(cfg["s"]), p=float(cfg.get("p", 0.0)))


def power_gauge(s: float) -> GaugeFunction:
    return GaugeFunction("power", s=s)


def power_log_gauge(s: float, p: float) -> GaugeFunction:
    return GaugeFunction("power_log", s=s, p=p)


def table_gauge(ts, phis) -> GaugeFunction:
    return GaugeFunction("table", table_t=tuple(float(t) for t in ts),
                         table_phi=tuple(float(v) for v in phis))


def psi_generalized_inverse(g: GaugeFunction, t: float, lo: float = 1e-300,
                            hi: float = 1.0, iterations: int = 200) -> float:
    """Generalised inverse of the nonincreasing function psi.

    Returns inf{s in [lo, hi] : psi(s) <= t}, i.e. the point where psi drops
    to the level t.  Power gauges use the closed form t**(-1/delta).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if g.kind == "power":
        if g.s == 1.0:
            raise ValueError("psi is constant for phi(t) = t; no inverse")
        return float(t) ** (-1.0 / (1.0 - g.s))
    grid = g.probe_grid()
    grid = grid[(grid >= lo) & (grid <= hi)]
    ps = g.psi(grid)
    if np.any(np.diff(ps) > np.abs(ps[1:]) * 1e-9):
        raise ValueError("psi is not nonincreasing on the probe grid")
    if g.psi(lo) <= t:
        return lo
    if g.psi(hi) > t:
        return hi
    # bisection in log space on the monotone bracket
    a, b = math.log(lo), math.log(hi)
    for _ in range(iterations):
        m = 0.5 * (a + b)
        if g.psi(math.exp(m)) <= t:
            b = m
        else:
            a = m
        if b - a < 1e-15 * max(1.0, abs(b)):
            break
    return math.exp(b)
