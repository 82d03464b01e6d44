"""Cantor-like subsets of the circle on which sum a_n f^n(xi) hits a target.

Children of an arc are the pieces J_i of a split of the parent (each with
m(f^N(J_i)) = delta1/2) that meet the set E where the steered block sum has
large real part, shrunk slightly into the interior.  For f = z^nu the piece
grid is periodic against E, so the children of one parent form a handful
of residue classes of equally long arcs.  Counts, lengths and masses are
exact rationals; only a seeded sample of children is expanded further.
"""

from __future__ import annotations

import dataclasses
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize, stats

from .blaschke import (BlaschkeProduct, _eval, evaluate, find_Q, iterate, iterate_constants,
                       image_arc_measure, series_on_arc, split_arc_by_image_measure)
from .circle_core import TAU, Arc, GaugeFunction, point_to_turn, turn_to_point, wrap_turn
from .schedule import (CoefficientSchedule, InnerSequences, OuterSequences, check_hypotheses,
                       compute_outer_sequences, paper_example_schedule, select_inner_sequences)


class ConstructionError(RuntimeError):
    """A displayed inequality failed or the construction could not proceed."""


class GateFailure(RuntimeError):
    def __init__(self, condition: str, margin: float):
        super().__init__(f"hypothesis gate failed: {condition} (margin {margin:.6g})")
        self.condition = condition
        self.margin = margin


class CalibrationError(RuntimeError):
    pass


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _log(x: Fraction) -> float:
    """log of a positive rational that may lie outside the float range."""
    return math.log(x.numerator) - math.log(x.denominator)


def _check(holds: bool, margin: float, anchor: str, **extra) -> dict:
    out = {"status": "pass" if holds else "fail", "margin": float(margin), "anchor": anchor}
    out.update(extra)
    return out


# ---------------------------------------------------------------- disk points

@dataclass(frozen=True)
class PolarPoint:
    """Disk point stored as (argument in turns, gap = 1 - |z|).

    Points anchored on deep arcs sit within 1e-100 of the circle, far below
    float resolution of re/im, so the gap is kept exactly.
    """

    turn: Fraction
    gap: Fraction

    def __post_init__(self):
        if not (0 < self.gap <= 1):
            raise ValueError("gap must lie in (0, 1]")

    @classmethod
    def from_complex(cls, z) -> "PolarPoint":
        z = complex(z)
        if abs(z) >= 1:
            raise ValueError("point outside the open disk")
        turn = Fraction(float(point_to_turn(z))) if z != 0 else Fraction(0)
        return cls(turn, Fraction(1) - Fraction(abs(z)))

    @property
    def modulus(self) -> float:
        return 1.0 - float(self.gap)

    @property
    def complex(self) -> complex:
        return self.modulus * complex(turn_to_point(float(self.turn)))

    def dilated_arc(self, d: int) -> Arc:
        """dI(z): arc centred at z/|z| of length d(1-|z|), or the whole circle."""
        length = d * self.gap
        if length >= 1:
            return Arc.full()
        return Arc(self.turn - length / 2, length)


def arc_point(arc: Arc) -> PolarPoint:
    """z(I) for an arc: on the radius through the centre, 1 - |z| = m(I)."""
    if arc.is_full:
        raise ValueError("z(I) of the whole circle is the origin")
    return PolarPoint(_frac(arc.center), _frac(arc.length))


def anchor_point(arc: Arc, d: int) -> PolarPoint:
    """z*(J) on the radius of z(J) with d(1 - |z*|) = 1 - |z(J)|, so dI(z*) = J."""
    z = arc_point(arc)
    return PolarPoint(z.turn, z.gap / d)


def radial_pseudohyperbolic(z: PolarPoint, w: PolarPoint) -> Fraction:
    """rho(z, w) for two points on the same radius, exactly."""
    if z.turn != w.turn:
        raise ValueError("points are not on the same radius")
    a, b = z.gap, w.gap
    return abs(a - b) / (a + b - a * b)


def iterate_modulus(f: BlaschkeProduct, n: int, z: PolarPoint) -> float:
    """|f^n(z)|; exact in the gap for monomials."""
    nu = f.monomial_degree
    if nu is not None:
        gap = float(z.gap)
        if gap >= 1.0:
            return 0.0
        # log|f^n(z)| = nu^n log(1 - gap), kept in logs to avoid overflow
        log_neg = n * math.log(nu) + math.log(-math.log1p(-gap))
        return math.exp(-math.exp(log_neg)) if log_neg < 700 else 0.0
    if float(z.gap) < 1e-12:
        raise ValueError("point too close to the circle for a general Blaschke product")
    return abs(complex(iterate(f, n, z.complex)))


# ---------------------------------------------------------------- constants

@dataclass(frozen=True)
class ArturConstants:
    epsilon: float
    c: float
    d: int
    provenance: str = "user-supplied"
    c0: float | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0 < self.epsilon < 1 and 0 < self.c < 1 and int(self.d) >= 1):
            raise ValueError(f"invalid constants epsilon={self.epsilon} c={self.c} d={self.d}")

    def to_config(self) -> dict:
        return {"epsilon": self.epsilon, "c": self.c, "d": int(self.d)}

    @classmethod
    def from_config(cls, cfg: dict) -> "ArturConstants":
        unknown = set(cfg) - {"epsilon", "c", "d"}
        if unknown:
            raise ValueError(f"unknown artur keys: {sorted(unknown)}")
        return cls(float(cfg["epsilon"]), float(cfg["c"]), int(cfg["d"]))


def poisson_tail(r: float, d: int) -> float:
    """Harmonic measure at z = r of the complement of dI(z).

    The disk automorphism taking r to 0 sends the endpoint e^{i alpha} of
    dI(r) to a point at angle beta, and w(r, dI(r)) = beta / pi.
    """
    length = d * (1.0 - r)
    if length >= 1.0:
        return 0.0
    alpha = math.pi * length
    e = complex(math.cos(alpha), math.sin(alpha))
    beta = math.atan2(((e - r) / (1 - r * e)).imag, ((e - r) / (1 - r * e)).real)
    return 1.0 - beta / math.pi


def _random_block(rng, len_range):
    lo, hi = len_range
    length = int(rng.integers(lo, hi + 1))
    m = int(rng.integers(1, 5))
    a = rng.normal(size=length) + 1j * rng.normal(size=length)
    return m, np.arange(m, m + length), a


def _block_real_part(f: BlaschkeProduct, pts: np.ndarray, indices, coeffs) -> np.ndarray:
    out = np.zeros(pts.shape)
    cur = pts.astype(complex)
    step = 0
    for n, a in zip(indices, coeffs):
        while step < n:
            cur = _eval(f, cur)
            cur = cur / np.abs(cur)
            step += 1
        out += (a * cur).real
    return out


def _random_point_with_small_iterate(f, m, eps, rng, attempts=2000):
    for _ in range(attempts):
        r = 1.0 - 10.0 ** rng.uniform(-3.0, 0.0)
        z = r * complex(turn_to_point(rng.random()))
        if abs(complex(iterate(f, m, z))) < eps:
            return z
    raise CalibrationError(f"no point with |f^{m}(z)| < {eps} found")


def calibrate_artur_constants(f: BlaschkeProduct, trials: int = 200, block_len_range=(1, 6),
                              rng_seed: int = 0, eps_candidates=(0.5, 0.3, 0.2, 0.1),
                              grid: int = 4096, safety: float = 0.5) -> ArturConstants:
    """Monte Carlo estimate of (epsilon, c, d) for the localised real-part lemma.

    For each trial block and point z with |f^M(z)| < epsilon, the largest c
    with w(z, {Re S >= c ||a||}) >= c is read off the pulled-back uniform
    grid (harmonic measure from z is the image of uniform measure under
    eta -> (eta + z)/(1 + conj(z) eta)).  c0 is the worst trial times
    ``safety``; d is the least integer whose Poisson tail outside dI(z) is
    <= c0/2 for all |z|; the returned c is c0/4 and is then checked directly
    against m(D) >= c (1 - |z|) on the same trials.
    """
    if f.is_rotation:
        raise ValueError("f is a rotation")
    rng = np.random.default_rng(rng_seed)
    eta = np.exp(1j * TAU * (np.arange(grid) + 0.5) / grid)
    samples = []
    per_eps = {}
    for eps in eps_candidates:
        worst = math.inf
        for _ in range(trials):
            m, idx, a = _random_block(rng, block_len_range)
            z = _random_point_with_small_iterate(f, m, eps, rng)
            pts = (eta + z) / (1 + np.conj(z) * eta)
            v = _block_real_part(f, pts, idx, a) / np.linalg.norm(a)
            v = np.sort(v)[::-1]
            best = float(np.max(np.minimum(v, np.arange(1, grid + 1) / grid)))
            worst = min(worst, best)
            samples.append((eps, z, idx, a))
        per_eps[eps] = worst
    top = max(per_eps.values())
    if not top > 0:
        raise CalibrationError(f"no positive c found: {per_eps}")
    epsilon = max(e for e, v in per_eps.items() if v >= 0.9 * top)
    c0 = safety * per_eps[epsilon]

    radii = 1.0 - np.logspace(-8, 0, 200, endpoint=False)
    d = 1
    while max(poisson_tail(float(r), d) for r in radii) > c0 / 2:
        d += 1
        if d > 10_000:
            raise CalibrationError("Poisson tail does not localise")

    c = c0 / 4
    diag = {"per_epsilon_c": {str(k): v for k, v in per_eps.items()}, "trials": trials,
            "d_tail": max(poisson_tail(float(r), d) for r in radii)}
    for attempt in range(10):
        failures, worst_margin = 0, math.inf
        for eps, z, idx, a in samples:
            if eps != epsilon:
                continue
            arc = PolarPoint.from_complex(z).dilated_arc(d)
            t = arc.sample(1 << 14, endpoints=False)
            v = _block_real_part(f, turn_to_point(t), idx, a)
            measured = float(np.mean(v >= c * np.linalg.norm(a))) * float(arc.length)
            margin = measured - c * (1 - abs(z))
            worst_margin = min(worst_margin, margin)
            failures += margin < 0
        if failures == 0:
            break
        c *= 0.5
    else:
        raise CalibrationError("localised bound kept failing after shrinking c")
    diag["localised_min_margin"] = worst_margin
    diag["shrinks"] = attempt
    return ArturConstants(float(epsilon), float(c), int(d), "calibrated", float(c0), diag)


def growth_constant(f: BlaschkeProduct) -> float:
    """Bound on max |(f^N)'| / min |(f^N)'| over arcs with m(f^N(I)) < 1."""
    if f.monomial_degree is not None:
        return 1.0
    consts = iterate_constants(f)
    return math.exp(consts.C2_max * TAU / (consts.K_min - 1.0))


def calibrate_delta1(f: BlaschkeProduct, artur: ArturConstants, start: Fraction = Fraction(1, 2),
                     max_halvings: int = 60) -> Fraction:
    """Halve delta1 until the oscillation bound leaves a 2x margin.

    Passing from threshold c to c/4 tolerates an oscillation of (3/4) c ||a||;
    the oscillation over a piece with m(f^N(J_i)) <= delta1 is at most
    2 pi K/(K - 1) delta1 ||a||.
    """
    K = iterate_constants(f).K_min
    osc = TAU * K / (K - 1.0)
    delta1 = _frac(start)
    for _ in range(max_halvings):
        if osc * float(delta1) <= 0.375 * artur.c:
            return delta1
        delta1 /= 2
    raise CalibrationError("delta1 calibration did not converge")


def boundary_gamma(f: BlaschkeProduct, eta: Fraction, n_max: int = 8, samples: int = 16,
                   seed: int = 0) -> float:
    """max |f^N(z(I))| over arcs with eta <= m(f^N(I)) <= 4 eta, N <= n_max."""
    nu = f.monomial_degree
    images = np.linspace(float(eta), 4 * float(eta), samples)
    best = 0.0
    if nu is not None:
        for n in range(1, n_max + 1):
            m = images / nu ** n
            best = max(best, float(np.max(np.exp(nu ** n * np.log1p(-m)))))
        return best
    rng = np.random.default_rng(seed)
    K = iterate_constants(f).K_min
    for n in range(1, n_max + 1):
        for img in images:
            start = rng.random()
            arc = split_arc_by_image_measure(f, n, Arc(start, min(0.99, 1.5 * img / K ** n)),
                                             float(img), tol=1e-13)
            z = (1 - float(arc.length)) * complex(turn_to_point(float(arc.center)))
            best = max(best, abs(complex(iterate(f, n, z))))
    return best


def schwarz_gamma1(gamma: float, d: int) -> float:
    """Largest |f^N(z*)| when rho(z*, z(I)) <= (d-1)/d and |f^N(z(I))| <= gamma."""
    rho = (d - 1) / d
    return (gamma + rho) / (1 + gamma * rho)


# ---------------------------------------------------------------- arc classes

@dataclass(frozen=True)
class ArcClass:
    """Equal arcs [origin + (i + offset) unit, + width unit] for i in a residue class.

    Members are the i in [lo, hi] with (i + shift) mod period in [r_lo, r_hi].
    """

    origin: Fraction
    unit: Fraction
    lo: int
    hi: int
    period: int
    shift: int
    r_lo: int
    r_hi: int
    offset: Fraction
    width: Fraction
    parent: int = 0
    kind: str = "full"

    def _below(self, x: int) -> int:
        """Members y of the residue set with 0 <= y < x (in shifted coordinates)."""
        if x <= 0:
            return 0
        w = self.r_hi - self.r_lo + 1
        q, rem = divmod(x, self.period)
        return q * w + min(max(rem - self.r_lo, 0), w)

    def count_between(self, a: int, b: int) -> int:
        """Members with a <= i <= b."""
        a, b = max(a, self.lo), min(b, self.hi)
        if b < a:
            return 0
        return self._below(b + 1 + self.shift) - self._below(a + self.shift)

    @property
    def count(self) -> int:
        return self.count_between(self.lo, self.hi)

    @property
    def arc_length(self) -> Fraction:
        return self.width * self.unit

    @property
    def total_length(self) -> Fraction:
        return self.count * self.arc_length

    def is_member(self, i: int) -> bool:
        return self.lo <= i <= self.hi and self.r_lo <= (i + self.shift) % self.period <= self.r_hi

    def member(self, j: int) -> int:
        """Index i of the j-th member (0-based, increasing in i)."""
        if not 0 <= j < self.count:
            raise IndexError(j)
        w = self.r_hi - self.r_lo + 1
        target = self._below(self.lo + self.shift) + j
        y = (target // w) * self.period + self.r_lo + target % w
        return y - self.shift

    def arc(self, i: int) -> Arc:
        return Arc(self.origin + (i + self.offset) * self.unit, self.arc_length)

    def hull(self):
        """(start, end) in unwrapped turns covering every member."""
        return (self.origin + (self.lo + self.offset) * self.unit,
                self.origin + (self.hi + self.offset + self.width) * self.unit)

    def _measure_upto(self, x: Fraction) -> Fraction:
        """Lebesgue measure (in units) of the members below x, x in unit coordinates."""
        full = math.floor(x - self.offset - self.width)
        total = self.count_between(self.lo, full) * self.width
        ip = math.floor(x - self.offset)
        if ip > full and self.is_member(ip):
            total += min(max(x - ip - self.offset, Fraction(0)), self.width)
        return total

    def measure_in(self, a: Fraction, b: Fraction) -> Fraction:
        """m(class ∩ [a, b]) for an unwrapped interval with b - a <= 1."""
        out = Fraction(0)
        h0, h1 = self.hull()
        for k in (-1, 0, 1):
            lo, hi = max(a + k, h0), min(b + k, h1)
            if hi <= lo:
                continue
            out += (self._measure_upto((hi - self.origin) / self.unit)
                    - self._measure_upto((lo - self.origin) / self.unit))
        return out * self.unit


def _single_class(origin, unit, offset, width, parent, kind="single") -> ArcClass:
    return ArcClass(_frac(origin), _frac(unit), 0, 0, 1, 0, 0, 0, _frac(offset), _frac(width),
                    parent, kind)


@dataclass
class ArcFamily:
    """One generation: residue classes of children tagged with their parent."""

    generation: int
    classes: list
    parent_count: int = 1

    @property
    def count(self) -> int:
        return sum(c.count for c in self.classes)

    def total_length(self, parent: int | None = None) -> Fraction:
        return sum((c.total_length for c in self.classes
                    if parent is None or c.parent == parent), Fraction(0))

    def arcs(self, limit: int = 100_000):
        """Materialise every arc as (parent, Arc); refuses huge families."""
        if self.count > limit:
            raise ValueError(f"family has {self.count} arcs, above limit {limit}")
        out = []
        for c in self.classes:
            for j in range(c.count):
                out.append((c.parent, c.arc(c.member(j))))
        return sorted(out, key=lambda pa: (pa[0], pa[1].start))

    def child(self, parent: int, j: int):
        """j-th child of ``parent`` as (class index, member index)."""
        for ci, c in enumerate(self.classes):
            if c.parent != parent:
                continue
            if j < c.count:
                return ci, c.member(j)
            j -= c.count
        raise IndexError(j)

    def child_count(self, parent: int) -> int:
        return sum(c.count for c in self.classes if c.parent == parent)


# ---------------------------------------------------------------- the set E

def _block_function(nu: int, indices, coeffs, m0: int):
    freqs = np.array([nu ** (int(n) - m0) for n in indices], dtype=float)
    coeffs = np.asarray(coeffs, dtype=complex)

    def h(u):
        u = np.asarray(u, dtype=float)
        return np.real(np.exp(1j * TAU * np.multiply.outer(u, freqs)) @ coeffs)
    return h


def superlevel_intervals(nu: int, indices, coeffs, threshold: float,
                         base_grid: int = 1 << 14, max_grid: int = 1 << 23) -> list:
    """{u in [0,1): Re sum b_n e^(2 pi i nu^(n - m0) u) >= threshold} as (alpha, beta) pairs.

    A single coefficient gives a closed-form arc; otherwise the grid is
    doubled until the measured length is stable to 1% and sign changes are
    refined with brentq.  Intervals may have beta > 1 when they wrap.
    """
    indices = [int(n) for n in indices]
    coeffs = np.asarray(coeffs, dtype=complex)
    if not indices or np.all(coeffs == 0):
        if threshold > 0:
            return []
        return [(0.0, 1.0)]
    m0 = min(indices)
    if len(indices) == 1:
        b = complex(coeffs[0])
        ratio = threshold / abs(b)
        if ratio > 1:
            return []
        if ratio <= -1:
            return [(0.0, 1.0)]
        half = math.acos(ratio) / TAU
        centre = (-math.atan2(b.imag, b.real) / TAU) % 1.0
        return [(centre - half, centre + half)] if centre - half >= 0 else \
            [(centre - half + 1.0, centre + half + 1.0)]
    span = max(indices) - m0
    grid = max(base_grid, 32 * nu ** span)
    if grid > max_grid:
        raise ConstructionError(f"block spans {span} octaves; E cannot be resolved on a grid")
    h = _block_function(nu, indices, coeffs, m0)
    prev = None
    while True:
        u = np.arange(grid) / grid
        vals = h(u) - threshold
        meas = float(np.mean(vals >= 0))
        if prev is not None and abs(meas - prev) <= 0.01 * max(prev, 1e-12):
            break
        if grid * 2 > max_grid:
            break
        prev = meas
        grid *= 2
    inside = vals >= 0
    if inside.all():
        return [(0.0, 1.0)]
    if not inside.any():
        return []
    # rotate so the scan starts outside E
    s = int(np.argmin(inside))
    out, start = [], None
    for k in range(1, grid + 1):
        j = (s + k) % grid
        prev_in = inside[(s + k - 1) % grid]
        if inside[j] and not prev_in:
            a, b = (s + k - 1) / grid, (s + k) / grid
            start = optimize.brentq(lambda x: float(h(np.array([x % 1.0]))[0] - threshold), a, b,
                                    xtol=1e-15)
        elif not inside[j] and prev_in:
            a, b = (s + k - 1) / grid, (s + k) / grid
            end = optimize.brentq(lambda x: float(h(np.array([x % 1.0]))[0] - threshold), a, b,
                                  xtol=1e-15)
            st = start % 1.0
            out.append((st, st + (end - start)))
    return out


# ---------------------------------------------------------------- inductive step

@dataclass(frozen=True)
class StepConfig:
    artur: ArturConstants
    delta1: Fraction
    K: float
    C0: float
    shrink_bits: int = 40
    check_points: int = 33

    @property
    def eta(self) -> Fraction:
        return self.delta1 / 4

    @property
    def c_step(self) -> float:
        """Real-part constant of the inductive step (a quarter of the localised one)."""
        return self.artur.c / 4

    @property
    def covering(self) -> float:
        """C = c / (2d)."""
        return self.c_step / (2 * self.artur.d)


def _shrink(segments, total_len: Fraction, bits: int):
    """Interior window [x, 1 - y] keeping half the E-overlap and half the length.

    Each endpoint moves in by 2^-bits; a side is halved again (up to ``bits``
    times) while the E-overlap requirement fails.  Returns (x, width) or None.
    """
    need = total_len / 2

    def covered(x, y):
        return sum(max(min(e1, 1 - y) - max(e0, x), Fraction(0)) for e0, e1 in segments)

    x = y = Fraction(1, 1 << bits)
    for _ in range(bits + 1):
        if covered(x, y) >= need and 1 - x - y >= Fraction(1, 2):
            return x, 1 - x - y
        left = sum(max(min(e1, x) - e0, Fraction(0)) for e0, e1 in segments)
        right = sum(max(e1 - max(e0, 1 - y), Fraction(0)) for e0, e1 in segments)
        if left >= right:
            x /= 2
        if right >= left:
            y /= 2
    return None


def _overlaps(intervals, lo: Fraction, hi: Fraction):
    """Parts of E (periodic, in turns) inside [lo, hi], relative to [lo, hi]."""
    out = []
    span = hi - lo
    base = math.floor(lo)
    for a, b in intervals:
        a, b = Fraction(a), Fraction(b)
        for k in range(base - 1, math.floor(hi) + 2):
            s, e = max(a + k, lo), min(b + k, hi)
            if e > s:
                out.append(((s - lo) / span, (e - lo) / span))
    return out


def inductive_step(f: BlaschkeProduct, z: PolarPoint, M: int, N: int, indices, coeffs,
                   cfg: StepConfig, parent: int = 0, generation: int = 1):
    """Children of dI(z) for the block [M, N] with coefficients b_n.

    Returns (ArcFamily, diagnostics).  Every displayed inequality is measured
    and returned with its margin; an empty family raises.
    """
    if not M < N:
        raise ValueError("need M < N")
    art = cfg.artur
    fm = iterate_modulus(f, M, z)
    if not fm < art.epsilon:
        raise ConstructionError(f"precondition |f^M(z)| < epsilon fails: {fm} >= {art.epsilon}")
    indices = [int(n) for n in indices]
    coeffs = np.asarray(coeffs, dtype=complex)
    if indices and (min(indices) < M or max(indices) > N):
        raise ValueError("coefficients outside [M, N]")
    J = z.dilated_arc(art.d)
    norm2 = float(np.linalg.norm(coeffs)) if coeffs.size else 0.0
    threshold = art.c * norm2
    nu = f.monomial_degree
    if nu is None:
        fam, diag = _general_step(f, J, N, indices, coeffs, threshold, cfg, parent, generation)
    else:
        fam, diag = _monomial_step(nu, J, N, indices, coeffs, threshold, cfg, parent, generation)
    diag["f_M_modulus"] = fm
    diag.update(_step_checks(f, z, J, M, N, indices, coeffs, norm2, fam, diag, cfg))
    if not fam.classes:
        raise ConstructionError("IndStepCoveringRequirement: the step produced no arcs")
    return fam, diag


def _monomial_step(nu, J, N, indices, coeffs, threshold, cfg, parent, generation):
    origin = _frac(J.start)
    mJ = _frac(J.length)
    unit = cfg.delta1 / (2 * nu ** N)
    L = math.floor(mJ / unit)
    if L < 1:
        raise ConstructionError("parent arc shorter than one piece; delta1/N inconsistent")
    rem = mJ - L * unit
    intervals = superlevel_intervals(nu, indices, coeffs, threshold)
    m0 = min(indices) if indices else N
    lam = nu ** m0 * unit
    if lam.numerator != 1:
        raise ConstructionError("piece grid is not commensurate with the period of E")
    P = lam.denominator
    u0 = (nu ** m0 * origin) % 1
    cell0 = u0 * P
    i0 = math.floor(cell0)
    theta = cell0 - i0
    shift = i0 % P
    bits = cfg.shrink_bits
    classes = []
    e_measure = Fraction(0)
    dropped = 0
    if L >= 2:
        full_ranges, partial = [], {}
        for a, b in intervals:
            A, B = Fraction(a) * P, Fraction(b) * P
            for k in (-1, 0, 1):
                Ak, Bk = A + k * P, B + k * P
                r_min = max(math.floor(Ak - theta - 1) + 1, 0)
                r_max = min(math.ceil(Bk - theta) - 1, P - 1)
                if r_max < r_min:
                    continue
                f_lo = max(math.ceil(Ak - theta), 0)
                f_hi = min(math.floor(Bk - theta - 1), P - 1)
                if f_hi >= f_lo:
                    full_ranges.append((f_lo, f_hi))
                for r in sorted({r_min, r_max}):
                    if f_lo <= r <= f_hi:
                        continue
                    seg = (max(Ak - r - theta, Fraction(0)), min(Bk - r - theta, Fraction(1)))
                    if seg[1] > seg[0]:
                        partial.setdefault(r, []).append(seg)
        margin = Fraction(1, 1 << bits)
        for r_lo, r_hi in full_ranges:
            c = ArcClass(origin, unit, 0, L - 2, P, shift, r_lo, r_hi, margin, 1 - 2 * margin,
                         parent, "full")
            if c.count:
                classes.append(c)
                e_measure += c.count * unit
        for r, segs in sorted(partial.items()):
            if any(lo <= r <= hi for lo, hi in full_ranges):
                continue
            total = sum(e - s for s, e in segs)
            base = ArcClass(origin, unit, 0, L - 2, P, shift, r, r, Fraction(0), Fraction(1),
                            parent, "partial")
            n = base.count
            if not n:
                continue
            e_measure += n * total * unit
            win = _shrink(segs, total, bits)
            if win is None:
                dropped += n
                continue
            classes.append(ArcClass(origin, unit, 0, L - 2, P, shift, r, r, win[0], win[1],
                                    parent, "partial"))
    # last piece absorbs the remainder
    last_start = origin + (L - 1) * unit
    last_len = unit + rem
    lo_c = (nu ** m0 * last_start) % 1
    segs = _overlaps(intervals, lo_c, lo_c + nu ** m0 * last_len)
    if segs:
        total = sum(e - s for s, e in segs)
        e_measure += total * last_len
        win = _shrink(segs, total, bits)
        if win is None:
            dropped += 1
        else:
            classes.append(_single_class(last_start, last_len, win[0], win[1], parent, "last"))
    diag = {"pieces": L, "period": P, "intervals": [(float(a), float(b)) for a, b in intervals],
            "E_measure": e_measure, "dropped": dropped, "J": J, "theta": theta}
    return ArcFamily(generation, classes), diag


def _general_step(f, J, N, indices, coeffs, threshold, cfg, parent, generation,
                  max_pieces: int = 2048, samples: int = 64):
    """Sequential splitting with sampled E; for small general products only."""
    half = float(cfg.delta1) / 2
    pieces = []
    rest = J
    while True:
        total = image_arc_measure(f, N, rest)
        if total < half or (pieces and total < half * (1 + 1e-12)):
            if pieces:
                last = pieces.pop()
                pieces.append(Arc(last.start, float(last.length) + float(rest.length)))
            else:
                pieces.append(rest)
            break
        piece = split_arc_by_image_measure(f, N, rest, half, tol=1e-13)
        pieces.append(piece)
        if float(rest.length) - float(piece.length) <= 0:
            break
        rest = Arc(float(piece.start) + float(piece.length),
                   float(rest.length) - float(piece.length))
        if len(pieces) > max_pieces:
            raise ConstructionError(f"more than {max_pieces} pieces; use a monomial or smaller N")
    classes, e_measure, dropped = [], 0.0, 0
    u = (np.arange(samples) + 0.5) / samples
    for piece in pieces:
        vals = series_on_arc(f, indices, coeffs, piece, u).real if indices else np.zeros(samples)
        inside = vals >= threshold
        if not inside.any():
            continue
        frac_in = float(np.mean(inside))
        e_measure += frac_in * float(piece.length)
        segs = [(Fraction(k, samples), Fraction(k + 1, samples)) for k in np.flatnonzero(inside)]
        win = _shrink(segs, Fraction(int(inside.sum()), samples), cfg.shrink_bits)
        if win is None:
            dropped += 1
            continue
        classes.append(_single_class(_frac(piece.start), _frac(piece.length), win[0], win[1],
                                     parent, "single"))
    diag = {"pieces": len(pieces), "period": None, "intervals": [], "E_measure": e_measure,
            "dropped": dropped, "J": J, "theta": None}
    return ArcFamily(generation, classes), diag


def _image_measure(f, N, arc: Arc):
    nu = f.monomial_degree
    if nu is not None:
        return _frac(arc.length) * nu ** N
    return _frac(image_arc_measure(f, N, arc))


def _representatives(c: ArcClass):
    """First, middle and last members plus the members at both residue ends."""
    out = {c.member(0), c.member(c.count // 2), c.member(c.count - 1)}
    for r in (c.r_lo, c.r_hi):
        i = c.lo + (r - c.lo - c.shift) % c.period
        if i <= c.hi:
            out.add(i)
    return sorted(out)


def _step_checks(f, z, J, M, N, indices, coeffs, norm2, fam, diag, cfg):
    mJ = _frac(J.length)
    eta = cfg.eta
    total = fam.total_length()
    C = cfg.covering
    checks = {}
    checks["IndStepCoveringRequirement"] = _check(
        total >= _frac(C) * mJ, float(total / mJ) - C,
        "sum m(I) >= (c/2d) m(dI(z))", ratio=float(total / mJ))
    e_bound = cfg.artur.c * float(z.gap)
    e_meas = float(_frac(diag["E_measure"]))
    checks["LocalisedRealPartSet"] = _check(
        e_meas >= e_bound, e_meas / float(mJ) - e_bound / float(mJ),
        "m(D) >= c (1 - |z|)", relative_to_parent=True)
    size_lo, size_hi = math.inf, -math.inf
    grow_margin = math.inf
    growth_rhs = _frac(cfg.K) * _frac(cfg.C0) ** (-(N - M)) * mJ
    real_margin = math.inf
    dual_err = 0.0
    c_step = cfg.c_step
    u = np.linspace(0.0, 1.0, cfg.check_points)
    for c in fam.classes:
        rep = c.arc(c.member(0))
        img = _image_measure(f, N, rep)
        size_lo = min(size_lo, float(img / eta))
        size_hi = max(size_hi, float(img / eta))
        grow_margin = min(grow_margin, 1.0 - float(c.arc_length / growth_rhs))
        for i in set(_representatives(c)):
            arc = c.arc(i)
            if indices:
                vals = series_on_arc(f, indices, coeffs, arc, u).real
            else:
                vals = np.zeros(u.size)
            real_margin = min(real_margin, float(np.min(vals)) - c_step * norm2)
        if f.monomial_degree is not None and c.period > 1 and indices:
            # same values through the u-coordinate of E (independent of series_on_arc)
            nu = f.monomial_degree
            m0 = min(indices)
            i = c.member(0)
            r = (i + c.shift) % c.period
            cell = (r + diag["theta"] + c.offset + c.width * Fraction(1, 2)) / c.period
            h = _block_function(nu, indices, coeffs, m0)
            via_u = float(h(np.array([float(cell % 1)]))[0])
            direct = float(series_on_arc(f, indices, coeffs, c.arc(i), np.array([0.5])).real[0])
            dual_err = max(dual_err, abs(via_u - direct))
    if not fam.classes:
        size_lo = size_hi = float("nan")
    checks["IndStepSizeControl"] = _check(
        bool(fam.classes) and size_lo >= 1 and size_hi <= 4, min(size_lo - 1, 4 - size_hi),
        "eta <= m(f^N(I)) <= 4 eta", min_ratio=size_lo, max_ratio=size_hi)
    checks["IndStepGrowthCondition"] = _check(
        grow_margin >= 0, grow_margin, "m(I) <= K C0^-(N-M) m(dI(z))")
    checks["IndStepRealPartBound"] = _check(
        real_margin >= -1e-12, real_margin, "Re sum a_n f^n(xi) >= c (sum |a_k|^2)^(1/2)",
        dual_route_error=dual_err)
    return {"checks": checks, "total_length": total, "parent_length": mJ}


# ---------------------------------------------------------------- steering and nesting

def steer_block(residual: complex) -> complex:
    """Unit phase pointing along the residual (identity for a zero residual)."""
    residual = complex(residual)
    if residual == 0:
        return 1 + 0j
    return residual / abs(residual)


def _pick_children(fam: ArcFamily, parent: int, k: int, rng: random.Random):
    """k distinct children of ``parent`` chosen uniformly (all of them if fewer)."""
    n = fam.child_count(parent)
    if n <= k:
        picks = range(n)
    else:
        chosen = set()
        while len(chosen) < k:
            chosen.add(rng.randrange(n))
        picks = sorted(chosen)
    return [fam.child(parent, j) for j in picks]


def nested_families(f: BlaschkeProduct, a: CoefficientSchedule, inner: InnerSequences,
                    k1: int, k2: int, z: PolarPoint, cfg: StepConfig, phase: complex = 1 + 0j,
                    max_parents: int = 8, seed: int = 0, eps=None):
    """Families F_{k1}..F_{k2} by iterating the inductive step.

    After F_k each sampled arc J is re-anchored at z*(J), with
    rho(z*(J), z(J)) <= (d-1)/d asserted.  Returns (families, expanded,
    diagnostics) where expanded[k] lists the sampled arcs of family k.
    """
    if k2 < k1:
        raise ValueError("need k1 <= k2")
    rng = random.Random(seed)
    d = cfg.artur.d
    families, expanded, diags = [], [], []
    anchors = [z]
    parents = [None]
    for k in range(k1, k2 + 1):
        fam = ArcFamily(k - k1, [], len(anchors))
        step_diags = []
        for p, zp in enumerate(anchors):
            idx, val = a.block(inner.m(k), inner.n(k))
            sub, dg = inductive_step(f, zp, inner.m(k), inner.n(k), idx, np.conj(phase) * val,
                                     cfg, parent=p, generation=k - k1)
            fam.classes.extend(sub.classes)
            step_diags.append(dg)
            if parents[p] is not None and eps is not None:
                ratio = max(c.arc_length for c in sub.classes) / _frac(parents[p].length)
                dg["checks"]["LongBlocksSizeControl"] = _check(
                    ratio <= _frac(eps[k - 2]), eps[k - 2] - float(ratio),
                    "max m(I)/m(I') <= eps_k")
        families.append(fam)
        diags.append(step_diags)
        if k == k2:
            expanded.append([])
            break
        per = max(1, max_parents // len(anchors))
        chosen = []
        for p in range(len(anchors)):
            for ci, i in _pick_children(fam, p, per, rng):
                chosen.append(fam.classes[ci].arc(i))
        expanded.append(chosen)
        new = []
        for arc in chosen:
            zs = anchor_point(arc, d)
            rho = radial_pseudohyperbolic(zs, arc_point(arc))
            if rho > Fraction(d - 1, d):
                raise ConstructionError(f"anchor distance {float(rho)} exceeds (d-1)/d")
            new.append(zs)
        anchors, parents = new, chosen
    return families, expanded, diags


# ---------------------------------------------------------------- driver

@dataclass
class ConstructionConfig:
    """Everything the driver needs besides f, a, the gauge and the target."""

    step: StepConfig
    outer: OuterSequences
    inner: InnerSequences
    beta: float
    horizon_k: int
    gate: str = "report"
    r: float | None = None
    max_parents: int = 8
    seed: int = 0
    z0: complex | None = None
    tolerance: float = 1e-3
    sample_points: int = 65
    patience: int = 2
    extras: dict = field(default_factory=dict)


def find_start_point(f: BlaschkeProduct, epsilon: float, r0: float = 0.01,
                     growth: float = 1.1, max_steps: int = 400) -> complex:
    """Spiral outward from r0 until |f(z0)| < epsilon."""
    golden = (math.sqrt(5) - 1) / 2
    for j in range(max_steps):
        r = r0 * growth ** j
        if r >= 1:
            break
        z = r * complex(turn_to_point(j * golden))
        if abs(complex(evaluate(f, z))) < epsilon:
            return z
    raise ConstructionError("no start point with |f(z0)| < epsilon")


def prepare_construction(f: BlaschkeProduct, g: GaugeFunction, schedule, N: int, beta: float,
                         horizon_k: int, artur: ArturConstants | None = None,
                         delta1=None, calibration_trials: int = 200, seed: int = 0,
                         **kwargs):
    """Calibrate constants, build the outer/inner sequences and the schedule.

    ``schedule`` is a CoefficientSchedule or the string "paper_example"
    (a_n = 1/k at the start of the k-th long block).
    Returns (schedule, ConstructionConfig).
    """
    if f.is_rotation:
        raise ValueError("f is a rotation")
    if artur is None:
        artur = calibrate_artur_constants(f, trials=calibration_trials, rng_seed=seed)
    delta1 = calibrate_delta1(f, artur) if delta1 is None else _frac(delta1)
    consts = iterate_constants(f)
    step = StepConfig(artur, delta1, growth_constant(f), consts.K_min)
    gamma = boundary_gamma(f, step.eta, seed=seed)
    gamma1 = schwarz_gamma1(gamma, artur.d)
    Q = find_Q(f, artur.epsilon, gamma1)
    outer = compute_outer_sequences(g, step.C0, step.c_step, artur.d, step.K, Q, N, horizon_k + 1)
    if isinstance(schedule, str):
        if schedule != "paper_example":
            raise ValueError(f"unknown schedule kind {schedule!r}")
        schedule = paper_example_schedule(outer, beta)
    elif schedule.horizon < outer.horizon_index:
        # a finite coefficient list is read as zero beyond its end
        schedule = dataclasses.replace(schedule, horizon=outer.horizon_index)
    inner = select_inner_sequences(schedule, outer)
    cfg = ConstructionConfig(step, outer, inner, beta, horizon_k, seed=seed, **kwargs)
    cfg.extras.update({"gamma": gamma, "gamma1": gamma1, "Q": Q})
    return schedule, cfg


@dataclass
class Branch:
    """A sampled arc carried to the next level, with its branch bookkeeping."""

    arc: Arc
    level: int
    generation: int
    parent: int
    mass: Fraction
    target: int
    phase: complex
    U: int
    L: int
    d: float
    alpha: float
    case: int
    g_d: float
    g_alpha: float
    g_U: int
    g_L: int
    block_max: float


@dataclass
class ConstructionState:
    families: list
    branches: list
    parent_mass: list
    parent_total: list
    checks: dict
    generations: list
    hypotheses: object
    r: float
    w: complex
    config: ConstructionConfig
    step_diagnostics: list
    z0: complex

    @property
    def final_d(self) -> float:
        return self.generations[-1]["max_d"]

    def density(self, level: int, parent: int) -> Fraction:
        return self.parent_mass[level][parent] / self.parent_total[level][parent]


def _series_values(f, a: CoefficientSchedule, upto: int, arc: Arc, u) -> np.ndarray:
    idx, val = a.block(1, upto)
    if not idx.size:
        return np.zeros(np.size(u), dtype=complex)
    return series_on_arc(f, idx, val, arc, u)


def _merge_check(store: dict, name: str, chk: dict):
    """Keep one entry per inequality: the worst margin seen, failing if any failed."""
    cur = store.get(name)
    if cur is None:
        store[name] = dict(chk, evaluations=1)
        return
    cur["evaluations"] += 1
    if chk["status"] == "fail" or cur["status"] == "pass" and chk["margin"] < cur["margin"]:
        keep = cur["evaluations"]
        failed = cur["status"] == "fail" or chk["status"] == "fail"
        if cur["status"] == "fail" and chk["margin"] >= cur["margin"]:
            return
        store[name] = dict(chk, evaluations=keep)
        if failed:
            store[name]["status"] = "fail"


def build_cantor_set(f: BlaschkeProduct, a: CoefficientSchedule, g: GaugeFunction, w: complex,
                     max_generation: int, cfg: ConstructionConfig) -> ConstructionState:
    """Run the inductive driver for ``max_generation`` generations G_1..G_max.

    Levels are long-block indices t; each level is one family of the
    Frostman chain.  A branch at a generation boundary picks Case 1 or
    Case 2, fixes its steering phase toward the residual and its target
    level, and every step in between is steered the same way.
    """
    if max_generation < 1:
        raise ValueError("max_generation must be >= 1")
    w = complex(w)
    step = cfg.step
    outer, inner = cfg.outer, cfg.inner
    report = check_hypotheses(a, outer, cfg.beta, step.covering, cfg.horizon_k,
                              tolerance=cfg.tolerance)
    relaxed = {"FirstInequalityN", "SecondInequalityN"} if cfg.gate == "report" else set()
    if cfg.gate not in ("report", "enforce"):
        raise ValueError("gate must be 'report' or 'enforce'")
    # an absolutely summable series is out of scope, so name that first
    for name in sorted(report.checks, key=lambda n: n != "NonSummable"):
        chk = report.checks[name]
        if chk["status"] != "pass" and name not in relaxed:
            raise GateFailure(name, chk["margin"])
    if report.r > 0:
        r = report.r
    elif cfg.r is not None:
        r = float(cfg.r)
    else:
        # R with the short-block loss and the beta_1 dilution removed
        r = 2.0 * step.c_step * cfg.beta / 3.0
    if not r > 0:
        raise ConstructionError("contraction constant r is not positive")

    k_top = len(inner.N_idx)
    block_sums = [a.abs_sum(inner.n(l), inner.n(l + 1)) for l in range(1, k_top)]
    suffix_max = list(np.maximum.accumulate(block_sums[::-1])[::-1]) + [0.0]

    def block_max(t):
        return suffix_max[t - 1] if t >= 1 else suffix_max[0]

    z0 = cfg.z0 if cfg.z0 is not None else find_start_point(f, step.artur.epsilon)
    J0 = PolarPoint.from_complex(z0).dilated_arc(step.artur.d)
    rng = random.Random(cfg.seed)
    phase0 = steer_block(w)
    root = Branch(J0, 0, 0, -1, Fraction(1), 1, phase0, 0, 1, abs(w), 0.0, 2,
                  abs(w), 0.0, 0, 1, block_max(1))
    families, branch_levels = [], [[root]]
    parent_mass, parent_total = [], []
    checks, step_diags = {}, []
    gen_records = {}
    u = np.linspace(0.0, 1.0, cfg.sample_points)
    eps = outer.eps
    level = 0
    while True:
        parents = [b for b in branch_levels[-1] if b.generation < max_generation or b.level < b.target]
        if not parents:
            break
        level += 1
        if level >= k_top:
            raise ConstructionError("ran past the horizon of the inner sequences")
        fam = ArcFamily(level, [], len(branch_levels[-1]))
        masses, totals, diags = [], [], []
        active = []
        for p, b in enumerate(branch_levels[-1]):
            if not (b.generation < max_generation or b.level < b.target):
                masses.append(b.mass)
                totals.append(Fraction(1))
                continue
            zp = PolarPoint.from_complex(z0) if b.level == 0 else anchor_point(b.arc, step.artur.d)
            if b.level > 0:
                rho = radial_pseudohyperbolic(zp, arc_point(b.arc))
                _merge_check(checks, "AnchorDistance", _check(
                    rho <= Fraction(step.artur.d - 1, step.artur.d),
                    (step.artur.d - 1) / step.artur.d - float(rho), "rho(z*, z(J)) <= (d-1)/d"))
            M, Nn = inner.m(level), inner.n(level)
            idx, val = a.block(M, Nn)
            sub, dg = inductive_step(f, zp, M, Nn, idx, np.conj(b.phase) * val, step,
                                     parent=p, generation=level)
            fam.classes.extend(sub.classes)
            if b.level > 0:
                ratio = max(c.arc_length for c in sub.classes) / _frac(b.arc.length)
                dg["checks"]["LongBlocksSizeControl"] = _check(
                    ratio <= _frac(eps[level - 2]), eps[level - 2] - float(ratio),
                    "max m(I)/m(I') <= eps_k")
            for name, chk in dg["checks"].items():
                _merge_check(checks, name, chk)
            masses.append(b.mass)
            totals.append(dg["total_length"])
            diags.append({"parent": p, **{k: v for k, v in dg.items() if k not in ("J",)}})
            active.append(p)
        families.append(fam)
        parent_mass.append(masses)
        parent_total.append(totals)
        step_diags.append(diags)

        per = max(1, cfg.max_parents // max(1, len(active)))
        new_branches = []
        for p in active:
            b = branch_levels[-1][p]
            density = b.mass / totals[p]
            for ci, i in _pick_children(fam, p, per, rng):
                cls = fam.classes[ci]
                arc = cls.arc(i)
                mass = density * cls.arc_length
                if level < b.target:
                    new_branches.append(Branch(arc, level, b.generation, p, mass, b.target,
                                               b.phase, b.U, b.L, b.d, b.alpha, b.case,
                                               b.g_d, b.g_alpha, b.g_U, b.g_L, b.block_max))
                    continue
                # generation boundary: J_{k+1} in G_{k+1}, U_{k+1} = N_t
                k_new = b.generation + 1
                U = inner.n(level)
                vals = _series_values(f, a, U, arc, u)
                dist = np.abs(vals - w)
                d_new = float(np.max(dist))
                alpha = float(np.max(np.abs(vals[:, None] - vals[None, :])))
                xi = int(np.argmax(dist))
                residual = w - vals[xi]
                if b.generation >= 1:
                    if b.case == 1:
                        short = a.abs_sum(b.g_U, b.g_L)
                        rhs = (1 - r * r / 2) * b.g_d + b.g_alpha + short
                        _merge_check(checks, "TargetContractionCase1", _check(
                            d_new <= rhs, rhs - d_new, "d_(k+1) <= (1 - r^2/2) d_k + alpha_k + short block"))
                    else:
                        rhs = b.g_alpha + (1 + 2 / r) * b.block_max
                        _merge_check(checks, "TargetBoundCase2", _check(
                            d_new <= rhs, rhs - d_new, "d_(k+1) <= alpha_k + (1 + 2/r) max block"))
                L_next = U + outer.Q
                _merge_check(checks, "BranchBookkeeping", _check(
                    inner.m(level + 1) == L_next, 0.0 if inner.m(level + 1) == L_next else -1.0,
                    "L_(k+2) = U_(k+1) + Q"))
                bm = block_max(level)
                if k_new < max_generation:
                    if bm <= r * d_new / 2:
                        case = 1
                        target = None
                        for t1 in range(level + 1, k_top):
                            if a.abs_sum(inner.m(level + 1), inner.n(t1)) >= r * d_new / 2:
                                target = t1
                                break
                        if target is None:
                            raise ConstructionError("Case 1 found no block reaching r d_k / 2")
                    else:
                        case, target = 2, level + 1
                else:
                    case, target = 0, level
                rec = gen_records.setdefault(k_new, {"generation": k_new, "d": [], "alpha": [],
                                                     "cases": {1: 0, 2: 0}, "level": level,
                                                     "U": []})
                rec["d"].append(d_new)
                rec["alpha"].append(alpha)
                rec["U"].append(U)
                if case in (1, 2):
                    rec["cases"][case] += 1
                new_branches.append(Branch(arc, level, k_new, p, mass, target,
                                           steer_block(residual), U, L_next, d_new, alpha, case,
                                           d_new, alpha, U, L_next, bm))
        # branches already finished stay as they are
        for p, b in enumerate(branch_levels[-1]):
            if not (b.generation < max_generation or b.level < b.target):
                new_branches.append(Branch(b.arc, b.level, b.generation, p, b.mass, b.target,
                                           b.phase, b.U, b.L, b.d, b.alpha, b.case, b.g_d,
                                           b.g_alpha, b.g_U, b.g_L, b.block_max))
        branch_levels.append(new_branches)

    generations = []
    for k in sorted(gen_records):
        rec = gen_records[k]
        generations.append({"generation": k, "level": rec["level"], "max_d": max(rec["d"]),
                            "min_d": min(rec["d"]), "max_alpha": max(rec["alpha"]),
                            "branches": len(rec["d"]), "case1": rec["cases"][1],
                            "case2": rec["cases"][2], "U": max(rec["U"])})
    max_d = [gr["max_d"] for gr in generations]
    later = max_d[1:]
    strict = all(y < x for x, y in zip(later, later[1:]))
    checks["MaxBranchDistanceDecreasing"] = _check(
        strict, min((x - y for x, y in zip(later, later[1:])), default=0.0),
        "lim d_k = 0 (finite trend from generation 2)", values=max_d)
    rises = 0
    worst_run = 0
    for x, y in zip(max_d, max_d[1:]):
        rises = rises + 1 if y >= x else 0
        worst_run = max(worst_run, rises)
    checks["Stall"] = _check(worst_run <= cfg.patience, cfg.patience - worst_run,
                             "d_k nonincreasing within the patience window", longest_rise=worst_run)
    return ConstructionState(families, branch_levels, parent_mass, parent_total, checks,
                             generations, report, r, w, cfg, step_diags, z0)


# ---------------------------------------------------------------- Frostman measure

def _arc_overlap(arc: Arc, a: Fraction, b: Fraction) -> Fraction:
    """m(arc ∩ [a, b]) for an unwrapped interval with b - a <= 1."""
    s = _frac(arc.start)
    e = s + _frac(arc.length)
    out = Fraction(0)
    for k in (-1, 0, 1):
        lo, hi = max(a + k, s), min(b + k, e)
        if hi > lo:
            out += hi - lo
    return out


@dataclass
class FrostmanMeasure:
    """Mass recursion over the sampled tree.

    Level l holds the children of the branches of level l-1; a child's mass
    is its parent's mass spread proportionally to length.  Unexpanded arcs
    keep their mass uniformly, so nu below is the measure at the deepest
    computed level.
    """

    levels: list           # per level: list of (ArcClass, density)
    expanded: list         # per level: list of (Arc, density) replaced by their children
    base_length: Fraction
    covering: Fraction
    checks: dict
    level_mass: list

    def mass(self, a, b) -> Fraction:
        """nu([a, b]) in unwrapped turns, b - a <= 1."""
        a, b = _frac(a), _frac(b)
        af, bf = float(a), float(b)
        total = Fraction(0)
        for classes in self.levels:
            for cls, dens in classes:
                h0, h1 = cls.hull()
                h0f, h1f = float(h0), float(h1)
                if not any(h0f <= bf + k + 1e-9 and af + k - 1e-9 <= h1f for k in (-1, 0, 1)):
                    continue
                total += dens * cls.measure_in(a, b)
        for arcs in self.expanded:
            for arc, dens in arcs:
                total -= dens * _arc_overlap(arc, a, b)
        return total

    def ratio_scan(self, g: GaugeFunction, n_arcs: int = 1000, seed: int = 0,
                   log_len_range=(-12.0, math.log10(0.5))) -> dict:
        """max nu(K)/phi(m(K)) over random arcs K, lengths log-uniform."""
        rng = np.random.default_rng(seed)
        starts = rng.random(n_arcs)
        lengths = 10.0 ** rng.uniform(*log_len_range, size=n_arcs)
        ratios = np.empty(n_arcs)
        for j, (s, ln) in enumerate(zip(starts, lengths)):
            a = Fraction(float(s))
            m = Fraction(float(ln))
            ratios[j] = float(self.mass(a, a + m)) / float(g.phi(float(m)))
        worst = int(np.argmax(ratios))
        bound = 3.0 / (float(self.covering) * float(self.base_length))
        return {"max_ratio": float(ratios[worst]), "argmax_start": float(starts[worst]),
                "argmax_length": float(lengths[worst]), "n_arcs": n_arcs, "seed": seed,
                "content_bound": bound, "finite": bool(np.isfinite(ratios).all()),
                "ratios": ratios}


def frostman_measure(state: ConstructionState) -> FrostmanMeasure:
    """Build the mass recursion on the families of a construction and check it."""
    fams = state.families
    base = _frac(state.branches[0][0].arc.length)
    covering = _frac(state.config.step.covering)
    levels, expanded, level_mass = [], [], []
    conserve_err = Fraction(0)
    growth_ok, growth_margin = True, math.inf
    parent_ok = True
    running = Fraction(0)
    for lvl, fam in enumerate(fams):
        dens = {}
        for cls in fam.classes:
            p = cls.parent
            if p not in dens:
                dens[p] = state.parent_mass[lvl][p] / state.parent_total[lvl][p]
        levels.append([(cls, dens[cls.parent]) for cls in fam.classes])
        parents = state.branches[lvl]
        replaced = [(parents[p].arc, parents[p].mass / _frac(parents[p].arc.length))
                    for p in sorted(dens) if lvl > 0]
        expanded.append(replaced)
        for p, dp in dens.items():
            child_mass = sum(c.total_length for c in fam.classes if c.parent == p) * dp
            if child_mass != state.parent_mass[lvl][p]:
                parent_ok = False
            # nu(I) <= C^-n m(I)/m(J0), in logs since C^-n overflows floats
            lhs = _log(dp)
            rhs = -(lvl + 1) * _log(covering) - _log(base)
            if lhs > rhs + 1e-12:
                growth_ok = False
            growth_margin = min(growth_margin, rhs - lhs)
        # total of nu_n: every class at this level or above, minus the arcs replaced
        running += sum(d * c.total_length for c, d in levels[-1])
        running -= sum(d * _frac(arc.length) for arc, d in replaced)
        level_mass.append(running)
        conserve_err = max(conserve_err, abs(running - 1))
    checks = {
        "MassConservation": _check(conserve_err <= Fraction(1, 10 ** 12) and parent_ok,
                                   1e-12 - float(conserve_err),
                                   "sum over children nu_n(I) = nu_(n-1)(J); total mass 1",
                                   max_error=float(conserve_err)),
        "LimitGrowthCondition": _check(growth_ok, growth_margin,
                                       "nu(I) <= (C^-n / m(J0)) m(I) on every arc of F_n"),
    }
    return FrostmanMeasure(levels, expanded, base, covering, checks, level_mass)


# ---------------------------------------------------------------- box counting

def _validate_scales(scales) -> np.ndarray:
    s = np.asarray(sorted(set(float(x) for x in scales), reverse=True))
    if s.size < 3 or np.any(s <= 0) or np.any(s >= 1):
        raise ValueError("need at least 3 distinct scales in (0, 1)")
    if math.log10(s[0] / s[-1]) < 2 - 1e-12:
        raise ValueError("scales must span at least two decades")
    return s


def _count_points(turns: np.ndarray, s: float) -> int:
    cells = np.floor(np.mod(turns, 1.0) / s).astype(np.int64)
    return int(np.unique(cells).size)


def _count_arcs(arcs, s: float) -> int:
    """Number of grid cells [j s, (j+1) s) met by the union of closed arcs."""
    sf = Fraction(s)
    ranges = []
    for arc in arcs:
        st, en = _frac(arc.start), _frac(arc.start) + _frac(arc.length)
        lo = math.floor(st / sf)
        hi = math.floor(en / sf)
        ranges.append((lo, hi))
    ncell = math.ceil(1 / sf)
    covered = set()
    for lo, hi in ranges:
        if hi - lo + 1 >= ncell:
            return ncell
        for j in range(lo, hi + 1):
            covered.add(j % ncell)
    return len(covered)


def box_dimension_estimate(data, scales) -> dict:
    """Least-squares slope of log N(s) against log(1/s).

    ``data`` is an array of turns (point cloud) or a list of Arc.
    """
    s = _validate_scales(scales)
    if isinstance(data, np.ndarray) or (len(data) and not isinstance(data[0], Arc)):
        pts = np.asarray(data, dtype=float)
        if pts.size == 0:
            raise ValueError("empty point cloud")
        counts = np.array([_count_points(pts, x) for x in s], dtype=float)
    else:
        if not data:
            raise ValueError("empty arc list")
        counts = np.array([_count_arcs(data, x) for x in s], dtype=float)
    x = np.log(1.0 / s)
    y = np.log(counts)
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    r2 = fit.rvalue ** 2 if np.ptp(y) > 0 else 1.0
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r2": float(r2),
            "stderr": float(fit.stderr), "band": (float(fit.slope - 2 * fit.stderr),
                                                  float(fit.slope + 2 * fit.stderr)),
            "scales": s.tolist(), "counts": counts.astype(int).tolist(),
            "residuals": resid.tolist()}


def middle_thirds_arcs(depth: int) -> list:
    """The 2^depth closed arcs of the middle-thirds construction on [0, 1]."""
    arcs = [(Fraction(0), Fraction(1))]
    for _ in range(depth):
        nxt = []
        for a, ln in arcs:
            t = ln / 3
            nxt += [(a, t), (a + 2 * t, t)]
        arcs = nxt
    return [Arc(a, ln) for a, ln in arcs]


def sample_construction_points(state: ConstructionState, count: int, seed: int = 0,
                               level: int = 1) -> np.ndarray:
    """Turns drawn from the level-``level`` measure: class by mass, member uniformly.

    Every arc of a family carries points of the limit set, so at scales well
    above the arc lengths the cells met by the limit set and by the family
    coincide.
    """
    if not 1 <= level <= len(state.families):
        raise ValueError("level outside the computed families")
    fam = state.families[level - 1]
    rng = random.Random(seed)
    weights = [float(state.density(level - 1, c.parent) * c.total_length) for c in fam.classes]
    picks = rng.choices(range(len(fam.classes)), weights=weights, k=count)
    out = np.empty(count)
    for j, ci in enumerate(picks):
        c = fam.classes[ci]
        arc = c.arc(c.member(rng.randrange(c.count)))
        out[j] = float(wrap_turn(_frac(arc.start) + _frac(arc.length) * Fraction(rng.random())))
    return out
